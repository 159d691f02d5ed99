use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use peerdre::coefficients::PeerCoefficients;
use peerdre::dense::ReferenceConfig;
use peerdre::harness::{
    compare, compare_csv, convergence_csv, convergence_study, endpoint_reference, sci, stage_csv, Method,
};
use peerdre::integrate::{solve, Scheme, SolverConfig};
use peerdre::linops::mtx::write_dense;
use peerdre::newton::NewtonConfig;
use peerdre::problems::{fdm_problem, load_problem, ltv_benchmark, scalar_tanh, DreProblem, FdmSpec};

#[derive(Parser, Debug)]
#[command(name = "peer-dre", version, about = "Peer integrators for large differential Riccati equations")]
struct Cli {
    /// Log level (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate once and write per-stage statistics.
    Solve(SolveArgs),
    /// Endpoint errors against a dense reference for a list of step sizes.
    Convergence(ConvergenceArgs),
    /// Time and endpoint error of several methods at one step size.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// `ltv:<n0>`, `fdm:<n0>`, `tanh` or a problem directory.
    #[arg(long, default_value = "ltv:5")]
    problem: String,
    /// End time for built-in problems.
    #[arg(long)]
    tf: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
    #[arg(long, default_value_t = 15)]
    newton_max: usize,
    #[arg(long, default_value_t = 100)]
    adi_max: usize,
    /// ADI relative residual target (default n·ε).
    #[arg(long)]
    adi_tol: Option<f64>,
    /// Column compression tolerance (default n·ε).
    #[arg(long)]
    compress_tol: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// implicit, ros-peer or mod-ros-peer (default: implicit for implicit sets, otherwise by autonomy).
    #[arg(long)]
    scheme: Option<String>,
    /// Builtin coefficient name or file.
    #[arg(long, default_value = "implicit-2")]
    coeffs: String,
    #[arg(long)]
    tau: Option<f64>,
    /// Number of steps; sets the end time to t0 + steps·τ.
    #[arg(long)]
    steps: Option<usize>,
    /// Also write the endpoint factors as `X_L.mtx` and `X_D.mtx`.
    #[arg(long)]
    dump_endpoint: bool,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long, default_value = "implicit-2")]
    coeffs: String,
    /// Step sizes, comma separated or repeated; fractions like 1/400 are accepted.
    #[arg(long, value_delimiter = ',', required = true)]
    tau: Vec<String>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Methods such as implicit-1, ros-peer-1, mod-ros-peer-1, implicit-2 (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    scheme: Vec<String>,
    #[arg(long)]
    tau: String,
    #[arg(long)]
    steps: Option<usize>,
}

/// Failures in reading inputs (exit 2) versus failures while solving (exit 1).
enum Failure {
    Input(anyhow::Error),
    Solve(anyhow::Error),
}

fn input<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Input)
}

fn solving<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Solve(e.into()))
}

fn parse_tau(s: &str) -> anyhow::Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>()? / b.trim().parse::<f64>()?,
        None => s.parse::<f64>()?,
    };
    if !(v > 0.0 && v.is_finite()) {
        bail!("step size must be positive, got `{s}`");
    }
    Ok(v)
}

fn build_problem(c: &Common, tau: f64) -> anyhow::Result<DreProblem> {
    let spec = c.problem.as_str();
    let n0 = |rest: &str| -> anyhow::Result<usize> {
        rest.parse::<usize>()
            .with_context(|| format!("bad grid size in `{spec}`"))
    };
    let p = if let Some(rest) = spec.strip_prefix("ltv:") {
        ltv_benchmark(n0(rest)?, tau)?
    } else if let Some(rest) = spec.strip_prefix("fdm:") {
        fdm_problem(&FdmSpec::benchmark(n0(rest)?), 0.0, 0.5, tau)?
    } else if spec == "tanh" {
        scalar_tanh(1.0, tau)?
    } else {
        let dir = Path::new(spec);
        if !dir.is_dir() {
            bail!("problem `{spec}` is neither a builtin nor a directory");
        }
        load_problem(dir)?.with_tau(tau)?
    };
    Ok(match c.tf {
        Some(tf) => p.with_horizon(tf)?,
        None => p,
    })
}

fn load_coeffs(src: &str) -> anyhow::Result<PeerCoefficients> {
    let path = Path::new(src);
    if path.is_file() {
        Ok(PeerCoefficients::load(path)?)
    } else {
        Ok(PeerCoefficients::builtin(src)?)
    }
}

fn pick_scheme(name: Option<&str>, coeffs: &PeerCoefficients, p: &DreProblem) -> anyhow::Result<Scheme> {
    Ok(match name {
        Some("implicit") => Scheme::Implicit,
        Some("ros-peer") => Scheme::RosPeer,
        Some("mod-ros-peer") => Scheme::ModRosPeer,
        Some(other) => bail!("unknown scheme `{other}` (implicit, ros-peer, mod-ros-peer)"),
        None => match coeffs.kind {
            peerdre::coefficients::Kind::Implicit => Scheme::Implicit,
            peerdre::coefficients::Kind::Rosenbrock => Scheme::default_linearly_implicit(p),
        },
    })
}

fn solver_config(c: &Common) -> anyhow::Result<SolverConfig> {
    let mut cfg = SolverConfig {
        newton: NewtonConfig {
            rel_tol: c.newton_tol,
            max_iter: c.newton_max,
        },
        compress_tol: c.compress_tol,
        ..Default::default()
    };
    cfg.adi.max_iter = c.adi_max;
    cfg.adi.rel_tol = c.adi_tol;
    cfg.adi.compress_tol = c.compress_tol;
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Result<(), Failure> {
    let coeffs = input(load_coeffs(&a.coeffs))?;
    let cfg = input(solver_config(&a.common))?;
    let (problem, scheme) = input((|| {
        let mut p = build_problem(&a.common, a.tau.unwrap_or(0.01))?;
        if let Some(k) = a.steps {
            p = p.with_horizon(p.t0 + k as f64 * p.tau)?;
        }
        p.steps()?;
        let s = pick_scheme(a.scheme.as_deref(), &coeffs, &p)?;
        Ok((p, s))
    })())?;
    let start = Instant::now();
    let traj = solving(solve(&problem, &coeffs, scheme, &cfg))?;
    let wall = start.elapsed().as_secs_f64();
    solving(write_out(&a.common.out, "stages.csv", &stage_csv(&traj.steps)))?;
    if a.dump_endpoint {
        let x = traj.endpoint();
        let dir = &a.common.out;
        solving(write_dense(&dir.join("X_L.mtx"), x.l()))?;
        solving(write_dense(&dir.join("X_D.mtx"), x.d()))?;
    }
    println!(
        "{} with {} ({} steps, τ = {}): endpoint rank {}, max rank {}, {} s",
        scheme.name(),
        a.coeffs,
        traj.steps.len(),
        sci(problem.tau),
        traj.endpoint().k(),
        traj.max_rank(),
        sci(wall)
    );
    Ok(())
}

fn cmd_convergence(a: &ConvergenceArgs) -> Result<(), Failure> {
    let coeffs = input(load_coeffs(&a.coeffs))?;
    let cfg = input(solver_config(&a.common))?;
    let taus = input(a.tau.iter().map(|s| parse_tau(s)).collect::<anyhow::Result<Vec<_>>>())?;
    let (problem, scheme) = input((|| {
        let p = build_problem(&a.common, taus[0])?;
        for &t in &taus {
            p.with_tau(t)?;
        }
        let s = pick_scheme(a.scheme.as_deref(), &coeffs, &p)?;
        Ok((p, s))
    })())?;
    let reference = solving(endpoint_reference(&problem, &taus, &ReferenceConfig::default()))?;
    let study = solving(convergence_study(&problem, &coeffs, scheme, &taus, &cfg, &reference))?;
    solving(write_out(&a.common.out, "convergence.csv", &convergence_csv(&study)))?;
    let order = study.order.map_or_else(|| "n/a".to_string(), |o| format!("{o:.3}"));
    solving(write_out(&a.common.out, "order.txt", &format!("{order}\n")))?;
    println!("observed order ({} with {}): {order}", scheme.name(), a.coeffs);
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> Result<(), Failure> {
    let names: Vec<&String> = a.scheme.iter().filter(|s| !s.trim().is_empty()).collect();
    if names.is_empty() {
        return Err(Failure::Input(anyhow::anyhow!("no methods given")));
    }
    let methods = input(
        names
            .iter()
            .map(|s| Method::parse(s.trim()).map_err(Into::into))
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    let cfg = input(solver_config(&a.common))?;
    let problem = input((|| {
        let mut p = build_problem(&a.common, parse_tau(&a.tau)?)?;
        if let Some(k) = a.steps {
            p = p.with_horizon(p.t0 + k as f64 * p.tau)?;
        }
        p.steps()?;
        Ok(p)
    })())?;
    let reference = solving(endpoint_reference(&problem, &[problem.tau], &ReferenceConfig::default()))?;
    let rows = solving(compare(&problem, &methods, &cfg, &reference))?;
    let csv = compare_csv(&rows);
    solving(write_out(&a.common.out, "compare.csv", &csv))?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .parse_default_env()
        .init();
    let res = match &cli.cmd {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Convergence(a) => cmd_convergence(a),
        Cmd::Compare(a) => cmd_compare(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Solve(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(1)
        }
    }
}
