//! Convergence studies and scheme comparisons against a dense reference, plus CSV output.

use std::fmt::Write as _;
use std::time::Instant;

use crate::coefficients::PeerCoefficients;
use crate::dense::{reference_solution, Reference, ReferenceConfig};
use crate::error::{Error, Result};
use crate::integrate::{solve, Scheme, SolverConfig, StepReport, Trajectory};
use crate::problems::DreProblem;

/// Map `f` over `items`, in parallel when the `parallel` feature is on. Output order follows input order.
#[cfg(feature = "parallel")]
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    seq_map(items, f)
}

pub fn seq_map<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Six significant digits in scientific notation.
pub fn sci(x: f64) -> String {
    format!("{x:.5e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub steps: usize,
    pub rel_err: f64,
    pub wall_time: f64,
    pub max_rank: usize,
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log err` against `log τ` over the three smallest `τ`.
    pub order: Option<f64>,
    pub reference_tau: f64,
    pub richardson_change: f64,
}

/// Least-squares slope through `(log τ, log err)` of the three smallest step sizes.
pub fn fit_order(rows: &[ConvergenceRow]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rel_err > 0.0 && r.rel_err.is_finite())
        .map(|r| (r.tau, r.rel_err))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.truncate(3);
    if pts.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Endpoint reference on `[t0, tf]` for the smallest step in `taus`.
pub fn endpoint_reference(problem: &DreProblem, taus: &[f64], cfg: &ReferenceConfig) -> Result<Reference> {
    let tau_min = taus.iter().copied().fold(f64::INFINITY, f64::min);
    if !tau_min.is_finite() {
        return Err(Error::Config("empty step-size list".into()));
    }
    reference_solution(problem, &[problem.tf], tau_min, cfg)
}

fn endpoint_error(traj: &Trajectory, reference: &Reference) -> Result<f64> {
    let x = traj.endpoint().to_dense_capped(crate::dense::DENSE_STATE_CAP)?;
    let r = reference.values.last().ok_or_else(|| Error::Config("empty reference".into()))?;
    let s = r.norm();
    Ok(if s > 0.0 { (x - r).norm() / s } else { (x - r).norm() })
}

fn timed_run(
    problem: &DreProblem,
    coeffs: &PeerCoefficients,
    scheme: Scheme,
    cfg: &SolverConfig,
) -> Result<(Trajectory, f64)> {
    let start = Instant::now();
    let traj = solve(problem, coeffs, scheme, cfg)?;
    Ok((traj, start.elapsed().as_secs_f64()))
}

/// Run one trajectory per step size (concurrently) and measure endpoint errors.
pub fn convergence_study(
    problem: &DreProblem,
    coeffs: &PeerCoefficients,
    scheme: Scheme,
    taus: &[f64],
    cfg: &SolverConfig,
    reference: &Reference,
) -> Result<ConvergenceStudy> {
    let runs = par_map(taus, |&tau| -> Result<ConvergenceRow> {
        let p = problem.with_tau(tau)?;
        let (traj, wall) = timed_run(&p, coeffs, scheme, cfg)?;
        Ok(ConvergenceRow {
            tau,
            steps: p.steps()?,
            rel_err: endpoint_error(&traj, reference)?,
            wall_time: wall,
            max_rank: traj.max_rank(),
        })
    });
    let rows = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceStudy {
        order: fit_order(&rows),
        rows,
        reference_tau: reference.tau_ref,
        richardson_change: reference.richardson_change,
    })
}

/// One entry of a comparison: a label, coefficients and the scheme to run them with.
#[derive(Clone, Debug)]
pub struct Method {
    pub label: String,
    pub coeffs: PeerCoefficients,
    pub scheme: Scheme,
}

impl Method {
    /// Parse `implicit-<p>`, `ros-peer-<p>` or `mod-ros-peer-<p>` into a builtin method.
    pub fn parse(label: &str) -> Result<Self> {
        let (scheme, rest) = if let Some(r) = label.strip_prefix("mod-ros-peer-") {
            (Scheme::ModRosPeer, r)
        } else if let Some(r) = label.strip_prefix("ros-peer-") {
            (Scheme::RosPeer, r)
        } else if let Some(r) = label.strip_prefix("implicit-") {
            (Scheme::Implicit, r)
        } else {
            return Err(Error::UnknownBuiltin(label.to_string()));
        };
        let set = match scheme {
            Scheme::Implicit => format!("implicit-{rest}"),
            _ => format!("rosenbrock-{rest}"),
        };
        let coeffs = PeerCoefficients::builtin(&set).map_err(|_| Error::UnknownBuiltin(label.to_string()))?;
        Ok(Method {
            label: label.to_string(),
            coeffs,
            scheme,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub time: f64,
    pub rel_err: f64,
}

pub fn compare(
    problem: &DreProblem,
    methods: &[Method],
    cfg: &SolverConfig,
    reference: &Reference,
) -> Result<Vec<CompareRow>> {
    if methods.is_empty() {
        return Err(Error::Config("no methods to compare".into()));
    }
    par_map(methods, |m| {
        let (traj, wall) = timed_run(problem, &m.coeffs, m.scheme, cfg)?;
        Ok(CompareRow {
            method: m.label.clone(),
            time: wall,
            rel_err: endpoint_error(&traj, reference)?,
        })
    })
    .into_iter()
    .collect()
}

pub fn convergence_csv(study: &ConvergenceStudy) -> String {
    let mut out = String::from("tau,steps,rel_frob_err_endpoint,wall_time,max_rank\n");
    for r in &study.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            sci(r.tau),
            r.steps,
            sci(r.rel_err),
            sci(r.wall_time),
            r.max_rank
        );
    }
    out
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("method,time,rel_frob_err\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.method, sci(r.time), sci(r.rel_err));
    }
    out
}

/// One row per stage: `step,time,stage,rank,newton_iters,adi_iters,residual`.
pub fn stage_csv(steps: &[StepReport]) -> String {
    let mut out = String::from("step,time,stage,rank,newton_iters,adi_iters,residual\n");
    for s in steps {
        for st in &s.stages {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.step,
                sci(st.time),
                st.stage + 1,
                st.rank,
                st.newton_iterations,
                st.adi_iterations,
                sci(st.residual)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tau: f64, err: f64) -> ConvergenceRow {
        ConvergenceRow {
            tau,
            steps: 0,
            rel_err: err,
            wall_time: 0.0,
            max_rank: 0,
        }
    }

    #[test]
    fn exact_power_law_slope() {
        let rows: Vec<_> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&t| row(t, 3.0 * t * t))
            .collect();
        assert!((fit_order(&rows).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn slope_uses_finest_three() {
        let rows = vec![row(1.0, 1e6), row(0.1, 0.1), row(0.05, 0.05), row(0.025, 0.025)];
        assert!((fit_order(&rows).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert_eq!(fit_order(&[row(0.1, 0.1)]), None);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sci(0.000123456789), "1.23457e-4");
        assert_eq!(sci(1600.0), "1.60000e3");
    }

    #[test]
    fn method_labels() {
        let m = Method::parse("mod-ros-peer-1").unwrap();
        assert_eq!(m.scheme, Scheme::ModRosPeer);
        assert_eq!(m.coeffs.s, 1);
        assert_eq!(Method::parse("implicit-2").unwrap().coeffs.s, 2);
        assert!(Method::parse("ros-peer-2").is_err());
        assert!(Method::parse("bdf-1").is_err());
    }

    #[test]
    fn par_and_seq_agree() {
        let v: Vec<u64> = (0..100).collect();
        assert_eq!(par_map(&v, |x| x * x), seq_map(&v, |x| x * x));
    }
}
