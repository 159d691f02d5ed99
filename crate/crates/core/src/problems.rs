//! Benchmark problems: the convection–diffusion FDM family, file-based problems, a scalar test.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factored::LdlPair;
use crate::linops::{mtx, CsrMatrix, OperatorMode, TimeVaryingOperator};

/// `X' = A(t)ᵀX + XA(t) − XBBᵀX + CᵀC`, `X(t0) = X0`, uniform steps of size `tau`.
#[derive(Clone, Debug)]
pub struct DreProblem {
    pub a: TimeVaryingOperator,
    /// n×m
    pub b: DMatrix<f64>,
    /// q×n
    pub c: DMatrix<f64>,
    pub x0: LdlPair,
    pub t0: f64,
    pub tf: f64,
    pub tau: f64,
}

impl DreProblem {
    pub fn new(
        a: TimeVaryingOperator,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        x0: LdlPair,
        t0: f64,
        tf: f64,
        tau: f64,
    ) -> Result<Self> {
        let p = DreProblem { a, b, c, x0, t0, tf, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.n();
        if self.b.nrows() != n {
            return Err(Error::dim(format!("B has {} rows, A is {n}x{n}", self.b.nrows())));
        }
        if self.c.ncols() != n {
            return Err(Error::dim(format!("C has {} columns, A is {n}x{n}", self.c.ncols())));
        }
        if self.x0.n() != n {
            return Err(Error::dim(format!("X0 has {} rows, A is {n}x{n}", self.x0.n())));
        }
        self.steps()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    /// `Cᵀ` (n×q).
    pub fn ct(&self) -> DMatrix<f64> {
        self.c.transpose()
    }

    pub fn is_autonomous(&self) -> bool {
        self.a.is_autonomous()
    }

    /// Number of uniform steps; `tau` must divide `tf − t0`.
    pub fn steps(&self) -> Result<usize> {
        steps_for(self.t0, self.tf, self.tau)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let mut p = self.clone();
        p.tau = tau;
        p.steps()?;
        Ok(p)
    }

    pub fn with_horizon(&self, tf: f64) -> Result<Self> {
        let mut p = self.clone();
        p.tf = tf;
        p.steps()?;
        Ok(p)
    }

    /// Dense right-hand side `𝓡(t, X)` for oracle use.
    pub fn riccati_dense(&self, t: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let atx = self.a.apply_t(t, x)?;
        let xb = x * &self.b;
        Ok(&atx + atx.transpose() - &xb * xb.transpose() + self.c.tr_mul(&self.c))
    }
}

pub fn steps_for(t0: f64, tf: f64, tau: f64) -> Result<usize> {
    if !(tau > 0.0) || !(tf > t0) {
        return Err(Error::Grid(format!("need tau > 0 and tf > t0, got tau={tau}, [{t0}, {tf}]")));
    }
    let r = (tf - t0) / tau;
    let n = r.round();
    if (r - n).abs() > 1e-9 * r.max(1.0) || n < 1.0 {
        return Err(Error::Grid(format!(
            "tau = {tau} does not divide [{t0}, {tf}] into whole steps"
        )));
    }
    Ok(n as usize)
}

/// Axis-aligned box `(x0, x1) × (y0, y1)` in the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Region {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Region { x, y }
    }

    fn in_unit_square(&self) -> bool {
        let ok = |(a, b): (f64, f64)| 0.0 <= a && a < b && b <= 1.0;
        ok(self.x) && ok(self.y)
    }
}

/// 5-point centered FDM for `Δv − f₁v_ξ₁ − f₂v_ξ₂ − f₃v` on the unit square, Dirichlet boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct FdmSpec {
    pub n0: usize,
    pub f: [f64; 3],
    pub input: Region,
    pub output: Region,
    /// An axis interval containing no grid line is widened to the nearest one.
    pub snap_empty: bool,
}

impl FdmSpec {
    /// The convection–diffusion configuration used in the experiments.
    pub fn benchmark(n0: usize) -> Self {
        FdmSpec {
            n0,
            f: [20.0, 5.0, 0.0],
            input: Region::new((0.0, 0.35), (0.0, 0.35)),
            output: Region::new((0.0, 1.0), (0.95, 1.0)),
            snap_empty: true,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n0 as f64 + 1.0)
    }

    pub fn n(&self) -> usize {
        self.n0 * self.n0
    }
}

/// `A₀`, `B` (n×1) and `C` (1×n) of an FDM spec.
#[derive(Clone, Debug)]
pub struct FdmPieces {
    pub a0: CsrMatrix,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Indices `1..=n0` whose coordinate `i·h` lies strictly inside `(lo, hi)`, widened when empty and allowed.
fn axis_hits(n0: usize, h: f64, (lo, hi): (f64, f64), snap: bool) -> Vec<usize> {
    let hits: Vec<usize> = (1..=n0)
        .filter(|&i| {
            let x = i as f64 * h;
            lo < x && x < hi
        })
        .collect();
    if !hits.is_empty() || !snap {
        return hits;
    }
    let mid = 0.5 * (lo + hi);
    let best = (1..=n0)
        .min_by(|&a, &b| {
            let da = (a as f64 * h - mid).abs();
            let db = (b as f64 * h - mid).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    vec![best]
}

fn indicator(spec: &FdmSpec, r: &Region, what: &str) -> Result<DMatrix<f64>> {
    let h = spec.h();
    let n0 = spec.n0;
    let xs = axis_hits(n0, h, r.x, spec.snap_empty);
    let ys = axis_hits(n0, h, r.y, spec.snap_empty);
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyRegion(format!(
            "{what} box {:?}×{:?} contains no grid points at n0 = {n0}",
            r.x, r.y
        )));
    }
    let mut v = DMatrix::zeros(spec.n(), 1);
    for &j in &ys {
        for &i in &xs {
            v[((j - 1) * n0 + (i - 1), 0)] = 1.0;
        }
    }
    Ok(v)
}

/// Lexicographic ordering, ξ₁ fastest; point `(i, j)` sits at `(i·h, j·h)`.
pub fn fdm_generate(spec: &FdmSpec) -> Result<FdmPieces> {
    let n0 = spec.n0;
    if n0 < 2 {
        return Err(Error::Config(format!("n0 must be at least 2, got {n0}")));
    }
    if !spec.input.in_unit_square() || !spec.output.in_unit_square() {
        return Err(Error::Config("regions must lie inside the unit square".into()));
    }
    let h = spec.h();
    let [f1, f2, f3] = spec.f;
    let idx = |i: usize, j: usize| j * n0 + i;
    let mut t = Vec::with_capacity(5 * spec.n());
    let dif = 1.0 / (h * h);
    for j in 0..n0 {
        for i in 0..n0 {
            let r = idx(i, j);
            t.push((r, r, -4.0 * dif - f3));
            if i + 1 < n0 {
                t.push((r, idx(i + 1, j), dif - f1 / (2.0 * h)));
            }
            if i > 0 {
                t.push((r, idx(i - 1, j), dif + f1 / (2.0 * h)));
            }
            if j + 1 < n0 {
                t.push((r, idx(i, j + 1), dif - f2 / (2.0 * h)));
            }
            if j > 0 {
                t.push((r, idx(i, j - 1), dif + f2 / (2.0 * h)));
            }
        }
    }
    let a0 = CsrMatrix::from_triplets(spec.n(), spec.n(), t)?;
    let b = indicator(spec, &spec.input, "input")?;
    let c = indicator(spec, &spec.output, "output")?.transpose();
    Ok(FdmPieces { a0, b, c })
}

/// Default `μ(t) = 3/4·sin(8πt) + 1`.
pub const LTV_AMPLITUDE: f64 = 0.75;
pub const LTV_FREQUENCY: f64 = 8.0;

/// Replace `A` by `μ(t)·A₀` with `μ(t) = amplitude·sin(frequency·π·t) + 1`.
pub fn make_ltv(problem: &DreProblem, amplitude: f64, frequency: f64) -> Result<DreProblem> {
    let mut p = problem.clone();
    p.a = TimeVaryingOperator::scaled(problem.a.base().clone(), amplitude, frequency)?;
    Ok(p)
}

/// Autonomous FDM problem with `X0 = 0` on `[t0, tf]`.
pub fn fdm_problem(spec: &FdmSpec, t0: f64, tf: f64, tau: f64) -> Result<DreProblem> {
    let p = fdm_generate(spec)?;
    let n = p.a0.nrows();
    DreProblem::new(
        TimeVaryingOperator::constant(p.a0)?,
        p.b,
        p.c,
        LdlPair::zero(n),
        t0,
        tf,
        tau,
    )
}

/// The LTV benchmark: `n0`, `f = (20, 5, 0)`, `[0, 0.5]`, `μ(t) = 3/4·sin(8πt) + 1`.
pub fn ltv_benchmark(n0: usize, tau: f64) -> Result<DreProblem> {
    let p = fdm_problem(&FdmSpec::benchmark(n0), 0.0, 0.5, tau)?;
    make_ltv(&p, LTV_AMPLITUDE, LTV_FREQUENCY)
}

/// `ẋ = 1 − x²`, `x(0) = 0`, exact solution `tanh(t)`.
pub fn scalar_tanh(tf: f64, tau: f64) -> Result<DreProblem> {
    DreProblem::new(
        TimeVaryingOperator::constant(CsrMatrix::zeros(1, 1))?,
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        LdlPair::zero(1),
        0.0,
        tf,
        tau,
    )
}

fn parse_cfg(ctx: &str, text: &str) -> Result<HashMap<String, (usize, String)>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            context: ctx.to_string(),
            line: i + 1,
            msg: format!("expected key = value, got `{line}`"),
        })?;
        out.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    Ok(out)
}

/// Load `A.mtx`, `B.mtx`, `C.mtx`, optional `X0_L.mtx`/`X0_D.mtx`, and `problem.cfg`.
pub fn load_problem(dir: &Path) -> Result<DreProblem> {
    let need = |name: &str| -> Result<std::path::PathBuf> {
        let p = dir.join(name);
        if !p.exists() {
            return Err(Error::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("missing {name}")),
            ));
        }
        Ok(p)
    };
    let a0 = mtx::read_sparse(&need("A.mtx")?)?;
    let b = mtx::read_dense(&need("B.mtx")?)?;
    let c = mtx::read_dense(&need("C.mtx")?)?;
    let cfg_path = need("problem.cfg")?;
    let ctx = cfg_path.display().to_string();
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg = parse_cfg(&ctx, &text)?;
    let num = |key: &str| -> Result<f64> {
        let (line, v) = cfg.get(key).ok_or_else(|| Error::Parse {
            context: ctx.clone(),
            line: 0,
            msg: format!("missing key `{key}`"),
        })?;
        v.parse::<f64>().map_err(|_| Error::Parse {
            context: ctx.clone(),
            line: *line,
            msg: format!("`{key}` is not a number: `{v}`"),
        })
    };
    let (t0, tf, tau) = (num("t0")?, num("tf")?, num("tau")?);
    let a = match cfg.get("mu") {
        None => TimeVaryingOperator::constant(a0)?,
        Some((_, v)) if v == "constant" => TimeVaryingOperator::constant(a0)?,
        Some((line, v)) => {
            let parts: Vec<f64> = v
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    context: ctx.clone(),
                    line: *line,
                    msg: format!("mu must be `constant` or `<amplitude> <frequency>`, got `{v}`"),
                })?;
            if parts.len() != 2 {
                return Err(Error::Parse {
                    context: ctx.clone(),
                    line: *line,
                    msg: "mu needs exactly two numbers".into(),
                });
            }
            TimeVaryingOperator::scaled(a0, parts[0], parts[1])?
        }
    };
    let n = a.n();
    let lpath = dir.join("X0_L.mtx");
    let dpath = dir.join("X0_D.mtx");
    let x0 = match (lpath.exists(), dpath.exists()) {
        (false, false) => LdlPair::zero(n),
        (true, true) => LdlPair::new(mtx::read_dense(&lpath)?, mtx::read_dense(&dpath)?)?,
        (true, false) => return Err(Error::io(&dpath, std::io::Error::new(std::io::ErrorKind::NotFound, "X0_L.mtx given without X0_D.mtx"))),
        (false, true) => return Err(Error::io(&lpath, std::io::Error::new(std::io::ErrorKind::NotFound, "X0_D.mtx given without X0_L.mtx"))),
    };
    DreProblem::new(a, b, c, x0, t0, tf, tau)
}

/// Inverse of [`load_problem`]. The general time-dependent mode cannot be written.
pub fn write_problem(dir: &Path, p: &DreProblem) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    mtx::write_sparse(&dir.join("A.mtx"), p.a.base())?;
    mtx::write_dense(&dir.join("B.mtx"), &p.b)?;
    mtx::write_dense(&dir.join("C.mtx"), &p.c)?;
    if p.x0.k() > 0 {
        mtx::write_dense(&dir.join("X0_L.mtx"), p.x0.l())?;
        mtx::write_dense(&dir.join("X0_D.mtx"), p.x0.d())?;
    }
    let mut cfg = String::new();
    let _ = writeln!(cfg, "t0 = {:?}\ntf = {:?}\ntau = {:?}", p.t0, p.tf, p.tau);
    match p.a.mode() {
        OperatorMode::Constant => cfg.push_str("mu = constant\n"),
        OperatorMode::Scaled {
            amplitude,
            frequency,
        } => {
            let _ = writeln!(cfg, "mu = {amplitude:?} {frequency:?}");
        }
        OperatorMode::General(_) => {
            return Err(Error::Unsupported(
                "problems with a general A(t) provider cannot be written to disk".into(),
            ))
        }
    }
    let path = dir.join("problem.cfg");
    std::fs::write(&path, cfg).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_three_by_three() {
        let spec = FdmSpec {
            n0: 3,
            f: [0.0; 3],
            input: Region::new((0.0, 1.0), (0.0, 1.0)),
            output: Region::new((0.0, 1.0), (0.0, 1.0)),
            snap_empty: false,
        };
        let p = fdm_generate(&spec).unwrap();
        let a = p.a0.to_dense();
        for i in 0..9 {
            assert_eq!(a[(i, i)], -64.0);
        }
        assert_eq!(a[(0, 1)], 16.0);
        assert_eq!(a[(0, 3)], 16.0);
        assert_eq!(a[(2, 3)], 0.0);
        assert_eq!(a.transpose(), a);
    }

    #[test]
    fn reaction_shifts_diagonal() {
        let mut spec = FdmSpec::benchmark(4);
        spec.f = [0.0, 0.0, 0.0];
        let a = fdm_generate(&spec).unwrap().a0.to_dense();
        spec.f[2] = 1.0;
        let b = fdm_generate(&spec).unwrap().a0.to_dense();
        assert_eq!(a - b, DMatrix::identity(16, 16));
    }

    #[test]
    fn benchmark_dimensions() {
        let p = fdm_generate(&FdmSpec::benchmark(9)).unwrap();
        assert_eq!((p.a0.nrows(), p.b.ncols(), p.c.nrows()), (81, 1, 1));
        // output box snaps to the top grid row
        let c = &p.c;
        assert_eq!(c.iter().filter(|&&v| v == 1.0).count(), 9);
        assert!((72..81).all(|i| c[(0, i)] == 1.0));
        // input: ξ ∈ {0.1, 0.2, 0.3} on both axes
        assert_eq!(p.b.iter().filter(|&&v| v == 1.0).count(), 9);
    }

    #[test]
    fn strict_regions_can_be_empty() {
        let mut spec = FdmSpec::benchmark(9);
        spec.snap_empty = false;
        assert!(matches!(fdm_generate(&spec), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn kronecker_structure() {
        for n0 in 2..=6 {
            let mut spec = FdmSpec::benchmark(n0);
            spec.f = [3.0, -2.0, 0.5];
            let a = fdm_generate(&spec).unwrap().a0.to_dense();
            let h = spec.h();
            let tri = |f: f64| {
                DMatrix::from_fn(n0, n0, |i, j| {
                    if i == j {
                        -2.0 / (h * h)
                    } else if j == i + 1 {
                        1.0 / (h * h) - f / (2.0 * h)
                    } else if i == j + 1 {
                        1.0 / (h * h) + f / (2.0 * h)
                    } else {
                        0.0
                    }
                })
            };
            let id = DMatrix::<f64>::identity(n0, n0);
            let k = id.kronecker(&tri(3.0)) + tri(-2.0).kronecker(&id)
                - DMatrix::<f64>::identity(n0 * n0, n0 * n0) * 0.5;
            assert!((a - k).norm() < 1e-9);
        }
    }

    #[test]
    fn stable_spectrum() {
        for n0 in [3, 5, 9] {
            let a = fdm_generate(&FdmSpec::benchmark(n0)).unwrap().a0.to_dense();
            for ev in a.complex_eigenvalues().iter() {
                assert!(ev.re < 0.0);
            }
        }
    }

    #[test]
    fn ltv_factor() {
        let p = ltv_benchmark(3, 0.01).unwrap();
        assert_eq!(p.a.mu(0.0), 1.0);
        assert!((p.a.mu(1.0 / 16.0) - 1.75).abs() < 1e-15);
        assert!((p.a.mu(3.0 / 16.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_must_be_uniform() {
        assert_eq!(steps_for(0.0, 0.5, 1.0 / 1600.0).unwrap(), 800);
        assert!(matches!(steps_for(0.0, 0.5, 0.3), Err(Error::Grid(_))));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ltv_benchmark(4, 0.01).unwrap();
        p.x0 = LdlPair::from_factor(DMatrix::from_element(16, 1, 0.5));
        write_problem(dir.path(), &p).unwrap();
        let q = load_problem(dir.path()).unwrap();
        assert_eq!(q.a.base(), p.a.base());
        assert_eq!(q.b, p.b);
        assert_eq!(q.c, p.c);
        assert_eq!(q.x0, p.x0);
        assert_eq!((q.t0, q.tf, q.tau), (p.t0, p.tf, p.tau));
        assert_eq!(q.a.mu(0.1), p.a.mu(0.1));
    }

    #[test]
    fn missing_and_mismatched_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = fdm_problem(&FdmSpec::benchmark(3), 0.0, 1.0, 0.1).unwrap();
        write_problem(dir.path(), &p).unwrap();
        std::fs::remove_file(dir.path().join("B.mtx")).unwrap();
        let e = load_problem(dir.path()).unwrap_err().to_string();
        assert!(e.contains("B.mtx"), "{e}");

        write_problem(dir.path(), &p).unwrap();
        mtx::write_dense(&dir.path().join("C.mtx"), &DMatrix::zeros(1, 4)).unwrap();
        assert!(matches!(load_problem(dir.path()), Err(Error::Dimension(_))));
    }

    #[test]
    fn riccati_dense_scalar() {
        let p = scalar_tanh(1.0, 0.1).unwrap();
        let r = p.riccati_dense(0.0, &DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((r[(0, 0)] - 0.75).abs() < 1e-15);
    }
}
