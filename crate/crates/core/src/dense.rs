//! Dense small-scale versions of every scheme, dense Lyapunov/Riccati solvers and the
//! reference trajectory generator. Used as the oracle for the factored code paths.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, Schur};

use crate::coefficients::PeerCoefficients;
use crate::error::{Error, Result};
use crate::integrate::Scheme;
use crate::problems::DreProblem;

/// Largest `n` accepted by the dense integrators.
pub const DENSE_STATE_CAP: usize = 400;
/// Up to this size [`dense_lyap`] solves the Kronecker system directly.
pub const KRONECKER_MAX: usize = 16;
/// Scheme id written by [`write_reference`] for RK4 reference trajectories.
pub const REFERENCE_SCHEME_ID: u32 = 3;

fn symmetrize(x: &mut DMatrix<f64>) {
    let t = x.transpose();
    *x += t;
    *x *= 0.5;
}

fn check_cap(n: usize) -> Result<()> {
    if n > DENSE_STATE_CAP {
        Err(Error::DenseCap {
            n,
            cap: DENSE_STATE_CAP,
        })
    } else {
        Ok(())
    }
}

/// Solve `ÂᵀX + XÂ = −R`.
pub fn dense_lyap(a: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || r.nrows() != n || r.ncols() != n {
        return Err(Error::dim("dense Lyapunov blocks are not n×n"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if n <= KRONECKER_MAX {
        kron_lyap(a, r)
    } else {
        schur_lyap(a, r)
    }
}

fn kron_lyap(a: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    // vec(ÂᵀX + XÂ) = (I⊗Âᵀ + Âᵀ⊗I) vec(X), column-major vec
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = nalgebra::DVector::from_iterator(n * n, r.iter().map(|v| -v));
    let x = k.lu().solve(&rhs).ok_or(Error::SingularLyapunov)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularLyapunov);
    }
    Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Diagonal block boundaries of a real quasi-triangular Schur factor.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

fn schur_lyap(a: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let (q, t) = Schur::new(a.clone()).unpack();
    let rt = q.transpose() * r * &q;
    let blocks = schur_blocks(&t);
    let mut x = DMatrix::<f64>::zeros(n, n);
    // Tᵀ X + X T = −R̃, block (i, j):
    // T_iiᵀ X_ij + X_ij T_jj = −R̃_ij − Σ_{k<i} T_kiᵀ X_kj − Σ_{k<j} X_ik T_kj
    for &(j0, nj) in &blocks {
        for &(i0, ni) in &blocks {
            let mut rhs = -rt.view((i0, j0), (ni, nj)).clone_owned();
            if i0 > 0 {
                rhs -= t.view((0, i0), (i0, ni)).transpose() * x.view((0, j0), (i0, nj));
            }
            if j0 > 0 {
                rhs -= x.view((i0, 0), (ni, j0)) * t.view((0, j0), (j0, nj));
            }
            let tii = t.view((i0, i0), (ni, ni)).clone_owned();
            let tjj = t.view((j0, j0), (nj, nj)).clone_owned();
            let k = DMatrix::<f64>::identity(nj, nj).kronecker(&tii.transpose())
                + tjj.transpose().kronecker(&DMatrix::<f64>::identity(ni, ni));
            let v = nalgebra::DVector::from_column_slice(rhs.as_slice());
            let sol = k.lu().solve(&v).ok_or(Error::SingularLyapunov)?;
            x.view_mut((i0, j0), (ni, nj))
                .copy_from_slice(sol.as_slice());
        }
    }
    let out = &q * x * q.transpose();
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularLyapunov);
    }
    Ok(out)
}

pub const DENSE_NEWTON_TOL: f64 = 1e-12;
pub const DENSE_NEWTON_MAX: usize = 30;

/// Solve `ÃᵀX + XÃ − XS̃X + W̃ = 0` by Newton–Kleinman from `x0`.
pub fn dense_are(
    at: &DMatrix<f64>,
    st: &DMatrix<f64>,
    wt: &DMatrix<f64>,
    x0: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let res = |x: &DMatrix<f64>| {
        let r = at.transpose() * x + x * at - x * st * x + wt;
        let w = wt.norm();
        if w > 0.0 {
            r.norm() / w
        } else {
            r.norm()
        }
    };
    let mut x = x0.clone();
    let mut r = res(&x);
    let mut it = 0;
    while r > DENSE_NEWTON_TOL && it < DENSE_NEWTON_MAX {
        let k = at - st * &x;
        let mut xn = dense_lyap(&k, &(wt + &x * st * &x))?;
        symmetrize(&mut xn);
        let rn = res(&xn);
        it += 1;
        if !rn.is_finite() {
            return Err(Error::NonFinite("dense Newton"));
        }
        // round-off floor: further steps no longer reduce the residual
        if rn >= r && rn < 1e-10 {
            if rn < r {
                x = xn;
            }
            break;
        }
        x = xn;
        r = rn;
    }
    let r = res(&x);
    if r > 1e-10 {
        return Err(Error::NewtonStalled {
            iterations: it,
            residual: r,
        });
    }
    Ok(x)
}

/// Window of dense stage values at `t_start + c_j·τ`.
#[derive(Clone, Debug)]
pub struct DenseState {
    pub t_start: f64,
    pub tau: f64,
    pub x: Vec<DMatrix<f64>>,
    /// Auxiliary values for the auxiliary-variable scheme.
    pub y: Option<Vec<DMatrix<f64>>>,
}

impl DenseState {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.tau
    }

    pub fn last(&self) -> &DMatrix<f64> {
        self.x.last().expect("non-empty window")
    }

    pub fn with_aux(mut self, g: &DMatrix<f64>) -> Self {
        if self.y.is_none() {
            self.y = Some(combine(&self.x, g));
        }
        self
    }
}

/// `Z_i = Σ_{j≤i} w_ij V_j`.
fn combine(v: &[DMatrix<f64>], w: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    (0..v.len())
        .map(|i| {
            let mut z = DMatrix::zeros(v[0].nrows(), v[0].ncols());
            for j in 0..=i {
                z += &v[j] * w[(i, j)];
            }
            z
        })
        .collect()
}

fn dense_a(problem: &DreProblem, t: f64) -> Result<DMatrix<f64>> {
    Ok(problem.a.eval(t).to_dense())
}

pub fn dense_step(
    scheme: Scheme,
    state: &DenseState,
    coeffs: &PeerCoefficients,
    problem: &DreProblem,
) -> Result<DenseState> {
    check_cap(problem.n())?;
    if state.x.len() != coeffs.s {
        return Err(Error::dim("dense window does not hold s stages"));
    }
    match scheme {
        Scheme::Implicit => implicit_dense(state, coeffs, problem),
        Scheme::RosPeer => standard_dense(state, coeffs, problem),
        Scheme::ModRosPeer => modified_dense(state, coeffs, problem),
    }
}

fn implicit_dense(st: &DenseState, co: &PeerCoefficients, p: &DreProblem) -> Result<DenseState> {
    let s = co.s;
    let tau = st.tau;
    let tk = st.t_end();
    let n = p.n();
    let bbt = &p.b * p.b.transpose();
    let ctc = p.c.tr_mul(&p.c);
    let prev_r = (0..s)
        .map(|j| p.riccati_dense(st.t_start + co.c[j] * tau, &st.x[j]))
        .collect::<Result<Vec<_>>>()?;
    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(s);
    let mut rs: Vec<DMatrix<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let ti = tk + co.c[i] * tau;
        // X_ki − τg_ii 𝓡(t_ki, X_ki) = Σ b X_{k−1} + τ Σ a 𝓡_{k−1} + τ Σ_{j<i} g 𝓡_k
        let mut rhs = DMatrix::zeros(n, n);
        for j in 0..s {
            rhs += &st.x[j] * co.b[(i, j)] + &prev_r[j] * (tau * co.a[(i, j)]);
        }
        for j in 0..i {
            rhs += &rs[j] * (tau * co.g[(i, j)]);
        }
        let tg = tau * co.g[(i, i)];
        let at = dense_a(p, ti)? * tg - DMatrix::identity(n, n) * 0.5;
        let x0 = xs.last().unwrap_or_else(|| st.last());
        let mut x = dense_are(&at, &(&bbt * tg), &(&ctc * tg + rhs), x0).map_err(|e| e.at_stage(i))?;
        symmetrize(&mut x);
        rs.push(p.riccati_dense(ti, &x)?);
        xs.push(x);
    }
    Ok(DenseState {
        t_start: tk,
        tau,
        x: xs,
        y: None,
    })
}

/// `ÂᵀU + UÂ`.
fn jac(ahat: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    ahat.transpose() * u + u * ahat
}

fn ahat(p: &DreProblem, t: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(dense_a(p, t)? - &p.b * (p.b.transpose() * x))
}

fn gamma_of(co: &PeerCoefficients) -> Result<f64> {
    co.gamma()
        .ok_or_else(|| Error::InvalidCoefficients("g has a non-constant diagonal".into()))
}

fn standard_dense(st: &DenseState, co: &PeerCoefficients, p: &DreProblem) -> Result<DenseState> {
    let s = co.s;
    let tau = st.tau;
    let tk = st.t_end();
    let n = p.n();
    let gam = gamma_of(co)?;
    let ah = ahat(p, tk, st.last())?;
    let at = &ah * (tau * gam) - DMatrix::identity(n, n) * 0.5;
    let prev = (0..s)
        .map(|j| Ok(p.riccati_dense(st.t_start + co.c[j] * tau, &st.x[j])? - jac(&ah, &st.x[j])))
        .collect::<Result<Vec<_>>>()?;
    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut w = DMatrix::zeros(n, n);
        for j in 0..s {
            w += &st.x[j] * co.b[(i, j)] + &prev[j] * (tau * co.a[(i, j)]);
        }
        let mut sum = DMatrix::zeros(n, n);
        for j in 0..i {
            sum += &xs[j] * co.g[(i, j)];
        }
        w += jac(&ah, &sum) * tau;
        let mut x = dense_lyap(&at, &w).map_err(|e| e.at_stage(i))?;
        symmetrize(&mut x);
        xs.push(x);
    }
    Ok(DenseState {
        t_start: tk,
        tau,
        x: xs,
        y: None,
    })
}

fn modified_dense(st: &DenseState, co: &PeerCoefficients, p: &DreProblem) -> Result<DenseState> {
    let s = co.s;
    let tau = st.tau;
    let tk = st.t_end();
    let n = p.n();
    let gam = gamma_of(co)?;
    let tc = co.transform()?;
    let y = match &st.y {
        Some(y) => y.clone(),
        None => combine(&st.x, &co.g),
    };
    // originals rebuilt from the auxiliary window
    let xprev = combine(&y, &tc.g_inv);
    let xk = xprev.last().expect("s ≥ 1");
    let ah = ahat(p, tk, xk)?;
    let at = &ah - DMatrix::identity(n, n) * (1.0 / (2.0 * tau * gam));
    let rprev = (0..s)
        .map(|j| p.riccati_dense(st.t_start + co.c[j] * tau, &xprev[j]))
        .collect::<Result<Vec<_>>>()?;
    let mut ys: Vec<DMatrix<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut w = DMatrix::zeros(n, n);
        let mut ay = DMatrix::zeros(n, n);
        for j in 0..s {
            w += &y[j] * (tc.bold_b[(i, j)] / tau) + &rprev[j] * co.a[(i, j)];
            ay += &y[j] * tc.bold_a[(i, j)];
        }
        w -= jac(&ah, &ay);
        for j in 0..i {
            w -= &ys[j] * (tc.g_inv[(i, j)] / tau);
        }
        let mut yi = dense_lyap(&at, &w).map_err(|e| e.at_stage(i))?;
        symmetrize(&mut yi);
        ys.push(yi);
    }
    let mut xs = combine(&ys, &tc.g_inv);
    xs.iter_mut().for_each(symmetrize);
    Ok(DenseState {
        t_start: tk,
        tau,
        x: xs,
        y: Some(ys),
    })
}

/// Dense counterpart of [`crate::integrate::startup`].
pub fn dense_startup(problem: &DreProblem, coeffs: &PeerCoefficients, substeps: usize) -> Result<DenseState> {
    let n = problem.n();
    check_cap(n)?;
    let x0 = problem.x0.to_dense()?;
    let s = coeffs.s;
    let tau = problem.tau;
    if s == 1 {
        return Ok(DenseState {
            t_start: problem.t0 - tau,
            tau,
            x: vec![x0],
            y: None,
        });
    }
    if (0..s).any(|j| coeffs.c[j] < 0.0) {
        return Err(Error::Unsupported("startup for negative nodes".into()));
    }
    let ros1 = PeerCoefficients::builtin("rosenbrock-1")?;
    let h = tau / substeps as f64;
    let one = |x: &DMatrix<f64>, t: f64, dt: f64| -> Result<DMatrix<f64>> {
        let st = DenseState {
            t_start: t - dt,
            tau: dt,
            x: vec![x.clone()],
            y: None,
        };
        Ok(modified_dense(&st, &ros1, problem)?.x.remove(0))
    };
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| coeffs.c[a].total_cmp(&coeffs.c[b]));
    let mut vals: Vec<Option<DMatrix<f64>>> = vec![None; s];
    let mut cur = x0;
    let mut done = 0usize;
    for &j in &order {
        let full = ((coeffs.c[j] * substeps as f64 + 1e-9).floor() as usize).min(substeps);
        while done < full {
            cur = one(&cur, problem.t0 + done as f64 * h, h)?;
            done += 1;
        }
        let rem = (coeffs.c[j] * tau - done as f64 * h).max(0.0);
        vals[j] = Some(if rem > 1e-12 * tau {
            one(&cur, problem.t0 + done as f64 * h, rem)?
        } else {
            cur.clone()
        });
    }
    Ok(DenseState {
        t_start: problem.t0,
        tau,
        x: vals.into_iter().map(|v| v.expect("node visited")).collect(),
        y: None,
    })
}

/// Dense trajectory `(t, X(t))` at every step end, starting with the first window end.
pub fn dense_solve(
    problem: &DreProblem,
    coeffs: &PeerCoefficients,
    scheme: Scheme,
    substeps: usize,
) -> Result<Vec<(f64, DMatrix<f64>)>> {
    let total = problem.steps()?;
    let mut st = dense_startup(problem, coeffs, substeps)?;
    if scheme == Scheme::ModRosPeer {
        st = st.with_aux(&coeffs.g);
    }
    let first = if coeffs.s == 1 { 0 } else { 1 };
    let mut out = Vec::with_capacity(total + 1);
    if first == 1 {
        out.push((st.t_end(), st.last().clone()));
    }
    for _ in first..total {
        st = dense_step(scheme, &st, coeffs, problem)?;
        out.push((st.t_end(), st.last().clone()));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ReferenceConfig {
    /// `τ_ref = tau_min / divisor`.
    pub divisor: usize,
    pub richardson_tol: f64,
    /// Largest `τ·ρ` accepted, `ρ` a Gershgorin bound of the linearized field.
    pub stability_limit: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            divisor: 32,
            richardson_tol: 1e-9,
            stability_limit: 2.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reference {
    pub tau_ref: f64,
    pub richardson_change: f64,
    pub values: Vec<DMatrix<f64>>,
}

fn rk4_run(problem: &DreProblem, h: f64, samples: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    let mut x = problem.x0.to_dense()?;
    let last = samples.iter().copied().max().unwrap_or(0);
    let mut out = vec![DMatrix::zeros(0, 0); samples.len()];
    let put = |k: usize, x: &DMatrix<f64>, out: &mut Vec<DMatrix<f64>>| {
        for (slot, &s) in samples.iter().enumerate() {
            if s == k {
                out[slot] = x.clone();
            }
        }
    };
    put(0, &x, &mut out);
    for k in 0..last {
        let t = problem.t0 + k as f64 * h;
        let k1 = problem.riccati_dense(t, &x)?;
        let k2 = problem.riccati_dense(t + 0.5 * h, &(&x + &k1 * (0.5 * h)))?;
        let k3 = problem.riccati_dense(t + 0.5 * h, &(&x + &k2 * (0.5 * h)))?;
        let k4 = problem.riccati_dense(t + h, &(&x + &k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        symmetrize(&mut x);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("reference integration"));
        }
        put(k + 1, &x, &mut out);
    }
    Ok(out)
}

fn grid_indices(t0: f64, grid: &[f64], h: f64) -> Result<Vec<usize>> {
    grid.iter()
        .map(|&t| {
            let r = (t - t0) / h;
            let k = r.round();
            if k < 0.0 || (r - k).abs() > 1e-6 {
                Err(Error::Grid(format!("grid point {t} is not on the reference step lattice")))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// Classical RK4 trajectory sampled at `grid`, with `τ_ref = tau_min / divisor` (halved further
/// until the linearized field is inside the stability interval) and a Richardson check against
/// a run with `τ_ref / 2`. Returns the finer run.
pub fn reference_solution(
    problem: &DreProblem,
    grid: &[f64],
    tau_min: f64,
    cfg: &ReferenceConfig,
) -> Result<Reference> {
    check_cap(problem.n())?;
    if !(tau_min > 0.0) || cfg.divisor == 0 {
        return Err(Error::Config("reference step must be positive".into()));
    }
    let x0 = problem.x0.to_dense()?;
    let bbt = (&problem.b * problem.b.transpose()).norm();
    let rho = 2.0 * problem.a.norm_bound(problem.t0, problem.tf) + 2.0 * bbt * x0.norm().max(1.0);
    let mut h = tau_min / cfg.divisor as f64;
    while h * rho > cfg.stability_limit {
        h *= 0.5;
    }
    let coarse_idx = grid_indices(problem.t0, grid, h)?;
    let fine_idx: Vec<usize> = coarse_idx.iter().map(|k| 2 * k).collect();
    let coarse = rk4_run(problem, h, &coarse_idx)?;
    let fine = rk4_run(problem, 0.5 * h, &fine_idx)?;
    let (c_end, f_end) = (coarse.last(), fine.last());
    let change = match (c_end, f_end) {
        (Some(c), Some(f)) => {
            let d = (f - c).norm();
            let s = f.norm();
            if s > 0.0 {
                d / s
            } else {
                d
            }
        }
        _ => 0.0,
    };
    if !(change < cfg.richardson_tol) {
        return Err(Error::Richardson {
            change,
            limit: cfg.richardson_tol,
        });
    }
    log::info!("reference: τ_ref = {:.3e}, Richardson change {:.2e}", 0.5 * h, change);
    Ok(Reference {
        tau_ref: 0.5 * h,
        richardson_change: change,
        values: fine,
    })
}

/// Little-endian dump: `n`, grid length and scheme id as `u64`, then each matrix row-major as `f64`.
pub fn write_reference(path: &Path, values: &[DMatrix<f64>], scheme_id: u32) -> Result<()> {
    let n = values.first().map_or(0, |v| v.nrows());
    let mut buf = Vec::with_capacity(24 + values.len() * n * n * 8);
    for h in [n as u64, values.len() as u64, scheme_id as u64] {
        buf.extend_from_slice(&h.to_le_bytes());
    }
    for v in values {
        if v.nrows() != n || v.ncols() != n {
            return Err(Error::dim("reference matrices differ in size"));
        }
        for i in 0..n {
            for j in 0..n {
                buf.extend_from_slice(&v[(i, j)].to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_reference(path: &Path) -> Result<(u32, Vec<DMatrix<f64>>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let word = |i: usize| -> Result<u64> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .ok_or_else(|| Error::Parse {
                context: path.display().to_string(),
                line: 0,
                msg: "truncated reference dump".into(),
            })
    };
    let n = word(0)? as usize;
    let len = word(1)? as usize;
    let id = word(2)? as u32;
    if bytes.len() != 24 + len * n * n * 8 {
        return Err(Error::Parse {
            context: path.display().to_string(),
            line: 0,
            msg: format!("expected {} bytes, found {}", 24 + len * n * n * 8, bytes.len()),
        });
    }
    let vals = (0..len)
        .map(|k| {
            let base = 3 + k * n * n;
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = f64::from_bits(word(base + i * n + j)?);
                }
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((id, vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::scalar_tanh;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn stable(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            a[(i, i)] -= n as f64 + 1.0;
        }
        a
    }

    fn spd(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
        let l = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        &l * l.transpose()
    }

    fn lyap_res(a: &DMatrix<f64>, r: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
        (a.transpose() * x + x * a + r).norm() / r.norm()
    }

    #[test]
    fn minus_identity_halves_rhs() {
        let n = 5;
        let r = DMatrix::from_fn(n, n, |i, j| (i + j) as f64);
        let x = dense_lyap(&(-DMatrix::identity(n, n)), &r).unwrap();
        assert!((x - &r * 0.5).norm() < 1e-14);
    }

    #[test]
    fn scalar_lyap() {
        let x = dense_lyap(&DMatrix::from_element(1, 1, -1.0), &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_stable_lyap_residual() {
        let mut rng = StdRng::seed_from_u64(8);
        for n in [8, 17, 30, 45] {
            let a = stable(n, &mut rng);
            let r = spd(n, &mut rng);
            let x = dense_lyap(&a, &r).unwrap();
            assert!(lyap_res(&a, &r, &x) <= 1e-11, "n = {n}");
        }
    }

    #[test]
    fn schur_path_handles_complex_pairs() {
        let n = 20;
        let mut a = DMatrix::zeros(n, n);
        for k in 0..n / 2 {
            let (i, j) = (2 * k, 2 * k + 1);
            a[(i, i)] = -1.0 - k as f64;
            a[(j, j)] = -1.0 - k as f64;
            a[(i, j)] = 3.0;
            a[(j, i)] = -3.0;
        }
        let mut rng = StdRng::seed_from_u64(2);
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let a = &q * a * q.transpose();
        let r = spd(n, &mut rng);
        let x = dense_lyap(&a, &r).unwrap();
        assert!(lyap_res(&a, &r, &x) <= 1e-11);
        let xk = kron_lyap(&a, &r).unwrap();
        assert!((&x - &xk).norm() <= 1e-10 * xk.norm());
    }

    #[test]
    fn singular_kronecker_reported() {
        let a = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(
            dense_lyap(&a, &DMatrix::identity(3, 3)),
            Err(Error::SingularLyapunov)
        ));
    }

    #[test]
    fn dense_are_scalar_root() {
        // −x² − x + 1 = 0 with Ã = −½: x = (√5 − 1)/2
        let a = DMatrix::from_element(1, 1, -0.5);
        let x = dense_are(&a, &DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 1.0), &DMatrix::zeros(1, 1))
            .unwrap();
        assert!((x[(0, 0)] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn implicit_euler_scalar_tanh() {
        // x − τ(1 − x²) = 0, τ = 0.1: x = (−1 + √(1 + 4τ²))/(2τ)
        let p = scalar_tanh(0.1, 0.1).unwrap();
        let co = PeerCoefficients::builtin("implicit-1").unwrap();
        let st = dense_startup(&p, &co, 10).unwrap();
        let next = dense_step(Scheme::Implicit, &st, &co, &p).unwrap();
        let exact = (-1.0 + (1.0f64 + 0.04).sqrt()) / 0.2;
        assert!((next.last()[(0, 0)] - exact).abs() < 1e-14);
        assert!((exact - 0.0990195).abs() < 1e-7);
    }

    #[test]
    fn linearly_implicit_scalar_first_step() {
        let p = scalar_tanh(0.1, 0.1).unwrap();
        let co = PeerCoefficients::builtin("rosenbrock-1").unwrap();
        for scheme in [Scheme::RosPeer, Scheme::ModRosPeer] {
            let st = dense_startup(&p, &co, 10).unwrap();
            let next = dense_step(scheme, &st, &co, &p).unwrap();
            assert!((next.last()[(0, 0)] - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_field_is_stationary() {
        let mut p = scalar_tanh(0.5, 0.1).unwrap();
        p.c = DMatrix::zeros(1, 1);
        p.b = DMatrix::zeros(1, 1);
        p.x0 = crate::LdlPair::from_factor(DMatrix::from_element(1, 1, 0.7));
        for (name, scheme) in [
            ("implicit-1", Scheme::Implicit),
            ("implicit-2", Scheme::Implicit),
            ("rosenbrock-1", Scheme::RosPeer),
            ("rosenbrock-1", Scheme::ModRosPeer),
        ] {
            let co = PeerCoefficients::builtin(name).unwrap();
            let traj = dense_solve(&p, &co, scheme, 10).unwrap();
            for (_, x) in traj {
                assert!((x[(0, 0)] - 0.49).abs() < 1e-13, "{name}");
            }
        }
    }

    #[test]
    fn reference_tracks_tanh() {
        let p = scalar_tanh(0.5, 0.1).unwrap();
        let grid: Vec<f64> = (1..=5).map(|k| 0.1 * k as f64).collect();
        let r = reference_solution(&p, &grid, 0.1, &ReferenceConfig::default()).unwrap();
        for (t, x) in grid.iter().zip(&r.values) {
            assert!((x[(0, 0)] - t.tanh()).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_constant_solution() {
        // x ≡ 1 is an equilibrium of ẋ = 1 − x²
        let mut p = scalar_tanh(0.5, 0.1).unwrap();
        p.x0 = crate::LdlPair::from_factor(DMatrix::from_element(1, 1, 1.0));
        let grid = [0.0, 0.2, 0.5];
        let r = reference_solution(&p, &grid, 0.1, &ReferenceConfig::default()).unwrap();
        for x in &r.values {
            assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_rejects_off_lattice_grid() {
        let p = scalar_tanh(0.5, 0.1).unwrap();
        assert!(matches!(
            reference_solution(&p, &[0.1234567], 0.1, &ReferenceConfig::default()),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn richardson_failure_reported() {
        let p = scalar_tanh(0.5, 0.1).unwrap();
        let cfg = ReferenceConfig {
            divisor: 1,
            richardson_tol: 1e-16,
            ..Default::default()
        };
        assert!(matches!(
            reference_solution(&p, &[0.5], 0.5, &cfg),
            Err(Error::Richardson { .. })
        ));
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.bin");
        let vals = vec![DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1); 2];
        write_reference(&path, &vals, REFERENCE_SCHEME_ID).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 24 + 2 * 9 * 8);
        let (id, back) = read_reference(&path).unwrap();
        assert_eq!(id, REFERENCE_SCHEME_ID);
        assert_eq!(back, vals);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn lyap_solution_symmetric(seed in any::<u64>(), n in 2usize..24) {
            let mut rng = StdRng::seed_from_u64(seed);
            let a = stable(n, &mut rng);
            let r = spd(n, &mut rng);
            let x = dense_lyap(&a, &r).unwrap();
            prop_assert!((&x - x.transpose()).norm() <= 1e-12 * x.norm().max(1.0));
            prop_assert!(lyap_res(&a, &r, &x) <= 1e-11);
        }
    }
}
