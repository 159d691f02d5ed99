//! Low-rank LDLᵀ-ADI for `ÂᵀX + XÂ = −G S Gᵀ` and Penzl-type shift selection.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::factored::{column_compress, default_tol, ldl_frob_norm, LdlBuilder, LdlPair};
use crate::linops::ShiftedOperator;

#[derive(Clone, Debug)]
pub struct AdiConfig {
    /// Relative residual target; `None` means `n·ε`.
    pub rel_tol: Option<f64>,
    pub max_iter: usize,
    pub shift_count: usize,
    pub compress_every: usize,
    /// Tolerance for the periodic compressions; `None` means `n·ε`.
    pub compress_tol: Option<f64>,
}

impl Default for AdiConfig {
    fn default() -> Self {
        AdiConfig {
            rel_tol: None,
            max_iter: 100,
            shift_count: 25,
            compress_every: 10,
            compress_tol: None,
        }
    }
}

impl AdiConfig {
    pub fn tol(&self, n: usize) -> f64 {
        self.rel_tol.unwrap_or_else(|| default_tol(n))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol.map_or(true, |t| t > 0.0)) || self.max_iter == 0 || self.shift_count == 0 {
            return Err(Error::Config("ADI tolerance and limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdiReport {
    pub iterations: usize,
    /// Relative residual after each step.
    pub history: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
}

/// `‖W S Wᵀ‖_F` via QR of `W`.
fn lowrank_norm(w: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    if w.ncols() == 0 {
        return 0.0;
    }
    let r = w.clone().qr().r();
    (&r * s * r.transpose()).norm()
}

/// Solve `FX + XFᵀ = −G S Gᵀ` with `F = Âᵀ`, shifts used cyclically.
///
/// Complex shifts are taken together with their conjugates as one real double step,
/// so the returned factors are real.
pub fn adi_solve(
    op: &ShiftedOperator,
    rhs: &LdlPair,
    shifts: &[Complex64],
    cfg: &AdiConfig,
) -> Result<(LdlPair, AdiReport)> {
    let n = op.n();
    if rhs.n() != n {
        return Err(Error::dim(format!("rhs has {} rows for n = {n}", rhs.n())));
    }
    let s = rhs.d().clone();
    let norm0 = ldl_frob_norm(rhs);
    if rhs.k() == 0 || norm0 == 0.0 {
        return Ok((
            LdlPair::zero(n),
            AdiReport {
                converged: true,
                ..Default::default()
            },
        ));
    }
    if shifts.is_empty() {
        return Err(Error::Config("empty shift set".into()));
    }
    let tol = cfg.tol(n);
    let ctol = cfg.compress_tol.unwrap_or_else(|| default_tol(n));
    let mut w = rhs.l().clone();
    let mut acc = LdlBuilder::new(n);
    let mut x = LdlPair::zero(n);
    let mut report = AdiReport::default();
    let mut idx = 0;
    let mut since = 0;
    let mut res = 1.0;
    while report.iterations < cfg.max_iter {
        let p = shifts[idx % shifts.len()];
        idx += 1;
        if p.re >= 0.0 {
            return Err(Error::Config(format!("ADI shift {p} is not in the left half-plane")));
        }
        if p.im == 0.0 {
            let v = op.solve_real(p.re, &w)?;
            w -= &v * (2.0 * p.re);
            acc.push(v, &s, -2.0 * p.re)?;
            report.iterations += 1;
            since += 1;
        } else {
            let v = op.solve(p, &w)?;
            let vr = v.map(|z| z.re);
            let vi = v.map(|z| z.im);
            let delta = p.re / p.im;
            let phi = -4.0 * p.re;
            let first = &vr + &vi * delta;
            let second = &vi * (delta * delta + 1.0).sqrt();
            w += &first * phi;
            acc.push(first, &s, phi)?;
            acc.push(second, &s, phi)?;
            report.iterations += 2;
            since += 2;
            if shifts[idx % shifts.len()] == p.conj() {
                idx += 1;
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ADI iteration"));
        }
        res = lowrank_norm(&w, &s) / norm0;
        report.history.push(res);
        let done = res <= tol;
        if since >= cfg.compress_every || done || report.iterations >= cfg.max_iter {
            let mut b = LdlBuilder::new(n);
            b.push_pair(&x, 1.0)?;
            let fresh = std::mem::replace(&mut acc, LdlBuilder::new(n)).build();
            b.push_pair(&fresh, 1.0)?;
            x = column_compress(&b.build(), ctol);
            since = 0;
        }
        if done {
            report.converged = true;
            break;
        }
    }
    report.residual = res;
    if !x.is_finite() {
        return Err(Error::NonFinite("ADI solution"));
    }
    if !report.converged {
        log::debug!(
            "ADI stopped at the {}-step cap with relative residual {:.3e}",
            cfg.max_iter,
            res
        );
    }
    Ok((x, report))
}

/// Factored `ÂᵀX + XÂ + G S Gᵀ` as an LDLᵀ pair.
pub fn ale_residual_pair(op: &ShiftedOperator, rhs: &LdlPair, x: &LdlPair) -> Result<LdlPair> {
    let n = op.n();
    let mut b = LdlBuilder::new(n);
    if x.k() > 0 {
        let atl = op.apply_t(x.l())?;
        let mut t = DMatrix::zeros(n, 2 * x.k());
        t.view_mut((0, 0), (n, x.k())).copy_from(&atl);
        t.view_mut((0, x.k()), (n, x.k())).copy_from(x.l());
        b.push(t, &crate::factored::swap_core(x.d()), 1.0)?;
    }
    b.push_pair(rhs, 1.0)?;
    Ok(b.build())
}

/// `‖ÂᵀX + XÂ + G S Gᵀ‖_F` in factored form.
pub fn ale_residual(op: &ShiftedOperator, rhs: &LdlPair, x: &LdlPair) -> Result<f64> {
    Ok(ldl_frob_norm(&ale_residual_pair(op, rhs, x)?))
}

/// Ritz values of `apply` on a Krylov space of dimension `k` started at the all-ones vector.
fn arnoldi_ritz(
    n: usize,
    k: usize,
    mut apply: impl FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
) -> Result<Vec<Complex64>> {
    let k = k.min(n);
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut q = DMatrix::zeros(n, k + 1);
    let mut h = DMatrix::zeros(k + 1, k);
    let v0 = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
    q.set_column(0, &v0.column(0));
    let mut m = k;
    for j in 0..k {
        let qj = q.columns(j, 1).into_owned();
        let mut w = apply(&qj)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Arnoldi"));
        }
        let wn0 = w.norm();
        // two passes of classical Gram–Schmidt
        for _ in 0..2 {
            for i in 0..=j {
                let hij = q.column(i).dot(&w.column(0));
                h[(i, j)] += hij;
                let qi = q.column(i).into_owned();
                w.column_mut(0).axpy(-hij, &qi, 1.0);
            }
        }
        let beta = w.norm();
        h[(j + 1, j)] = beta;
        if beta <= 1e-12 * wn0.max(1e-300) {
            m = j + 1;
            break;
        }
        q.set_column(j + 1, &(w.column(0) / beta));
    }
    let hm = h.view((0, 0), (m, m)).into_owned();
    Ok(hm.complex_eigenvalues().iter().copied().collect())
}

fn sp(t: Complex64, set: &[Complex64]) -> f64 {
    set.iter()
        .map(|&p| ((t - p) / (t + p)).norm())
        .product()
}

/// Penzl's min-max heuristic: pick from candidates `r` until `count` shifts are chosen.
fn penzl_select(r: &[Complex64], count: usize) -> Vec<Complex64> {
    let push = |set: &mut Vec<Complex64>, p: Complex64| {
        if p.im.abs() > 0.0 {
            let p = Complex64::new(p.re, p.im.abs());
            set.push(p);
            set.push(p.conj());
        } else {
            set.push(Complex64::new(p.re, 0.0));
        }
    };
    let mut set = Vec::new();
    let first = r
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let fa = r.iter().map(|&t| sp(t, &[a])).fold(0.0, f64::max);
            let fb = r.iter().map(|&t| sp(t, &[b])).fold(0.0, f64::max);
            fa.total_cmp(&fb)
        })
        .unwrap();
    push(&mut set, first);
    while set.len() < count {
        let (worst, val) = r
            .iter()
            .map(|&t| (t, sp(t, &set)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if val == 0.0 || set.iter().any(|&p| (p - worst).norm() == 0.0) {
            break;
        }
        push(&mut set, worst);
    }
    set
}

/// Shifts from Ritz values of `Âᵀ` and `Â⁻ᵀ`, closed under conjugation, all with negative real part.
pub fn compute_shifts(op: &ShiftedOperator, count: usize) -> Result<Vec<Complex64>> {
    let n = op.n();
    let count = count.max(1);
    let kp = (2 * count).min(n);
    let km = count.min(n);
    let candidates = (|| -> Result<Vec<Complex64>> {
        let mut r = arnoldi_ritz(n, kp, |x| op.apply_t(x))?;
        let inv = arnoldi_ritz(n, km, |x| op.solve_real(0.0, x))?;
        r.extend(inv.into_iter().filter(|z| z.norm() > 0.0).map(|z| 1.0 / z));
        Ok(r)
    })();
    let mut cand: Vec<Complex64> = match candidates {
        Ok(r) => r.into_iter().filter(|z| z.re < 0.0 && z.re.is_finite() && z.im.is_finite()).collect(),
        Err(e) => {
            log::debug!("shift Krylov sweep failed ({e}); falling back to a Gershgorin shift");
            Vec::new()
        }
    };
    // merge near-duplicates
    cand.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    cand.dedup_by(|a, b| (*a - *b).norm() <= 1e-12 * b.norm());
    if cand.is_empty() {
        let (lo, hi) = op.gershgorin_interval();
        return Ok(vec![Complex64::new(-(lo * hi).sqrt(), 0.0)]);
    }
    let count = count.min(cand.len().max(1) * 2);
    let mut set = penzl_select(&cand, count);
    for p in set.iter_mut() {
        if p.im.abs() <= 1e-12 * p.norm() {
            p.im = 0.0;
        }
    }
    // keep conjugate partners adjacent
    let mut out = Vec::with_capacity(set.len());
    let mut i = 0;
    while i < set.len() {
        let p = set[i];
        if p.im == 0.0 {
            out.push(p);
            i += 1;
        } else {
            out.push(Complex64::new(p.re, p.im.abs()));
            out.push(Complex64::new(p.re, -p.im.abs()));
            i += if i + 1 < set.len() && (set[i + 1] - p.conj()).norm() <= 1e-12 * p.norm() {
                2
            } else {
                1
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{CsrMatrix, FactorCache, SparseHandle};
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn op_from_dense(a: &DMatrix<f64>) -> ShiftedOperator {
        ShiftedOperator::plain(
            SparseHandle::new(CsrMatrix::from_dense(a)).unwrap(),
            1.0,
            0.0,
            FactorCache::new(),
        )
    }

    fn kron_lyap(a: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let at = a.transpose();
        let id = DMatrix::<f64>::identity(n, n);
        let k = id.kronecker(&at) + at.kronecker(&id);
        let rhs = -DMatrix::from_column_slice(n * n, 1, r.as_slice());
        let x = k.lu().solve(&rhs).unwrap();
        DMatrix::from_column_slice(n, n, x.as_slice())
    }

    fn stable(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -2.0 - rng.gen_range(0.0..3.0)
            } else {
                rng.gen_range(-1.0..1.0) / n as f64
            }
        })
    }

    #[test]
    fn scalar_exact() {
        let op = op_from_dense(&DMatrix::from_element(1, 1, -1.0));
        let rhs = LdlPair::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let shifts = compute_shifts(&op, 25).unwrap();
        assert!(shifts.iter().all(|p| (p.re + 1.0).abs() < 1e-12 && p.im == 0.0));
        let (x, rep) = adi_solve(&op, &rhs, &shifts, &AdiConfig::default()).unwrap();
        assert!((x.to_dense().unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(rep.iterations, 1);
        assert!(ale_residual(&op, &rhs, &x).unwrap() <= 1e-14);
    }

    #[test]
    fn zero_rhs() {
        let op = op_from_dense(&DMatrix::from_element(2, 2, -1.0));
        let (x, rep) = adi_solve(&op, &LdlPair::zero(2), &[Complex64::new(-1.0, 0.0)], &AdiConfig::default()).unwrap();
        assert_eq!(x.k(), 0);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn residual_of_zero_is_rhs_norm() {
        let mut rng = StdRng::seed_from_u64(1);
        let op = op_from_dense(&stable(&mut rng, 5));
        let g = DMatrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let rhs = LdlPair::new(g, DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -2.0])).unwrap();
        let r = ale_residual(&op, &rhs, &LdlPair::zero(5)).unwrap();
        assert!((r - rhs.frob_norm()).abs() < 1e-14 * r);
    }

    #[test]
    fn factored_residual_matches_dense() {
        let mut rng = StdRng::seed_from_u64(2);
        for n in [3, 17, 40] {
            let a = stable(&mut rng, n);
            let op = op_from_dense(&a);
            let g = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
            let rhs = LdlPair::from_factor(g);
            let x = LdlPair::new(
                DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0)),
                DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
            )
            .unwrap();
            let xd = x.to_dense().unwrap();
            let dense = (a.transpose() * &xd + &xd * &a + rhs.to_dense().unwrap()).norm();
            let f = ale_residual(&op, &rhs, &x).unwrap();
            assert!((f - dense).abs() <= 1e-11 * dense);
        }
    }

    #[test]
    fn random_nonsymmetric_matches_kronecker() {
        let mut rng = StdRng::seed_from_u64(3);
        for n in [2, 6, 12] {
            let a = stable(&mut rng, n);
            let op = op_from_dense(&a);
            let rhs = LdlPair::from_factor(DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0)));
            let shifts = compute_shifts(&op, 25).unwrap();
            let (x, rep) = adi_solve(&op, &rhs, &shifts, &AdiConfig::default()).unwrap();
            assert!(rep.converged, "n={n} {:?}", rep);
            let xd = kron_lyap(&a, &rhs.to_dense().unwrap());
            let e = (x.to_dense().unwrap() - &xd).norm() / xd.norm();
            assert!(e < 1e-12, "n={n} err={e}");
            let rel = ale_residual(&op, &rhs, &x).unwrap() / rhs.frob_norm();
            assert!(rel < 1e-12, "n={n} res={rel}");
        }
    }

    #[test]
    fn complex_shifts_stay_real() {
        // rotation-dominated operator with a complex spectrum
        let n = 10;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -1.0
            } else if j == i + 1 {
                3.0
            } else if i == j + 1 {
                -3.0
            } else {
                0.0
            }
        });
        let op = op_from_dense(&a);
        let shifts = compute_shifts(&op, 8).unwrap();
        assert!(shifts.iter().any(|p| p.im != 0.0));
        for (i, p) in shifts.iter().enumerate() {
            assert!(p.re < 0.0);
            if p.im > 0.0 {
                assert_eq!(shifts[i + 1], p.conj());
            }
        }
        let rhs = LdlPair::from_factor(DMatrix::from_fn(n, 1, |i, _| 1.0 + i as f64));
        let (x, rep) = adi_solve(&op, &rhs, &shifts, &AdiConfig::default()).unwrap();
        assert!(rep.converged);
        let xd = kron_lyap(&a, &rhs.to_dense().unwrap());
        assert!((x.to_dense().unwrap() - &xd).norm() <= 1e-11 * xd.norm());
    }

    #[test]
    fn symmetric_shifts_inside_spectrum() {
        let d = [-1.0, -2.0, -5.0, -9.0, -20.0];
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d));
        let op = op_from_dense(&a);
        let shifts = compute_shifts(&op, 2).unwrap();
        assert!(!shifts.is_empty());
        for p in shifts {
            assert_eq!(p.im, 0.0);
            assert!(p.re <= -1.0 + 1e-9 && p.re >= -20.0 - 1e-9, "{p}");
        }
    }

    #[test]
    fn minus_identity_shifts() {
        let op = op_from_dense(&(-DMatrix::<f64>::identity(6, 6)));
        for p in compute_shifts(&op, 4).unwrap() {
            assert!((p - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_conjugate_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        let op = op_from_dense(&a);
        let s = compute_shifts(&op, 2).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0] - Complex64::new(-1.0, 2.0)).norm() < 1e-10);
        assert_eq!(s[1], s[0].conj());
    }

    #[test]
    fn symmetric_residual_history_monotone() {
        let n = 30;
        let a = DMatrix::from_fn(n, n, |i, j| match (i as i64 - j as i64).abs() {
            0 => -2.0,
            1 => 1.0,
            _ => 0.0,
        }) * 10.0;
        let op = op_from_dense(&a);
        let rhs = LdlPair::from_factor(DMatrix::from_fn(n, 1, |i, _| (i as f64).cos()));
        let shifts = compute_shifts(&op, 25).unwrap();
        let (_, rep) = adi_solve(&op, &rhs, &shifts, &AdiConfig::default()).unwrap();
        for w in rep.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cap_is_reported() {
        let n = 30;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { -(1.0 + i as f64 * 100.0) } else { 0.0 });
        let op = op_from_dense(&a);
        let rhs = LdlPair::from_factor(DMatrix::from_element(n, 1, 1.0));
        let cfg = AdiConfig {
            max_iter: 3,
            ..Default::default()
        };
        let (_, rep) = adi_solve(&op, &rhs, &[Complex64::new(-50.0, 0.0)], &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }
}
