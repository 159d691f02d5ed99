//! Newton–Kleinman for the stage equations `ÃᵀX + XÃ − X S̃ X + W̃ = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factored::{column_compress, default_tol, ldl_frob_norm, swap_core, LdlBuilder, LdlPair};
use crate::linops::{FactorCache, ShiftedOperator, SparseHandle};
use crate::lyap::{adi_solve, compute_shifts, AdiConfig};

/// `Ã = a_scale·M + shift·I`, `S̃ = s_weight·BBᵀ`.
#[derive(Clone, Debug)]
pub struct AreStageProblem {
    pub m: SparseHandle,
    pub a_scale: f64,
    pub shift: f64,
    pub b: DMatrix<f64>,
    pub s_weight: f64,
    pub w: LdlPair,
    pub x0: LdlPair,
}

#[derive(Clone, Debug)]
pub struct NewtonConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            rel_tol: 1e-10,
            max_iter: 15,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Relative residual of the initial guess followed by one entry per iteration.
    pub history: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    /// ADI steps per Newton iteration.
    pub adi_iterations: Vec<usize>,
    /// Column count of each Lyapunov right-hand side before compression.
    pub rhs_columns: Vec<usize>,
}

impl AreStageProblem {
    pub fn n(&self) -> usize {
        self.m.n()
    }

    /// Operator `Ã − S̃X` as sparse plus rank-m update.
    pub fn newton_operator(&self, x: &LdlPair, cache: &FactorCache) -> Result<ShiftedOperator> {
        let xb = x.mul_right(&self.b);
        ShiftedOperator::new(
            self.m.clone(),
            self.a_scale,
            self.shift,
            &self.b * self.s_weight,
            xb,
            cache.clone(),
        )
    }

    /// Factored `ÃᵀX + XÃ − X S̃ X + W̃`.
    pub fn residual_pair(&self, x: &LdlPair, cache: &FactorCache) -> Result<LdlPair> {
        let n = self.n();
        let mut g = LdlBuilder::new(n);
        if x.k() > 0 {
            let at = ShiftedOperator::plain(self.m.clone(), self.a_scale, self.shift, cache.clone());
            let atl = at.apply_t(x.l())?;
            let k = x.k();
            let mut t = DMatrix::zeros(n, 2 * k);
            t.view_mut((0, 0), (n, k)).copy_from(&atl);
            t.view_mut((0, k), (n, k)).copy_from(x.l());
            g.push(t, &swap_core(x.d()), 1.0)?;
            g.push_scaled_identity(x.mul_right(&self.b), -self.s_weight)?;
        }
        g.push_pair(&self.w, 1.0)?;
        Ok(g.build())
    }

    /// `‖𝓡̃(X)‖_F / ‖W̃‖_F` (absolute when `W̃ = 0`).
    pub fn relative_residual(&self, x: &LdlPair, cache: &FactorCache) -> Result<f64> {
        let r = ldl_frob_norm(&self.residual_pair(x, cache)?);
        let w = ldl_frob_norm(&self.w);
        Ok(if w > 0.0 { r / w } else { r })
    }
}

pub fn newton_solve(
    prob: &AreStageProblem,
    ncfg: &NewtonConfig,
    acfg: &AdiConfig,
    cache: &FactorCache,
) -> Result<(LdlPair, NewtonReport)> {
    let n = prob.n();
    if prob.b.nrows() != n || prob.w.n() != n || prob.x0.n() != n {
        return Err(Error::dim("stage equation blocks do not share n"));
    }
    let ctol = acfg.compress_tol.unwrap_or_else(|| default_tol(n));
    let mut x = prob.x0.clone();
    let mut rep = NewtonReport::default();
    let mut res = prob.relative_residual(&x, cache)?;
    rep.history.push(res);
    let mut increases = 0;
    while res > ncfg.rel_tol && rep.iterations < ncfg.max_iter {
        let op = prob.newton_operator(&x, cache)?;
        let shifts = compute_shifts(&op, acfg.shift_count)?;
        let mut rhs = LdlBuilder::new(n);
        rhs.push_pair(&prob.w, 1.0)?;
        rhs.push_scaled_identity(op.v().clone(), prob.s_weight)?;
        rep.rhs_columns.push(rhs.width());
        let (xn, arep) = adi_solve(&op, &rhs.build(), &shifts, acfg)?;
        rep.adi_iterations.push(arep.iterations);
        x = column_compress(&xn, ctol);
        rep.iterations += 1;
        let next = prob.relative_residual(&x, cache)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("Newton residual"));
        }
        increases = if next > res { increases + 1 } else { 0 };
        res = next;
        rep.history.push(res);
        if increases >= 3 {
            return Err(Error::NewtonDiverged { residual: res });
        }
    }
    rep.residual = res;
    rep.converged = res <= ncfg.rel_tol;
    if !rep.converged {
        log::warn!(
            "Newton stopped after {} iterations at relative residual {:.3e}",
            rep.iterations,
            res
        );
    }
    Ok((x, rep))
}
