//! Implicit peer scheme: one algebraic Riccati equation per stage, solved by Newton–Kleinman.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factored::{swap_core, LdlBuilder, LdlPair};
use crate::integrate::{PeerState, StageReport, StepContext, StepReport};
use crate::linops::CsrMatrix;
use crate::newton::{newton_solve, AreStageProblem};

/// `𝓡(t, X) = T·M·Tᵀ` (plus `CᵀC` folded in when `C` is part of the layout).
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiOpFactors {
    pub t: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl RiccatiOpFactors {
    /// `T = [Cᵀ, AᵀL, L]` with `M = diag(I_q, [[0, D], [D, −DLᵀBBᵀLD]])`, or the
    /// two-block form without `Cᵀ` when `ct` is `None`.
    pub fn from_parts(atl: DMatrix<f64>, x: &LdlPair, b: &DMatrix<f64>, ct: Option<&DMatrix<f64>>) -> Self {
        let k = x.k();
        let q = ct.map_or(0, |c| c.ncols());
        let mut m = DMatrix::zeros(q + 2 * k, q + 2 * k);
        m.view_mut((0, 0), (q, q)).fill_with_identity();
        let h = swap_core(x.d());
        m.view_mut((q, q), (2 * k, 2 * k)).copy_from(&h);
        let dl_b = x.d() * (x.l().transpose() * b);
        let quad = &dl_b * dl_b.transpose();
        m.view_mut((q + k, q + k), (k, k)).copy_from(&(-quad));
        let mut blocks: Vec<&DMatrix<f64>> = Vec::with_capacity(3);
        if let Some(c) = ct {
            blocks.push(c);
        }
        blocks.push(&atl);
        blocks.push(x.l());
        RiccatiOpFactors { t: hcat(x.n(), &blocks), m }
    }

    pub fn width(&self) -> usize {
        self.t.ncols()
    }

    pub fn to_pair(&self) -> LdlPair {
        LdlPair::new(self.t.clone(), self.m.clone()).expect("factor shapes agree")
    }
}

/// Factors of `𝓡(X) = CᵀC + AᵀX + XA − XBBᵀX`; `c = None` gives the layout without `Cᵀ`.
pub fn riccati_op_factors(
    a: &CsrMatrix,
    b: &DMatrix<f64>,
    c: Option<&DMatrix<f64>>,
    x: &LdlPair,
) -> Result<RiccatiOpFactors> {
    let n = x.n();
    if a.nrows() != n || a.ncols() != n || b.nrows() != n || c.map_or(false, |c| c.ncols() != n) {
        return Err(Error::dim("Riccati operator data do not match X"));
    }
    let atl = a.tr_mul_dense(x.l())?;
    let ct = c.map(|c| c.transpose());
    Ok(RiccatiOpFactors::from_parts(atl, x, b, ct.as_ref()))
}

pub(crate) fn hcat(n: usize, blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, k);
    let mut off = 0;
    for b in blocks {
        out.view_mut((0, off), (n, b.ncols())).copy_from(b);
        off += b.ncols();
    }
    out
}

/// Right-hand side `W̃` of stage `i` (0-based), optionally extended by the Newton block `[XB]`
/// with core `τg_ii·I_m`.
///
/// Time-dependent layout: `[Cᵀ | L_{k−1,1..s} | 𝓣_{k−1,1..s} | 𝓣_{k,<i} | XB]`.
/// Constant-`A` layout: the same with all `Cᵀ` blocks merged into the leading one.
pub fn assemble_implicit_rhs(
    ctx: &StepContext<'_>,
    state: &PeerState,
    prev: &[RiccatiOpFactors],
    current: &[RiccatiOpFactors],
    i: usize,
    newton_iterate: Option<&LdlPair>,
) -> Result<LdlPair> {
    let co = ctx.coeffs;
    let s = co.s;
    if prev.len() != s || state.s() != s || current.len() < i {
        return Err(Error::dim("window does not hold s stages"));
    }
    let tau = state.tau;
    let n = ctx.problem.n();
    let q = ctx.problem.q();
    let lead = if ctx.autonomous {
        tau * ((0..s).map(|j| co.a[(i, j)]).sum::<f64>() + (0..=i).map(|j| co.g[(i, j)]).sum::<f64>())
    } else {
        tau * co.g[(i, i)]
    };
    let mut g = LdlBuilder::new(n);
    g.push(ctx.ct.clone(), &DMatrix::identity(q, q), lead)?;
    for j in 0..s {
        g.push_pair(&state.x[j], co.b[(i, j)])?;
    }
    for (j, f) in prev.iter().enumerate() {
        g.push(f.t.clone(), &f.m, tau * co.a[(i, j)])?;
    }
    for (j, f) in current.iter().take(i).enumerate() {
        g.push(f.t.clone(), &f.m, tau * co.g[(i, j)])?;
    }
    if let Some(x) = newton_iterate {
        g.push_scaled_identity(x.mul_right(&ctx.problem.b), tau * co.g[(i, i)])?;
    }
    Ok(g.build())
}

pub fn implicit_peer_step(ctx: &StepContext<'_>, state: &PeerState) -> Result<(PeerState, StepReport)> {
    let co = ctx.coeffs;
    let s = co.s;
    let tau = state.tau;
    let tk = state.t_end();
    let prev = match &state.factors {
        Some(f) if f.len() == s => f.clone(),
        _ => (0..s)
            .map(|j| ctx.riccati_factors(state.stage_time(co, j), &state.x[j]))
            .collect::<Result<Vec<_>>>()?,
    };
    let mut rep = StepReport {
        t_end: tk + tau,
        prev_ranks: state.x.iter().map(LdlPair::k).collect(),
        ..Default::default()
    };
    let mut xs: Vec<LdlPair> = Vec::with_capacity(s);
    let mut fs: Vec<RiccatiOpFactors> = Vec::with_capacity(s);
    for i in 0..s {
        let ti = tk + co.c[i] * tau;
        let w = assemble_implicit_rhs(ctx, state, &prev, &fs, i, None)?;
        let rhs_columns = w.k() + ctx.problem.m();
        let (handle, mu) = ctx.problem.a.eval_scaled(ti)?;
        let gii = co.g[(i, i)];
        let prob = AreStageProblem {
            m: handle,
            a_scale: tau * gii * mu,
            shift: -0.5,
            b: ctx.problem.b.clone(),
            s_weight: tau * gii,
            w: ctx.compress(&w),
            x0: xs.last().unwrap_or_else(|| state.last()).clone(),
        };
        let (x, nrep) = newton_solve(&prob, &ctx.cfg.newton, &ctx.cfg.adi, &ctx.cache)
            .map_err(|e| e.at_stage(i))?;
        let x = ctx.compress(&x);
        if !x.is_finite() {
            return Err(Error::NonFinite("implicit stage solution").at_stage(i));
        }
        rep.stages.push(StageReport {
            stage: i,
            time: ti,
            rhs_columns,
            rank: x.k(),
            aux_rank: None,
            newton_iterations: nrep.iterations,
            adi_iterations: nrep.adi_iterations.iter().sum(),
            residual: nrep.residual,
            converged: nrep.converged,
        });
        log::debug!("stage {i} at t = {ti:.6}: rank {}, newton {}", x.k(), nrep.iterations);
        fs.push(ctx.riccati_factors(ti, &x)?);
        xs.push(x);
    }
    Ok((
        PeerState {
            t_start: tk,
            tau,
            x: xs,
            y: None,
            factors: Some(fs),
        },
        rep,
    ))
}
