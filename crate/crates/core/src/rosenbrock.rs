//! Linearly implicit (Rosenbrock-type) peer schemes: one Lyapunov equation per stage with the
//! Jacobian `J·U = ÂᵀU + UÂ`, `Â = A_k − BBᵀX_k`, frozen over the step.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::factored::{swap_core, LdlBuilder, LdlPair};
use crate::implicit::hcat;
use crate::integrate::{original_from_aux, PeerState, StageReport, StepContext, StepReport};
use crate::linops::ShiftedOperator;
use crate::lyap::{adi_solve, compute_shifts};

/// Per-step data shared by all stages: the stage operator and one shift set.
pub struct RosenbrockStepContext {
    pub t_k: f64,
    pub op: ShiftedOperator,
    pub shifts: Vec<Complex64>,
    /// `X_k·B`.
    pub xkb: DMatrix<f64>,
}

impl RosenbrockStepContext {
    /// `Ã = scale·Â_k + shift·I`; the standard scheme uses `(τγ, −½)`, the auxiliary one `(1, −1/(2τγ))`.
    pub fn new(ctx: &StepContext<'_>, state: &PeerState, scale: f64, shift: f64) -> Result<Self> {
        let t_k = state.t_end();
        let (handle, mu) = ctx.problem.a.eval_scaled(t_k)?;
        let xkb = state.last().mul_right(&ctx.problem.b);
        let op = ShiftedOperator::new(
            handle,
            scale * mu,
            shift,
            &ctx.problem.b * scale,
            xkb.clone(),
            ctx.cache.clone(),
        )?;
        let shifts = compute_shifts(&op, ctx.cfg.adi.shift_count)?;
        Ok(RosenbrockStepContext { t_k, op, shifts, xkb })
    }

    fn solve(&self, ctx: &StepContext<'_>, rhs: &LdlPair, stage: usize) -> Result<(LdlPair, crate::lyap::AdiReport)> {
        let (x, rep) = adi_solve(&self.op, &ctx.compress(rhs), &self.shifts, &ctx.cfg.adi)
            .map_err(|e| e.at_stage(stage))?;
        let x = ctx.compress(&x);
        if !x.is_finite() {
            return Err(Error::NonFinite("Rosenbrock stage solution").at_stage(stage));
        }
        Ok((x, rep))
    }
}

fn gamma(ctx: &StepContext<'_>) -> Result<f64> {
    ctx.coeffs
        .gamma()
        .ok_or_else(|| Error::InvalidCoefficients("g has a non-constant diagonal".into()))
}

/// `[X_kB | K]` with core `H(I_m)`.
fn push_cross(g: &mut LdlBuilder, n: usize, xkb: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<()> {
    let m = xkb.ncols();
    g.push(hcat(n, &[xkb, k]), &swap_core(&DMatrix::identity(m, m)), 1.0)?;
    Ok(())
}

/// `DLᵀBBᵀLD`.
fn quad_core(x: &LdlPair, b: &DMatrix<f64>) -> DMatrix<f64> {
    let q = x.d() * (x.l().transpose() * b);
    &q * q.transpose()
}

/// `[A_kᵀL, L]` with core `H(D)`.
fn linear_block(ctx: &StepContext<'_>, t: f64, x: &LdlPair) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let atl = ctx.problem.a.apply_t(t, x.l())?;
    Ok((hcat(x.n(), &[&atl, x.l()]), swap_core(x.d())))
}

/// Right-hand side of stage `i` of the standard scheme, given the stages `current[..i]` of this step.
///
/// Time-dependent layout `[𝓣_{k,<i} | X_kB | K | Ť_{k,i,<s} | Cᵀ | L_k]`; for constant `A` the
/// `Ť` blocks collapse to `L_{k−1,j}` and all `Cᵀ` blocks merge.
pub fn standard_rhs(
    ctx: &StepContext<'_>,
    state: &PeerState,
    rc: &RosenbrockStepContext,
    current: &[LdlPair],
    i: usize,
) -> Result<LdlPair> {
    let co = ctx.coeffs;
    let s = co.s;
    let tau = state.tau;
    let n = ctx.problem.n();
    let q = ctx.problem.q();
    let b = &ctx.problem.b;
    let xk = state.last();
    let mut g = LdlBuilder::new(n);
    for (j, x) in current.iter().take(i).enumerate() {
        let (t, h) = linear_block(ctx, rc.t_k, x)?;
        g.push(t, &h, tau * co.g[(i, j)])?;
    }
    let mut k = &rc.xkb * (0.5 * co.a[(i, s - 1)]);
    for j in 0..s - 1 {
        k += state.x[j].mul_right(b) * co.a[(i, j)];
    }
    for (j, x) in current.iter().take(i).enumerate() {
        k -= x.mul_right(b) * co.g[(i, j)];
    }
    k *= tau;
    push_cross(&mut g, n, &rc.xkb, &k)?;
    if ctx.autonomous {
        let asum: f64 = (0..s).map(|j| co.a[(i, j)]).sum();
        g.push(ctx.ct.clone(), &DMatrix::identity(q, q), tau * asum)?;
        for j in 0..s - 1 {
            let x = &state.x[j];
            let core = x.d() * co.b[(i, j)] - quad_core(x, b) * (tau * co.a[(i, j)]);
            g.push(x.l().clone(), &core, 1.0)?;
        }
    } else {
        for j in 0..s - 1 {
            let x = &state.x[j];
            let kx = x.k();
            let aij = tau * co.a[(i, j)];
            let al = ctx.problem.a.diff_apply_t(
                state.stage_time(co, j),
                rc.t_k,
                aij,
                0.5 * co.b[(i, j)],
                x.l(),
            )?;
            let mut core = DMatrix::zeros(q + 2 * kx, q + 2 * kx);
            core.view_mut((0, 0), (q, q)).fill_with_identity();
            core.view_mut((0, 0), (q, q)).scale_mut(aij);
            core.view_mut((q, q), (2 * kx, 2 * kx)).copy_from(&swap_core(x.d()));
            let quad = quad_core(x, b) * (-aij);
            core.view_mut((q + kx, q + kx), (kx, kx)).copy_from(&quad);
            g.push(hcat(n, &[&ctx.ct, &al, x.l()]), &core, 1.0)?;
        }
        g.push(ctx.ct.clone(), &DMatrix::identity(q, q), tau * co.a[(i, s - 1)])?;
    }
    g.push_pair(xk, co.b[(i, s - 1)])?;
    Ok(g.build())
}

pub fn standard_step(ctx: &StepContext<'_>, state: &PeerState) -> Result<(PeerState, StepReport)> {
    let co = ctx.coeffs;
    let s = co.s;
    if state.s() != s {
        return Err(Error::dim("window does not hold s stages"));
    }
    let tau = state.tau;
    let gam = gamma(ctx)?;
    let rc = RosenbrockStepContext::new(ctx, state, tau * gam, -0.5)?;
    let mut rep = StepReport {
        t_end: rc.t_k + tau,
        prev_ranks: state.x.iter().map(LdlPair::k).collect(),
        ..Default::default()
    };
    let mut xs = Vec::with_capacity(s);
    for i in 0..s {
        let rhs = standard_rhs(ctx, state, &rc, &xs, i)?;
        let (x, arep) = rc.solve(ctx, &rhs, i)?;
        rep.stages.push(StageReport {
            stage: i,
            time: rc.t_k + co.c[i] * tau,
            rhs_columns: rhs.k(),
            rank: x.k(),
            aux_rank: None,
            newton_iterations: 0,
            adi_iterations: arep.iterations,
            residual: arep.residual,
            converged: arep.converged,
        });
        xs.push(x);
    }
    Ok((
        PeerState {
            t_start: rc.t_k,
            tau,
            x: xs,
            y: None,
            factors: None,
        },
        rep,
    ))
}

/// Right-hand side of stage `i` of the auxiliary-variable scheme for `Y_{k,i}`, given `Y_{k,<i}`.
///
/// Time-dependent layout `[Ť_{k−1,i,1..s} | X_kB | K | 𝓣_{k−1,<s} | Cᵀ | A_kᵀL_k | L_k | L̂_{k,<i}]`;
/// constant-`A` layout `[Cᵀ | X_{k−1,<s}B | X_kB | K | L̂_{k−1,1..s} | L̂_{k,<i}]`.
pub fn modified_rhs(
    ctx: &StepContext<'_>,
    state: &PeerState,
    rc: &RosenbrockStepContext,
    current: &[LdlPair],
    i: usize,
) -> Result<LdlPair> {
    let co = ctx.coeffs;
    let tc = &ctx.transformed;
    let s = co.s;
    let tau = state.tau;
    let n = ctx.problem.n();
    let q = ctx.problem.q();
    let b = &ctx.problem.b;
    let xk = state.last();
    let y = state
        .y
        .as_ref()
        .ok_or_else(|| Error::dim("auxiliary window missing"))?;
    if y.len() != s {
        return Err(Error::dim("auxiliary window does not hold s stages"));
    }
    let mut k = &rc.xkb * (-0.5 * co.a[(i, s - 1)]);
    for j in 0..s {
        k += y[j].mul_right(b) * tc.bold_a[(i, j)];
    }
    let mut g = LdlBuilder::new(n);
    if ctx.autonomous {
        let asum: f64 = (0..s).map(|j| co.a[(i, j)]).sum();
        g.push(ctx.ct.clone(), &DMatrix::identity(q, q), asum)?;
        for j in 0..s - 1 {
            g.push_scaled_identity(state.x[j].mul_right(b), -co.a[(i, j)])?;
        }
        push_cross(&mut g, n, &rc.xkb, &k)?;
        for j in 0..s {
            g.push_pair(&y[j], tc.bold_b[(i, j)] / tau)?;
        }
    } else {
        for j in 0..s {
            let yl = y[j].l();
            let al = ctx.problem.a.apply_t(rc.t_k, yl)? * tc.bold_a[(i, j)] - yl * (tc.bold_b[(i, j)] / (2.0 * tau));
            g.push(hcat(n, &[&al, yl]), &swap_core(y[j].d()), -1.0)?;
        }
        push_cross(&mut g, n, &rc.xkb, &k)?;
        for j in 0..s - 1 {
            let f = ctx.riccati_factors(state.stage_time(co, j), &state.x[j])?;
            g.push(f.t, &f.m, co.a[(i, j)])?;
        }
        g.push(ctx.ct.clone(), &DMatrix::identity(q, q), co.a[(i, s - 1)])?;
        let (t, h) = linear_block(ctx, rc.t_k, xk)?;
        g.push(t, &h, co.a[(i, s - 1)])?;
    }
    for (j, yk) in current.iter().take(i).enumerate() {
        g.push_pair(yk, -tc.g_inv[(i, j)] / tau)?;
    }
    Ok(g.build())
}

pub fn modified_step(ctx: &StepContext<'_>, state: &PeerState) -> Result<(PeerState, StepReport)> {
    let co = ctx.coeffs;
    let s = co.s;
    if state.s() != s {
        return Err(Error::dim("window does not hold s stages"));
    }
    let tau = state.tau;
    let gam = gamma(ctx)?;
    let rc = RosenbrockStepContext::new(ctx, state, 1.0, -1.0 / (2.0 * tau * gam))?;
    let mut rep = StepReport {
        t_end: rc.t_k + tau,
        prev_ranks: state.x.iter().map(LdlPair::k).collect(),
        prev_aux_ranks: state.y.iter().flatten().map(LdlPair::k).collect(),
        ..Default::default()
    };
    let mut ys = Vec::with_capacity(s);
    for i in 0..s {
        let rhs = modified_rhs(ctx, state, &rc, &ys, i)?;
        let (y, arep) = rc.solve(ctx, &rhs, i)?;
        rep.stages.push(StageReport {
            stage: i,
            time: rc.t_k + co.c[i] * tau,
            rhs_columns: rhs.k(),
            rank: 0,
            aux_rank: Some(y.k()),
            newton_iterations: 0,
            adi_iterations: arep.iterations,
            residual: arep.residual,
            converged: arep.converged,
        });
        ys.push(y);
    }
    let xs = original_from_aux(&ys, &ctx.transformed.g_inv, ctx.ctol)?;
    for (st, x) in rep.stages.iter_mut().zip(&xs) {
        st.rank = x.k();
    }
    Ok((
        PeerState {
            t_start: rc.t_k,
            tau,
            x: xs,
            y: Some(ys),
            factors: None,
        },
        rep,
    ))
}
