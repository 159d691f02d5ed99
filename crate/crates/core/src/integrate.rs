//! Shared integrator plumbing: configuration, window state, reports, startup and the time loop.

use nalgebra::DMatrix;

use crate::coefficients::{Kind, PeerCoefficients, TransformedCoefficients};
use crate::error::{Error, Result};
use crate::factored::{column_compress, default_tol, LdlBuilder, LdlPair};
use crate::implicit::{implicit_peer_step, RiccatiOpFactors};
use crate::linops::FactorCache;
use crate::lyap::AdiConfig;
use crate::newton::NewtonConfig;
use crate::problems::DreProblem;
use crate::rosenbrock::{modified_step, standard_step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Implicit,
    RosPeer,
    ModRosPeer,
}

impl Scheme {
    pub fn id(self) -> u32 {
        match self {
            Scheme::Implicit => 0,
            Scheme::RosPeer => 1,
            Scheme::ModRosPeer => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Implicit => "implicit",
            Scheme::RosPeer => "ros-peer",
            Scheme::ModRosPeer => "mod-ros-peer",
        }
    }

    /// Standard form for time-dependent problems, auxiliary form otherwise.
    pub fn default_linearly_implicit(problem: &DreProblem) -> Self {
        if problem.is_autonomous() {
            Scheme::ModRosPeer
        } else {
            Scheme::RosPeer
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub newton: NewtonConfig,
    pub adi: AdiConfig,
    /// Compression tolerance; `None` means `n·ε`.
    pub compress_tol: Option<f64>,
    /// Use the time-dependent factor layouts even for constant `A`.
    pub force_general_layout: bool,
    pub startup_substeps: usize,
    /// Keep `X` at every step end.
    pub keep_values: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton: NewtonConfig::default(),
            adi: AdiConfig::default(),
            compress_tol: None,
            force_general_layout: false,
            startup_substeps: 10,
            keep_values: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.adi.validate()?;
        if !(self.newton.rel_tol > 0.0) || self.newton.max_iter == 0 {
            return Err(Error::Config("Newton tolerance and iteration cap must be positive".into()));
        }
        if self.compress_tol.map_or(false, |t| !(t >= 0.0)) {
            return Err(Error::Config("compression tolerance must be non-negative".into()));
        }
        if self.startup_substeps == 0 {
            return Err(Error::Config("startup needs at least one substep".into()));
        }
        Ok(())
    }
}

/// Stage values `X_{k−1,j}` at `t_start + c_j·τ`, plus what the next step reuses.
#[derive(Clone, Debug)]
pub struct PeerState {
    pub t_start: f64,
    pub tau: f64,
    pub x: Vec<LdlPair>,
    /// Auxiliary values `Y_{k−1,j}` (auxiliary-variable scheme only).
    pub y: Option<Vec<LdlPair>>,
    /// Riccati-operator factors of each stage (implicit scheme only).
    pub factors: Option<Vec<RiccatiOpFactors>>,
}

impl PeerState {
    pub fn s(&self) -> usize {
        self.x.len()
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.tau
    }

    pub fn last(&self) -> &LdlPair {
        self.x.last().expect("non-empty window")
    }

    pub fn stage_time(&self, coeffs: &PeerCoefficients, j: usize) -> f64 {
        self.t_start + coeffs.c[j] * self.tau
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub time: f64,
    /// Column count of the assembled right-hand-side factor (before compression).
    pub rhs_columns: usize,
    pub rank: usize,
    /// Rank of `Y_{k,i}` in the auxiliary-variable scheme.
    pub aux_rank: Option<usize>,
    pub newton_iterations: usize,
    pub adi_iterations: usize,
    /// Relative residual of the stage equation.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t_end: f64,
    pub prev_ranks: Vec<usize>,
    pub prev_aux_ranks: Vec<usize>,
    pub stages: Vec<StageReport>,
}

impl StepReport {
    pub fn stage_solves(&self) -> usize {
        self.stages.len()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub s: usize,
    /// Reports of the one-stage substeps used to fill the first window.
    pub startup: Vec<StepReport>,
    pub steps: Vec<StepReport>,
    /// `(t, X(t))` at each step end when values are kept; otherwise only the endpoint.
    pub values: Vec<(f64, LdlPair)>,
    pub final_state: PeerState,
}

impl Trajectory {
    pub fn endpoint(&self) -> &LdlPair {
        self.final_state.last()
    }

    pub fn max_rank(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| s.stages.iter().map(|st| st.rank))
            .max()
            .unwrap_or(0)
    }
}

/// Everything a step needs besides the window.
pub struct StepContext<'a> {
    pub problem: &'a DreProblem,
    pub coeffs: &'a PeerCoefficients,
    pub transformed: TransformedCoefficients,
    pub cfg: &'a SolverConfig,
    pub cache: FactorCache,
    pub ct: DMatrix<f64>,
    pub autonomous: bool,
    pub ctol: f64,
}

impl<'a> StepContext<'a> {
    pub fn new(
        problem: &'a DreProblem,
        coeffs: &'a PeerCoefficients,
        cfg: &'a SolverConfig,
        cache: FactorCache,
    ) -> Result<Self> {
        coeffs.validate()?;
        cfg.validate()?;
        let n = problem.n();
        Ok(StepContext {
            problem,
            coeffs,
            transformed: coeffs.transform()?,
            cfg,
            cache,
            ct: problem.ct(),
            autonomous: problem.is_autonomous() && !cfg.force_general_layout,
            ctol: cfg.compress_tol.unwrap_or_else(|| default_tol(n)),
        })
    }

    pub fn compress(&self, x: &LdlPair) -> LdlPair {
        column_compress(x, self.ctol)
    }

    /// Riccati factors of `x` at `t` in the layout matching `self.autonomous`.
    pub fn riccati_factors(&self, t: f64, x: &LdlPair) -> Result<RiccatiOpFactors> {
        let atl = self.problem.a.apply_t(t, x.l())?;
        let ct = (!self.autonomous).then_some(&self.ct);
        Ok(RiccatiOpFactors::from_parts(atl, x, &self.problem.b, ct))
    }

    /// Fill whatever the scheme caches alongside the stage values.
    pub fn prepare(&self, scheme: Scheme, mut state: PeerState) -> Result<PeerState> {
        match scheme {
            Scheme::Implicit => {
                let f = (0..state.s())
                    .map(|j| self.riccati_factors(state.stage_time(self.coeffs, j), &state.x[j]))
                    .collect::<Result<Vec<_>>>()?;
                state.factors = Some(f);
            }
            Scheme::ModRosPeer => {
                if state.y.is_none() {
                    state.y = Some(aux_from_original(&state.x, &self.coeffs.g, self.ctol)?);
                }
            }
            Scheme::RosPeer => {}
        }
        Ok(state)
    }

    pub fn step(&self, scheme: Scheme, state: &PeerState, k: usize) -> Result<(PeerState, StepReport)> {
        let (next, mut rep) = match scheme {
            Scheme::Implicit => implicit_peer_step(self, state)?,
            Scheme::RosPeer => standard_step(self, state)?,
            Scheme::ModRosPeer => modified_step(self, state)?,
        };
        rep.step = k;
        Ok((next, rep))
    }
}

/// `Y_i = Σ_{j≤i} g_ij X_j`, compressed.
pub fn aux_from_original(x: &[LdlPair], g: &DMatrix<f64>, tol: f64) -> Result<Vec<LdlPair>> {
    (0..x.len())
        .map(|i| {
            let mut b = LdlBuilder::new(x[0].n());
            for j in 0..=i {
                b.push_pair(&x[j], g[(i, j)])?;
            }
            Ok(column_compress(&b.build(), tol))
        })
        .collect()
}

/// `X_i = Σ_{j≤i} 𝐠_ij Y_j`, compressed.
pub fn original_from_aux(y: &[LdlPair], g_inv: &DMatrix<f64>, tol: f64) -> Result<Vec<LdlPair>> {
    aux_from_original(y, g_inv, tol)
}

fn check_scheme(scheme: Scheme, coeffs: &PeerCoefficients) -> Result<()> {
    if scheme != Scheme::Implicit && coeffs.gamma().is_none() {
        return Err(Error::InvalidCoefficients(
            "linearly implicit schemes need a constant diagonal of g".into(),
        ));
    }
    if scheme == Scheme::Implicit && coeffs.kind == Kind::Rosenbrock {
        log::info!("running a rosenbrock coefficient set through the implicit scheme");
    }
    Ok(())
}

/// First window. For `s = 1` it is `X0` itself; otherwise the one-stage auxiliary-variable
/// Rosenbrock scheme is run over `[t0, t0+τ]` in `substeps` pieces, branching one reduced step to each node.
pub fn startup(
    problem: &DreProblem,
    coeffs: &PeerCoefficients,
    cfg: &SolverConfig,
    cache: &FactorCache,
) -> Result<(PeerState, Vec<StepReport>)> {
    let s = coeffs.s;
    let tau = problem.tau;
    if s == 1 {
        return Ok((
            PeerState {
                t_start: problem.t0 - tau,
                tau,
                x: vec![problem.x0.clone()],
                y: None,
                factors: None,
            },
            Vec::new(),
        ));
    }
    if let Some(j) = (0..s).find(|&j| coeffs.c[j] < 0.0) {
        return Err(Error::Unsupported(format!(
            "startup for negative node c_{} = {}",
            j + 1,
            coeffs.c[j]
        )));
    }
    let ros1 = PeerCoefficients::builtin("rosenbrock-1")?;
    let sub = cfg.startup_substeps;
    let h = tau / sub as f64;
    let mut reports = Vec::new();
    let one_step = |x: &LdlPair, t: f64, dt: f64, reports: &mut Vec<StepReport>| -> Result<LdlPair> {
        let ctx = StepContext::new(problem, &ros1, cfg, cache.clone())?;
        let st = PeerState {
            t_start: t - dt,
            tau: dt,
            x: vec![x.clone()],
            y: Some(vec![x.clone()]),
            factors: None,
        };
        let (next, mut rep) = modified_step(&ctx, &st)?;
        rep.step = reports.len();
        reports.push(rep);
        Ok(next.x[0].clone())
    };
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| coeffs.c[a].total_cmp(&coeffs.c[b]));
    let mut values: Vec<Option<LdlPair>> = vec![None; s];
    let mut cur = problem.x0.clone();
    let mut done = 0usize;
    for &j in &order {
        let cj = coeffs.c[j];
        let target = cj * sub as f64;
        let full = (target + 1e-9).floor() as usize;
        while done < full.min(sub) {
            cur = one_step(&cur, problem.t0 + done as f64 * h, h, &mut reports)?;
            done += 1;
        }
        let rem = (cj * tau - done as f64 * h).max(0.0);
        values[j] = Some(if rem > 1e-12 * tau {
            one_step(&cur, problem.t0 + done as f64 * h, rem, &mut reports)?
        } else {
            cur.clone()
        });
    }
    Ok((
        PeerState {
            t_start: problem.t0,
            tau,
            x: values.into_iter().map(|v| v.expect("every node visited")).collect(),
            y: None,
            factors: None,
        },
        reports,
    ))
}

/// Integrate `problem` over `[t0, tf]`.
pub fn solve(
    problem: &DreProblem,
    coeffs: &PeerCoefficients,
    scheme: Scheme,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve_with(problem, coeffs, scheme, cfg, |_, _| {})
}

/// As [`solve`], calling `observe` after every step.
pub fn solve_with(
    problem: &DreProblem,
    coeffs: &PeerCoefficients,
    scheme: Scheme,
    cfg: &SolverConfig,
    mut observe: impl FnMut(&PeerState, &StepReport),
) -> Result<Trajectory> {
    check_scheme(scheme, coeffs)?;
    let total = problem.steps()?;
    let cache = FactorCache::new();
    let ctx = StepContext::new(problem, coeffs, cfg, cache.clone())?;
    let (state, startup_reports) = startup(problem, coeffs, cfg, &cache)?;
    let mut state = ctx.prepare(scheme, state)?;
    let first = if coeffs.s == 1 { 0 } else { 1 };
    if first > total {
        return Err(Error::Grid("horizon shorter than one step".into()));
    }
    let mut values = Vec::new();
    if cfg.keep_values && first == 1 {
        values.push((state.t_end(), state.last().clone()));
    }
    let mut steps = Vec::with_capacity(total);
    for k in first..total {
        let (next, rep) = ctx.step(scheme, &state, k)?;
        observe(&next, &rep);
        if cfg.keep_values {
            values.push((next.t_end(), next.last().clone()));
        }
        steps.push(rep);
        state = next;
    }
    if !cfg.keep_values {
        values.push((state.t_end(), state.last().clone()));
    }
    Ok(Trajectory {
        scheme,
        s: coeffs.s,
        startup: startup_reports,
        steps,
        values,
        final_state: state,
    })
}
