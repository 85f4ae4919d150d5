use super::implicit::{Rosenbrock23, Stencil};
use super::rhs::{FlowOperator, FreeEndFlux};
use super::stepper::{check_underflow, Dopri5, StepInfo};
use super::{pin, BoundarySpec, CurveState};
use crate::dynamics::{condition_number, AffineSystem, Metric};
use crate::error::{Error, Result};

/// Time integrator for the semi-discrete flow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Linearly implicit Rosenbrock (2,3); handles large metric contrast.
    #[default]
    Rosenbrock,
    /// Explicit Dormand–Prince 5(4); step size bounded by stability.
    DormandPrince,
}

enum Stepper {
    Implicit(Box<Rosenbrock23>),
    Explicit(Dopri5),
}

impl Stepper {
    fn new(kind: Integrator, stencil: Stencil, rtol: f64, atol: f64) -> Result<Self> {
        Ok(match kind {
            Integrator::Rosenbrock => Stepper::Implicit(Box::new(Rosenbrock23::new(stencil, rtol, atol)?)),
            Integrator::DormandPrince => Stepper::Explicit(Dopri5::new(stencil.block * stencil.nodes, rtol, atol)),
        })
    }

    fn attempt<F>(&mut self, f: &mut F, y: &mut [f64], h: f64) -> Result<StepInfo>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        match self {
            Stepper::Implicit(s) => s.attempt(f, y, h),
            Stepper::Explicit(s) => s.attempt(f, y, h),
        }
    }

    fn derivative(&self) -> Option<&[f64]> {
        match self {
            Stepper::Implicit(s) => s.derivative(),
            Stepper::Explicit(s) => s.derivative(),
        }
    }

    fn set_derivative(&mut self, dy: &[f64]) {
        match self {
            Stepper::Implicit(s) => s.set_derivative(dy),
            Stepper::Explicit(s) => s.set_derivative(dy),
        }
    }
}

/// Stopping and recording parameters for [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Flow time at which to stop if not yet steady.
    pub s_max: f64,
    /// Steady-state threshold on `‖x_s‖_∞`; `None` picks
    /// `1e-4 · (1 + ‖x_s(s=0)‖_∞)`.
    pub rhs_tol: Option<f64>,
    /// Record the action every this many accepted steps.
    pub action_sample_every: usize,
    /// Flow times at which to keep a copy of the curve.
    pub snapshots: Vec<f64>,
    pub integrator: Integrator,
    pub rtol: f64,
    pub atol: f64,
    /// Abort when a recorded action exceeds its predecessor by more than
    /// `1e-6 · (1 + A(0))`.
    pub enforce_monotone: bool,
    pub max_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            s_max: 1.0,
            rhs_tol: None,
            action_sample_every: 10,
            snapshots: Vec::new(),
            integrator: Integrator::default(),
            rtol: 1e-5,
            atol: 1e-7,
            enforce_monotone: true,
            max_steps: 50_000_000,
        }
    }
}

/// Monotonicity slack for recorded actions.
pub const MONOTONE_RTOL: f64 = 1e-6;

/// Frame health over the final curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDiagnostics {
    /// Largest 2-norm condition number of F̄ over the nodes.
    pub max_condition: f64,
    /// Largest spectral norm of F_c over the nodes.
    pub max_complement_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub curve: CurveState,
    pub converged: bool,
    pub s_final: f64,
    pub rhs_tol: f64,
    /// (s, A) samples.
    pub action_history: Vec<(f64, f64)>,
    /// (s, ‖x_s‖_∞) samples, aligned with `action_history`.
    pub rhs_norm_history: Vec<(f64, f64)>,
    pub snapshots: Vec<CurveState>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub diagnostics: FrameDiagnostics,
    pub free_end_fluxes: Vec<FreeEndFlux>,
}

impl SolveReport {
    pub fn final_action(&self) -> f64 {
        self.action_history.last().map(|a| a.1).unwrap_or(f64::NAN)
    }

    /// Whether recorded actions never increase by more than
    /// `1e-6 · (1 + A(0))`.
    pub fn action_is_monotone(&self) -> bool {
        let a0 = self.action_history.first().map(|a| a.1).unwrap_or(0.0);
        let slack = MONOTONE_RTOL * (1.0 + a0.abs());
        self.action_history.windows(2).all(|w| w[1].1 <= w[0].1 + slack)
    }
}

/// Evolves `curve0` until `‖x_s‖_∞ < rhs_tol` or `s = s_max`.
pub fn solve(
    curve0: &CurveState,
    system: &AffineSystem,
    metric: &Metric,
    bcs: &BoundarySpec,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if !(opts.s_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "s_max must be positive, got {}",
            opts.s_max
        )));
    }
    if curve0.dim() != system.state_dim() {
        return Err(Error::InvalidArgument(format!(
            "curve dimension {} does not match system dimension {}",
            curve0.dim(),
            system.state_dim()
        )));
    }
    let grid = *curve0.grid();
    let mut op = FlowOperator::new(system, metric, bcs, grid)?;
    let mut y = curve0.data().to_vec();
    pin(&mut y, curve0.dim(), grid, bcs);

    let mut f0 = vec![0.0; y.len()];
    op.rhs(&y, &mut f0).map_err(|e| with_s(e, 0.0))?;
    let norm0 = inf_norm(&f0);
    let rhs_tol = opts.rhs_tol.unwrap_or(1e-4 * (1.0 + norm0));

    let stencil = Stencil {
        block: curve0.dim(),
        nodes: grid.nodes(),
        reach: FlowOperator::REACH,
    };
    let mut stepper = Stepper::new(opts.integrator, stencil, opts.rtol, opts.atol)?;
    stepper.set_derivative(&f0);
    let mut h = initial_step(&y, &f0, opts.rtol, opts.atol).min(opts.s_max);

    let a0 = op.action(&y)?;
    let slack = MONOTONE_RTOL * (1.0 + a0.abs());
    let mut action_history = vec![(0.0, a0)];
    let mut rhs_norm_history = vec![(0.0, norm0)];

    let mut targets: Vec<f64> = opts
        .snapshots
        .iter()
        .copied()
        .filter(|&s| s >= 0.0 && s <= opts.s_max)
        .collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let mut snapshots = Vec::new();
    let mut next_target = 0;
    while next_target < targets.len() && targets[next_target] == 0.0 {
        snapshots.push(snapshot(curve0.dim(), grid, &y, 0.0)?);
        next_target += 1;
    }

    let mut s = 0.0;
    let mut converged = norm0 < rhs_tol;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut since_sample = 0usize;

    while !converged && s < opts.s_max {
        if accepted + rejected >= opts.max_steps {
            break;
        }
        let stop = targets
            .get(next_target)
            .copied()
            .unwrap_or(opts.s_max)
            .min(opts.s_max);
        let landing = s + h >= stop - 1e-12 * stop.max(1.0);
        let h_try = if landing { stop - s } else { h };
        let info: StepInfo = stepper
            .attempt(&mut |x: &[f64], out: &mut [f64]| op.rhs(x, out), &mut y, h_try)
            .map_err(|e| with_s(e, s))?;
        if !info.accepted {
            rejected += 1;
            h = info.h_next;
            check_underflow(s, h)?;
            continue;
        }
        accepted += 1;
        since_sample += 1;
        pin(&mut y, curve0.dim(), grid, bcs);
        s = if landing { stop } else { s + h_try };
        if !landing || info.h_next > h {
            h = info.h_next;
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                node: pos / curve0.dim(),
                component: pos % curve0.dim() + 1,
                s,
            });
        }
        let rhs_norm = stepper.derivative().map(inf_norm).unwrap_or(f64::INFINITY);
        converged = rhs_norm < rhs_tol;
        while next_target < targets.len() && targets[next_target] <= s {
            snapshots.push(snapshot(curve0.dim(), grid, &y, s)?);
            next_target += 1;
        }
        if since_sample >= opts.action_sample_every.max(1) || converged || s >= opts.s_max {
            since_sample = 0;
            let a = op.action(&y)?;
            let previous = action_history.last().map(|p| p.1).unwrap_or(a0);
            if opts.enforce_monotone && a > previous + slack {
                return Err(Error::ActionIncreased {
                    s,
                    previous,
                    current: a,
                });
            }
            action_history.push((s, a));
            rhs_norm_history.push((s, rhs_norm));
        }
    }

    let curve = CurveState::from_data(grid, curve0.dim(), y, s)?;
    let diagnostics = frame_diagnostics(system, &curve)?;
    let free_end_fluxes = op.free_end_fluxes(&curve)?;
    Ok(SolveReport {
        curve,
        converged,
        s_final: s,
        rhs_tol,
        action_history,
        rhs_norm_history,
        snapshots,
        steps_accepted: accepted,
        steps_rejected: rejected,
        diagnostics,
        free_end_fluxes,
    })
}

/// Step guess from the scaled norms of `y` and `f(y)`.
fn initial_step(y: &[f64], dy: &[f64], rtol: f64, atol: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (a, b) in y.iter().zip(dy) {
        let sk = atol + rtol * a.abs();
        d0 += (a / sk).powi(2);
        d1 += (b / sk).powi(2);
    }
    let len = y.len().max(1) as f64;
    let (d0, d1) = ((d0 / len).sqrt(), (d1 / len).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

fn snapshot(dim: usize, grid: super::Grid, y: &[f64], s: f64) -> Result<CurveState> {
    CurveState::from_data(grid, dim, y.to_vec(), s)
}

fn with_s(e: Error, s: f64) -> Error {
    match e {
        Error::NonFinite { node, component, .. } => Error::NonFinite { node, component, s },
        other => other,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn frame_diagnostics(system: &AffineSystem, curve: &CurveState) -> Result<FrameDiagnostics> {
    let mut max_condition: f64 = 0.0;
    let mut max_complement_norm: f64 = 0.0;
    let c = system.state_dim() - system.input_dim();
    for i in 0..curve.grid().nodes() {
        let frame = system.frame(curve.node(i))?;
        max_condition = max_condition.max(condition_number(&frame.fbar));
        if c > 0 {
            let norm = frame
                .complement
                .singular_values()
                .iter()
                .copied()
                .fold(0.0, f64::max);
            max_complement_norm = max_complement_norm.max(norm);
        }
    }
    Ok(FrameDiagnostics {
        max_condition,
        max_complement_norm,
    })
}

/// One accepted step of the flow starting from `curve` with trial size
/// `h`. Rejected attempts shrink the step until one is accepted.
pub fn advance(
    op: &mut FlowOperator,
    stepper: &mut Dopri5,
    curve: &CurveState,
    h: f64,
) -> Result<(CurveState, StepInfo)> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut y = curve.data().to_vec();
    let mut h = h;
    stepper.invalidate();
    loop {
        let info = stepper
            .attempt(&mut |x: &[f64], out: &mut [f64]| op.rhs(x, out), &mut y, h)
            .map_err(|e| with_s(e, curve.s))?;
        if info.accepted {
            pin(&mut y, curve.dim(), *curve.grid(), op.bcs());
            let next = CurveState::from_data(*curve.grid(), curve.dim(), y, curve.s + h)?;
            return Ok((next, info));
        }
        h = info.h_next;
        check_underflow(curve.s, h)?;
    }
}
