//! From a relaxed curve to a usable plan: control extraction, open-loop
//! integration, endpoint errors and energy.

use crate::dynamics::{AffineSystem, Metric, NodeFrame};
use crate::error::{Error, Result};
use crate::flow::{
    initial_curve, solve, BoundarySpec, CurveState, End, FlowOperator, Grid, SolveOptions, SolveReport,
};
use crate::ftt::{augment, augmented_bcs, dilate_control, recover_time, TimeMap};

/// Frame coordinates `w = F̄⁻¹(x_t − h) = (v, u)` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedControls {
    grid: Grid,
    /// Node-major, `n − m` per node.
    v: Vec<f64>,
    /// Node-major, `m` per node.
    u: Vec<f64>,
    c: usize,
    m: usize,
}

impl ExtractedControls {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    /// Inadmissible residual at node `i`.
    pub fn v(&self, i: usize) -> &[f64] {
        &self.v[i * self.c..(i + 1) * self.c]
    }

    /// Control at node `i`.
    pub fn u(&self, i: usize) -> &[f64] {
        &self.u[i * self.m..(i + 1) * self.m]
    }

    /// All controls, node-major.
    pub fn controls(&self) -> &[f64] {
        &self.u
    }

    /// `‖v‖_{L²}` by the trapezoid rule.
    pub fn residual_norm(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.grid.nodes() {
            total += self.grid.weight(i) * self.v(i).iter().map(|x| x * x).sum::<f64>();
        }
        total.sqrt()
    }

    /// `∫|u|²` over the curve's own domain by the trapezoid rule.
    pub fn energy(&self) -> f64 {
        (0..self.grid.nodes())
            .map(|i| self.grid.weight(i) * self.u(i).iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

/// Solves `F̄(x_i) w_i = x_t(t_i) − h(x_i)` at every node, with x_t by central
/// differences (second-order one-sided at the ends).
pub fn extract(curve: &CurveState, system: &AffineSystem) -> Result<ExtractedControls> {
    let (n, m) = (system.state_dim(), system.input_dim());
    if curve.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "curve dimension {} does not match system dimension {n}",
            curve.dim()
        )));
    }
    let c = n - m;
    let grid = *curve.grid();
    let mut node = NodeFrame::new(system);
    let mut xt = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut v = Vec::with_capacity(grid.nodes() * c);
    let mut u = Vec::with_capacity(grid.nodes() * m);
    for i in 0..grid.nodes() {
        curve.derivative(i, &mut xt);
        system.eval_node(curve.node(i), false, &mut node).map_err(|e| match e {
            Error::SingularFrame { condition, .. } => Error::SingularFrame {
                node: Some(i),
                condition,
            },
            other => other,
        })?;
        for k in 0..n {
            r[k] = xt[k] - node.h[k];
        }
        node.frame_coordinates(&r, &mut w);
        v.extend_from_slice(&w[..c]);
        u.extend_from_slice(&w[c..]);
    }
    Ok(ExtractedControls { grid, v, u, c, m })
}

/// Piecewise-linear signal on a uniform grid over `[0, span]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    span: f64,
    dim: usize,
    /// Sample-major, `dim` per sample.
    values: Vec<f64>,
}

impl Signal {
    pub fn new(span: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(span > 0.0) || dim == 0 || values.len() < 2 * dim || values.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "signal needs a positive span and at least two samples of dimension {dim}"
            )));
        }
        Ok(Self { span, dim, values })
    }

    /// Constant signal.
    pub fn constant(span: f64, value: &[f64]) -> Result<Self> {
        Self::new(span, value.len(), [value, value].concat())
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Time of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        let last = self.samples() - 1;
        if k == last {
            self.span
        } else {
            self.span * k as f64 / last as f64
        }
    }

    /// Linear interpolation, clamped to the span.
    pub fn at(&self, t: f64, out: &mut [f64]) {
        let intervals = self.samples() - 1;
        let x = (t / self.span * intervals as f64).clamp(0.0, intervals as f64);
        let lo = (x.floor() as usize).min(intervals - 1);
        let r = x - lo as f64;
        let (a, b) = (self.sample(lo), self.sample(lo + 1));
        for k in 0..self.dim {
            out[k] = a[k] + r * (b[k] - a[k]);
        }
    }

    /// `∫|s|²` by the trapezoid rule on the samples.
    pub fn energy(&self) -> f64 {
        let last = self.samples() - 1;
        let dt = self.span / last as f64;
        (0..=last)
            .map(|k| {
                let w = if k == 0 || k == last { 0.5 * dt } else { dt };
                w * self.sample(k).iter().map(|x| x * x).sum::<f64>()
            })
            .sum()
    }
}

/// States of an integrated trajectory on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    dim: usize,
    /// Sample-major.
    states: Vec<f64>,
    /// ẋ at every sample, sample-major.
    rates: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn rate(&self, k: usize) -> &[f64] {
        &self.rates[k * self.dim..(k + 1) * self.dim]
    }

    /// Cubic Hermite interpolation in time, clamped to the span.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let dt = t1 - t0;
        let r = ((t - t0) / dt).clamp(0.0, 1.0);
        let (h00, h10) = ((1.0 + 2.0 * r) * (1.0 - r).powi(2), r * (1.0 - r).powi(2));
        let (h01, h11) = (r * r * (3.0 - 2.0 * r), r * r * (r - 1.0));
        let (xa, xb) = (self.state(k - 1), self.state(k));
        let (va, vb) = (self.rate(k - 1), self.rate(k));
        (0..self.dim)
            .map(|i| h00 * xa[i] + h10 * dt * va[i] + h01 * xb[i] + h11 * dt * vb[i])
            .collect()
    }
}

/// Classical fourth-order Runge–Kutta for `ẋ = f(t, x)` with `steps` equal
/// steps over `[0, span]`.
fn rk4<F>(mut f: F, x0: &[f64], span: f64, steps: usize) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(span > 0.0) || steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "integration needs a positive span and step count, got {span} and {steps}"
        )));
    }
    let n = x0.len();
    let h = span / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut rates = Vec::with_capacity((steps + 1) * n);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    times.push(0.0);
    states.extend_from_slice(&x);
    for step in 0..steps {
        let t = step as f64 * h;
        f(t, &x, &mut k1)?;
        rates.extend_from_slice(&k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                node: step + 1,
                component: k + 1,
                s: t + h,
            });
        }
        times.push(if step + 1 == steps { span } else { (step + 1) as f64 * h });
        states.extend_from_slice(&x);
    }
    f(span, &x, &mut k1)?;
    rates.extend_from_slice(&k1);
    Ok(Trajectory {
        times,
        dim: n,
        states,
        rates,
    })
}

fn affine_rate(system: &AffineSystem, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
    let h = system.drift(x)?;
    let f = system.control_matrix(x)?;
    for i in 0..x.len() {
        out[i] = h[i] + (0..u.len()).map(|j| f[(i, j)] * u[j]).sum::<f64>();
    }
    Ok(())
}

/// Integrates `ẋ = h(x) + F(x)u(t)` over the control's span.
pub fn integrate(system: &AffineSystem, control: &Signal, x0: &[f64], steps: usize) -> Result<Trajectory> {
    if control.dim() != system.input_dim() || x0.len() != system.state_dim() {
        return Err(Error::InvalidArgument(format!(
            "control of dimension {} and state of dimension {} for a system with n = {}, m = {}",
            control.dim(),
            x0.len(),
            system.state_dim(),
            system.input_dim()
        )));
    }
    let mut u = vec![0.0; control.dim()];
    rk4(
        |t, x, out| {
            control.at(t, &mut u);
            affine_rate(system, x, &u, out)
        },
        x0,
        control.span(),
        steps,
    )
}

/// Integrates the dilated dynamics `ẋ = h(x)a² + F(x)a·u` over the unit
/// domain, with `u` and `a` given on it.
pub fn integrate_dilated(
    system: &AffineSystem,
    control: &Signal,
    dilation: &Signal,
    x0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    let mut u = vec![0.0; control.dim()];
    let mut a = [0.0];
    let mut h = vec![0.0; x0.len()];
    let zero = vec![0.0; control.dim()];
    rk4(
        |t, x, out| {
            control.at(t, &mut u);
            dilation.at(t, &mut a);
            affine_rate(system, x, &zero, &mut h)?;
            for v in u.iter_mut() {
                *v *= a[0];
            }
            affine_rate(system, x, &u, out)?;
            for i in 0..out.len() {
                out[i] += (a[0] * a[0] - 1.0) * h[i];
            }
            Ok(())
        },
        x0,
        control.span(),
        steps,
    )
}

/// Distance between the final state and a fixed end condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointError {
    /// Zero-based state index.
    pub component: usize,
    pub error: f64,
}

/// `|x̃_i(T) − x^bc(i, end)|` for every component fixed at the end.
pub fn endpoint_errors(path: &Trajectory, bcs: &BoundarySpec) -> Vec<EndpointError> {
    let last = path.last();
    (0..bcs.dim().min(path.dim()))
        .filter_map(|k| {
            bcs.get(k, End::End).fixed_value().map(|v| EndpointError {
                component: k,
                error: (last[k] - v).abs(),
            })
        })
        .collect()
}

/// Trapezoid energy of uniform samples (`m` per sample) over `[0, span]`.
pub fn energy(samples: &[f64], m: usize, span: f64) -> Result<f64> {
    Ok(Signal::new(span, m, samples.to_vec())?.energy())
}

/// Terminal-time treatment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Fixed { t: f64 },
    Free { t_guess: f64, a_start: f64, a_end: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    pub lambda: f64,
    pub intervals: usize,
    pub horizon: Horizon,
    pub solve: SolveOptions,
    /// RK4 steps for the integrated path; defaults to `10·N`.
    pub integration_steps: Option<usize>,
}

impl PlanOptions {
    pub fn new(lambda: f64, intervals: usize, horizon: Horizon) -> Self {
        Self {
            lambda,
            intervals,
            horizon,
            solve: SolveOptions::default(),
            integration_steps: None,
        }
    }
}

/// Extra outputs of a free-time plan.
#[derive(Debug, Clone)]
pub struct FreeTimeDiagnostics {
    pub time_map: TimeMap,
    /// `∫₀¹|u|²` on the unit domain.
    pub unit_energy: f64,
    /// Dilated dynamics integrated over the unit domain.
    pub dilated_path: Trajectory,
    /// `max_i ‖x̃†(τ̃(t_i)) − x̃(t_i)‖_∞` over the unit grid nodes.
    pub time_scaling_error: f64,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub terminal_time: f64,
    /// Physical-time control.
    pub control: Signal,
    pub path: Trajectory,
    pub endpoint_errors: Vec<EndpointError>,
    pub energy: f64,
    /// `‖v‖_{L²}` on the solve domain.
    pub residual_norm: f64,
    pub extracted: ExtractedControls,
    pub report: SolveReport,
    /// Action of every solver snapshot, in snapshot order.
    pub snapshot_actions: Vec<f64>,
    pub free_time: Option<FreeTimeDiagnostics>,
}

impl PlanResult {
    pub fn max_endpoint_error(&self) -> f64 {
        self.endpoint_errors.iter().map(|e| e.error).fold(0.0, f64::max)
    }
}

fn snapshot_actions(system: &AffineSystem, metric: &Metric, bcs: &BoundarySpec, report: &SolveReport) -> Result<Vec<f64>> {
    let mut op = FlowOperator::new(system, metric, bcs, *report.curve.grid())?;
    report.snapshots.iter().map(|c| op.action(c.data())).collect()
}

/// Initial curve, flow, extraction and integration in one go.
pub fn plan(system: &AffineSystem, bcs: &BoundarySpec, opts: &PlanOptions) -> Result<PlanResult> {
    if bcs.dim() != system.state_dim() {
        return Err(Error::InvalidArgument(format!(
            "boundary spec has {} rows, system dimension is {}",
            bcs.dim(),
            system.state_dim()
        )));
    }
    let steps = opts.integration_steps.unwrap_or(10 * opts.intervals);
    match opts.horizon {
        Horizon::Fixed { t } => {
            let grid = Grid::new(opts.intervals, t)?;
            let curve = initial_curve(bcs, grid)?;
            let system = system.anchored_at(curve.node(0))?;
            let metric = Metric::new(&system, opts.lambda)?;
            let report = solve(&curve, &system, &metric, bcs, &opts.solve)?;
            let snapshot_actions = snapshot_actions(&system, &metric, bcs, &report)?;
            let extracted = extract(&report.curve, &system)?;
            let control = Signal::new(t, system.input_dim(), extracted.controls().to_vec())?;
            let path = integrate(&system, &control, report.curve.node(0), steps)?;
            Ok(PlanResult {
                terminal_time: t,
                endpoint_errors: endpoint_errors(&path, bcs),
                energy: control.energy(),
                residual_norm: extracted.residual_norm(),
                control,
                path,
                extracted,
                report,
                snapshot_actions,
                free_time: None,
            })
        }
        Horizon::Free {
            t_guess,
            a_start,
            a_end,
        } => {
            let (n, m) = (system.state_dim(), system.input_dim());
            let grid = Grid::new(opts.intervals, 1.0)?;
            let abcs = augmented_bcs(bcs, t_guess, a_start, a_end)?;
            let curve = initial_curve(&abcs, grid)?;
            let aug = augment(system).anchored_at(curve.node(0))?;
            let metric = Metric::new(aug.system(), opts.lambda)?;
            let report = solve(&curve, aug.system(), &metric, &abcs, &opts.solve)?;
            let snapshot_actions = snapshot_actions(aug.system(), &metric, &abcs, &report)?;
            let extracted = extract(&report.curve, aug.system())?;
            let map = recover_time(&report.curve)?;
            let t_end = map.terminal_time();

            // Unit-domain u: the first m entries of the admissible block.
            let mp = m + 1;
            let unit_u: Vec<f64> = (0..grid.nodes())
                .flat_map(|i| extracted.controls()[i * mp..i * mp + m].to_vec())
                .collect();
            let samples = 10 * opts.intervals;
            let mut values = Vec::with_capacity((samples + 1) * m);
            for k in 0..=samples {
                let t = if k == samples { t_end } else { t_end * k as f64 / samples as f64 };
                values.extend(dilate_control(&unit_u, m, &map, t)?);
            }
            let control = Signal::new(t_end, m, values)?;
            let base = aug.base();
            let x0 = &report.curve.node(0)[..n];
            let path = integrate(base, &control, x0, steps)?;

            let unit_control = Signal::new(1.0, m, unit_u)?;
            let dilation = Signal::new(1.0, 1, map.dilation().to_vec())?;
            let dilated_path = integrate_dilated(base, &unit_control, &dilation, x0, steps)?;
            let mut time_scaling_error: f64 = 0.0;
            for i in 0..grid.nodes() {
                let s = grid.node(i);
                let phys = path.at(map.tau()[i]);
                let unit = dilated_path.at(s);
                for (p, q) in phys.iter().zip(&unit) {
                    time_scaling_error = time_scaling_error.max((p - q).abs());
                }
            }
            let unit_energy = unit_control.energy();
            Ok(PlanResult {
                terminal_time: t_end,
                endpoint_errors: endpoint_errors(&path, bcs),
                energy: control.energy(),
                residual_norm: extracted.residual_norm(),
                control,
                path,
                extracted,
                report,
                snapshot_actions,
                free_time: Some(FreeTimeDiagnostics {
                    time_map: map,
                    unit_energy,
                    dilated_path,
                    time_scaling_error,
                }),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_integrator_line_has_unit_control() {
        let sys = AffineSystem::builtin("single_integrator").unwrap();
        let grid = Grid::new(10, 1.0).unwrap();
        let curve = CurveState::from_fn(grid, 1, |t| vec![t]);
        let ex = extract(&curve, &sys).unwrap();
        for i in 0..grid.nodes() {
            assert!((ex.u(i)[0] - 1.0).abs() < 1e-12);
        }
        assert_eq!(ex.residual_norm(), 0.0);
    }

    #[test]
    fn drift_following_curve_needs_no_control() {
        let sys = AffineSystem::builtin("unicycle").unwrap();
        let grid = Grid::new(20, 1.0).unwrap();
        let curve = CurveState::from_fn(grid, 3, |t| vec![t, 0.0, 0.0]);
        let ex = extract(&curve, &sys).unwrap();
        for i in 0..grid.nodes() {
            assert!(ex.u(i)[0].abs() < 1e-12);
            assert!(ex.v(i).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn reconstruction_reproduces_the_difference_quotient() {
        let sys = AffineSystem::builtin("unicycle").unwrap();
        let grid = Grid::new(16, 2.0).unwrap();
        let curve = CurveState::from_fn(grid, 3, |t| vec![t.sin(), t * t, 0.3 * t]);
        let ex = extract(&curve, &sys).unwrap();
        let mut xt = [0.0; 3];
        for i in 0..grid.nodes() {
            let x = curve.node(i);
            let frame = sys.frame(x).unwrap();
            let h = sys.drift(x).unwrap();
            curve.derivative(i, &mut xt);
            let w = nalgebra::DVector::from_iterator(3, ex.v(i).iter().chain(ex.u(i)).copied());
            let rebuilt = &frame.fbar * w;
            for k in 0..3 {
                assert!((rebuilt[k] + h[k] - xt[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn integrator_basics() {
        let si = AffineSystem::builtin("single_integrator").unwrap();
        let path = integrate(&si, &Signal::constant(1.0, &[1.0]).unwrap(), &[0.0], 10).unwrap();
        assert!((path.last()[0] - 1.0).abs() < 1e-15);

        let uni = AffineSystem::builtin("unicycle").unwrap();
        let path = integrate(&uni, &Signal::constant(1.0, &[0.0]).unwrap(), &[0.0; 3], 10).unwrap();
        assert!((path.last()[0] - 1.0).abs() < 1e-15);
        assert_eq!(path.last()[1], 0.0);
    }

    #[test]
    fn constant_turn_traces_a_circle() {
        let uni = AffineSystem::builtin("unicycle").unwrap();
        let (c, t) = (2.5f64, 1.7f64);
        let path = integrate(&uni, &Signal::constant(t, &[c]).unwrap(), &[0.0; 3], 1000).unwrap();
        let end = path.last();
        let exact = [(c * t).sin() / c, (1.0 - (c * t).cos()) / c, c * t];
        for k in 0..3 {
            assert!((end[k] - exact[k]).abs() < 1e-8, "{k}: {} vs {}", end[k], exact[k]);
        }
    }

    #[test]
    fn endpoint_errors_skip_free_components() {
        let bcs = BoundarySpec::new(vec![
            [crate::flow::EndCondition::Fixed(0.0), crate::flow::EndCondition::Fixed(1.0)],
            [crate::flow::EndCondition::Fixed(0.0), crate::flow::EndCondition::free(0.0)],
        ]);
        let path = Trajectory {
            times: vec![0.0, 1.0],
            dim: 2,
            states: vec![0.0, 0.0, 0.75, 3.0],
            rates: vec![0.0; 4],
        };
        let errs = endpoint_errors(&path, &bcs);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].component, 0);
        assert!((errs[0].error - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_energy() {
        let e = energy(&[3.0; 11], 1, 2.0).unwrap();
        assert!((e - 18.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_time_single_integrator_plan() {
        let si = AffineSystem::builtin("single_integrator").unwrap();
        let bcs = BoundarySpec::fixed(&[0.0], &[1.0]);
        let plan = plan(&si, &bcs, &PlanOptions::new(1.0, 20, Horizon::Fixed { t: 1.0 })).unwrap();
        assert_eq!(plan.terminal_time, 1.0);
        assert!((plan.energy - 1.0).abs() < 1e-9);
        assert!(plan.max_endpoint_error() < 1e-9);
        assert!(plan.report.converged);
    }
}
