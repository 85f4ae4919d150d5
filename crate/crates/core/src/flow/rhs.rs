use nalgebra::{DMatrix, DVector};

use super::{BoundarySpec, CurveState, End, Grid};
use crate::dynamics::{AffineSystem, LagrangianEval, Metric, NodeFrame};
use crate::error::{Error, Result};

/// Flux-form discretization of the flow for one (system, metric, boundary)
/// triple. Owns the scratch buffers, so one operator serves one solve.
///
/// The discrete action is the midpoint rule `Σ Δt L(x_{j+½}, (x_{j+1}−x_j)/Δt)`
/// and the flow is its exact gradient flow in the metric `w_i G(x_i)` with
/// trapezoid weights `w_i`. Fluxes `f = ∂L/∂ẋ` and sources `∂L/∂x` live at
/// half nodes; interior nodes use
/// `G⁻¹[(f_{i+½} − f_{i−½})/Δt − (s_{i−½} + s_{i+½})/2]`. Free ends see a
/// zero ghost flux on the outward side over a half cell; fixed components do
/// not move.
#[derive(Debug, Clone)]
pub struct FlowOperator {
    system: AffineSystem,
    weights: Vec<f64>,
    bcs: BoundarySpec,
    grid: Grid,
    n: usize,
    node: NodeFrame,
    lag: LagrangianEval,
    flux: Vec<f64>,
    source: Vec<f64>,
    mid: Vec<f64>,
    vel: Vec<f64>,
    b: Vec<f64>,
    free_start: Vec<usize>,
    free_end: Vec<usize>,
    fixed_mask: Vec<bool>,
}

fn eval_at(system: &AffineSystem, x: &[f64], derivs: bool, node: &mut NodeFrame, index: usize) -> Result<()> {
    system.eval_node(x, derivs, node).map_err(|e| match e {
        Error::SingularFrame { condition, .. } => Error::SingularFrame {
            node: Some(index),
            condition,
        },
        other => other,
    })
}

/// Finite-difference rate of the action along the flow against the
/// quadrature of `x_sᵀ G x_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationCheck {
    pub s: f64,
    /// `(A(x + δ x_s) − A(x − δ x_s)) / 2δ`.
    pub action_rate: f64,
    /// `−Σ w_i x_s(t_i)ᵀ G(x(t_i)) x_s(t_i)`.
    pub dissipation: f64,
}

impl DissipationCheck {
    pub fn relative_error(&self) -> f64 {
        (self.action_rate - self.dissipation).abs() / self.dissipation.abs().max(f64::MIN_POSITIVE)
    }
}

/// `∂L/∂ẋ_i` at a free end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEndFlux {
    pub component: usize,
    pub end: End,
    pub flux: f64,
}

impl FlowOperator {
    /// Largest node distance over which the rhs couples states: one-sided
    /// end differences reach two nodes in.
    pub const REACH: usize = 2;

    pub fn new(system: &AffineSystem, metric: &Metric, bcs: &BoundarySpec, grid: Grid) -> Result<Self> {
        let n = system.state_dim();
        if bcs.dim() != n {
            return Err(Error::InvalidArgument(format!(
                "boundary spec has {} rows, system dimension is {n}",
                bcs.dim()
            )));
        }
        let mut fixed_mask = vec![false; 2 * n];
        for k in 0..n {
            fixed_mask[k] = bcs.is_fixed(k, End::Start);
            fixed_mask[n + k] = bcs.is_fixed(k, End::End);
        }
        Ok(Self {
            system: system.clone(),
            weights: metric.weights().to_vec(),
            bcs: bcs.clone(),
            grid,
            n,
            node: NodeFrame::new(system),
            lag: LagrangianEval::zeros(n),
            flux: vec![0.0; grid.intervals() * n],
            source: vec![0.0; grid.intervals() * n],
            mid: vec![0.0; n],
            vel: vec![0.0; n],
            b: vec![0.0; n],
            free_start: bcs.free_components(End::Start),
            free_end: bcs.free_components(End::End),
            fixed_mask,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn system(&self) -> &AffineSystem {
        &self.system
    }

    pub fn bcs(&self) -> &BoundarySpec {
        &self.bcs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn eval_node(&mut self, x: &[f64], derivs: bool, node_index: usize) -> Result<()> {
        eval_at(&self.system, x, derivs, &mut self.node, node_index)
    }

    /// Evaluates L at interval `j`'s midpoint with the one-interval
    /// difference quotient.
    fn eval_interval(&mut self, x: &[f64], j: usize, derivs: bool) -> Result<()> {
        let n = self.n;
        let dt = self.grid.dt();
        let (a, b) = (&x[j * n..(j + 1) * n], &x[(j + 1) * n..(j + 2) * n]);
        for k in 0..n {
            self.mid[k] = 0.5 * (a[k] + b[k]);
            self.vel[k] = (b[k] - a[k]) / dt;
        }
        eval_at(&self.system, &self.mid, derivs, &mut self.node, j)?;
        self.node.lagrangian(&self.weights, &self.vel, &mut self.lag);
        Ok(())
    }

    /// Right-hand side `dX/ds` for the node array `x`.
    pub fn rhs(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let intervals = self.grid.intervals();
        let dt = self.grid.dt();

        for j in 0..intervals {
            self.eval_interval(x, j, true)?;
            self.flux[j * n..(j + 1) * n].copy_from_slice(&self.lag.dl_dxdot);
            self.source[j * n..(j + 1) * n].copy_from_slice(&self.lag.dl_dx);
        }

        for i in 0..=intervals {
            let o = &mut out[i * n..(i + 1) * n];
            let at_start = i == 0;
            let at_end = i == intervals;
            let free: &[usize] = if at_start {
                &self.free_start
            } else if at_end {
                &self.free_end
            } else {
                &[]
            };
            if (at_start || at_end) && free.is_empty() {
                o.fill(0.0);
                continue;
            }
            for k in 0..n {
                self.b[k] = if at_start {
                    self.flux[k] / (0.5 * dt) - self.source[k]
                } else if at_end {
                    let j = (intervals - 1) * n + k;
                    -self.flux[j] / (0.5 * dt) - self.source[j]
                } else {
                    let (l, r) = ((i - 1) * n + k, i * n + k);
                    (self.flux[r] - self.flux[l]) / dt - 0.5 * (self.source[l] + self.source[r])
                };
            }
            eval_at(&self.system, &x[i * n..(i + 1) * n], false, &mut self.node, i)?;
            if free.len() == n || !(at_start || at_end) {
                self.node.apply_inverse_metric(&self.weights, &self.b, o);
            } else {
                // Gradient restricted to the free coordinates: G_FF z = b_F.
                let g = self.node.metric_matrix(&self.weights);
                let gff = DMatrix::from_fn(free.len(), free.len(), |r, c| g[free[r] + free[c] * n]);
                let bf = DVector::from_iterator(free.len(), free.iter().map(|&k| self.b[k]));
                let z = gff.lu().solve(&bf).ok_or(Error::SingularFrame {
                    node: Some(i),
                    condition: f64::INFINITY,
                })?;
                o.fill(0.0);
                for (r, &k) in free.iter().enumerate() {
                    o[k] = z[r];
                }
            }
            if at_start || at_end {
                let mask = if at_start { &self.fixed_mask[..n] } else { &self.fixed_mask[n..] };
                for (v, &fixed) in o.iter_mut().zip(mask) {
                    if fixed {
                        *v = 0.0;
                    }
                }
            }
            if let Some(k) = o.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    node: i,
                    component: k + 1,
                    s: f64::NAN,
                });
            }
        }
        Ok(())
    }

    /// Midpoint-rule action `Σ Δt L(x_{j+½}, (x_{j+1} − x_j)/Δt)`.
    pub fn action(&mut self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for j in 0..self.grid.intervals() {
            self.eval_interval(x, j, false)?;
            total += self.lag.value;
        }
        Ok(total * self.grid.dt())
    }

    /// `Σ w_i x_s(t_i)ᵀ G(x(t_i)) x_s(t_i)` with trapezoid weights.
    pub fn dissipation(&mut self, x: &[f64], xs: &[f64]) -> Result<f64> {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..=self.grid.intervals() {
            let v = &xs[i * n..(i + 1) * n];
            if v.iter().all(|&e| e == 0.0) {
                continue;
            }
            self.eval_node(&x[i * n..(i + 1) * n], false, i)?;
            let g = self.node.metric_matrix(&self.weights);
            let mut q = 0.0;
            for c in 0..n {
                for r in 0..n {
                    q += v[r] * g[r + c * n] * v[c];
                }
            }
            total += self.grid.weight(i) * q;
        }
        Ok(total)
    }

    /// Compares the directional derivative of the action along the flow
    /// (central difference in the flow direction) with the dissipation
    /// quadrature.
    pub fn dissipation_check(&mut self, curve: &CurveState) -> Result<DissipationCheck> {
        let x = curve.data();
        let mut xs = vec![0.0; x.len()];
        self.rhs(x, &mut xs)?;
        let scale = xs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let xmax = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let delta = 1e-5 * xmax / scale;
        let shifted = |sign: f64| -> Vec<f64> {
            x.iter().zip(&xs).map(|(a, b)| a + sign * delta * b).collect()
        };
        let plus = self.action(&shifted(1.0))?;
        let minus = self.action(&shifted(-1.0))?;
        Ok(DissipationCheck {
            s: curve.s,
            action_rate: (plus - minus) / (2.0 * delta),
            dissipation: -self.dissipation(x, &xs)?,
        })
    }

    /// ∂L/∂ẋ at every free end component, extrapolated from the end
    /// half node with `d/dt ∂L/∂ẋ = ∂L/∂x`.
    pub fn free_end_fluxes(&mut self, curve: &CurveState) -> Result<Vec<FreeEndFlux>> {
        let x = curve.data();
        let half = 0.5 * self.grid.dt();
        let mut out = Vec::new();
        for (end, j, sign) in [(End::Start, 0, -1.0), (End::End, self.grid.intervals() - 1, 1.0)] {
            let free = self.bcs.free_components(end);
            if free.is_empty() {
                continue;
            }
            self.eval_interval(x, j, true)?;
            for k in free {
                out.push(FreeEndFlux {
                    component: k,
                    end,
                    flux: self.lag.dl_dxdot[k] + sign * half * self.lag.dl_dx[k],
                });
            }
        }
        Ok(out)
    }

    /// Largest pivot-ratio condition estimate of F̄ over the nodes.
    pub fn max_frame_condition(&mut self, x: &[f64]) -> Result<f64> {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..=self.grid.intervals() {
            self.eval_node(&x[i * n..(i + 1) * n], false, i)?;
            worst = worst.max(self.node.condition);
        }
        Ok(worst)
    }
}
