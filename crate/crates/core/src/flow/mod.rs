//! Method-of-lines evolution of the affine geometric heat flow
//! `x_s = G(x)⁻¹ (d/dt ∂L/∂x_t − ∂L/∂x)` on a uniform grid in t.

mod implicit;
mod rhs;
mod solve;
mod stepper;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use implicit::{Rosenbrock23, Stencil};
pub use rhs::{DissipationCheck, FlowOperator, FreeEndFlux};
pub use solve::{advance, solve, Integrator, MONOTONE_RTOL, FrameDiagnostics, SolveOptions, SolveReport};
pub use stepper::{Dopri5, StepInfo};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i·Δt`, `i = 0..=N`, over `[0, span]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    intervals: usize,
    span: f64,
}

impl Grid {
    pub const MIN_INTERVALS: usize = 8;

    pub fn new(intervals: usize, span: f64) -> Result<Self> {
        if intervals < Self::MIN_INTERVALS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {} intervals, got {intervals}",
                Self::MIN_INTERVALS
            )));
        }
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid span must be positive, got {span}"
            )));
        }
        Ok(Self { intervals, span })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn dt(&self) -> f64 {
        self.span / self.intervals as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.span
        } else {
            i as f64 * self.dt()
        }
    }

    /// Trapezoid weights.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.intervals {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

/// Which end of the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum End {
    Start,
    End,
}

impl End {
    pub fn label(self) -> &'static str {
        match self {
            End::Start => "start",
            End::End => "end",
        }
    }
}

/// Boundary treatment of one component at one end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EndCondition {
    /// Dirichlet: the component is pinned to this value for all s.
    Fixed(f64),
    /// Natural condition ∂L/∂ẋ_i = 0; the hint seeds the initial curve.
    Free { hint: Option<f64> },
}

impl EndCondition {
    pub fn free(hint: f64) -> Self {
        EndCondition::Free { hint: Some(hint) }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, EndCondition::Fixed(_))
    }

    pub fn fixed_value(&self) -> Option<f64> {
        match self {
            EndCondition::Fixed(v) => Some(*v),
            EndCondition::Free { .. } => None,
        }
    }
}

/// Per-component, per-end boundary conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    rows: Vec<[EndCondition; 2]>,
}

impl BoundarySpec {
    pub fn new(rows: Vec<[EndCondition; 2]>) -> Self {
        Self { rows }
    }

    /// Every component fixed at both ends.
    pub fn fixed(start: &[f64], end: &[f64]) -> Self {
        Self::new(
            start
                .iter()
                .zip(end)
                .map(|(&a, &b)| [EndCondition::Fixed(a), EndCondition::Fixed(b)])
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, component: usize, end: End) -> EndCondition {
        self.rows[component][end as usize]
    }

    pub fn rows(&self) -> &[[EndCondition; 2]] {
        &self.rows
    }

    pub fn push(&mut self, start: EndCondition, end: EndCondition) {
        self.rows.push([start, end]);
    }

    pub fn is_fixed(&self, component: usize, end: End) -> bool {
        self.get(component, end).is_fixed()
    }

    /// Components free at `end`.
    pub fn free_components(&self, end: End) -> Vec<usize> {
        (0..self.dim()).filter(|&k| !self.is_fixed(k, end)).collect()
    }

    /// Endpoint used to seed the initial curve.
    fn seed(&self, component: usize, end: End) -> Result<f64> {
        match self.get(component, end) {
            EndCondition::Fixed(v) => Ok(v),
            EndCondition::Free { hint: Some(h) } => Ok(h),
            EndCondition::Free { hint: None } => Err(Error::MissingHint {
                component: component + 1,
                end: end.label(),
            }),
        }
    }
}

/// The discretized curve `x(t_i, s)` stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveState {
    grid: Grid,
    dim: usize,
    data: Vec<f64>,
    pub s: f64,
}

impl CurveState {
    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(grid.nodes() * dim);
        for i in 0..grid.nodes() {
            let x = f(grid.node(i));
            assert_eq!(x.len(), dim, "curve sample has wrong dimension");
            data.extend(x);
        }
        Self {
            grid,
            dim,
            data,
            s: 0.0,
        }
    }

    pub fn from_data(grid: Grid, dim: usize, data: Vec<f64>, s: f64) -> Result<Self> {
        if data.len() != grid.nodes() * dim {
            return Err(Error::InvalidArgument(format!(
                "curve data has {} values, expected {}",
                data.len(),
                grid.nodes() * dim
            )));
        }
        Ok(Self { grid, dim, data, s })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..self.grid.nodes()).map(|i| self.data[i * self.dim + k]).collect()
    }

    /// Discrete x_t at node `i`: central differences inside, second-order
    /// one-sided differences at the ends.
    pub fn derivative(&self, i: usize, out: &mut [f64]) {
        derivative(&self.data, self.dim, self.grid, i, out);
    }

    /// Writes `t, x1..xn` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.grid.nodes() {
            let mut row = vec![self.grid.node(i).to_string()];
            row.extend(self.node(i).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn derivative(data: &[f64], dim: usize, grid: Grid, i: usize, out: &mut [f64]) {
    let n = grid.intervals();
    let dt = grid.dt();
    let x = |j: usize, k: usize| data[j * dim + k];
    for (k, o) in out.iter_mut().enumerate().take(dim) {
        *o = if i == 0 {
            (-3.0 * x(0, k) + 4.0 * x(1, k) - x(2, k)) / (2.0 * dt)
        } else if i == n {
            (3.0 * x(n, k) - 4.0 * x(n - 1, k) + x(n - 2, k)) / (2.0 * dt)
        } else {
            (x(i + 1, k) - x(i - 1, k)) / (2.0 * dt)
        };
    }
}

/// Componentwise straight line between the resolved endpoint values
/// (fixed values or hints).
pub fn initial_curve(bcs: &BoundarySpec, grid: Grid) -> Result<CurveState> {
    let dim = bcs.dim();
    let mut ends = Vec::with_capacity(dim);
    for k in 0..dim {
        ends.push((bcs.seed(k, End::Start)?, bcs.seed(k, End::End)?));
    }
    let span = grid.span();
    let mut curve = CurveState::from_fn(grid, dim, |t| {
        let r = t / span;
        ends.iter().map(|&(a, b)| a + (b - a) * r).collect()
    });
    pin(&mut curve.data, dim, grid, bcs);
    Ok(curve)
}

/// Writes fixed boundary values into the node array.
pub(crate) fn pin(data: &mut [f64], dim: usize, grid: Grid, bcs: &BoundarySpec) {
    let last = grid.intervals() * dim;
    for k in 0..dim {
        if let Some(v) = bcs.get(k, End::Start).fixed_value() {
            data[k] = v;
        }
        if let Some(v) = bcs.get(k, End::End).fixed_value() {
            data[last + k] = v;
        }
    }
}
