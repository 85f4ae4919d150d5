//! Free terminal time: the state is extended with physical time `τ` and a
//! dilation `a`, the problem is posed on the unit interval, and the physical
//! time axis is recovered afterwards from `τ̃(t) = ∫₀ᵗ a² dt`.

use std::sync::Arc;

use crate::dual::Dual;
use crate::dynamics::{AffineSystem, Fields};
use crate::error::{Error, Result};
use crate::flow::{BoundarySpec, CurveState, EndCondition, Grid};

/// Smallest dilation for which the time map is treated as invertible.
pub const A_MIN: f64 = 1e-3;

/// Fields of the extended state `(x, τ, a)`:
/// `h′ = (h(x)a², a², 0)` and `F′ = [[F(x)a, 0], [0, 0], [0, 1]]`.
#[derive(Debug, Clone)]
pub struct AugmentedFields {
    base: Arc<dyn Fields>,
}

impl AugmentedFields {
    pub fn new(base: Arc<dyn Fields>) -> Self {
        Self { base }
    }
}

impl Fields for AugmentedFields {
    fn state_dim(&self) -> usize {
        self.base.state_dim() + 2
    }

    fn input_dim(&self) -> usize {
        self.base.input_dim() + 1
    }

    fn drift(&self, x: &[Dual], out: &mut [Dual]) -> Result<()> {
        let n = self.base.state_dim();
        let a2 = x[n + 1] * x[n + 1];
        self.base.drift(&x[..n], &mut out[..n])?;
        for o in &mut out[..n] {
            *o = *o * a2;
        }
        out[n] = a2;
        out[n + 1] = Dual::constant(0.0);
        Ok(())
    }

    fn control(&self, x: &[Dual], out: &mut [Dual]) -> Result<()> {
        let (n, m) = (self.base.state_dim(), self.base.input_dim());
        let np = n + 2;
        let a = x[n + 1];
        let mut f = vec![Dual::default(); n * m];
        self.base.control(&x[..n], &mut f)?;
        out.fill(Dual::default());
        for j in 0..m {
            for i in 0..n {
                out[j * np + i] = f[j * n + i] * a;
            }
        }
        out[m * np + n + 1] = Dual::constant(1.0);
        Ok(())
    }

    fn depends_on(&self, k: usize) -> bool {
        let n = self.base.state_dim();
        if k < n {
            self.base.depends_on(k)
        } else {
            k == n + 1
        }
    }

    fn name(&self) -> String {
        format!("{} (free time)", self.base.name())
    }
}

/// A base system together with its free-time extension.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    base: AffineSystem,
    system: AffineSystem,
}

impl AugmentedSystem {
    pub fn base(&self) -> &AffineSystem {
        &self.base
    }

    /// The extended system of dimension `n + 2` with `m + 1` inputs.
    pub fn system(&self) -> &AffineSystem {
        &self.system
    }

    /// Index of `τ` in the extended state.
    pub fn tau_index(&self) -> usize {
        self.base.state_dim()
    }

    /// Index of `a` in the extended state.
    pub fn dilation_index(&self) -> usize {
        self.base.state_dim() + 1
    }

    /// Re-anchors both the base and the extended complement at `x_ref`
    /// (an extended state).
    pub fn anchored_at(&self, x_ref: &[f64]) -> Result<Self> {
        let n = self.base.state_dim();
        if x_ref.len() != n + 2 {
            return Err(Error::InvalidArgument(format!(
                "extended state has {} entries, expected {}",
                x_ref.len(),
                n + 2
            )));
        }
        Ok(Self {
            base: self.base.anchored_at(&x_ref[..n])?,
            system: self.system.anchored_at(x_ref)?,
        })
    }
}

/// Extends `system` with `τ` and `a`. The extended complement is
/// `[[F_c(x), 0], [0, 1], [0, 0]]` with `F_c` from the base system.
pub fn augment(system: &AffineSystem) -> AugmentedSystem {
    let fields: Arc<dyn Fields> = Arc::new(AugmentedFields::new(system.fields().clone()));
    AugmentedSystem {
        base: system.clone(),
        system: AffineSystem::with_augmented_complement(fields, system.clone()),
    }
}

/// Base conditions plus `τ(0) = 0`, free `τ(1)` seeded with `t_guess`, and
/// free `a` at both ends.
pub fn augmented_bcs(base: &BoundarySpec, t_guess: f64, a_start: f64, a_end: f64) -> Result<BoundarySpec> {
    if !(t_guess > 0.0 && t_guess.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "terminal time guess must be positive, got {t_guess}"
        )));
    }
    if !(a_start > 0.0 && a_end > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dilation hints must be positive, got {a_start} and {a_end}"
        )));
    }
    let mut out = base.clone();
    out.push(EndCondition::Fixed(0.0), EndCondition::free(t_guess));
    out.push(EndCondition::free(a_start), EndCondition::free(a_end));
    Ok(out)
}

/// Physical-time map `τ̃(t) = ∫₀ᵗ a² dt` for the piecewise-linear
/// interpolant of the nodal dilation, integrated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMap {
    grid: Grid,
    a: Vec<f64>,
    tau: Vec<f64>,
}

impl TimeMap {
    /// Builds the map from nodal dilation values.
    pub fn from_dilation(grid: Grid, a: Vec<f64>) -> Result<Self> {
        if a.len() != grid.nodes() {
            return Err(Error::InvalidArgument(format!(
                "{} dilation samples for {} nodes",
                a.len(),
                grid.nodes()
            )));
        }
        if let Some((node, &v)) = a
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.abs() >= A_MIN))
        {
            return Err(Error::DegenerateDilation { node, a: v });
        }
        if let Some(i) = (1..a.len()).find(|&i| a[i - 1] * a[i] < 0.0) {
            return Err(Error::DegenerateDilation { node: i, a: 0.0 });
        }
        let mut map = Self {
            grid,
            tau: Vec::with_capacity(a.len()),
            a,
        };
        map.tau.push(0.0);
        for i in 1..map.a.len() {
            let inc = map.partial(i - 1, 1.0);
            map.tau.push(map.tau[i - 1] + inc);
        }
        Ok(map)
    }

    /// `∫` of `a²` from node `lo` to fraction `r` of the next interval.
    fn partial(&self, lo: usize, r: f64) -> f64 {
        let a0 = self.a[lo];
        let d = self.a[(lo + 1).min(self.a.len() - 1)] - a0;
        self.grid.dt() * r * (a0 * a0 + a0 * d * r + d * d * r * r / 3.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Nodal dilation values.
    pub fn dilation(&self) -> &[f64] {
        &self.a
    }

    /// Nodal `τ̃` values.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Terminal time `T = τ̃(t_N)`.
    pub fn terminal_time(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    /// Unit-domain time `t` with `τ̃(t) = t_phys`: bracket by bisection on
    /// the samples, then safeguarded Newton on the cubic.
    pub fn invert(&self, t_phys: f64) -> Result<f64> {
        let t_max = self.terminal_time();
        let slack = 1e-12 * t_max.max(1.0);
        if !(t_phys >= -slack && t_phys <= t_max + slack) {
            return Err(Error::TimeOutOfRange { t: t_phys, t_max });
        }
        let t_phys = t_phys.clamp(0.0, t_max);
        // First sample strictly above t_phys, bounded to a valid bracket.
        let hi = self.tau.partition_point(|&v| v <= t_phys).clamp(1, self.tau.len() - 1);
        let lo = hi - 1;
        let (a, b) = (self.tau[lo], self.tau[hi]);
        let target = t_phys - a;
        let (mut left, mut right) = (0.0, 1.0);
        let mut r: f64 = if b > a { target / (b - a) } else { 0.0 };
        for _ in 0..60 {
            let g = self.partial(lo, r) - target;
            if g.abs() <= 1e-15 * t_max.max(1.0) {
                break;
            }
            if g > 0.0 {
                right = r;
            } else {
                left = r;
            }
            let ar = self.a[lo] + r * (self.a[hi] - self.a[lo]);
            let slope = self.grid.dt() * ar * ar;
            let next = r - g / slope;
            r = if next > left && next < right { next } else { 0.5 * (left + right) };
        }
        Ok(self.grid.node(lo) + r * (self.grid.node(hi) - self.grid.node(lo)))
    }

    /// Physical time `τ̃(t)` for unit-domain `t`.
    pub fn forward(&self, t: f64) -> f64 {
        let (lo, r) = bracket(&self.grid, t);
        self.tau[lo] + self.partial(lo, r)
    }

    /// Dilation at unit-domain `t`, interpolated linearly.
    pub fn dilation_at(&self, t: f64) -> f64 {
        let (lo, r) = bracket(&self.grid, t);
        let hi = (lo + 1).min(self.a.len() - 1);
        self.a[lo] + r * (self.a[hi] - self.a[lo])
    }
}

/// Node index and fraction for `t` on `grid`, clamped to the span.
pub(crate) fn bracket(grid: &Grid, t: f64) -> (usize, f64) {
    let x = (t / grid.dt()).clamp(0.0, grid.intervals() as f64);
    let lo = (x.floor() as usize).min(grid.intervals() - 1);
    (lo, x - lo as f64)
}

/// Time map of a solved extended curve, reading `a` from the last component.
pub fn recover_time(curve: &CurveState) -> Result<TimeMap> {
    let k = curve.dim() - 1;
    TimeMap::from_dilation(*curve.grid(), curve.component(k))
}

/// `u†(t_phys) = u(t)/a(t)` at `t = τ̃⁻¹(t_phys)`, with `u` given per node
/// (node-major, `m` per node) and interpolated linearly.
pub fn dilate_control(u: &[f64], m: usize, map: &TimeMap, t_phys: f64) -> Result<Vec<f64>> {
    let grid = map.grid();
    if u.len() != grid.nodes() * m {
        return Err(Error::InvalidArgument(format!(
            "control has {} values, expected {}",
            u.len(),
            grid.nodes() * m
        )));
    }
    let t = map.invert(t_phys)?;
    let (lo, r) = bracket(grid, t);
    let a = map.dilation_at(t);
    if !(a.abs() >= A_MIN) {
        return Err(Error::DegenerateDilation { node: lo, a });
    }
    let hi = lo + 1;
    Ok((0..m)
        .map(|j| (u[lo * m + j] + r * (u[hi * m + j] - u[lo * m + j])) / a)
        .collect())
}
