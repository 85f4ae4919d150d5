//! Affine control systems `ẋ = h(x) + F(x)u`, their completed frames
//! `F̄ = [F_c | F]`, the penalized metric `G = F̄⁻ᵀ D F̄⁻¹` and the Lagrangian
//! `L = (ẋ − h)ᵀ G (ẋ − h)`.

mod fields;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use fields::{builtin, DriftlessUnicycle, ExprFields, Fields, SingleIntegrator, Unicycle};

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::linalg::SmallLu;

/// Frames whose condition number exceeds this are rejected.
pub const MAX_FRAME_CONDITION: f64 = 1e12;
/// Smallest admissible singular value of F(x).
pub const MIN_CONTROL_SINGULAR_VALUE: f64 = 1e-10;
/// Residual a basis vector must keep after projection to be chosen as a pivot.
const PIVOT_SELECT_TOL: f64 = 1e-3;
/// Residual below which a frozen pivot is treated as dependent.
const PIVOT_DEPENDENT_TOL: f64 = 1e-10;

/// How the complement F_c(x) is produced.
#[derive(Debug, Clone)]
pub enum Complement {
    /// Gram–Schmidt of `e_p` (p in `pivots`) against range(F(x)).
    GramSchmidt { pivots: Vec<usize> },
    /// Gram–Schmidt whose pivots are chosen on first anchoring.
    Unanchored,
    /// Provided by [`Fields::complement`].
    Supplied,
    /// Free-time layout `[[F_c(x), 0], [0, 1], [0, 0]]` built from a base
    /// system over the leading coordinates.
    Augmented(Box<AffineSystem>),
}

/// An affine control system. Cheap to clone; immutable once built.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    fields: Arc<dyn Fields>,
    complement: Complement,
    n: usize,
    m: usize,
}

impl AffineSystem {
    /// Wraps `fields`. Gram–Schmidt pivots are seeded at the origin; call
    /// [`AffineSystem::anchored_at`] to seed them elsewhere.
    pub fn new(fields: Arc<dyn Fields>) -> Result<Self> {
        let (n, m) = (fields.state_dim(), fields.input_dim());
        if m == 0 || m > n {
            return Err(Error::InvalidSystem(format!(
                "need 1 <= m <= n, got n = {n}, m = {m}"
            )));
        }
        let complement = if fields.has_complement() {
            Complement::Supplied
        } else {
            Complement::Unanchored
        };
        let sys = Self {
            fields,
            complement,
            n,
            m,
        };
        match &sys.complement {
            Complement::Unanchored => Ok(sys.anchored_at(&vec![0.0; n]).unwrap_or(sys)),
            _ => Ok(sys),
        }
    }

    /// Builds a system whose complement follows [`Complement::Augmented`].
    pub(crate) fn with_augmented_complement(fields: Arc<dyn Fields>, base: AffineSystem) -> Self {
        let (n, m) = (fields.state_dim(), fields.input_dim());
        Self {
            fields,
            complement: Complement::Augmented(Box::new(base)),
            n,
            m,
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let fields = builtin(name)
            .ok_or_else(|| Error::InvalidSystem(format!("unknown builtin system `{name}`")))?;
        Self::new(fields)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn fields(&self) -> &Arc<dyn Fields> {
        &self.fields
    }

    pub fn complement_rule(&self) -> &Complement {
        &self.complement
    }

    pub fn name(&self) -> String {
        self.fields.name()
    }

    /// Whether h, F or F_c can vary with state `k`.
    pub fn depends_on(&self, k: usize) -> bool {
        match &self.complement {
            Complement::Augmented(base) if k < base.n => {
                self.fields.depends_on(k) || base.depends_on(k)
            }
            _ => self.fields.depends_on(k),
        }
    }

    /// Re-seeds the Gram–Schmidt pivot order at `x_ref` and checks that F has
    /// full column rank there. Systems with a supplied complement are
    /// returned unchanged apart from the rank check.
    pub fn anchored_at(&self, x_ref: &[f64]) -> Result<Self> {
        self.check_dims(x_ref)?;
        self.check_control_rank(x_ref)?;
        let mut out = self.clone();
        match &self.complement {
            Complement::GramSchmidt { .. } | Complement::Unanchored => {
                let xd: Vec<Dual> = x_ref.iter().map(|&v| Dual::constant(v)).collect();
                let mut f = vec![Dual::default(); self.n * self.m];
                self.fields.control(&xd, &mut f)?;
                let values: Vec<f64> = f.iter().map(|d| d.value).collect();
                out.complement = Complement::GramSchmidt {
                    pivots: select_pivots(self.n, self.m, &values)?,
                };
            }
            Complement::Augmented(base) => {
                let bn = base.n;
                out.complement = Complement::Augmented(Box::new(base.anchored_at(&x_ref[..bn])?));
            }
            Complement::Supplied => {}
        }
        Ok(out)
    }

    fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "state has {} entries, system dimension is {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Drift h(x).
    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x)?;
        let xd: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
        let mut out = vec![Dual::default(); self.n];
        self.fields.drift(&xd, &mut out)?;
        Ok(out.into_iter().map(|d| d.value).collect())
    }

    /// Control matrix F(x).
    pub fn control_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dims(x)?;
        let xd: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
        let mut out = vec![Dual::default(); self.n * self.m];
        self.fields.control(&xd, &mut out)?;
        Ok(DMatrix::from_iterator(
            self.n,
            self.m,
            out.into_iter().map(|d| d.value),
        ))
    }

    /// Errors unless the smallest singular value of F(x) exceeds
    /// [`MIN_CONTROL_SINGULAR_VALUE`].
    pub fn check_control_rank(&self, x: &[f64]) -> Result<()> {
        let f = self.control_matrix(x)?;
        let smallest = f
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(smallest > MIN_CONTROL_SINGULAR_VALUE) {
            return Err(Error::InvalidSystem(format!(
                "F(x) is rank deficient (smallest singular value {smallest:.3e})"
            )));
        }
        Ok(())
    }

    /// Writes F_c into `out` (n×(n−m), column-major) given F already
    /// evaluated at the same dual point.
    fn complement_into(&self, x: &[Dual], control: &[Dual], out: &mut [Dual]) -> Result<()> {
        match &self.complement {
            Complement::GramSchmidt { pivots } => gram_schmidt(self.n, self.m, control, pivots, out),
            Complement::Unanchored => Err(Error::InvalidSystem(
                "complement pivots not anchored; call anchored_at".into(),
            )),
            Complement::Supplied => self.fields.complement(x, out),
            Complement::Augmented(base) => {
                let (bn, bm) = (base.n, base.m);
                let bc = bn - bm;
                let bx = &x[..bn];
                let mut bf = vec![Dual::default(); bn * bm];
                base.fields.control(bx, &mut bf)?;
                let mut bfc = vec![Dual::default(); bn * bc];
                base.complement_into(bx, &bf, &mut bfc)?;
                let n = self.n;
                out.fill(Dual::default());
                for c in 0..bc {
                    out[c * n..c * n + bn].copy_from_slice(&bfc[c * bn..(c + 1) * bn]);
                }
                out[bc * n + bn] = Dual::constant(1.0);
                Ok(())
            }
        }
    }

    /// F_c(x) as produced by the complement rule.
    pub fn complement_basis(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let frame = self.frame(x)?;
        Ok(frame.complement)
    }

    /// Complement, completed frame and its inverse at `x`.
    pub fn frame(&self, x: &[f64]) -> Result<Frame> {
        self.check_dims(x)?;
        let mut node = NodeFrame::new(self);
        self.eval_node(x, false, &mut node)?;
        let (n, c) = (self.n, self.n - self.m);
        let fbar = DMatrix::from_column_slice(n, n, &node.fbar);
        let complement = fbar.columns(0, c).into_owned();
        let condition = condition_number(&fbar);
        if !(condition <= MAX_FRAME_CONDITION) {
            return Err(Error::SingularFrame {
                node: None,
                condition,
            });
        }
        let fbar_inv = fbar
            .clone()
            .try_inverse()
            .ok_or(Error::SingularFrame {
                node: None,
                condition,
            })?;
        Ok(Frame {
            complement,
            fbar,
            fbar_inv,
            condition,
        })
    }

    /// Evaluates h, F̄ (and, with `derivs`, their partial derivatives along
    /// every coordinate) at `x`, then factors F̄.
    pub fn eval_node(&self, x: &[f64], derivs: bool, node: &mut NodeFrame) -> Result<()> {
        let n = self.n;
        let mut filled = false;
        node.has_derivs = derivs;
        if derivs {
            for k in 0..n {
                let dh = &mut node.dh[k * n..(k + 1) * n];
                let df = &mut node.dfbar[k * n * n..(k + 1) * n * n];
                if !self.depends_on(k) {
                    dh.fill(0.0);
                    df.fill(0.0);
                    continue;
                }
                self.dual_pass(x, Some(k), node)?;
                let dh = &mut node.dh[k * n..(k + 1) * n];
                for (o, d) in dh.iter_mut().zip(&node.hd) {
                    *o = d.deriv;
                }
                let df = &mut node.dfbar[k * n * n..(k + 1) * n * n];
                for (o, d) in df.iter_mut().zip(&node.fbd) {
                    *o = d.deriv;
                }
                if !filled {
                    node.copy_values();
                    filled = true;
                }
            }
        }
        if !filled {
            self.dual_pass(x, None, node)?;
            node.copy_values();
        }
        node.condition = node.lu.factor(&node.fbar);
        if !(node.condition <= MAX_FRAME_CONDITION) {
            return Err(Error::SingularFrame {
                node: None,
                condition: node.condition,
            });
        }
        Ok(())
    }

    fn dual_pass(&self, x: &[f64], seed: Option<usize>, node: &mut NodeFrame) -> Result<()> {
        for (i, (xd, &v)) in node.xd.iter_mut().zip(x).enumerate() {
            *xd = Dual::new(v, if Some(i) == seed { 1.0 } else { 0.0 });
        }
        self.fields.drift(&node.xd, &mut node.hd)?;
        let split = (self.n - self.m) * self.n;
        let (fc, f) = node.fbd.split_at_mut(split);
        self.fields.control(&node.xd, f)?;
        if split > 0 {
            self.complement_into(&node.xd, f, fc)?;
        }
        Ok(())
    }
}

/// Chooses which standard basis vectors complete range(F) at a reference
/// point: the first `n − m` whose projection onto the orthogonal complement
/// keeps a residual above [`PIVOT_SELECT_TOL`].
fn select_pivots(n: usize, m: usize, f: &[f64]) -> Result<Vec<usize>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..m {
        let mut v = f[j * n..(j + 1) * n].to_vec();
        project_out(&mut v, &basis);
        let norm = dot(&v, &v).sqrt();
        if !(norm > MIN_CONTROL_SINGULAR_VALUE) {
            return Err(Error::InvalidSystem("F(x) is rank deficient".into()));
        }
        v.iter_mut().for_each(|e| *e /= norm);
        basis.push(v);
    }
    let mut pivots = Vec::with_capacity(n - m);
    for p in 0..n {
        if pivots.len() == n - m {
            break;
        }
        let mut v = vec![0.0; n];
        v[p] = 1.0;
        project_out(&mut v, &basis);
        let norm = dot(&v, &v).sqrt();
        if norm > PIVOT_SELECT_TOL {
            v.iter_mut().for_each(|e| *e /= norm);
            basis.push(v);
            pivots.push(p);
        }
    }
    if pivots.len() < n - m {
        return Err(Error::RankDeficient { residual: 0.0 });
    }
    Ok(pivots)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(q, v);
        v.iter_mut().zip(q).for_each(|(e, qi)| *e -= c * qi);
    }
}

/// Modified Gram–Schmidt over dual numbers with a frozen pivot order.
fn gram_schmidt(n: usize, m: usize, f: &[Dual], pivots: &[usize], out: &mut [Dual]) -> Result<()> {
    let mut q = vec![Dual::default(); n * m];
    for j in 0..m {
        let (done, rest) = q.split_at_mut(j * n);
        let v = &mut rest[..n];
        v.copy_from_slice(&f[j * n..(j + 1) * n]);
        orthogonalize(v, done, n);
        normalize(v, MIN_CONTROL_SINGULAR_VALUE)?;
    }
    for (c, &p) in pivots.iter().enumerate() {
        let (done, rest) = out.split_at_mut(c * n);
        let v = &mut rest[..n];
        v.fill(Dual::default());
        v[p] = Dual::constant(1.0);
        orthogonalize(v, &q, n);
        orthogonalize(v, done, n);
        normalize(v, PIVOT_DEPENDENT_TOL)?;
    }
    Ok(())
}

fn orthogonalize(v: &mut [Dual], basis: &[Dual], n: usize) {
    for b in basis.chunks_exact(n) {
        let mut c = Dual::default();
        for (bi, vi) in b.iter().zip(v.iter()) {
            c += *bi * *vi;
        }
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= c * *bi;
        }
    }
}

fn normalize(v: &mut [Dual], tol: f64) -> Result<()> {
    let mut s = Dual::default();
    for vi in v.iter() {
        s += *vi * *vi;
    }
    let norm = s.sqrt();
    if !(norm.value > tol) {
        return Err(Error::RankDeficient {
            residual: norm.value,
        });
    }
    for vi in v.iter_mut() {
        *vi = *vi / norm;
    }
    Ok(())
}

/// 2-norm condition number via singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// The completed frame at one state.
#[derive(Debug, Clone)]
pub struct Frame {
    pub complement: DMatrix<f64>,
    pub fbar: DMatrix<f64>,
    pub fbar_inv: DMatrix<f64>,
    pub condition: f64,
}

/// Per-node scratch and results for the hot path: values and partial
/// derivatives of h and F̄ plus an LU factorization of F̄.
#[derive(Debug, Clone)]
pub struct NodeFrame {
    n: usize,
    xd: Vec<Dual>,
    hd: Vec<Dual>,
    fbd: Vec<Dual>,
    /// h(x).
    pub h: Vec<f64>,
    /// F̄(x), column-major.
    pub fbar: Vec<f64>,
    /// ∂h/∂x_k at `dh[k*n..(k+1)*n]`.
    pub dh: Vec<f64>,
    /// ∂F̄/∂x_k at `dfbar[k*n*n..(k+1)*n*n]`.
    pub dfbar: Vec<f64>,
    has_derivs: bool,
    lu: SmallLu,
    /// Pivot-ratio estimate of cond(F̄).
    pub condition: f64,
    tmp: Vec<f64>,
}

impl NodeFrame {
    pub fn new(system: &AffineSystem) -> Self {
        let n = system.n;
        Self {
            n,
            xd: vec![Dual::default(); n],
            hd: vec![Dual::default(); n],
            fbd: vec![Dual::default(); n * n],
            h: vec![0.0; n],
            fbar: vec![0.0; n * n],
            dh: vec![0.0; n * n],
            dfbar: vec![0.0; n * n * n],
            has_derivs: false,
            lu: SmallLu::new(n),
            condition: 1.0,
            tmp: vec![0.0; n],
        }
    }

    fn copy_values(&mut self) {
        for (o, d) in self.h.iter_mut().zip(&self.hd) {
            *o = d.value;
        }
        for (o, d) in self.fbar.iter_mut().zip(&self.fbd) {
            *o = d.value;
        }
    }

    /// Frame coordinates `w = F̄⁻¹ v`.
    pub fn frame_coordinates(&self, v: &[f64], w: &mut [f64]) {
        w.copy_from_slice(v);
        self.lu.solve(w);
    }

    /// Evaluates L and its gradients at (x, ẋ). `dl_dx` is only filled when
    /// the node was evaluated with derivatives.
    pub fn lagrangian(&self, weights: &[f64], xdot: &[f64], out: &mut LagrangianEval) {
        let n = self.n;
        for i in 0..n {
            out.w[i] = xdot[i] - self.h[i];
        }
        self.lu.solve(&mut out.w);
        let mut value = 0.0;
        for i in 0..n {
            out.dl_dxdot[i] = weights[i] * out.w[i];
            value += out.dl_dxdot[i] * out.w[i];
        }
        // y = F̄⁻ᵀ D w, so ∂L/∂ẋ = 2y
        self.lu.solve_transpose(&mut out.dl_dxdot);
        out.value = value;
        if self.has_derivs {
            // ∂L/∂x_k = −2 yᵀ (∂F̄/∂x_k w + ∂h/∂x_k)
            for k in 0..n {
                let df = &self.dfbar[k * n * n..(k + 1) * n * n];
                let dh = &self.dh[k * n..(k + 1) * n];
                let mut acc = 0.0;
                for i in 0..n {
                    let mut t = dh[i];
                    for j in 0..n {
                        t += df[i + j * n] * out.w[j];
                    }
                    acc += out.dl_dxdot[i] * t;
                }
                out.dl_dx[k] = -2.0 * acc;
            }
        } else {
            out.dl_dx.fill(0.0);
        }
        out.dl_dxdot.iter_mut().for_each(|y| *y *= 2.0);
    }

    /// `out = G⁻¹ v = F̄ D⁻¹ F̄ᵀ v`.
    pub fn apply_inverse_metric(&mut self, weights: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let col = &self.fbar[j * n..(j + 1) * n];
            self.tmp[j] = dot(col, v) / weights[j];
        }
        out.fill(0.0);
        for j in 0..n {
            let c = self.tmp[j];
            let col = &self.fbar[j * n..(j + 1) * n];
            out.iter_mut().zip(col).for_each(|(o, f)| *o += f * c);
        }
    }

    /// G(x) as a dense column-major matrix.
    pub fn metric_matrix(&self, weights: &[f64]) -> Vec<f64> {
        let n = self.n;
        // columns of F̄⁻ᵀ: solve F̄ᵀ z = e_j
        let mut inv_t = vec![0.0; n * n];
        for j in 0..n {
            let col = &mut inv_t[j * n..(j + 1) * n];
            col[j] = 1.0;
            self.lu.solve_transpose(col);
        }
        // G = F̄⁻ᵀ D F̄⁻¹ = Σ_k d_k r_k r_kᵀ with r_k the k-th column of F̄⁻ᵀ
        let mut g = vec![0.0; n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    g[i + j * n] += weights[k] * inv_t[i + k * n] * inv_t[j + k * n];
                }
            }
        }
        g
    }
}

/// Lagrangian value, its gradients and the frame coordinates of the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianEval {
    pub value: f64,
    pub dl_dx: Vec<f64>,
    pub dl_dxdot: Vec<f64>,
    /// `w = F̄⁻¹ (ẋ − h)`: inadmissible part first, admissible inputs last.
    pub w: Vec<f64>,
}

impl LagrangianEval {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            dl_dx: vec![0.0; n],
            dl_dxdot: vec![0.0; n],
            w: vec![0.0; n],
        }
    }
}

/// The penalty weights `D = diag(λ, …, λ, 1, …, 1)` with `n − m` entries λ.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    lambda: f64,
    weights: Vec<f64>,
}

impl Metric {
    pub fn new(system: &AffineSystem, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let (n, m) = (system.n, system.m);
        let weights = (0..n).map(|i| if i < n - m { lambda } else { 1.0 }).collect();
        Ok(Self { lambda, weights })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// G(x). Errors when cond(F̄(x)) exceeds [`MAX_FRAME_CONDITION`].
    pub fn matrix(&self, system: &AffineSystem, x: &[f64]) -> Result<DMatrix<f64>> {
        let frame = system.frame(x)?;
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.weights));
        Ok(frame.fbar_inv.transpose() * d * &frame.fbar_inv)
    }

    /// L(x, ẋ) with both gradients.
    pub fn lagrangian(
        &self,
        system: &AffineSystem,
        x: &[f64],
        xdot: &[f64],
    ) -> Result<LagrangianEval> {
        system.check_dims(x)?;
        system.check_dims(xdot)?;
        let mut node = NodeFrame::new(system);
        system.eval_node(x, true, &mut node)?;
        let mut out = LagrangianEval::zeros(system.n);
        node.lagrangian(&self.weights, xdot, &mut out);
        Ok(out)
    }
}
