//! Linearly implicit Rosenbrock (2,3) pair for stiff method-of-lines systems
//! whose Jacobian couples each node only to a few neighbours.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

use super::stepper::StepInfo;
use crate::error::{Error, Result};

const SAFETY: f64 = 0.8;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Node-blocked sparsity: entry (i, j) of the Jacobian may be nonzero only
/// when the nodes of i and j are at most `reach` apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stencil {
    pub block: usize,
    pub nodes: usize,
    pub reach: usize,
}

impl Stencil {
    fn len(&self) -> usize {
        self.block * self.nodes
    }

    fn rows_of(&self, node: usize) -> std::ops::Range<usize> {
        let lo = node.saturating_sub(self.reach);
        let hi = (node + self.reach + 1).min(self.nodes);
        lo * self.block..hi * self.block
    }
}

/// Rosenbrock method of Shampine and Reichelt: second order, L-stable, with
/// a third-order error estimate. The Jacobian is rebuilt by coloured finite
/// differences at every step start and factored by a sparse LU.
pub struct Rosenbrock23 {
    pub rtol: f64,
    pub atol: f64,
    stencil: Stencil,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Jacobian values in the CSC pattern.
    jac: Vec<f64>,
    /// `I − h d J` values in the CSC pattern.
    w: Vec<f64>,
    diag: Vec<usize>,
    symbolic: SymbolicLu<usize>,
    jac_valid: bool,
    f0: Vec<f64>,
    fsal: bool,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl std::fmt::Debug for Rosenbrock23 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Rosenbrock23")
            .field("rtol", &self.rtol)
            .field("atol", &self.atol)
            .field("stencil", &self.stencil)
            .finish_non_exhaustive()
    }
}

impl Rosenbrock23 {
    pub fn new(stencil: Stencil, rtol: f64, atol: f64) -> Result<Self> {
        let len = stencil.len();
        let mut col_ptr = Vec::with_capacity(len + 1);
        let mut row_idx = Vec::new();
        let mut diag = Vec::with_capacity(len);
        col_ptr.push(0);
        for col in 0..len {
            for row in stencil.rows_of(col / stencil.block) {
                if row == col {
                    diag.push(row_idx.len());
                }
                row_idx.push(row);
            }
            col_ptr.push(row_idx.len());
        }
        let sym = SymbolicSparseColMatRef::new_checked(len, len, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLu::try_new(sym)
            .map_err(|e| Error::InvalidArgument(format!("sparse LU setup failed: {e:?}")))?;
        let nnz = row_idx.len();
        let v = || vec![0.0; len];
        Ok(Self {
            rtol,
            atol,
            stencil,
            col_ptr,
            row_idx,
            jac: vec![0.0; nnz],
            w: vec![0.0; nnz],
            diag,
            symbolic,
            jac_valid: false,
            f0: v(),
            fsal: false,
            k1: v(),
            k2: v(),
            k3: v(),
            f1: v(),
            f2: v(),
            stage: v(),
            y_new: v(),
        })
    }

    pub fn invalidate(&mut self) {
        self.fsal = false;
        self.jac_valid = false;
    }

    /// f(y) at the current state after an accepted step.
    pub fn derivative(&self) -> Option<&[f64]> {
        self.fsal.then_some(self.f0.as_slice())
    }

    pub fn set_derivative(&mut self, dy: &[f64]) {
        self.f0.copy_from_slice(dy);
        self.fsal = true;
    }

    /// Finite-difference Jacobian at `y`, one rhs call per colour.
    fn jacobian<F>(&mut self, f: &mut F, y: &[f64]) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let Stencil { block, nodes, reach } = self.stencil;
        let stride = 2 * reach + 1;
        let mut pert = y.to_vec();
        let mut fp = vec![0.0; y.len()];
        for phase in 0..stride.min(nodes) {
            for comp in 0..block {
                let mut steps = Vec::new();
                for node in (phase..nodes).step_by(stride) {
                    let col = node * block + comp;
                    let d = f64::EPSILON.sqrt() * y[col].abs().max(1.0);
                    pert[col] = y[col] + d;
                    steps.push((col, pert[col] - y[col]));
                }
                f(&pert, &mut fp)?;
                for &(col, d) in &steps {
                    pert[col] = y[col];
                    for p in self.col_ptr[col]..self.col_ptr[col + 1] {
                        let row = self.row_idx[p];
                        self.jac[p] = (fp[row] - self.f0[row]) / d;
                    }
                }
            }
        }
        self.jac_valid = true;
        Ok(())
    }

    fn factor(&mut self, h: f64) -> Option<Lu<usize, f64>> {
        let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
        for (w, j) in self.w.iter_mut().zip(&self.jac) {
            *w = -h * d * j;
        }
        for &p in &self.diag {
            self.w[p] += 1.0;
        }
        let len = self.stencil.len();
        let sym = SymbolicSparseColMatRef::new_checked(len, len, &self.col_ptr, None, &self.row_idx);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), SparseColMatRef::new(sym, &self.w)).ok()?;
        Some(lu)
    }

    /// Attempts a step of size `h`, updating `y` in place on acceptance.
    pub fn attempt<F>(&mut self, f: &mut F, y: &mut [f64], h: f64) -> Result<StepInfo>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let len = y.len();
        if !self.fsal {
            f(y, &mut self.f0)?;
            self.fsal = true;
        }
        if !self.jac_valid {
            self.jacobian(f, y)?;
        }
        let Some(lu) = self.factor(h) else {
            return Ok(reject(h, f64::INFINITY));
        };
        let solve = |v: &mut [f64]| lu.solve_in_place(MatMut::from_column_major_slice_mut(v, len, 1));

        self.k1.copy_from_slice(&self.f0);
        solve(&mut self.k1);
        for i in 0..len {
            self.stage[i] = y[i] + 0.5 * h * self.k1[i];
        }
        if f(&self.stage, &mut self.f1).is_err() {
            return Ok(reject(h, f64::INFINITY));
        }
        for i in 0..len {
            self.k2[i] = self.f1[i] - self.k1[i];
        }
        solve(&mut self.k2);
        for i in 0..len {
            self.k2[i] += self.k1[i];
            self.y_new[i] = y[i] + h * self.k2[i];
        }
        if f(&self.y_new, &mut self.f2).is_err() {
            return Ok(reject(h, f64::INFINITY));
        }
        let e32 = 6.0 + std::f64::consts::SQRT_2;
        for i in 0..len {
            self.k3[i] = self.f2[i] - e32 * (self.k2[i] - self.f1[i]) - 2.0 * (self.k1[i] - self.f0[i]);
        }
        solve(&mut self.k3);

        let mut sum = 0.0;
        let mut raw: f64 = 0.0;
        for i in 0..len {
            let e = h / 6.0 * (self.k1[i] - 2.0 * self.k2[i] + self.k3[i]);
            raw = raw.max(e.abs());
            let sk = self.atol + self.rtol * y[i].abs().max(self.y_new[i].abs());
            sum += (e / sk) * (e / sk);
        }
        let err = (sum / len.max(1) as f64).sqrt();
        if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
            return Ok(reject(h, err));
        }
        let fac = (SAFETY * err.max(1e-10).powf(-1.0 / 3.0)).clamp(FAC_MIN, FAC_MAX);
        if err <= 1.0 {
            y.copy_from_slice(&self.y_new);
            std::mem::swap(&mut self.f0, &mut self.f2);
            self.jac_valid = false;
            Ok(StepInfo {
                h,
                accepted: true,
                error: err,
                raw_error: raw,
                h_next: h * fac,
            })
        } else {
            Ok(StepInfo {
                h,
                accepted: false,
                error: err,
                raw_error: raw,
                h_next: h * fac.min(0.5),
            })
        }
    }
}

fn reject(h: f64, err: f64) -> StepInfo {
    StepInfo {
        h,
        accepted: false,
        error: err,
        raw_error: f64::INFINITY,
        h_next: 0.25 * h,
    }
}
