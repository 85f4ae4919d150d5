//! Vector-field providers: hand-written closures for the stock systems and an
//! expression-backed provider for user-defined dynamics.

use std::fmt;

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::exprlang::{Expr, Scope};

/// Source of the drift `h(x)` and control matrix `F(x)` of `ẋ = h(x) + F(x)u`.
///
/// All evaluations run over dual numbers so a single call yields both the
/// value and one directional derivative. Matrices are column-major.
pub trait Fields: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn drift(&self, x: &[Dual], out: &mut [Dual]) -> Result<()>;

    /// Writes the n×m control matrix.
    fn control(&self, x: &[Dual], out: &mut [Dual]) -> Result<()>;

    /// Whether [`Fields::complement`] supplies F_c directly.
    fn has_complement(&self) -> bool {
        false
    }

    /// Writes a user-supplied n×(n−m) complement. Only called when
    /// [`Fields::has_complement`] is true.
    fn complement(&self, _x: &[Dual], _out: &mut [Dual]) -> Result<()> {
        Err(Error::InvalidSystem("no supplied complement".into()))
    }

    /// Structural dependence of h, F (and a supplied F_c) on state `k`.
    /// Returning `false` lets derivative passes skip that direction.
    fn depends_on(&self, _k: usize) -> bool {
        true
    }

    fn name(&self) -> String;
}

/// Unicycle with unit forward speed: `ẋ = cos θ`, `ẏ = sin θ`, `θ̇ = u`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unicycle;

impl Fields for Unicycle {
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[Dual], out: &mut [Dual]) -> Result<()> {
        out[0] = x[2].cos();
        out[1] = x[2].sin();
        out[2] = Dual::constant(0.0);
        Ok(())
    }
    fn control(&self, _x: &[Dual], out: &mut [Dual]) -> Result<()> {
        out[0] = Dual::constant(0.0);
        out[1] = Dual::constant(0.0);
        out[2] = Dual::constant(1.0);
        Ok(())
    }
    fn depends_on(&self, k: usize) -> bool {
        k == 2
    }
    fn name(&self) -> String {
        "unicycle".into()
    }
}

/// `ẋ = u` in one dimension.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleIntegrator;

impl Fields for SingleIntegrator {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn drift(&self, _x: &[Dual], out: &mut [Dual]) -> Result<()> {
        out[0] = Dual::constant(0.0);
        Ok(())
    }
    fn control(&self, _x: &[Dual], out: &mut [Dual]) -> Result<()> {
        out[0] = Dual::constant(1.0);
        Ok(())
    }
    fn depends_on(&self, _k: usize) -> bool {
        false
    }
    fn name(&self) -> String {
        "single_integrator".into()
    }
}

/// Kinematic unicycle with speed and turn-rate inputs and no drift.
#[derive(Debug, Clone, Copy, Default)]
pub struct DriftlessUnicycle;

impl Fields for DriftlessUnicycle {
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn drift(&self, _x: &[Dual], out: &mut [Dual]) -> Result<()> {
        out.fill(Dual::constant(0.0));
        Ok(())
    }
    fn control(&self, x: &[Dual], out: &mut [Dual]) -> Result<()> {
        out[0] = x[2].cos();
        out[1] = x[2].sin();
        out[2] = Dual::constant(0.0);
        out[3] = Dual::constant(0.0);
        out[4] = Dual::constant(0.0);
        out[5] = Dual::constant(1.0);
        Ok(())
    }
    fn depends_on(&self, k: usize) -> bool {
        k == 2
    }
    fn name(&self) -> String {
        "driftless_unicycle".into()
    }
}

/// Looks up a stock system by its config name.
pub fn builtin(name: &str) -> Option<std::sync::Arc<dyn Fields>> {
    Some(match name {
        "unicycle" => std::sync::Arc::new(Unicycle),
        "single_integrator" => std::sync::Arc::new(SingleIntegrator),
        "driftless_unicycle" => std::sync::Arc::new(DriftlessUnicycle),
        _ => return None,
    })
}

/// Fields defined by expression strings.
#[derive(Debug, Clone)]
pub struct ExprFields {
    n: usize,
    m: usize,
    drift: Vec<Expr>,
    /// Column-major n×m.
    control: Vec<Expr>,
    /// Column-major n×(n−m).
    complement: Option<Vec<Expr>>,
    deps: Vec<bool>,
}

impl ExprFields {
    /// `control` and `complement` are given row by row, as written in configs.
    pub fn new(
        drift: Vec<Expr>,
        control_rows: Vec<Vec<Expr>>,
        complement_rows: Option<Vec<Vec<Expr>>>,
    ) -> Result<Self> {
        let n = drift.len();
        if n == 0 {
            return Err(Error::InvalidSystem("empty drift".into()));
        }
        if control_rows.len() != n {
            return Err(Error::InvalidSystem(format!(
                "F has {} rows, expected {n}",
                control_rows.len()
            )));
        }
        let m = control_rows[0].len();
        let control = column_major(control_rows, n, m, "F")?;
        let complement = complement_rows
            .map(|rows| {
                if rows.len() != n {
                    return Err(Error::InvalidSystem(format!(
                        "F_c has {} rows, expected {n}",
                        rows.len()
                    )));
                }
                column_major(rows, n, n - m.min(n), "F_c")
            })
            .transpose()?;
        let all: Vec<&Expr> = drift
            .iter()
            .chain(&control)
            .chain(complement.iter().flatten())
            .collect();
        if let Some(k) = all.iter().filter_map(|e| e.max_var()).max() {
            if k >= n {
                return Err(Error::InvalidSystem(format!(
                    "expression references x{} in a {n}-state system",
                    k + 1
                )));
            }
        }
        let deps = (0..n).map(|k| all.iter().any(|e| e.depends_on(k))).collect();
        Ok(Self {
            n,
            m,
            drift,
            control,
            complement,
            deps,
        })
    }

    /// Parses every entry against `scope`.
    pub fn parse(
        scope: &Scope,
        drift: &[String],
        control_rows: &[Vec<String>],
        complement_rows: Option<&[Vec<String>]>,
    ) -> Result<Self> {
        let p = |s: &String| Expr::parse(s, scope);
        let rows = |r: &[Vec<String>]| -> Result<Vec<Vec<Expr>>> {
            Ok(r.iter()
                .map(|row| row.iter().map(p).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?)
        };
        Self::new(
            drift.iter().map(p).collect::<Result<_, _>>()?,
            rows(control_rows)?,
            complement_rows.map(rows).transpose()?,
        )
    }
}

fn column_major(rows: Vec<Vec<Expr>>, n: usize, cols: usize, what: &str) -> Result<Vec<Expr>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidSystem(format!(
            "every row of {what} must have {cols} entries"
        )));
    }
    let mut out = Vec::with_capacity(n * cols);
    for j in 0..cols {
        for row in &rows {
            out.push(row[j].clone());
        }
    }
    Ok(out)
}

fn eval_all(exprs: &[Expr], x: &[Dual], out: &mut [Dual]) -> Result<()> {
    for (o, e) in out.iter_mut().zip(exprs) {
        *o = e.eval_duals(x)?;
    }
    Ok(())
}

impl Fields for ExprFields {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn drift(&self, x: &[Dual], out: &mut [Dual]) -> Result<()> {
        eval_all(&self.drift, x, out)
    }
    fn control(&self, x: &[Dual], out: &mut [Dual]) -> Result<()> {
        eval_all(&self.control, x, out)
    }
    fn has_complement(&self) -> bool {
        self.complement.is_some()
    }
    fn complement(&self, x: &[Dual], out: &mut [Dual]) -> Result<()> {
        match &self.complement {
            Some(c) => eval_all(c, x, out),
            None => Err(Error::InvalidSystem("no supplied complement".into())),
        }
    }
    fn depends_on(&self, k: usize) -> bool {
        self.deps[k]
    }
    fn name(&self) -> String {
        "expression".into()
    }
}
