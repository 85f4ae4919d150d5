//! JSON problem configuration, `schema: 1`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AffineSystem, ExprFields};
use crate::error::{Error, Result};
use crate::exprlang::Scope;
use crate::extraction::{Horizon, PlanOptions};
use crate::flow::{BoundarySpec, EndCondition, Integrator, SolveOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema: u32,
    pub system: SystemConfig,
    pub boundary: Vec<BoundaryRow>,
    pub mode: Mode,
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemConfig {
    Builtin(String),
    Expr(ExprSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprSystem {
    pub n: usize,
    pub m: usize,
    /// Extra names for state variables, mapped to 1-based indices.
    #[serde(default)]
    pub aliases: BTreeMap<String, usize>,
    pub h: Vec<String>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<String>>,
    #[serde(rename = "F_c", default)]
    pub f_c: Option<Vec<Vec<String>>>,
}

/// One state component: a number pins the end, `{"free": hint}` frees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryRow {
    pub start: BoundValue,
    pub end: BoundValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundValue {
    Fixed(f64),
    Free { free: Option<f64> },
    Word(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FixedTime {
        #[serde(rename = "T")]
        t: f64,
    },
    FreeTime {
        #[serde(rename = "T_g")]
        t_g: f64,
        #[serde(default = "one")]
        a_g_start: f64,
        #[serde(default = "one")]
        a_g_end: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "one")]
    pub s_max: f64,
    #[serde(default)]
    pub rhs_tol: Option<f64>,
    #[serde(default)]
    pub snapshot_s: Vec<f64>,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub rtol: Option<f64>,
    #[serde(default)]
    pub atol: Option<f64>,
    #[serde(default)]
    pub integration_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub summary: String,
    pub control: String,
    pub path: String,
    pub action: String,
    pub snapshot_prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            summary: "summary.json".into(),
            control: "control.csv".into(),
            path: "path.csv".into(),
            action: "action.csv".into(),
            snapshot_prefix: "snapshot".into(),
        }
    }
}

/// A validated configuration with its system and boundary spec built.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub system: AffineSystem,
    pub bcs: BoundarySpec,
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

pub fn load_config(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Problem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(path, e.into_inner().to_string())
    })?;
    Problem::new(config)
}

impl Problem {
    pub fn new(config: ProblemConfig) -> Result<Self> {
        if config.schema != SCHEMA_VERSION {
            return Err(config_err(
                "schema",
                format!("unsupported schema {}, expected {SCHEMA_VERSION}", config.schema),
            ));
        }
        let system = build_system(&config.system)?;
        let n = system.state_dim();
        if config.boundary.len() != n {
            return Err(config_err(
                "boundary",
                format!("{} rows for a {n}-state system", config.boundary.len()),
            ));
        }
        let mut bcs = BoundarySpec::new(Vec::with_capacity(n));
        for (k, row) in config.boundary.iter().enumerate() {
            let cond = |v: &BoundValue, end: &str| -> Result<EndCondition> {
                let at = format!("boundary[{k}].{end}");
                match *v {
                    BoundValue::Fixed(x) if x.is_finite() => Ok(EndCondition::Fixed(x)),
                    BoundValue::Fixed(_) => Err(config_err(at, "value must be finite")),
                    BoundValue::Free { free: Some(h) } if h.is_finite() => Ok(EndCondition::free(h)),
                    BoundValue::Free { .. } => Err(config_err(
                        at,
                        format!("component x{} is free but has no finite hint", k + 1),
                    )),
                    BoundValue::Word(ref w) if w == "free" => Err(config_err(
                        at,
                        format!("component x{} is free but has no hint; write {{\"free\": <hint>}}", k + 1),
                    )),
                    BoundValue::Word(ref w) => Err(config_err(at, format!("expected a number or {{\"free\": <hint>}}, got `{w}`"))),
                }
            };
            bcs.push(cond(&row.start, "start")?, cond(&row.end, "end")?);
        }

        let s = &config.solver;
        if !(s.lambda > 0.0 && s.lambda.is_finite()) {
            return Err(config_err("solver.lambda", "must be positive"));
        }
        if s.n < 8 {
            return Err(config_err("solver.N", "must be at least 8"));
        }
        if !(s.s_max > 0.0 && s.s_max.is_finite()) {
            return Err(config_err("solver.s_max", "must be positive"));
        }
        if s.rhs_tol.is_some_and(|t| !(t >= 0.0)) {
            return Err(config_err("solver.rhs_tol", "must be nonnegative"));
        }
        if let Some(i) = s.snapshot_s.iter().position(|&v| !(v >= 0.0 && v <= s.s_max)) {
            return Err(config_err(format!("solver.snapshot_s[{i}]"), "must lie in [0, s_max]"));
        }
        for (name, v) in [("solver.rtol", s.rtol), ("solver.atol", s.atol)] {
            if v.is_some_and(|t| !(t > 0.0)) {
                return Err(config_err(name, "must be positive"));
            }
        }
        if s.integration_steps == Some(0) {
            return Err(config_err("solver.integration_steps", "must be positive"));
        }
        match config.mode {
            Mode::FixedTime { t } if !(t > 0.0 && t.is_finite()) => {
                return Err(config_err("mode.fixed_time.T", "must be positive"));
            }
            Mode::FreeTime { t_g, a_g_start, a_g_end } => {
                if !(t_g > 0.0 && t_g.is_finite()) {
                    return Err(config_err("mode.free_time.T_g", "must be positive"));
                }
                for (name, a) in [("a_g_start", a_g_start), ("a_g_end", a_g_end)] {
                    if !(a.is_finite() && a != 0.0) {
                        return Err(config_err(format!("mode.free_time.{name}"), "must be finite and nonzero"));
                    }
                }
            }
            _ => {}
        }
        Ok(Self { config, system, bcs })
    }

    pub fn plan_options(&self) -> PlanOptions {
        let s = &self.config.solver;
        let horizon = match self.config.mode {
            Mode::FixedTime { t } => Horizon::Fixed { t },
            Mode::FreeTime { t_g, a_g_start, a_g_end } => Horizon::Free {
                t_guess: t_g,
                a_start: a_g_start,
                a_end: a_g_end,
            },
        };
        let defaults = SolveOptions::default();
        let mut snapshots = s.snapshot_s.clone();
        snapshots.sort_by(f64::total_cmp);
        snapshots.dedup();
        PlanOptions {
            lambda: s.lambda,
            intervals: s.n,
            horizon,
            solve: SolveOptions {
                s_max: s.s_max,
                rhs_tol: s.rhs_tol,
                snapshots,
                integrator: s.integrator,
                rtol: s.rtol.unwrap_or(defaults.rtol),
                atol: s.atol.unwrap_or(defaults.atol),
                ..defaults
            },
            integration_steps: s.integration_steps,
        }
    }
}

fn build_system(cfg: &SystemConfig) -> Result<AffineSystem> {
    match cfg {
        SystemConfig::Builtin(name) => {
            AffineSystem::builtin(name).map_err(|e| config_err("system", e.to_string()))
        }
        SystemConfig::Expr(e) => {
            if e.n == 0 {
                return Err(config_err("system.n", "must be positive"));
            }
            if e.m == 0 || e.m >= e.n {
                return Err(config_err(
                    "system.m",
                    format!("need 0 < m < n, got m = {} with n = {}", e.m, e.n),
                ));
            }
            if e.h.len() != e.n {
                return Err(config_err("system.h", format!("{} entries, expected {}", e.h.len(), e.n)));
            }
            check_rows(&e.f, e.n, e.m, "system.F")?;
            if let Some(fc) = &e.f_c {
                check_rows(fc, e.n, e.n - e.m, "system.F_c")?;
            }
            let mut scope = Scope::new(e.n);
            for (name, &idx) in &e.aliases {
                scope = scope
                    .with_alias(name, idx)
                    .map_err(|err| config_err(format!("system.aliases.{name}"), err.to_string()))?;
            }
            let parse = |s: &str, at: String| {
                crate::exprlang::Expr::parse(s, &scope).map_err(|err| config_err(at, err.to_string()))
            };
            let h = e
                .h
                .iter()
                .enumerate()
                .map(|(i, s)| parse(s, format!("system.h[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            let rows = |rows: &[Vec<String>], name: &str| {
                rows.iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, s)| parse(s, format!("{name}[{i}][{j}]")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            };
            let f = rows(&e.f, "system.F")?;
            let f_c = e.f_c.as_deref().map(|fc| rows(fc, "system.F_c")).transpose()?;
            let fields = ExprFields::new(h, f, f_c).map_err(|err| config_err("system", err.to_string()))?;
            AffineSystem::new(Arc::new(fields)).map_err(|err| config_err("system", err.to_string()))
        }
    }
}

fn check_rows(rows: &[Vec<String>], n: usize, cols: usize, name: &str) -> Result<()> {
    if rows.len() != n {
        return Err(config_err(name, format!("{} rows, expected {n}", rows.len())));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(config_err(
            format!("{name}[{i}]"),
            format!("{} entries, expected {cols}", rows[i].len()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNICYCLE: &str = r#"{
        "schema": 1,
        "system": "unicycle",
        "boundary": [
            {"start": 0, "end": 0},
            {"start": 0, "end": 1},
            {"start": 0, "end": 0}
        ],
        "mode": {"free_time": {"T_g": 10, "a_g_start": 1, "a_g_end": 1}},
        "solver": {"lambda": 1000, "N": 200}
    }"#;

    fn with(patch: impl FnOnce(&mut serde_json::Value)) -> Result<Problem> {
        let mut v: serde_json::Value = serde_json::from_str(UNICYCLE).unwrap();
        patch(&mut v);
        parse_config(&v.to_string())
    }

    fn path_of(r: Result<Problem>) -> String {
        match r {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_the_benchmark() {
        let p = parse_config(UNICYCLE).unwrap();
        assert_eq!(p.system.state_dim(), 3);
        assert_eq!(p.config.solver.s_max, 1.0);
        let o = p.plan_options();
        assert_eq!(o.lambda, 1000.0);
        assert!(matches!(o.horizon, Horizon::Free { t_guess, .. } if t_guess == 10.0));
    }

    #[test]
    fn expression_system_matches_builtin() {
        let p = with(|v| {
            v["system"] = serde_json::json!({
                "n": 3, "m": 1, "aliases": {"theta": 3},
                "h": ["cos(theta)", "sin(theta)", "0"],
                "F": [["0"], ["0"], ["1"]]
            });
        })
        .unwrap();
        let b = AffineSystem::builtin("unicycle").unwrap();
        let x = [0.3, -0.2, 0.9];
        assert_eq!(p.system.drift(&x).unwrap(), b.drift(&x).unwrap());
    }

    #[test]
    fn rejects_square_expression_systems() {
        let r = with(|v| {
            v["system"] = serde_json::json!({"n": 1, "m": 1, "h": ["0"], "F": [["1"]]});
            v["boundary"] = serde_json::json!([{"start": 0, "end": 1}]);
        });
        assert_eq!(path_of(r), "system.m");
    }

    #[test]
    fn missing_hint_names_the_component() {
        let r = with(|v| v["boundary"][2]["end"] = serde_json::json!("free"));
        match r {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "boundary[2].end");
                assert!(message.contains("x3"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let r = with(|v| v["boundary"][0]["start"] = serde_json::json!({"free": null}));
        assert_eq!(path_of(r), "boundary[0].start");
    }

    #[test]
    fn expression_errors_carry_path_and_offset() {
        let r = with(|v| {
            v["system"] = serde_json::json!({
                "n": 3, "m": 1,
                "h": ["cos(x3)", "sin(x3) +", "0"],
                "F": [["0"], ["0"], ["1"]]
            });
        });
        match r {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "system.h[1]");
                assert!(message.contains("offset"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_field_paths() {
        assert_eq!(path_of(with(|v| v["solver"]["lambda"] = serde_json::json!("big"))), "solver.lambda");
        assert_eq!(path_of(with(|v| v["solver"]["lambda"] = serde_json::json!(-1.0))), "solver.lambda");
        assert_eq!(path_of(with(|v| v["solver"]["N"] = serde_json::json!(4))), "solver.N");
        assert_eq!(path_of(with(|v| v["schema"] = serde_json::json!(2))), "schema");
        assert_eq!(path_of(with(|v| v["mode"] = serde_json::json!({"free_time": {"T_g": -1}}))), "mode.free_time.T_g");
        let r = with(|v| v["boundary"].as_array_mut().unwrap().pop().map(|_| ()).unwrap());
        assert_eq!(path_of(r), "boundary");
        assert_eq!(path_of(with(|v| v["system"] = serde_json::json!("bicycle"))), "system");
    }
}
