//! Command implementations behind the `aghf` binary: solve, sweep and the
//! unicycle parking benchmark.

mod config;

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    load_config, parse_config, BoundValue, BoundaryRow, ExprSystem, Mode, OutputConfig, Problem, ProblemConfig,
    SolverConfig, SystemConfig, SCHEMA_VERSION,
};

use crate::error::{Error, Result};
use crate::extraction::{plan, PlanResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentError {
    /// 1-based state index.
    pub component: usize,
    pub error: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub endpoint_errors: Vec<ComponentError>,
    pub converged: bool,
    pub s_final: f64,
    pub wall_ms: u64,
    pub schema: u32,
}

impl RunSummary {
    pub fn max_endpoint_error(&self) -> f64 {
        self.endpoint_errors.iter().map(|e| e.error).fold(0.0, f64::max)
    }
}

/// Runs the planning pipeline for a validated problem.
pub fn run(problem: &Problem) -> Result<(PlanResult, RunSummary)> {
    let start = Instant::now();
    let result = plan(&problem.system, &problem.bcs, &problem.plan_options())?;
    let summary = RunSummary {
        t: result.terminal_time,
        e: result.energy,
        endpoint_errors: result
            .endpoint_errors
            .iter()
            .map(|e| ComponentError {
                component: e.component + 1,
                error: e.error,
            })
            .collect(),
        converged: result.report.converged,
        s_final: result.report.s_final,
        wall_ms: start.elapsed().as_millis() as u64,
        schema: SCHEMA_VERSION,
    };
    Ok((result, summary))
}

/// Output directory: the override, else the config's, else the current one.
pub fn output_dir(problem: &Problem, overridden: Option<&Path>) -> PathBuf {
    overridden
        .map(Path::to_path_buf)
        .or_else(|| problem.config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Files written by [`cmd_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub summary: PathBuf,
    pub control: PathBuf,
    pub path: PathBuf,
    pub action: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub snapshot_index: Option<PathBuf>,
}

pub fn cmd_solve(problem: &Problem, out_dir: &Path) -> Result<(RunSummary, Artifacts)> {
    let (result, summary) = run(problem)?;
    std::fs::create_dir_all(out_dir)?;
    let out = &problem.config.output;
    let artifacts = Artifacts {
        summary: out_dir.join(&out.summary),
        control: out_dir.join(&out.control),
        path: out_dir.join(&out.path),
        action: out_dir.join(&out.action),
        snapshots: (0..result.report.snapshots.len())
            .map(|k| out_dir.join(format!("{}_{k:03}.csv", out.snapshot_prefix)))
            .collect(),
        snapshot_index: (!result.report.snapshots.is_empty())
            .then(|| out_dir.join(format!("{}_index.csv", out.snapshot_prefix))),
    };

    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    std::fs::write(&artifacts.summary, json)?;

    let m = result.control.dim();
    let mut w = csv_writer(&artifacts.control)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|j| format!("u{j}")));
    w.write_record(&header)?;
    for k in 0..result.control.samples() {
        let mut row = vec![result.control.time(k).to_string()];
        row.extend(result.control.sample(k).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;

    let n = result.path.dim();
    let mut w = csv_writer(&artifacts.path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for k in 0..result.path.len() {
        let mut row = vec![result.path.times[k].to_string()];
        row.extend(result.path.state(k).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv_writer(&artifacts.action)?;
    w.write_record(["s", "A"])?;
    for (s, a) in &result.report.action_history {
        w.write_record([s.to_string(), a.to_string()])?;
    }
    w.flush()?;

    for (curve, file) in result.report.snapshots.iter().zip(&artifacts.snapshots) {
        curve.write_csv(BufWriter::new(File::create(file)?))?;
    }
    if let Some(index) = &artifacts.snapshot_index {
        let mut w = csv_writer(index)?;
        w.write_record(["index", "s", "A", "file"])?;
        for (k, (curve, a)) in result.report.snapshots.iter().zip(&result.snapshot_actions).enumerate() {
            let file = artifacts.snapshots[k].file_name().unwrap_or_default().to_string_lossy();
            w.write_record([k.to_string(), curve.s.to_string(), a.to_string(), file.into_owned()])?;
        }
        w.flush()?;
    }
    Ok((summary, artifacts))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "T")]
    T,
    #[serde(rename = "lambda")]
    Lambda,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" => Ok(Self::T),
            "lambda" => Ok(Self::Lambda),
            other => Err(Error::Config {
                path: "param".into(),
                message: format!("unknown sweep parameter `{other}`, expected T or lambda"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    #[serde(rename = "E")]
    pub e: Option<f64>,
    pub max_endpoint_error: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

/// One plan per value on a pool of `workers` threads (0 picks the number of
/// processors). Rows come back in input order; failures stay in their row.
pub fn cmd_sweep(problem: &Problem, param: SweepParam, values: &[f64], workers: usize) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config {
            path: "values".into(),
            message: "sweep needs at least one value".into(),
        });
    }
    if param == SweepParam::T && !matches!(problem.config.mode, Mode::FixedTime { .. }) {
        return Err(Error::Config {
            path: "mode".into(),
            message: "a T sweep needs fixed_time mode".into(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let row = |&value: &f64| {
        let mut config = problem.config.clone();
        match param {
            SweepParam::T => config.mode = Mode::FixedTime { t: value },
            SweepParam::Lambda => config.solver.lambda = value,
        }
        let outcome = Problem::new(config).and_then(|p| run(&p));
        match outcome {
            Ok((_, s)) => SweepRow {
                value,
                t: Some(s.t),
                e: Some(s.e),
                max_endpoint_error: Some(s.max_endpoint_error()),
                converged: Some(s.converged),
                error: None,
            },
            Err(e) => SweepRow {
                value,
                t: None,
                e: None,
                max_endpoint_error: None,
                converged: None,
                error: Some(e.to_string()),
            },
        }
    };
    Ok(pool.install(|| values.par_iter().map(row).collect()))
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["value", "T", "E", "max_endpoint_error", "converged", "error"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.value.to_string(),
            opt(r.t),
            opt(r.e),
            opt(r.max_endpoint_error),
            r.converged.map(|c| c.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-form parking manoeuvre: two half circles of radius 1/4 at unit
/// speed, turning at u = ±4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heuristic {
    pub t: f64,
    pub e: f64,
}

pub fn heuristic() -> Heuristic {
    let t = FRAC_PI_2;
    Heuristic { t, e: 16.0 * t }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub lambda: f64,
    pub n: usize,
    pub s_max: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            lambda: 1000.0,
            n: 200,
            s_max: 1.0,
        }
    }
}

pub const BENCH_T_RANGE: (f64, f64) = (1.30, 1.52);
pub const BENCH_E_RANGE: (f64, f64) = (19.5, 23.0);
pub const BENCH_MAX_ENDPOINT_ERROR: f64 = 0.05;

/// Free-time parking of the unicycle from (0,0,0) to (0,1,0).
pub fn benchmark_config(opts: &BenchOptions) -> ProblemConfig {
    let row = |a: f64, b: f64| BoundaryRow {
        start: BoundValue::Fixed(a),
        end: BoundValue::Fixed(b),
    };
    ProblemConfig {
        schema: SCHEMA_VERSION,
        system: SystemConfig::Builtin("unicycle".into()),
        boundary: vec![row(0.0, 0.0), row(0.0, 1.0), row(0.0, 0.0)],
        mode: Mode::FreeTime {
            t_g: 10.0,
            a_g_start: 1.0,
            a_g_end: 1.0,
        },
        solver: SolverConfig {
            lambda: opts.lambda,
            n: opts.n,
            s_max: opts.s_max,
            rhs_tol: Some(0.0),
            snapshot_s: Vec::new(),
            integrator: Default::default(),
            rtol: None,
            atol: None,
            integration_steps: None,
        },
        output: OutputConfig::default(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub options: BenchOptions,
    pub ours: Option<RunSummary>,
    pub failure: Option<String>,
    pub heuristic: Heuristic,
    pub checks: Vec<Check>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.ours.is_some() && self.checks.iter().all(|c| c.pass)
    }
}

pub fn cmd_bench_unicycle(opts: &BenchOptions) -> BenchReport {
    let heur = heuristic();
    let outcome = Problem::new(benchmark_config(opts)).and_then(|p| run(&p));
    let (ours, failure) = match outcome {
        Ok((_, s)) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut checks = Vec::new();
    if let Some(s) = &ours {
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        let err = s.max_endpoint_error();
        checks.push(Check {
            name: "terminal time",
            pass: within(s.t, BENCH_T_RANGE),
            detail: format!("T = {:.4} in [{}, {}]", s.t, BENCH_T_RANGE.0, BENCH_T_RANGE.1),
        });
        checks.push(Check {
            name: "energy",
            pass: within(s.e, BENCH_E_RANGE),
            detail: format!("E = {:.4} in [{}, {}]", s.e, BENCH_E_RANGE.0, BENCH_E_RANGE.1),
        });
        checks.push(Check {
            name: "endpoint error",
            pass: err < BENCH_MAX_ENDPOINT_ERROR,
            detail: format!("max error {err:.3e} < {BENCH_MAX_ENDPOINT_ERROR}"),
        });
        checks.push(Check {
            name: "faster than heuristic",
            pass: s.t < heur.t,
            detail: format!("{:.4} < {:.4}", s.t, heur.t),
        });
        checks.push(Check {
            name: "cheaper than heuristic",
            pass: s.e < heur.e,
            detail: format!("{:.4} < {:.4}", s.e, heur.e),
        });
    }
    BenchReport {
        options: *opts,
        ours,
        failure,
        heuristic: heur,
        checks,
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.options;
        writeln!(f, "unicycle parking, free terminal time (lambda = {}, N = {}, s_max = {})", o.lambda, o.n, o.s_max)?;
        writeln!(f, "{:<10} {:>10} {:>10} {:>14} {:>10}", "", "T", "E", "max endpoint", "converged")?;
        match &self.ours {
            Some(s) => writeln!(
                f,
                "{:<10} {:>10.4} {:>10.4} {:>14.3e} {:>10}",
                "ours",
                s.t,
                s.e,
                s.max_endpoint_error(),
                s.converged
            )?,
            None => writeln!(f, "{:<10} failed: {}", "ours", self.failure.as_deref().unwrap_or("unknown"))?,
        }
        writeln!(
            f,
            "{:<10} {:>10.4} {:>10.4} {:>14} {:>10}",
            "heuristic", self.heuristic.t, self.heuristic.e, "0", "-"
        )?;
        for c in &self.checks {
            writeln!(f, "  [{}] {}: {}", if c.pass { "ok" } else { "fail" }, c.name, c.detail)?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}
