use std::path::PathBuf;
use std::process::ExitCode;

use aghf::cli::{self, BenchOptions, SweepParam};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aghf", version, about = "Motion planning for affine systems with drift")]
struct Args {
    /// Directory for output files (default: the config's `output.dir`, else `.`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads for sweeps (default: number of processors).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan one problem and write summary, control, path and action files.
    Solve { config: PathBuf },
    /// Plan once per parameter value and write sweep.csv.
    Sweep {
        config: PathBuf,
        /// `T` (fixed-time configs only) or `lambda`.
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Built-in benchmarks.
    Bench {
        #[command(subcommand)]
        which: Bench,
    },
}

#[derive(Debug, Subcommand)]
enum Bench {
    /// Free-time unicycle parking against the two half-circle heuristic.
    Unicycle {
        #[arg(long, default_value_t = 1000.0)]
        lambda: f64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        s_max: f64,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> aghf::Result<()> {
    match args.command {
        Command::Solve { config } => {
            let problem = cli::load_config(&config)?;
            let dir = cli::output_dir(&problem, args.out_dir.as_deref());
            let (summary, files) = cli::cmd_solve(&problem, &dir)?;
            if !args.quiet {
                println!(
                    "T = {:.6}  E = {:.6}  max endpoint error = {:.3e}  converged = {}  s = {}",
                    summary.t,
                    summary.e,
                    summary.max_endpoint_error(),
                    summary.converged,
                    summary.s_final
                );
                println!("wrote {}", files.summary.display());
            }
        }
        Command::Sweep { config, param, values } => {
            let problem = cli::load_config(&config)?;
            let dir = cli::output_dir(&problem, args.out_dir.as_deref());
            let rows = cli::cmd_sweep(&problem, param, &values, args.workers.unwrap_or(0))?;
            std::fs::create_dir_all(&dir)?;
            let file = dir.join("sweep.csv");
            cli::write_sweep_csv(&rows, &file)?;
            if !args.quiet {
                println!("{:>10} {:>10} {:>10} {:>14} {:>10}", "value", "T", "E", "max endpoint", "converged");
                for r in &rows {
                    match &r.error {
                        None => println!(
                            "{:>10} {:>10.4} {:>10.4} {:>14.3e} {:>10}",
                            r.value,
                            r.t.unwrap_or(f64::NAN),
                            r.e.unwrap_or(f64::NAN),
                            r.max_endpoint_error.unwrap_or(f64::NAN),
                            r.converged.unwrap_or(false)
                        ),
                        Some(e) => println!("{:>10} failed: {e}", r.value),
                    }
                }
                println!("wrote {}", file.display());
            }
        }
        Command::Bench {
            which: Bench::Unicycle { lambda, n, s_max },
        } => {
            let report = cli::cmd_bench_unicycle(&BenchOptions { lambda, n, s_max });
            if !args.quiet {
                println!("{report}");
            }
        }
    }
    Ok(())
}
