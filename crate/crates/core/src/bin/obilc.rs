use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use obilc::harness::{self, exit_code, Options, PlotKind};

#[derive(Parser)]
#[command(name = "obilc", version, about = "Optimization-based iterative learning control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel runs for sweep and compare-models.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Suppress per-iteration progress on stderr.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            out: self.out.clone(),
            seed: self.seed,
            max_iter: self.max_iter,
            workers: self.workers,
            quiet: self.quiet,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Single learning run with the first listed surrogate.
    Run(Common),
    /// One run per step-size decay exponent.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma separated decay exponents; overrides [sweep] c_values.
        #[arg(long, value_delimiter = ',')]
        c_values: Option<Vec<f64>>,
        /// Comma separated iterations reported in sweep.csv.
        #[arg(long, value_delimiter = ',')]
        iterations: Option<Vec<usize>>,
    },
    /// One run per listed surrogate with identical seeds.
    CompareModels(Common),
    /// Plot-ready CSV from a run directory.
    Plotdata {
        /// records.jsonl of the run.
        #[arg(long)]
        records: PathBuf,
        /// convergence, deviation_time or xy_detail.
        #[arg(long)]
        kind: PlotKind,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(c) => match harness::cmd_run(&c.config, &c.options()) {
            Ok(s) => {
                if !c.quiet {
                    eprintln!(
                        "terminated by {} after {} iterations, final rms {:.3} um",
                        s.termination,
                        s.iterations,
                        s.final_rms_um.unwrap_or(f64::NAN)
                    );
                }
                0
            }
            Err(e) => report(&e),
        },
        Command::Sweep {
            common,
            c_values,
            iterations,
        } => match harness::cmd_sweep(&common.config, c_values.as_deref(), iterations.as_deref(), &common.options()) {
            Ok(b) => b.exit_code(),
            Err(e) => report(&e),
        },
        Command::CompareModels(c) => match harness::cmd_compare_models(&c.config, &c.options()) {
            Ok(b) => b.exit_code(),
            Err(e) => report(&e),
        },
        Command::Plotdata {
            records,
            kind,
            out,
            quiet,
        } => match harness::plotdata(&records, kind, out.as_deref()) {
            Ok(path) => {
                if !quiet {
                    eprintln!("wrote {}", path.display());
                }
                0
            }
            Err(e) => report(&e),
        },
    };
    ExitCode::from(code as u8)
}

fn report(e: &obilc::Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}
