//! Command-line front end for `metilt`: validate, split and tilt ME models,
//! simulate the doubled jump process and write signed Monte-Carlo estimates.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod error;
pub mod files;
pub mod reproduce;

pub use error::CliError;
pub use files::{EstimatorChoice, GridSpec, HSpec, LambdaField, ModelFile, RunConfig};
pub use reproduce::ReproduceOptions;

#[derive(Debug, Parser)]
#[command(
    name = "metilt",
    version,
    about = "Tilted matrix-exponential distributions as signed jump processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a model defines a probability density.
    Validate { model: PathBuf },
    /// Print the sign split, doubled generator and exit profile.
    Split {
        model: PathBuf,
        /// Tilting rate, a number or "auto".
        #[arg(long, default_value = "auto")]
        lambda: LambdaField,
        /// Write the full generator as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print (or write) the normalized tilted model as JSON.
    Tilt {
        model: PathBuf,
        #[arg(long, default_value = "auto")]
        lambda: LambdaField,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the tilted density on a grid and write CSV.
    Estimate {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the jump trace of path 0.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Estimate an untilted expectation E[h(X)].
    Expect {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every check on the built-in reference model.
    ReproduceExample {
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chunk: Option<usize>,
        #[arg(long)]
        lambda: Option<LambdaField>,
    },
}

/// Flags override values from `--config`, which override defaults.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<LambdaField>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chunk: Option<usize>,
    /// min:max:bins
    #[arg(long)]
    grid: Option<GridSpec>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorChoice>,
    /// exp-decay:C or poly-exp-decay:K:C
    #[arg(long)]
    h: Option<HSpec>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => files::load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.paths {
            cfg.n_paths = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.chunk {
            cfg.chunk = v;
        }
        if let Some(v) = self.grid {
            cfg.grid = v;
        }
        if let Some(v) = self.estimator {
            cfg.estimator = v;
        }
        if self.h.is_some() {
            cfg.h = self.h;
        }
        Ok(cfg)
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Validate { model } => commands::cmd_validate(&model, out),
        Command::Split {
            model,
            lambda,
            out: csv,
        } => commands::cmd_split(&model, lambda, csv.as_deref(), out),
        Command::Tilt {
            model,
            lambda,
            out: json,
        } => commands::cmd_tilt(&model, lambda, json.as_deref(), out),
        Command::Estimate {
            model,
            run,
            out: csv,
            trace,
        } => {
            let cfg = run.resolve()?;
            commands::cmd_estimate(&model, &cfg, csv.as_deref(), trace.as_deref(), out, err)
        }
        Command::Expect { model, run, trace } => {
            let cfg = run.resolve()?;
            commands::cmd_expect(&model, &cfg, trace.as_deref(), out, err)
        }
        Command::ReproduceExample {
            paths,
            seed,
            chunk,
            lambda,
        } => {
            let d = ReproduceOptions::default();
            let opts = ReproduceOptions {
                n_paths: paths.unwrap_or(d.n_paths),
                seed: seed.unwrap_or(d.seed),
                chunk: chunk.unwrap_or(d.chunk),
                lambda: lambda.unwrap_or(d.lambda),
            };
            reproduce::cmd_reproduce_example(&opts, out, err)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
