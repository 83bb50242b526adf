//! Command-line harness: problem ingestion, experiment orchestration and
//! machine-readable result emission.
//!
//! Subcommands mirror the library's experiment surface:
//! `solve`, `calibration-experiment`, `cg-compare`, `pde-demo`, `gp-demo`.
//! Single runs emit JSON [`records::ResultRecord`]s, sweeps emit CSV. Every
//! numeric parameter can come from flags or a JSON config file (flags win),
//! and each record echoes the fully resolved configuration so a run can be
//! reproduced bit-identically by feeding the echo back via `--config`.
//!
//! Exit codes: 0 converged, 1 input/configuration error, 2 iteration cap,
//! 3 breakdown.

pub mod experiments;
pub mod records;
pub mod solve_cmd;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use crate::error::Error;

pub use records::{write_json, ResultRecord, RESULT_RECORD_SCHEMA};

#[derive(Debug, Parser)]
#[command(
    name = "problin",
    version = crate::VERSION,
    about = "Probabilistic linear solver: joint Gaussian inference over a SPD matrix, its inverse and the solution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a single SPD system and emit a JSON result record.
    Solve(CommonArgs<solve_cmd::SolveArgs>),
    /// Calibration sweep over kernels, sizes and methods; emits a CSV table
    /// of mean w-statistics.
    CalibrationExperiment(CommonArgs<experiments::CalibArgs>),
    /// Compare solver iterates against textbook conjugate gradients.
    CgCompare(CommonArgs<experiments::CgCompareArgs>),
    /// Coarse-to-fine Poisson demo: solve, transport the posterior, resolve.
    PdeDemo(CommonArgs<experiments::PdeDemoArgs>),
    /// GP regression propagation at iteration checkpoints.
    GpDemo(CommonArgs<experiments::GpDemoArgs>),
}

/// Flags shared by all subcommands plus the subcommand-specific ones.
#[derive(Debug, Args)]
pub struct CommonArgs<T: Args> {
    /// JSON config file with the same fields as the flags; flags override.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output path (JSON for single runs, CSV for sweeps). Defaults to stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub args: T,
}

/// Resolve subcommand parameters from an optional config file overridden by
/// the flags.
fn resolve_params<P, A>(config: &Option<PathBuf>, args: &A) -> Result<P, Error>
where
    P: serde::de::DeserializeOwned + Default,
    A: OverrideParams<P>,
{
    let mut params: P = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::InputFile {
                path: path.display().to_string(),
                offset: 0,
                reason: e.to_string(),
            })?;
            serde_json::from_str(&text).map_err(|e| Error::InputFile {
                path: path.display().to_string(),
                offset: e.column() as u64,
                reason: e.to_string(),
            })?
        }
        None => P::default(),
    };
    args.apply(&mut params);
    Ok(params)
}

/// Flag structs override the fields they carry.
trait OverrideParams<P> {
    fn apply(&self, params: &mut P);
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("PROBLIN_LOG")).try_init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Solve(c) => {
            let params: solve_cmd::SolveParams = resolve_params(&c.config, &c.args)?;
            solve_cmd::cmd_solve(&params, c.out.as_deref())
        }
        Command::CalibrationExperiment(c) => {
            let params: experiments::CalibParams = resolve_params(&c.config, &c.args)?;
            experiments::cmd_calibration_experiment(&params, c.out.as_deref())
        }
        Command::CgCompare(c) => {
            let params: experiments::CgCompareParams = resolve_params(&c.config, &c.args)?;
            experiments::cmd_cg_compare(&params, c.out.as_deref())
        }
        Command::PdeDemo(c) => {
            let params: experiments::PdeDemoParams = resolve_params(&c.config, &c.args)?;
            experiments::cmd_pde_demo(&params, c.out.as_deref())
        }
        Command::GpDemo(c) => {
            let params: experiments::GpDemoParams = resolve_params(&c.config, &c.args)?;
            experiments::cmd_gp_demo(&params, c.out.as_deref())
        }
    }
}

/// Write `text` to the path or stdout.
pub(crate) fn emit(out: Option<&std::path::Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
