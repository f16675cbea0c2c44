//! Command-line front end for the conserved-quantity pipeline.

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "conserved", about = "Discover and control conserved quantities from trajectory data")]
pub struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Shrink the experiment for a fast smoke run.
    #[arg(long, global = true)]
    pub quick: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the unforced ensemble and write trajectory CSVs + manifest.
    Simulate,
    /// Identify the conserved-quantity subspace from simulated data.
    Discover {
        /// Directory containing manifest.json and trajectory CSVs.
        #[arg(long)]
        data: PathBuf,
    },
    /// Bracket-based involution and residual consistency checks.
    Verify {
        #[arg(long)]
        subspace: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Estimate the control matrix from forced data.
    EstimateB {
        #[arg(long)]
        subspace: PathBuf,
        /// Ingest an external forced trajectory instead of simulating one.
        #[arg(long)]
        forced_csv: Option<PathBuf>,
    },
    /// Run the MPC ensemble using an identified subspace and B estimate.
    Control {
        #[arg(long)]
        subspace: PathBuf,
        #[arg(long)]
        b_estimate: PathBuf,
    },
    /// Full pipeline with report; exits 4 when a reproduction check fails.
    Reproduce,
}

/// Exit codes: 0 success, 2 validation error, 3 numerical failure,
/// 4 reproduction-check failure.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<conserved_core::Error>() {
        return match core {
            conserved_core::Error::Divergence { .. }
            | conserved_core::Error::DegenerateData(_)
            | conserved_core::Error::Unidentifiable(_) => 3,
            _ => 2,
        };
    }
    2
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    if let Some(jobs) = cli.jobs {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.io.seed = seed;
    }
    if cli.quick {
        config.apply_quick();
    }
    config.validate()?;
    let ctx = commands::Ctx { config, out: cli.out.clone() };
    match &cli.command {
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Discover { data } => commands::discover(&ctx, data)?,
        Command::Verify { subspace, data } => commands::verify(&ctx, subspace, data)?,
        Command::EstimateB { subspace, forced_csv } => {
            commands::estimate_b_cmd(&ctx, subspace, forced_csv.as_deref())?
        }
        Command::Control { subspace, b_estimate } => {
            commands::control_cmd(&ctx, subspace, b_estimate)?
        }
        Command::Reproduce => {
            if !commands::reproduce(&ctx)? {
                return Ok(4);
            }
        }
    }
    Ok(0)
}
