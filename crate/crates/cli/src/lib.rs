//! Command-line surface of the `tsception` crate: dataset generation,
//! training, cross-validation, feature extraction, the linear baseline and
//! gradient checking.

pub mod args;
mod commands;
pub mod manifest;
pub mod tables;

pub use args::{Cli, Command};
pub use commands::{
    ACCURACY_FILE, CHECKPOINT_FILE, FIT_REPORT_FILE, FOLDS_DIR, GRADCHECK_FILE, NULL_FILE,
    RESULTS_FILE,
};

use anyhow::{Context, Result};

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Synth(a) => commands::synth(cli, a),
        Command::Train(a) => commands::train(cli, a),
        Command::Crossval(a) => commands::crossval(cli, a),
        Command::Features(a) => commands::features(cli, a),
        Command::Baseline(a) => commands::baseline(cli, a),
        Command::Gradcheck(a) => commands::gradcheck(cli, a),
        Command::Inspect(a) => commands::inspect(cli, a),
    }
}
