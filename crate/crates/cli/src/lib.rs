//! Command implementations behind the `sean` binary.

pub mod args;
pub mod commands;
pub mod dataset;
pub mod lock;

use args::{Cli, Command};
use sean_core::Result;

/// Runs one parsed command and returns its one-line summary.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::TrainAlign(a) => commands::train_align(a),
        Command::TrainSeg(a) => commands::train_seg(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Predict(a) => commands::predict(a),
    }
}
