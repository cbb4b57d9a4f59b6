//! Command-line front end: train/predict/xval/sweep/synth plus experiment
//! reproduction. Exit codes: 0 success, 1 usage or configuration problem,
//! 2 numeric failure (divergence).

use clap::{Parser, Subcommand};
use gamp_cli::{predict_cmd, reproduce, sweep, synth, train, xval};
use gamp_core::error::GampError;

#[derive(Parser)]
#[command(
    name = "gamp",
    version,
    about = "Generalized approximate message passing for sparse binary classification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a classifier, optionally EM-tuning channel parameters
    Train(train::TrainArgs),
    /// Score a dataset with a saved model
    Predict(predict_cmd::PredictArgs),
    /// K-fold grid-search cross-validation
    Xval(xval::XvalArgs),
    /// Phase-plane sweep: state-evolution prediction vs empirical ensemble
    Sweep(sweep::SweepArgs),
    /// Generate synthetic datasets with a truth sidecar
    Synth(synth::SynthArgs),
    /// Re-run a synthetic experiment at desk scale
    #[command(subcommand)]
    Reproduce(reproduce::ReproduceCmd),
}

fn main() {
    // worker-pool size is an environment knob so scripted runs can pin it
    if let Ok(w) = std::env::var("GAMP_WORKERS") {
        if let Ok(n) = w.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match &cli.cmd {
        Cmd::Train(a) => train::run(a),
        Cmd::Predict(a) => predict_cmd::run(a),
        Cmd::Xval(a) => xval::run(a),
        Cmd::Sweep(a) => sweep::run(a),
        Cmd::Synth(a) => synth::run(a),
        Cmd::Reproduce(c) => reproduce::run(c),
    };

    if let Err(e) = result {
        eprintln!("error: {e}");
        let code = match e {
            GampError::Divergence { .. } | GampError::Numeric(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}
