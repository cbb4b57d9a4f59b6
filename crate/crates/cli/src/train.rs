//! `gamp train`: fit a (possibly EM-tuned) classifier and write the model
//! plus a report.

use crate::config::{resolve, ModelArgs, ResolvedSpec};
use crate::model::ModelFile;
use crate::report::Report;
use crate::util::{error_rate, load_dataset};
use clap::Args;
use gamp_core::data::Dataset;
use gamp_core::em::{em_fit, EmConfig};
use gamp_core::engine::{predict, run_gamp};
use gamp_core::error::{GampError, Result};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data (libsvm sparse text, or dense CSV with a .csv extension)
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Where to write the fitted model (JSON)
    #[arg(long, default_value = "model.json")]
    pub model_out: PathBuf,
    /// Where to write the report (text; a .json twin is written next to it)
    #[arg(long, default_value = "report.txt")]
    pub report_out: PathBuf,
}

/// Trains on an already-loaded dataset; shared with cross-validation.
/// Returns the model, report, and training predictions.
pub fn train_on(dataset: &Dataset, spec: &ResolvedSpec) -> Result<(ModelFile, Report)> {
    if dataset.num_examples() == 0 {
        return Err(GampError::Domain("training set has no examples".into()));
    }
    let t0 = Instant::now();
    let em = em_fit(
        dataset,
        &spec.output,
        &spec.input,
        &EmConfig {
            em_iters: spec.em_iters,
            gamp: spec.gamp.clone(),
            tuned: spec.tuned.clone(),
            cadence: None,
        },
    )?;
    let tuning_time = t0.elapsed().as_secs_f64();

    // refit once under the tuned parameters so the post-tuning cost is the
    // cost of a plain run
    let t1 = Instant::now();
    let fit = run_gamp(dataset, &em.output, &em.input, &spec.gamp)?;
    let post_time = t1.elapsed().as_secs_f64();

    let model = ModelFile {
        output: em.output,
        input: em.input,
        w_hat: fit.state.w_hat.to_vec(),
        tau_w: fit.state.tau_w.to_vec(),
        nonzero_prob: fit.nonzero_prob.as_ref().map(|p| p.to_vec()),
    };
    let (labels, _) = predict(&fit.state.w_hat, &fit.state.tau_w, &dataset.x, &model.output);
    let err = error_rate(&labels, &dataset.y);
    let report = Report {
        accuracy: 1.0 - err,
        error_rate: err,
        density: model.density(),
        estimated_k: model.estimated_k(),
        jaccard: None,
        total_runtime_s: tuning_time + post_time,
        post_tuning_runtime_s: post_time,
        converged: fit.converged,
        boundary_flags: em.boundary_flags.iter().map(|s| s.to_string()).collect(),
        classifiers_trained: None,
    };
    Ok((model, report))
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let spec = resolve(&args.model)?;
    let result = train_on(&dataset, &spec);
    let (model, report) = match result {
        Ok(v) => v,
        Err(e @ GampError::Divergence { .. }) => {
            // leave a diagnostic beside the would-be model for post-mortems
            let diag = args.model_out.with_extension("diverged.txt");
            let _ = std::fs::write(&diag, format!("{e}\n"));
            eprintln!("diagnostic written to {}", diag.display());
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    model.save(&args.model_out)?;
    report.write(&args.report_out)?;
    print!("{}", report.to_text());
    Ok(())
}
