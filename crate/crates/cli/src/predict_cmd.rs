//! `gamp predict`: score a dataset with a saved model.

use crate::model::ModelFile;
use crate::util::{error_rate, load_dataset};
use clap::Args;
use gamp_core::engine::predict;
use gamp_core::error::{GampError, Result};
use ndarray::Array1;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions CSV: index,label,probability
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let model = ModelFile::load(&args.model)?;
    let dataset = load_dataset(&args.data)?;
    if dataset.num_features() != model.w_hat.len() {
        return Err(GampError::Config(format!(
            "model has {} features but data has {}",
            model.w_hat.len(),
            dataset.num_features()
        )));
    }
    let w = Array1::from_vec(model.w_hat.clone());
    let tw = Array1::from_vec(model.tau_w.clone());
    let (labels, probs) = predict(&w, &tw, &dataset.x, &model.output);

    let mut csv = String::from("index,label,probability\n");
    for i in 0..labels.len() {
        csv.push_str(&format!("{},{},{:.17e}\n", i, labels[i] as i64, probs[i]));
    }
    std::fs::write(&args.out, csv)?;

    let err = error_rate(&labels, &dataset.y);
    println!("examples    {}", labels.len());
    println!("error rate  {err:.6}");
    Ok(())
}
