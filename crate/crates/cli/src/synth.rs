//! `gamp synth`: write a synthetic dataset plus a truth sidecar (JSON) so the
//! fitted models can be scored against the generating weights.

use clap::Args;
use gamp_core::data::{
    flip_labels, gen_class_conditional, gen_class_conditional_sparse, gen_probit_data,
    gen_sparse_weights, mu_for_bayes_error, write_csv, write_libsvm, Amplitude, Dataset,
};
use gamp_core::error::{GampError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generative model: probit, class_conditional, class_conditional_dense
    #[arg(long, default_value = "probit")]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    /// Number of discriminative features (sparse models)
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Amplitude law for the sparse weights: pm_one or gaussian
    #[arg(long, default_value = "gaussian")]
    pub amplitude: String,
    /// Probit label-noise variance
    #[arg(long, default_value_t = 1e-2)]
    pub v: f64,
    /// Feature variance (probit model; defaults to 1/M)
    #[arg(long)]
    pub feature_var: Option<f64>,
    /// Target Bayes error rate (class-conditional models)
    #[arg(long, default_value_t = 0.05)]
    pub eps_bayes: f64,
    /// Exactly balanced labels instead of i.i.d. fair-coin labels
    #[arg(long)]
    pub balanced: bool,
    /// Mislabeling probability applied after generation
    #[arg(long, default_value_t = 0.0)]
    pub flip_gamma: f64,
    #[arg(long)]
    pub seed: u64,
    /// Dataset path; .csv writes dense CSV, otherwise libsvm sparse text
    #[arg(long, default_value = "synth.libsvm")]
    pub out: PathBuf,
    #[arg(long, default_value = "truth.json")]
    pub truth_out: PathBuf,
}

/// Everything needed to score a model fitted on the synthetic data.
#[derive(Debug, Serialize)]
struct TruthFile {
    model: String,
    n: usize,
    m: usize,
    k: usize,
    w_true: Vec<f64>,
    /// Noise variance: probit label noise, or class-conditional feature
    /// variance.
    v: f64,
    /// Class mean scale (dense class-conditional model only).
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_bayes: Option<f64>,
    /// Mislabeling probability, when labels were flipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    /// Per-example indicators, 0 = label was flipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<u8>>,
    seed: u64,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let amplitude = match args.amplitude.as_str() {
        "pm_one" => Amplitude::PmOne,
        "gaussian" => Amplitude::Gaussian,
        other => return Err(GampError::Config(format!("unknown amplitude '{other}'"))),
    };

    let (mut dataset, mut truth): (Dataset, TruthFile) = match args.model.as_str() {
        "probit" => {
            let w = gen_sparse_weights(args.n, args.k, amplitude, &mut rng)?;
            let fv = args.feature_var.unwrap_or(1.0 / args.m as f64);
            let ds = gen_probit_data(&w, args.m, fv, args.v, &mut rng)?;
            let t = TruthFile {
                model: "probit".into(),
                n: args.n,
                m: args.m,
                k: args.k,
                w_true: w,
                v: args.v,
                mu: None,
                eps_bayes: None,
                gamma: None,
                beta: None,
                seed: args.seed,
            };
            (ds, t)
        }
        "class_conditional" => {
            let w = gen_sparse_weights(args.n, args.k, amplitude, &mut rng)?;
            let (ds, v) =
                gen_class_conditional_sparse(&w, args.m, args.eps_bayes, args.balanced, &mut rng)?;
            let t = TruthFile {
                model: "class_conditional".into(),
                n: args.n,
                m: args.m,
                k: args.k,
                w_true: w,
                v,
                mu: None,
                eps_bayes: Some(args.eps_bayes),
                gamma: None,
                beta: None,
                seed: args.seed,
            };
            (ds, t)
        }
        "class_conditional_dense" => {
            let (ds, truth) =
                gen_class_conditional(args.n, args.m, args.eps_bayes, args.balanced, &mut rng)?;
            let mu = mu_for_bayes_error(args.eps_bayes, args.n, args.m)?;
            let v = match truth.model {
                gamp_core::data::GenerativeModel::ClassConditional { v } => v,
                _ => unreachable!("dense generator always reports its model"),
            };
            let t = TruthFile {
                model: "class_conditional_dense".into(),
                n: args.n,
                m: args.m,
                k: truth.k,
                w_true: truth.w_true,
                v,
                mu: Some(mu),
                eps_bayes: Some(args.eps_bayes),
                gamma: None,
                beta: None,
                seed: args.seed,
            };
            (ds, t)
        }
        other => return Err(GampError::Config(format!("unknown generative model '{other}'"))),
    };

    if args.flip_gamma > 0.0 {
        let (y, beta) = flip_labels(&dataset.y, args.flip_gamma, &mut rng)?;
        dataset = Dataset::new(dataset.x, y)?;
        truth.gamma = Some(args.flip_gamma);
        truth.beta = Some(beta);
    }

    match args.out.extension().and_then(|e| e.to_str()) {
        Some("csv") => write_csv(&args.out, &dataset)?,
        _ => write_libsvm(&args.out, &dataset)?,
    }
    let text = serde_json::to_string(&truth)
        .map_err(|e| GampError::Config(format!("truth serialization failed: {e}")))?;
    std::fs::write(&args.truth_out, text)?;
    println!(
        "wrote {} examples x {} features to {}",
        args.m,
        args.n,
        args.out.display()
    );
    Ok(())
}
