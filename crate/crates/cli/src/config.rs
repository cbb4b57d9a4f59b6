//! Config-file schema and merging with command-line overrides.
//!
//! The config file is TOML with four optional tables:
//!
//! ```toml
//! [gamp]
//! mode = "sum_product"        # or "max_sum"
//! max_iter = 200
//! tol = 1e-3
//! damping = 0.9
//!
//! [output]
//! kind = "probit"             # probit|logistic|hinge|robust_probit|robust_logistic
//! v = 1e-2                    # probit noise variance
//! alpha = 1.0                 # logistic sharpness
//! gamma = 0.1                 # robust corruption rate
//!
//! [input]
//! kind = "spike_slab"         # gaussian|laplacian|elastic_net|spike_slab
//! pi = 0.05                   # spike-slab nonzero fraction
//! mean = 0.0                  # (slab) Gaussian mean
//! var = 1.0                   # (slab) Gaussian variance
//! lambda1 = 1.0
//! lambda2 = 0.0
//!
//! [em]
//! iters = 10
//! tuned = ["pi", "slab_mean", "slab_var", "v"]
//! ```
//!
//! Every key has a matching command-line flag; the flag wins when both are
//! given.

use gamp_core::em::TunableParam;
use gamp_core::engine::{GampConfig, Mode};
use gamp_core::error::{GampError, Result};
use gamp_core::input_channel::InputChannel;
use gamp_core::output_channel::OutputChannel;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub gamp: GampSection,
    #[serde(default)]
    pub output: ChannelSection,
    #[serde(default)]
    pub input: ChannelSection,
    #[serde(default)]
    pub em: EmSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GampSection {
    pub mode: Option<String>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub kind: Option<String>,
    pub v: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub pi: Option<f64>,
    pub mean: Option<f64>,
    pub var: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSection {
    pub iters: Option<usize>,
    pub tuned: Option<Vec<String>>,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text)
                .map_err(|e| GampError::Config(format!("bad config file {}: {e}", p.display())))
        }
    }
}

/// Command-line channel and solver overrides shared by train/predict/xval.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelArgs {
    /// Config file (TOML); flags below override its values
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Output channel: probit, logistic, hinge, robust_probit, robust_logistic
    #[arg(long)]
    pub output_channel: Option<String>,
    /// Probit noise variance
    #[arg(long)]
    pub v: Option<f64>,
    /// Logistic sharpness
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Robust-channel corruption rate
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight prior: gaussian, laplacian, elastic_net, spike_slab
    #[arg(long)]
    pub prior: Option<String>,
    /// Spike-slab nonzero fraction
    #[arg(long)]
    pub pi: Option<f64>,
    /// (Slab) Gaussian mean
    #[arg(long)]
    pub prior_mean: Option<f64>,
    /// (Slab) Gaussian variance
    #[arg(long)]
    pub prior_var: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Engine mode: sum_product or max_sum
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Damping factor in (0, 1]
    #[arg(long)]
    pub damping: Option<f64>,
    /// Comma-separated EM-tuned parameters: alpha, v, gamma, pi, slab_mean,
    /// slab_var, lambda1. Empty = no tuning.
    #[arg(long, value_delimiter = ',')]
    pub em_tuned: Option<Vec<String>>,
    /// EM iterations (per-run cadence)
    #[arg(long)]
    pub em_iters: Option<usize>,
}

/// Fully resolved model specification after merging file and flags.
#[derive(Debug, Clone)]
pub struct ResolvedSpec {
    pub output: OutputChannel,
    pub input: InputChannel,
    pub gamp: GampConfig,
    pub em_iters: usize,
    pub tuned: Vec<TunableParam>,
}

pub fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "sum_product" => Ok(Mode::SumProduct),
        "max_sum" => Ok(Mode::MaxSum),
        other => Err(GampError::Config(format!(
            "unknown mode '{other}' (expected sum_product or max_sum)"
        ))),
    }
}

pub fn parse_tuned(names: &[String]) -> Result<Vec<TunableParam>> {
    names
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| match s.as_str() {
            "alpha" => Ok(TunableParam::Alpha),
            "v" => Ok(TunableParam::ProbitV),
            "gamma" => Ok(TunableParam::Gamma),
            "pi" => Ok(TunableParam::Pi),
            "slab_mean" => Ok(TunableParam::SlabMean),
            "slab_var" => Ok(TunableParam::SlabVar),
            "lambda1" => Ok(TunableParam::Lambda1),
            other => Err(GampError::Config(format!("unknown tunable parameter '{other}'"))),
        })
        .collect()
}

fn build_output(kind: &str, v: f64, alpha: f64, gamma: f64) -> Result<OutputChannel> {
    let ch = match kind {
        "probit" => OutputChannel::Probit { v },
        "logistic" => OutputChannel::Logistic { alpha },
        "hinge" => OutputChannel::Hinge,
        "robust_probit" => OutputChannel::Robust {
            gamma,
            inner: Box::new(OutputChannel::Probit { v }),
        },
        "robust_logistic" => OutputChannel::Robust {
            gamma,
            inner: Box::new(OutputChannel::Logistic { alpha }),
        },
        other => {
            return Err(GampError::Config(format!("unknown output channel '{other}'")))
        }
    };
    ch.validate()?;
    Ok(ch)
}

fn build_input(
    kind: &str,
    pi: f64,
    mean: f64,
    var: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<InputChannel> {
    let ch = match kind {
        "gaussian" => InputChannel::Gaussian { mean, var },
        "laplacian" => InputChannel::Laplacian { lambda1 },
        "elastic_net" => InputChannel::ElasticNet { lambda1, lambda2 },
        "spike_slab" => InputChannel::BernoulliSpikeSlab {
            pi,
            slab: Box::new(InputChannel::Gaussian { mean, var }),
        },
        other => return Err(GampError::Config(format!("unknown prior '{other}'"))),
    };
    ch.validate()?;
    Ok(ch)
}

/// Merge config file and flags into a runnable specification. Flag values
/// win; unset values fall back to the file, then to defaults.
pub fn resolve(args: &ModelArgs) -> Result<ResolvedSpec> {
    let file = load_file_config(args.config.as_deref())?;

    let out_kind = args
        .output_channel
        .clone()
        .or(file.output.kind)
        .unwrap_or_else(|| "probit".into());
    let v = args.v.or(file.output.v).unwrap_or(1e-2);
    let alpha = args.alpha.or(file.output.alpha).unwrap_or(1.0);
    let gamma = args.gamma.or(file.output.gamma).unwrap_or(0.1);
    let output = build_output(&out_kind, v, alpha, gamma)?;

    let in_kind = args
        .prior
        .clone()
        .or(file.input.kind)
        .unwrap_or_else(|| "spike_slab".into());
    let pi = args.pi.or(file.input.pi).unwrap_or(0.05);
    let mean = args.prior_mean.or(file.input.mean).unwrap_or(0.0);
    let var = args.prior_var.or(file.input.var).unwrap_or(1.0);
    let lambda1 = args.lambda1.or(file.input.lambda1).unwrap_or(1.0);
    let lambda2 = args.lambda2.or(file.input.lambda2).unwrap_or(0.0);
    let input = build_input(&in_kind, pi, mean, var, lambda1, lambda2)?;

    let mut gamp = GampConfig::default();
    if let Some(m) = args.mode.clone().or(file.gamp.mode) {
        gamp.mode = parse_mode(&m)?;
    }
    if let Some(n) = args.max_iter.or(file.gamp.max_iter) {
        gamp.max_iter = n;
    }
    if let Some(t) = args.tol.or(file.gamp.tol) {
        gamp.tol = t;
    }
    if let Some(b) = args.damping.or(file.gamp.damping) {
        gamp.beta = b;
    }
    gamp.validate()?;

    let tuned_names = args.em_tuned.clone().or(file.em.tuned).unwrap_or_default();
    let tuned = parse_tuned(&tuned_names)?;
    let em_iters = args.em_iters.or(file.em.iters).unwrap_or(10);

    Ok(ResolvedSpec { output, input, gamp, em_iters, tuned })
}
