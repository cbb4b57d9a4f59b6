//! On-disk model format: the fitted channel parameters plus the posterior
//! weight summary, serialized as JSON. Floats are written losslessly so a
//! saved-then-loaded model predicts bit-identically.

use gamp_core::error::{GampError, Result};
use gamp_core::input_channel::InputChannel;
use gamp_core::output_channel::OutputChannel;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub output: OutputChannel,
    pub input: InputChannel,
    pub w_hat: Vec<f64>,
    pub tau_w: Vec<f64>,
    /// Posterior nonzero probabilities (spike-and-slab priors only).
    pub nonzero_prob: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| GampError::Config(format!("model serialization failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| GampError::Parse { line: 0, msg: format!("bad model file: {e}") })
    }

    /// Fraction of exactly-zero / effectively-zero weights complement.
    pub fn density(&self) -> f64 {
        if self.w_hat.is_empty() {
            return 0.0;
        }
        let nz = self.w_hat.iter().filter(|w| w.abs() > 1e-12).count();
        nz as f64 / self.w_hat.len() as f64
    }

    /// Estimated number of discriminative features: coordinates whose
    /// posterior nonzero probability exceeds 1/2 when available, otherwise
    /// the count of nonzero weights.
    pub fn estimated_k(&self) -> f64 {
        match &self.nonzero_prob {
            Some(p) => gamp_core::metrics::estimated_support(p, 0.5).len() as f64,
            None => self.w_hat.iter().filter(|w| w.abs() > 1e-12).count() as f64,
        }
    }
}
