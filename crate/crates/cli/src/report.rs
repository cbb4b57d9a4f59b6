//! Run reports: one struct, rendered both as human-readable text and as a
//! JSON line for machine consumption.

use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Default)]
pub struct Report {
    pub accuracy: f64,
    pub error_rate: f64,
    /// Fraction of nonzero weight coordinates.
    pub density: f64,
    /// Estimated number of discriminative features.
    pub estimated_k: f64,
    /// Average intersection-over-union of selected supports across folds
    /// (cross-validation runs only).
    pub jaccard: Option<f64>,
    pub total_runtime_s: f64,
    pub post_tuning_runtime_s: f64,
    pub converged: bool,
    /// EM parameters whose update hit a search-bracket boundary.
    pub boundary_flags: Vec<String>,
    /// Number of classifiers trained (cross-validation runs only).
    pub classifiers_trained: Option<usize>,
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("accuracy            {:.6}\n", self.accuracy));
        s.push_str(&format!("error rate          {:.6}\n", self.error_rate));
        s.push_str(&format!("weight density      {:.6}\n", self.density));
        s.push_str(&format!("estimated sparsity  {:.3}\n", self.estimated_k));
        if let Some(j) = self.jaccard {
            s.push_str(&format!("jaccard consistency {j:.6}\n"));
        }
        s.push_str(&format!("total runtime       {:.3} s\n", self.total_runtime_s));
        s.push_str(&format!("post-tuning runtime {:.3} s\n", self.post_tuning_runtime_s));
        s.push_str(&format!("converged           {}\n", self.converged));
        if !self.boundary_flags.is_empty() {
            s.push_str(&format!("boundary flags      {}\n", self.boundary_flags.join(",")));
        }
        if let Some(c) = self.classifiers_trained {
            s.push_str(&format!("classifiers trained {c}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }

    /// Writes `<path>` as text and `<path>.json` next to it.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())?;
        let mut json_path = path.as_os_str().to_owned();
        json_path.push(".json");
        std::fs::write(json_path, self.to_json() + "\n")
    }
}
