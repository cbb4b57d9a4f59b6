//! Small shared helpers: dataset loading by extension, row subsetting for
//! cross-validation folds, and error-rate arithmetic.

use gamp_core::data::{read_csv, read_libsvm, Dataset};
use gamp_core::error::Result;
use gamp_core::matrix::Matrix;
use ndarray::{Array1, Array2, Axis};
use std::path::Path;

/// `.csv` loads as a dense label,feature... table; anything else is treated
/// as libsvm sparse text.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        _ => read_libsvm(path, None),
    }
}

/// New dataset holding the given rows, preserving sparse/dense storage.
pub fn subset(ds: &Dataset, rows: &[usize]) -> Result<Dataset> {
    let y = Array1::from_iter(rows.iter().map(|&r| ds.y[r]));
    let x = match &ds.x {
        Matrix::Dense { x, .. } => {
            let picked: Vec<_> = rows.iter().map(|&r| x.index_axis(Axis(0), r)).collect();
            let stacked: Array2<f64> = ndarray::stack(Axis(0), &picked)
                .expect("row views share the dataset's column count");
            Matrix::dense(stacked)
        }
        Matrix::Sparse { .. } => {
            let mut triplets = Vec::new();
            for (new_r, &r) in rows.iter().enumerate() {
                for (c, v) in ds.x.iter_row(r) {
                    triplets.push((new_r, c, v));
                }
            }
            Matrix::from_triplets(rows.len(), ds.x.cols(), triplets)
        }
    };
    Dataset::new(x, y)
}

pub fn error_rate(predicted: &Array1<f64>, truth: &Array1<f64>) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let wrong = predicted
        .iter()
        .zip(truth.iter())
        .filter(|(a, b)| a.signum() != b.signum())
        .count();
    wrong as f64 / truth.len() as f64
}
