//! Dataset representation, libsvm/CSV file I/O, and synthetic-data generators
//! for the probit-score and class-conditional models.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GampError, Result};
use crate::matrix::Matrix;
use crate::numeric::normal_quantile;

/// Labeled training data: M×N features with signed labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Array1<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(GampError::Domain(format!(
                "row count {} != label count {}",
                x.rows(),
                y.len()
            )));
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(GampError::Domain("labels must be exactly -1 or +1".into()));
        }
        if x.has_non_finite() {
            return Err(GampError::Domain("feature matrix contains NaN/Inf".into()));
        }
        Ok(Dataset { x, y })
    }

    pub fn num_examples(&self) -> usize {
        self.x.rows()
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }
}

/// Which generative model produced a synthetic truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GenerativeModel {
    /// y = sgn(xᵀw - e), e ~ N(0, v)
    ProbitScore { v: f64 },
    /// x | y ~ N(y·w, v·I); for the dense-μ variant w = μ·1
    ClassConditional { v: f64 },
}

/// Ground truth attached to a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub w_true: Vec<f64>,
    pub k: usize,
    pub model: GenerativeModel,
}

impl SyntheticTruth {
    pub fn support(&self) -> Vec<usize> {
        self.w_true
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Amplitude {
    PmOne,
    Gaussian,
}

/// Draws a K-sparse weight vector: support uniform without replacement,
/// amplitudes ±1 equiprobable or standard normal.
pub fn gen_sparse_weights<R: Rng>(
    n: usize,
    k: usize,
    amplitude: Amplitude,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if k == 0 || k > n {
        return Err(GampError::Domain(format!("need 0 < K <= N, got K={k}, N={n}")));
    }
    let support = rand::seq::index::sample(rng, n, k);
    let mut w = vec![0.0; n];
    for idx in support.iter() {
        w[idx] = match amplitude {
            Amplitude::PmOne => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Amplitude::Gaussian => StandardNormal.sample(rng),
        };
    }
    Ok(w)
}

/// Probit-model data: X iid N(0, feature_var), y = sgn(Xw - e), e ~ N(0, v).
pub fn gen_probit_data<R: Rng>(
    w_true: &[f64],
    m: usize,
    feature_var: f64,
    v: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if feature_var <= 0.0 {
        return Err(GampError::Domain("feature_var must be > 0".into()));
    }
    if v < 0.0 {
        return Err(GampError::Domain("probit noise variance must be >= 0".into()));
    }
    let n = w_true.len();
    let sd = feature_var.sqrt();
    let noise_sd = v.sqrt();
    let mut x = ndarray::Array2::zeros((m, n));
    let mut y = Array1::zeros(m);
    for i in 0..m {
        let mut z = 0.0;
        for j in 0..n {
            let xv: f64 = StandardNormal.sample(rng);
            let xv = xv * sd;
            x[[i, j]] = xv;
            z += xv * w_true[j];
        }
        let e: f64 = StandardNormal.sample(rng);
        let score = z - noise_sd * e;
        y[i] = if score >= 0.0 { 1.0 } else { -1.0 };
    }
    Dataset::new(Matrix::dense(x), y)
}

/// Solves ε_B = Φ(-√(NM)·μ) for the dense class-conditional mean scale.
pub fn mu_for_bayes_error(eps_bayes: f64, n: usize, m: usize) -> Result<f64> {
    if !(eps_bayes > 0.0 && eps_bayes < 0.5) {
        return Err(GampError::Domain("eps_bayes must lie in (0, 0.5)".into()));
    }
    Ok(-normal_quantile(eps_bayes) / ((n * m) as f64).sqrt())
}

fn balanced_labels<R: Rng>(m: usize, balanced: bool, rng: &mut R) -> Array1<f64> {
    let mut y = Array1::zeros(m);
    if balanced {
        let pos = m.div_ceil(2);
        let mut labels: Vec<f64> = (0..m).map(|i| if i < pos { 1.0 } else { -1.0 }).collect();
        // Fisher-Yates so positives are not all at the front
        for i in (1..m).rev() {
            let j = rng.gen_range(0..=i);
            labels.swap(i, j);
        }
        for (i, l) in labels.into_iter().enumerate() {
            y[i] = l;
        }
    } else {
        for i in 0..m {
            y[i] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
    }
    y
}

/// Dense class-conditional model: every feature discriminates weakly,
/// x | y ~ N(y·μ·1, I/M), with μ set from the target Bayes error.
pub fn gen_class_conditional<R: Rng>(
    n: usize,
    m: usize,
    eps_bayes: f64,
    balanced: bool,
    rng: &mut R,
) -> Result<(Dataset, SyntheticTruth)> {
    let mu = mu_for_bayes_error(eps_bayes, n, m)?;
    let y = balanced_labels(m, balanced, rng);
    let sd = (1.0 / m as f64).sqrt();
    let mut x = ndarray::Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let g: f64 = StandardNormal.sample(rng);
            x[[i, j]] = y[i] * mu + sd * g;
        }
    }
    let truth = SyntheticTruth {
        w_true: vec![mu; n],
        k: n,
        model: GenerativeModel::ClassConditional { v: 1.0 / m as f64 },
    };
    Ok((Dataset::new(Matrix::dense(x), y)?, truth))
}

/// Sparse class-conditional model: x | y ~ N(y·w, v·I) for K-sparse w, with v
/// chosen so the Bayes error Φ(-‖w‖/√v) hits the target.
pub fn gen_class_conditional_sparse<R: Rng>(
    w_true: &[f64],
    m: usize,
    eps_bayes: f64,
    balanced: bool,
    rng: &mut R,
) -> Result<(Dataset, f64)> {
    if !(eps_bayes > 0.0 && eps_bayes < 0.5) {
        return Err(GampError::Domain("eps_bayes must lie in (0, 0.5)".into()));
    }
    let norm2: f64 = w_true.iter().map(|w| w * w).sum();
    if norm2 == 0.0 {
        return Err(GampError::Domain("w_true must be nonzero".into()));
    }
    let q = normal_quantile(1.0 - eps_bayes);
    let v = norm2 / (q * q);
    let n = w_true.len();
    let y = balanced_labels(m, balanced, rng);
    let sd = v.sqrt();
    let mut x = ndarray::Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let g: f64 = StandardNormal.sample(rng);
            x[[i, j]] = y[i] * w_true[j] + sd * g;
        }
    }
    Ok((Dataset::new(Matrix::dense(x), y)?, v))
}

/// Independently negates each label with probability gamma. The returned
/// indicators follow the convention beta=0 marks a flipped label.
pub fn flip_labels<R: Rng>(
    y: &Array1<f64>,
    gamma: f64,
    rng: &mut R,
) -> Result<(Array1<f64>, Vec<u8>)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(GampError::Domain("gamma must lie in [0,1]".into()));
    }
    let mut out = y.clone();
    let mut beta = vec![1u8; y.len()];
    for i in 0..y.len() {
        if rng.gen::<f64>() < gamma {
            out[i] = -out[i];
            beta[i] = 0;
        }
    }
    Ok((out, beta))
}

/// Reads a libsvm-format sparse text file. Labels may be {-1,+1} or {0,1}
/// (0 maps to -1). Indices are 1-based ascending. N is inferred from the
/// largest index unless `num_features` overrides it.
pub fn read_libsvm(path: impl AsRef<Path>, num_features: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut triplets = Vec::new();
    let mut labels = Vec::new();
    let mut max_col = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = labels.len();
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().ok_or_else(|| GampError::Parse {
            line: lineno + 1,
            msg: "missing label".into(),
        })?;
        let raw: f64 = label_tok.parse().map_err(|_| GampError::Parse {
            line: lineno + 1,
            msg: format!("bad label '{label_tok}'"),
        })?;
        let label = match raw {
            v if v == 1.0 => 1.0,
            v if v == -1.0 || v == 0.0 => -1.0,
            _ => {
                return Err(GampError::Domain(format!(
                    "line {}: label {raw} outside {{-1,+1,0,1}}",
                    lineno + 1
                )))
            }
        };
        labels.push(label);
        let mut prev_idx = 0usize;
        for tok in parts {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| GampError::Parse {
                line: lineno + 1,
                msg: format!("expected idx:val, got '{tok}'"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| GampError::Parse {
                line: lineno + 1,
                msg: format!("bad index '{idx_s}'"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| GampError::Parse {
                line: lineno + 1,
                msg: format!("bad value '{val_s}'"),
            })?;
            if idx == 0 || idx <= prev_idx {
                return Err(GampError::Parse {
                    line: lineno + 1,
                    msg: format!("indices must be 1-based ascending, got {idx} after {prev_idx}"),
                });
            }
            prev_idx = idx;
            max_col = max_col.max(idx);
            triplets.push((row, idx - 1, val));
        }
    }
    let n = num_features.unwrap_or(max_col);
    if max_col > n {
        return Err(GampError::Domain(format!(
            "feature index {max_col} exceeds declared N={n}"
        )));
    }
    let m = labels.len();
    Dataset::new(
        Matrix::from_triplets(m, n, triplets),
        Array1::from_vec(labels),
    )
}

/// Writes libsvm sparse text. Zero entries are omitted; indices are 1-based.
pub fn write_libsvm(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for r in 0..data.num_examples() {
        let lbl = if data.y[r] > 0.0 { "+1" } else { "-1" };
        write!(w, "{lbl}")?;
        for (c, v) in data.x.iter_row(r) {
            if v != 0.0 {
                write!(w, " {}:{}", c + 1, v)?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads dense CSV: one row per example, label in the first column.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut vals = Vec::new();
        for tok in line.split(',') {
            vals.push(tok.trim().parse::<f64>().map_err(|_| GampError::Parse {
                line: lineno + 1,
                msg: format!("bad number '{tok}'"),
            })?);
        }
        if vals.is_empty() {
            continue;
        }
        let raw = vals.remove(0);
        let label = match raw {
            v if v == 1.0 => 1.0,
            v if v == -1.0 || v == 0.0 => -1.0,
            _ => {
                return Err(GampError::Domain(format!(
                    "line {}: label {raw} outside {{-1,+1,0,1}}",
                    lineno + 1
                )))
            }
        };
        labels.push(label);
        rows.push(vals);
    }
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(GampError::Domain("ragged CSV rows".into()));
    }
    let mut x = ndarray::Array2::zeros((m, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Dataset::new(Matrix::dense(x), Array1::from_vec(labels))
}

/// Writes dense CSV with the label in the first column.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for r in 0..data.num_examples() {
        write!(w, "{}", if data.y[r] > 0.0 { 1 } else { -1 })?;
        let row = data.x.row_dense(r);
        for v in row.iter() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn libsvm_basic_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.libsvm");
        std::fs::write(&p, "+1 3:0.5\n").unwrap();
        let d = read_libsvm(&p, Some(4)).unwrap();
        assert_eq!(d.y[0], 1.0);
        let row = d.x.row_dense(0);
        assert_eq!(row.to_vec(), vec![0.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn libsvm_zero_label_convention() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.libsvm");
        std::fs::write(&p, "0 1:1.0\n").unwrap();
        let d = read_libsvm(&p, None).unwrap();
        assert_eq!(d.y[0], -1.0);
    }

    #[test]
    fn libsvm_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.libsvm");
        std::fs::write(&p, "").unwrap();
        let d = read_libsvm(&p, Some(3)).unwrap();
        assert_eq!(d.num_examples(), 0);
    }

    #[test]
    fn libsvm_malformed_line_reports_lineno() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.libsvm");
        std::fs::write(&p, "+1 1:1.0\n-1 2:xyz\n").unwrap();
        match read_libsvm(&p, None) {
            Err(GampError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn libsvm_bad_label_is_domain_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.libsvm");
        std::fs::write(&p, "3 1:1.0\n").unwrap();
        assert!(matches!(read_libsvm(&p, None), Err(GampError::Domain(_))));
    }

    #[test]
    fn sparse_weights_full_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = gen_sparse_weights(5, 5, Amplitude::PmOne, &mut rng).unwrap();
        assert!(w.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn sparse_weights_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = gen_sparse_weights(30000, 5, Amplitude::PmOne, &mut rng).unwrap();
        let nnz = w.iter().filter(|&&v| v != 0.0).count();
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        assert_eq!(nnz, 5);
        assert_eq!(norm2, 5.0);
        assert!(gen_sparse_weights(4, 5, Amplitude::PmOne, &mut rng).is_err());
    }

    #[test]
    fn sparse_weights_uniform_support_chi2() {
        // 1e5 draws of K=2 from N=10; each position expected at 2e4
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10;
        let k = 2;
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            let w = gen_sparse_weights(n, k, Amplitude::PmOne, &mut rng).unwrap();
            for (i, &v) in w.iter().enumerate() {
                if v != 0.0 {
                    counts[i] += 1;
                }
            }
        }
        let expected = (draws * k) as f64 / n as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square 9 dof, 1% critical value
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    #[test]
    fn probit_noiseless_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = vec![1.0, 0.0, 0.0];
        let d = gen_probit_data(&w, 200, 1.0, 0.0, &mut rng).unwrap();
        for i in 0..d.num_examples() {
            let z: f64 = d.x.row_dense(i).dot(&Array1::from_vec(w.clone()));
            assert!(d.y[i] * z > 0.0);
        }
    }

    #[test]
    fn probit_conditional_probability_matches_cdf() {
        // empirical P(y=+1 | z) at fixed score z vs Φ(z/√v)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = 0.7_f64;
        let v = 2.0_f64;
        let draws = 100_000;
        let mut pos = 0usize;
        let sd = v.sqrt();
        for _ in 0..draws {
            let e: f64 = StandardNormal.sample(&mut rng);
            if z - sd * e >= 0.0 {
                pos += 1;
            }
        }
        let emp = pos as f64 / draws as f64;
        let theory = crate::numeric::normal_cdf(z / sd);
        assert!((emp - theory).abs() < 0.01, "emp {emp} vs {theory}");
    }

    #[test]
    fn class_conditional_mu_value() {
        let mu = mu_for_bayes_error(0.05, 512, 8192).unwrap();
        assert!((mu - 1.6448536269514722 / 2048.0).abs() < 1e-12);
        assert!(mu_for_bayes_error(0.5, 512, 8192).is_err());
        let near = mu_for_bayes_error(0.4999, 512, 8192).unwrap();
        assert!(near.abs() < 1e-6);
    }

    #[test]
    fn class_conditional_balanced_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (d, truth) = gen_class_conditional(16, 101, 0.05, true, &mut rng).unwrap();
        let pos = d.y.iter().filter(|&&v| v > 0.0).count();
        assert_eq!(pos, 51); // ceil(101/2)
        assert_eq!(truth.k, 16);
    }

    #[test]
    fn flip_labels_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = Array1::from_vec(vec![1.0, -1.0, 1.0]);
        let (y0, b0) = flip_labels(&y, 0.0, &mut rng).unwrap();
        assert_eq!(y0, y);
        assert!(b0.iter().all(|&b| b == 1));
        let (y1, b1) = flip_labels(&y, 1.0, &mut rng).unwrap();
        assert_eq!(y1, -&y);
        assert!(b1.iter().all(|&b| b == 0));
    }

    #[test]
    fn flip_labels_fraction_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = Array1::ones(1_000_000);
        let (_, beta) = flip_labels(&y, 0.2, &mut rng).unwrap();
        let frac = beta.iter().filter(|&&b| b == 0).count() as f64 / beta.len() as f64;
        assert!((frac - 0.2).abs() < 0.003, "frac {frac}");
    }

    #[test]
    fn roundtrip_libsvm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = gen_sparse_weights(40, 3, Amplitude::Gaussian, &mut rng).unwrap();
        let d = gen_probit_data(&w, 20, 1.0, 0.5, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.libsvm");
        write_libsvm(&p, &d).unwrap();
        let d2 = read_libsvm(&p, Some(40)).unwrap();
        assert_eq!(d.y, d2.y);
        for r in 0..d.num_examples() {
            let a = d.x.row_dense(r);
            let b = d2.x.row_dense(r);
            for (u, v) in a.iter().zip(b.iter()) {
                assert_eq!(u, v);
            }
        }
    }

    #[test]
    fn roundtrip_csv() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = vec![1.0, -0.5];
        let d = gen_probit_data(&w, 7, 1.0, 0.1, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        write_csv(&p, &d).unwrap();
        let d2 = read_csv(&p).unwrap();
        assert_eq!(d.y, d2.y);
        for r in 0..d.num_examples() {
            assert_eq!(d.x.row_dense(r), d2.x.row_dense(r));
        }
    }
}
