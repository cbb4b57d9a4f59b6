//! Feature-matrix storage: dense row-major or compressed-sparse-row, with the
//! elementwise-squared matrix cached once since the engine applies it every
//! iteration.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet out of bounds");
            by_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in by_row {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { rows, cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn mul_vec_with(&self, vals: &[f64], x: ArrayView1<f64>, out: &mut Array1<f64>) {
        for r in 0..self.rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += vals[k] * x[self.col_idx[k]];
            }
            out[r] = acc;
        }
    }

    fn t_mul_vec_with(&self, vals: &[f64], x: ArrayView1<f64>, out: &mut Array1<f64>) {
        out.fill(0.0);
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += vals[k] * xr;
            }
        }
    }
}

/// Feature matrix with its squared-entry companion.
#[derive(Debug, Clone)]
pub enum Matrix {
    Dense { x: Array2<f64>, sq: Array2<f64> },
    Sparse { x: CsrMatrix, sq_values: Vec<f64> },
}

/// Density above which [`Matrix::from_triplets`] falls back to dense storage.
pub const DENSE_FALLBACK_DENSITY: f64 = 0.25;

impl Matrix {
    pub fn dense(x: Array2<f64>) -> Self {
        let sq = x.mapv(|v| v * v);
        Matrix::Dense { x, sq }
    }

    pub fn sparse(x: CsrMatrix) -> Self {
        let sq_values = x.values.iter().map(|v| v * v).collect();
        Matrix::Sparse { x, sq_values }
    }

    /// Chooses storage by density: CSR when sparse, dense otherwise.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        let density = triplets.len() as f64 / (rows.max(1) * cols.max(1)) as f64;
        if density > DENSE_FALLBACK_DENSITY {
            let mut a = Array2::zeros((rows, cols));
            for (r, c, v) in triplets {
                a[[r, c]] = v;
            }
            Matrix::dense(a)
        } else {
            Matrix::sparse(CsrMatrix::from_triplets(rows, cols, triplets))
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense { x, .. } => x.nrows(),
            Matrix::Sparse { x, .. } => x.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense { x, .. } => x.ncols(),
            Matrix::Sparse { x, .. } => x.cols,
        }
    }

    /// X·v
    pub fn mul_vec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Matrix::Dense { x, .. } => x.dot(&v),
            Matrix::Sparse { x, .. } => {
                let mut out = Array1::zeros(x.rows);
                x.mul_vec_with(&x.values, v, &mut out);
                out
            }
        }
    }

    /// Xᵀ·v
    pub fn t_mul_vec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Matrix::Dense { x, .. } => x.t().dot(&v),
            Matrix::Sparse { x, .. } => {
                let mut out = Array1::zeros(x.cols);
                x.t_mul_vec_with(&x.values, v, &mut out);
                out
            }
        }
    }

    /// S·v with S = |X|² elementwise.
    pub fn sq_mul_vec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Matrix::Dense { sq, .. } => sq.dot(&v),
            Matrix::Sparse { x, sq_values } => {
                let mut out = Array1::zeros(x.rows);
                x.mul_vec_with(sq_values, v, &mut out);
                out
            }
        }
    }

    /// Sᵀ·v with S = |X|² elementwise.
    pub fn sq_t_mul_vec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Matrix::Dense { sq, .. } => sq.t().dot(&v),
            Matrix::Sparse { x, sq_values } => {
                let mut out = Array1::zeros(x.cols);
                x.t_mul_vec_with(sq_values, v, &mut out);
                out
            }
        }
    }

    /// Mean of the squared entries (for the scalar-variance approximation).
    pub fn mean_square(&self) -> f64 {
        match self {
            Matrix::Dense { sq, .. } => sq.mean().unwrap_or(0.0),
            Matrix::Sparse { x, sq_values } => {
                sq_values.iter().sum::<f64>() / (x.rows * x.cols) as f64
            }
        }
    }

    /// Row r as a dense vector (used by prediction on test rows).
    pub fn row_dense(&self, r: usize) -> Array1<f64> {
        match self {
            Matrix::Dense { x, .. } => x.row(r).to_owned(),
            Matrix::Sparse { x, .. } => {
                let mut out = Array1::zeros(x.cols);
                for k in x.row_ptr[r]..x.row_ptr[r + 1] {
                    out[x.col_idx[k]] = x.values[k];
                }
                out
            }
        }
    }

    pub fn iter_row(&self, r: usize) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            Matrix::Dense { x, .. } => {
                Box::new(x.row(r).to_owned().into_iter().enumerate().collect::<Vec<_>>().into_iter())
            }
            Matrix::Sparse { x, .. } => Box::new(
                (x.row_ptr[r]..x.row_ptr[r + 1]).map(move |k| (x.col_idx[k], x.values[k])),
            ),
        }
    }

    pub fn has_non_finite(&self) -> bool {
        match self {
            Matrix::Dense { x, .. } => x.iter().any(|v| !v.is_finite()),
            Matrix::Sparse { x, .. } => x.values.iter().any(|v| !v.is_finite()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> (Matrix, Matrix) {
        let d = array![[1.0, 0.0, -2.0], [0.0, 3.0, 0.5]];
        let dense = Matrix::dense(d);
        let sparse = Matrix::sparse(CsrMatrix::from_triplets(
            2,
            3,
            vec![(0, 0, 1.0), (0, 2, -2.0), (1, 1, 3.0), (1, 2, 0.5)],
        ));
        (dense, sparse)
    }

    #[test]
    fn dense_sparse_agree() {
        let (d, s) = sample();
        let v = array![0.5, -1.0, 2.0];
        let u = array![1.0, 2.0];
        assert_eq!(d.mul_vec(v.view()), s.mul_vec(v.view()));
        assert_eq!(d.t_mul_vec(u.view()), s.t_mul_vec(u.view()));
        assert_eq!(d.sq_mul_vec(v.view()), s.sq_mul_vec(v.view()));
        assert_eq!(d.sq_t_mul_vec(u.view()), s.sq_t_mul_vec(u.view()));
        assert_eq!(d.row_dense(1), s.row_dense(1));
    }

    #[test]
    fn density_dispatch() {
        let m = Matrix::from_triplets(10, 10, vec![(0, 0, 1.0)]);
        assert!(matches!(m, Matrix::Sparse { .. }));
        let trips: Vec<_> = (0..10)
            .flat_map(|r| (0..10).map(move |c| (r, c, 1.0)))
            .collect();
        let m = Matrix::from_triplets(10, 10, trips);
        assert!(matches!(m, Matrix::Dense { .. }));
    }
}
