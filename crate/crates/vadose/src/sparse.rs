//! Compressed sparse row matrices and small vector helpers.

/// Square sparse matrix in CSR format with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a zero-valued matrix from a per-row sorted column pattern.
    pub fn from_pattern(n: usize, rows: &[Vec<usize>]) -> CsrMatrix {
        assert_eq!(rows.len(), n);
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        for cols in rows {
            debug_assert!(cols.windows(2).all(|w| w[0] < w[1]), "columns must be sorted");
            col_indices.extend_from_slice(cols);
            row_offsets.push(col_indices.len());
        }
        let nnz = col_indices.len();
        CsrMatrix {
            n,
            row_offsets,
            col_indices,
            values: vec![0.0; nnz],
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Value index of entry (i, j), if structurally present.
    pub fn entry_index(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        self.col_indices[lo..hi]
            .binary_search(&j)
            .ok()
            .map(|p| lo + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entry_index(i, j).map_or(0.0, |k| self.values[k])
    }

    /// y = A·x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            y[i] = acc;
        }
    }

    /// Largest |a_ii|.
    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(0.0, f64::max)
    }

    /// Adds `shift` to every diagonal entry (which must be structurally present).
    pub fn shift_diagonal(&self, shift: f64) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            let k = out
                .entry_index(i, i)
                .expect("diagonal entry must be structurally present");
            out.values[k] += shift;
        }
        out
    }

    /// Maximum relative asymmetry |a_ij − a_ji| / max|a|, for tests.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (pos, &j) in self.row_cols(i).iter().enumerate() {
                let a_ij = self.row_values(i)[pos];
                let a_ji = self.get(j, i);
                worst = worst.max((a_ij - a_ji).abs() / scale);
            }
        }
        worst
    }
}

/// A linearized system J·Δh = rhs as produced by the Jacobian assembly
/// (rhs = −F at the assembly state).
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

pub fn norm_l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y = y + alpha·x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
