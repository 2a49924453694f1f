use nalgebra::{DMatrix, DVector};

/// Compressed sparse rows. Only what the ADMM iteration needs.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = a.shape();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = a[(i, j)];
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn row_amax(&self, i: usize) -> f64 {
        self.row(i).1.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, rows: &DVector<f64>, cols: &DVector<f64>) {
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                self.data[k] *= rows[i] * cols[self.indices[k]];
            }
        }
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nrows, |i, _| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(|(j, v)| v * x[*j]).sum()
        })
    }

    pub fn tr_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                out[*j] += v * yi;
            }
        }
        out
    }

    /// `Σᵢ wᵢ aᵢᵀaᵢ` accumulated into `out`.
    pub fn add_weighted_gram(&self, w: &DVector<f64>, out: &mut DMatrix<f64>) {
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (a, va) in idx.iter().zip(val) {
                let s = w[i] * va;
                for (b, vb) in idx.iter().zip(val) {
                    out[(*a, *b)] += s * vb;
                }
            }
        }
    }

    pub fn col_amax(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for (j, v) in self.indices.iter().zip(&self.data) {
            out[*j] = f64::max(out[*j], v.abs());
        }
        out
    }

    pub fn dense_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows.len(), self.ncols);
        for (r, &i) in rows.iter().enumerate() {
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                out[(r, *j)] = *v;
            }
        }
        out
    }
}
