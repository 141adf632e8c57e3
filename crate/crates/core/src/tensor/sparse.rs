use super::Tensor;

/// Compressed sparse row matrix used as the fast path for adjacency products.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            debug_assert!(r < rows && c < cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(t: &Tensor) -> Self {
        let mut trip = Vec::new();
        for r in 0..t.rows() {
            for (c, &v) in t.row(r).iter().enumerate() {
                if v != 0.0 {
                    trip.push((r, c, v));
                }
            }
        }
        Self::from_triplets(t.rows(), t.cols(), &trip)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over the stored entries of row `r` as `(col, value)`.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                out.set(r, c, out.get(r, c) + v);
            }
        }
        out
    }

    /// `self · x`.
    pub fn matmul(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(self.cols, x.rows());
        let m = x.cols();
        let mut out = Tensor::zeros(self.rows, m);
        for r in 0..self.rows {
            let orow = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                let xrow = x.row(self.indices[k]);
                for (o, xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        out
    }

    /// `selfᵀ · g`.
    pub fn transpose_matmul(&self, g: &Tensor) -> Tensor {
        debug_assert_eq!(self.rows, g.rows());
        let m = g.cols();
        let mut out = Tensor::zeros(self.cols, m);
        for r in 0..self.rows {
            let grow = g.row(r).to_vec();
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                let orow = out.row_mut(self.indices[k]);
                for (o, gv) in orow.iter_mut().zip(&grow) {
                    *o += v * gv;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_products_match_dense() {
        let dense = Tensor::from_rows(&[[0.0, 2.0, 0.0], [1.0, 0.0, -1.0]]);
        let csr = CsrMatrix::from_dense(&dense);
        assert_eq!(csr.nnz(), 3);
        let x = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(csr.matmul(&x), dense.matmul(&x).unwrap());
        let g = Tensor::from_rows(&[[1.0, -1.0], [0.5, 2.0]]);
        assert_eq!(csr.transpose_matmul(&g), dense.transpose().matmul(&g).unwrap());
        assert_eq!(csr.to_dense(), dense);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let csr = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, 1.0)]);
        assert_eq!(csr.nnz(), 2);
        assert_eq!(csr.to_dense().get(0, 1), 3.5);
    }
}
