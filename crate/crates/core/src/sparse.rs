//! Compressed sparse row storage and the envelope Cholesky factorization
//! used to precondition the normal equations.

/// Row-compressed sparse matrix built one row at a time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row. Duplicate column indices are summed.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        let start = self.indices.len();
        for (c, v) in entries {
            assert!(c < self.ncols, "column {c} out of range");
            match self.indices[start..].iter().position(|&k| k == c) {
                Some(k) => self.values[start + k] += v,
                None => {
                    self.indices.push(c);
                    self.values.push(v);
                }
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows())
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `y += scale * Aᵀ r`.
    pub fn add_transpose_mul(&self, r: &[f64], scale: f64, y: &mut [f64]) {
        assert_eq!(r.len(), self.nrows());
        for (k, &rk) in r.iter().enumerate() {
            if rk == 0.0 {
                continue;
            }
            for (c, v) in self.row(k) {
                y[c] += scale * v * rk;
            }
        }
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows()];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        out
    }
}

/// Symmetric matrix stored as full CSR with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCsr {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricCsr {
    /// `Σ_b w_b A_bᵀ A_b` for a list of `(A_b, w_b)`.
    pub fn normal_matrix<'a>(n: usize, blocks: impl IntoIterator<Item = (&'a SparseRows, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (a, w) in blocks {
            assert_eq!(a.ncols(), n);
            for r in 0..a.nrows() {
                let entries: Vec<(usize, f64)> = a.row(r).collect();
                for &(i, vi) in &entries {
                    for &(j, vj) in &entries {
                        rows[i].push((j, w * vi * vj));
                    }
                }
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (c, v) in row {
                if c == last {
                    *values.last_mut().expect("non-empty") += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.row(r).find(|&(c, _)| c == r).map_or(0.0, |e| e.1))
            .collect()
    }
}

/// Cholesky factor `L` stored row-wise over each row's envelope
/// `first[r]..=r`. Fill-in stays inside the envelope, so no symbolic
/// analysis is needed beyond finding the first column of each row.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SymmetricCsr) -> Result<Self, NotPositiveDefinite> {
        let n = a.dim();
        let first: Vec<usize> = (0..n)
            .map(|r| a.row(r).map(|(c, _)| c).min().unwrap_or(r).min(r))
            .collect();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for r in 0..n {
            offset.push(offset[r] + (r - first[r] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    data[offset[r] + c - first[r]] = v;
                }
            }
        }
        for r in 0..n {
            let fr = first[r];
            let (done, rest) = data.split_at_mut(offset[r]);
            let row_r = &mut rest[..r - fr + 1];
            for c in fr..r {
                let fc = first[c];
                let row_c = &done[offset[c]..offset[c] + (c - fc + 1)];
                let k0 = fr.max(fc);
                let dot: f64 = row_r[k0 - fr..c - fr]
                    .iter()
                    .zip(&row_c[k0 - fc..c - fc])
                    .map(|(a, b)| a * b)
                    .sum();
                row_r[c - fr] = (row_r[c - fr] - dot) / row_c[c - fc];
            }
            let sq: f64 = row_r[..r - fr].iter().map(|v| v * v).sum();
            let pivot = row_r[r - fr] - sq;
            if !(pivot > 0.0) {
                return Err(NotPositiveDefinite { row: r, pivot });
            }
            row_r[r - fr] = pivot.sqrt();
        }
        Ok(Self {
            first,
            offset,
            data,
        })
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.first.len();
        // Forward: L y = b.
        for r in 0..n {
            let fr = self.first[r];
            let row = &self.data[self.offset[r]..self.offset[r + 1]];
            let dot: f64 = row[..r - fr].iter().zip(&x[fr..r]).map(|(a, b)| a * b).sum();
            x[r] = (x[r] - dot) / row[r - fr];
        }
        // Backward: Lᵀ x = y, column sweep over the stored rows.
        for r in (0..n).rev() {
            let fr = self.first[r];
            let row = &self.data[self.offset[r]..self.offset[r + 1]];
            x[r] /= row[r - fr];
            let xr = x[r];
            for (xc, l) in x[fr..r].iter_mut().zip(&row[..r - fr]) {
                *xc -= l * xr;
            }
        }
    }

    /// Stored entries, a proxy for factorization cost.
    pub fn stored(&self) -> usize {
        self.data.len()
    }
}
