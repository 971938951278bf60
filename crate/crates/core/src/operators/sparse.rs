use std::io::{self, Write};

/// Square or rectangular sparse matrix in compressed-row form. Column
/// indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseOperator {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from per-row entry lists. Duplicate columns are summed and
    /// exact zeros dropped.
    pub fn from_rows<R>(ncols: usize, rows: R) -> Self
    where
        R: IntoIterator<Item = Vec<(usize, f64)>>,
    {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let start = col_idx.len();
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range for {ncols} columns");
                if col_idx.len() > start && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            // drop entries that cancelled
            let mut w = start;
            for r in start..col_idx.len() {
                if values[r] != 0.0 {
                    col_idx[w] = col_idx[r];
                    values[w] = values[r];
                    w += 1;
                }
            }
            col_idx.truncate(w);
            values.truncate(w);
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            nrows: row_ptr.len() - 1,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        Self::from_rows(ncols, rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "operand length mismatch");
        assert_eq!(y.len(), self.nrows, "output length mismatch");
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        for v in &mut self.values {
            *v *= alpha;
        }
        self.drop_zeros();
        self
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &SparseOperator, beta: f64) -> SparseOperator {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut a, mut b) = (0, 0);
            while a < ca.len() || b < cb.len() {
                let (c, v) = if b == cb.len() || (a < ca.len() && ca[a] < cb[b]) {
                    a += 1;
                    (ca[a - 1], alpha * va[a - 1])
                } else if a == ca.len() || cb[b] < ca[a] {
                    b += 1;
                    (cb[b - 1], beta * vb[b - 1])
                } else {
                    a += 1;
                    b += 1;
                    (ca[a - 1], alpha * va[a - 1] + beta * vb[b - 1])
                };
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &SparseOperator) -> SparseOperator {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let n = other.ncols;
        let mut acc = vec![0.0; n];
        let mut marker = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    col_idx.push(j);
                    values.push(acc[j]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            nrows: self.nrows,
            ncols: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Replace row `i` by `entries` (sorted, no duplicates).
    pub fn with_row(&self, i: usize, entries: &[(usize, f64)]) -> SparseOperator {
        let rows = (0..self.nrows).map(|r| {
            if r == i {
                entries.to_vec()
            } else {
                let (c, v) = self.row(r);
                c.iter().copied().zip(v.iter().copied()).collect()
            }
        });
        SparseOperator::from_rows(self.ncols, rows)
    }

    fn drop_zeros(&mut self) {
        let mut w = 0;
        let mut row_ptr = vec![0; self.nrows + 1];
        for i in 0..self.nrows {
            for r in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.values[r] != 0.0 {
                    self.col_idx[w] = self.col_idx[r];
                    self.values[w] = self.values[r];
                    w += 1;
                }
            }
            row_ptr[i + 1] = w;
        }
        self.col_idx.truncate(w);
        self.values.truncate(w);
        self.row_ptr = row_ptr;
    }

    /// Plain-text dump, one `row col value` triplet per line.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                writeln!(w, "{i} {j} {x:.17e}")?;
            }
        }
        Ok(())
    }
}
