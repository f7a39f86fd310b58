use super::CorpusError;

/// Row-oriented feature storage. Values are kept at 32-bit precision (the
/// on-disk precision); every arithmetic helper accumulates in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Row-major, `n_rows * n_cols` values.
    Dense(Vec<f32>),
    /// CSR layout: row `i` owns `indices[indptr[i]..indptr[i + 1]]`.
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    storage: Storage,
}

/// Borrowed view of one row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f32]),
    Sparse { indices: &'a [u32], values: &'a [f32] },
}

impl<'a> Row<'a> {
    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            Row::Dense(xs) => xs.iter().zip(w).map(|(&x, &w)| x as f64 * w).sum(),
            Row::Sparse { indices, values } => indices
                .iter()
                .zip(values)
                .map(|(&j, &x)| x as f64 * w[j as usize])
                .sum(),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.values().iter().map(|&x| (x as f64) * (x as f64)).sum()
    }

    /// `target += alpha * row`
    pub fn add_scaled_to(&self, alpha: f64, target: &mut [f64]) {
        match *self {
            Row::Dense(xs) => {
                for (t, &x) in target.iter_mut().zip(xs) {
                    *t += alpha * x as f64;
                }
            }
            Row::Sparse { indices, values } => {
                for (&j, &x) in indices.iter().zip(values) {
                    target[j as usize] += alpha * x as f64;
                }
            }
        }
    }

    /// Squared Euclidean distance to a dense point whose squared norm is
    /// `center_sq_norm`.
    pub fn sq_dist(&self, center: &[f64], center_sq_norm: f64) -> f64 {
        match *self {
            Row::Dense(xs) => xs
                .iter()
                .zip(center)
                .map(|(&x, &c)| {
                    let diff = x as f64 - c;
                    diff * diff
                })
                .sum(),
            Row::Sparse { indices, values } => {
                let mut acc = center_sq_norm;
                for (&j, &x) in indices.iter().zip(values) {
                    let c = center[j as usize];
                    let diff = x as f64 - c;
                    acc += diff * diff - c * c;
                }
                acc.max(0.0)
            }
        }
    }

    /// Stored values (all entries for dense rows, the nonzeros for sparse rows).
    pub fn values(&self) -> &'a [f32] {
        match *self {
            Row::Dense(xs) => xs,
            Row::Sparse { values, .. } => values,
        }
    }

    pub fn to_dense(&self, n_cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_cols];
        self.add_scaled_to(1.0, &mut out);
        out
    }
}

impl FeatureMatrix {
    pub fn dense(n_rows: usize, n_cols: usize, values: Vec<f32>) -> Result<Self, CorpusError> {
        if values.len() != n_rows * n_cols {
            return Err(CorpusError::DimensionMismatch(format!(
                "dense payload has {} values, expected {n_rows}x{n_cols}",
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Dense(values),
        })
    }

    pub fn from_dense_rows(n_cols: usize, rows: &[Vec<f64>]) -> Result<Self, CorpusError> {
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(CorpusError::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {n_cols}",
                    row.len()
                )));
            }
            values.extend(row.iter().map(|&x| x as f32));
        }
        Self::dense(rows.len(), n_cols, values)
    }

    /// Builds sparse storage from per-row `(column, value)` lists. Column
    /// indices must be strictly increasing within each row and below `n_cols`.
    pub fn sparse(n_cols: usize, rows: Vec<Vec<(u32, f32)>>) -> Result<Self, CorpusError> {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut prev: Option<u32> = None;
            for (j, x) in row {
                if j as usize >= n_cols {
                    return Err(CorpusError::DimensionMismatch(format!(
                        "row {i}: column index {j} out of range for d={n_cols}"
                    )));
                }
                if prev.is_some_and(|p| p >= j) {
                    return Err(CorpusError::Format(format!(
                        "row {i}: column indices are not strictly increasing"
                    )));
                }
                prev = Some(j);
                indices.push(j);
                values.push(x);
            }
            indptr.push(indices.len());
        }
        check_finite(&values)?;
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Sparse {
                indptr,
                indices,
                values,
            },
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense(values) => Row::Dense(&values[i * self.n_cols..(i + 1) * self.n_cols]),
            Storage::Sparse {
                indptr,
                indices,
                values,
            } => {
                let (lo, hi) = (indptr[i], indptr[i + 1]);
                Row::Sparse {
                    indices: &indices[lo..hi],
                    values: &values[lo..hi],
                }
            }
        }
    }

    pub fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        self.row(i).dot(w)
    }

    /// New matrix holding the given rows, in the given order, with the same
    /// storage kind.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let storage = match &self.storage {
            Storage::Dense(values) => {
                let mut out = Vec::with_capacity(rows.len() * self.n_cols);
                for &i in rows {
                    out.extend_from_slice(&values[i * self.n_cols..(i + 1) * self.n_cols]);
                }
                Storage::Dense(out)
            }
            Storage::Sparse {
                indptr,
                indices,
                values,
            } => {
                let mut new_ptr = Vec::with_capacity(rows.len() + 1);
                let mut new_idx = Vec::new();
                let mut new_val = Vec::new();
                new_ptr.push(0);
                for &i in rows {
                    let (lo, hi) = (indptr[i], indptr[i + 1]);
                    new_idx.extend_from_slice(&indices[lo..hi]);
                    new_val.extend_from_slice(&values[lo..hi]);
                    new_ptr.push(new_idx.len());
                }
                Storage::Sparse {
                    indptr: new_ptr,
                    indices: new_idx,
                    values: new_val,
                }
            }
        };
        FeatureMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            storage,
        }
    }

    /// Stacks two matrices with the same column count. The result is sparse
    /// if either input is.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix, CorpusError> {
        if self.n_cols != other.n_cols {
            return Err(CorpusError::DimensionMismatch(format!(
                "cannot stack d={} with d={}",
                self.n_cols, other.n_cols
            )));
        }
        match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => {
                let mut values = a.clone();
                values.extend_from_slice(b);
                Ok(FeatureMatrix {
                    n_rows: self.n_rows + other.n_rows,
                    n_cols: self.n_cols,
                    storage: Storage::Dense(values),
                })
            }
            _ => {
                let rows = self.sparse_rows().chain(other.sparse_rows()).collect();
                FeatureMatrix::sparse(self.n_cols, rows)
            }
        }
    }

    fn sparse_rows(&self) -> impl Iterator<Item = Vec<(u32, f32)>> + '_ {
        (0..self.n_rows).map(move |i| match self.row(i) {
            Row::Dense(xs) => xs
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(j, &x)| (j as u32, x))
                .collect(),
            Row::Sparse { indices, values } => {
                indices.iter().copied().zip(values.iter().copied()).collect()
            }
        })
    }

    pub fn to_dense(&self) -> FeatureMatrix {
        match &self.storage {
            Storage::Dense(_) => self.clone(),
            Storage::Sparse { .. } => {
                let mut values = vec![0f32; self.n_rows * self.n_cols];
                for i in 0..self.n_rows {
                    if let Row::Sparse { indices, values: xs } = self.row(i) {
                        for (&j, &x) in indices.iter().zip(xs) {
                            values[i * self.n_cols + j as usize] = x;
                        }
                    }
                }
                FeatureMatrix {
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                    storage: Storage::Dense(values),
                }
            }
        }
    }

    pub fn to_sparse(&self) -> FeatureMatrix {
        match &self.storage {
            Storage::Sparse { .. } => self.clone(),
            Storage::Dense(_) => FeatureMatrix::sparse(self.n_cols, self.sparse_rows().collect())
                .expect("rows of a valid dense matrix are valid sparse rows"),
        }
    }

    /// Appends one column (e.g. the task label) to every row.
    pub fn append_column(&self, column: &[f32]) -> Result<FeatureMatrix, CorpusError> {
        if column.len() != self.n_rows {
            return Err(CorpusError::DimensionMismatch(format!(
                "appended column has {} values for {} rows",
                column.len(),
                self.n_rows
            )));
        }
        check_finite(column)?;
        let d = self.n_cols;
        match &self.storage {
            Storage::Dense(values) => {
                let mut out = Vec::with_capacity(self.n_rows * (d + 1));
                for (i, &extra) in column.iter().enumerate() {
                    out.extend_from_slice(&values[i * d..(i + 1) * d]);
                    out.push(extra);
                }
                FeatureMatrix::dense(self.n_rows, d + 1, out)
            }
            Storage::Sparse { .. } => {
                let rows = self
                    .sparse_rows()
                    .zip(column)
                    .map(|(mut row, &extra)| {
                        if extra != 0.0 {
                            row.push((d as u32, extra));
                        }
                        row
                    })
                    .collect();
                FeatureMatrix::sparse(d + 1, rows)
            }
        }
    }

    /// Applies `f(row_index, values)` to every stored row in place. `f` sees
    /// the nonzeros only for sparse storage.
    pub(crate) fn map_rows_in_place(&mut self, mut f: impl FnMut(usize, &mut [f32])) {
        let d = self.n_cols;
        match &mut self.storage {
            Storage::Dense(values) => {
                for (i, row) in values.chunks_mut(d.max(1)).enumerate().take(self.n_rows) {
                    f(i, row);
                }
            }
            Storage::Sparse { indptr, values, .. } => {
                for i in 0..self.n_rows {
                    f(i, &mut values[indptr[i]..indptr[i + 1]]);
                }
            }
        }
    }
}

fn check_finite(values: &[f32]) -> Result<(), CorpusError> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(pos) => Err(CorpusError::NonFinite(format!(
            "value #{pos} is {}",
            values[pos]
        ))),
        None => Ok(()),
    }
}
