//! Compressed sparse row matrices and a sparse Cholesky wrapper.
//!
//! Assembly, products and diagonal scalings live here in a small CSR type.
//! Factorisation is delegated to `faer`'s supernodal LLᵀ with an AMD
//! fill-reducing ordering.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

/// Row-compressed sparse matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|&(j, _)| j);
            for &(j, v) in &row {
                if indices.len() > indptr[i] && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates over the stored `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Sparse product `self * other` (row-by-row accumulation).
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                indices.push(j);
                values.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        }
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scale(&self, left: Option<&[f64]>, right: Option<&[f64]>) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                if let Some(l) = left {
                    out.values[k] *= l[i];
                }
                if let Some(r) = right {
                    out.values[k] *= r[j];
                }
            }
        }
        out
    }

    /// `self + diag(d)`; the diagonal must be structurally present or is inserted.
    pub fn add_diagonal(&self, d: &[f64]) -> CsrMatrix {
        let trips: Vec<_> = self
            .triplets()
            .chain(d.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, &trips)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let trips: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trips)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    fn faer_ref(&self) -> SparseColMatRef<'_, usize, f64> {
        // A symmetric CSR matrix is its own CSC representation.
        let symbolic =
            SymbolicSparseColMatRef::new_checked(self.nrows, self.ncols, &self.indptr, None, &self.indices);
        SparseColMatRef::new(symbolic, &self.values)
    }
}

/// Symbolic analysis (ordering and elimination tree) for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct CholeskyPattern {
    symbolic: Option<SymbolicLlt<usize>>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl CholeskyPattern {
    pub fn analyze(a: &CsrMatrix) -> Self {
        assert_eq!(a.nrows, a.ncols, "Cholesky needs a square matrix");
        let symbolic = (a.nrows > 0).then(|| {
            SymbolicLlt::try_new(a.faer_ref().symbolic(), Side::Lower)
                .expect("symbolic Cholesky analysis failed (out of memory)")
        });
        Self {
            symbolic,
            indptr: a.indptr.clone(),
            indices: a.indices.clone(),
        }
    }

    pub fn matches(&self, a: &CsrMatrix) -> bool {
        self.indptr == a.indptr && self.indices == a.indices
    }
}

/// Numeric LLᵀ factor of a symmetric positive definite matrix.
///
/// Solves only borrow the factor, so several threads may back-substitute
/// concurrently.
#[derive(Debug, Clone)]
pub struct Cholesky {
    llt: Option<Llt<usize, f64>>,
    n: usize,
}

impl Cholesky {
    /// Factorises `a`; on failure returns the first non-positive pivot index.
    pub fn factorize(a: &CsrMatrix) -> Result<Self, usize> {
        Self::factorize_with(&CholeskyPattern::analyze(a), a)
    }

    pub fn factorize_with(pattern: &CholeskyPattern, a: &CsrMatrix) -> Result<Self, usize> {
        assert!(pattern.matches(a), "matrix pattern differs from the analysed one");
        let Some(symbolic) = &pattern.symbolic else {
            return Ok(Self { llt: None, n: 0 });
        };
        match Llt::try_new_with_symbolic(symbolic.clone(), a.faer_ref(), Side::Lower) {
            Ok(llt) => Ok(Self {
                llt: Some(llt),
                n: a.nrows,
            }),
            Err(LltError::Numeric(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot {
                index,
            })) => Err(index),
            Err(LltError::Generic(e)) => panic!("sparse Cholesky failed: {e:?}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        if let Some(llt) = &self.llt {
            llt.solve_in_place(MatMut::from_column_major_slice_mut(b, self.n, 1));
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
