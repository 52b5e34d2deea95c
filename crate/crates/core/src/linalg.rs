//! Dense linear algebra for desk-scale problems.
//!
//! Everything here works on small dense matrices: least squares on a column
//! subset through a Householder QR of that subset, orthogonal projections
//! built from the same factorization, and extreme eigenvalues of small
//! symmetric matrices. Column indices in the public API are 1-based.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold on `sigma_min / sigma_max` below which a column subset
/// is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Symmetry tolerance (absolute, entrywise) for [`symmetric_eigen_extremes`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Largest dimension accepted by [`symmetric_eigen_extremes`].
pub const MAX_EIGEN_DIM: usize = 64;

/// Dense real `m x n` matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    inner: DMatrix<f64>,
}

impl Matrix {
    /// Build from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input(format!("matrix must be at least 1x1, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::input(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        check_finite(data, "matrix")?;
        Ok(Matrix { inner: DMatrix::from_row_slice(rows, cols, data) })
    }

    /// Build from a list of equally long columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::input("matrix must be at least 1x1"));
        }
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::input("columns have different lengths"));
        }
        let data: Vec<f64> = columns.iter().flatten().copied().collect();
        check_finite(&data, "matrix")?;
        Ok(Matrix { inner: DMatrix::from_column_slice(rows, cols, &data) })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("identity dimension must be positive"));
        }
        Ok(Matrix { inner: DMatrix::identity(n, n) })
    }

    pub(crate) fn from_nalgebra(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.nrows() > 0 && inner.ncols() > 0);
        Matrix { inner }
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    /// Entry at 0-based storage position `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    /// Column `index` (1-based) as a contiguous slice.
    pub fn column(&self, index: usize) -> &[f64] {
        assert!(index >= 1 && index <= self.cols(), "column index {index} out of range");
        let m = self.rows();
        &self.inner.as_slice()[(index - 1) * m..index * m]
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.inner.transpose().as_slice().to_vec()
    }

    pub fn as_nalgebra(&self) -> &DMatrix<f64> {
        &self.inner
    }

    /// `Phi * u` for a length-`n` vector.
    pub fn mul_vec(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.cols() {
            return Err(Error::input(format!(
                "vector length {} does not match {} columns",
                u.len(),
                self.cols()
            )));
        }
        let mut out = vec![0.0; self.rows()];
        for (j, &uj) in u.iter().enumerate() {
            if uj != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.column(j + 1)) {
                    *o += a * uj;
                }
            }
        }
        Ok(out)
    }

    /// `Phi' r`: the correlation of every column with `r`.
    pub fn correlations(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.rows() {
            return Err(Error::input(format!(
                "vector length {} does not match {} rows",
                r.len(),
                self.rows()
            )));
        }
        Ok((1..=self.cols()).map(|j| dot(self.column(j), r)).collect())
    }

    /// Full Gram matrix `Phi' Phi`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.inner.tr_mul(&self.inner)
    }

    /// Squared Euclidean norm of every column.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        (1..=self.cols()).map(|j| norm_sq(self.column(j))).collect()
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}) {:?}", self.rows(), self.cols(), self.to_row_major())
    }
}

/// Strictly increasing set of 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// `{1, ..., n}`.
    pub fn full(n: usize) -> Self {
        IndexSet((1..=n).collect())
    }

    /// Sorts the input; rejects zero and duplicates.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.first() == Some(&0) {
            return Err(Error::input("indices are 1-based; 0 is not a valid index"));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("duplicate index in index set"));
        }
        Ok(IndexSet(indices))
    }

    /// Like [`IndexSet::new`] but also checks every member is at most `n`.
    pub fn within(indices: Vec<usize>, n: usize) -> Result<Self> {
        let set = Self::new(indices)?;
        set.check_bound(n)?;
        Ok(set)
    }

    pub fn check_bound(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last > n => {
                Err(Error::input(format!("index {last} out of range [1, {n}]")))
            }
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Returns false when `index` was already present.
    pub fn insert(&mut self, index: usize) -> bool {
        assert!(index >= 1, "indices are 1-based");
        match self.0.binary_search(&index) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, index);
                true
            }
        }
    }

    pub fn with(&self, index: usize) -> Self {
        let mut out = self.clone();
        out.insert(index);
        out
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.iter().copied().filter(|i| !other.contains(*i)).collect())
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut v: Vec<usize> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }

    pub fn intersection(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.iter().copied().filter(|i| other.contains(*i)).collect())
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|i| !other.contains(*i))
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub(crate) fn check_finite(data: &[f64], what: &str) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(pos) => Err(Error::input(format!("{what} entry {pos} is not finite"))),
        None => Ok(()),
    }
}

/// Columns of `phi` indexed by `support`, in ascending index order.
pub fn submatrix(phi: &Matrix, support: &IndexSet) -> Result<Matrix> {
    support.check_bound(phi.cols())?;
    if support.is_empty() {
        return Err(Error::input("cannot extract a matrix with zero columns"));
    }
    Ok(Matrix::from_nalgebra(gather_columns(phi, support)))
}

fn gather_columns(phi: &Matrix, support: &IndexSet) -> DMatrix<f64> {
    let m = phi.rows();
    let mut data = Vec::with_capacity(m * support.len());
    for j in support.iter() {
        data.extend_from_slice(phi.column(j));
    }
    DMatrix::from_vec(m, support.len(), data)
}

/// Thin QR factorization of `Phi_S`, checked for full column rank.
///
/// The empty support is legal: it has no columns, solves to an empty
/// coefficient vector and projects nothing out.
pub struct SupportFactor {
    rows: usize,
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl SupportFactor {
    pub fn new(phi: &Matrix, support: &IndexSet) -> Result<Self> {
        support.check_bound(phi.cols())?;
        let m = phi.rows();
        let k = support.len();
        if k == 0 {
            return Ok(SupportFactor {
                rows: m,
                a: DMatrix::zeros(m, 0),
                q: DMatrix::zeros(m, 0),
                r: DMatrix::zeros(0, 0),
            });
        }
        if k > m {
            return Err(Error::DegenerateSystem(format!(
                "{k} columns cannot be independent in dimension {m}"
            )));
        }
        let a = gather_columns(phi, support);
        let qr = a.clone().qr();
        let r = qr.r();
        let sv = r.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smax.is_nan() || smax <= 0.0 || smin < RANK_TOLERANCE * smax {
            return Err(Error::DegenerateSystem(format!(
                "columns {support} are rank deficient (sigma_min/sigma_max = {:e})",
                if smax > 0.0 { smin / smax } else { 0.0 }
            )));
        }
        Ok(SupportFactor { rows: m, a, q: qr.q(), r })
    }

    pub fn len(&self) -> usize {
        self.r.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.rows {
            return Err(Error::input(format!(
                "vector length {} does not match {} rows",
                y.len(),
                self.rows
            )));
        }
        Ok(())
    }

    fn solve_qr(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.r
            .solve_upper_triangular(&self.q.tr_mul(y))
            .ok_or_else(|| Error::DegenerateSystem("triangular factor is singular".into()))
    }

    /// Coefficients `c` minimizing `||y - Phi_S c||_2`, with one step of
    /// iterative refinement.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let yv = DVector::from_column_slice(y);
        let c = self.solve_qr(&yv)?;
        let c = &c + self.solve_qr(&(&yv - &self.a * &c))?;
        Ok(c.as_slice().to_vec())
    }

    /// `P_S u`: projection onto `span(Phi_S)`.
    pub fn project_onto(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        if self.is_empty() {
            return Ok(vec![0.0; u.len()]);
        }
        let uv = DVector::from_column_slice(u);
        let coeffs = self.q.tr_mul(&uv);
        Ok((&self.q * coeffs).as_slice().to_vec())
    }

    /// `P⊥_S u = u - P_S u`.
    pub fn project_out(&self, u: &[f64]) -> Result<Vec<f64>> {
        let p = self.project_onto(u)?;
        Ok(sub(u, &p))
    }
}

/// Least-squares coefficients on the columns in `support`.
pub fn least_squares_on_support(phi: &Matrix, y: &[f64], support: &IndexSet) -> Result<Vec<f64>> {
    SupportFactor::new(phi, support)?.solve(y)
}

/// Projection of `u` onto the orthogonal complement of `span(Phi_S)`.
pub fn project_orthogonal_complement(phi: &Matrix, support: &IndexSet, u: &[f64]) -> Result<Vec<f64>> {
    SupportFactor::new(phi, support)?.project_out(u)
}

/// Smallest and largest eigenvalue of a small symmetric matrix.
pub fn symmetric_eigen_extremes(a: &Matrix) -> Result<(f64, f64)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::input(format!("matrix is {}x{}, not square", n, a.cols())));
    }
    if n > MAX_EIGEN_DIM {
        return Err(Error::input(format!("dimension {n} exceeds the limit of {MAX_EIGEN_DIM}")));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (a.get(i, j) - a.get(j, i)).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::input(format!("matrix is not symmetric at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    Ok(eigen_extremes_unchecked(a.as_nalgebra().clone()))
}

/// Eigen extremes of a symmetric matrix without validation. The upper
/// triangle is mirrored to the lower one first.
pub(crate) fn eigen_extremes_unchecked(mut a: DMatrix<f64>) -> (f64, f64) {
    let n = a.nrows();
    if n == 1 {
        return (a[(0, 0)], a[(0, 0)]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[(j, i)] = a[(i, j)];
        }
    }
    if n == 2 {
        // closed form keeps the common pair case exact to rounding
        let mean = 0.5 * (a[(0, 0)] + a[(1, 1)]);
        let half = 0.5 * (a[(0, 0)] - a[(1, 1)]);
        let rad = half.hypot(a[(0, 1)]);
        return (mean - rad, mean + rad);
    }
    let eig = SymmetricEigen::new(a);
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}
