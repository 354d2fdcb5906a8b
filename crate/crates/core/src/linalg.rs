//! Dense symmetric linear algebra on correlation matrices.
//!
//! Index sets are 1-based throughout the public API, so a reported set
//! `[1, 3]` means the first and third coordinates. Every application of an
//! inverse goes through triangular solves against a Cholesky factor; the
//! explicit inverse kept in [`CorrelationSpec`] is only used for reports.

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const UNIT_DIAGONAL_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-12;

/// A strictly increasing set of 1-based coordinate indices inside `{1..dim}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSet {
    members: Vec<usize>,
    dim: usize,
}

impl IndexSet {
    /// Builds a non-empty index set.
    pub fn new(members: Vec<usize>, dim: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        Self::new_allow_empty(members, dim)
    }

    pub fn new_allow_empty(members: Vec<usize>, dim: usize) -> Result<Self> {
        for &m in &members {
            if m == 0 || m > dim {
                return Err(Error::IndexOutOfRange { index: m, dim });
            }
        }
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedIndexSet(members));
        }
        Ok(Self { members, dim })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            members: Vec::new(),
            dim,
        }
    }

    pub fn full(dim: usize) -> Self {
        Self {
            members: (1..=dim).collect(),
            dim,
        }
    }

    /// Builds the set from 0-based positions, sorting and deduplicating them.
    pub fn from_zero_based(mut positions: Vec<usize>, dim: usize) -> Result<Self> {
        positions.sort_unstable();
        positions.dedup();
        Self::new_allow_empty(positions.into_iter().map(|p| p + 1).collect(), dim)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    /// 0-based positions, in increasing order.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|m| m - 1)
    }

    pub fn complement(&self) -> IndexSet {
        IndexSet {
            members: (1..=self.dim).filter(|i| !self.contains(*i)).collect(),
            dim: self.dim,
        }
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.members.iter().all(|m| other.contains(*m))
    }

    /// Picks the entries of a full-length vector that belong to the set.
    pub fn select(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(self.positions().map(|p| v[p]).collect())
    }
}

impl Serialize for IndexSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.members.serialize(serializer)
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Fails when a pivot drops to `1e-12 * max(diag)` or below.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: m.ncols(),
        });
    }
    let scale = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
    let tol = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite {
                index: j + 1,
                pivot: d,
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for p in 0..i {
            s -= l[(i, p)] * y[p];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = y.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for p in (i + 1)..n {
            s -= l[(p, i)] * x[p];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `L Lᵀ x = b`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

fn cholesky_solve_matrix(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for c in 0..b.ncols() {
        let col = cholesky_solve(l, &b.column(c).into_owned());
        out.set_column(c, &col);
    }
    out
}

fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Cholesky factor of a principal submatrix `Σ_II`.
#[derive(Debug, Clone)]
pub struct PrincipalFactor {
    index: IndexSet,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl PrincipalFactor {
    pub fn index(&self) -> &IndexSet {
        &self.index
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `ln |Σ_II|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `Σ_II⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        cholesky_solve(&self.chol, b)
    }

    /// `bᵀ Σ_II⁻¹ b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        solve_lower(&self.chol, b).norm_squared()
    }
}

/// A validated positive definite correlation matrix with cached factorizations.
#[derive(Debug, Clone)]
pub struct CorrelationSpec {
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    log_det: f64,
}

impl CorrelationSpec {
    /// Validates `sigma` and caches its Cholesky factor, inverse and log-determinant.
    pub fn factorize(sigma: DMatrix<f64>) -> Result<Self> {
        let k = sigma.nrows();
        if sigma.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: sigma.ncols(),
            });
        }
        if k < 2 {
            return Err(Error::DimensionTooSmall(k));
        }
        for i in 0..k {
            for j in 0..i {
                let diff = (sigma[(i, j)] - sigma[(j, i)]).abs();
                if !(diff <= SYMMETRY_TOL) {
                    return Err(Error::NotSymmetric {
                        row: i + 1,
                        col: j + 1,
                        diff,
                    });
                }
            }
        }
        for i in 0..k {
            let d = sigma[(i, i)];
            if !((d - 1.0).abs() <= UNIT_DIAGONAL_TOL) {
                return Err(Error::NotCorrelation {
                    index: i + 1,
                    value: d,
                });
            }
        }
        let chol = cholesky(&sigma)?;
        let sigma_inv = cholesky_solve_matrix(&chol, &DMatrix::identity(k, k));
        let log_det = log_det_from_cholesky(&chol);
        Ok(Self {
            sigma,
            chol,
            sigma_inv,
            log_det,
        })
    }

    /// `(1 − ρ) I + ρ 1 1ᵀ`.
    pub fn equicorrelated(k: usize, rho: f64) -> Result<Self> {
        let sigma = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho });
        Self::factorize(sigma)
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::factorize(DMatrix::identity(k, k))
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Explicit inverse, for reporting only.
    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    fn check_set(&self, set: &IndexSet) -> Result<()> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: set.dim(),
            });
        }
        Ok(())
    }

    fn check_vec(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `Σ` restricted to `rows × cols`.
    pub fn submatrix(&self, rows: &IndexSet, cols: &IndexSet) -> Result<DMatrix<f64>> {
        self.check_set(rows)?;
        self.check_set(cols)?;
        let r: Vec<usize> = rows.positions().collect();
        let c: Vec<usize> = cols.positions().collect();
        Ok(DMatrix::from_fn(r.len(), c.len(), |i, j| {
            self.sigma[(r[i], c[j])]
        }))
    }

    /// Factorizes the principal submatrix `Σ_II`.
    pub fn principal(&self, index: &IndexSet) -> Result<PrincipalFactor> {
        if index.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        let sub = self.submatrix(index, index)?;
        let chol = cholesky(&sub)?;
        let log_det = log_det_from_cholesky(&chol);
        Ok(PrincipalFactor {
            index: index.clone(),
            chol,
            log_det,
        })
    }

    /// `xᵀ Σ⁻¹ x`.
    pub fn quad_form_inv(&self, x: &[f64]) -> Result<f64> {
        self.check_vec(x)?;
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NotFinite(*bad));
        }
        Ok(solve_lower(&self.chol, &DVector::from_column_slice(x)).norm_squared())
    }

    /// `Σ⁻¹ x`.
    pub fn solve(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_vec(x)?;
        Ok(cholesky_solve(&self.chol, &DVector::from_column_slice(x)))
    }

    /// Conditional covariance `Σ_JJ − Σ_JI Σ_II⁻¹ Σ_IJ` with `J` the complement of `I`.
    pub fn schur_complement(&self, index: &IndexSet) -> Result<DMatrix<f64>> {
        self.check_set(index)?;
        let comp = index.complement();
        if comp.is_empty() {
            return Err(Error::EmptyComplement);
        }
        let factor = self.principal(index)?;
        let s_ij = self.submatrix(index, &comp)?;
        let s_jj = self.submatrix(&comp, &comp)?;
        let solved = cholesky_solve_matrix(factor.chol(), &s_ij);
        let mut out = s_jj - s_ij.transpose() * solved;
        // restore exact symmetry lost to rounding
        let n = out.nrows();
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(out)
    }

    /// `Σ_JI Σ_II⁻¹ a_I`, of length `|J|`.
    pub fn projection_vector(&self, index: &IndexSet, a_i: &[f64]) -> Result<DVector<f64>> {
        self.check_set(index)?;
        if a_i.len() != index.len() {
            return Err(Error::DimensionMismatch {
                expected: index.len(),
                actual: a_i.len(),
            });
        }
        let comp = index.complement();
        if comp.is_empty() {
            return Err(Error::EmptyComplement);
        }
        let factor = self.principal(index)?;
        let lam = factor.solve(&DVector::from_column_slice(a_i));
        Ok(self.submatrix(&comp, index)? * lam)
    }
}
