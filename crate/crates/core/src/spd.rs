//! Symmetric positive definite matrices and the two Riemannian
//! (dis)similarity measures used by the clustering pipeline.
//!
//! All matrix functions (log, exp, inverse square root) go through a sorted
//! symmetric eigendecomposition. Inputs are symmetric by construction, so
//! the eigendecomposition is both exact in structure and reusable.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative per-entry tolerance for the symmetry check at construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A d×d symmetric positive definite matrix, the atomic data point.
///
/// Values are immutable after construction and cheap to share across
/// threads; every operation on them is a pure function.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry and strict positive definiteness, then wraps the
    /// matrix. Use [`make_spd`] for inputs that may need regularization.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.is_empty() {
            return Err(Error::Dimension("matrix must be non-empty".into()));
        }
        check_finite(&entries)?;
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                let a = entries[(i, j)];
                let b = entries[(j, i)];
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(Error::Usage(format!(
                        "matrix is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        // Cholesky succeeds exactly for positive definite matrices.
        if nalgebra::Cholesky::new(entries.clone()).is_none() {
            return Err(Error::Numeric(
                "matrix is not positive definite".into(),
            ));
        }
        Ok(Self { entries })
    }

    /// Matrix dimension d.
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// Matrix logarithm V·diag(ln λ)·Vᵀ. The result is symmetric but in
    /// general not positive definite.
    pub fn log(&self) -> Result<DMatrix<f64>> {
        let eigen = symmetric_eigenpair(&self.entries)?;
        for &v in &eigen.values {
            if v <= 0.0 {
                return Err(Error::Numeric(format!(
                    "non-positive eigenvalue {v} in matrix logarithm"
                )));
            }
        }
        Ok(eigen.map_spectrum(f64::ln))
    }

    /// Log-determinant via Cholesky, stable for large dimensions.
    pub fn log_det(&self) -> f64 {
        // Construction guarantees positive definiteness.
        let chol = nalgebra::Cholesky::new(self.entries.clone())
            .expect("SpdMatrix is positive definite by construction");
        2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
    }

    /// Inverse square root V·diag(λ^{-1/2})·Vᵀ.
    fn inv_sqrt(&self) -> Result<DMatrix<f64>> {
        let eigen = symmetric_eigenpair(&self.entries)?;
        for &v in &eigen.values {
            if v <= 0.0 {
                return Err(Error::Numeric(format!(
                    "non-positive eigenvalue {v} in inverse square root"
                )));
            }
        }
        Ok(eigen.map_spectrum(|l| 1.0 / l.sqrt()))
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order and eigenvectors as matching columns.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPair {
    /// Rebuilds V·diag(f(λ))·Vᵀ, symmetrized to kill round-off skew.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.values.len();
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            self.values.iter().map(|&v| f(v)),
        ));
        let rebuilt = &self.vectors * diag * self.vectors.transpose();
        symmetrize(&rebuilt)
    }
}

/// Sorted eigendecomposition of a symmetric matrix.
pub fn symmetric_eigenpair(m: &DMatrix<f64>) -> Result<EigenPair> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let eigen = nalgebra::SymmetricEigen::new(symmetrize(m));
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("eigenvalues of a finite symmetric matrix are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eigen.eigenvectors.column(src));
    }
    Ok(EigenPair { values, vectors })
}

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Scale-aware default eigenvalue floor: 1e-6 · (trace(sym(raw))/d + 1).
pub fn default_floor(raw: &DMatrix<f64>) -> f64 {
    let d = raw.nrows().max(1) as f64;
    1e-6 * (raw.trace() / d + 1.0)
}

/// Builds an SPD matrix from an arbitrary square matrix by symmetrizing,
/// eigendecomposing and clamping every eigenvalue to at least `floor`.
///
/// Sample covariances of degenerate regions can be singular; the clamp
/// restores strict positive definiteness.
pub fn make_spd(raw: &DMatrix<f64>, floor: f64) -> Result<SpdMatrix> {
    if raw.nrows() != raw.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            raw.nrows(),
            raw.ncols()
        )));
    }
    if raw.is_empty() {
        return Err(Error::Dimension("matrix must be non-empty".into()));
    }
    check_finite(raw)?;
    if !(floor > 0.0) {
        return Err(Error::Usage(format!("floor must be positive, got {floor}")));
    }
    let eigen = symmetric_eigenpair(raw)?;
    let clamped = eigen.map_spectrum(|l| l.max(floor));
    // Positive definiteness holds by construction; skip re-validation.
    Ok(SpdMatrix { entries: clamped })
}

/// Symmetric matrix exponential V·diag(e^λ)·Vᵀ; the inverse of
/// [`SpdMatrix::log`]. The exponential of a symmetric matrix is SPD.
pub fn exp_symmetric(s: &DMatrix<f64>) -> Result<SpdMatrix> {
    let eigen = symmetric_eigenpair(s)?;
    Ok(SpdMatrix {
        entries: eigen.map_spectrum(f64::exp),
    })
}

/// Geodesic distance induced by the affine invariant Riemannian metric:
/// δ_g(X,Y) = ‖log(X^{-1/2} Y X^{-1/2})‖_F.
pub fn airm_distance(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_same_dim(x, y)?;
    let xis = x.inv_sqrt()?;
    let inner = symmetrize(&(&xis * y.matrix() * &xis));
    let eigen = symmetric_eigenpair(&inner)?;
    let mut sum = 0.0;
    for &v in &eigen.values {
        if v <= 0.0 {
            return Err(Error::Numeric(format!(
                "non-positive eigenvalue {v} in AIRM distance"
            )));
        }
        sum += v.ln().powi(2);
    }
    Ok(sum.sqrt())
}

/// Symmetric Stein divergence (Jensen-Bregman LogDet divergence):
/// δ_s(X,Y) = log|(X+Y)/2| − ½ log|XY|, computed with Cholesky
/// log-determinants to avoid overflow.
pub fn stein_divergence(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_same_dim(x, y)?;
    let mid = (x.matrix() + y.matrix()) * 0.5;
    let chol = nalgebra::Cholesky::new(mid).ok_or_else(|| {
        Error::Numeric("midpoint (X+Y)/2 is not positive definite".into())
    })?;
    let log_det_mid =
        2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(log_det_mid - 0.5 * (x.log_det() + y.log_det()))
}

fn check_same_dim(x: &SpdMatrix, y: &SpdMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    Ok(())
}
