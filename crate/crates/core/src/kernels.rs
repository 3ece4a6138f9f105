//! Kernel functions on SPD matrices and Gram matrix assembly.
//!
//! Three kernels are supported: the Log-Euclidean Gaussian kernel (positive
//! definite for any γ > 0), the Stein kernel (positive definite only for a
//! restricted set of β values) and a plain Euclidean Gaussian kernel on raw
//! matrix entries, used as the flat-geometry baseline.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spd::{stein_divergence, symmetric_eigenpair, SpdMatrix};

/// Kernel choice plus its width/exponent parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// κ_g(X,Y) = exp(−γ‖log X − log Y‖_F²).
    LogEuclideanGaussian { gamma: f64 },
    /// κ_s(X,Y) = exp(−β δ_s(X,Y)) with δ_s the Stein divergence.
    Stein { beta: f64 },
    /// exp(−γ‖X − Y‖_F²) on raw entries, ignoring manifold geometry.
    EuclideanGaussian { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::LogEuclideanGaussian { gamma }
            | KernelSpec::EuclideanGaussian { gamma } => {
                if !(gamma > 0.0) {
                    return Err(Error::Usage(format!(
                        "kernel width gamma must be positive, got {gamma}"
                    )));
                }
            }
            KernelSpec::Stein { beta } => {
                if !(beta > 0.0) {
                    return Err(Error::Usage(format!(
                        "Stein exponent beta must be positive, got {beta}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when this spec cannot guarantee a positive definite Gram on
    /// d×d inputs. Only the Stein kernel has such a restriction: β must be
    /// a half-integer in {1/2, 1, ..., (d−1)/2} or any value > (d−1)/2.
    /// A violation is worth a warning, not an error: the Gram may still be
    /// usable and indefiniteness surfaces in the solver's factorization.
    pub fn positive_definiteness_warning(&self, dim: usize) -> bool {
        match *self {
            KernelSpec::Stein { beta } => {
                let limit = (dim as f64 - 1.0) / 2.0;
                if beta > limit {
                    return false;
                }
                let doubled = 2.0 * beta;
                !(doubled.fract() == 0.0 && doubled >= 1.0 && beta <= limit)
            }
            _ => false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::LogEuclideanGaussian { .. } => "log_euclidean_gaussian",
            KernelSpec::Stein { .. } => "stein",
            KernelSpec::EuclideanGaussian { .. } => "euclidean_gaussian",
        }
    }
}

/// N×N symmetric matrix of pairwise kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGram {
    entries: DMatrix<f64>,
}

impl KernelGram {
    /// Wraps a precomputed Gram matrix, checking shape and symmetry.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension(format!(
                "Gram matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                let a = entries[(i, j)];
                let b = entries[(j, i)];
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::Usage(format!(
                        "Gram matrix is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Smallest eigenvalue, the positive definiteness diagnostic.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eigen = symmetric_eigenpair(&self.entries)?;
        Ok(*eigen
            .values
            .last()
            .expect("Gram matrix is non-empty"))
    }
}

/// Log-Euclidean Gaussian kernel value exp(−γ‖log X − log Y‖_F²).
pub fn kernel_log_euclidean_gaussian(
    x: &SpdMatrix,
    y: &SpdMatrix,
    gamma: f64,
) -> Result<f64> {
    KernelSpec::LogEuclideanGaussian { gamma }.validate()?;
    check_same_dim(x, y)?;
    Ok(log_euclidean_from_logs(&x.log()?, &y.log()?, gamma))
}

/// Stein kernel value exp(−β δ_s(X,Y)).
pub fn kernel_stein(x: &SpdMatrix, y: &SpdMatrix, beta: f64) -> Result<f64> {
    KernelSpec::Stein { beta }.validate()?;
    Ok((-beta * stein_divergence(x, y)?).exp())
}

/// Euclidean Gaussian kernel value exp(−γ‖X − Y‖_F²) on raw entries.
pub fn kernel_euclidean_gaussian(
    x: &SpdMatrix,
    y: &SpdMatrix,
    gamma: f64,
) -> Result<f64> {
    KernelSpec::EuclideanGaussian { gamma }.validate()?;
    check_same_dim(x, y)?;
    Ok((-gamma * squared_frobenius_diff(x.matrix(), y.matrix())).exp())
}

/// Builds the full Gram matrix over a dataset.
///
/// Per-point quantities (matrix logs, log-determinants) are computed once
/// before the O(N²) pair loop, which would otherwise dominate the cost at
/// descriptor-scale dimensions. The pair loop runs parallel over rows with
/// disjoint writes, so parallel and sequential runs are bit-identical.
pub fn gram(data: &[SpdMatrix], spec: &KernelSpec) -> Result<KernelGram> {
    spec.validate()?;
    if data.len() < 2 {
        return Err(Error::Usage(format!(
            "Gram matrix needs at least 2 points, got {}",
            data.len()
        )));
    }
    let dim = data[0].dim();
    if let Some(bad) = data.iter().find(|x| x.dim() != dim) {
        return Err(Error::Dimension(format!(
            "dataset mixes dimensions {} and {}",
            dim,
            bad.dim()
        )));
    }

    let n = data.len();
    let mut entries = vec![0.0f64; n * n];
    match *spec {
        KernelSpec::LogEuclideanGaussian { gamma } => {
            let logs = data
                .par_iter()
                .map(|x| x.log())
                .collect::<Result<Vec<_>>>()?;
            entries
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| {
                    for (j, slot) in row.iter_mut().enumerate() {
                        *slot = log_euclidean_from_logs(&logs[i], &logs[j], gamma);
                    }
                });
        }
        KernelSpec::Stein { beta } => {
            let log_dets: Vec<f64> = data.par_iter().map(|x| x.log_det()).collect();
            let rows: Vec<Result<()>> = entries
                .par_chunks_mut(n)
                .enumerate()
                .map(|(i, row)| {
                    for (j, slot) in row.iter_mut().enumerate() {
                        let mid = (data[i].matrix() + data[j].matrix()) * 0.5;
                        let chol = nalgebra::Cholesky::new(mid).ok_or_else(|| {
                            Error::Numeric(format!(
                                "midpoint of points {i} and {j} is not positive definite"
                            ))
                        })?;
                        let log_det_mid = 2.0
                            * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                        let div =
                            log_det_mid - 0.5 * (log_dets[i] + log_dets[j]);
                        *slot = (-beta * div).exp();
                    }
                    Ok(())
                })
                .collect();
            rows.into_iter().collect::<Result<Vec<_>>>()?;
        }
        KernelSpec::EuclideanGaussian { gamma } => {
            entries
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| {
                    for (j, slot) in row.iter_mut().enumerate() {
                        let d2 =
                            squared_frobenius_diff(data[i].matrix(), data[j].matrix());
                        *slot = (-gamma * d2).exp();
                    }
                });
        }
    }

    let k = DMatrix::from_row_slice(n, n, &entries);
    // The solver's A-update assumes a symmetric K; enforce it exactly.
    let k = (&k + k.transpose()) * 0.5;
    KernelGram::new(k)
}

fn log_euclidean_from_logs(lx: &DMatrix<f64>, ly: &DMatrix<f64>, gamma: f64) -> f64 {
    (-gamma * squared_frobenius_diff(lx, ly)).exp()
}

fn squared_frobenius_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
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

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn diag(values: &[f64]) -> SpdMatrix {
        SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_row_slice(values)))
            .unwrap()
    }

    fn identity(d: usize) -> SpdMatrix {
        SpdMatrix::new(DMatrix::identity(d, d)).unwrap()
    }

    #[test]
    fn log_euclidean_gaussian_values() {
        let e = std::f64::consts::E;
        let x = diag(&[e, 1.0]);
        let id = identity(2);
        assert_relative_eq!(
            kernel_log_euclidean_gaussian(&x, &x, 0.7).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // log difference diag(1, 0), squared Frobenius norm 1.
        assert_relative_eq!(
            kernel_log_euclidean_gaussian(&x, &id, 0.5).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn stein_kernel_values() {
        let id = identity(2);
        let y = diag(&[3.0, 3.0]);
        assert_relative_eq!(kernel_stein(&id, &id, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        // exp(−(ln 4 − ln 3)) = 3/4.
        assert_relative_eq!(
            kernel_stein(&id, &y, 1.0).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        // exp(−2·2·ln(25/16)/2) = (16/25)² = 0.4096 exactly.
        let a = diag(&[1.0, 4.0]);
        let b = diag(&[4.0, 1.0]);
        assert_relative_eq!(
            kernel_stein(&a, &b, 2.0).unwrap(),
            0.4096,
            epsilon = 1e-12
        );
    }

    #[test]
    fn euclidean_gaussian_values() {
        let id = identity(2);
        let two = diag(&[2.0, 2.0]);
        assert_relative_eq!(
            kernel_euclidean_gaussian(&id, &id, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            kernel_euclidean_gaussian(&id, &two, 1.0).unwrap(),
            (-2.0f64).exp(),
            epsilon = 1e-12
        );
        // Distinct metrics: the Euclidean kernel sees diag(e,1) vs I at a
        // different distance than the Log-Euclidean kernel does.
        let e = std::f64::consts::E;
        let x = diag(&[e, 1.0]);
        let le = kernel_log_euclidean_gaussian(&x, &id, 1.0).unwrap();
        let eu = kernel_euclidean_gaussian(&x, &id, 1.0).unwrap();
        assert!((le - eu).abs() > 1e-3);
    }

    #[test]
    fn kernel_rejects_dimension_mismatch_and_bad_params() {
        let a = identity(2);
        let b = identity(3);
        assert!(matches!(
            kernel_log_euclidean_gaussian(&a, &b, 1.0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            kernel_euclidean_gaussian(&a, &a, 0.0),
            Err(Error::Usage(_))
        ));
        assert!(matches!(kernel_stein(&a, &a, -1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn stein_beta_warning_set() {
        // d = 5: allowed are {0.5, 1, 1.5, 2} and anything > 2.
        let ok = [0.5, 1.0, 1.5, 2.0, 2.1, 7.3];
        let warn = [0.25, 0.75, 1.2, 1.9];
        for beta in ok {
            assert!(
                !KernelSpec::Stein { beta }.positive_definiteness_warning(5),
                "beta={beta} should be fine"
            );
        }
        for beta in warn {
            assert!(
                KernelSpec::Stein { beta }.positive_definiteness_warning(5),
                "beta={beta} should warn"
            );
        }
        assert!(!KernelSpec::LogEuclideanGaussian { gamma: 0.1 }
            .positive_definiteness_warning(5));
    }

    #[test]
    fn gram_of_identical_points_is_all_ones() {
        let data = vec![diag(&[2.0, 3.0]); 4];
        let k = gram(&data, &KernelSpec::LogEuclideanGaussian { gamma: 0.8 }).unwrap();
        assert!(k
            .entries()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn gram_matches_pairwise_ops_exactly() {
        let e = std::f64::consts::E;
        let data = vec![
            diag(&[1.0, 2.0]),
            diag(&[e, 1.0]),
            diag(&[0.5, 0.7]),
            identity(2),
        ];
        let specs = [
            KernelSpec::LogEuclideanGaussian { gamma: 0.5 },
            KernelSpec::Stein { beta: 1.0 },
            KernelSpec::EuclideanGaussian { gamma: 0.3 },
        ];
        for spec in specs {
            let k = gram(&data, &spec).unwrap();
            for i in 0..data.len() {
                for j in 0..data.len() {
                    let expected = match spec {
                        KernelSpec::LogEuclideanGaussian { gamma } => {
                            kernel_log_euclidean_gaussian(&data[j], &data[i], gamma)
                                .unwrap()
                        }
                        KernelSpec::Stein { beta } => {
                            kernel_stein(&data[j], &data[i], beta).unwrap()
                        }
                        KernelSpec::EuclideanGaussian { gamma } => {
                            kernel_euclidean_gaussian(&data[j], &data[i], gamma)
                                .unwrap()
                        }
                    };
                    assert!(
                        (k.entries()[(i, j)] - expected).abs() <= 1e-12,
                        "{} drift at ({i},{j})",
                        spec.name()
                    );
                }
            }
        }
    }

    #[test]
    fn gram_rejects_small_or_mixed_datasets() {
        let spec = KernelSpec::EuclideanGaussian { gamma: 1.0 };
        assert!(matches!(gram(&[], &spec), Err(Error::Usage(_))));
        assert!(matches!(
            gram(&[identity(2)], &spec),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            gram(&[identity(2), identity(3)], &spec),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn two_point_gram_composes_pairwise_value() {
        let a = diag(&[1.0, 3.0]);
        let b = diag(&[2.0, 1.0]);
        let spec = KernelSpec::LogEuclideanGaussian { gamma: 0.4 };
        let k = gram(&[a.clone(), b.clone()], &spec).unwrap();
        let off = kernel_log_euclidean_gaussian(&a, &b, 0.4).unwrap();
        assert_relative_eq!(k.entries()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(k.entries()[(1, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(k.entries()[(0, 1)], off, epsilon = 1e-15);
        assert_relative_eq!(k.entries()[(1, 0)], off, epsilon = 1e-15);
    }
}
