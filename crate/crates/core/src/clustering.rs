//! Segmentation of the coefficient matrix: affinity construction,
//! normalized spectral clustering and the k-means subroutine.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::CoefficientMatrix;
use crate::spd::symmetric_eigenpair;

/// Default number of k-means restarts used by [`spectral_cluster`].
pub const DEFAULT_RESTARTS: usize = 20;

const LLOYD_MAX_ITERS: usize = 300;
const LLOYD_TOL: f64 = 1e-9;

/// Symmetric nonnegative similarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    entries: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension(format!(
                "affinity matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Usage(
                "affinity entries must be finite and nonnegative".into(),
            ));
        }
        for i in 0..entries.nrows() {
            if entries[(i, i)] != 0.0 {
                return Err(Error::Usage(
                    "affinity matrix must have a zero diagonal".into(),
                ));
            }
            for j in (i + 1)..entries.ncols() {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::Usage(format!(
                        "affinity matrix is not symmetric at ({i},{j})"
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
}

/// Cluster labels plus the k-means objective at the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
    /// True when fewer than `k` distinct labels survive (a cluster emptied
    /// and could not be repopulated, e.g. on duplicate-only data).
    pub empty_cluster: bool,
}

/// Affinity W = (|C| + |Cᵀ|)/2 from a coefficient matrix.
pub fn affinity(c: &CoefficientMatrix) -> AffinityMatrix {
    let n = c.size();
    let m = c.entries();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] = 0.5 * (m[(i, j)].abs() + m[(j, i)].abs());
        }
    }
    AffinityMatrix { entries: w }
}

/// Normalized spectral clustering on an affinity matrix.
///
/// Builds the symmetric normalized Laplacian L = I − D^{-1/2} W D^{-1/2},
/// embeds the data in the eigenvectors of the k smallest eigenvalues,
/// row-normalizes the embedding (zero rows stay zero) and runs k-means on
/// the rows. Deterministic for a fixed seed.
pub fn spectral_cluster(
    w: &AffinityMatrix,
    k: usize,
    seed: u64,
) -> Result<ClusteringResult> {
    let n = w.size();
    if k < 2 || k > n {
        return Err(Error::Usage(format!(
            "cluster count must satisfy 2 <= k <= N, got k={k} with N={n}"
        )));
    }
    if w.entries().amax() == 0.0 {
        return Err(Error::Degenerate(
            "affinity matrix is all zero; nothing to cluster".into(),
        ));
    }

    let inv_sqrt_degree: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.entries().row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();

    let mut laplacian = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            laplacian[(i, j)] -=
                w.entries()[(i, j)] * inv_sqrt_degree[i] * inv_sqrt_degree[j];
        }
    }

    // Eigenvalues come back non-increasing; the k smallest sit at the tail.
    let eigen = symmetric_eigenpair(&laplacian)?;
    let mut embedding = DMatrix::zeros(n, k);
    for col in 0..k {
        embedding.set_column(col, &eigen.vectors.column(n - 1 - col));
    }
    for i in 0..n {
        let norm = embedding.row(i).norm();
        if norm > 0.0 {
            for col in 0..k {
                embedding[(i, col)] /= norm;
            }
        }
    }

    kmeans(&embedding, k, seed, DEFAULT_RESTARTS)
}

/// Lloyd's k-means with k-means++ seeding, best of `restarts` runs by
/// inertia (ties keep the lowest restart index). Empty clusters are
/// re-seeded from the point farthest from its assigned centroid.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusteringResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Usage(format!(
            "cluster count must satisfy 1 <= k <= N, got k={k} with N={n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::Usage("restarts must be at least 1".into()));
    }

    let runs: Vec<ClusteringResult> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd_run(points, k, derive_seed(seed, r as u64)))
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| {
            a.inertia
                .partial_cmp(&b.inertia)
                .expect("inertia is finite")
        })
        .expect("at least one restart"))
}

/// Mixes a stream index into a base seed; stream 0 returns the base.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    base.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn lloyd_run(points: &DMatrix<f64>, k: usize, seed: u64) -> ClusteringResult {
    let n = points.nrows();
    let dim = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;

    for _ in 0..LLOYD_MAX_ITERS {
        // Assignment step; ties go to the lowest cluster index.
        let mut inertia = 0.0;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d2 = f64::INFINITY;
            for c in 0..k {
                let d2 = row_dist2(points, i, &centroids, c);
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = c;
                }
            }
            labels[i] = best;
            inertia += best_d2;
        }
        debug_assert!(
            inertia <= prev_inertia + 1e-9 * prev_inertia.max(1.0),
            "k-means inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;

        // Mean update.
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for col in 0..dim {
                sums[(labels[i], col)] += points[(i, col)];
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed from the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        row_dist2(points, a, &centroids, labels[a])
                            .partial_cmp(&row_dist2(points, b, &centroids, labels[b]))
                            .expect("distances are finite")
                    })
                    .expect("non-empty dataset");
                let mut shift2 = 0.0;
                for col in 0..dim {
                    let delta = points[(far, col)] - centroids[(c, col)];
                    shift2 += delta * delta;
                    centroids[(c, col)] = points[(far, col)];
                }
                movement = movement.max(shift2.sqrt());
            } else {
                let inv = 1.0 / counts[c] as f64;
                let mut shift2 = 0.0;
                for col in 0..dim {
                    let updated = sums[(c, col)] * inv;
                    let delta = updated - centroids[(c, col)];
                    shift2 += delta * delta;
                    centroids[(c, col)] = updated;
                }
                movement = movement.max(shift2.sqrt());
            }
        }
        if movement < LLOYD_TOL {
            break;
        }
    }

    // Final assignment against the converged centroids.
    let mut inertia = 0.0;
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for c in 0..k {
            let d2 = row_dist2(points, i, &centroids, c);
            if d2 < best_d2 {
                best_d2 = d2;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d2;
    }

    let mut seen = vec![false; k];
    for &l in &labels {
        seen[l] = true;
    }
    let empty_cluster = seen.iter().any(|&s| !s);

    ClusteringResult {
        labels,
        k,
        inertia,
        empty_cluster,
    }
}

fn seed_plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centroids = DMatrix::zeros(k, dim);
    let mut chosen = vec![false; n];

    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from(&points.row(first));
    chosen[first] = true;

    let mut d2: Vec<f64> = (0..n)
        .map(|i| row_dist2(points, i, &centroids, 0))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut cumulative = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                cumulative += w;
                if cumulative > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining points coincide with a centroid; fall back to
            // the first index not already chosen.
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        centroids.row_mut(c).copy_from(&points.row(pick));
        chosen[pick] = true;
        for i in 0..n {
            d2[i] = d2[i].min(row_dist2(points, i, &centroids, c));
        }
    }
    centroids
}

fn row_dist2(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    let mut sum = 0.0;
    for col in 0..points.ncols() {
        let d = points[(i, col)] - centroids[(c, col)];
        sum += d * d;
    }
    sum
}
