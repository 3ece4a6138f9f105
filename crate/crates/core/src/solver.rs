//! ADMM solver for the kernelized sparse self-expression problem
//!
//!   min_C  λ‖C‖₁ − 2 tr(KC) + tr(CKCᵀ)   s.t.  diag(C) = 0,
//!
//! split through an auxiliary matrix A constrained to equal C off the
//! diagonal, with a multiplier matrix Δ. Each iteration solves the A
//! subproblem in closed form against a cached Cholesky factorization of
//! (2K + ρI), soft-thresholds to get C, and takes a dual step on Δ.

use nalgebra::{DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::kernels::KernelGram;

/// Solver parameters: sparsity weight λ, penalty weight ρ, stopping
/// tolerance ε and the iteration cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.04,
            rho: 1.0,
            epsilon: 1e-4,
            max_iters: 500,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Usage(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Usage(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Usage(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Usage("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// N×N self-expression coefficient matrix with exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    entries: DMatrix<f64>,
}

impl CoefficientMatrix {
    /// Wraps a square matrix whose diagonal is exactly zero.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension(format!(
                "coefficient matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.diagonal().iter().any(|&v| v != 0.0) {
            return Err(Error::Usage(
                "coefficient matrix must have an exactly zero diagonal".into(),
            ));
        }
        Ok(Self { entries })
    }

    /// All-zero coefficients.
    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
        }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|v| v.abs()).sum()
    }
}

/// ADMM iterate: the (A, C, Δ) triple plus the latest residuals.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub a: DMatrix<f64>,
    pub c: CoefficientMatrix,
    pub delta: DMatrix<f64>,
    pub iter: usize,
    /// ‖A − C‖_∞ (elementwise max absolute value).
    pub primal_residual: f64,
    /// ‖A_{t+1} − A_t‖_∞.
    pub step_residual: f64,
}

impl SolverState {
    fn start(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            c: CoefficientMatrix::zeros(n),
            delta: DMatrix::zeros(n, n),
            iter: 0,
            primal_residual: f64::INFINITY,
            step_residual: f64::INFINITY,
        }
    }
}

/// Solve outcome: final coefficients plus per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub c: CoefficientMatrix,
    pub converged: bool,
    pub iters_used: usize,
    /// Objective value after each iteration.
    pub objective_trace: Vec<f64>,
    /// (primal, step) residual pair after each iteration.
    pub residual_trace: Vec<(f64, f64)>,
}

/// Cached Cholesky factorization of (2K + ρI), reused by every A-update.
pub struct PenalizedGram {
    chol: nalgebra::Cholesky<f64, Dyn>,
}

impl PenalizedGram {
    /// Factorizes 2K + ρI once. K positive semidefinite and ρ > 0 make the
    /// system positive definite; failure signals an indefinite Gram, e.g.
    /// a Stein kernel outside its positive definiteness range.
    pub fn new(k: &KernelGram, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::Usage(format!("rho must be positive, got {rho}")));
        }
        let n = k.size();
        let mut system = k.entries() * 2.0;
        for i in 0..n {
            system[(i, i)] += rho;
        }
        let chol = nalgebra::Cholesky::new(system).ok_or_else(|| {
            Error::Numeric(
                "factorization of (2K + rho*I) failed: Gram matrix is indefinite"
                    .into(),
            )
        })?;
        Ok(Self { chol })
    }

    /// Solves M·(2K + ρI)⁻¹ for a row-side system.
    fn solve_right(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        // (2K + ρI) is symmetric, so M·S⁻¹ = (S⁻¹·Mᵀ)ᵀ.
        self.chol.solve(&m.transpose()).transpose()
    }
}

/// Objective λ‖C‖₁ − 2 tr(KC) + tr(CKCᵀ).
///
/// The full reconstruction error in feature space also carries a constant
/// tr(K) term, dropped here since it does not affect the minimizer.
pub fn objective(c: &CoefficientMatrix, k: &KernelGram, lambda: f64) -> Result<f64> {
    if c.size() != k.size() {
        return Err(Error::Dimension(format!(
            "coefficient matrix size {} does not match Gram size {}",
            c.size(),
            k.size()
        )));
    }
    let ck = c.entries() * k.entries();
    // tr(KC) = tr(CK); tr(CKCᵀ) = Σ_ij (CK)_ij C_ij.
    let tr_kc = ck.trace();
    let tr_ckct: f64 = ck
        .iter()
        .zip(c.entries().iter())
        .map(|(a, b)| a * b)
        .sum();
    Ok(lambda * c.l1_norm() - 2.0 * tr_kc + tr_ckct)
}

/// Scalar soft-thresholding S_η(v) = sgn(v)·max(|v| − η, 0).
pub fn shrink(v: f64, eta: f64) -> f64 {
    if v > eta {
        v - eta
    } else if v < -eta {
        v + eta
    } else {
        0.0
    }
}

/// Closed-form A-update: A = (2K + ρC̃ − Δ)(2K + ρI)⁻¹ with C̃ the
/// coefficient matrix with zeroed diagonal.
pub fn update_a(
    k: &KernelGram,
    c_tilde: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    rho: f64,
    factor: &PenalizedGram,
) -> DMatrix<f64> {
    let rhs = k.entries() * 2.0 + c_tilde * rho - delta;
    factor.solve_right(&rhs)
}

/// C-update: elementwise shrinkage of A + Δ/ρ at threshold λ/ρ, then the
/// diagonal is zeroed.
pub fn update_c(
    a: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    lambda: f64,
    rho: f64,
) -> CoefficientMatrix {
    let eta = lambda / rho;
    let mut j = a + delta / rho;
    j.apply(|v| *v = shrink(*v, eta));
    j.fill_diagonal(0.0);
    CoefficientMatrix { entries: j }
}

/// Multiplier update Δ ← Δ + ρ(A − C). The diag(C) compensation term of
/// the full update is identically zero because C's diagonal is exactly
/// zero by construction.
pub fn update_delta(
    delta: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &CoefficientMatrix,
    rho: f64,
) -> DMatrix<f64> {
    delta + (a - c.entries()) * rho
}

/// Runs ADMM from A = C = Δ = 0 until both ‖A − C‖_∞ ≤ ε and
/// ‖A_{t+1} − A_t‖_∞ ≤ ε, or until `max_iters`.
///
/// The factorization of (2K + ρI) is computed exactly once. A solve is
/// fully deterministic: identical inputs give bit-identical reports.
pub fn solve(k: &KernelGram, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let factor = PenalizedGram::new(k, config.rho)?;
    let n = k.size();

    let mut state = SolverState::start(n);
    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut converged = false;

    while state.iter < config.max_iters {
        let a_next = update_a(k, state.c.entries(), &state.delta, config.rho, &factor);
        state.step_residual = (&a_next - &state.a).amax();
        state.c = update_c(&a_next, &state.delta, config.lambda, config.rho);
        state.delta = update_delta(&state.delta, &a_next, &state.c, config.rho);
        state.primal_residual = (&a_next - state.c.entries()).amax();
        state.a = a_next;
        state.iter += 1;

        objective_trace.push(objective(&state.c, k, config.lambda)?);
        residual_trace.push((state.primal_residual, state.step_residual));

        if state.primal_residual <= config.epsilon && state.step_residual <= config.epsilon
        {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        c: state.c,
        converged,
        iters_used: state.iter,
        objective_trace,
        residual_trace,
    })
}
