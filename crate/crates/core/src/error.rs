use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// `λI − ΞᵀP_{t+1}Ξ` is not positive definite at the given stage.
    #[error("PenaltyTooSmall at stage t={stage} (margin {margin:.3e})")]
    PenaltyTooSmall { stage: usize, margin: f64 },

    #[error("singular matrix in {context} (condition number {cond:.3e})")]
    SingularMatrix { context: &'static str, cond: f64 },

    #[error("no convergence after {max_iter} iterations")]
    NoConvergence { max_iter: usize },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("system matrix A is numerically singular (condition number {cond:.3e})")]
    SingularA { cond: f64 },

    #[error("found {stable} stable eigenvalues, expected {expected}")]
    UnstableSubspaceDefect { stable: usize, expected: usize },

    #[error("stable eigenvector block U1 is ill-conditioned (condition number {cond:.3e})")]
    IllConditionedU1 { cond: f64 },

    #[error("Riccati solution from the stable subspace has imaginary part of norm {imag_norm:.3e}")]
    ComplexResidue { imag_norm: f64 },

    #[error("no finite attenuation level up to {lambda_max:e}")]
    NoFiniteLevel { lambda_max: f64 },

    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),

    #[error("no penalty up to {lambda_max:e} keeps the Riccati iterates well defined")]
    Lambda2Infinite { lambda_max: f64 },

    #[error("risk level beta={0} outside (0, 1)")]
    InvalidRisk(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state diverged at step {step} of run {run}")]
    NonFiniteState { run: usize, step: usize },

    #[error("inertia of generator {index} is not positive ({value})")]
    SingularInertia { index: usize, value: f64 },

    #[error("bad data file: {0}")]
    BadDataFile(String),

    #[error("monotonicity violated: {0}")]
    MonotonicityViolation(String),
}

impl Error {
    /// Errors caused by the problem data not meeting a solver precondition,
    /// as opposed to a numerical breakdown.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::PenaltyTooSmall { .. }
                | Error::AssumptionViolated(_)
                | Error::Lambda2Infinite { .. }
                | Error::NoFiniteLevel { .. }
                | Error::BracketFailure(_)
                | Error::UnstableSubspaceDefect { .. }
        )
    }
}
