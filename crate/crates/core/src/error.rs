use thiserror::Error;

pub type Result<T, E = CarlemanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CarlemanError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigensolver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("matrix is defective or nearly so (biorthogonality pivot {pivot:.3e} below {tol:.3e})")]
    Defective { pivot: f64, tol: f64 },

    #[error("storage of {requested} bytes exceeds the memory budget of {limit} bytes")]
    BudgetExceeded { requested: u128, limit: u64 },

    #[error("integration diverged at t = {time}: block norm {norm:.3e} exceeds {threshold:.1e}")]
    UnstableStep { time: f64, norm: f64, threshold: f64 },

    #[error("resonance search over {combinations:.3e} combinations exceeds the budget of {limit:.1e}")]
    CombinatorialBudget { combinations: f64, limit: f64 },

    #[error("shift {shift} lies within {tol:.1e} of eigenvalue {eigenvalue}")]
    ResonantShift {
        shift: num_complex::Complex64,
        eigenvalue: num_complex::Complex64,
        tol: f64,
    },

    #[error("first integral violated: {0}")]
    FirstIntegralViolation(String),

    #[error("singular matrix (pivot {pivot:.3e})")]
    Singular { pivot: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CarlemanError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CarlemanError::InvalidInput(msg.into())
    }
}
