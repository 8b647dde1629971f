use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("Gram matrix B^T S B is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("linearizing check needs at least {needed} affinely independent samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("linearizing assumption violated: {0}")]
    NotLinearizable(String),

    #[error("shooting matrix is singular (condition number {condition:.3e})")]
    ShootingSingular { condition: f64 },

    #[error("integrator failure: {0}")]
    IntegratorFailure(String),

    #[error("system is not of the planar class x' = a0 + a1 x + a2 y, y' = R + b u: {0}")]
    NotTwoDimClass(String),

    #[error("control authority lost: |b| = {gain:.3e} at {at}")]
    VanishingB { gain: f64, at: f64 },

    #[error("boundary layer does not decay toward its matching value: {0}")]
    NoDecay(String),

    #[error("boundary-layer operator has no decaying mode (eigenvalue {eigenvalue:.3e})")]
    NonHyperbolic { eigenvalue: f64 },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("inner and outer solutions do not match (residual {residual:.3e})")]
    MatchingFailure { residual: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (defect {defect:.3e}); try more segments or a composite warm start")]
    NewtonDiverged { iterations: usize, defect: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("expression parse error at offset {offset}: {message}")]
    ExpressionParse { offset: usize, message: String },

    #[error("system is not in mechanical form (a0 = a1 = 0, a2 = 1)")]
    NotMechanicalForm,

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("model '{model}' is missing parameter '{param}'")]
    MissingParameter { model: String, param: String },

    #[error("remaining horizon {remaining:.3e} is shorter than 10 epsilon ({limit:.3e})")]
    HorizonTooShort { remaining: f64, limit: f64 },
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidProblem(_) => "invalid_problem",
            Error::SingularGram { .. } => "singular_gram",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::NotLinearizable(_) => "not_linearizable",
            Error::ShootingSingular { .. } => "shooting_singular",
            Error::IntegratorFailure(_) => "integrator_failure",
            Error::NotTwoDimClass(_) => "not_two_dim_class",
            Error::VanishingB { .. } => "vanishing_b",
            Error::NoDecay(_) => "no_decay",
            Error::NonHyperbolic { .. } => "non_hyperbolic",
            Error::NotSupported(_) => "not_supported",
            Error::MatchingFailure { .. } => "matching_failure",
            Error::NewtonDiverged { .. } => "newton_diverged",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::ExpressionParse { .. } => "expression_parse",
            Error::NotMechanicalForm => "not_mechanical_form",
            Error::UnknownModel(_) => "unknown_model",
            Error::MissingParameter { .. } => "missing_parameter",
            Error::HorizonTooShort { .. } => "horizon_too_short",
        }
    }

    /// True for failures of the linearizing assumption (including rank loss of B
    /// found while certifying it).
    pub fn is_linearizing_failure(&self) -> bool {
        matches!(
            self,
            Error::NotLinearizable(_) | Error::SingularGram { .. } | Error::InsufficientSamples { .. }
        )
    }
}
