use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature too coarse: {got} nodes given, at least {required} required for {modes} modes")]
    QuadratureTooCoarse {
        got: usize,
        required: usize,
        modes: usize,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("unbounded mode (component {component}, mode {mode}): exponent {exponent:.3e} exceeds overflow guard")]
    UnboundedMode {
        component: usize,
        mode: usize,
        exponent: f64,
    },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("shift of component {component} lies {distance:.3e} from eigenvalue {mode}; inside the ambiguity band ({tol:.1e}, {band:.1e}), adjust the resonance tolerance")]
    AmbiguousResonance {
        component: usize,
        mode: usize,
        distance: f64,
        tol: f64,
        band: f64,
    },

    #[error("truncation too small: shift {value} of component {component} is not below the largest retained eigenvalue {mu_max}")]
    Truncation {
        component: usize,
        value: f64,
        mu_max: f64,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("non-finite field value {value} in component {component} at x = {x}")]
    Evaluation { x: f64, component: usize, value: f64 },

    #[error("resonance at the origin: theta_{component} = {theta} is within tolerance of eigenvalue mu_{mode} = {mu}")]
    ResonanceAtOrigin {
        component: usize,
        mode: usize,
        theta: f64,
        mu: f64,
    },

    #[error("field is not of gradient type: {0}")]
    GradientStructure(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl Error {
    /// Errors that report a violated modelling hypothesis rather than a
    /// runtime failure. The command-line runner maps these to exit code 2.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(self, Error::Hypothesis(_))
    }
}
