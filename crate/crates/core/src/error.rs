use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("density {density} is below the vacuum floor {floor}")]
    NonPositiveDensity { density: f64, floor: f64 },

    #[error("state component is not finite")]
    NonFinite,

    #[error("state ({density}, {momentum}) left the subsonic region")]
    LeftSubsonicRegion { density: f64, momentum: f64 },

    #[error("riemann problem has no admissible solution: {0}")]
    NoSolution(String),

    #[error("junction jacobian is not transversal (condition number {condition:.3e})")]
    NonTransversal { condition: f64 },

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("underflow gate coupling is singular for equal water heights")]
    GateEqualHeights,

    #[error("source validation failed, clause {clause}: {detail}")]
    ValidationFailed { clause: u8, detail: String },

    #[error("total variation {tv:.6e} exceeds the domain budget {budget:.6e}")]
    DomainExceeded { tv: f64, budget: f64 },

    #[error("pipe {pipe}, cell {cell} is not subsonic at t = {t}")]
    Supersonic { pipe: usize, cell: usize, t: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("no feasible starting control: {0}")]
    NoFeasibleStart(String),

    #[error("step {step} (t = {t}): {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips step context, returning the underlying solver error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}
