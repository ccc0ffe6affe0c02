use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Point evaluation of the Green's function at coincident points.
    #[error("green's function evaluated at coincident points; use cell-averaged quadrature")]
    SingularEvaluation,

    #[error("kernel moment diverges for q = {q} (requires q > 2)")]
    DivergentMoment { q: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("geometry does not fit inside the grid")]
    OutOfBounds,

    #[error("polygon needs at least 3 vertices, got {vertices}")]
    DegeneratePolygon { vertices: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("no speed W >= 0 reaches impulse {mu} (largest attainable {attainable})")]
    InfeasibleImpulse { mu: f64, attainable: f64 },

    #[error("field has zero mass")]
    ZeroMass,

    #[error("profile did not converge")]
    NotConverged,

    #[error("need at least {needed} samples, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("time step {dt} violates CFL (max speed {max_speed}); try dt <= {suggested_dt}")]
    CflViolation {
        dt: f64,
        max_speed: f64,
        suggested_dt: f64,
    },

    #[error("source is empty")]
    EmptySource,

    #[error("profiles were computed in different modes")]
    ModeMismatch,
}
