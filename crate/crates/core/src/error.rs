/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Sail frame undefined: the position sits on the z-axis through the Sun
    /// while the cone angle is nonzero.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The Jacobi constant is only conserved without solar radiation pressure.
    #[error("Jacobi constant is not conserved for beta > 0")]
    NotConserved,

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular Jacobian in Newton iteration")]
    SingularJacobian,

    #[error("series order mismatch: {0} vs {1}")]
    OrderMismatch(u32, u32),

    /// Numeric Legendre recurrence evaluated outside its convergence domain.
    #[error("outside expansion convergence domain: rho/D = {0:.3e} >= 1")]
    ConvergenceDomain(f64),

    /// The characteristic-root pattern differs from one real pair plus two
    /// complex-conjugate pairs.
    #[error("eigenvalue structure violation: {0}")]
    StructureViolation(String),

    #[error("singular second-derivative matrix in static solve")]
    SingularOmegaStar,

    #[error("eigenvector normalization component is zero ({0})")]
    ZeroNormalizationComponent(&'static str),

    #[error("least-squares residual {residual:.3e} exceeds {tolerance:.3e} at order {order}, group {group}")]
    ResidualTooLarge {
        order: u32,
        group: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("step size underflow at t = {0:.6e}")]
    StepSizeUnderflow(f64),

    #[error("maximum step count exceeded")]
    MaxStepsExceeded,

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
