use thiserror::Error;

/// Errors produced by the gkdv-core numerical routines.
#[derive(Debug, Error)]
pub enum GkdvError {
    #[error("non-finite input value {0}")]
    NonFinite(f64),

    #[error("scan ceiling {ceiling} exhausted while searching for a zero (c = {c})")]
    ScanExhausted { c: f64, ceiling: f64 },

    #[error("no soliton exists for c = {c} (existence criterion fails)")]
    NoSoliton { c: f64 },

    #[error("quadrature failed to converge (worst panel at s = {location}, error {error:.3e})")]
    QuadratureFailure { location: f64, error: f64 },

    #[error("domain too small: tail value {tail:.3e} exceeds {required:.3e} at the boundary")]
    DomainTooSmall { tail: f64, required: f64 },

    #[error("ground state is degenerate or sign-changing (gap {gap:.3e})")]
    BadGroundState { gap: f64 },

    #[error("linear system is singular or near-singular (pivot {pivot:.3e})")]
    SingularSystem { pivot: f64 },

    #[error("truncation radius B = {b} too small: Rayleigh quotient {quotient:.6e} outside [{lo:.6e}, {hi:.6e}]")]
    TruncationTooSmall { b: f64, quotient: f64, lo: f64, hi: f64 },

    #[error("weight positivity violated: mu'({x:.3}) = {value:.3e} <= 0")]
    WeightNotPositive { x: f64, value: f64 },

    #[error("constrained minimum is not positive: lambda1 = {lambda1:.6e}")]
    CoercivityFailure { lambda1: f64 },

    #[error("state is outside the soliton tube: {reason}")]
    OutOfTube { reason: String },

    #[error("non-finite field values after step at t = {t}")]
    BlowUp { t: f64 },

    #[error("solitons not separated: gap {gap:.3} below minimum {min:.3}")]
    SeparationViolated { gap: f64, min: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GkdvError>;
