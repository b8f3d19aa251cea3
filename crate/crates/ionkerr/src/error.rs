//! Crate-wide error type.

/// Errors produced by construction, algebra, and propagation routines.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Composite-space parameters violate an invariant (e.g. zero cutoff).
    #[error("invalid composite space: {0}")]
    InvalidSpace(String),

    /// Two objects live on different composite spaces.
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    /// A matrix expected to be hermitian is not, beyond tolerance.
    #[error("matrix is not hermitian: max |M - M†| = {deviation:.3e} vs scale {scale:.3e}")]
    NotHermitian { deviation: f64, scale: f64 },

    /// A scalar argument lies outside the supported domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A dispersive construction was requested with Δ = ω_a − ω_c = 0.
    #[error("dispersive construction requires a nonzero detuning Δ = ω_a - ω_c")]
    ZeroDetuning,

    /// The adaptive integrator could not continue (step-size underflow).
    #[error("integration failed at t = {last_good_time:.6e} s: {reason}")]
    Integration { last_good_time: f64, reason: String },

    /// A first-order transition denominator Δ ± ν(m − m′) is numerically zero.
    #[error(
        "resonant transition: |Δ ± ν(m - m')| = {denominator:.3e} rad/s is below \
         {threshold:.3e} rad/s; first-order theory excludes Δ = kν"
    )]
    Resonance { denominator: f64, threshold: f64 },

    /// Interaction-picture phase extraction is meaningless for this state.
    #[error(
        "phase extraction ill-defined for basis state {label}: overlap magnitude \
         {overlap:.4} is below 0.9"
    )]
    PhaseExtraction { label: String, overlap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
