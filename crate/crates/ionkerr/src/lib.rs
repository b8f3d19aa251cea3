//! Truncated-Fock-space toolkit for a two-level trapped ion coupled to a
//! single quantized cavity mode.
//!
//! The crate models the tripartite system (electronic two-level ion ⊗
//! center-of-mass phonons ⊗ cavity photons) with dense complex matrices and
//! provides:
//!
//! - [`fock`]: the finite-dimensional Hilbert-space kernel (ladder and atomic
//!   operators, tensor embedding, states, exact matrix functions),
//! - [`specfun`]: the scalar special functions of the coupling expansion
//!   (Laguerre polynomials, normally-ordered Bessel eigenvalues, expansion
//!   coefficients),
//! - [`hamiltonian`]: the model Hamiltonians at each level of approximation
//!   (full, interaction picture, rotating-wave, dispersive effective,
//!   Lamb-Dicke cross-Kerr) plus derived constants and regime diagnostics,
//! - [`dynamics`]: propagation engines (exact eigendecomposition propagator,
//!   adaptive Runge-Kutta for time-dependent Hamiltonians, first-order
//!   perturbative propagator, Lindblad master equation),
//! - [`gate`]: conditional-phase-gate analysis (phases, π-gate condition,
//!   gate times, full-vs-effective validity, transition-probability bounds).
//!
//! All frequencies and rates are angular (rad/s). Dimensions at the intended
//! scale are a few hundred at most, so everything is dense and double
//! precision.

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod gate;
pub mod hamiltonian;
pub mod specfun;

pub(crate) mod linalg;

pub use error::{Error, Result};
pub use fock::{CompositeSpace, IonLevel, MixedState, Mode, Operator, PureState};
pub use hamiltonian::{DissipationParams, PhysicalParams, RegimeReport};

/// Complex double-precision scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
