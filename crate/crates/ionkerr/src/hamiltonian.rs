//! Model Hamiltonians at every level of approximation, derived coupling
//! constants, and dispersive-regime diagnostics.
//!
//! All frequencies are angular (rad/s). The atomic frequency is never stored:
//! ω_a = ω_c + Δ, since the detuning Δ is the knob every formula uses.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{self, CompositeSpace, IonLevel, Mode, Operator};
use crate::specfun;

/// Model frequencies and couplings, all angular (rad/s) except the
/// dimensionless Lamb-Dicke parameter η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Trap frequency ν.
    pub nu: f64,
    /// Cavity frequency ω_c.
    pub omega_c: f64,
    /// Detuning Δ = ω_a − ω_c. May be negative; zero is rejected only by the
    /// dispersive constructions that divide by it.
    pub delta: f64,
    /// Ion-field coupling g.
    pub g: f64,
    /// Lamb-Dicke parameter η.
    pub eta: f64,
}

impl PhysicalParams {
    pub fn new(nu: f64, omega_c: f64, delta: f64, g: f64, eta: f64) -> Result<Self> {
        if !(nu > 0.0) || !(omega_c > 0.0) || !(g > 0.0) {
            return Err(Error::Domain(format!(
                "nu, omega_c and g must be positive (got {nu}, {omega_c}, {g})"
            )));
        }
        if !(eta >= 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!(
                "eta must be non-negative and delta finite (got eta={eta}, delta={delta})"
            )));
        }
        Ok(Self { nu, omega_c, delta, g, eta })
    }

    /// Atomic frequency ω_a = ω_c + Δ.
    pub fn omega_a(&self) -> f64 {
        self.omega_c + self.delta
    }

    fn require_dispersive(&self) -> Result<()> {
        if self.delta == 0.0 {
            Err(Error::ZeroDetuning)
        } else {
            Ok(())
        }
    }
}

/// Open-system rates, angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationParams {
    /// Cavity decay rate κ.
    pub kappa: f64,
    /// Atomic spontaneous emission rate γ.
    pub gamma: f64,
}

impl DissipationParams {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self> {
        if kappa < 0.0 || gamma < 0.0 {
            return Err(Error::Domain(format!(
                "decay rates must be non-negative (got kappa={kappa}, gamma={gamma})"
            )));
        }
        Ok(Self { kappa, gamma })
    }
}

/// Verdict of one regime condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Warn => write!(f, "warn"),
            Verdict::Fail => write!(f, "fail"),
        }
    }
}

/// Thresholds for [`regime_check`]; the defaults are conventions, not physics,
/// and a warn verdict fires within a factor 2 of each threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    /// Dispersive condition g ≪ Δ: pass while |g/Δ| ≤ this.
    pub g_over_delta_max: f64,
    /// Slow-detuning condition Δ ≪ ν: pass while |Δ/ν| ≤ this.
    pub delta_over_nu_max: f64,
    /// Resonance condition Δ ≠ kν: pass while min_k |Δ − kν|/ν ≥ this.
    pub resonance_margin_min: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self { g_over_delta_max: 0.1, delta_over_nu_max: 0.1, resonance_margin_min: 0.1 }
    }
}

/// Diagnostics for the validity conditions g ≪ Δ, Δ ≪ ν and Δ ≠ kν.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    /// g/Δ (signed).
    pub ratio_g_delta: f64,
    /// Δ/ν (signed).
    pub ratio_delta_nu: f64,
    /// argmin_k |Δ − kν| over integers k.
    pub nearest_resonance_k: i64,
    /// min_k |Δ − kν| / ν.
    pub resonance_margin: f64,
    pub verdict_g_delta: Verdict,
    pub verdict_delta_nu: Verdict,
    pub verdict_resonance: Verdict,
}

impl RegimeReport {
    /// Worst of the three per-condition verdicts.
    pub fn overall(&self) -> Verdict {
        self.verdict_g_delta.max(self.verdict_delta_nu).max(self.verdict_resonance)
    }
}

fn verdict_upper(value: f64, threshold: f64) -> Verdict {
    if value <= threshold {
        Verdict::Pass
    } else if value <= 2.0 * threshold {
        Verdict::Warn
    } else {
        Verdict::Fail
    }
}

fn verdict_lower(value: f64, threshold: f64) -> Verdict {
    if value >= threshold {
        Verdict::Pass
    } else if value >= 0.5 * threshold {
        Verdict::Warn
    } else {
        Verdict::Fail
    }
}

/// Evaluates the dispersive-validity conditions for the given parameters.
pub fn regime_check(params: &PhysicalParams, thresholds: &RegimeThresholds) -> RegimeReport {
    let ratio_g_delta = if params.delta == 0.0 { f64::INFINITY } else { params.g / params.delta };
    let ratio_delta_nu = params.delta / params.nu;
    let nearest_resonance_k = ratio_delta_nu.round() as i64;
    let resonance_margin = (ratio_delta_nu - ratio_delta_nu.round()).abs();
    RegimeReport {
        ratio_g_delta,
        ratio_delta_nu,
        nearest_resonance_k,
        resonance_margin,
        verdict_g_delta: verdict_upper(ratio_g_delta.abs(), thresholds.g_over_delta_max),
        verdict_delta_nu: verdict_upper(ratio_delta_nu.abs(), thresholds.delta_over_nu_max),
        verdict_resonance: verdict_lower(resonance_margin, thresholds.resonance_margin_min),
    }
}

/// Diagonal free energies E(s, m, n) = νm + ω_c n ± ω_a/2 in basis order.
pub fn free_energies(params: &PhysicalParams, space: CompositeSpace) -> Array1<f64> {
    let omega_a = params.omega_a();
    Array1::from_shape_fn(space.total_dim(), |i| {
        let (s, m, n) = space.decode(i);
        let sz = match s {
            IonLevel::Ground => -1.0,
            IonLevel::Excited => 1.0,
        };
        params.nu * m as f64 + params.omega_c * n as f64 + 0.5 * omega_a * sz
    })
}

/// Free part H₀ = ν a†a + ω_c b†b + (ω_a/2) σ_z.
pub fn free_hamiltonian(params: &PhysicalParams, space: CompositeSpace) -> Operator {
    let energies = free_energies(params, space);
    let d = space.total_dim();
    let mut matrix = Array2::zeros((d, d));
    for (i, &e) in energies.iter().enumerate() {
        matrix[[i, i]] = C64::new(e, 0.0);
    }
    Operator::from_matrix(space, matrix).expect("diagonal matrix matches its space")
}

/// Full model Hamiltonian
/// H = ν a†a + ω_c b†b + (ω_a/2)σ_z + g(σ₊b + b†σ₋)·cos η(a†+a).
pub fn full_hamiltonian(params: &PhysicalParams, space: CompositeSpace) -> Operator {
    let h0 = free_hamiltonian(params, space);
    let (_, sp, sm) = fock::atomic_ops(space);
    let b = fock::annihilation_op(space, Mode::Photon);
    let exchange = &(&sp * &b) + &(&b.dagger() * &sm);
    let cos_op = fock::cos_position_op(space, params.eta);
    let coupling = (&exchange * &cos_op).scaled(C64::new(params.g, 0.0));
    &h0 + &coupling
}

/// Rotating-wave Hamiltonian
/// H = ν a†a + ω_c b†b + (ω_a/2)σ_z + g(σ₊b + σ₋b†)·f(a†a),
/// which conserves the phonon number exactly.
pub fn rwa_hamiltonian(params: &PhysicalParams, space: CompositeSpace) -> Operator {
    let h0 = free_hamiltonian(params, space);
    let (_, sp, sm) = fock::atomic_ops(space);
    let b = fock::annihilation_op(space, Mode::Photon);
    let exchange = &(&sp * &b) + &(&sm * &b.dagger());
    let f_op = specfun::f_operator(space, params.eta);
    let coupling = (&exchange * &f_op).scaled(C64::new(params.g, 0.0));
    &h0 + &coupling
}

/// Dispersive effective Hamiltonian
/// H_eff = H₀ + (g²/Δ)·f²(a†a)·(σ₊σ₋ bb† − σ₋σ₊ b†b),
/// diagonal in the bare basis. The bb† factor is the literal truncated
/// product, so the topmost photon level carries the same truncation artifact
/// as the ladder commutator.
pub fn effective_hamiltonian(params: &PhysicalParams, space: CompositeSpace) -> Result<Operator> {
    params.require_dispersive()?;
    let h0 = free_hamiltonian(params, space);
    let (_, sp, sm) = fock::atomic_ops(space);
    let b = fock::annihilation_op(space, Mode::Photon);
    let f_op = specfun::f_operator(space, params.eta);
    let f2 = &f_op * &f_op;
    let proj_e = &sp * &sm;
    let proj_g = &sm * &sp;
    let shift = &(&proj_e * &(&b * &b.dagger())) - &(&proj_g * &(&b.dagger() * &b));
    let term = (&f2 * &shift).scaled(C64::new(params.g * params.g / params.delta, 0.0));
    Ok(&h0 + &term)
}

/// Cross-Kerr coupling λ = 2η²g²/Δ.
pub fn kerr_coupling(params: &PhysicalParams) -> Result<f64> {
    params.require_dispersive()?;
    Ok(2.0 * params.eta * params.eta * params.g * params.g / params.delta)
}

/// Shifted field frequency ω̃_c = ω_c + η²g²/Δ − g²/Δ.
pub fn shifted_frequency(params: &PhysicalParams) -> Result<f64> {
    params.require_dispersive()?;
    Ok(params.omega_c + (params.eta * params.eta - 1.0) * params.g * params.g / params.delta)
}

/// Lamb-Dicke cross-Kerr Hamiltonian
/// H = ν a†a + ω̃_c b†b + λ a†a b†b,
/// with identity on the ion factor so states remain directly comparable with
/// the other levels.
pub fn ld_hamiltonian(params: &PhysicalParams, space: CompositeSpace) -> Result<Operator> {
    params.require_dispersive()?;
    let lambda = kerr_coupling(params)?;
    let omega_tilde = shifted_frequency(params)?;
    let d = space.total_dim();
    let mut matrix = Array2::zeros((d, d));
    for i in 0..d {
        let (_, m, n) = space.decode(i);
        let e = params.nu * m as f64 + omega_tilde * n as f64 + lambda * (m * n) as f64;
        matrix[[i, i]] = C64::new(e, 0.0);
    }
    Ok(Operator::from_matrix(space, matrix).expect("diagonal matrix matches its space"))
}

/// Precomputed interaction-picture Hamiltonian
/// H_I(t) = e^{iH₀t}·(H − H₀)·e^{−iH₀t}, evaluated by elementwise phases
/// since H₀ is diagonal.
#[derive(Debug, Clone)]
pub struct InteractionPicture {
    space: CompositeSpace,
    energies: Array1<f64>,
    coupling: Array2<C64>,
}

impl InteractionPicture {
    pub fn new(params: &PhysicalParams, space: CompositeSpace) -> Self {
        let h0 = free_hamiltonian(params, space);
        let full = full_hamiltonian(params, space);
        let coupling = (&full - &h0).into_matrix();
        Self { space, energies: free_energies(params, space), coupling }
    }

    pub fn space(&self) -> CompositeSpace {
        self.space
    }

    /// Writes H_I(t) into `out`.
    pub fn eval_into(&self, t: f64, out: &mut Array2<C64>) {
        let d = self.space.total_dim();
        debug_assert_eq!(out.dim(), (d, d));
        let phases: Vec<C64> = self
            .energies
            .iter()
            .map(|&e| C64::new(0.0, e * t).exp())
            .collect();
        for i in 0..d {
            for j in 0..d {
                out[[i, j]] = phases[i] * self.coupling[[i, j]] * phases[j].conj();
            }
        }
    }

    pub fn eval(&self, t: f64) -> Operator {
        let d = self.space.total_dim();
        let mut out = Array2::zeros((d, d));
        self.eval_into(t, &mut out);
        Operator::from_matrix(self.space, out).expect("shape fixed by construction")
    }
}

/// Interaction-picture Hamiltonian of Eq.-of-motion form
/// g(σ₊b e^{iΔt} + σ₋b† e^{−iΔt})·cos η(a†e^{iνt} + a e^{−iνt}) at time `t`.
pub fn interaction_hamiltonian(
    params: &PhysicalParams,
    space: CompositeSpace,
    t: f64,
) -> Operator {
    InteractionPicture::new(params, space).eval(t)
}
