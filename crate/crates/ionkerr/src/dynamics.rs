//! Time-evolution engines.
//!
//! - [`evolve_static`]: exact propagation of a time-independent hermitian
//!   Hamiltonian through one eigendecomposition, reused for every sample.
//! - [`evolve_time_dependent`]: adaptive embedded Runge-Kutta 5(4)
//!   (Dormand-Prince) integration of i dψ/dt = H(t)ψ. No renormalization is
//!   applied; norm drift is a reported diagnostic.
//! - [`first_order_propagator`]: U₁(t) = 1 − i∫₀ᵗ H(t′)dt′ by composite
//!   Gauss-Legendre quadrature. Not unitary, by construction.
//! - [`evolve_lindblad`]: the Lindblad master equation with the same adaptive
//!   pair, integrating the full density matrix and symmetrizing each accepted
//!   step. Internally the integration runs in the interaction picture of the
//!   diagonal part of H (an exact change of variables), so step sizes track
//!   coupling and decay scales rather than bare energies; outputs are
//!   transformed back to the lab frame.
//!
//! Every engine is deterministic: identical inputs produce bit-identical
//! trajectories on a fixed platform.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{CompositeSpace, MixedState, Mode, Operator, PureState};
use crate::hamiltonian::InteractionPicture;
use crate::linalg;

/// Output grid and integrator tolerances for one evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionSpec {
    /// Final time (s); samples run from 0 to here inclusive.
    pub t_final: f64,
    /// Number of output grid points, endpoints included.
    pub sample_count: usize,
    /// Relative tolerance of the adaptive integrator.
    pub rel_tol: f64,
    /// Absolute tolerance of the adaptive integrator.
    pub abs_tol: f64,
    /// Optional ceiling on the adaptive step (s).
    pub max_step: Option<f64>,
}

impl EvolutionSpec {
    /// Defaults: rel_tol = 1e-9, abs_tol = 1e-12, no max step.
    pub fn new(t_final: f64, sample_count: usize) -> Result<Self> {
        let spec = Self { t_final, sample_count, rel_tol: 1e-9, abs_tol: 1e-12, max_step: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Result<Self> {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_step(mut self, max_step: f64) -> Result<Self> {
        self.max_step = Some(max_step);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::Domain(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.sample_count < 2 {
            return Err(Error::Domain(format!(
                "sample_count must be at least 2, got {}",
                self.sample_count
            )));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::Domain("max_step must be positive".into()));
            }
        }
        Ok(())
    }

    /// Uniform grid 0 ..= t_final with `sample_count` points.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.sample_count;
        (0..n)
            .map(|k| self.t_final * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// States of a trajectory, all pure or all mixed.
#[derive(Debug, Clone)]
pub enum TrajectoryStates {
    Pure(Vec<PureState>),
    Mixed(Vec<MixedState>),
}

/// Time grid plus the state at every grid point.
#[derive(Debug, Clone)]
pub struct Trajectory {
    space: CompositeSpace,
    times: Vec<f64>,
    states: TrajectoryStates,
}

impl Trajectory {
    pub fn space(&self) -> CompositeSpace {
        self.space
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn states(&self) -> &TrajectoryStates {
        &self.states
    }

    pub fn pure_states(&self) -> Option<&[PureState]> {
        match &self.states {
            TrajectoryStates::Pure(v) => Some(v),
            TrajectoryStates::Mixed(_) => None,
        }
    }

    pub fn mixed_states(&self) -> Option<&[MixedState]> {
        match &self.states {
            TrajectoryStates::Mixed(v) => Some(v),
            TrajectoryStates::Pure(_) => None,
        }
    }

    /// Norm of the pure state or trace of the density matrix at sample `k`.
    pub fn norm_or_trace(&self, k: usize) -> f64 {
        match &self.states {
            TrajectoryStates::Pure(v) => v[k].norm(),
            TrajectoryStates::Mixed(v) => v[k].trace().re,
        }
    }

    /// tr(ρ²); for pure states this is ‖ψ‖⁴.
    pub fn purity(&self, k: usize) -> f64 {
        match &self.states {
            TrajectoryStates::Pure(v) => v[k].norm().powi(4),
            TrajectoryStates::Mixed(v) => v[k].purity(),
        }
    }

    /// max_k |norm_or_trace(k) − 1|.
    pub fn max_norm_drift(&self) -> f64 {
        (0..self.len()).fold(0.0_f64, |acc, k| acc.max((self.norm_or_trace(k) - 1.0).abs()))
    }

    /// Complex expectation series of one operator.
    pub fn expectation_series(&self, op: &Operator) -> Result<Vec<C64>> {
        match &self.states {
            TrajectoryStates::Pure(v) => v.iter().map(|s| op.expectation_pure(s)).collect(),
            TrajectoryStates::Mixed(v) => v.iter().map(|s| op.expectation_mixed(s)).collect(),
        }
    }
}

/// Real expectation values of each operator at each sample time.
///
/// Operators are expected to be hermitian-role observables: any imaginary
/// residue above 1e-8 is an error, below that it is dropped.
pub fn observables(traj: &Trajectory, ops: &[Operator]) -> Result<Vec<Vec<f64>>> {
    ops.iter()
        .map(|op| {
            if op.space() != traj.space() {
                return Err(Error::SpaceMismatch("observable vs trajectory".into()));
            }
            let series = traj.expectation_series(op)?;
            series
                .into_iter()
                .map(|z| {
                    if z.im.abs() > 1e-8 {
                        Err(Error::Domain(format!(
                            "observable expectation has imaginary residue {:.3e}",
                            z.im
                        )))
                    } else {
                        Ok(z.re)
                    }
                })
                .collect()
        })
        .collect()
}

/// Collapse channels √rate·C for the Lindblad engine.
#[derive(Debug, Clone)]
pub struct CollapseSet {
    space: CompositeSpace,
    channels: Vec<(Operator, f64)>,
}

impl CollapseSet {
    pub fn new(space: CompositeSpace) -> Self {
        Self { space, channels: Vec::new() }
    }

    pub fn add(&mut self, op: Operator, rate: f64) -> Result<()> {
        if op.space() != self.space {
            return Err(Error::SpaceMismatch("collapse operator vs collapse set".into()));
        }
        if rate < 0.0 {
            return Err(Error::Domain(format!("collapse rate must be non-negative, got {rate}")));
        }
        self.channels.push((op, rate));
        Ok(())
    }

    pub fn space(&self) -> CompositeSpace {
        self.space
    }

    pub fn channels(&self) -> &[(Operator, f64)] {
        &self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

/// The loss channels of the model: cavity decay (b̂, κ) and spontaneous
/// emission (σ̂₋, γ).
pub fn standard_channels(space: CompositeSpace, kappa: f64, gamma: f64) -> Result<CollapseSet> {
    let mut set = CollapseSet::new(space);
    set.add(crate::fock::annihilation_op(space, Mode::Photon), kappa)?;
    let (_, _, sm) = crate::fock::atomic_ops(space);
    set.add(sm, gamma)?;
    Ok(set)
}

/// Multiplies amplitude j by e^{−i·E_j·t} (forward evolution under a diagonal
/// Hamiltonian with energies `E`); pass a negative `t` for the inverse frame
/// rotation.
pub fn apply_diagonal_phase(state: &PureState, energies: &[f64], t: f64) -> PureState {
    let amplitudes = Array1::from_shape_fn(state.amplitudes().len(), |j| {
        state.amplitudes()[j] * C64::new(0.0, -energies[j] * t).exp()
    });
    PureState::from_amplitudes(state.space(), amplitudes).expect("same-length amplitudes")
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with PI step control, operating on flat complex slices.
// ---------------------------------------------------------------------------

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order minus embedded fourth-order weights
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(crate) struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl AdaptiveOptions {
    fn from_spec(spec: &EvolutionSpec) -> Self {
        Self {
            rel_tol: spec.rel_tol,
            abs_tol: spec.abs_tol,
            max_step: spec.max_step.unwrap_or(f64::INFINITY),
        }
    }
}

fn weighted_rms(v: &[C64], y: &[C64], ynew: &[C64], abs_tol: f64, rel_tol: f64) -> f64 {
    let n = v.len().max(1);
    let sum: f64 = v
        .iter()
        .zip(y.iter().zip(ynew.iter()))
        .map(|(e, (a, b))| {
            let sc = abs_tol + rel_tol * a.norm().max(b.norm());
            let r = e.norm() / sc;
            r * r
        })
        .sum();
    (sum / n as f64).sqrt()
}

/// Integrates y′ = rhs(t, y) from `samples[0]`, recording the state at every
/// sample time. `post_accept` runs after each accepted step (the Lindblad
/// engine hermitizes there; pass a no-op otherwise).
pub(crate) fn integrate_adaptive<R, P>(
    y0: &[C64],
    samples: &[f64],
    mut rhs: R,
    mut post_accept: P,
    opts: &AdaptiveOptions,
) -> Result<Vec<Vec<C64>>>
where
    R: FnMut(f64, &[C64], &mut [C64]),
    P: FnMut(&mut [C64]),
{
    let n = y0.len();
    let span = samples[samples.len() - 1] - samples[0];
    debug_assert!(span > 0.0);
    let mut y = y0.to_vec();
    let mut t = samples[0];
    let mut out = Vec::with_capacity(samples.len());
    out.push(y.clone());

    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
    let mut ytmp = vec![C64::new(0.0, 0.0); n];
    let mut y5 = vec![C64::new(0.0, 0.0); n];
    let mut errv = vec![C64::new(0.0, 0.0); n];

    // initial step size (Hairer's heuristic, simplified)
    rhs(t, &y, &mut k[0]);
    let sc_rms = |v: &[C64], reference: &[C64]| -> f64 {
        let sum: f64 = v
            .iter()
            .zip(reference.iter())
            .map(|(x, r)| {
                let sc = opts.abs_tol + opts.rel_tol * r.norm();
                let q = x.norm() / sc;
                q * q
            })
            .sum();
        (sum / n as f64).sqrt()
    };
    let d0 = sc_rms(&y, &y);
    let d1 = sc_rms(&k[0], &y);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h = h.min(span);
    for (yt, (y_i, f_i)) in ytmp.iter_mut().zip(y.iter().zip(k[0].iter())) {
        *yt = y_i + h * f_i;
    }
    rhs(t + h, &ytmp, &mut k[1]);
    for ((e, a), b) in errv.iter_mut().zip(k[1].iter()).zip(k[0].iter()) {
        *e = a - b;
    }
    let d2 = sc_rms(&errv, &y) / h;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    h = (100.0 * h).min(h1).min(opts.max_step).min(span);

    let mut err_prev: f64 = 1e-4;
    let mut just_rejected = false;
    let floor = 1e-14 * span;

    for &target in &samples[1..] {
        while t < target {
            if h < floor {
                return Err(Error::Integration {
                    last_good_time: t,
                    reason: format!("step size underflow (h = {h:.3e} s)"),
                });
            }
            let clipped = h.min(opts.max_step);
            let hits_target = clipped >= target - t;
            let h_step = if hits_target { target - t } else { clipped };

            // stages
            rhs(t, &y, &mut k[0]);
            for s in 1..7 {
                ytmp.copy_from_slice(&y);
                for (j, a) in DP_A[s - 1].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        let coeff = h_step * a;
                        for (yt, kv) in ytmp.iter_mut().zip(k[j].iter()) {
                            *yt += coeff * kv;
                        }
                    }
                }
                if s == 6 {
                    y5.copy_from_slice(&ytmp);
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                rhs(t + DP_C[s] * h_step, &ytmp, &mut tail[0]);
            }
            errv.fill(C64::new(0.0, 0.0));
            for (j, e) in DP_E.iter().enumerate() {
                if *e != 0.0 {
                    let coeff = h_step * e;
                    for (ev, kv) in errv.iter_mut().zip(k[j].iter()) {
                        *ev += coeff * kv;
                    }
                }
            }
            let err = weighted_rms(&errv, &y, &y5, opts.abs_tol, opts.rel_tol);

            if err <= 1.0 {
                t = if hits_target { target } else { t + h_step };
                std::mem::swap(&mut y, &mut y5);
                post_accept(&mut y);
                let err_cl = err.max(1e-10);
                let fac_max = if just_rejected { 1.0 } else { 5.0 };
                let fac = (0.9 * err_cl.powf(-0.14) * err_prev.powf(0.08)).clamp(0.2, fac_max);
                h = h_step * fac;
                err_prev = err_cl.max(1e-4);
                just_rejected = false;
            } else {
                h = h_step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.7);
                just_rejected = true;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Engines
// ---------------------------------------------------------------------------

/// ψ(t) = e^{−iHt}ψ₀ for time-independent hermitian H, via one
/// eigendecomposition reused for all sample times.
pub fn evolve_static(h: &Operator, psi0: &PureState, spec: &EvolutionSpec) -> Result<Trajectory> {
    if h.space() != psi0.space() {
        return Err(Error::SpaceMismatch("hamiltonian vs initial state".into()));
    }
    spec.validate()?;
    h.require_hermitian()?;
    let d = h.space().total_dim();
    let (vals, vecs) = linalg::eigh(h.matrix())?;
    let vecs_dag = linalg::dagger(&vecs);
    let mut w = Array1::zeros(d);
    linalg::matvec_into(&mut w, &vecs_dag, psi0.amplitudes());

    let times = spec.sample_times();
    let mut states = Vec::with_capacity(times.len());
    let mut phased = Array1::zeros(d);
    let mut psi = Array1::zeros(d);
    for &t in &times {
        for j in 0..d {
            phased[j] = w[j] * C64::new(0.0, -vals[j] * t).exp();
        }
        linalg::matvec_into(&mut psi, &vecs, &phased);
        states.push(PureState::from_amplitudes(h.space(), psi.clone())?);
    }
    Ok(Trajectory { space: h.space(), times, states: TrajectoryStates::Pure(states) })
}

/// A time-indexed Hamiltonian source for the adaptive engines.
pub trait HamiltonianSource {
    fn space(&self) -> CompositeSpace;
    fn eval_into(&self, t: f64, out: &mut Array2<C64>);
}

impl HamiltonianSource for Operator {
    fn space(&self) -> CompositeSpace {
        Operator::space(self)
    }

    fn eval_into(&self, _t: f64, out: &mut Array2<C64>) {
        out.assign(self.matrix());
    }
}

impl HamiltonianSource for InteractionPicture {
    fn space(&self) -> CompositeSpace {
        InteractionPicture::space(self)
    }

    fn eval_into(&self, t: f64, out: &mut Array2<C64>) {
        InteractionPicture::eval_into(self, t, out)
    }
}

/// Integrates i dψ/dt = H(t)ψ with the adaptive 5(4) pair. The state is not
/// renormalized; norm drift is left as an integration-quality diagnostic.
///
/// Hermiticity of the source is spot-checked at the window endpoints.
pub fn evolve_time_dependent<S: HamiltonianSource>(
    source: &S,
    psi0: &PureState,
    spec: &EvolutionSpec,
) -> Result<Trajectory> {
    if source.space() != psi0.space() {
        return Err(Error::SpaceMismatch("hamiltonian source vs initial state".into()));
    }
    spec.validate()?;
    let space = source.space();
    let d = space.total_dim();
    let mut h_buf = Array2::zeros((d, d));
    for &t in &[0.0, spec.t_final] {
        source.eval_into(t, &mut h_buf);
        linalg::require_hermitian(&h_buf, 1e-12)?;
    }

    let times = spec.sample_times();
    let mut rhs = |t: f64, y: &[C64], out: &mut [C64]| {
        source.eval_into(t, &mut h_buf);
        let hm = h_buf.as_slice().expect("contiguous hamiltonian buffer");
        for (i, o) in out.iter_mut().enumerate() {
            let row = &hm[i * d..(i + 1) * d];
            let mut acc = C64::new(0.0, 0.0);
            for (&hij, &yj) in row.iter().zip(y.iter()) {
                acc += hij * yj;
            }
            *o = C64::new(acc.im, -acc.re); // −i·acc
        }
    };
    let raw = integrate_adaptive(
        psi0.amplitudes().as_slice().expect("contiguous amplitudes"),
        &times,
        &mut rhs,
        |_: &mut [C64]| {},
        &AdaptiveOptions::from_spec(spec),
    )?;
    let states = raw
        .into_iter()
        .map(|v| PureState::from_amplitudes(space, Array1::from_vec(v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { space, times, states: TrajectoryStates::Pure(states) })
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [−1, 1].
pub(crate) fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for kk in 2..=n {
                let kf = kk as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n−1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// First-order propagator U₁(t) = 1 − i·∫₀ᵗ H(t′) dt′ with the integral done
/// by composite Gauss-Legendre quadrature totalling at least `quad_points`
/// nodes (panels of order ≤ 12). Not unitary: it is the first-order object.
pub fn first_order_propagator<S: HamiltonianSource>(
    source: &S,
    t: f64,
    quad_points: usize,
) -> Result<Operator> {
    if t < 0.0 {
        return Err(Error::Domain(format!("propagation time must be non-negative, got {t}")));
    }
    if quad_points < 2 {
        return Err(Error::Domain(format!("quad_points must be at least 2, got {quad_points}")));
    }
    let space = source.space();
    let d = space.total_dim();
    let mut u = Array2::zeros((d, d));
    for i in 0..d {
        u[[i, i]] = C64::new(1.0, 0.0);
    }
    if t == 0.0 {
        return Operator::from_matrix(space, u);
    }

    let (order, panels) = if quad_points <= 12 { (quad_points, 1) } else { (12, quad_points.div_ceil(12)) };
    let (nodes, weights) = gauss_legendre_rule(order);
    let mut q = Array2::<C64>::zeros((d, d));
    let mut h_buf = Array2::zeros((d, d));
    let panel_width = t / panels as f64;
    for p in 0..panels {
        let a = p as f64 * panel_width;
        let mid = a + 0.5 * panel_width;
        let half = 0.5 * panel_width;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            source.eval_into(mid + half * x, &mut h_buf);
            let scale = w * half;
            q.zip_mut_with(&h_buf, |acc, h| *acc += h * scale);
        }
    }
    // U = 1 − iQ
    u.zip_mut_with(&q, |ui, qi| *ui -= C64::new(0.0, 1.0) * qi);
    Operator::from_matrix(space, u)
}

fn hermitize_flat(m: &mut [C64], d: usize) {
    for i in 0..d {
        let ii = i * d + i;
        m[ii] = C64::new(m[ii].re, 0.0);
        for j in (i + 1)..d {
            let ij = i * d + j;
            let ji = j * d + i;
            let avg = 0.5 * (m[ij] + m[ji].conj());
            m[ij] = avg;
            m[ji] = avg.conj();
        }
    }
}

/// Integrates dρ/dt = −i[H,ρ] + Σ r_j (C_jρC_j† − ½{C_j†C_j, ρ}) on the same
/// adaptive pair, hermitizing ρ after every accepted step. Trace is preserved
/// to well below 1e-6 over the intended windows.
pub fn evolve_lindblad(
    h: &Operator,
    collapses: &CollapseSet,
    rho0: &MixedState,
    spec: &EvolutionSpec,
) -> Result<Trajectory> {
    if h.space() != rho0.space() || collapses.space() != rho0.space() {
        return Err(Error::SpaceMismatch("hamiltonian / collapses / initial state".into()));
    }
    spec.validate()?;
    h.require_hermitian()?;
    let space = h.space();
    let d = space.total_dim();
    let nn = d * d;

    // interaction picture of the diagonal part of H (exact substitution):
    // σ(t) = e^{+iDt} ρ e^{−iDt}, dσ/dt = −i[Ṽ(t),σ] + Σ r D[C̃(t)]σ
    let energies: Vec<f64> = (0..d).map(|i| h.matrix()[[i, i]].re).collect();
    let mut v_base = vec![C64::new(0.0, 0.0); nn];
    for i in 0..d {
        for j in 0..d {
            if i != j {
                v_base[i * d + j] = h.matrix()[[i, j]];
            }
        }
    }
    struct Channel {
        c: Vec<C64>,
        w: Vec<C64>, // C†C
        rate: f64,
    }
    let channels: Vec<Channel> = collapses
        .channels()
        .iter()
        .filter(|(_, rate)| *rate > 0.0)
        .map(|(op, rate)| {
            let c: Vec<C64> = op.matrix().iter().copied().collect();
            let wm = linalg::matmul(&op.dagger().into_matrix(), op.matrix());
            let w: Vec<C64> = wm.iter().copied().collect();
            Channel { c, w, rate: *rate }
        })
        .collect();

    let mut z = vec![C64::new(0.0, 0.0); d];
    let mut masked = vec![C64::new(0.0, 0.0); nn];
    let mut t1 = vec![C64::new(0.0, 0.0); nn];
    let mut t2 = vec![C64::new(0.0, 0.0); nn];

    let mut rhs = |t: f64, y: &[C64], out: &mut [C64]| {
        for (zj, &e) in z.iter_mut().zip(energies.iter()) {
            *zj = C64::new(0.0, e * t).exp();
        }
        let mask = |src: &[C64], dst: &mut [C64], z: &[C64]| {
            for i in 0..d {
                let zi = z[i];
                let row = &src[i * d..(i + 1) * d];
                let drow = &mut dst[i * d..(i + 1) * d];
                for ((dv, &sv), zj) in drow.iter_mut().zip(row.iter()).zip(z.iter()) {
                    *dv = zi * sv * zj.conj();
                }
            }
        };

        // −i[Ṽ, σ]
        mask(&v_base, &mut masked, &z);
        linalg::matmul_sq(&mut t1, &masked, y, d);
        linalg::matmul_sq(&mut t2, y, &masked, d);
        for ((o, &a), &b) in out.iter_mut().zip(t1.iter()).zip(t2.iter()) {
            let comm = a - b;
            *o = C64::new(comm.im, -comm.re);
        }

        for ch in &channels {
            // C̃ σ C̃†
            mask(&ch.c, &mut masked, &z);
            linalg::matmul_sq(&mut t1, &masked, y, d);
            linalg::matmul_sq_dag(&mut t2, &t1, &masked, d);
            for (o, &v) in out.iter_mut().zip(t2.iter()) {
                *o += ch.rate * v;
            }
            // −½ {W̃, σ}
            mask(&ch.w, &mut masked, &z);
            linalg::matmul_sq(&mut t1, &masked, y, d);
            linalg::matmul_sq(&mut t2, y, &masked, d);
            for ((o, &a), &b) in out.iter_mut().zip(t1.iter()).zip(t2.iter()) {
                *o -= 0.5 * ch.rate * (a + b);
            }
        }
    };

    let times = spec.sample_times();
    let sigma0: Vec<C64> = rho0.matrix().iter().copied().collect();
    let raw = integrate_adaptive(
        &sigma0,
        &times,
        &mut rhs,
        |y: &mut [C64]| hermitize_flat(y, d),
        &AdaptiveOptions::from_spec(spec),
    )?;

    let states = times
        .iter()
        .zip(raw)
        .map(|(&t, sigma)| {
            // back to the lab frame: ρ_jk = conj(z_j)·σ_jk·z_k
            let mut rho = Array2::zeros((d, d));
            for i in 0..d {
                let zi = C64::new(0.0, -energies[i] * t).exp();
                for j in 0..d {
                    let zj = C64::new(0.0, energies[j] * t).exp();
                    rho[[i, j]] = zi * sigma[i * d + j] * zj;
                }
            }
            MixedState::from_matrix_unchecked(space, rho)
        })
        .collect();
    Ok(Trajectory { space, times, states: TrajectoryStates::Mixed(states) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{self, IonLevel, Mode};
    use crate::hamiltonian::{
        effective_hamiltonian, free_energies, full_hamiltonian, rwa_hamiltonian, InteractionPicture,
        PhysicalParams,
    };
    use std::f64::consts::{PI, TAU};

    const G: IonLevel = IonLevel::Ground;
    const E: IonLevel = IonLevel::Excited;

    fn space(na: usize, nb: usize) -> CompositeSpace {
        CompositeSpace::new(na, nb).unwrap()
    }

    fn reference_params(eta: f64) -> PhysicalParams {
        let g = TAU * 1.51e6;
        let delta = 10.0 * g;
        PhysicalParams::new(20.0 * delta, 1.0e9, delta, g, eta).unwrap()
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        for n in 2..=12usize {
            let (x, w) = gauss_legendre_rule(n);
            // degree 2n−1 monomial integrates exactly
            for deg in 0..(2 * n) {
                let quad: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
                assert!((quad - exact).abs() < 1e-13, "n = {n}, degree {deg}");
            }
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn kerr_diagonal_phase_flip() {
        let sp = space(2, 2);
        let lambda = 4.7438e3;
        let n_a = fock::number_op(sp, Mode::Phonon);
        let n_b = fock::number_op(sp, Mode::Photon);
        let h = (&n_a * &n_b).scaled(C64::new(lambda, 0.0));
        let psi0 = PureState::basis(sp, G, 1, 1).unwrap();
        let spec = EvolutionSpec::new(PI / lambda, 3).unwrap();
        let traj = evolve_static(&h, &psi0, &spec).unwrap();
        let last = &traj.pure_states().unwrap()[2];
        let idx = sp.index_of(G, 1, 1);
        assert!((last.amplitudes()[idx] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!(traj.max_norm_drift() < 1e-12);
    }

    #[test]
    fn static_norm_is_conserved_over_many_samples() {
        let params = reference_params(0.5412);
        let sp = space(4, 3);
        let h = full_hamiltonian(&params, sp);
        let psi0 = PureState::basis(sp, G, 1, 1).unwrap();
        let spec = EvolutionSpec::new(9.0e-6, 1000).unwrap();
        let traj = evolve_static(&h, &psi0, &spec).unwrap();
        assert!(traj.max_norm_drift() < 1e-9);
        // energy conservation
        let e = traj.expectation_series(&h).unwrap();
        let e0 = e[0].re;
        for v in &e {
            assert!((v.re - e0).abs() < 1e-8 * e0.abs());
        }
    }

    #[test]
    fn static_engine_rejects_non_hermitian_input() {
        let sp = space(2, 2);
        let a = fock::annihilation_op(sp, Mode::Photon);
        let psi0 = PureState::basis(sp, G, 0, 0).unwrap();
        let spec = EvolutionSpec::new(1.0, 3).unwrap();
        assert!(matches!(evolve_static(&a, &psi0, &spec), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn resonant_vacuum_rabi_oscillation() {
        // η = 0, Δ = 0: |e,0,0⟩ ↔ |g,0,1⟩ at coupling g, P_e(t) = cos²(gt)
        let g = TAU * 1.51e6;
        let params = PhysicalParams::new(TAU * 5.0e7, 1.0e9, 0.0, g, 0.0).unwrap();
        let sp = space(1, 2);
        let h = full_hamiltonian(&params, sp);
        let psi0 = PureState::basis(sp, E, 0, 0).unwrap();
        let spec = EvolutionSpec::new(3.0 * PI / g, 100).unwrap();
        let traj = evolve_static(&h, &psi0, &spec).unwrap();
        let (_, spl, sml) = fock::atomic_ops(sp);
        let p_e = observables(&traj, &[&spl * &sml]).unwrap();
        for (k, &t) in traj.times().iter().enumerate() {
            let expected = (g * t).cos().powi(2);
            assert!(
                (p_e[0][k] - expected).abs() < 1e-8,
                "t = {t}: {} vs {expected}",
                p_e[0][k]
            );
        }
    }

    #[test]
    fn constant_source_matches_static_engine() {
        // short window and gentle scales so the global adaptive error stays
        // below the 10× rel_tol consistency budget
        let g = 1.0e6;
        let params = PhysicalParams::new(3.0 * g, 2.0 * g, 0.5 * g, g, 0.3).unwrap();
        let sp = space(3, 2);
        let h = rwa_hamiltonian(&params, sp);
        let psi0 = PureState::superposition(
            sp,
            &[(C64::new(0.8, 0.0), G, 0, 1), (C64::new(0.0, 0.6), E, 1, 0)],
        )
        .unwrap();
        let spec = EvolutionSpec::new(1.0e-6, 20).unwrap();
        let stat = evolve_static(&h, &psi0, &spec).unwrap();
        let dyn_ = evolve_time_dependent(&h, &psi0, &spec).unwrap();
        for k in 0..spec.sample_count {
            let a = &stat.pure_states().unwrap()[k];
            let b = &dyn_.pure_states().unwrap()[k];
            let dev: f64 = a
                .amplitudes()
                .iter()
                .zip(b.amplitudes().iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(dev < 10.0 * spec.rel_tol, "sample {k}: max deviation {dev}");
        }
    }

    #[test]
    fn picture_equivalence_within_tolerance() {
        // e^{−iH₀t}·ψ_I(t) equals the lab-frame propagation of the full H
        let params = reference_params(0.05);
        let sp = space(4, 3);
        let h_full = full_hamiltonian(&params, sp);
        let ip = InteractionPicture::new(&params, sp);
        let energies = free_energies(&params, sp);
        let psi0 = PureState::basis(sp, G, 1, 1).unwrap();
        let t_final = 20.0 / params.delta;
        let spec = EvolutionSpec::new(t_final, 40).unwrap();
        let lab = evolve_static(&h_full, &psi0, &spec).unwrap();
        let rot = evolve_time_dependent(&ip, &psi0, &spec).unwrap();
        for (k, &t) in lab.times().iter().enumerate() {
            let rotated =
                apply_diagonal_phase(&rot.pure_states().unwrap()[k], energies.as_slice().unwrap(), t);
            let dev: f64 = rotated
                .amplitudes()
                .iter()
                .zip(lab.pure_states().unwrap()[k].amplitudes().iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-6, "t = {t}: deviation {dev}");
        }
        assert!(rot.max_norm_drift() < 1e-7);
    }

    #[test]
    fn interaction_picture_norm_drift_over_the_gate_window() {
        // integrator quality on the headline scenario: the whole gate window
        // at rel_tol = 1e-9 keeps the norm within 1e-7
        let eta = 0.541196100146197;
        let params = reference_params(eta);
        let sp = space(4, 3);
        let ip = InteractionPicture::new(&params, sp);
        let psi0 = PureState::basis(sp, G, 1, 1).unwrap();
        let t_gate = TAU * params.delta * (eta * eta).exp() / (params.g * params.g);
        let spec = EvolutionSpec::new(t_gate, 9).unwrap();
        let traj = evolve_time_dependent(&ip, &psi0, &spec).unwrap();
        let drift = traj.max_norm_drift();
        assert!(drift < 1e-7, "norm drift {drift}");
    }

    #[test]
    fn integrator_order_is_at_least_four() {
        // fixed-step runs on the Rabi scenario: error(h) / error(h/2) ≳ 2⁴
        let g = TAU * 1.51e6;
        let params = PhysicalParams::new(TAU * 5.0e7, 1.0e9, 0.0, g, 0.0).unwrap();
        let sp = space(1, 2);
        let h = full_hamiltonian(&params, sp);
        let psi0 = PureState::basis(sp, E, 0, 0).unwrap();
        let t_final = PI / g;
        let err_at = |step: f64| -> f64 {
            let spec = EvolutionSpec::new(t_final, 2)
                .unwrap()
                .with_tolerances(1.0, 1.0)
                .unwrap()
                .with_max_step(step)
                .unwrap();
            let traj = evolve_time_dependent(&h, &psi0, &spec).unwrap();
            let fin = &traj.pure_states().unwrap()[1];
            let idx = sp.index_of(E, 0, 0);
            // exact: amplitude magnitude |cos(g t_final)| = 1 with phase; compare populations
            let p = fin.amplitudes()[idx].norm_sqr();
            (p - (g * t_final).cos().powi(2)).abs()
        };
        let h1 = t_final / 40.0;
        let e1 = err_at(h1);
        let e2 = err_at(h1 / 2.0);
        assert!(e1 > 0.0 && e2 > 0.0);
        let order = (e1 / e2).log2();
        assert!(order >= 4.0, "measured order {order} (e1 = {e1:.3e}, e2 = {e2:.3e})");
    }

    #[test]
    fn stiff_failure_reports_last_good_time() {
        let sp = space(1, 2);
        let g = TAU * 1.51e6;
        let params = PhysicalParams::new(TAU * 5.0e7, 1.0e9, 0.0, g, 0.0).unwrap();
        let h = full_hamiltonian(&params, sp);
        let psi0 = PureState::basis(sp, E, 0, 0).unwrap();
        // absurdly tight tolerance forces step-size underflow
        let spec = EvolutionSpec::new(1.0, 3).unwrap().with_tolerances(1e-300, 1e-300).unwrap();
        match evolve_time_dependent(&h, &psi0, &spec) {
            Err(Error::Integration { last_good_time, .. }) => {
                assert!(last_good_time >= 0.0 && last_good_time < 1.0);
            }
            other => panic!("expected integration error, got {other:?}"),
        }
    }

    #[test]
    fn first_order_propagator_basics() {
        let params = reference_params(0.3);
        let sp = space(2, 2);
        let ip = InteractionPicture::new(&params, sp);
        let u0 = first_order_propagator(&ip, 0.0, 8).unwrap();
        for (i, _, _, _) in sp.basis_iter() {
            for (j, _, _, _) in sp.basis_iter() {
                let expected = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                assert_eq!(u0.matrix()[[i, j]], expected);
            }
        }
        // constant H integrates to exactly H·t
        let h = rwa_hamiltonian(&params, sp);
        let t = 1.7e-7;
        let u = first_order_propagator(&h, t, 24).unwrap();
        for (i, _, _, _) in sp.basis_iter() {
            for (j, _, _, _) in sp.basis_iter() {
                let expected = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
                    - C64::new(0.0, 1.0) * h.matrix()[[i, j]] * t;
                assert!((u.matrix()[[i, j]] - expected).norm() < 1e-9 * params.g * t);
            }
        }
    }

    #[test]
    fn first_order_element_matches_closed_form_integral() {
        // ⟨e,0,0| U₁(t) |g,0,1⟩ = −i·g e^{−η²/2}·(e^{iΔt} − 1)/(iΔ)
        let params = reference_params(0.25);
        let sp = space(2, 2);
        let ip = InteractionPicture::new(&params, sp);
        let delta = params.delta;
        let period = TAU / delta;
        let t = 2.5 * period;
        let quad_points = (64.0 * t / period).ceil() as usize;
        let u = first_order_propagator(&ip, t, quad_points).unwrap();
        let row = sp.index_of(E, 0, 0);
        let col = sp.index_of(G, 0, 1);
        let coupling = params.g * (-params.eta * params.eta / 2.0).exp();
        let integral = (C64::new(0.0, delta * t).exp() - C64::new(1.0, 0.0))
            / C64::new(0.0, delta);
        let expected = -C64::new(0.0, 1.0) * coupling * integral;
        assert!(
            (u.matrix()[[row, col]] - expected).norm() < 1e-10 * coupling.abs() * t.max(1.0),
            "{} vs {expected}",
            u.matrix()[[row, col]]
        );
    }

    #[test]
    fn lindblad_pure_cavity_decay() {
        let sp = space(1, 3);
        let h = Operator::zeros(sp);
        let kappa = TAU * 41.7e3;
        let channels = standard_channels(sp, kappa, 0.0).unwrap();
        let rho0 = MixedState::from_pure(&PureState::basis(sp, G, 0, 1).unwrap());
        let t_final = 2.0 / kappa;
        let spec = EvolutionSpec::new(t_final, 41).unwrap();
        let traj = evolve_lindblad(&h, &channels, &rho0, &spec).unwrap();
        let n_b = fock::number_op(sp, Mode::Photon);
        let pops = observables(&traj, &[n_b]).unwrap();
        for (k, &t) in traj.times().iter().enumerate() {
            let expected = (-kappa * t).exp();
            assert!(
                (pops[0][k] - expected).abs() < 1e-6,
                "t = {t}: {} vs {expected}",
                pops[0][k]
            );
        }
        // anchor: population e^{−1} ≈ 0.367879 at t = 1/κ
        let k_half = 20; // t_final/2 = 1/κ
        assert!((pops[0][k_half] - 0.367879).abs() < 1e-5);
        assert!(traj.max_norm_drift() < 1e-9);
    }

    #[test]
    fn lindblad_without_channels_matches_unitary_evolution() {
        let g = TAU * 1.51e6;
        // moderate scales keep the test fast; physics identical
        let params = PhysicalParams::new(30.0 * g, 7.0 * g, 5.0 * g, g, 0.2).unwrap();
        let sp = space(3, 2);
        let h = rwa_hamiltonian(&params, sp);
        let psi0 = PureState::superposition(
            sp,
            &[(C64::new(1.0, 0.0), G, 0, 1), (C64::new(0.6, 0.2), E, 1, 0)],
        )
        .unwrap();
        let spec = EvolutionSpec::new(5.0 / g, 11).unwrap();
        let unitary = evolve_static(&h, &psi0, &spec).unwrap();
        let master = evolve_lindblad(
            &h,
            &CollapseSet::new(sp),
            &MixedState::from_pure(&psi0),
            &spec,
        )
        .unwrap();
        for k in 0..spec.sample_count {
            let psi = &unitary.pure_states().unwrap()[k];
            let rho = &master.mixed_states().unwrap()[k];
            let projector = MixedState::from_pure(psi);
            // ⟨ψ|ρ|ψ⟩ = tr(ρ·|ψ⟩⟨ψ|)
            let mut overlap = C64::new(0.0, 0.0);
            for i in 0..sp.total_dim() {
                for j in 0..sp.total_dim() {
                    overlap += rho.matrix()[[i, j]] * projector.matrix()[[j, i]];
                }
            }
            assert!((overlap.re - 1.0).abs() < 1e-6, "sample {k}: {}", overlap.re);
        }
    }

    #[test]
    fn lindblad_quality_gates_on_a_short_window() {
        // trace, hermiticity and positivity with both loss channels on
        let params = reference_params(0.5412);
        let sp = space(3, 2);
        let h = full_hamiltonian(&params, sp);
        let kappa = TAU * 41.7e3;
        let gamma = TAU * 1.58e6;
        let channels = standard_channels(sp, kappa, gamma).unwrap();
        let rho0 = MixedState::from_pure(&PureState::basis(sp, G, 1, 1).unwrap());
        let spec = EvolutionSpec::new(4.0e-7, 9)
            .unwrap()
            .with_tolerances(1e-7, 1e-10)
            .unwrap();
        let traj = evolve_lindblad(&h, &channels, &rho0, &spec).unwrap();
        assert!(traj.max_norm_drift() < 1e-6);
        for state in traj.mixed_states().unwrap() {
            assert!(linalg::hermiticity_deviation(state.matrix()) < 1e-10);
            assert!(state.min_eigenvalue().unwrap() > -1e-6);
        }
    }

    #[test]
    fn observable_series_and_conservation_laws() {
        let sp = space(4, 2);
        let psi = PureState::basis(sp, G, 2, 0).unwrap();
        let constant = Trajectory {
            space: sp,
            times: vec![0.0, 1.0, 2.0],
            states: TrajectoryStates::Pure(vec![psi.clone(), psi.clone(), psi]),
        };
        let n_a = fock::number_op(sp, Mode::Phonon);
        let series = observables(&constant, &[n_a]).unwrap();
        assert!(series[0].iter().all(|&v| (v - 2.0).abs() < 1e-14));

        // under RWA dynamics: phonon number and σ₊σ₋ + b†b are conserved
        let params = reference_params(0.5412);
        let h = rwa_hamiltonian(&params, sp);
        let psi0 = PureState::superposition(
            sp,
            &[(C64::new(0.7, 0.0), G, 1, 1), (C64::new(0.5, 0.5), G, 2, 1)],
        )
        .unwrap();
        let spec = EvolutionSpec::new(4.0e-6, 50).unwrap();
        let traj = evolve_static(&h, &psi0, &spec).unwrap();
        let (_, spl, sml) = fock::atomic_ops(sp);
        let n_b = fock::number_op(sp, Mode::Photon);
        let n_exc = &(&spl * &sml) + &n_b;
        let n_a2 = fock::number_op(sp, Mode::Phonon);
        let series = observables(&traj, &[n_exc, n_a2]).unwrap();
        for row in &series {
            let first = row[0];
            for &v in row {
                assert!((v - first).abs() < 1e-8, "{v} vs {first}");
            }
        }
    }

    #[test]
    fn effective_dynamics_never_populates_the_excited_state() {
        let params = reference_params(0.5412);
        let sp = space(3, 2);
        let h = effective_hamiltonian(&params, sp).unwrap();
        let psi0 = PureState::superposition(
            sp,
            &[(C64::new(0.5, 0.0), G, 0, 1), (C64::new(0.5, 0.0), G, 1, 1)],
        )
        .unwrap();
        let spec = EvolutionSpec::new(9.0e-6, 30).unwrap();
        let traj = evolve_static(&h, &psi0, &spec).unwrap();
        let (_, spl, sml) = fock::atomic_ops(sp);
        let p_e = observables(&traj, &[&spl * &sml]).unwrap();
        for &v in &p_e[0] {
            assert!(v.abs() < 1e-12);
        }
    }
}
