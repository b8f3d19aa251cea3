//! Finite-dimensional Hilbert-space kernel: composite space bookkeeping, mode
//! and atomic operators, tensor embedding, pure/mixed states, and the exact
//! matrix cosine of the position operator.
//!
//! The composite space is always ordered (ion, phonon, photon); the basis
//! index of |s, m, n⟩ is `s·(N_a·N_b) + m·N_b + n`. Everything is immutable
//! after construction and safe to share across threads.

use ndarray::{linalg::kron, Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;

/// Electronic level of the two-level ion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonLevel {
    Ground,
    Excited,
}

impl IonLevel {
    pub fn index(self) -> usize {
        match self {
            IonLevel::Ground => 0,
            IonLevel::Excited => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            IonLevel::Ground
        } else {
            IonLevel::Excited
        }
    }
}

/// Which bosonic factor an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Center-of-mass motion (â).
    Phonon,
    /// Cavity field (b̂).
    Photon,
}

/// Truncation metadata for the tripartite space
/// (2-level ion ⊗ phonon Fock ⊗ photon Fock), with fixed factor ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompositeSpace {
    phonon_cutoff: usize,
    photon_cutoff: usize,
}

impl CompositeSpace {
    /// `phonon_cutoff` keeps Fock states |0⟩..|N_a−1⟩, likewise for photons.
    pub fn new(phonon_cutoff: usize, photon_cutoff: usize) -> Result<Self> {
        if phonon_cutoff == 0 || photon_cutoff == 0 {
            return Err(Error::InvalidSpace(format!(
                "cutoffs must be at least 1, got phonon={phonon_cutoff}, photon={photon_cutoff}"
            )));
        }
        Ok(Self { phonon_cutoff, photon_cutoff })
    }

    pub fn ion_dim(&self) -> usize {
        2
    }

    pub fn phonon_cutoff(&self) -> usize {
        self.phonon_cutoff
    }

    pub fn photon_cutoff(&self) -> usize {
        self.photon_cutoff
    }

    pub fn total_dim(&self) -> usize {
        2 * self.phonon_cutoff * self.photon_cutoff
    }

    /// Basis index of |s, m, n⟩.
    pub fn index_of(&self, ion: IonLevel, m: usize, n: usize) -> usize {
        debug_assert!(m < self.phonon_cutoff && n < self.photon_cutoff);
        ion.index() * self.phonon_cutoff * self.photon_cutoff + m * self.photon_cutoff + n
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn decode(&self, index: usize) -> (IonLevel, usize, usize) {
        debug_assert!(index < self.total_dim());
        let block = self.phonon_cutoff * self.photon_cutoff;
        let s = index / block;
        let rem = index % block;
        (IonLevel::from_index(s), rem / self.photon_cutoff, rem % self.photon_cutoff)
    }

    /// Iterates `(index, ion, m, n)` over the whole basis.
    pub fn basis_iter(&self) -> impl Iterator<Item = (usize, IonLevel, usize, usize)> + '_ {
        (0..self.total_dim()).map(|i| {
            let (s, m, n) = self.decode(i);
            (i, s, m, n)
        })
    }

    fn check_matches(&self, other: &CompositeSpace, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!(
                "{what}: ({}, {}) vs ({}, {})",
                self.phonon_cutoff, self.photon_cutoff, other.phonon_cutoff, other.photon_cutoff
            )))
        }
    }
}

/// Dense complex matrix tagged with its composite space.
#[derive(Debug, Clone)]
pub struct Operator {
    space: CompositeSpace,
    matrix: Array2<C64>,
}

impl Operator {
    pub fn from_matrix(space: CompositeSpace, matrix: Array2<C64>) -> Result<Self> {
        let d = space.total_dim();
        if matrix.dim() != (d, d) {
            return Err(Error::SpaceMismatch(format!(
                "matrix is {:?}, space dimension is {d}",
                matrix.dim()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: CompositeSpace) -> Self {
        let d = space.total_dim();
        Self { space, matrix: Array2::zeros((d, d)) }
    }

    pub fn space(&self) -> CompositeSpace {
        self.space
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Operator {
        Operator { space: self.space, matrix: linalg::dagger(&self.matrix) }
    }

    /// max |M − M†| over all elements.
    pub fn hermiticity_deviation(&self) -> f64 {
        linalg::hermiticity_deviation(&self.matrix)
    }

    /// Checks the hermiticity invariant `max |M − M†| < 10⁻¹² · max |M|`.
    pub fn require_hermitian(&self) -> Result<()> {
        linalg::require_hermitian(&self.matrix, 1e-12)
    }

    /// `self · state`.
    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        self.space.check_matches(&state.space, "apply")?;
        let mut out = Array1::zeros(state.amplitudes.len());
        linalg::matvec_into(&mut out, &self.matrix, &state.amplitudes);
        Ok(PureState { space: state.space, amplitudes: out })
    }

    /// ⟨ψ| M |ψ⟩.
    pub fn expectation_pure(&self, state: &PureState) -> Result<C64> {
        self.space.check_matches(&state.space, "expectation")?;
        let applied = self.apply(state)?;
        Ok(state
            .amplitudes
            .iter()
            .zip(applied.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// tr(M ρ).
    pub fn expectation_mixed(&self, state: &MixedState) -> Result<C64> {
        self.space.check_matches(&state.space, "expectation")?;
        let d = self.space.total_dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                acc += self.matrix[[i, k]] * state.matrix[[k, i]];
            }
        }
        Ok(acc)
    }

    /// Matrix product with space check.
    pub fn compose(&self, rhs: &Operator) -> Result<Operator> {
        self.space.check_matches(&rhs.space, "compose")?;
        Ok(Operator { space: self.space, matrix: linalg::matmul(&self.matrix, &rhs.matrix) })
    }

    pub fn scaled(&self, factor: C64) -> Operator {
        Operator { space: self.space, matrix: self.matrix.mapv(|z| z * factor) }
    }
}

impl std::ops::Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator addition across different spaces");
        Operator { space: self.space, matrix: &self.matrix + &rhs.matrix }
    }
}

impl std::ops::Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator subtraction across different spaces");
        Operator { space: self.space, matrix: &self.matrix - &rhs.matrix }
    }
}

impl std::ops::Mul<&Operator> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator product across different spaces");
        Operator { space: self.space, matrix: linalg::matmul(&self.matrix, &rhs.matrix) }
    }
}

impl std::ops::Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scaled(C64::new(rhs, 0.0))
    }
}

/// Normalized state vector on a composite space.
#[derive(Debug, Clone)]
pub struct PureState {
    space: CompositeSpace,
    amplitudes: Array1<C64>,
}

impl PureState {
    /// Basis ket |s, m, n⟩.
    pub fn basis(space: CompositeSpace, ion: IonLevel, m: usize, n: usize) -> Result<Self> {
        if m >= space.phonon_cutoff() || n >= space.photon_cutoff() {
            return Err(Error::Domain(format!(
                "basis ket |{},{m},{n}> outside cutoffs ({}, {})",
                if ion == IonLevel::Ground { "g" } else { "e" },
                space.phonon_cutoff(),
                space.photon_cutoff()
            )));
        }
        let mut amplitudes = Array1::zeros(space.total_dim());
        amplitudes[space.index_of(ion, m, n)] = C64::new(1.0, 0.0);
        Ok(Self { space, amplitudes })
    }

    /// Normalized superposition Σ cᵢ |sᵢ, mᵢ, nᵢ⟩.
    pub fn superposition(
        space: CompositeSpace,
        terms: &[(C64, IonLevel, usize, usize)],
    ) -> Result<Self> {
        let mut amplitudes = Array1::<C64>::zeros(space.total_dim());
        for &(c, ion, m, n) in terms {
            if m >= space.phonon_cutoff() || n >= space.photon_cutoff() {
                return Err(Error::Domain(format!(
                    "superposition term |{},{m},{n}> outside cutoffs",
                    if ion == IonLevel::Ground { "g" } else { "e" }
                )));
            }
            amplitudes[space.index_of(ion, m, n)] += c;
        }
        let mut state = Self { space, amplitudes };
        let norm = state.norm();
        if norm == 0.0 {
            return Err(Error::Domain("superposition has zero norm".into()));
        }
        state.amplitudes.mapv_inplace(|z| z / norm);
        Ok(state)
    }

    pub fn from_amplitudes(space: CompositeSpace, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::SpaceMismatch(format!(
                "amplitude vector length {} vs space dimension {}",
                amplitudes.len(),
                space.total_dim()
            )));
        }
        Ok(Self { space, amplitudes })
    }

    pub fn space(&self) -> CompositeSpace {
        self.space
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rescales to unit norm; afterwards `|‖ψ‖ − 1| < 10⁻⁹` holds.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::Domain("cannot normalize the zero vector".into()));
        }
        self.amplitudes.mapv_inplace(|z| z / norm);
        Ok(self)
    }

    /// ⟨self|other⟩.
    pub fn overlap(&self, other: &PureState) -> Result<C64> {
        self.space.check_matches(&other.space, "overlap")?;
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// |⟨ψ|φ⟩|².
pub fn state_fidelity(a: &PureState, b: &PureState) -> Result<f64> {
    Ok(a.overlap(b)?.norm_sqr())
}

/// Density operator on a composite space.
#[derive(Debug, Clone)]
pub struct MixedState {
    space: CompositeSpace,
    matrix: Array2<C64>,
}

impl MixedState {
    /// Validates hermiticity (10⁻¹⁰), unit trace (10⁻⁸) and positivity
    /// (eigenvalues ≥ −10⁻⁸).
    pub fn new(space: CompositeSpace, matrix: Array2<C64>) -> Result<Self> {
        let d = space.total_dim();
        if matrix.dim() != (d, d) {
            return Err(Error::SpaceMismatch(format!(
                "density matrix is {:?}, space dimension is {d}",
                matrix.dim()
            )));
        }
        let dev = linalg::hermiticity_deviation(&matrix);
        if dev > 1e-10 {
            return Err(Error::NotHermitian { deviation: dev, scale: linalg::max_abs(&matrix) });
        }
        let state = Self { space, matrix };
        let trace = state.trace();
        if (trace.re - 1.0).abs() > 1e-8 || trace.im.abs() > 1e-8 {
            return Err(Error::Domain(format!("density matrix trace {trace} is not 1")));
        }
        let (vals, _) = linalg::eigh(&state.matrix)?;
        if vals.iter().any(|&v| v < -1e-8) {
            return Err(Error::Domain(format!(
                "density matrix has negative eigenvalue {:.3e}",
                vals.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(state)
    }

    /// |ψ⟩⟨ψ|.
    pub fn from_pure(state: &PureState) -> Self {
        let d = state.space.total_dim();
        let matrix = Array2::from_shape_fn((d, d), |(i, j)| {
            state.amplitudes[i] * state.amplitudes[j].conj()
        });
        Self { space: state.space, matrix }
    }

    /// Bypasses validation; used by the propagation engines whose outputs are
    /// checked by trajectory diagnostics instead.
    pub(crate) fn from_matrix_unchecked(space: CompositeSpace, matrix: Array2<C64>) -> Self {
        Self { space, matrix }
    }

    pub fn space(&self) -> CompositeSpace {
        self.space
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().iter().sum()
    }

    /// tr(ρ²), real part.
    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                acc += (self.matrix[[i, j]] * self.matrix[[j, i]]).re;
            }
        }
        acc
    }

    /// Smallest eigenvalue (negativity diagnostic).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = linalg::eigh(&self.matrix)?;
        Ok(vals.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    /// Largest-eigenvalue branch of ρ: `(p_max, |v_max⟩)`.
    pub fn dominant_eigenpair(&self) -> Result<(f64, PureState)> {
        let (vals, vecs) = linalg::eigh(&self.matrix)?;
        let k = vals.len() - 1; // ascending order
        let amplitudes = vecs.column(k).to_owned();
        Ok((vals[k], PureState { space: self.space, amplitudes }))
    }
}

fn ladder_matrix(dim: usize) -> Array2<C64> {
    let mut a = Array2::zeros((dim, dim));
    for m in 1..dim {
        a[[m - 1, m]] = C64::new((m as f64).sqrt(), 0.0);
    }
    a
}

fn identity_matrix(dim: usize) -> Array2<C64> {
    Array2::from_diag(&Array1::from_elem(dim, C64::new(1.0, 0.0)))
}

/// I_ion ⊗ A_phonon ⊗ B_photon.
fn embed(space: CompositeSpace, ion: Array2<C64>, phonon: Array2<C64>, photon: Array2<C64>) -> Operator {
    let matrix = kron(&kron(&ion, &phonon), &photon);
    Operator { space, matrix }
}

/// Identity on the composite space.
pub fn identity_op(space: CompositeSpace) -> Operator {
    Operator { space, matrix: identity_matrix(space.total_dim()) }
}

/// Annihilation operator of the selected mode, embedded in the full space:
/// ⟨m−1| a |m⟩ = √m, identity on the other factors.
pub fn annihilation_op(space: CompositeSpace, mode: Mode) -> Operator {
    let i2 = identity_matrix(2);
    match mode {
        Mode::Phonon => embed(
            space,
            i2,
            ladder_matrix(space.phonon_cutoff()),
            identity_matrix(space.photon_cutoff()),
        ),
        Mode::Photon => embed(
            space,
            i2,
            identity_matrix(space.phonon_cutoff()),
            ladder_matrix(space.photon_cutoff()),
        ),
    }
}

/// Creation operator of the selected mode.
pub fn creation_op(space: CompositeSpace, mode: Mode) -> Operator {
    annihilation_op(space, mode).dagger()
}

/// Number operator a†a (or b†b) of the selected mode.
pub fn number_op(space: CompositeSpace, mode: Mode) -> Operator {
    let (na, nb) = (space.phonon_cutoff(), space.photon_cutoff());
    let diag = |dim: usize| {
        Array2::from_diag(&Array1::from_shape_fn(dim, |m| C64::new(m as f64, 0.0)))
    };
    match mode {
        Mode::Phonon => embed(space, identity_matrix(2), diag(na), identity_matrix(nb)),
        Mode::Photon => embed(space, identity_matrix(2), identity_matrix(na), diag(nb)),
    }
}

/// Atomic operators (σ_z, σ_+, σ_−) tensored with identities:
/// σ_z|e⟩ = +|e⟩, σ_z|g⟩ = −|g⟩, σ_+|g⟩ = |e⟩.
pub fn atomic_ops(space: CompositeSpace) -> (Operator, Operator, Operator) {
    let (na, nb) = (space.phonon_cutoff(), space.photon_cutoff());
    let mut sz = Array2::zeros((2, 2));
    sz[[0, 0]] = C64::new(-1.0, 0.0);
    sz[[1, 1]] = C64::new(1.0, 0.0);
    let mut sp = Array2::zeros((2, 2));
    sp[[1, 0]] = C64::new(1.0, 0.0); // |e⟩⟨g|
    let sm = linalg::dagger(&sp);
    (
        embed(space, sz, identity_matrix(na), identity_matrix(nb)),
        embed(space, sp, identity_matrix(na), identity_matrix(nb)),
        embed(space, sm, identity_matrix(na), identity_matrix(nb)),
    )
}

/// Extra phonon levels used before applying a matrix function of the ladder
/// operators, so truncation cannot contaminate retained matrix elements.
pub fn guard_levels(eta: f64) -> usize {
    20usize.max((10.0 * eta * eta).ceil() as usize)
}

/// cos[η(a†+a)] on a single phonon mode of dimension `keep`, computed by
/// eigendecomposition on `keep + guard` levels and truncated back.
pub(crate) fn cos_position_single_mode(keep: usize, eta: f64, guard: usize) -> Array2<C64> {
    if eta == 0.0 {
        return identity_matrix(keep);
    }
    let work = keep + guard;
    let a = ladder_matrix(work);
    let x = &a + &linalg::dagger(&a);
    let cos_full = linalg::hermitian_matrix_function(&x, |v| (eta * v).cos())
        .expect("eigendecomposition of the position operator cannot fail");
    cos_full.slice(ndarray::s![..keep, ..keep]).to_owned()
}

/// cos[η(a†+a)] on the phonon factor, identity on ion and photon factors.
///
/// Computed exactly on an enlarged phonon space (see [`guard_levels`]) and
/// truncated back, so retained elements are accurate to well below 10⁻¹⁰ for
/// η ≤ 1. The result is hermitian; η = 0 returns the exact identity.
pub fn cos_position_op(space: CompositeSpace, eta: f64) -> Operator {
    debug_assert!(eta >= 0.0, "Lamb-Dicke parameter must be non-negative");
    let block = cos_position_single_mode(space.phonon_cutoff(), eta.abs(), guard_levels(eta));
    let mut op = embed(space, identity_matrix(2), block, identity_matrix(space.photon_cutoff()));
    linalg::hermitize(&mut op.matrix);
    op
}
