//! Operator algebra on truncated Fock and pseudo-spin spaces.
//!
//! Basis ordering is photon-major with atoms ascending, resonator 1 before
//! resonator 2: `(photon, atom 1, .., atom N)` for each resonator. Within a
//! two-level atom the basis order is `(g, e)`. Matrix dumps are therefore
//! reproducible across runs and implementations.

use std::ops::{Add, Mul, Sub};

use ndarray::{linalg::kron, Array1, Array2};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dimensions of the truncated Fock ⊗ spin space for one or two resonators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    n_max: usize,
    n_atoms: usize,
    n_resonators: usize,
}

impl SpaceLayout {
    pub fn new(n_max: usize, n_atoms: usize, n_resonators: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be >= 1".into()));
        }
        if n_atoms < 1 {
            return Err(Error::InvalidParameter("n_atoms must be >= 1".into()));
        }
        if !(1..=2).contains(&n_resonators) {
            return Err(Error::InvalidParameter("n_resonators must be 1 or 2".into()));
        }
        if n_atoms > 16 {
            return Err(Error::InvalidParameter("n_atoms above 16 is not supported".into()));
        }
        Ok(Self { n_max, n_atoms, n_resonators })
    }

    pub fn single(n_max: usize, n_atoms: usize) -> Result<Self> {
        Self::new(n_max, n_atoms, 1)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_resonators(&self) -> usize {
        self.n_resonators
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    /// Dimension of one resonator block, `(n_max + 1) · 2^N`.
    pub fn resonator_dim(&self) -> usize {
        self.fock_dim() << self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.resonator_dim().pow(self.n_resonators as u32)
    }

    /// The layout of a single resonator with the same cutoffs.
    pub fn single_resonator(&self) -> Self {
        Self { n_resonators: 1, ..*self }
    }

    /// Subsystem dimensions in basis order.
    pub fn slot_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.n_resonators * (self.n_atoms + 1));
        for _ in 0..self.n_resonators {
            dims.push(self.fock_dim());
            dims.extend(std::iter::repeat(2).take(self.n_atoms));
        }
        dims
    }

    /// Position of `slot` in [`slot_dims`](Self::slot_dims).
    pub fn slot_index(&self, slot: Slot) -> Result<usize> {
        let (resonator, offset) = match slot {
            Slot::Photon { resonator } => (resonator, 0),
            Slot::Atom { resonator, atom } => {
                if atom >= self.n_atoms {
                    return Err(Error::InvalidSlot(format!(
                        "atom {} on a layout with {} atoms",
                        atom + 1,
                        self.n_atoms
                    )));
                }
                (resonator, atom + 1)
            }
        };
        if resonator >= self.n_resonators {
            return Err(Error::InvalidSlot(format!(
                "resonator {} on a layout with {} resonators",
                resonator + 1,
                self.n_resonators
            )));
        }
        Ok(resonator * (self.n_atoms + 1) + offset)
    }
}

/// A subsystem position. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Photon { resonator: usize },
    Atom { resonator: usize, atom: usize },
}

impl Slot {
    pub fn photon() -> Self {
        Slot::Photon { resonator: 0 }
    }

    pub fn atom(atom: usize) -> Self {
        Slot::Atom { resonator: 0, atom }
    }
}

/// Dense complex square matrix on a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    layout: SpaceLayout,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(layout: SpaceLayout, matrix: CMatrix) -> Result<Self> {
        let dim = layout.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        Ok(Self { layout, matrix })
    }

    pub fn zeros(layout: SpaceLayout) -> Self {
        let dim = layout.dim();
        Self { layout, matrix: CMatrix::zeros((dim, dim)) }
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        Self { layout, matrix: identity(layout.dim()) }
    }

    pub fn layout(&self) -> SpaceLayout {
        self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { layout: self.layout, matrix: adjoint(&self.matrix) }
    }

    /// `max |A − A†|`.
    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.matrix)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector) -> C64 {
        psi.amplitudes.mapv(|z| z.conj()).dot(&self.matrix.dot(&psi.amplitudes))
    }

    /// `⟨φ|A|ψ⟩`.
    pub fn matrix_element(&self, phi: &StateVector, psi: &StateVector) -> C64 {
        phi.amplitudes.mapv(|z| z.conj()).dot(&self.matrix.dot(&psi.amplitudes))
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Operator { layout: self.layout, matrix: &self.matrix * factor }
    }
}

impl Add for &Operator {
    type Output = Operator;

    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "layout mismatch in operator sum");
        Operator { layout: self.layout, matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "layout mismatch in operator difference");
        Operator { layout: self.layout, matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "layout mismatch in operator product");
        Operator { layout: self.layout, matrix: self.matrix.dot(&rhs.matrix) }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;

    fn mul(self, rhs: f64) -> Operator {
        Operator { layout: self.layout, matrix: &self.matrix * C64::from(rhs) }
    }
}

/// Normalisable complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Self {
        Self { amplitudes }
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("cannot normalise a zero vector".into()));
        }
        Ok(Self { amplitudes: &self.amplitudes / C64::from(norm) })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.iter().zip(other.amplitudes.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self { amplitudes: &self.amplitudes * factor }
    }

    pub fn kron(&self, other: &StateVector) -> Self {
        let mut out = CVector::zeros(self.len() * other.len());
        for (i, a) in self.amplitudes.iter().enumerate() {
            for (j, b) in other.amplitudes.iter().enumerate() {
                out[i * other.len() + j] = a * b;
            }
        }
        Self { amplitudes: out }
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> CMatrix {
        outer(&self.amplitudes, &self.amplitudes)
    }
}

impl Add for &StateVector {
    type Output = StateVector;

    fn add(self, rhs: &StateVector) -> StateVector {
        StateVector { amplitudes: &self.amplitudes + &rhs.amplitudes }
    }
}

impl Sub for &StateVector {
    type Output = StateVector;

    fn sub(self, rhs: &StateVector) -> StateVector {
        StateVector { amplitudes: &self.amplitudes - &rhs.amplitudes }
    }
}

/// Photon annihilation operator with hard truncation at `n_max`.
pub fn annihilation(n_max: usize) -> Result<CMatrix> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let dim = n_max + 1;
    let mut a = CMatrix::zeros((dim, dim));
    for n in 1..dim {
        a[[n - 1, n]] = C64::from((n as f64).sqrt());
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// Pauli matrix in the `(g, e)` basis: σ_x = |e⟩⟨g| + |g⟩⟨e|,
/// σ_y = i(|g⟩⟨e| − |e⟩⟨g|), σ_z = 2|e⟩⟨e| − 1.
pub fn pauli(axis: PauliAxis) -> CMatrix {
    match axis {
        PauliAxis::X => ndarray::array![[ZERO, ONE], [ONE, ZERO]],
        PauliAxis::Y => ndarray::array![[ZERO, I], [-I, ZERO]],
        PauliAxis::Z => ndarray::array![[-ONE, ZERO], [ZERO, ONE]],
    }
}

/// Polarized pseudo-spin state `|±⟩ = (|e⟩ ± |g⟩)/√2`.
pub fn polarized(sign: f64) -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(ndarray::array![C64::from(sign * s), C64::from(s)])
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::eye(dim)
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    let mut m = CMatrix::zeros((a.len(), b.len()));
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            m[[i, j]] = x * y.conj();
        }
    }
    m
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Embed a single-subsystem operator at `slot`, identities elsewhere.
pub fn embed(op: &CMatrix, slot: Slot, layout: SpaceLayout) -> Result<Operator> {
    embed_product(&[(slot, op)], layout)
}

/// Kronecker product of the given subsystem factors, identity on every
/// other subsystem. Slots must be distinct.
pub fn embed_product(factors: &[(Slot, &CMatrix)], layout: SpaceLayout) -> Result<Operator> {
    let dims = layout.slot_dims();
    let mut placed: Vec<Option<&CMatrix>> = vec![None; dims.len()];
    for &(slot, op) in factors {
        let index = layout.slot_index(slot)?;
        if placed[index].is_some() {
            return Err(Error::InvalidSlot(format!("slot {slot:?} used twice")));
        }
        if op.nrows() != dims[index] || op.ncols() != dims[index] {
            return Err(Error::DimensionMismatch { expected: dims[index], found: op.nrows() });
        }
        placed[index] = Some(op);
    }
    Operator::new(layout, kron_chain(&dims, &placed))
}

/// Embed an operator spanning `span` consecutive subsystems starting at
/// `first`.
pub fn embed_block(op: &CMatrix, first: Slot, span: usize, layout: SpaceLayout) -> Result<Operator> {
    let dims = layout.slot_dims();
    let start = layout.slot_index(first)?;
    if span == 0 || start + span > dims.len() {
        return Err(Error::InvalidSlot(format!("block of {span} slots starting at {first:?}")));
    }
    let block: usize = dims[start..start + span].iter().product();
    if op.nrows() != block || op.ncols() != block {
        return Err(Error::DimensionMismatch { expected: block, found: op.nrows() });
    }
    let before: usize = dims[..start].iter().product();
    let after: usize = dims[start + span..].iter().product();
    let m = kron(&kron(&identity(before), op), &identity(after));
    Operator::new(layout, m)
}

fn kron_chain(dims: &[usize], factors: &[Option<&CMatrix>]) -> CMatrix {
    // Runs of identities collapse into one identity factor.
    let mut acc = CMatrix::eye(1);
    let mut pending_identity = 1usize;
    for (dim, factor) in dims.iter().zip(factors) {
        match factor {
            None => pending_identity *= dim,
            Some(op) => {
                if pending_identity > 1 {
                    acc = kron(&acc, &identity(pending_identity));
                    pending_identity = 1;
                }
                acc = kron(&acc, *op);
            }
        }
    }
    if pending_identity > 1 {
        acc = kron(&acc, &identity(pending_identity));
    }
    acc
}

/// Truncated coherent state and its truncation diagnostics.
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub state: StateVector,
    /// `1 − Σ|c_n|²` before renormalisation.
    pub truncated_weight: f64,
    /// Set when the truncated weight exceeds 1e−6.
    pub truncation_warning: bool,
}

/// `|α⟩` on `n_max + 1` Fock levels, amplitudes `e^{−|α|²/2} αⁿ/√(n!)`,
/// renormalised after truncation.
pub fn coherent_state(alpha: C64, n_max: usize) -> Result<CoherentState> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let mut amplitudes = CVector::zeros(n_max + 1);
    amplitudes[0] = C64::from((-alpha.norm_sqr() / 2.0).exp());
    for n in 1..=n_max {
        amplitudes[n] = amplitudes[n - 1] * alpha / (n as f64).sqrt();
    }
    let weight: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
    let truncated_weight = (1.0 - weight).max(0.0);
    let state = StateVector::new(amplitudes).normalized()?;
    Ok(CoherentState { state, truncated_weight, truncation_warning: truncated_weight > 1e-6 })
}
