//! Hamiltonians: the spin-boson model, static perturbations, gate controls
//! and the two-resonator composite.
//!
//! All frequencies are in units of ω_eg (so ω_eg ≡ 1). No rotating frame is
//! used anywhere.

use ndarray::linalg::kron;

use crate::hilbert::{
    annihilation, adjoint, embed, embed_product, identity, pauli, Operator, PauliAxis, Slot,
    SpaceLayout, C64, I,
};
use crate::{Error, Result};

/// Default ceiling on the composite two-resonator dimension.
pub const DEFAULT_DIMENSION_CEILING: usize = 4096;

/// Parameters of one resonator: cavity frequency, vacuum Rabi frequency,
/// atom count and Fock cutoff. The atomic transition frequency is the unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub omega_cav: f64,
    pub omega0: f64,
    pub n_atoms: usize,
    pub n_max: usize,
}

impl SystemParams {
    /// Resonant parameters (ω_cav = ω_eg).
    pub fn new(omega0: f64, n_atoms: usize, n_max: usize) -> Self {
        Self { omega_cav: 1.0, omega0, n_atoms, n_max }
    }

    pub fn with_omega0(self, omega0: f64) -> Self {
        Self { omega0, ..self }
    }

    pub fn with_n_max(self, n_max: usize) -> Self {
        Self { n_max, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0.is_finite() && self.omega0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("omega0 = {} must be >= 0", self.omega0)));
        }
        if !(self.omega_cav.is_finite() && self.omega_cav > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega_cav = {} must be > 0",
                self.omega_cav
            )));
        }
        SpaceLayout::single(self.n_max, self.n_atoms).map(|_| ())
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        self.validate()?;
        SpaceLayout::single(self.n_max, self.n_atoms)
    }

    /// Coherent amplitude of the asymptotic cat branch paired with
    /// `|+…+⟩`. With the `i(a − a†)σ_x` coupling the displacement is
    /// imaginary: `α = i·√N·Ω₀/ω_cav`.
    pub fn alpha(&self) -> C64 {
        I * ((self.n_atoms as f64).sqrt() * self.omega0 / self.omega_cav)
    }

    /// `√N·Ω₀/ω_eg`, the photonic amplitude used to compare different N.
    pub fn photonic_amplitude(&self) -> f64 {
        (self.n_atoms as f64).sqrt() * self.omega0
    }
}

/// Static perturbation amplitudes, one entry per atom, plus the complex
/// resonator-field amplitude.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerturbationParams {
    pub h_x: Vec<f64>,
    pub h_y: Vec<f64>,
    pub h_z: Vec<f64>,
    pub h_a: C64,
}

impl PerturbationParams {
    pub fn zeros(n_atoms: usize) -> Self {
        Self { h_x: vec![0.0; n_atoms], h_y: vec![0.0; n_atoms], h_z: vec![0.0; n_atoms], h_a: C64::default() }
    }
}

/// `H = ω_cav a†a + ½Σ_j σ_z^j + Σ_j i(Ω₀/√N)(a − a†)σ_x^j`.
pub fn build_dicke(params: &SystemParams) -> Result<Operator> {
    let layout = params.layout()?;
    let n_atoms = params.n_atoms;
    let a = annihilation(params.n_max)?;
    let number = adjoint(&a).dot(&a);
    let quadrature = (&a - &adjoint(&a)).mapv(|z| z * I);
    let coupling = params.omega0 / (n_atoms as f64).sqrt();
    let sx = pauli(PauliAxis::X);
    let sz = pauli(PauliAxis::Z);

    let mut h = embed(&number.mapv(|z| z * params.omega_cav), Slot::photon(), layout)?;
    let half_sz = sz.mapv(|z| z * 0.5);
    let scaled_quadrature = quadrature.mapv(|z| z * coupling);
    for j in 0..n_atoms {
        h = &h + &embed(&half_sz, Slot::atom(j), layout)?;
        h = &h + &embed_product(&[(Slot::photon(), &scaled_quadrature), (Slot::atom(j), &sx)], layout)?;
    }
    Ok(h)
}

/// Total excitation parity `Π = (−1)^{a†a} Π_j σ_z^j` on a single
/// resonator.
pub fn parity(layout: SpaceLayout) -> Result<Operator> {
    if layout.n_resonators() != 1 {
        return Err(Error::InvalidParameter("parity is defined on a single resonator".into()));
    }
    let dim = layout.dim();
    let spin_dim = 1usize << layout.n_atoms();
    let mut p = Operator::zeros(layout).into_matrix();
    for index in 0..dim {
        let photons = index / spin_dim;
        let spins = index % spin_dim;
        // σ_z = −1 on g (bit 0) and +1 on e (bit 1).
        let ground_count = layout.n_atoms() - spins.count_ones() as usize;
        let sign = if (photons + ground_count) % 2 == 0 { 1.0 } else { -1.0 };
        p[[index, index]] = C64::from(sign);
    }
    Operator::new(layout, p)
}

/// `Σ_j (h_x σ_x^j + h_y σ_y^j + h_z σ_z^j) + h_a a + h_a* a†`.
pub fn build_static_perturbation(p: &PerturbationParams, layout: SpaceLayout) -> Result<Operator> {
    let n = layout.n_atoms();
    if layout.n_resonators() != 1 {
        return Err(Error::InvalidParameter("static perturbations act on a single resonator".into()));
    }
    for (name, v) in [("h_x", &p.h_x), ("h_y", &p.h_y), ("h_z", &p.h_z)] {
        if v.len() != n {
            return Err(Error::InvalidParameter(format!("{name} has {} entries, expected {n}", v.len())));
        }
    }
    let mut out = Operator::zeros(layout);
    for j in 0..n {
        let local = pauli(PauliAxis::X).mapv(|z| z * p.h_x[j])
            + pauli(PauliAxis::Y).mapv(|z| z * p.h_y[j])
            + pauli(PauliAxis::Z).mapv(|z| z * p.h_z[j]);
        if local.iter().any(|z| *z != C64::default()) {
            out = &out + &embed(&local, Slot::atom(j), layout)?;
        }
    }
    if p.h_a != C64::default() {
        let a = annihilation(layout.n_max())?;
        let field = a.mapv(|z| z * p.h_a) + adjoint(&a).mapv(|z| z * p.h_a.conj());
        out = &out + &embed(&field, Slot::photon(), layout)?;
    }
    Ok(out)
}

/// Gate control `c·σ_x^{atom}` on the first resonator.
pub fn build_control_x(c_amp: f64, atom: usize, layout: SpaceLayout) -> Result<Operator> {
    embed(&pauli(PauliAxis::X).mapv(|z| z * c_amp), Slot::atom(atom), layout)
}

/// `H₁⊗1 + 1⊗H₂ + c12·σ_x(res 1, atom 1)·σ_x(res 2, atom 1)`.
///
/// Both resonators must share cutoffs and atom count. Layouts above
/// `ceiling` are rejected.
pub fn build_two_resonator(
    p1: &SystemParams,
    p2: &SystemParams,
    c12: f64,
    ceiling: usize,
) -> Result<Operator> {
    if p1.n_max != p2.n_max || p1.n_atoms != p2.n_atoms {
        return Err(Error::InvalidParameter(
            "both resonators must share n_max and n_atoms".into(),
        ));
    }
    let layout = SpaceLayout::new(p1.n_max, p1.n_atoms, 2)?;
    if layout.dim() > ceiling {
        return Err(Error::DimensionCeiling { dim: layout.dim(), ceiling });
    }
    let h1 = build_dicke(p1)?;
    let h2 = build_dicke(p2)?;
    let id = identity(layout.resonator_dim());
    let mut h = kron(h1.matrix(), &id) + kron(&id, h2.matrix());
    if c12 != 0.0 {
        let sx = pauli(PauliAxis::X);
        let coupling = embed_product(
            &[
                (Slot::Atom { resonator: 0, atom: 0 }, &sx),
                (Slot::Atom { resonator: 1, atom: 0 }, &sx),
            ],
            layout,
        )?;
        h = h + coupling.matrix().mapv(|z| z * c12);
    }
    Operator::new(layout, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{embed, StateVector};
    use ndarray_linalg::{EigValsh, UPLO};

    #[test]
    fn decoupled_spectrum() {
        let h = build_dicke(&SystemParams::new(0.0, 1, 6)).unwrap();
        let mut e = h.matrix().eigvalsh(UPLO::Lower).unwrap().to_vec();
        e.sort_by(f64::total_cmp);
        assert!((e[0] + 0.5).abs() < 1e-12);
        let mut expected: Vec<f64> =
            (0..=6).flat_map(|n| [n as f64 - 0.5, n as f64 + 0.5]).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dicke_commutes_with_parity() {
        for n_atoms in 1..=3 {
            for omega0 in [0.5, 1.0, 2.0] {
                let params = SystemParams::new(omega0, n_atoms, 8);
                let h = build_dicke(&params).unwrap();
                assert!(h.hermiticity_residual() <= 1e-12);
                let p = parity(params.layout().unwrap()).unwrap();
                assert!(h.commutator(&p).max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn parity_basics() {
        let layout = SpaceLayout::single(3, 2).unwrap();
        let p = parity(layout).unwrap();
        let vacuum = StateVector::basis(layout.dim(), 0);
        assert_eq!(p.expectation(&vacuum).re, 1.0);
        assert_eq!(&p * &p, Operator::identity(layout));
        let one_atom = parity(SpaceLayout::single(3, 1).unwrap()).unwrap();
        assert_eq!(one_atom.expectation(&StateVector::basis(8, 0)).re, -1.0);
    }

    #[test]
    fn static_perturbation_parts() {
        let layout = SpaceLayout::single(4, 2).unwrap();
        let zero = build_static_perturbation(&PerturbationParams::zeros(2), layout).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let mut p = PerturbationParams::zeros(2);
        p.h_z[0] = 0.3;
        let v = build_static_perturbation(&p, layout).unwrap();
        let expected = embed(&pauli(PauliAxis::Z), Slot::atom(0), layout).unwrap();
        assert!((&v - &(&expected * 0.3)).max_abs() < 1e-15);
        let full = PerturbationParams {
            h_x: vec![0.1, -0.2],
            h_y: vec![0.05, 0.3],
            h_z: vec![-0.4, 0.2],
            h_a: C64::new(0.1, -0.7),
        };
        assert!(build_static_perturbation(&full, layout).unwrap().hermiticity_residual() <= 1e-12);
        assert!(build_static_perturbation(&PerturbationParams::zeros(1), layout).is_err());
    }

    #[test]
    fn control_term() {
        let layout = SpaceLayout::single(3, 2).unwrap();
        assert_eq!(build_control_x(0.0, 0, layout).unwrap().max_abs(), 0.0);
        let c = build_control_x(0.7, 1, layout).unwrap();
        let sx = embed(&pauli(PauliAxis::X), Slot::atom(1), layout).unwrap();
        assert_eq!(c.commutator(&sx).max_abs(), 0.0);
        assert!(build_control_x(0.7, 2, layout).is_err());
    }

    #[test]
    fn two_resonator_guards() {
        let p = SystemParams::new(1.0, 1, 6);
        assert!(build_two_resonator(&p, &p.with_n_max(5), 0.0, 4096).is_err());
        let err = build_two_resonator(&p, &p, 0.0, 100).unwrap_err();
        assert!(matches!(err, Error::DimensionCeiling { dim: 196, ceiling: 100 }));
        let h = build_two_resonator(&p, &p, 0.01, 4096).unwrap();
        assert!(h.hermiticity_residual() <= 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SystemParams::new(-1.0, 1, 4).validate().is_err());
        assert!(SystemParams::new(1.0, 0, 4).validate().is_err());
        assert!(SystemParams { omega_cav: 0.0, ..SystemParams::new(1.0, 1, 4) }.validate().is_err());
    }
}
