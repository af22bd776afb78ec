//! Simulation of protected vacuum-doublet qubits in ultrastrong-coupling
//! circuit QED.
//!
//! The crate is organised bottom-up:
//!
//! - [`hilbert`]: truncated Fock ⊗ pseudo-spin operator algebra.
//! - [`model`]: the non-RWA spin-boson Hamiltonian, static perturbations,
//!   gate controls and the two-resonator composite.
//! - [`spectrum`]: Hermitian diagonalisation and the quasi-degenerate
//!   cat-state doublet.
//! - [`dissipation`]: zero-temperature colored-noise kernels, relaxation
//!   operators and the master-equation generator.
//! - [`dynamics`]: fixed-step RK4 propagation, including adiabatic
//!   re-diagonalisation under time-dependent controls.
//! - [`protocols`]: coherence-time experiments, X/Z/XX gates and readout.
//!
//! Units: ω_eg ≡ 1 sets the energy scale, 1/ω_eg the time scale, ħ = 1.

pub mod dissipation;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod model;
pub mod protocols;
pub mod spectrum;

pub use error::{Error, Result};
pub use hilbert::{C64, CMatrix, CVector};
