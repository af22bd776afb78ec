//! Zero-temperature colored-noise master equation: jump operators, the
//! half-Fourier bath kernel, relaxation operators and the generator
//!
//! `dρ/dt = −i[H, ρ] + Σ_k (U_k ρ S_k + S_k ρ U_k† − S_k U_k ρ − ρ U_k† S_k)`
//!
//! evaluated in a truncated eigenbasis of `H`.

use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2};

use crate::hilbert::{
    adjoint, annihilation, embed, embed_product, hermiticity_residual, pauli, CMatrix, Operator,
    PauliAxis, Slot, SpaceLayout, C64, I,
};
use crate::spectrum::SpectrumResult;
use crate::{Error, Result};

/// Frequencies closer than this to a band edge take the boundary weight.
pub const EDGE_TOLERANCE: f64 = 1e-12;

static NEXT_BASIS_ID: AtomicU64 = AtomicU64::new(1);

/// Fresh tag for a retained eigenbasis.
pub fn next_basis_id() -> u64 {
    NEXT_BASIS_ID.fetch_add(1, Ordering::Relaxed)
}

/// Noise channel identity. `resonator` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelLabel {
    /// `a + a†`
    ResonatorV { resonator: usize },
    /// `i(a − a†)`
    ResonatorF { resonator: usize },
    X { resonator: usize, atom: usize },
    Y { resonator: usize, atom: usize },
    Z { resonator: usize, atom: usize },
    /// `σ_x(res 1, atom 1)·σ_x(res 2, atom 1)`
    X12,
}

impl ChannelLabel {
    pub fn resonator(&self) -> Option<usize> {
        match *self {
            ChannelLabel::ResonatorV { resonator }
            | ChannelLabel::ResonatorF { resonator }
            | ChannelLabel::X { resonator, .. }
            | ChannelLabel::Y { resonator, .. }
            | ChannelLabel::Z { resonator, .. } => Some(resonator),
            ChannelLabel::X12 => None,
        }
    }

    /// Same channel on another resonator.
    pub fn on_resonator(self, r: usize) -> Self {
        match self {
            ChannelLabel::ResonatorV { .. } => ChannelLabel::ResonatorV { resonator: r },
            ChannelLabel::ResonatorF { .. } => ChannelLabel::ResonatorF { resonator: r },
            ChannelLabel::X { atom, .. } => ChannelLabel::X { resonator: r, atom },
            ChannelLabel::Y { atom, .. } => ChannelLabel::Y { resonator: r, atom },
            ChannelLabel::Z { atom, .. } => ChannelLabel::Z { resonator: r, atom },
            ChannelLabel::X12 => ChannelLabel::X12,
        }
    }
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match *self {
            ChannelLabel::ResonatorV { .. } => "r_v".to_string(),
            ChannelLabel::ResonatorF { .. } => "r_f".to_string(),
            ChannelLabel::X { atom, .. } => format!("x_{}", atom + 1),
            ChannelLabel::Y { atom, .. } => format!("y_{}", atom + 1),
            ChannelLabel::Z { atom, .. } => format!("z_{}", atom + 1),
            ChannelLabel::X12 => "x12".to_string(),
        };
        match self.resonator() {
            Some(r) if r > 0 => write!(f, "{base}@{}", r + 1),
            _ => f.write_str(&base),
        }
    }
}

/// Per-kind rates, shared by every atom and resonator. Units of ω_eg.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseRates {
    pub gamma_rv: f64,
    pub gamma_rf: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub gamma_z: f64,
    pub gamma_x12: f64,
}

impl NoiseRates {
    /// Atom rates `{Γ_x, Γ_y, Γ_z}` and one resonator rate for both
    /// quadratures.
    pub fn anisotropic(gamma_x: f64, gamma_y: f64, gamma_z: f64, gamma_r: f64) -> Self {
        NoiseRates { gamma_rv: gamma_r, gamma_rf: gamma_r, gamma_x, gamma_y, gamma_z, gamma_x12: 0.0 }
    }

    pub fn with_x12(mut self, gamma_x12: f64) -> Self {
        self.gamma_x12 = gamma_x12;
        self
    }

    pub fn rate(&self, label: ChannelLabel) -> f64 {
        match label {
            ChannelLabel::ResonatorV { .. } => self.gamma_rv,
            ChannelLabel::ResonatorF { .. } => self.gamma_rf,
            ChannelLabel::X { .. } => self.gamma_x,
            ChannelLabel::Y { .. } => self.gamma_y,
            ChannelLabel::Z { .. } => self.gamma_z,
            ChannelLabel::X12 => self.gamma_x12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma_rv, self.gamma_rf, self.gamma_x, self.gamma_y, self.gamma_z, self.gamma_x12];
        if all.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParameter(format!("rates must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        [self.gamma_rv, self.gamma_rf, self.gamma_x, self.gamma_y, self.gamma_z, self.gamma_x12]
            .iter()
            .all(|g| *g == 0.0)
    }
}

/// A jump operator `S_k` with its rate and spectral cutoff.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    pub label: ChannelLabel,
    pub jump: Operator,
    pub rate: f64,
    pub cutoff: f64,
}

/// Weight given to the kernel at the band edges `ω = 0` and `ω = −ω_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryWeight {
    Zero,
    #[default]
    Half,
    Full,
}

impl BoundaryWeight {
    pub fn factor(self) -> f64 {
        match self {
            BoundaryWeight::Zero => 0.0,
            BoundaryWeight::Half => 0.5,
            BoundaryWeight::Full => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Upper edge ω_c of the flat noise band.
    pub cutoff: f64,
    /// Keep the principal-value (Lamb shift) part.
    pub include_lamb: bool,
    /// Log regulariser for the principal-value part.
    pub epsilon: f64,
    pub boundary: BoundaryWeight,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { cutoff: 10.0, include_lamb: false, epsilon: 1e-8, boundary: BoundaryWeight::Half }
    }
}

impl KernelOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(Error::InvalidParameter(format!("cutoff must be > 0, got {}", self.cutoff)));
        }
        if self.include_lamb && !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be > 0 with the Lamb term".into()));
        }
        Ok(())
    }
}

/// `W(ω) = ∫₀^∞ dτ e^{−iωτ} ∫₀^{ω_c} Γ e^{−iω′τ} dω′` for a flat band at
/// zero temperature. Non-zero real part only for downward transitions
/// `−ω_c < ω < 0`.
pub fn half_fourier_kernel(omega: f64, rate: f64, options: &KernelOptions) -> C64 {
    if rate == 0.0 {
        return C64::default();
    }
    let wc = options.cutoff;
    let on_edge = omega.abs() <= EDGE_TOLERANCE || (omega + wc).abs() <= EDGE_TOLERANCE * wc.max(1.0);
    let re = if on_edge {
        std::f64::consts::PI * rate * options.boundary.factor()
    } else if -wc < omega && omega < 0.0 {
        std::f64::consts::PI * rate
    } else {
        0.0
    };
    let im = if options.include_lamb {
        let eps = options.epsilon;
        rate * ((omega.abs() + eps).ln() - ((wc + omega).abs() + eps).ln())
    } else {
        0.0
    };
    C64::new(re, im)
}

/// Hermitian jump operator for `label` on `layout`.
pub fn jump_operator(label: ChannelLabel, layout: SpaceLayout) -> Result<Operator> {
    let n_max = layout.n_max();
    match label {
        ChannelLabel::ResonatorV { resonator } | ChannelLabel::ResonatorF { resonator } => {
            let a = annihilation(n_max)?;
            let ad = adjoint(&a);
            let op = if matches!(label, ChannelLabel::ResonatorV { .. }) {
                &a + &ad
            } else {
                (&a - &ad).mapv(|z| z * I)
            };
            embed(&op, Slot::Photon { resonator }, layout)
        }
        ChannelLabel::X { resonator, atom } => {
            embed(&pauli(PauliAxis::X), Slot::Atom { resonator, atom }, layout)
        }
        ChannelLabel::Y { resonator, atom } => {
            embed(&pauli(PauliAxis::Y), Slot::Atom { resonator, atom }, layout)
        }
        ChannelLabel::Z { resonator, atom } => {
            embed(&pauli(PauliAxis::Z), Slot::Atom { resonator, atom }, layout)
        }
        ChannelLabel::X12 => {
            if layout.n_resonators() != 2 {
                return Err(Error::InvalidParameter(
                    "channel x12 needs a two-resonator layout".into(),
                ));
            }
            let sx = pauli(PauliAxis::X);
            embed_product(
                &[
                    (Slot::Atom { resonator: 0, atom: 0 }, &sx),
                    (Slot::Atom { resonator: 1, atom: 0 }, &sx),
                ],
                layout,
            )
        }
    }
}

/// Channel labels of one resonator in canonical order:
/// `r_v, r_f, x_1, y_1, z_1, x_2, …`.
pub fn resonator_labels(resonator: usize, n_atoms: usize) -> Vec<ChannelLabel> {
    let mut labels = vec![ChannelLabel::ResonatorV { resonator }, ChannelLabel::ResonatorF { resonator }];
    for atom in 0..n_atoms {
        labels.push(ChannelLabel::X { resonator, atom });
        labels.push(ChannelLabel::Y { resonator, atom });
        labels.push(ChannelLabel::Z { resonator, atom });
    }
    labels
}

/// Every channel with non-zero rate on `layout`. `x12` is included on
/// two-resonator layouts; asking for it on a single resonator is an error.
pub fn build_jump_set(layout: SpaceLayout, rates: &NoiseRates, cutoff: f64) -> Result<Vec<NoiseChannel>> {
    rates.validate()?;
    if rates.gamma_x12 > 0.0 && layout.n_resonators() != 2 {
        return Err(Error::InvalidParameter("channel x12 needs a two-resonator layout".into()));
    }
    let mut labels = Vec::new();
    for r in 0..layout.n_resonators() {
        labels.extend(resonator_labels(r, layout.n_atoms()));
    }
    if layout.n_resonators() == 2 {
        labels.push(ChannelLabel::X12);
    }
    labels
        .into_iter()
        .filter(|l| rates.rate(*l) > 0.0)
        .map(|label| {
            Ok(NoiseChannel { label, jump: jump_operator(label, layout)?, rate: rates.rate(label), cutoff })
        })
        .collect()
}

/// One channel in the retained eigenbasis.
#[derive(Debug, Clone)]
pub struct JumpTerm {
    pub label: ChannelLabel,
    pub rate: f64,
    /// `S_k` projected onto the retained basis.
    pub jump: CMatrix,
    /// `(U_k)_{mn} = (S_k)_{mn} W(E_m − E_n)`.
    pub relaxation: CMatrix,
}

/// Everything needed to evaluate the generator in a retained eigenbasis.
#[derive(Debug, Clone)]
pub struct GeneratorContext {
    basis_id: u64,
    energies: Array1<f64>,
    terms: Vec<JumpTerm>,
    /// `A = Σ_k S_k U_k`.
    dissipative_sum: CMatrix,
    options: KernelOptions,
}

impl GeneratorContext {
    /// Project `channels` onto the eigenbasis `spectrum` (truncated to its
    /// retained levels) and weight them with the bath kernel.
    pub fn build(spectrum: &SpectrumResult, channels: &[NoiseChannel], options: &KernelOptions) -> Result<Self> {
        let v = &spectrum.eigenvectors;
        let vd = adjoint(v);
        let projected = channels
            .iter()
            .map(|c| {
                if c.jump.layout() != spectrum.layout {
                    return Err(Error::LayoutMismatch);
                }
                let residual = c.jump.hermiticity_residual();
                if residual > 1e-12 {
                    return Err(Error::NotHermitian { residual });
                }
                Ok((c.label, c.rate, c.cutoff, vd.dot(&c.jump.matrix().dot(v))))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(spectrum.eigenvalues.clone(), projected, options)
    }

    /// Build from energies and jump matrices already expressed in the
    /// retained basis.
    pub fn from_parts(
        energies: Array1<f64>,
        jumps: Vec<(ChannelLabel, f64, CMatrix)>,
        options: &KernelOptions,
    ) -> Result<Self> {
        let jumps = jumps.into_iter().map(|(l, r, s)| (l, r, options.cutoff, s)).collect();
        Self::assemble(energies, jumps, options)
    }

    fn assemble(
        energies: Array1<f64>,
        jumps: Vec<(ChannelLabel, f64, f64, CMatrix)>,
        options: &KernelOptions,
    ) -> Result<Self> {
        options.validate()?;
        let m = energies.len();
        if m < 3 {
            return Err(Error::InvalidParameter(format!("retained basis has {m} levels, need at least 3")));
        }
        let mut weights = Array2::<C64>::zeros((m, m));
        let mut terms = Vec::with_capacity(jumps.len());
        let mut dissipative_sum = CMatrix::zeros((m, m));
        for (label, rate, cutoff, jump) in jumps {
            let channel_options = KernelOptions { cutoff, ..*options };
            channel_options.validate()?;
            if jump.dim() != (m, m) {
                return Err(Error::DimensionMismatch { expected: m, found: jump.nrows() });
            }
            if !(rate >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative rate for {label}")));
            }
            for ((i, j), w) in weights.indexed_iter_mut() {
                *w = half_fourier_kernel(energies[i] - energies[j], rate, &channel_options);
            }
            let relaxation = &jump * &weights;
            dissipative_sum = dissipative_sum + jump.dot(&relaxation);
            terms.push(JumpTerm { label, rate, jump, relaxation });
        }
        Ok(GeneratorContext { basis_id: next_basis_id(), energies, terms, dissipative_sum, options: *options })
    }

    pub fn basis_id(&self) -> u64 {
        self.basis_id
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &Array1<f64> {
        &self.energies
    }

    pub fn terms(&self) -> &[JumpTerm] {
        &self.terms
    }

    pub fn options(&self) -> &KernelOptions {
        &self.options
    }

    /// `E_max − E_min` over the retained levels.
    pub fn energy_spread(&self) -> f64 {
        let lo = self.energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    /// `dρ/dt` for an arbitrary (not necessarily Hermitian) `ρ`.
    pub fn apply_generator(&self, rho: &CMatrix) -> Result<CMatrix> {
        let m = self.dim();
        if rho.dim() != (m, m) {
            return Err(Error::DimensionMismatch { expected: m, found: rho.nrows() });
        }
        let e = &self.energies;
        let mut out = CMatrix::from_shape_fn((m, m), |(i, j)| -I * (e[i] - e[j]) * rho[[i, j]]);
        for term in &self.terms {
            let u = &term.relaxation;
            let s = &term.jump;
            out = out + u.dot(&rho.dot(s)) + s.dot(&rho.dot(&adjoint(u)));
        }
        let a = &self.dissipative_sum;
        out = out - a.dot(rho) - rho.dot(&adjoint(a));
        Ok(out)
    }

    /// Generator as an `M² × M²` matrix acting on row-major `vec(ρ)`, using
    /// `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
    pub fn superoperator(&self) -> CMatrix {
        let m = self.dim();
        let n = m * m;
        let mut l = CMatrix::zeros((n, n));
        let e = &self.energies;
        for i in 0..m {
            for j in 0..m {
                l[[i * m + j, i * m + j]] = -I * (e[i] - e[j]);
            }
        }
        // Each product term (A ⊗ Bᵀ) has entries A[i,k]·B[l,j] at
        // row (i, j), column (k, l).
        let mut add_product = |a: &CMatrix, b: &CMatrix, sign: f64| {
            for i in 0..m {
                for k in 0..m {
                    let aik = a[[i, k]] * sign;
                    if aik == C64::default() {
                        continue;
                    }
                    for j in 0..m {
                        let row = i * m + j;
                        for ll in 0..m {
                            let b_lj = b[[ll, j]];
                            if b_lj != C64::default() {
                                l[[row, k * m + ll]] += aik * b_lj;
                            }
                        }
                    }
                }
            }
        };
        let id = CMatrix::eye(m);
        for term in &self.terms {
            let u = &term.relaxation;
            let s = &term.jump;
            add_product(u, s, 1.0);
            add_product(s, &adjoint(u), 1.0);
        }
        let a = &self.dissipative_sum;
        add_product(a, &id, -1.0);
        add_product(&id, &adjoint(a), -1.0);
        l
    }

    /// Hermitian part of the dissipator's coherent renormalisation,
    /// `(A − A†)/(2i)`. With the principal-value part disabled only the
    /// off-diagonal non-secular part survives; the level shifts vanish.
    pub fn lamb_shift_hamiltonian(&self) -> CMatrix {
        let a = &self.dissipative_sum;
        (a - &adjoint(a)).mapv(|z| z / (2.0 * I))
    }

    /// Text dump of every `U_k`: a `# label rate` line per channel, then
    /// rows of `m n re im` for non-zero elements.
    pub fn write_relaxation_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for term in &self.terms {
            writeln!(out, "# {} {:.11e}", term.label, term.rate)?;
            for ((m, n), z) in term.relaxation.indexed_iter() {
                if *z != C64::default() {
                    writeln!(out, "{m} {n} {:.11e} {:.11e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Sanity check used by tests and callers: `S_k` Hermitian to 1e−12.
pub fn max_jump_hermiticity(channels: &[NoiseChannel]) -> f64 {
    channels.iter().map(|c| hermiticity_residual(c.jump.matrix())).fold(0.0, f64::max)
}
