//! Hermitian eigendecomposition, identification of the vacuum doublet and
//! cat-state diagnostics.

use ndarray::{s, Array1, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use rayon::prelude::*;

use crate::hilbert::{
    adjoint, annihilation, coherent_state, embed, hermiticity_residual, max_abs, pauli, polarized,
    CMatrix, Operator, PauliAxis, Slot, SpaceLayout, StateVector, C64,
};
use crate::model::{build_dicke, parity, SystemParams};
use crate::{Error, Result};

/// Doublet regime guard: below this `gap/delta` ratio the two lowest levels
/// are not yet a cat doublet.
pub const REGIME_RATIO: f64 = 10.0;

/// Relative tolerance for the cutoff-doubling convergence check on δ.
pub const SPLITTING_TOLERANCE: f64 = 0.01;

/// Sorted eigenpairs of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub layout: SpaceLayout,
    pub eigenvalues: Array1<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: CMatrix,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvector(&self, k: usize) -> StateVector {
        StateVector::new(self.eigenvectors.column(k).to_owned())
    }

    /// First `m` eigenpairs.
    pub fn truncated(&self, m: usize) -> SpectrumResult {
        let m = m.min(self.len());
        SpectrumResult {
            layout: self.layout,
            eigenvalues: self.eigenvalues.slice(s![..m]).to_owned(),
            eigenvectors: self.eigenvectors.slice(s![.., ..m]).to_owned(),
        }
    }

    /// `max_k ‖H v_k − E_k v_k‖₂`.
    pub fn max_residual(&self, h: &Operator) -> f64 {
        let hv = h.matrix().dot(&self.eigenvectors);
        (0..self.len())
            .map(|k| {
                let r = &hv.column(k) - &self.eigenvectors.column(k).mapv(|z| z * self.eigenvalues[k]);
                r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `max |V†V − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = adjoint(&self.eigenvectors).dot(&self.eigenvectors);
        max_abs(&(gram - CMatrix::eye(self.len())))
    }

    /// Rephase eigenvector 1 so that `⟨v₀|σ_x¹|v₁⟩` is real and
    /// non-negative, matching the asymptotic cat-state sign convention
    /// where `(Ψ_G + Ψ_E)/√2` is the `|+⟩|+α⟩` branch.
    pub fn align_doublet_phase(&mut self) -> Result<()> {
        if self.len() < 2 {
            return Ok(());
        }
        let sx = embed(&pauli(PauliAxis::X), Slot::atom(0), self.layout.single_resonator())?;
        if self.layout.n_resonators() != 1 {
            return Err(Error::InvalidParameter("doublet alignment needs a single resonator".into()));
        }
        let g = self.eigenvector(0);
        let e = self.eigenvector(1);
        let element = sx.matrix_element(&g, &e);
        if element.norm() > 1e-12 {
            let phase = element.conj() / element.norm();
            self.eigenvectors.column_mut(1).mapv_inplace(|z| z * phase);
        }
        Ok(())
    }
}

/// Ascending eigenpairs of a Hermitian matrix, keeping the first `keep`
/// (all when `None`). Each eigenvector's largest-magnitude component is made
/// real and positive.
pub fn eigh_sorted(m: &CMatrix, keep: Option<usize>) -> Result<(Array1<f64>, CMatrix)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
    }
    let scale = max_abs(m).max(1.0);
    let residual = hermiticity_residual(m);
    if residual > 1e-10 * scale {
        return Err(Error::NotHermitian { residual });
    }
    // The LAPACK wrapper conjugates eigenvectors of row-major complex input,
    // so hand it a column-major copy.
    let mut fortran = CMatrix::zeros(m.raw_dim().f());
    fortran.assign(m);
    let (values, vectors) = fortran.eigh(UPLO::Lower).map_err(|e| Error::Solver(e.to_string()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let keep = keep.unwrap_or(n).min(n);
    let mut out_values = Array1::zeros(keep);
    let mut out_vectors = CMatrix::zeros((n, keep));
    for (slot, &k) in order.iter().take(keep).enumerate() {
        out_values[slot] = values[k];
        let column = vectors.column(k);
        // First component within round-off of the largest magnitude.
        let largest = column.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let pivot = column.iter().position(|z| z.norm() >= largest * (1.0 - 1e-9)).unwrap_or(0);
        let phase = column[pivot].conj() / column[pivot].norm();
        out_vectors.column_mut(slot).assign(&column.mapv(|z| z * phase));
    }
    Ok((out_values, out_vectors))
}

/// Diagonalise `h`, keeping `keep` eigenpairs (all when `None`).
pub fn diagonalize(h: &Operator, keep: Option<usize>) -> Result<SpectrumResult> {
    let (eigenvalues, eigenvectors) = eigh_sorted(h.matrix(), keep)?;
    Ok(SpectrumResult { layout: h.layout(), eigenvalues, eigenvectors })
}

/// The two lowest eigenstates and their cat-state diagnostics.
#[derive(Debug, Clone)]
pub struct VacuumDoublet {
    pub layout: SpaceLayout,
    pub psi_g: StateVector,
    pub psi_e: StateVector,
    pub energy_g: f64,
    pub delta: f64,
    pub gap: f64,
    pub mean_photons: f64,
    pub ansatz_fidelity_g: f64,
    pub ansatz_fidelity_e: f64,
    pub parity_g: f64,
    pub parity_e: f64,
    /// `⟨Ψ_G|σ_x¹|Ψ_E⟩` after phase alignment (real, non-negative).
    pub x_coupling: f64,
    /// `gap/delta ≥ 10`.
    pub regime_ok: bool,
}

impl VacuumDoublet {
    /// `(Ψ_G ± Ψ_E)/√2`, the polarized `|±⟩|±α⟩` states.
    pub fn polarized(&self, sign: f64) -> StateVector {
        (&self.psi_g + &self.psi_e.scaled(C64::from(sign)))
            .scaled(C64::from(std::f64::consts::FRAC_1_SQRT_2))
    }
}

/// Asymptotic cat forms `(|α⟩|+…+⟩ ± (−1)^N |−α⟩|−…−⟩)/norm` for the
/// ground (`+`) and excited (`−`) doublet states.
pub fn cat_ansatz(params: &SystemParams) -> Result<(StateVector, StateVector)> {
    let alpha = params.alpha();
    let plus_branch = branch(params, alpha, 1.0)?;
    let minus_branch = branch(params, -alpha, -1.0)?;
    let sign = if params.n_atoms % 2 == 0 { 1.0 } else { -1.0 };
    let ground = (&plus_branch + &minus_branch.scaled(C64::from(sign))).normalized()?;
    let excited = (&plus_branch - &minus_branch.scaled(C64::from(sign))).normalized()?;
    Ok((ground, excited))
}

fn branch(params: &SystemParams, alpha: C64, spin: f64) -> Result<StateVector> {
    let mut state = coherent_state(alpha, params.n_max)?.state;
    let p = polarized(spin);
    for _ in 0..params.n_atoms {
        state = state.kron(&p);
    }
    Ok(state)
}

/// Identify the vacuum doublet positionally (two lowest levels) and compute
/// its diagnostics. Warns when `gap/delta < 10`.
pub fn vacuum_doublet(spectrum: &SpectrumResult, params: &SystemParams) -> Result<VacuumDoublet> {
    if spectrum.len() < 3 {
        return Err(Error::InvalidParameter("at least 3 eigenpairs are required".into()));
    }
    let layout = params.layout()?;
    if spectrum.layout != layout {
        return Err(Error::LayoutMismatch);
    }
    let mut aligned = spectrum.truncated(3);
    aligned.align_doublet_phase()?;
    let psi_g = aligned.eigenvector(0);
    let psi_e = aligned.eigenvector(1);
    let e = &spectrum.eigenvalues;
    let delta = (e[1] - e[0]).max(0.0);
    let gap = e[2] - e[1];

    let a = annihilation(params.n_max)?;
    let number = embed(&adjoint(&a).dot(&a), Slot::photon(), layout)?;
    let mean_photons = number.expectation(&psi_g).re;
    let (ansatz_g, ansatz_e) = cat_ansatz(params)?;
    let ansatz_fidelity_g = ansatz_g.inner(&psi_g).norm_sqr().min(1.0);
    let ansatz_fidelity_e = ansatz_e.inner(&psi_e).norm_sqr().min(1.0);
    let p = parity(layout)?;
    let sx = embed(&pauli(PauliAxis::X), Slot::atom(0), layout)?;
    let x_coupling = sx.matrix_element(&psi_g, &psi_e).re;
    let regime_ok = gap > 0.0 && gap >= REGIME_RATIO * delta;
    if !regime_ok {
        log::warn!(
            "doublet not formed at omega0 = {}: gap/delta = {:.3e} < {REGIME_RATIO}",
            params.omega0,
            gap / delta
        );
    }
    Ok(VacuumDoublet {
        layout,
        parity_g: p.expectation(&psi_g).re,
        parity_e: p.expectation(&psi_e).re,
        psi_g,
        psi_e,
        energy_g: e[0],
        delta,
        gap,
        mean_photons,
        ansatz_fidelity_g,
        ansatz_fidelity_e,
        x_coupling,
        regime_ok,
    })
}

/// Build, diagonalise and extract the doublet in one call.
pub fn solve_doublet(params: &SystemParams) -> Result<(SpectrumResult, VacuumDoublet)> {
    let h = build_dicke(params)?;
    let mut spectrum = diagonalize(&h, None)?;
    spectrum.align_doublet_phase()?;
    let doublet = vacuum_doublet(&spectrum, params)?;
    Ok((spectrum, doublet))
}

/// One row of the splitting table.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingRow {
    pub omega0: f64,
    pub delta: f64,
    /// δ recomputed at the doubled cutoff.
    pub delta_check: f64,
    pub gap: f64,
    pub n_photons: f64,
    pub ansatz_fidelity_g: f64,
    pub converged: bool,
}

impl SplittingRow {
    pub const CSV_HEADER: &'static str =
        "omega0,delta,delta_check,gap,n_photons,ansatz_fidelity_G,converged";
}

/// δ, ⟨n⟩ and Δ over a grid of Ω₀, each row checked against a run at
/// `check_n_max` (normally `2·n_max`).
pub fn splitting_curve(
    base: &SystemParams,
    omega0_grid: &[f64],
    check_n_max: usize,
) -> Result<Vec<SplittingRow>> {
    omega0_grid
        .par_iter()
        .map(|&omega0| {
            let params = base.with_omega0(omega0);
            let (spectrum, doublet) = solve_doublet(&params)?;
            let check = params.with_n_max(check_n_max);
            let check_spectrum = diagonalize(&build_dicke(&check)?, Some(3))?;
            let delta_check = check_spectrum.eigenvalues[1] - check_spectrum.eigenvalues[0];
            let converged =
                (doublet.delta - delta_check).abs() <= SPLITTING_TOLERANCE * delta_check.abs().max(f64::MIN_POSITIVE);
            if !converged {
                log::warn!("splitting at omega0 = {omega0} not converged under cutoff doubling");
            }
            drop(spectrum);
            Ok(SplittingRow {
                omega0,
                delta: doublet.delta,
                delta_check,
                gap: doublet.gap,
                n_photons: doublet.mean_photons,
                ansatz_fidelity_g: doublet.ansatz_fidelity_g,
                converged,
            })
        })
        .collect()
}

/// `M_ab = ⟨ψ_a|V|ψ_b⟩` for `a, b ∈ {G, E}`.
pub fn perturbation_block(doublet: &VacuumDoublet, v: &Operator) -> Result<[[C64; 2]; 2]> {
    if v.layout() != doublet.layout {
        return Err(Error::LayoutMismatch);
    }
    let states = [&doublet.psi_g, &doublet.psi_e];
    let mut block = [[C64::default(); 2]; 2];
    for (a, left) in states.iter().enumerate() {
        for (b, right) in states.iter().enumerate() {
            block[a][b] = v.matrix_element(left, right);
        }
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::pauli;

    #[test]
    fn pauli_z_spectrum() {
        let (e, v) = eigh_sorted(&pauli(PauliAxis::Z), None).unwrap();
        assert_eq!(e.to_vec(), vec![-1.0, 1.0]);
        assert_eq!(v[[0, 0]], C64::new(1.0, 0.0));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = pauli(PauliAxis::X);
        m[[0, 1]] = C64::new(2.0, 0.0);
        assert!(matches!(eigh_sorted(&m, None), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn decoupled_doublet_reports_unit_splitting() {
        let params = SystemParams::new(0.0, 1, 10);
        let (_, d) = solve_doublet(&params).unwrap();
        assert!((d.delta - 1.0).abs() < 1e-12);
        assert!(!d.regime_ok);
    }

    #[test]
    fn residuals_and_orthonormality() {
        let params = SystemParams::new(1.5, 2, 20);
        let h = build_dicke(&params).unwrap();
        let full = diagonalize(&h, None).unwrap();
        let norm = full.eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let spectrum = full.truncated(30);
        let residual = spectrum.max_residual(&h);
        assert!(residual <= 1e-9 * norm, "residual {residual:e}, norm {norm}");
        assert!(spectrum.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn identity_block() {
        let params = SystemParams::new(1.0, 1, 20);
        let (_, d) = solve_doublet(&params).unwrap();
        let block = perturbation_block(&d, &Operator::identity(d.layout)).unwrap();
        assert!((block[0][0] - 1.0).norm() < 1e-12);
        assert!((block[1][1] - 1.0).norm() < 1e-12);
        assert!(block[0][1].norm() < 1e-12);
        let other = Operator::identity(SpaceLayout::single(10, 1).unwrap());
        assert!(perturbation_block(&d, &other).is_err());
    }
}
