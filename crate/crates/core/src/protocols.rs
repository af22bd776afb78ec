//! Experiments on the vacuum-doublet qubit: coherence times, adiabatic X,
//! Z and XX gates, projective readout and static-noise robustness.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{linalg::kron, s, Array1};
use rayon::prelude::*;

use crate::dissipation::{
    build_jump_set, jump_operator, resonator_labels, ChannelLabel, GeneratorContext, KernelOptions,
    NoiseRates,
};
use crate::dynamics::{
    evolve_scheduled, min_eigenvalue, stability_bound, ControlKind, ControlledSystem,
    DyadicPropagator, PulseShape, Schedule, ScheduleOptions, NEGATIVITY_LIMIT,
};
use crate::hilbert::{adjoint, embed, pauli, CMatrix, CVector, PauliAxis, Slot, SpaceLayout, C64, I};
use crate::model::{build_dicke, build_static_perturbation, PerturbationParams, SystemParams};
use crate::spectrum::{perturbation_block, solve_doublet, VacuumDoublet};
use crate::{Error, Result};

/// Initial coherences smaller than this are excluded from averages.
pub const ZERO_COHERENCE: f64 = 1e-12;
/// Adiabaticity guard: gates shorter than this many `1/Δ` are flagged.
pub const ADIABATIC_FACTOR: f64 = 50.0;

/// Initial states `|Ψ₀⟩ = cos θ |Ψ_E⟩ + sin θ e^{iφ} |Ψ_G⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
}

impl InitialStateGrid {
    /// `n_theta` points on `[0, π]` and `n_phi` points `k·2π/n_phi`.
    pub fn uniform(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 1 {
            return Err(Error::InvalidParameter(format!("grid {n_theta}x{n_phi} too small")));
        }
        let thetas = (0..n_theta).map(|k| PI * k as f64 / (n_theta - 1) as f64).collect();
        let phis = (0..n_phi).map(|k| 2.0 * PI * k as f64 / n_phi as f64).collect();
        Ok(InitialStateGrid { thetas, phis })
    }

    /// `(θ, φ)` pairs with non-zero initial coherence, θ-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &theta in &self.thetas {
            if (theta.cos() * theta.sin()).abs() < ZERO_COHERENCE {
                continue;
            }
            for &phi in &self.phis {
                out.push((theta, phi));
            }
        }
        out
    }

    /// Amplitudes on `(Ψ_G, Ψ_E)`.
    pub fn amplitudes(theta: f64, phi: f64) -> [C64; 2] {
        [C64::from_polar(theta.sin(), phi), C64::from(theta.cos())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceOptions {
    /// Retained eigenstates M.
    pub retained: usize,
    /// Maximum RK4 step.
    pub dt: f64,
    /// Observation window; crossings later than this are censored.
    pub t_max: f64,
    /// Samples inside the bracketing interval, a power of two.
    pub fine_samples: usize,
    pub kernel: KernelOptions,
    /// Most negative eigenvalue of ρ tolerated at the dyadic checkpoints.
    pub negativity_limit: f64,
}

impl Default for CoherenceOptions {
    fn default() -> Self {
        CoherenceOptions {
            retained: 40,
            dt: 0.01,
            t_max: 1e8,
            fine_samples: 256,
            kernel: KernelOptions::default(),
            negativity_limit: NEGATIVITY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateCoherence {
    pub theta: f64,
    pub phi: f64,
    pub time: f64,
    pub censored: bool,
}

#[derive(Debug, Clone)]
pub struct CoherenceResult {
    pub omega0: f64,
    /// `√N·Ω₀/ω_cav`.
    pub alpha: f64,
    pub delta: f64,
    pub gap: f64,
    pub regime_ok: bool,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub censored_count: usize,
    pub per_state: Vec<StateCoherence>,
    pub min_eigenvalue: f64,
    /// RK4 step actually used.
    pub step: f64,
}

impl CoherenceResult {
    pub fn censored(&self) -> bool {
        self.censored_count > 0
    }
}

/// Doublet coherence lifetime averaged over `grid`. For each initial state
/// the normalised coherence `C(t) = |ρ_EG(t)|/|ρ_EG(0)|` is followed until
/// its first `1/e` crossing, located by dyadic bracketing of the RK4
/// trajectory, refined with `fine_samples` evenly spaced samples and
/// linearly interpolated. States that never cross before `t_max` report
/// `t_max` and are flagged as censored.
pub fn coherence_time_experiment(
    params: &SystemParams,
    rates: &NoiseRates,
    grid: &InitialStateGrid,
    options: &CoherenceOptions,
) -> Result<CoherenceResult> {
    if !(options.t_max > 0.0 && options.dt > 0.0) {
        return Err(Error::InvalidParameter("t_max and dt must be > 0".into()));
    }
    if !options.fine_samples.is_power_of_two() {
        return Err(Error::InvalidParameter("fine_samples must be a power of two".into()));
    }
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::InvalidParameter("no initial state with non-zero coherence".into()));
    }
    let (spectrum, doublet) = solve_doublet(params)?;
    let m = options.retained;
    if m < 3 || m > spectrum.len() {
        return Err(Error::InvalidParameter(format!("retained levels {m} outside 3..={}", spectrum.len())));
    }
    let channels = build_jump_set(doublet.layout, rates, options.kernel.cutoff)?;
    let ctx = GeneratorContext::build(&spectrum.truncated(m), &channels, &options.kernel)?;

    let max_step = options.dt.min(stability_bound(&ctx));
    let levels = (options.t_max / max_step).log2().ceil().max(0.0) as usize;
    let step = options.t_max / (1u64 << levels) as f64;
    let propagator = DyadicPropagator::new(&ctx, step, levels)?;

    // Trajectories of the four matrix units |a⟩⟨b|, a, b ∈ {G, E}, at the
    // dyadic times 2^k·step.
    let units: Vec<CMatrix> = (0..4)
        .map(|ab| {
            let mut u = CMatrix::zeros((m, m));
            u[[ab / 2, ab % 2]] = C64::from(1.0);
            u
        })
        .collect();
    let mut dyadic: Vec<Vec<CMatrix>> = Vec::with_capacity(levels + 1);
    dyadic.push(units.iter().map(|u| propagator.apply(0, u)).collect());
    for k in 1..=levels {
        let next = dyadic[k - 1].iter().map(|u| propagator.apply(k - 1, u)).collect();
        dyadic.push(next);
    }

    let threshold = (-1.0f64).exp();
    let mut worst_eigenvalue = f64::INFINITY;
    let mut fine_cache: Vec<Option<Vec<[C64; 4]>>> = vec![None; levels + 1];
    let mut per_state = Vec::with_capacity(points.len());
    for &(theta, phi) in &points {
        let c = InitialStateGrid::amplitudes(theta, phi);
        let weights: [C64; 4] = [c[0] * c[0].conj(), c[0] * c[1].conj(), c[1] * c[0].conj(), c[1] * c[1].conj()];
        let initial = (c[1] * c[0].conj()).norm();
        let coherence = |elements: &[C64; 4]| -> f64 {
            weights.iter().zip(elements).map(|(w, e)| w * e).sum::<C64>().norm() / initial
        };
        let mut bracket = None;
        for (k, states) in dyadic.iter().enumerate() {
            let rho: CMatrix = states.iter().zip(&weights).fold(CMatrix::zeros((m, m)), |acc, (u, w)| acc + u.mapv(|z| z * w));
            let lowest = min_eigenvalue(&rho);
            worst_eigenvalue = worst_eigenvalue.min(lowest);
            if lowest < options.negativity_limit {
                return Err(Error::Invariant(format!(
                    "eigenvalue {lowest:e} at t = {:.6e} (omega0 = {}, theta = {theta:.4}, phi = {phi:.4})",
                    step * (1u64 << k) as f64,
                    params.omega0
                )));
            }
            let elements = [states[0][[1, 0]], states[1][[1, 0]], states[2][[1, 0]], states[3][[1, 0]]];
            if coherence(&elements) < threshold {
                bracket = Some(k);
                break;
            }
        }
        let Some(k) = bracket else {
            per_state.push(StateCoherence { theta, phi, time: options.t_max, censored: true });
            continue;
        };
        // Interval (t_lo, t_hi] with t_hi = 2^k·step.
        let (t_lo, start_elements, samples, sample_level) = if k == 0 {
            (0.0, [C64::from(0.0), C64::from(0.0), C64::from(1.0), C64::from(0.0)], 1usize, None)
        } else {
            let s = (options.fine_samples.trailing_zeros() as usize).min(k - 1);
            let lo = &dyadic[k - 1];
            (
                step * (1u64 << (k - 1)) as f64,
                [lo[0][[1, 0]], lo[1][[1, 0]], lo[2][[1, 0]], lo[3][[1, 0]]],
                1usize << s,
                Some(k - 1 - s),
            )
        };
        let fine: Vec<[C64; 4]> = match sample_level {
            None => vec![[dyadic[0][0][[1, 0]], dyadic[0][1][[1, 0]], dyadic[0][2][[1, 0]], dyadic[0][3][[1, 0]]]],
            Some(level) => fine_cache[k]
                .get_or_insert_with(|| {
                    let mut current: Vec<CMatrix> = dyadic[k - 1].clone();
                    (0..samples)
                        .map(|_| {
                            current = current.iter().map(|u| propagator.apply(level, u)).collect();
                            [current[0][[1, 0]], current[1][[1, 0]], current[2][[1, 0]], current[3][[1, 0]]]
                        })
                        .collect()
                })
                .clone(),
        };
        let dt_sample = match sample_level {
            None => step,
            Some(level) => step * (1u64 << level) as f64,
        };
        let mut prev_t = t_lo;
        let mut prev_c = coherence(&start_elements);
        let mut time = step * (1u64 << k) as f64;
        for (i, elements) in fine.iter().enumerate() {
            let t = t_lo + (i + 1) as f64 * dt_sample;
            let value = coherence(elements);
            if value < threshold {
                time = prev_t + (prev_c - threshold) / (prev_c - value) * (t - prev_t);
                break;
            }
            prev_t = t;
            prev_c = value;
        }
        let censored = time > options.t_max;
        per_state.push(StateCoherence { theta, phi, time: time.min(options.t_max), censored });
    }

    let times: Vec<f64> = per_state.iter().map(|s| s.time).collect();
    let censored_count = per_state.iter().filter(|s| s.censored).count();
    if censored_count > 0 {
        log::warn!(
            "{censored_count} of {} initial states did not decay before t_max = {:e} (omega0 = {})",
            per_state.len(),
            options.t_max,
            params.omega0
        );
    }
    Ok(CoherenceResult {
        omega0: params.omega0,
        alpha: params.photonic_amplitude() / params.omega_cav,
        delta: doublet.delta,
        gap: doublet.gap,
        regime_ok: doublet.regime_ok,
        mean: times.iter().sum::<f64>() / times.len() as f64,
        min: times.iter().cloned().fold(f64::INFINITY, f64::min),
        max: times.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        censored_count,
        per_state,
        min_eigenvalue: worst_eigenvalue,
        step,
    })
}

/// Located maximum of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    /// Refined abscissa.
    pub x: f64,
    /// Refined height.
    pub y: f64,
    /// `false` when the largest sample sits on the edge of the grid, in
    /// which case no refinement is made.
    pub interior: bool,
}

/// Largest sample, refined by the parabola through it and its two
/// neighbours.
pub fn locate_peak(xs: &[f64], ys: &[f64]) -> Result<Peak> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::InvalidParameter("peak search needs matching non-empty samples".into()));
    }
    let i = ys
        .iter()
        .enumerate()
        .fold(0, |best, (i, y)| if *y > ys[best] { i } else { best });
    if i == 0 || i + 1 == xs.len() {
        return Ok(Peak { index: i, x: xs[i], y: ys[i], interior: false });
    }
    let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
    let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    let (x, y) = if a < 0.0 {
        let b = d01 - a * (x0 + x1);
        let xv = (-b / (2.0 * a)).clamp(x0, x2);
        (xv, y0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1))
    } else {
        (x1, y1)
    };
    Ok(Peak { index: i, x, y, interior: true })
}

#[derive(Debug, Clone)]
pub struct PeakScan {
    pub rows: Vec<CoherenceResult>,
    /// Peak of the mean coherence time against α.
    pub peak: Peak,
}

/// Coherence times over a grid of Ω₀ and the peak against `α = √N·Ω₀`.
pub fn coherence_peak_scan(
    base: &SystemParams,
    omega0_grid: &[f64],
    rates: &NoiseRates,
    grid: &InitialStateGrid,
    options: &CoherenceOptions,
) -> Result<PeakScan> {
    if omega0_grid.is_empty() {
        return Err(Error::InvalidParameter("empty omega0 grid".into()));
    }
    let rows = omega0_grid
        .par_iter()
        .map(|&w| coherence_time_experiment(&base.with_omega0(w), rates, grid, options))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let peak = locate_peak(&xs, &ys)?;
    Ok(PeakScan { rows, peak })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    X,
    Z,
    XX,
}

impl std::fmt::Display for GateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GateKind::X => "x",
            GateKind::Z => "z",
            GateKind::XX => "xx",
        })
    }
}

/// Average-state fidelity of one gate run, with and without dissipation.
#[derive(Debug, Clone)]
pub struct GateReport {
    pub kind: GateKind,
    pub theta: f64,
    pub duration: f64,
    /// With dissipation.
    pub fidelity: f64,
    /// With every rate set to zero.
    pub fidelity_ideal: f64,
    pub per_state: Vec<f64>,
    pub per_state_ideal: Vec<f64>,
    pub adiabatic_ok: bool,
    pub regime_ok: bool,
    pub max_deficiency: f64,
    pub min_eigenvalue: f64,
    /// Ω₀ turning point (Z gate only).
    pub turn: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOptions {
    /// Retained eigenstates M.
    pub retained: usize,
    /// Single-resonator levels K kept per resonator for two-qubit gates.
    pub product_levels: usize,
    pub dimension_ceiling: usize,
    pub schedule: ScheduleOptions,
}

impl Default for GateOptions {
    fn default() -> Self {
        GateOptions {
            retained: 40,
            product_levels: 8,
            dimension_ceiling: crate::model::DEFAULT_DIMENSION_CEILING,
            schedule: ScheduleOptions::default(),
        }
    }
}

/// The six single-qubit test states `{±z, ±x, ±y}` on `(Ψ_G, Ψ_E)`.
pub fn single_qubit_states() -> Vec<[C64; 2]> {
    let h = FRAC_1_SQRT_2;
    let one = C64::from(1.0);
    let zero = C64::from(0.0);
    vec![
        [one, zero],
        [zero, one],
        [C64::from(h), C64::from(h)],
        [C64::from(h), C64::from(-h)],
        [C64::from(h), I * h],
        [C64::from(h), -I * h],
    ]
}

/// The sixteen product states built from `{Ψ_G, Ψ_E, (Ψ_G+Ψ_E)/√2,
/// (Ψ_G+iΨ_E)/√2}⊗²`, amplitudes on `|ab⟩` at index `2a + b`.
pub fn two_qubit_states() -> Vec<[C64; 4]> {
    let h = FRAC_1_SQRT_2;
    let one_qubit = [
        [C64::from(1.0), C64::from(0.0)],
        [C64::from(0.0), C64::from(1.0)],
        [C64::from(h), C64::from(h)],
        [C64::from(h), I * h],
    ];
    let mut out = Vec::with_capacity(16);
    for a in &one_qubit {
        for b in &one_qubit {
            out.push([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]);
        }
    }
    out
}

/// Doublet-space Pauli operator with `Σ_z = diag(−1, +1)` on `(Ψ_G, Ψ_E)`.
pub fn doublet_pauli(axis: PauliAxis) -> CMatrix {
    match axis {
        PauliAxis::Z => ndarray::arr2(&[[C64::from(-1.0), C64::from(0.0)], [C64::from(0.0), C64::from(1.0)]]),
        other => pauli(other),
    }
}

/// `e^{−iθΣ} = cos θ·1 − i sin θ·Σ` for an involution `Σ`.
pub fn ideal_rotation(sigma: &CMatrix, theta: f64) -> CMatrix {
    let n = sigma.nrows();
    CMatrix::eye(n).mapv(|z| z * theta.cos()) - sigma.mapv(|z| z * I * theta.sin())
}

/// `⟨ψ|ρ|ψ⟩` clamped to `[0, 1 + 1e−9]`.
pub fn state_fidelity(rho: &CMatrix, psi: &CVector) -> f64 {
    let value = psi.mapv(|z| z.conj()).dot(&rho.dot(psi)).re;
    value.clamp(0.0, 1.0 + 1e-9)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Run `system` under `schedule` for every test state (amplitudes on the
/// computational basis `basis`, columns in the working space) and score
/// against `ideal`, with and without dissipation.
fn score_gate(
    system: &ControlledSystem,
    schedule: &Schedule,
    basis: &CMatrix,
    states: &[Vec<C64>],
    ideal: &CMatrix,
    options: &ScheduleOptions,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let to_working = |coefficients: &CVector| basis.dot(coefficients);
    let initial: Vec<CMatrix> = states
        .iter()
        .map(|c| {
            let psi = to_working(&Array1::from(c.clone()));
            crate::hilbert::outer(&psi, &psi)
        })
        .collect();
    let targets: Vec<CVector> =
        states.iter().map(|c| to_working(&ideal.dot(&Array1::from(c.clone())))).collect();

    let noiseless = ControlledSystem { jumps: Vec::new(), ..system.clone() };
    let dissipative = evolve_scheduled(system, schedule, &initial, options)?;
    let unitary = evolve_scheduled(&noiseless, schedule, &initial, options)?;
    let score = |finals: &[CMatrix]| -> Vec<f64> {
        finals.iter().zip(&targets).map(|(rho, psi)| state_fidelity(rho, psi)).collect()
    };
    Ok((
        score(&dissipative.final_states),
        score(&unitary.final_states),
        dissipative.max_deficiency.max(unitary.max_deficiency),
        dissipative.min_eigenvalue.min(unitary.min_eigenvalue),
    ))
}

fn jump_matrices(layout: SpaceLayout, rates: &NoiseRates, cutoff: f64) -> Result<Vec<(ChannelLabel, f64, CMatrix)>> {
    Ok(build_jump_set(layout, rates, cutoff)?
        .into_iter()
        .map(|c| (c.label, c.rate, c.jump.into_matrix()))
        .collect())
}

fn doublet_columns(doublet: &VacuumDoublet) -> CMatrix {
    let d = doublet.psi_g.len();
    let mut basis = CMatrix::zeros((d, 2));
    basis.column_mut(0).assign(doublet.psi_g.amplitudes());
    basis.column_mut(1).assign(doublet.psi_e.amplitudes());
    basis
}

fn adiabatic_check(duration: f64, gap: f64, what: &str) -> bool {
    let ok = duration >= ADIABATIC_FACTOR / gap;
    if !ok {
        log::warn!("{what}: duration {duration} shorter than {ADIABATIC_FACTOR}/gap = {:.3}", ADIABATIC_FACTOR / gap);
    }
    ok
}

fn check_retained(m: usize, dim: usize) -> Result<()> {
    if m < 3 || m > dim {
        return Err(Error::InvalidParameter(format!("retained levels {m} outside 3..={dim}")));
    }
    Ok(())
}

/// `e^{−iθ_x Σ_x}` through the pulse `C(t)σ_x¹` with `∫C dt = θ_x`.
pub fn x_gate(
    params: &SystemParams,
    theta: f64,
    duration: f64,
    rates: &NoiseRates,
    options: &GateOptions,
) -> Result<GateReport> {
    let (_, doublet) = solve_doublet(params)?;
    let layout = doublet.layout;
    check_retained(options.retained, layout.dim())?;
    let system = ControlledSystem {
        h0: build_dicke(params)?.into_matrix(),
        h1: embed(&pauli(PauliAxis::X), Slot::atom(0), layout)?.into_matrix(),
        jumps: jump_matrices(layout, rates, options.schedule.kernel.cutoff)?,
        retained: options.retained,
    };
    let schedule = Schedule::plateau_pulse(ControlKind::XAmplitude, theta, duration)?;
    let states: Vec<Vec<C64>> = single_qubit_states().iter().map(|s| s.to_vec()).collect();
    let ideal = ideal_rotation(&doublet_pauli(PauliAxis::X), theta);
    let (per_state, per_state_ideal, max_deficiency, min_eig) =
        score_gate(&system, &schedule, &doublet_columns(&doublet), &states, &ideal, &options.schedule)?;
    Ok(GateReport {
        kind: GateKind::X,
        theta,
        duration,
        fidelity: mean(&per_state),
        fidelity_ideal: mean(&per_state_ideal),
        per_state,
        per_state_ideal,
        adiabatic_ok: adiabatic_check(duration, doublet.gap, "x gate"),
        regime_ok: doublet.regime_ok,
        max_deficiency,
        min_eigenvalue: min_eig,
        turn: None,
    })
}

/// `δ(Ω₀)` sampled on an ascending grid, interpolated with `ln δ`
/// piecewise linear so that segment integrals are closed-form.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingTable {
    omega0: Vec<f64>,
    ln_delta: Vec<f64>,
}

impl SplittingTable {
    pub fn from_points(omega0: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        if omega0.len() < 2 || omega0.len() != delta.len() {
            return Err(Error::InvalidParameter("splitting table needs at least two matching points".into()));
        }
        if omega0.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("splitting table grid must be strictly ascending".into()));
        }
        if delta.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidParameter("splitting table needs positive splittings".into()));
        }
        Ok(SplittingTable { omega0, ln_delta: delta.iter().map(|d| d.ln()).collect() })
    }

    /// `points` evenly spaced samples of δ on `[lo, hi]`.
    pub fn build(base: &SystemParams, lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points < 2 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!("bad table range [{lo}, {hi}] x {points}")));
        }
        let grid: Vec<f64> = (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect();
        let delta = grid
            .par_iter()
            .map(|&w| {
                let h = build_dicke(&base.with_omega0(w))?;
                let (e, _) = crate::spectrum::eigh_sorted(h.matrix(), Some(2))?;
                Ok(e[1] - e[0])
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::from_points(grid, delta)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.omega0[0], *self.omega0.last().expect("non-empty"))
    }

    fn check(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * (hi - lo);
        if x < lo - slack || x > hi + slack {
            return Err(Error::OutOfTable { value: x, lo, hi });
        }
        Ok(())
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.omega0.len();
        self.omega0.partition_point(|&g| g <= x).clamp(1, n - 1) - 1
    }

    pub fn delta(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        let i = self.segment(x);
        let (x0, x1) = (self.omega0[i], self.omega0[i + 1]);
        let slope = (self.ln_delta[i + 1] - self.ln_delta[i]) / (x1 - x0);
        Ok((self.ln_delta[i] + slope * (x - x0)).exp())
    }

    /// `∫_a^b δ(Ω₀) dΩ₀` of the interpolant.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Ok(-self.integral(b, a)?);
        }
        self.check(a)?;
        self.check(b)?;
        let mut total = 0.0;
        let mut x = a;
        while x < b {
            let i = self.segment(x);
            let end = if i + 1 == self.omega0.len() - 1 { b } else { self.omega0[i + 1].min(b) };
            let slope = (self.ln_delta[i + 1] - self.ln_delta[i]) / (self.omega0[i + 1] - self.omega0[i]);
            let da = self.delta(x)?;
            let db = self.delta(end)?;
            total += if (slope * (end - x)).abs() < 1e-12 { 0.5 * (da + db) * (end - x) } else { (db - da) / slope };
            if end <= x {
                break;
            }
            x = end;
        }
        Ok(total)
    }

    /// Accumulated phase `∫₀ᵀ δ dt` of the linear trajectory
    /// `start → turn → start` over `duration`.
    pub fn action(&self, start: f64, turn: f64, duration: f64) -> Result<f64> {
        if (start - turn).abs() < 1e-15 {
            return Ok(duration * self.delta(start)?);
        }
        Ok(duration * self.integral(turn.min(start), turn.max(start))? / (start - turn).abs())
    }
}

/// Which Z-gate parameter is solved for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZTiming {
    /// Fix the turning point, solve for the duration.
    CalibrateDuration { turn: f64 },
    /// Fix the duration, solve for the turning point by bisection.
    CalibrateTurn { duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZCalibration {
    pub start: f64,
    pub turn: f64,
    pub duration: f64,
    /// `∫₀ᵀ δ dt`, equal to `2θ_z`.
    pub action: f64,
}

/// Solve `∫₀ᵀ δ(Ω₀(t)) dt = 2θ_z` for the linear back-and-forth
/// trajectory. The factor 2 makes the relative phase between Ψ_E and Ψ_G
/// match `e^{−iθ_z Σ_z}`.
pub fn calibrate_z(table: &SplittingTable, start: f64, theta_z: f64, timing: ZTiming) -> Result<ZCalibration> {
    if theta_z < 0.0 {
        return Err(Error::InvalidParameter("theta_z must be >= 0".into()));
    }
    let target = 2.0 * theta_z;
    match timing {
        ZTiming::CalibrateDuration { turn } => {
            let per_time = table.action(start, turn, 1.0)?;
            let duration = target / per_time;
            Ok(ZCalibration { start, turn, duration, action: table.action(start, turn, duration)? })
        }
        ZTiming::CalibrateTurn { duration } => {
            if !(duration > 0.0) {
                return Err(Error::InvalidParameter("duration must be > 0".into()));
            }
            let (lo_bound, _) = table.range();
            let f = |turn: f64| -> Result<f64> { Ok(table.action(start, turn, duration)? - target) };
            // δ falls with Ω₀, so the action grows as the turn moves down.
            if f(start)? > 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "duration {duration} already exceeds the target phase at constant omega0 = {start}"
                )));
            }
            if f(lo_bound)? < 0.0 {
                return Err(Error::OutOfTable { value: lo_bound, lo: lo_bound, hi: start });
            }
            let (mut lo, mut hi) = (lo_bound, start);
            while hi - lo > 1e-10 * hi.abs().max(1e-300) {
                let mid = 0.5 * (lo + hi);
                if f(mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let turn = 0.5 * (lo + hi);
            Ok(ZCalibration { start, turn, duration, action: table.action(start, turn, duration)? })
        }
    }
}

/// `e^{−iθ_z Σ_z}` by sweeping Ω₀ linearly `start → turn → start`, where
/// `start = params.omega0`.
pub fn z_gate(
    params: &SystemParams,
    theta_z: f64,
    timing: ZTiming,
    table: &SplittingTable,
    rates: &NoiseRates,
    options: &GateOptions,
) -> Result<GateReport> {
    let start = params.omega0;
    let calibration = calibrate_z(table, start, theta_z, timing)?;
    let (lo, hi) = table.range();
    for v in [calibration.turn, start] {
        if v < lo - 1e-12 || v > hi + 1e-12 {
            return Err(Error::OutOfTable { value: v, lo, hi });
        }
    }
    let (_, doublet) = solve_doublet(params)?;
    let layout = doublet.layout;
    check_retained(options.retained, layout.dim())?;
    let free = build_dicke(&params.with_omega0(0.0))?.into_matrix();
    let unit = build_dicke(&params.with_omega0(1.0))?.into_matrix() - &free;
    let system = ControlledSystem {
        h0: free,
        h1: unit,
        jumps: jump_matrices(layout, rates, options.schedule.kernel.cutoff)?,
        retained: options.retained,
    };
    let schedule = Schedule {
        duration: calibration.duration,
        kind: ControlKind::Omega0,
        shape: PulseShape::LinearBackAndForth { start, turn: calibration.turn },
    };
    let states: Vec<Vec<C64>> = single_qubit_states().iter().map(|s| s.to_vec()).collect();
    let ideal = ideal_rotation(&doublet_pauli(PauliAxis::Z), theta_z);
    let (per_state, per_state_ideal, max_deficiency, min_eig) =
        score_gate(&system, &schedule, &doublet_columns(&doublet), &states, &ideal, &options.schedule)?;
    let adiabatic_ok = calibration.duration == 0.0 || adiabatic_check(calibration.duration, doublet.gap, "z gate");
    Ok(GateReport {
        kind: GateKind::Z,
        theta: theta_z,
        duration: calibration.duration,
        fidelity: mean(&per_state),
        fidelity_ideal: mean(&per_state_ideal),
        per_state,
        per_state_ideal,
        adiabatic_ok,
        regime_ok: doublet.regime_ok,
        max_deficiency,
        min_eigenvalue: min_eig,
        turn: Some(calibration.turn),
    })
}

/// Two identical resonators in the product of their lowest `K`
/// single-resonator eigenstates, coupled by `C¹²(t)σ_x¹σ_x²`.
pub fn two_resonator_system(
    params: &SystemParams,
    rates: &NoiseRates,
    options: &GateOptions,
) -> Result<(ControlledSystem, VacuumDoublet)> {
    let k = options.product_levels;
    // Validates the composite layout itself.
    SpaceLayout::new(params.n_max, params.n_atoms, 2)?;
    if k * k > options.dimension_ceiling {
        return Err(Error::DimensionCeiling { dim: k * k, ceiling: options.dimension_ceiling });
    }
    let (spectrum, doublet) = solve_doublet(params)?;
    if k < 2 || k > spectrum.len() {
        return Err(Error::InvalidParameter(format!("product levels {k} outside 2..={}", spectrum.len())));
    }
    check_retained(options.retained, k * k)?;
    let layout = doublet.layout;
    let v = spectrum.eigenvectors.slice(s![.., ..k]).to_owned();
    let vd = adjoint(&v);
    let project = |op: &CMatrix| vd.dot(&op.dot(&v));
    let id = CMatrix::eye(k);
    let energies = spectrum.eigenvalues.slice(s![..k]).to_owned();
    let mut h0 = CMatrix::zeros((k * k, k * k));
    for i in 0..k {
        for j in 0..k {
            h0[[i * k + j, i * k + j]] = C64::from(energies[i] + energies[j]);
        }
    }
    let x_k = project(embed(&pauli(PauliAxis::X), Slot::atom(0), layout)?.matrix());
    let h1 = kron(&x_k, &x_k);

    let mut jumps = Vec::new();
    for r in 0..2 {
        for label in resonator_labels(0, params.n_atoms) {
            let rate = rates.rate(label);
            if rate > 0.0 {
                let s_k = project(jump_operator(label, layout)?.matrix());
                let op = if r == 0 { kron(&s_k, &id) } else { kron(&id, &s_k) };
                jumps.push((label.on_resonator(r), rate, op));
            }
        }
    }
    if rates.gamma_x12 > 0.0 {
        jumps.push((ChannelLabel::X12, rates.gamma_x12, h1.clone()));
    }
    Ok((ControlledSystem { h0, h1, jumps, retained: options.retained }, doublet))
}

/// `e^{−iθ Σ_x⊗Σ_x}` through `C¹²(t)σ_x¹σ_x²` with the plateau pulse.
pub fn xx_gate(
    params: &SystemParams,
    theta: f64,
    duration: f64,
    rates: &NoiseRates,
    options: &GateOptions,
) -> Result<GateReport> {
    let (system, doublet) = two_resonator_system(params, rates, options)?;
    let k = options.product_levels;
    let mut basis = CMatrix::zeros((k * k, 4));
    for a in 0..2 {
        for b in 0..2 {
            basis[[a * k + b, 2 * a + b]] = C64::from(1.0);
        }
    }
    let schedule = Schedule::plateau_pulse(ControlKind::XXAmplitude, theta, duration)?;
    let states: Vec<Vec<C64>> = two_qubit_states().iter().map(|s| s.to_vec()).collect();
    let sx = doublet_pauli(PauliAxis::X);
    let ideal = ideal_rotation(&kron(&sx, &sx), theta);
    let (per_state, per_state_ideal, max_deficiency, min_eig) =
        score_gate(&system, &schedule, &basis, &states, &ideal, &options.schedule)?;
    Ok(GateReport {
        kind: GateKind::XX,
        theta,
        duration,
        fidelity: mean(&per_state),
        fidelity_ideal: mean(&per_state_ideal),
        per_state,
        per_state_ideal,
        adiabatic_ok: adiabatic_check(duration, doublet.gap, "xx gate"),
        regime_ok: doublet.regime_ok,
        max_deficiency,
        min_eigenvalue: min_eig,
        turn: None,
    })
}

/// Outcome probabilities of projecting on `(Ψ_G ± Ψ_E)/√2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    pub p_plus: f64,
    pub p_minus: f64,
    /// Weight outside the doublet.
    pub p_leak: f64,
}

/// Project a single-resonator density matrix onto the polarized states
/// `|±⟩|±α⟩ = (Ψ_G ± Ψ_E)/√2`.
pub fn readout_probabilities(rho: &CMatrix, doublet: &VacuumDoublet) -> Result<Readout> {
    if doublet.layout.n_resonators() != 1 {
        return Err(Error::InvalidParameter("readout needs a single-resonator state".into()));
    }
    let d = doublet.layout.dim();
    if rho.dim() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: rho.nrows() });
    }
    let p = |sign: f64| state_fidelity(rho, doublet.polarized(sign).amplitudes());
    let p_plus = p(1.0);
    let p_minus = p(-1.0);
    let trace = rho.diag().sum().re;
    Ok(Readout { p_plus, p_minus, p_leak: (trace - p_plus - p_minus).max(0.0) })
}

/// Doublet response to static perturbations at one Ω₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessRow {
    pub omega0: f64,
    /// `|α|² = NΩ₀²/ω_cav²`.
    pub alpha_sq: f64,
    /// `exp(−2|α|²)`.
    pub overlap: f64,
    /// Effective qubit coupling per unit amplitude: half the splitting the
    /// perturbation opens inside the doublet,
    /// `√(|M_GE|² + ((M_GG − M_EE)/2)²)`.
    pub coupling_x: f64,
    pub coupling_y: f64,
    pub coupling_z: f64,
    pub coupling_a: f64,
}

impl RobustnessRow {
    pub const CSV_HEADER: &'static str = "omega0,alpha_sq,overlap,coupling_x,coupling_y,coupling_z,coupling_a";
}

fn qubit_coupling(block: &[[C64; 2]; 2]) -> f64 {
    let off = block[0][1].norm();
    let diag = 0.5 * (block[0][0] - block[1][1]).norm();
    (off * off + diag * diag).sqrt()
}

/// Projected strength of uniform static `σ_x`, `σ_y`, `σ_z` and field
/// perturbations (unit amplitude on atom 1 / the resonator) over `grid`.
pub fn robustness_scan(base: &SystemParams, grid: &[f64]) -> Result<Vec<RobustnessRow>> {
    grid.par_iter()
        .map(|&w| {
            let params = base.with_omega0(w);
            let (_, doublet) = solve_doublet(&params)?;
            let layout = doublet.layout;
            let n = params.n_atoms;
            let single = |f: &dyn Fn(&mut PerturbationParams)| -> Result<f64> {
                let mut p = PerturbationParams::zeros(n);
                f(&mut p);
                let v = build_static_perturbation(&p, layout)?;
                Ok(qubit_coupling(&perturbation_block(&doublet, &v)?))
            };
            let alpha_sq = params.photonic_amplitude().powi(2) / params.omega_cav.powi(2);
            Ok(RobustnessRow {
                omega0: w,
                alpha_sq,
                overlap: (-2.0 * alpha_sq).exp(),
                coupling_x: single(&|p| p.h_x[0] = 1.0)?,
                coupling_y: single(&|p| p.h_y[0] = 1.0)?,
                coupling_z: single(&|p| p.h_z[0] = 1.0)?,
                coupling_a: single(&|p| p.h_a = C64::from(1.0))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_excludes_zero_coherence() {
        let g = InitialStateGrid::uniform(8, 8).unwrap();
        assert_eq!(g.thetas.len(), 8);
        assert!((g.thetas[7] - PI).abs() < 1e-15);
        assert!((g.phis[1] - PI / 4.0).abs() < 1e-15);
        // θ = 0 and θ = π carry no coherence.
        assert_eq!(g.points().len(), 6 * 8);
        let g = InitialStateGrid { thetas: vec![0.0, PI / 2.0, PI / 4.0], phis: vec![0.0] };
        assert_eq!(g.points(), vec![(PI / 4.0, 0.0)]);
    }

    #[test]
    fn peak_refinement() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| -(x - 1.3f64).powi(2)).collect();
        let p = locate_peak(&xs, &ys).unwrap();
        assert!(p.interior && (p.x - 1.3).abs() < 1e-12 && p.y.abs() < 1e-12);
        let p = locate_peak(&xs, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(!p.interior && p.index == 3);
        // A secondary local maximum is ignored.
        let p = locate_peak(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 2.0, 1.0, 5.0, 0.0]).unwrap();
        assert_eq!(p.index, 3);
        assert!(p.interior && p.y >= 5.0);
    }

    #[test]
    fn ideal_rotations() {
        let x = ideal_rotation(&doublet_pauli(PauliAxis::X), PI / 2.0);
        assert!((x[[0, 1]] + I).norm() < 1e-15 && x[[0, 0]].norm() < 1e-15);
        let z = ideal_rotation(&doublet_pauli(PauliAxis::Z), 0.3);
        assert!((z[[0, 0]] - C64::from_polar(1.0, 0.3)).norm() < 1e-15);
        assert!((z[[1, 1]] - C64::from_polar(1.0, -0.3)).norm() < 1e-15);
        for s in two_qubit_states() {
            let n: f64 = s.iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-15);
        }
        assert_eq!(two_qubit_states().len(), 16);
        assert_eq!(single_qubit_states().len(), 6);
    }

    #[test]
    fn splitting_table_integrals() {
        // δ = e^{−x}: ln δ exactly linear, so the interpolant is exact.
        let xs: Vec<f64> = (0..5).map(|k| 1.0 + 0.25 * k as f64).collect();
        let table = SplittingTable::from_points(xs.clone(), xs.iter().map(|x| (-x).exp()).collect()).unwrap();
        let exact = (-1.1f64).exp() - (-1.9f64).exp();
        assert!((table.integral(1.1, 1.9).unwrap() - exact).abs() < 1e-14);
        assert!(matches!(table.delta(2.5), Err(Error::OutOfTable { .. })));
        let cal = calibrate_z(&table, 2.0, 0.5, ZTiming::CalibrateDuration { turn: 1.2 }).unwrap();
        assert!((cal.action - 1.0).abs() < 1e-12);
        let cal2 = calibrate_z(&table, 2.0, 0.5, ZTiming::CalibrateTurn { duration: cal.duration }).unwrap();
        assert!((cal2.turn - 1.2).abs() < 1e-9);
        let flat = calibrate_z(&table, 2.0, 0.0, ZTiming::CalibrateDuration { turn: 2.0 }).unwrap();
        assert_eq!(flat.duration, 0.0);
    }

    #[test]
    fn readout_of_doublet_states() {
        let params = SystemParams::new(2.0, 1, 30);
        let (_, d) = solve_doublet(&params).unwrap();
        let r = readout_probabilities(&d.psi_g.projector(), &d).unwrap();
        assert!((r.p_plus - 0.5).abs() < 1e-12 && (r.p_minus - 0.5).abs() < 1e-12 && r.p_leak < 1e-12);
        let r = readout_probabilities(&d.polarized(1.0).projector(), &d).unwrap();
        assert!((r.p_plus - 1.0).abs() < 1e-9 && r.p_minus < 1e-9);
    }
}
