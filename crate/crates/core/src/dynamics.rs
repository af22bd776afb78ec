//! Fixed-step RK4 propagation of the density matrix, for frozen generators
//! and for time-dependent controls with adiabatic re-diagonalisation.

use std::io::Write;

use ndarray::{Array1, ShapeBuilder};
use ndarray_linalg::{EigValsh, UPLO};

use crate::dissipation::{ChannelLabel, GeneratorContext, KernelOptions};
use crate::hilbert::{adjoint, hermiticity_residual, max_abs, CMatrix, CVector, C64};
use crate::spectrum::eigh_sorted;
use crate::{Error, Result};

/// Largest tolerated per-step Hermiticity or trace correction.
pub const STEP_CORRECTION_LIMIT: f64 = 1e-9;
/// Most negative tolerated eigenvalue of ρ.
pub const NEGATIVITY_LIMIT: f64 = -1e-7;
/// Largest tolerated weight lost when changing retained basis.
pub const DEFICIENCY_LIMIT: f64 = 1e-6;
/// `dt·(E_max − E_min)` must not exceed this.
pub const STABILITY_FACTOR: f64 = 0.1;

/// A density matrix in a retained eigenbasis identified by `basis`.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub basis: u64,
    pub matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(basis: u64, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        Ok(DensityMatrix { basis, matrix })
    }

    /// `|ψ⟩⟨ψ|` for normalised amplitudes.
    pub fn pure(basis: u64, amplitudes: &CVector) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let psi = amplitudes.mapv(|z| z / norm);
        Self::new(basis, crate::hilbert::outer(&psi, &psi))
    }

    /// Ground state of a retained basis of dimension `m`.
    pub fn basis_state(basis: u64, m: usize, k: usize) -> Result<Self> {
        let mut psi = CVector::zeros(m);
        psi[k] = C64::from(1.0);
        Self::pure(basis, &psi)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// Check Hermiticity (1e−10), trace (1e−9) and positivity (−1e−7).
    pub fn validate(&self) -> Result<()> {
        let h = hermiticity_residual(&self.matrix);
        if h > 1e-10 {
            return Err(Error::Invariant(format!("density matrix Hermiticity residual {h:e}")));
        }
        let t = (self.trace() - 1.0).norm();
        if t > 1e-9 {
            return Err(Error::Invariant(format!("density matrix trace error {t:e}")));
        }
        let m = self.min_eigenvalue();
        if m < NEGATIVITY_LIMIT {
            return Err(Error::Invariant(format!("density matrix eigenvalue {m:e}")));
        }
        Ok(())
    }
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let mut f = CMatrix::zeros(m.raw_dim().f());
    f.assign(&((m + &adjoint(m)).mapv(|z| z * 0.5)));
    match f.eigvalsh(UPLO::Lower) {
        Ok(values) => values.iter().cloned().fold(f64::INFINITY, f64::min),
        Err(_) => f64::NAN,
    }
}

/// `tr(ρ·op)`.
pub fn expectation(rho: &DensityMatrix, op: &CMatrix) -> Result<C64> {
    if op.dim() != rho.matrix.dim() {
        return Err(Error::BasisMismatch);
    }
    Ok((0..rho.dim()).map(|i| rho.matrix.row(i).dot(&op.column(i))).sum())
}

/// `tr(ρ·op)` for Hermitian `op`; the imaginary residue must stay below
/// 1e−10.
pub fn expectation_real(rho: &DensityMatrix, op: &CMatrix) -> Result<f64> {
    let value = expectation(rho, op)?;
    if hermiticity_residual(op) <= 1e-12 && value.im.abs() > 1e-10 {
        return Err(Error::Invariant(format!("expectation of Hermitian operator has imaginary part {:e}", value.im)));
    }
    Ok(value.re)
}

/// `0.1 / (E_max − E_min)`.
pub fn stability_bound(ctx: &GeneratorContext) -> f64 {
    let spread = ctx.energy_spread();
    if spread > 0.0 {
        STABILITY_FACTOR / spread
    } else {
        f64::INFINITY
    }
}

fn rk4_step(ctx: &GeneratorContext, rho: &CMatrix, h: f64) -> Result<CMatrix> {
    let k1 = ctx.apply_generator(rho)?;
    let k2 = ctx.apply_generator(&(rho + &k1.mapv(|z| z * (h / 2.0))))?;
    let k3 = ctx.apply_generator(&(rho + &k2.mapv(|z| z * (h / 2.0))))?;
    let k4 = ctx.apply_generator(&(rho + &k3.mapv(|z| z * h)))?;
    Ok(rho + &((k1 + (k2 + k3).mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0))))
}

/// Re-Hermitise and rescale to `target` trace. Returns the Hermiticity and
/// trace corrections applied.
fn correct(rho: &mut CMatrix, target: f64) -> (f64, f64) {
    let herm = hermiticity_residual(rho) / 2.0;
    let symmetric = (&*rho + &adjoint(rho)).mapv(|z| z * 0.5);
    *rho = symmetric;
    let tr = rho.diag().sum().re;
    let trace_fix = (tr - target).abs();
    if tr != 0.0 && target != 0.0 {
        rho.mapv_inplace(|z| z * (target / tr));
    }
    (herm, trace_fix)
}

/// Snapshots of an evolution plus correction bookkeeping.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub max_correction: f64,
    pub cumulative_correction: f64,
    pub min_eigenvalue: f64,
}

impl Trajectory {
    /// CSV with columns `t`, the real parts of the requested observables,
    /// `coherence` (|ρ₁₀|), `trace_error` and `min_eigenvalue`.
    pub fn write_csv<W: Write>(&self, mut out: W, observables: &[(&str, &CMatrix)]) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(observables.iter().map(|(n, _)| n.to_string()));
        header.extend(["coherence", "trace_error", "min_eigenvalue"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for (t, rho) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.11e}")];
            for (_, op) in observables {
                let v = expectation(rho, op).map(|z| z.re).unwrap_or(f64::NAN);
                row.push(format!("{v:.11e}"));
            }
            let coherence = if rho.dim() > 1 { rho.matrix[[1, 0]].norm() } else { 0.0 };
            row.push(format!("{coherence:.11e}"));
            row.push(format!("{:.11e}", (rho.trace() - 1.0).norm()));
            row.push(format!("{:.11e}", rho.min_eigenvalue()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Classical RK4 with fixed step `dt`, recording `ρ` at every time of
/// `t_grid` (ascending, starting at or after 0). Each step is followed by
/// re-Hermitisation and trace renormalisation; corrections above 1e−9 or
/// eigenvalues below −1e−7 at a snapshot abort the run.
pub fn evolve(rho0: &DensityMatrix, ctx: &GeneratorContext, t_grid: &[f64], dt: f64) -> Result<Trajectory> {
    if rho0.basis != ctx.basis_id() {
        return Err(Error::BasisMismatch);
    }
    if rho0.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch { expected: ctx.dim(), found: rho0.dim() });
    }
    let bound = stability_bound(ctx);
    if !(dt > 0.0) || dt > bound {
        return Err(Error::StepSize { dt, bound });
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidParameter("time grid must be ascending and non-negative".into()));
    }
    let mut rho = rho0.matrix.clone();
    let mut t = 0.0;
    let mut trajectory = Trajectory {
        times: Vec::with_capacity(t_grid.len()),
        states: Vec::with_capacity(t_grid.len()),
        max_correction: 0.0,
        cumulative_correction: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for &target in t_grid {
        let span = target - t;
        let steps = if span > 0.0 { (span / dt - 1e-9).ceil().max(1.0) as usize } else { 0 };
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            rho = rk4_step(ctx, &rho, h)?;
            let (herm, trace_fix) = correct(&mut rho, 1.0);
            let worst = herm.max(trace_fix);
            trajectory.max_correction = trajectory.max_correction.max(worst);
            trajectory.cumulative_correction += herm + trace_fix;
            if worst > STEP_CORRECTION_LIMIT {
                return Err(Error::Invariant(format!(
                    "step correction {worst:e} at t = {:.6e} exceeds {STEP_CORRECTION_LIMIT:e}",
                    t + h
                )));
            }
        }
        t = target;
        let state = DensityMatrix { basis: ctx.basis_id(), matrix: rho.clone() };
        let lowest = state.min_eigenvalue();
        trajectory.min_eigenvalue = trajectory.min_eigenvalue.min(lowest);
        if lowest < NEGATIVITY_LIMIT {
            return Err(Error::Invariant(format!("eigenvalue {lowest:e} at t = {t:.6e}")));
        }
        trajectory.times.push(t);
        trajectory.states.push(state);
    }
    log::debug!(
        "evolve: {} snapshots, max correction {:e}, cumulative {:e}",
        trajectory.times.len(),
        trajectory.max_correction,
        trajectory.cumulative_correction
    );
    Ok(trajectory)
}

/// One RK4 step as a matrix: `1 + hL + (hL)²/2 + (hL)³/6 + (hL)⁴/24`.
pub fn rk4_step_matrix(l: &CMatrix, h: f64) -> CMatrix {
    let hl = l.mapv(|z| z * h);
    let n = l.nrows();
    // Horner form: 1 + hL(1 + hL/2(1 + hL/3(1 + hL/4))).
    let id = CMatrix::eye(n);
    let mut acc = &id + &hl.mapv(|z| z / 4.0);
    acc = &id + &hl.dot(&acc).mapv(|z| z / 3.0);
    acc = &id + &hl.dot(&acc).mapv(|z| z / 2.0);
    &id + &hl.dot(&acc)
}

/// `p^n` by binary exponentiation.
pub fn matrix_power(p: &CMatrix, mut n: usize) -> CMatrix {
    let mut result = CMatrix::eye(p.nrows());
    let mut base = p.clone();
    let mut first = true;
    while n > 0 {
        if n & 1 == 1 {
            result = if first { base.clone() } else { result.dot(&base) };
            first = false;
        }
        n >>= 1;
        if n > 0 {
            base = base.dot(&base);
        }
    }
    result
}

/// Powers `P^(2^k)`, `k = 0..levels`, of the RK4 step matrix `P`. Applying
/// `P^(2^k)` is exactly `2^k` fixed RK4 steps of size `step`.
#[derive(Debug, Clone)]
pub struct DyadicPropagator {
    step: f64,
    powers: Vec<CMatrix>,
}

impl DyadicPropagator {
    pub fn new(ctx: &GeneratorContext, step: f64, levels: usize) -> Result<Self> {
        let bound = stability_bound(ctx);
        if !(step > 0.0) || step > bound {
            return Err(Error::StepSize { dt: step, bound });
        }
        let mut powers = Vec::with_capacity(levels + 1);
        powers.push(rk4_step_matrix(&ctx.superoperator(), step));
        for k in 0..levels {
            let next = powers[k].dot(&powers[k]);
            powers.push(next);
        }
        Ok(DyadicPropagator { step, powers })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Largest `k` available.
    pub fn levels(&self) -> usize {
        self.powers.len() - 1
    }

    /// `P^(2^k)`.
    pub fn power(&self, k: usize) -> &CMatrix {
        &self.powers[k]
    }

    /// `2^k` steps applied to `ρ`.
    pub fn apply(&self, k: usize, rho: &CMatrix) -> CMatrix {
        apply_superoperator(&self.powers[k], rho)
    }
}

/// Apply an `M² × M²` superoperator to `ρ` in row-major vectorisation.
pub fn apply_superoperator(p: &CMatrix, rho: &CMatrix) -> CMatrix {
    let m = rho.nrows();
    let flat: Array1<C64> = rho.iter().cloned().collect();
    p.dot(&flat).into_shape_with_order((m, m)).expect("square shape")
}

/// Which control a schedule drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    /// `C(t)σ_x¹`
    XAmplitude,
    /// `Ω₀(t)`
    Omega0,
    /// `C¹²(t)σ_x¹σ_x²`
    XXAmplitude,
}

/// Control waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseShape {
    /// `sin²` ramp over T/4, plateau over T/2, `sin²` ramp down over T/4.
    SineSquaredPlateau { amplitude: f64 },
    /// Linear `start → turn` over T/2, then linear back to `start`.
    LinearBackAndForth { start: f64, turn: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub duration: f64,
    pub kind: ControlKind,
    pub shape: PulseShape,
}

impl Schedule {
    /// Plateau pulse with `∫₀ᵀ C(t) dt = theta`, i.e. amplitude `θ/(0.75T)`.
    pub fn plateau_pulse(kind: ControlKind, theta: f64, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidParameter(format!("pulse duration must be > 0, got {duration}")));
        }
        Ok(Schedule { duration, kind, shape: PulseShape::SineSquaredPlateau { amplitude: theta / (0.75 * duration) } })
    }

    pub fn value(&self, t: f64) -> f64 {
        let total = self.duration;
        match self.shape {
            PulseShape::SineSquaredPlateau { amplitude } => {
                let q = total / 4.0;
                let envelope = if t <= 0.0 || t >= total {
                    0.0
                } else if t < q {
                    (std::f64::consts::FRAC_PI_2 * t / q).sin().powi(2)
                } else if t > total - q {
                    (std::f64::consts::FRAC_PI_2 * (total - t) / q).sin().powi(2)
                } else {
                    1.0
                };
                amplitude * envelope
            }
            PulseShape::LinearBackAndForth { start, turn } => {
                let half = total / 2.0;
                if total <= 0.0 {
                    start
                } else if t <= half {
                    start + (turn - start) * (t.max(0.0) / half)
                } else {
                    turn + (start - turn) * ((t.min(total) - half) / half)
                }
            }
            PulseShape::Constant { value } => value,
        }
    }

    /// Closed-form `∫₀ᵀ value dt`.
    pub fn integral(&self) -> f64 {
        match self.shape {
            PulseShape::SineSquaredPlateau { amplitude } => 0.75 * amplitude * self.duration,
            PulseShape::LinearBackAndForth { start, turn } => 0.5 * (start + turn) * self.duration,
            PulseShape::Constant { value } => value * self.duration,
        }
    }
}

/// A Hamiltonian `H(u) = h0 + u·h1` on some working space with fixed jump
/// operators there, evolved in its lowest `retained` eigenstates.
#[derive(Debug, Clone)]
pub struct ControlledSystem {
    pub h0: CMatrix,
    pub h1: CMatrix,
    pub jumps: Vec<(ChannelLabel, f64, CMatrix)>,
    pub retained: usize,
}

impl ControlledSystem {
    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn hamiltonian(&self, u: f64) -> CMatrix {
        &self.h0 + &self.h1.mapv(|z| z * u)
    }

    /// Retained eigenpairs of `H(u)` and the generator built on them.
    pub fn frame(&self, u: f64, kernel: &KernelOptions) -> Result<(CMatrix, GeneratorContext)> {
        let (energies, vectors) = eigh_sorted(&self.hamiltonian(u), Some(self.retained))?;
        let vd = adjoint(&vectors);
        let projected = self
            .jumps
            .iter()
            .filter(|(_, rate, _)| *rate > 0.0)
            .map(|(label, rate, s)| (*label, *rate, vd.dot(&s.dot(&vectors))))
            .collect();
        let ctx = GeneratorContext::from_parts(energies, projected, kernel)?;
        Ok((vectors, ctx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleOptions {
    /// Maximum RK4 step.
    pub dt: f64,
    /// Generator rebuild interval.
    pub recompute_interval: f64,
    pub kernel: KernelOptions,
    /// Most negative eigenvalue of ρ tolerated at interval ends.
    pub negativity_limit: f64,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            dt: 0.01,
            recompute_interval: 1.0,
            kernel: KernelOptions::default(),
            negativity_limit: NEGATIVITY_LIMIT,
        }
    }
}

/// Outcome of [`evolve_scheduled`].
#[derive(Debug, Clone)]
pub struct ScheduledRun {
    /// Final states in the working space, in input order.
    pub final_states: Vec<CMatrix>,
    pub intervals: usize,
    /// Worst weight lost to a basis change.
    pub max_deficiency: f64,
    pub min_eigenvalue: f64,
    pub max_correction: f64,
}

/// Adiabatic Redfield evolution under `schedule`: at every recompute
/// boundary the Hamiltonian is rebuilt at the interval's midpoint control
/// value, re-diagonalised, the relaxation operators rebuilt, and `ρ`
/// transferred into the new retained basis. Inside an interval the frozen
/// generator is integrated with fixed RK4 steps of at most `dt`, shortened
/// where the interval's stability bound is tighter.
///
/// `initial` holds density matrices on the working space of `system`.
pub fn evolve_scheduled(
    system: &ControlledSystem,
    schedule: &Schedule,
    initial: &[CMatrix],
    options: &ScheduleOptions,
) -> Result<ScheduledRun> {
    let d = system.dim();
    if initial.iter().any(|r| r.dim() != (d, d)) {
        return Err(Error::DimensionMismatch { expected: d, found: initial.iter().map(|r| r.nrows()).find(|n| *n != d).unwrap_or(0) });
    }
    if !(options.recompute_interval >= options.dt && options.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "recompute interval {} must be >= dt {}",
            options.recompute_interval, options.dt
        )));
    }
    let mut run = ScheduledRun {
        final_states: initial.to_vec(),
        intervals: 0,
        max_deficiency: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_correction: 0.0,
    };
    if schedule.duration <= 0.0 {
        return Ok(run);
    }
    let n_intervals = (schedule.duration / options.recompute_interval - 1e-9).ceil().max(1.0) as usize;
    let tau = schedule.duration / n_intervals as f64;

    let mut previous: Option<CMatrix> = None;
    let mut states: Vec<CMatrix> = Vec::new();
    for i in 0..n_intervals {
        let u = schedule.value((i as f64 + 0.5) * tau);
        let (vectors, ctx) = system.frame(u, &options.kernel)?;
        let max_step = options.dt.min(stability_bound(&ctx));
        let steps = (tau / max_step - 1e-9).ceil().max(1.0) as usize;
        let h = tau / steps as f64;
        let vd = adjoint(&vectors);
        let transfer = match &previous {
            None => None,
            Some(prev) => Some(vd.dot(prev)),
        };
        if i == 0 {
            states = initial.iter().map(|r| vd.dot(&r.dot(&vectors))).collect();
            for (r, s) in initial.iter().zip(&states) {
                let lost = r.diag().sum().re - s.diag().sum().re;
                run.max_deficiency = run.max_deficiency.max(lost);
            }
        } else if let Some(o) = &transfer {
            let od = adjoint(o);
            for s in states.iter_mut() {
                let before = s.diag().sum().re;
                *s = o.dot(&s.dot(&od));
                run.max_deficiency = run.max_deficiency.max(before - s.diag().sum().re);
            }
        }
        if run.max_deficiency > DEFICIENCY_LIMIT {
            return Err(Error::Invariant(format!(
                "basis change at interval {i} (t = {:.6e}, control {u:.6e}) lost weight {:.3e}",
                i as f64 * tau,
                run.max_deficiency
            )));
        }
        let propagator = matrix_power(&rk4_step_matrix(&ctx.superoperator(), h), steps);
        for s in states.iter_mut() {
            let before = s.diag().sum().re;
            let mut next = apply_superoperator(&propagator, s);
            let (herm, trace_fix) = correct(&mut next, before);
            let worst = herm.max(trace_fix);
            run.max_correction = run.max_correction.max(worst);
            if worst > STEP_CORRECTION_LIMIT {
                return Err(Error::Invariant(format!("correction {worst:e} in interval {i}")));
            }
            let lowest = min_eigenvalue(&next);
            run.min_eigenvalue = run.min_eigenvalue.min(lowest);
            if lowest < options.negativity_limit {
                return Err(Error::Invariant(format!(
                    "eigenvalue {lowest:e} at t = {:.6e}",
                    (i + 1) as f64 * tau
                )));
            }
            *s = next;
        }
        previous = Some(vectors);
    }
    let last = previous.expect("at least one interval");
    let last_d = adjoint(&last);
    run.final_states = states.iter().map(|s| last.dot(&s.dot(&last_d))).collect();
    run.intervals = n_intervals;
    log::debug!(
        "scheduled run: {n_intervals} intervals, deficiency {:e}, min eigenvalue {:e}",
        run.max_deficiency,
        run.min_eigenvalue
    );
    Ok(run)
}

/// `max |A − B|` helper for trajectory comparisons.
pub fn max_difference(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a - b))
}
