use approx::assert_relative_eq;
use doublet_core::dissipation::{build_jump_set, GeneratorContext, NoiseRates};
use doublet_core::dynamics::{evolve_scheduled, ControlKind, ControlledSystem, Schedule, ScheduleOptions};
use doublet_core::error::Error;
use doublet_core::hilbert::{embed, pauli, PauliAxis, Slot};
use doublet_core::model::{build_dicke, SystemParams};
use doublet_core::protocols::{
    coherence_peak_scan, coherence_time_experiment, readout_probabilities, robustness_scan, x_gate, xx_gate, z_gate,
    CoherenceOptions, GateOptions, InitialStateGrid, SplittingTable, ZTiming,
};
use doublet_core::spectrum::solve_doublet;
use doublet_core::{CMatrix, C64};
use std::f64::consts::PI;

fn lifted(retained: usize) -> CoherenceOptions {
    CoherenceOptions { retained, negativity_limit: f64::NEG_INFINITY, ..CoherenceOptions::default() }
}

fn gate_options() -> GateOptions {
    GateOptions { retained: 12, product_levels: 6, ..GateOptions::default() }
}

/// First 1/e crossing of |ρ_EG| by plain RK4 on the generator.
fn rk4_coherence_time(ctx: &GeneratorContext, c: [C64; 2], dt: f64) -> f64 {
    let m = ctx.dim();
    let mut rho = CMatrix::zeros((m, m));
    for a in 0..2 {
        for b in 0..2 {
            rho[[a, b]] = c[a] * c[b].conj();
        }
    }
    let initial = rho[[1, 0]].norm();
    let threshold = (-1.0f64).exp();
    let f = |r: &CMatrix| ctx.apply_generator(r).unwrap();
    let mut t = 0.0;
    let mut previous = 1.0;
    loop {
        let k1 = f(&rho);
        let k2 = f(&(&rho + &k1.mapv(|z| z * (dt / 2.0))));
        let k3 = f(&(&rho + &k2.mapv(|z| z * (dt / 2.0))));
        let k4 = f(&(&rho + &k3.mapv(|z| z * dt)));
        rho = &rho + &(&k1 + &k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (dt / 6.0));
        t += dt;
        let current = rho[[1, 0]].norm() / initial;
        if current < threshold {
            return t - dt * (threshold - current) / (previous - current);
        }
        previous = current;
    }
}

#[test]
fn coherence_estimator_matches_direct_integration() {
    let params = SystemParams::new(1.0, 1, 40);
    let rates = NoiseRates::anisotropic(0.0, 0.0, 1e-2, 0.0);
    let grid = InitialStateGrid { thetas: vec![PI / 4.0, PI / 3.0], phis: vec![0.0, PI / 2.0] };
    let options = lifted(12);
    let result = coherence_time_experiment(&params, &rates, &grid, &options).unwrap();

    let (spectrum, doublet) = solve_doublet(&params).unwrap();
    let channels = build_jump_set(doublet.layout, &rates, options.kernel.cutoff).unwrap();
    let ctx = GeneratorContext::build(&spectrum.truncated(12), &channels, &options.kernel).unwrap();
    for state in &result.per_state {
        assert!(!state.censored);
        let oracle = rk4_coherence_time(&ctx, InitialStateGrid::amplitudes(state.theta, state.phi), 0.05);
        assert_relative_eq!(state.time, oracle, max_relative = 2e-3);
    }
    assert_relative_eq!(result.alpha, 1.0);
    assert!(result.min <= result.mean && result.mean <= result.max);
}

#[test]
fn coherence_is_symmetric_under_phase_shift() {
    let params = SystemParams::new(1.0, 1, 40);
    let rates = NoiseRates::anisotropic(1e-4, 1e-2, 1e-2, 0.0);
    let grid = InitialStateGrid { thetas: vec![PI / 3.0], phis: vec![0.3, 0.3 + PI] };
    let result = coherence_time_experiment(&params, &rates, &grid, &lifted(10)).unwrap();
    let [a, b] = [result.per_state[0].time, result.per_state[1].time];
    assert_relative_eq!(a, b, max_relative = 1e-6);
}

#[test]
fn noiseless_coherence_is_censored() {
    let params = SystemParams::new(1.5, 1, 30);
    let grid = InitialStateGrid::uniform(4, 4).unwrap();
    let options = CoherenceOptions { retained: 8, t_max: 1e3, ..CoherenceOptions::default() };
    let result = coherence_time_experiment(&params, &NoiseRates::default(), &grid, &options).unwrap();
    assert!(result.censored());
    assert_eq!(result.censored_count, result.per_state.len());
    assert!(result.per_state.iter().all(|s| s.time == 1e3));
}

#[test]
fn positivity_guard_trips_and_can_be_lifted() {
    let params = SystemParams::new(0.5, 1, 30);
    let rates = NoiseRates::anisotropic(1e-6, 1e-3, 1e-3, 1e-6);
    let grid = InitialStateGrid { thetas: vec![PI / 4.0], phis: vec![0.0] };
    let strict = CoherenceOptions { retained: 12, ..CoherenceOptions::default() };
    assert!(matches!(coherence_time_experiment(&params, &rates, &grid, &strict), Err(Error::Invariant(_))));
    let result = coherence_time_experiment(&params, &rates, &grid, &lifted(12)).unwrap();
    assert!(result.min_eigenvalue < -1e-7);
    assert!(result.mean > 0.0 && !result.censored());
}

#[test]
fn peak_scan_reports_the_largest_row() {
    let base = SystemParams::new(0.0, 1, 30);
    let rates = NoiseRates::anisotropic(0.0, 0.0, 1e-2, 0.0);
    let grid = InitialStateGrid { thetas: vec![PI / 4.0], phis: vec![0.0] };
    let scan = coherence_peak_scan(&base, &[0.5, 0.75, 1.0], &rates, &grid, &lifted(8)).unwrap();
    assert_eq!(scan.rows.len(), 3);
    let best = scan.rows.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(scan.rows[scan.peak.index].mean, best);
    assert!(scan.peak.y >= best);
    assert!(coherence_peak_scan(&base, &[], &rates, &grid, &lifted(8)).is_err());
}

#[test]
fn identity_gates_are_exact() {
    // Short null pulses: the ideal gates leave out the free precession at δ.
    let none = NoiseRates::default();
    let params = SystemParams::new(2.0, 1, 40);
    let x = x_gate(&params, 0.0, 1.0, &none, &gate_options()).unwrap();
    assert!(x.fidelity >= 1.0 - 1e-6, "x {}", x.fidelity);

    let table = SplittingTable::build(&params, 1.2, 2.1, 46).unwrap();
    let z = z_gate(&params, 0.0, ZTiming::CalibrateDuration { turn: 2.0 }, &table, &none, &gate_options()).unwrap();
    assert!(z.fidelity >= 1.0 - 1e-6, "z {}", z.fidelity);

    let xx = xx_gate(&params, 0.0, 1.0, &none, &gate_options()).unwrap();
    assert!(xx.fidelity >= 1.0 - 1e-6, "xx {}", xx.fidelity);
}

#[test]
fn noiseless_x_gate_converges_with_duration() {
    let none = NoiseRates::default();
    let params = SystemParams::new(2.5, 1, 50);
    let short = x_gate(&params, PI / 2.0, 100.0, &none, &gate_options()).unwrap();
    let long = x_gate(&params, PI / 2.0, 200.0, &none, &gate_options()).unwrap();
    assert!(long.fidelity >= 1.0 - 1e-5, "{}", long.fidelity);
    assert!((long.fidelity - short.fidelity).abs() < 1e-6);
    assert!(long.adiabatic_ok && long.regime_ok);
}

#[test]
fn noise_lowers_gate_fidelity() {
    let params = SystemParams::new(2.25, 1, 40);
    let rates = NoiseRates::anisotropic(1e-6, 1e-3, 1e-3, 0.0);
    let report = x_gate(&params, PI / 2.0, 100.0, &rates, &gate_options()).unwrap();
    assert!(report.fidelity_ideal >= report.fidelity);
    assert!(report.fidelity > 0.999);
    assert!(report.min_eigenvalue >= -1e-7);
}

#[test]
fn z_gate_is_adiabatic() {
    let none = NoiseRates::default();
    let params = SystemParams::new(2.0, 1, 40);
    let table = SplittingTable::build(&params, 1.2, 2.1, 46).unwrap();
    let theta = PI / 2.0;
    let options = GateOptions { retained: 8, ..GateOptions::default() };
    let short = z_gate(&params, theta, ZTiming::CalibrateTurn { duration: 300.0 }, &table, &none, &options).unwrap();
    let long = z_gate(&params, theta, ZTiming::CalibrateTurn { duration: 600.0 }, &table, &none, &options).unwrap();
    assert!((short.fidelity - long.fidelity).abs() < 1e-4, "{} vs {}", short.fidelity, long.fidelity);
    assert!(long.turn.unwrap() > short.turn.unwrap());
}

#[test]
fn readout_after_x_rotation_matches_two_level_oracle() {
    // δ·T is negligible at this coupling.
    let params = SystemParams::new(2.5, 1, 50);
    let (_, doublet) = solve_doublet(&params).unwrap();
    let system = ControlledSystem {
        h0: build_dicke(&params).unwrap().into_matrix(),
        h1: embed(&pauli(PauliAxis::X), Slot::atom(0), doublet.layout).unwrap().into_matrix(),
        jumps: vec![],
        retained: 12,
    };
    // X rotations commute with the polarized readout, so start from a
    // state off that axis: (Ψ_G + iΨ_E)/√2, then e^{−iθΣ_x}.
    let theta = PI / 8.0;
    let c = [C64::from(0.5f64.sqrt()), C64::new(0.0, 0.5f64.sqrt())];
    let psi = &doublet.psi_g.scaled(c[0]) + &doublet.psi_e.scaled(c[1]);
    let schedule = Schedule::plateau_pulse(ControlKind::XAmplitude, theta, 100.0).unwrap();
    let run = evolve_scheduled(&system, &schedule, &[psi.projector()], &ScheduleOptions::default()).unwrap();
    let readout = readout_probabilities(&run.final_states[0], &doublet).unwrap();

    let (cos, sin) = (C64::from(theta.cos()), C64::new(0.0, -theta.sin()));
    let out = [cos * c[0] + sin * c[1], sin * c[0] + cos * c[1]];
    let p_plus = 0.5 * (out[0] + out[1]).norm_sqr();
    let p_minus = 0.5 * (out[0] - out[1]).norm_sqr();
    assert!((readout.p_plus - p_plus).abs() < 1e-3, "{} vs {p_plus}", readout.p_plus);
    assert!((readout.p_minus - p_minus).abs() < 1e-3);
    assert!(readout.p_leak < 1e-3);
}

#[test]
fn robustness_couplings_follow_overlap() {
    let rows = robustness_scan(&SystemParams::new(0.0, 1, 50), &[1.0, 1.5, 2.0]).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].coupling_y < w[0].coupling_y && w[1].coupling_z < w[0].coupling_z);
    }
    for r in &rows {
        assert_relative_eq!(r.alpha_sq, r.omega0 * r.omega0, max_relative = 1e-12);
        assert!(r.coupling_y <= 10.0 * r.overlap && r.coupling_z <= 10.0 * r.overlap);
        assert!(r.coupling_x > 0.5);
    }
}
