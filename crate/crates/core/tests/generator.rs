use doublet_core::dissipation::{
    build_jump_set, half_fourier_kernel, BoundaryWeight, ChannelLabel, GeneratorContext, KernelOptions,
    NoiseRates,
};
use doublet_core::dynamics::{evolve, DensityMatrix};
use doublet_core::hilbert::{hermiticity_residual, max_abs};
use doublet_core::model::SystemParams;
use doublet_core::spectrum::solve_doublet;
use doublet_core::{CMatrix, C64};
use ndarray::Array1;
use proptest::prelude::*;
use std::f64::consts::PI;

fn anisotropic_context(m: usize) -> GeneratorContext {
    let (spectrum, doublet) = solve_doublet(&SystemParams::new(2.0, 1, 40)).unwrap();
    let rates = NoiseRates::anisotropic(1e-6, 1e-3, 1e-3, 1e-6);
    let channels = build_jump_set(doublet.layout, &rates, 10.0).unwrap();
    GeneratorContext::build(&spectrum.truncated(m), &channels, &KernelOptions::default()).unwrap()
}

fn hermitian(m: usize) -> impl Strategy<Value = CMatrix> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), m * m).prop_map(move |v| {
        let a = CMatrix::from_shape_fn((m, m), |(i, j)| C64::new(v[i * m + j].0, v[i * m + j].1));
        let h = &a + &a.t().mapv(|z| z.conj());
        h.mapv(|z| z * 0.5)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generator_preserves_trace_and_hermiticity_m10(rho in hermitian(10)) {
        let ctx = anisotropic_context(10);
        let d = ctx.apply_generator(&rho).unwrap();
        prop_assert!(d.diag().sum().norm() <= 1e-12);
        prop_assert!(hermiticity_residual(&d) <= 1e-12);
    }

    #[test]
    fn generator_preserves_trace_and_hermiticity_m40(rho in hermitian(40)) {
        let ctx = anisotropic_context(40);
        let d = ctx.apply_generator(&rho).unwrap();
        prop_assert!(d.diag().sum().norm() <= 1e-12);
        prop_assert!(hermiticity_residual(&d) <= 1e-12);
    }

    #[test]
    fn kernel_real_part_is_a_flat_band(omega in -20.0f64..20.0, rate in 0.0f64..1.0) {
        let opts = KernelOptions::default();
        let w = half_fourier_kernel(omega, rate, &opts);
        let inside = omega < -1e-12 && omega > -10.0 + 1e-12;
        let outside = omega > 1e-12 || omega < -10.0 - 1e-12;
        if inside {
            prop_assert!((w.re - PI * rate).abs() <= 1e-15);
        } else if outside {
            prop_assert_eq!(w.re, 0.0);
        }
        prop_assert_eq!(w.im, 0.0);
    }
}

#[test]
fn golden_rule_decay_of_isolated_pair() {
    // Levels 0 and 1 coupled by S₀₁ = s; level 2 decoupled.
    let rate = 2e-3;
    let s = C64::new(0.6, 0.3);
    let mut jump = CMatrix::zeros((3, 3));
    jump[[0, 1]] = s;
    jump[[1, 0]] = s.conj();
    let energies = Array1::from(vec![0.0, 1.0, 3.0]);
    let ctx = GeneratorContext::from_parts(energies, vec![(ChannelLabel::X { resonator: 0, atom: 0 }, rate, jump)], &KernelOptions::default())
        .unwrap();
    let rho0 = DensityMatrix::basis_state(ctx.basis_id(), 3, 1).unwrap();
    let times: Vec<f64> = (1..=8).map(|k| 25.0 * k as f64).collect();
    let trajectory = evolve(&rho0, &ctx, &times, 0.01).unwrap();
    let analytic = 2.0 * PI * rate * s.norm_sqr();
    // Least-squares rate from ln p₁(t).
    let xs = &trajectory.times;
    let ys: Vec<f64> = trajectory.states.iter().map(|r| r.matrix[[1, 1]].re.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((-slope - analytic).abs() <= 0.01 * analytic, "fitted {} vs {analytic}", -slope);
    // Downward flow only: the decoupled level stays empty.
    assert!(trajectory.states.iter().all(|r| r.matrix[[2, 2]].norm() < 1e-15));
}

#[test]
fn protected_channels_shrink_inside_doublet() {
    let mut previous = f64::INFINITY;
    for omega0 in [1.0, 1.5, 2.0] {
        let (spectrum, doublet) = solve_doublet(&SystemParams::new(omega0, 1, 40)).unwrap();
        let rates = NoiseRates::anisotropic(0.0, 1e-3, 1e-3, 0.0);
        let channels = build_jump_set(doublet.layout, &rates, 10.0).unwrap();
        let ctx = GeneratorContext::build(&spectrum.truncated(6), &channels, &KernelOptions::default()).unwrap();
        let overlap = (-2.0 * omega0 * omega0).exp();
        let mut largest = 0.0f64;
        for term in ctx.terms() {
            for (a, b) in [(0, 1), (1, 0)] {
                largest = largest.max(term.jump[[a, b]].norm()).max(term.relaxation[[a, b]].norm() / PI / term.rate);
            }
            largest = largest.max((term.jump[[0, 0]] - term.jump[[1, 1]]).norm() / 2.0);
        }
        assert!(largest <= 5.0 * overlap, "omega0 {omega0}: {largest:e} vs overlap {overlap:e}");
        assert!(largest < previous);
        previous = largest;
    }
}

#[test]
fn lamb_shift_option() {
    let opts = KernelOptions { include_lamb: true, ..KernelOptions::default() };
    let w = half_fourier_kernel(-5.0, 0.2, &opts);
    assert!((w.re - PI * 0.2).abs() < 1e-15 && w.im.abs() < 1e-12);
    let w = half_fourier_kernel(-1.0, 1.0, &opts);
    assert!((w.im - ((1.0f64 + 1e-8).ln() - (9.0f64 + 1e-8).ln())).abs() < 1e-12);

    let (spectrum, doublet) = solve_doublet(&SystemParams::new(1.5, 1, 30)).unwrap();
    let channels = build_jump_set(doublet.layout, &NoiseRates::anisotropic(1e-3, 1e-3, 1e-3, 1e-3), 10.0).unwrap();
    let ctx = GeneratorContext::build(&spectrum.truncated(8), &channels, &opts).unwrap();
    let shift = ctx.lamb_shift_hamiltonian();
    assert!(hermiticity_residual(&shift) <= 1e-14);
    assert!(max_abs(&shift) > 0.0);
    let off = GeneratorContext::build(&spectrum.truncated(8), &channels, &KernelOptions::default()).unwrap();
    let residual = off.lamb_shift_hamiltonian();
    assert!(residual.diag().iter().all(|z| z.norm() < 1e-18));
    assert!(shift.diag().iter().any(|z| z.norm() > 1e-6));
}

#[test]
fn boundary_weights() {
    for (boundary, factor) in [(BoundaryWeight::Zero, 0.0), (BoundaryWeight::Half, 0.5), (BoundaryWeight::Full, 1.0)] {
        let opts = KernelOptions { boundary, ..KernelOptions::default() };
        assert_eq!(half_fourier_kernel(0.0, 1.0, &opts).re, factor * PI);
        assert_eq!(half_fourier_kernel(-10.0, 1.0, &opts).re, factor * PI);
    }
}
