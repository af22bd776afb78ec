//! Acceptance tolerances and reporting. The criteria themselves live in
//! `tests/acceptance.rs`; every threshold they use is defined here.

use std::fmt::Display;
use std::time::Duration;

pub use doublet_core::dynamics::NEGATIVITY_LIMIT;

/// Expected slope of ln δ against (Ω₀/ω_eg)².
pub const SPLITTING_SLOPE: f64 = -2.0;
/// Relative tolerance on that slope.
pub const SPLITTING_SLOPE_TOLERANCE: f64 = 0.15;

pub const ANSATZ_FIDELITY_MIN: f64 = 0.99;
/// Relative tolerance on ⟨a†a⟩ against |α|².
pub const PHOTON_NUMBER_TOLERANCE: f64 = 0.10;

/// Trace and Hermiticity of the generator output.
pub const GENERATOR_TOLERANCE: f64 = 1e-12;
pub const GENERATOR_SAMPLES: usize = 100;

pub const GOLDEN_RULE_TOLERANCE: f64 = 0.01;

/// Best coherence time over the value at the weakest coupling.
pub const ENHANCEMENT_FACTOR: f64 = 10.0;
/// Peak positions in α must agree to this many grid spacings.
pub const PEAK_SPREAD_STEPS: f64 = 1.0;

pub const Z_GATE_FIDELITY_MIN: f64 = 0.999;
/// Noiseless control runs.
pub const IDEAL_GATE_FIDELITY_MIN: f64 = 0.999;
/// Slack on fidelity orderings.
pub const FIDELITY_SLACK: f64 = 1e-9;

/// Most negative density-matrix eigenvalue accepted from a dissipative run.
pub const POSITIVITY_LIMIT: f64 = NEGATIVITY_LIMIT;

/// Print the one-line verdict for criterion `id` and return `pass`.
pub fn verdict(id: u32, title: &str, pass: bool, elapsed: Duration, detail: impl Display) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {id:>2} {tag} {title} [{:.1}s]: {detail}", elapsed.as_secs_f64());
    pass
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn strictly_increasing(ys: &[f64]) -> bool {
    ys.windows(2).all(|w| w[1] > w[0])
}

/// Rises somewhere and falls somewhere.
pub fn non_monotonic(ys: &[f64]) -> bool {
    ys.windows(2).any(|w| w[1] > w[0]) && ys.windows(2).any(|w| w[1] < w[0])
}
