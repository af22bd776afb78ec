use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn doublet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doublet")).args(args).output().expect("binary runs")
}

fn csv(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let runs: Vec<tempfile::TempDir> = ["1", "4", "4"].iter().map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in runs.iter().zip(["1", "4", "4"]) {
        let out = dir.path().to_str().unwrap();
        let status = doublet(&[
            "coherence-scan",
            "--preset",
            "coherence-loss",
            "--out",
            out,
            "--threads",
            threads,
            "--override",
            "system.omega0=[1.5, 2.0]",
            "--override",
            "rates.gamma_r=[1e-6, 0.0]",
            "--override",
            "grid.n_theta=4",
            "--override",
            "grid.n_phi=4",
        ])
        .status;
        assert!(status.success());
        assert!(doublet(&["robustness", "--preset", "robustness", "--out", out, "--threads", threads]).status.success());
    }
    for name in ["coherence-scan.csv", "coherence-scan-peaks.csv", "robustness.csv"] {
        let first = csv(runs[0].path(), name);
        for other in &runs[1..] {
            assert_eq!(first, csv(other.path(), name), "{name}");
        }
    }
}

#[test]
fn header_echoes_the_resolved_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(doublet(&["spectrum", "--preset", "coherence-loss", "--out", out, "--override", "system.n_max=30"]).status.success());
    let text = csv(dir.path(), "spectrum.csv");
    let echoed: String = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .skip(2)
        .map(|l| format!("{}\n", l.strip_prefix(' ').unwrap_or(l)))
        .collect();
    let config = doublet_cli::parse_config(&echoed).unwrap();
    assert_eq!(config.experiment, doublet_cli::Experiment::Spectrum);
    assert_eq!(config.system.n_max, 30);
    assert_eq!(config.rates.gamma_r, vec![1e-6, 1e-7, 0.0]);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "n_atoms,omega0,delta,delta_check,gap,n_photons,ansatz_fidelity_G,converged");
    assert_eq!(data.len(), 1 + 9);
    // Twelve significant digits.
    assert_eq!(data[1].split(',').nth(1).unwrap(), "5.00000000000e-1");
}

#[test]
fn unknown_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "experiment = \"spectrum\"\n[system]\nomega0 = [1.0]\nnmax = 20\n").unwrap();
    let output = doublet(&["spectrum", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("nmax"));

    let output = doublet(&["spectrum", "--preset", "splitting", "--override", "numerics.retaned=4"]);
    assert_eq!(output.status.code(), Some(1));
    assert_eq!(doublet(&["spectrum"]).status.code(), Some(1));
}

#[test]
fn censored_runs_have_their_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let output = doublet(&[
        "coherence",
        "--preset",
        "coherence-loss",
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "numerics.t_max=1.0",
        "--override",
        "system.omega0=2.0",
        "--override",
        "rates.gamma_r=0.0",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let text = csv(dir.path(), "coherence.csv");
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 6 * 8);
    assert!(rows.iter().all(|r| r.split(',').nth(7) == Some("true")));
}

#[test]
fn config_file_and_preset_merge() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "[system]\nomega0 = [1.5]\n").unwrap();
    let out = dir.path().to_str().unwrap();
    let output = doublet(&["spectrum", "--preset", "splitting", "--config", config.to_str().unwrap(), "--out", out]);
    assert!(output.status.success());
    let text = csv(dir.path(), "spectrum.csv");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn presets_are_listed() {
    let output = doublet(&["presets"]);
    assert!(output.status.success());
    let listed = String::from_utf8_lossy(&output.stdout);
    for name in doublet_cli::preset_names() {
        assert!(listed.lines().any(|l| l == name));
    }
}
