//! Experiment dispatch and CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use doublet_core::dynamics::NEGATIVITY_LIMIT;
use doublet_core::protocols::{
    coherence_time_experiment, locate_peak, robustness_scan, x_gate, xx_gate, z_gate, CoherenceResult, GateReport,
    RobustnessRow, SplittingTable, ZTiming,
};
use doublet_core::spectrum::{splitting_curve, SplittingRow};
use rayon::prelude::*;

use crate::config::{Experiment, RunConfig, SweepPoint};

/// Files written by [`run`].
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Some coherence never crossed 1/e inside `t_max`.
    pub censored: bool,
}

struct Table {
    name: String,
    columns: String,
    rows: Vec<String>,
}

/// Twelve significant digits.
fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn point_fields(p: &SweepPoint) -> String {
    format!("{},{},{},{}", p.n_atoms, num(p.gamma_x), num(p.gamma_r), num(p.omega0))
}

const POINT_COLUMNS: &str = "n_atoms,gamma_x,gamma_r,omega0";

/// Run `config` on a pool of `threads` workers (all cores when `None`) and
/// write its CSV tables into `out_dir`. Rows come out in config order
/// whatever the thread count.
pub fn run(config: &RunConfig, out_dir: &Path, threads: Option<usize>) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?;
    let (tables, censored) = pool.install(|| execute(config))?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let header = header_block(config);
    let mut files = Vec::new();
    for table in tables {
        let path = out_dir.join(format!("{}.csv", table.name));
        let mut text = header.clone();
        text.push_str(&table.columns);
        text.push('\n');
        for row in &table.rows {
            text.push_str(row);
            text.push('\n');
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    Ok(Outcome { files, censored })
}

fn header_block(config: &RunConfig) -> String {
    let mut out = format!("# doublet {}\n# experiment: {}\n", env!("CARGO_PKG_VERSION"), config.experiment);
    for line in config.to_toml().lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn execute(config: &RunConfig) -> Result<(Vec<Table>, bool)> {
    match config.experiment {
        Experiment::Spectrum => Ok((vec![spectrum(config)?], false)),
        Experiment::Coherence => coherence(config),
        Experiment::CoherenceScan => coherence_scan(config),
        Experiment::GateX | Experiment::GateXx | Experiment::GateZ => Ok((vec![gates(config)?], false)),
        Experiment::Robustness => Ok((vec![robustness(config)?], false)),
    }
}

fn spectrum(config: &RunConfig) -> Result<Table> {
    let mut rows = Vec::new();
    for &n in &config.system.n_atoms {
        let curve = splitting_curve(&config.base_params(n), &config.omega0_grid(n), config.check_n_max())
            .with_context(|| format!("splitting curve at n_atoms = {n}"))?;
        for r in curve {
            if !r.converged {
                log::warn!("n_atoms = {n}, omega0 = {}: delta not converged under cutoff doubling", r.omega0);
            }
            rows.push(format!(
                "{n},{},{},{},{},{},{},{}",
                num(r.omega0),
                num(r.delta),
                num(r.delta_check),
                num(r.gap),
                num(r.n_photons),
                num(r.ansatz_fidelity_g),
                r.converged
            ));
        }
    }
    Ok(Table { name: "spectrum".into(), columns: format!("n_atoms,{}", SplittingRow::CSV_HEADER), rows })
}

fn coherence_points(config: &RunConfig) -> Result<Vec<(SweepPoint, CoherenceResult)>> {
    let grid = config.initial_states()?;
    let options = config.coherence_options();
    let points = config.sweep();
    let results = points
        .par_iter()
        .map(|p| {
            coherence_time_experiment(&config.point_params(p), &config.noise_rates(p), &grid, &options)
                .with_context(|| format!("coherence at {p}"))
        })
        .collect::<Result<Vec<_>>>()?;
    for (p, r) in points.iter().zip(&results) {
        warn_point(p, r.regime_ok, r.min_eigenvalue);
    }
    Ok(points.into_iter().zip(results).collect())
}

fn warn_point(p: &SweepPoint, regime_ok: bool, min_eigenvalue: f64) {
    if !regime_ok {
        log::warn!("{p}: outside the quasi-degenerate regime");
    }
    if min_eigenvalue < NEGATIVITY_LIMIT {
        log::warn!("{p}: density matrix eigenvalue {min_eigenvalue:e}");
    }
}

fn coherence(config: &RunConfig) -> Result<(Vec<Table>, bool)> {
    let results = coherence_points(config)?;
    let censored = results.iter().any(|(_, r)| r.censored());
    let mut rows = Vec::new();
    for (p, r) in &results {
        for s in &r.per_state {
            rows.push(format!(
                "{},{},{},{},{},{}",
                point_fields(p),
                num(s.theta),
                num(s.phi),
                num(s.time),
                s.censored,
                num(r.min_eigenvalue)
            ));
        }
    }
    let columns = format!("{POINT_COLUMNS},theta,phi,time,censored,min_eigenvalue");
    Ok((vec![Table { name: "coherence".into(), columns, rows }], censored))
}

fn coherence_scan(config: &RunConfig) -> Result<(Vec<Table>, bool)> {
    let results = coherence_points(config)?;
    let censored = results.iter().any(|(_, r)| r.censored());
    let mut rows = Vec::new();
    // Curves keyed by (N, Γ_x, Γ_r) in sweep order.
    let mut curves: Vec<((usize, f64, f64), Vec<(f64, f64)>)> = Vec::new();
    for (p, r) in &results {
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            point_fields(p),
            num(r.alpha),
            num(r.delta),
            num(r.gap),
            r.regime_ok,
            num(r.mean),
            num(r.min),
            num(r.max),
            r.censored_count,
            num(r.min_eigenvalue),
            num(r.step),
            r.per_state.len()
        ));
        let key = (p.n_atoms, p.gamma_x, p.gamma_r);
        match curves.last_mut() {
            Some((k, curve)) if *k == key => curve.push((r.alpha, r.mean)),
            _ => curves.push((key, vec![(r.alpha, r.mean)])),
        }
    }
    let mut peaks = Vec::new();
    for ((n, gx, gr), curve) in &curves {
        let xs: Vec<f64> = curve.iter().map(|c| c.0).collect();
        let ys: Vec<f64> = curve.iter().map(|c| c.1).collect();
        let peak = locate_peak(&xs, &ys)?;
        peaks.push(format!("{n},{},{},{},{},{},{}", num(*gx), num(*gr), peak.index, num(peak.x), num(peak.y), peak.interior));
    }
    let summary = Table {
        name: "coherence-scan".into(),
        columns: format!(
            "{POINT_COLUMNS},alpha,delta,gap,regime_ok,mean_time,min_time,max_time,censored_count,min_eigenvalue,step,states"
        ),
        rows,
    };
    let peak_table = Table {
        name: "coherence-scan-peaks".into(),
        columns: "n_atoms,gamma_x,gamma_r,peak_index,peak_alpha,peak_time,interior".into(),
        rows: peaks,
    };
    Ok((vec![summary, peak_table], censored))
}

fn gates(config: &RunConfig) -> Result<Table> {
    let options = config.gate_options();
    let g = &config.gate;
    let mut tables = BTreeMap::new();
    if config.experiment == Experiment::GateZ {
        for &n in &config.system.n_atoms {
            let table = SplittingTable::build(&config.base_params(n), g.table_lo, g.table_hi, g.table_points)
                .with_context(|| format!("splitting table at n_atoms = {n}"))?;
            tables.insert(n, table);
        }
    }
    let timing = match g.turn {
        Some(turn) => ZTiming::CalibrateDuration { turn },
        None => ZTiming::CalibrateTurn { duration: g.duration },
    };
    let points = config.sweep();
    let reports = points
        .par_iter()
        .map(|p| {
            let params = config.point_params(p);
            let rates = config.noise_rates(p);
            let report: Result<GateReport> = match config.experiment {
                Experiment::GateX => x_gate(&params, g.theta, g.duration, &rates, &options).map_err(Into::into),
                Experiment::GateXx => xx_gate(&params, g.theta, g.duration, &rates, &options).map_err(Into::into),
                _ => z_gate(&params, g.theta, timing, &tables[&p.n_atoms], &rates, &options).map_err(Into::into),
            };
            report.with_context(|| format!("{} at {p}", config.experiment))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (p, r) in points.iter().zip(&reports) {
        warn_point(p, r.regime_ok, r.min_eigenvalue);
        if !r.adiabatic_ok {
            log::warn!("{p}: gate time short of the adiabatic bound");
        }
        let worst = r.per_state.iter().cloned().fold(f64::INFINITY, f64::min);
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            point_fields(p),
            num(r.theta),
            num(r.duration),
            r.turn.map(num).unwrap_or_default(),
            num(r.fidelity),
            num(r.fidelity_ideal),
            num(worst),
            r.adiabatic_ok,
            r.regime_ok,
            num(r.max_deficiency),
            num(r.min_eigenvalue)
        ));
    }
    Ok(Table {
        name: config.experiment.name().into(),
        columns: format!(
            "{POINT_COLUMNS},theta,duration,turn,fidelity,fidelity_ideal,worst_state_fidelity,adiabatic_ok,regime_ok,max_deficiency,min_eigenvalue"
        ),
        rows,
    })
}

fn robustness(config: &RunConfig) -> Result<Table> {
    let mut rows = Vec::new();
    for &n in &config.system.n_atoms {
        let scan: Vec<RobustnessRow> = robustness_scan(&config.base_params(n), &config.omega0_grid(n))
            .with_context(|| format!("robustness at n_atoms = {n}"))?;
        for r in scan {
            rows.push(format!(
                "{n},{},{},{},{},{},{},{}",
                num(r.omega0),
                num(r.alpha_sq),
                num(r.overlap),
                num(r.coupling_x),
                num(r.coupling_y),
                num(r.coupling_z),
                num(r.coupling_a)
            ));
        }
    }
    Ok(Table { name: "robustness".into(), columns: format!("n_atoms,{}", RobustnessRow::CSV_HEADER), rows })
}
