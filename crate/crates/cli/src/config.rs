//! Run configuration: TOML text, bundled presets and `key=value` overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use doublet_core::dissipation::{BoundaryWeight, KernelOptions, NoiseRates};
use doublet_core::dynamics::{ScheduleOptions, NEGATIVITY_LIMIT};
use doublet_core::model::{SystemParams, DEFAULT_DIMENSION_CEILING};
use doublet_core::protocols::{CoherenceOptions, GateOptions, InitialStateGrid};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Experiment {
    Spectrum,
    Coherence,
    CoherenceScan,
    GateX,
    GateZ,
    GateXx,
    Robustness,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Spectrum,
        Experiment::Coherence,
        Experiment::CoherenceScan,
        Experiment::GateX,
        Experiment::GateZ,
        Experiment::GateXx,
        Experiment::Robustness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Coherence => "coherence",
            Experiment::CoherenceScan => "coherence-scan",
            Experiment::GateX => "gate-x",
            Experiment::GateZ => "gate-z",
            Experiment::GateXx => "gate-xx",
            Experiment::Robustness => "robustness",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL.iter().copied().find(|e| e.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment '{s}' (valid: {})", valid.join(", "))
        })
    }
}

impl TryFrom<String> for Experiment {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Experiment> for String {
    fn from(e: Experiment) -> String {
        e.name().to_string()
    }
}

/// Accept `x = 1.0` as well as `x = [1.0, 2.0]`.
fn one_or_many<'de, D, T>(deserializer: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Sweep<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match Sweep::deserialize(deserializer)? {
        Sweep::One(x) => vec![x],
        Sweep::Many(v) => v,
    })
}

fn opt_one_or_many<'de, D, T>(deserializer: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    one_or_many(deserializer).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default = "one")]
    pub omega_cav: f64,
    /// Ω₀ grid, shared by every N.
    #[serde(default, deserialize_with = "opt_one_or_many", skip_serializing_if = "Option::is_none")]
    pub omega0: Option<Vec<f64>>,
    /// Photonic-amplitude grid; Ω₀ = α·ω_cav/√N for each N.
    #[serde(default, deserialize_with = "opt_one_or_many", skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default = "one_atom", deserialize_with = "one_or_many")]
    pub n_atoms: Vec<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    #[serde(default = "zero_list", deserialize_with = "one_or_many")]
    pub gamma_x: Vec<f64>,
    #[serde(default)]
    pub gamma_y: f64,
    #[serde(default)]
    pub gamma_z: f64,
    /// Both resonator quadratures.
    #[serde(default = "zero_list", deserialize_with = "one_or_many")]
    pub gamma_r: Vec<f64>,
    #[serde(default)]
    pub gamma_x12: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        RatesSection { gamma_x: zero_list(), gamma_y: 0.0, gamma_z: 0.0, gamma_r: zero_list(), gamma_x12: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Zero,
    Half,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub include_lamb: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "half")]
    pub boundary: Boundary,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { cutoff: default_cutoff(), include_lamb: false, epsilon: default_epsilon(), boundary: Boundary::Half }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    /// Retained eigenstates M.
    #[serde(default = "default_retained")]
    pub retained: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_fine_samples")]
    pub fine_samples: usize,
    #[serde(default = "one")]
    pub recompute_interval: f64,
    /// Most negative density-matrix eigenvalue tolerated; `-inf` disables
    /// the check and leaves it to the `min_eigenvalue` column.
    #[serde(default = "default_negativity_limit")]
    pub negativity_limit: f64,
    /// Single-resonator levels K kept per resonator in the XX gate.
    #[serde(default = "default_product_levels")]
    pub product_levels: usize,
    #[serde(default = "default_ceiling")]
    pub dimension_ceiling: usize,
    /// Cutoff for the δ convergence check; defaults to 2·n_max.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_n_max: Option<usize>,
}

impl Default for NumericsSection {
    fn default() -> Self {
        NumericsSection {
            retained: default_retained(),
            dt: default_dt(),
            t_max: default_t_max(),
            fine_samples: default_fine_samples(),
            recompute_interval: 1.0,
            negativity_limit: default_negativity_limit(),
            product_levels: default_product_levels(),
            dimension_ceiling: default_ceiling(),
            check_n_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "eight")]
    pub n_theta: usize,
    #[serde(default = "eight")]
    pub n_phi: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n_theta: 8, n_phi: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    #[serde(default = "half_pi")]
    pub theta: f64,
    /// Gate time T. For the Z gate it is only used when `turn` is absent.
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Z gate turning point; when set, T is solved for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<f64>,
    /// δ(Ω₀) interpolation table for the Z gate.
    #[serde(default = "default_table_lo")]
    pub table_lo: f64,
    #[serde(default = "default_table_hi")]
    pub table_hi: f64,
    #[serde(default = "default_table_points")]
    pub table_points: usize,
}

impl Default for GateSection {
    fn default() -> Self {
        GateSection {
            theta: half_pi(),
            duration: default_duration(),
            turn: None,
            table_lo: default_table_lo(),
            table_hi: default_table_hi(),
            table_points: default_table_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub system: SystemSection,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub gate: GateSection,
}

fn one() -> f64 {
    1.0
}
fn one_atom() -> Vec<usize> {
    vec![1]
}
fn default_n_max() -> usize {
    40
}
fn zero_list() -> Vec<f64> {
    vec![0.0]
}
fn default_cutoff() -> f64 {
    10.0
}
fn default_epsilon() -> f64 {
    1e-8
}
fn half() -> Boundary {
    Boundary::Half
}
fn default_retained() -> usize {
    40
}
fn default_dt() -> f64 {
    0.01
}
fn default_t_max() -> f64 {
    1e8
}
fn default_fine_samples() -> usize {
    256
}
fn default_negativity_limit() -> f64 {
    NEGATIVITY_LIMIT
}
fn default_product_levels() -> usize {
    8
}
fn default_ceiling() -> usize {
    DEFAULT_DIMENSION_CEILING
}
fn eight() -> usize {
    8
}
fn half_pi() -> f64 {
    std::f64::consts::FRAC_PI_2
}
fn default_duration() -> f64 {
    100.0
}
fn default_table_lo() -> f64 {
    1.2
}
fn default_table_hi() -> f64 {
    2.1
}
fn default_table_points() -> usize {
    46
}

/// A point of the `N × Γ_x × Γ_r × Ω₀` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n_atoms: usize,
    pub gamma_x: f64,
    pub gamma_r: f64,
    pub omega0: f64,
}

impl fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n_atoms = {}, gamma_x = {:e}, gamma_r = {:e}, omega0 = {}", self.n_atoms, self.gamma_x, self.gamma_r, self.omega0)
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        let s = &self.system;
        match (&s.omega0, &s.alpha) {
            (Some(_), Some(_)) => bail!("system: give either omega0 or alpha, not both"),
            (None, None) => bail!("system: missing omega0 (or alpha) grid"),
            (Some(g), None) | (None, Some(g)) => {
                if g.is_empty() {
                    bail!("system: empty coupling grid");
                }
                if g.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    bail!("system: coupling grid values must be finite and >= 0");
                }
            }
        }
        if s.n_atoms.is_empty() || s.n_atoms.contains(&0) {
            bail!("system.n_atoms must be a non-empty list of positive integers");
        }
        if !(s.omega_cav > 0.0 && s.omega_cav.is_finite()) {
            bail!("system.omega_cav must be > 0");
        }
        if s.n_max == 0 {
            bail!("system.n_max must be >= 1");
        }
        let r = &self.rates;
        if r.gamma_x.is_empty() || r.gamma_r.is_empty() {
            bail!("rates: empty gamma_x or gamma_r sweep");
        }
        let scalars = [r.gamma_y, r.gamma_z, r.gamma_x12];
        if r.gamma_x.iter().chain(&r.gamma_r).chain(&scalars).any(|g| !g.is_finite() || *g < 0.0) {
            bail!("rates: every rate must be finite and >= 0");
        }
        if !(self.kernel.cutoff > 0.0) || !(self.kernel.epsilon > 0.0) {
            bail!("kernel: cutoff and epsilon must be > 0");
        }
        let n = &self.numerics;
        if !(n.dt > 0.0 && n.t_max > 0.0 && n.recompute_interval > 0.0) {
            bail!("numerics: dt, t_max and recompute_interval must be > 0");
        }
        if n.negativity_limit.is_nan() || n.negativity_limit > 0.0 {
            bail!("numerics.negativity_limit must be <= 0");
        }
        if self.grid.n_theta < 2 || self.grid.n_phi < 1 {
            bail!("grid: need n_theta >= 2 and n_phi >= 1");
        }
        let g = &self.gate;
        if !(g.theta.is_finite() && g.duration > 0.0) {
            bail!("gate: theta must be finite and duration > 0");
        }
        if !(g.table_lo < g.table_hi) || g.table_points < 2 {
            bail!("gate: table needs table_lo < table_hi and at least 2 points");
        }
        Ok(())
    }

    /// Ω₀ grid for `n_atoms` atoms.
    pub fn omega0_grid(&self, n_atoms: usize) -> Vec<f64> {
        match (&self.system.omega0, &self.system.alpha) {
            (Some(g), _) => g.clone(),
            (None, Some(a)) => a.iter().map(|x| x * self.system.omega_cav / (n_atoms as f64).sqrt()).collect(),
            (None, None) => Vec::new(),
        }
    }

    /// Cartesian sweep in config order: N, then Γ_x, then Γ_r, then Ω₀.
    pub fn sweep(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &n_atoms in &self.system.n_atoms {
            for &gamma_x in &self.rates.gamma_x {
                for &gamma_r in &self.rates.gamma_r {
                    for omega0 in self.omega0_grid(n_atoms) {
                        out.push(SweepPoint { n_atoms, gamma_x, gamma_r, omega0 });
                    }
                }
            }
        }
        out
    }

    pub fn noise_rates(&self, point: &SweepPoint) -> NoiseRates {
        NoiseRates::anisotropic(point.gamma_x, self.rates.gamma_y, self.rates.gamma_z, point.gamma_r)
            .with_x12(self.rates.gamma_x12)
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions {
            cutoff: self.kernel.cutoff,
            include_lamb: self.kernel.include_lamb,
            epsilon: self.kernel.epsilon,
            boundary: match self.kernel.boundary {
                Boundary::Zero => BoundaryWeight::Zero,
                Boundary::Half => BoundaryWeight::Half,
                Boundary::Full => BoundaryWeight::Full,
            },
        }
    }

    pub fn base_params(&self, n_atoms: usize) -> SystemParams {
        SystemParams { omega_cav: self.system.omega_cav, omega0: 0.0, n_atoms, n_max: self.system.n_max }
    }

    pub fn point_params(&self, point: &SweepPoint) -> SystemParams {
        self.base_params(point.n_atoms).with_omega0(point.omega0)
    }

    pub fn coherence_options(&self) -> CoherenceOptions {
        CoherenceOptions {
            retained: self.numerics.retained,
            dt: self.numerics.dt,
            t_max: self.numerics.t_max,
            fine_samples: self.numerics.fine_samples,
            kernel: self.kernel_options(),
            negativity_limit: self.numerics.negativity_limit,
        }
    }

    pub fn gate_options(&self) -> GateOptions {
        GateOptions {
            retained: self.numerics.retained,
            product_levels: self.numerics.product_levels,
            dimension_ceiling: self.numerics.dimension_ceiling,
            schedule: ScheduleOptions {
                dt: self.numerics.dt,
                recompute_interval: self.numerics.recompute_interval,
                kernel: self.kernel_options(),
                negativity_limit: self.numerics.negativity_limit,
            },
        }
    }

    pub fn initial_states(&self) -> Result<InitialStateGrid> {
        Ok(InitialStateGrid::uniform(self.grid.n_theta, self.grid.n_phi)?)
    }

    pub fn check_n_max(&self) -> usize {
        self.numerics.check_n_max.unwrap_or(2 * self.system.n_max)
    }

    /// The resolved configuration as TOML, for output headers.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

const PRESETS: [(&str, &str); 7] = [
    ("coherence-loss", include_str!("../presets/coherence-loss.toml")),
    ("coherence-alpha", include_str!("../presets/coherence-alpha.toml")),
    ("gate-x", include_str!("../presets/gate-x.toml")),
    ("gate-xx", include_str!("../presets/gate-xx.toml")),
    ("gate-z", include_str!("../presets/gate-z.toml")),
    ("splitting", include_str!("../presets/splitting.toml")),
    ("robustness", include_str!("../presets/robustness.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(name, _)| *name).collect()
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .with_context(|| format!("unknown preset '{name}' (valid: {})", preset_names().join(", ")))
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).context("malformed configuration")?;
    from_table(table)
}

fn from_table(table: toml::Table) -> Result<RunConfig> {
    let config = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| anyhow::anyhow!("invalid configuration: {}", e.message()))?;
    config.validate()?;
    Ok(config)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Set `section.key` (any depth) from a `key=value` string. The value is
/// read as a TOML value, falling back to a plain string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').with_context(|| format!("override '{assignment}' is not key=value"))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut cursor = table;
    for key in parents {
        let entry = cursor.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().with_context(|| format!("override '{path}': '{key}' is not a section"))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// Resolve the configuration from a preset and/or a file (the file wins on
/// conflicts), then overrides, then the experiment chosen on the command
/// line.
pub fn resolve(
    preset: Option<&str>,
    file: Option<&Path>,
    overrides: &[String],
    experiment: Option<Experiment>,
) -> Result<RunConfig> {
    let mut table = toml::Table::new();
    if let Some(name) = preset {
        table = toml::from_str(preset_text(name)?).with_context(|| format!("preset '{name}'"))?;
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let over: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut table, over);
    }
    if preset.is_none() && file.is_none() {
        bail!("no configuration: pass --config PATH or --preset NAME");
    }
    for assignment in overrides {
        apply_override(&mut table, assignment)?;
    }
    if let Some(e) = experiment {
        table.insert("experiment".into(), toml::Value::String(e.name().into()));
    }
    from_table(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherence_loss_preset() {
        let c = parse_config(preset_text("coherence-loss").unwrap()).unwrap();
        assert_eq!(c.experiment, Experiment::CoherenceScan);
        assert_eq!(c.system.n_atoms, vec![1]);
        assert_eq!((c.rates.gamma_x.clone(), c.rates.gamma_y, c.rates.gamma_z), (vec![1e-6], 1e-3, 1e-3));
        assert_eq!(c.rates.gamma_r, vec![1e-6, 1e-7, 0.0]);
    }

    #[test]
    fn gate_xx_preset() {
        let c = parse_config(preset_text("gate-xx").unwrap()).unwrap();
        assert_eq!(c.experiment, Experiment::GateXx);
        assert_eq!(c.system.n_atoms, vec![1]);
        assert_eq!(c.rates.gamma_x12, 1e-6);
    }

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            let c = parse_config(preset_text(name).unwrap()).unwrap();
            assert!(!c.sweep().is_empty(), "{name}");
        }
    }

    #[test]
    fn empty_experiment_lists_valid_ones() {
        let err = parse_config("experiment = \"\"\n[system]\nomega0 = 1.0\n").unwrap_err().to_string();
        for e in Experiment::ALL {
            assert!(err.contains(e.name()), "{err}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(parse_config("experiment = \"spectrum\"\n[system]\nomega0 = 1.0\nomgea = 2\n").is_err());
        assert!(parse_config("experiment = \"spectrum\"\nextra = 1\n[system]\nomega0 = 1.0\n").is_err());
        assert!(parse_config("experiment = \"spectrum\"\n[system]\nomega0 = []\n").is_err());
        assert!(parse_config("experiment = \"spectrum\"\n[system]\nomega0 = 1.0\n[rates]\ngamma_y = -1e-3\n").is_err());
        assert!(parse_config("experiment = \"spectrum\"\n").is_err());
    }

    #[test]
    fn scalar_or_list_sweeps() {
        let c = parse_config("experiment = \"spectrum\"\n[system]\nalpha = [1.0, 2.0]\nn_atoms = [1, 4]\n").unwrap();
        assert_eq!(c.omega0_grid(4), vec![0.5, 1.0]);
        assert_eq!(c.sweep().len(), 4);
    }

    #[test]
    fn overrides_and_experiment_selection() {
        let c = resolve(
            Some("coherence-loss"),
            None,
            &["numerics.retained=8".into(), "rates.gamma_r=[0.0]".into(), "kernel.boundary=full".into()],
            Some(Experiment::Spectrum),
        )
        .unwrap();
        assert_eq!(c.numerics.retained, 8);
        assert_eq!(c.rates.gamma_r, vec![0.0]);
        assert_eq!(c.kernel.boundary, Boundary::Full);
        assert_eq!(c.experiment, Experiment::Spectrum);
        assert!(resolve(Some("coherence-loss"), None, &["numerics.retaned=8".into()], None).is_err());
        assert!(resolve(Some("nope"), None, &[], None).is_err());
        assert!(resolve(None, None, &[], None).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        for name in preset_names() {
            let c = parse_config(preset_text(name).unwrap()).unwrap();
            assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
        }
    }
}
