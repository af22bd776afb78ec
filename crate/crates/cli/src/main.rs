use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use doublet_cli::{preset_names, resolve, run, Experiment};

#[derive(Parser)]
#[command(name = "doublet", version, about = "Vacuum-doublet qubit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Doublet splitting δ(Ω₀) with a cutoff-doubling check
    Spectrum(RunArgs),
    /// Per-state coherence times
    Coherence(RunArgs),
    /// Mean coherence time over the Ω₀ grid and its peak
    CoherenceScan(RunArgs),
    /// Single-qubit X rotation
    GateX(RunArgs),
    /// Single-qubit Z rotation by modulating Ω₀
    GateZ(RunArgs),
    /// Two-resonator XX rotation
    GateXx(RunArgs),
    /// Static perturbations projected on the doublet
    Robustness(RunArgs),
    /// List the bundled presets
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Bundled preset (see `doublet presets`)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory for CSV files
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Set a configuration value, e.g. numerics.retained=16
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Coherence(a) => (Experiment::Coherence, a),
        Command::CoherenceScan(a) => (Experiment::CoherenceScan, a),
        Command::GateX(a) => (Experiment::GateX, a),
        Command::GateZ(a) => (Experiment::GateZ, a),
        Command::GateXx(a) => (Experiment::GateXx, a),
        Command::Robustness(a) => (Experiment::Robustness, a),
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let result = resolve(args.preset.as_deref(), args.config.as_deref(), &args.overrides, Some(experiment))
        .and_then(|config| run(&config, &args.out, args.threads));
    match result {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("{}", file.display());
            }
            if outcome.censored {
                eprintln!("warning: some coherence times are censored at t_max");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
