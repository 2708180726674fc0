use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lindblad_forge::cli::{
    cmd_build, cmd_compare, cmd_ensemble, cmd_run, cmd_spectra, override_scenario_seed,
    override_system_seed, thread_override,
};
use lindblad_forge::config::{BuildConfig, ScenarioConfig, SpectraConfig};
use lindblad_forge::ensemble::EnsembleConfig;
use lindblad_forge::error::Result;

#[derive(Parser)]
#[command(name = "lindblad-forge", version, about = "Structured-environment master equations: build, propagate, benchmark")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate trajectories for every configured method
    Run(CommonArgs),
    /// Run methods against the exact benchmark; write deviations and lifetimes
    Compare(CommonArgs),
    /// Random-ensemble statistics: deviations, Kossakowski spectra
    Ensemble(CommonArgs),
    /// Tabulate spectral density and Lamb-shift kernels on a frequency grid
    Spectra(CommonArgs),
    /// Export assembled master equations as JSON
    Build(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files (created if missing)
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: LINDBLAD_FORGE_THREADS, then all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Replace the RNG seed of every generated-system section
    #[arg(long)]
    seed: Option<u64>,
}

fn load<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn dispatch(cmd: &Cmd) -> Result<Vec<PathBuf>> {
    let common = match cmd {
        Cmd::Run(a) | Cmd::Compare(a) | Cmd::Ensemble(a) | Cmd::Spectra(a) | Cmd::Build(a) => a,
    };
    if let Some(n) = thread_override(common.threads)? {
        // Ignore the error from a second initialization (tests call this
        // binary repeatedly within one process only via subprocesses, so
        // in practice this runs once).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cmd {
        Cmd::Run(a) => {
            let mut cfg: ScenarioConfig = load(&a.config)?;
            if let Some(seed) = a.seed {
                override_scenario_seed(&mut cfg, seed);
            }
            cmd_run(&cfg, &a.out_dir)
        }
        Cmd::Compare(a) => {
            let mut cfg: ScenarioConfig = load(&a.config)?;
            if let Some(seed) = a.seed {
                override_scenario_seed(&mut cfg, seed);
            }
            cmd_compare(&cfg, &a.out_dir)
        }
        Cmd::Ensemble(a) => {
            let mut cfg: EnsembleConfig = load(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            cmd_ensemble(&cfg, &a.out_dir)
        }
        Cmd::Spectra(a) => {
            let mut cfg: SpectraConfig = load(&a.config)?;
            if let (Some(seed), Some(system)) = (a.seed, cfg.system.as_mut()) {
                override_system_seed(system, seed);
            }
            cmd_spectra(&cfg, &a.out_dir)
        }
        Cmd::Build(a) => {
            let mut cfg: BuildConfig = load(&a.config)?;
            if let Some(seed) = a.seed {
                override_system_seed(&mut cfg.system, seed);
            }
            cmd_build(&cfg, &a.out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.cmd) {
        Ok(paths) => {
            for p in &paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
