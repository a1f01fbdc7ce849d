//! `photocount`: photocount statistics of single-mode chaotic lasers.
//!
//! Worker count: the compute pool honors `RAYON_NUM_THREADS`.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format};

#[derive(Parser)]
#[command(
    name = "photocount",
    about = "Photocount statistics of single-mode chaotic lasers",
    after_help = "Set RAYON_NUM_THREADS to override the worker count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON); flags override individual fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in parameter set: fig2a-solid, fig2a-dashed, fig2b-solid, fig2b-dashed.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// RNG seed recorded in every artifact.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Monte Carlo sample count.
    #[arg(long, global = true, value_name = "N")]
    samples: Option<usize>,

    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Output formats; repeat for both (default: csv and json).
    #[arg(long, global = true, value_enum)]
    format: Vec<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary photon distribution P_n with summary statistics.
    Pn,
    /// Response curve mu_r(Gamma) with branch and peak annotations.
    Response,
    /// Ensemble density of mu_r: deterministic, Monte Carlo, and fits.
    Density,
    /// All four Fig. 2 presets plus both insets and a manifest.
    Fig2,
    /// Draw escape rates from the chi-squared ensemble.
    SampleGamma,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::from_json_file(path)?,
        (None, Some(name)) => config::preset(name)?,
        (None, None) => config::preset("fig2a-solid")?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = cli.samples {
        cfg.mc_samples = samples;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if !cli.format.is_empty() {
        cfg.formats = cli.format.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = resolve(&cli).and_then(|cfg| match cli.command {
        Command::Pn => run::cmd_pn(&cfg),
        Command::Response => run::cmd_response(&cfg),
        Command::Density => run::cmd_density(&cfg),
        Command::Fig2 => run::cmd_fig2(&cfg),
        Command::SampleGamma => run::cmd_sample_gamma(&cfg),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("photocount: one or more checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("photocount: {e:#}");
            ExitCode::FAILURE
        }
    }
}
