//! Experiment configuration: JSON documents, named presets, and flag
//! overrides.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use photocount::{LaserParams, ModeEnsemble};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// One fully resolved run. Every artifact embeds this document verbatim,
/// so a run can be reproduced from any of its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub laser: LaserParams,
    pub ensemble: ModeEnsemble,
    #[serde(default = "default_r")]
    pub moment_order_r: u32,
    #[serde(default = "default_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_mu_points")]
    pub mu_grid_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_r() -> u32 {
    1
}
fn default_samples() -> usize {
    1_000_000
}
fn default_bins() -> usize {
    400
}
fn default_mu_points() -> usize {
    500
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

pub const PRESET_NAMES: [&str; 4] = ["fig2a-solid", "fig2a-dashed", "fig2b-solid", "fig2b-dashed"];

/// Built-in Fig. 2 parameter sets: A = 1, B = 0.005, beta M = 1, with
/// kappa = 0.7 (a) or 2.0 (b) and the two mean escape rates per panel.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (kappa, mean_gamma) = match name {
        "fig2a-solid" => (0.7, 0.02),
        "fig2a-dashed" => (0.7, 0.2),
        "fig2b-solid" => (2.0, 0.5),
        "fig2b-dashed" => (2.0, 4.0),
        other => bail!("unknown preset {other:?}; expected one of {PRESET_NAMES:?}"),
    };
    Ok(ExperimentConfig {
        laser: LaserParams::new(1.0, 0.005, kappa, 1.0)?,
        ensemble: ModeEnsemble::new(1, 1, mean_gamma)?,
        moment_order_r: default_r(),
        mc_samples: default_samples(),
        bins: default_bins(),
        mu_grid_points: default_mu_points(),
        seed: 0,
        output_dir: default_out(),
        formats: default_formats(),
    })
}

impl ExperimentConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Re-run the constructor checks that serde deserialization bypasses.
    pub fn validate(&self) -> Result<()> {
        self.laser.validate()?;
        let e = &self.ensemble;
        ModeEnsemble::new(e.beta, e.channels_m, e.mean_gamma)?;
        if self.moment_order_r < 1 {
            bail!("moment_order_r must be >= 1");
        }
        if self.mu_grid_points < 50 {
            bail!("mu_grid_points must be >= 50, got {}", self.mu_grid_points);
        }
        if self.bins < 10 {
            bail!("bins must be >= 10, got {}", self.bins);
        }
        if self.formats.is_empty() {
            bail!("formats must name at least one of csv, json");
        }
        Ok(())
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}
