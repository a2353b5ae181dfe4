//! Experiment configuration, read from JSON. Every field has a default, so
//! `{}` is a valid config describing the standard instance.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sos_subspace::rounding::Scheme;
use sos_subspace::sample::InstanceConfig;
use sos_subspace::sos::ConstraintOptions;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundingConfig {
    pub scheme: Scheme,
    pub t: usize,
    /// `None` picks the scheme's default draw count.
    pub draws: Option<usize>,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Votes,
            t: 1,
            draws: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub relaxation_degree: usize,
    /// `None` uses the desk preset.
    pub constraints: Option<ConstraintOptions>,
    pub rounding: RoundingConfig,
    pub seeds: Vec<u64>,
    /// Inlier fractions swept by `bench`.
    pub alphas: Vec<f64>,
    pub time_budget_secs: f64,
    /// Artifact directory; `--out` takes precedence.
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceConfig::standard(1),
            relaxation_degree: 4,
            constraints: None,
            rounding: RoundingConfig::default(),
            seeds: vec![1, 2, 3],
            alphas: vec![0.3, 0.4, 0.5],
            time_budget_secs: 300.0,
            output_path: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn constraint_options(&self) -> ConstraintOptions {
        let mut opts = self.constraints.clone().unwrap_or_else(ConstraintOptions::desk);
        opts.degree = self.relaxation_degree;
        opts
    }

    /// Rejects combinations that some stage would refuse later.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.instance.validate()?;
        let l = self.relaxation_degree;
        if l == 0 || l % 2 == 1 {
            bail!("relaxation_degree must be even and positive, got {l}");
        }
        let t = self.rounding.t;
        match self.rounding.scheme {
            Scheme::Votes if l < 4 => bail!("votes rounding needs relaxation_degree >= 4"),
            Scheme::LargeList if t == 0 => bail!("large-list rounding needs t >= 1"),
            Scheme::LargeList if l < 2 * t + 2 => {
                bail!("large-list rounding with t = {t} needs relaxation_degree >= {}", 2 * t + 2)
            }
            Scheme::Oracle | Scheme::Baseline => {
                bail!("rounding scheme must be votes or large-list")
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            bail!("alpha {a} outside (0, 1]");
        }
        if !(self.time_budget_secs > 0.0) {
            bail!("time_budget_secs must be positive");
        }
        Ok(())
    }
}
