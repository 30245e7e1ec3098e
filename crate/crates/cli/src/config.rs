//! Experiment configuration: one flat JSON file with per-command sections.
//! Command-line flags override individual fields.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::io::{ScheduleSpec, TrainSpec};
use pips_core::recon::{DcStrategy, ReconConfig};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ImageSpec {
    pub height: usize,
    pub width: usize,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self { height: 64, width: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SimulateSpec {
    pub num_train: usize,
    pub num_pairs: usize,
    pub num_coils: usize,
    pub r_values: Vec<f64>,
    pub center_fraction: f64,
    pub noise_sigma: f64,
    pub complexity: usize,
    pub lesions_per_pair: usize,
    pub lesion_radius: f64,
    pub lesion_delta: f64,
    pub mask_offset: usize,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            num_train: 200,
            num_pairs: 10,
            num_coils: 12,
            r_values: vec![3.0, 6.0, 9.0, 12.0],
            center_fraction: 0.05,
            noise_sigma: 0.002,
            complexity: 6,
            lesions_per_pair: 1,
            lesion_radius: 7.0,
            lesion_delta: 0.4,
            mask_offset: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AeArchSpec {
    pub base_width: usize,
    pub latent_channels: usize,
}

impl Default for AeArchSpec {
    fn default() -> Self {
        Self { base_width: 16, latent_channels: 4 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ScoreArchSpec {
    pub base_width: usize,
    pub latent_channels: usize,
    pub time_embed_dim: usize,
}

impl Default for ScoreArchSpec {
    fn default() -> Self {
        Self { base_width: 32, latent_channels: 4, time_embed_dim: 16 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainAeSpec {
    pub arch: AeArchSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
}

impl Default for TrainAeSpec {
    fn default() -> Self {
        Self {
            arch: AeArchSpec::default(),
            steps: 1200,
            batch_size: 8,
            learning_rate: 3e-3,
            holdout_fraction: 0.05,
        }
    }
}

impl TrainAeSpec {
    pub fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            holdout_fraction: self.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainScoreSpec {
    pub arch: ScoreArchSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
}

impl Default for TrainScoreSpec {
    fn default() -> Self {
        Self {
            arch: ScoreArchSpec::default(),
            steps: 2000,
            batch_size: 8,
            learning_rate: 6e-3,
            holdout_fraction: 0.05,
        }
    }
}

impl TrainScoreSpec {
    pub fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            holdout_fraction: self.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ReconstructSpec {
    pub methods: Vec<String>,
    pub t_p: usize,
    pub n_opt: usize,
    pub dc_learning_rate: f64,
    pub fixed_point_weight: f64,
    pub dc_strategy: String,
    pub cg_lambda: f64,
    pub cg_lambda_p: f64,
    pub cg_max_iters: usize,
    pub cg_tol: f64,
}

impl Default for ReconstructSpec {
    fn default() -> Self {
        Self {
            methods: vec![
                "pips".into(),
                "ldps".into(),
                "cg_prior".into(),
                "zero_filled".into(),
            ],
            t_p: 200,
            n_opt: 10,
            dc_learning_rate: 5e-2,
            fixed_point_weight: 0.0,
            dc_strategy: "gradient".into(),
            cg_lambda: 0.01,
            cg_lambda_p: 0.3,
            cg_max_iters: 200,
            cg_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EvaluateSpec {
    pub patch_size: usize,
    pub ncc_threshold: f64,
}

impl Default for EvaluateSpec {
    fn default() -> Self {
        Self { patch_size: 32, ncc_threshold: 0.95 }
    }
}

/// The whole experiment: dataset, models, reconstruction sweep, evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub image: ImageSpec,
    pub simulate: SimulateSpec,
    pub schedule: ScheduleSpec,
    pub train_ae: TrainAeSpec,
    pub train_score: TrainScoreSpec,
    pub reconstruct: ReconstructSpec,
    pub evaluate: EvaluateSpec,
}

pub const KNOWN_METHODS: [&str; 4] = ["pips", "ldps", "cg_prior", "zero_filled"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    /// Field-named validation of everything the pipeline relies on.
    pub fn validate(&self) -> Result<()> {
        if self.out_dir.as_os_str().is_empty() {
            bail!("out_dir: must not be empty");
        }
        let img = &self.image;
        if img.height < 32 || img.width < 32 || img.height % 4 != 0 || img.width % 4 != 0 {
            bail!("image: dims {}x{} must be >= 32 and divisible by 4", img.height, img.width);
        }
        let s = &self.simulate;
        if s.r_values.is_empty() {
            bail!("simulate.r_values: must not be empty");
        }
        if s.r_values.iter().any(|&r| r < 1.0) {
            bail!("simulate.r_values: all values must be >= 1");
        }
        if !(0.0..=1.0).contains(&s.center_fraction) {
            bail!("simulate.center_fraction: {} outside [0, 1]", s.center_fraction);
        }
        if s.noise_sigma < 0.0 {
            bail!("simulate.noise_sigma: must be >= 0");
        }
        if s.num_coils == 0 {
            bail!("simulate.num_coils: must be >= 1");
        }
        if self.schedule.steps == 0 {
            bail!("schedule.steps: must be >= 1");
        }
        if self.reconstruct.t_p > self.schedule.steps {
            bail!(
                "reconstruct.t_p: {} exceeds schedule.steps {}",
                self.reconstruct.t_p,
                self.schedule.steps
            );
        }
        for m in &self.reconstruct.methods {
            if !KNOWN_METHODS.contains(&m.as_str()) {
                bail!("reconstruct.methods: unknown method {m:?}");
            }
        }
        dc_strategy_from_name(&self.reconstruct.dc_strategy)?;
        if self.evaluate.patch_size == 0
            || img.height % self.evaluate.patch_size != 0
            || img.width % self.evaluate.patch_size != 0
        {
            bail!(
                "evaluate.patch_size: {} does not tile {}x{}",
                self.evaluate.patch_size,
                img.height,
                img.width
            );
        }
        Ok(())
    }

    pub fn recon_config(&self, rng_seed: u64) -> Result<ReconConfig> {
        Ok(ReconConfig {
            t_p: self.reconstruct.t_p,
            n_opt: self.reconstruct.n_opt,
            dc_learning_rate: self.reconstruct.dc_learning_rate,
            fixed_point_weight: self.reconstruct.fixed_point_weight,
            rng_seed,
            dc_strategy: dc_strategy_from_name(&self.reconstruct.dc_strategy)?,
        })
    }
}

pub fn dc_strategy_from_name(name: &str) -> Result<DcStrategy> {
    match name {
        "gradient" => Ok(DcStrategy::Gradient),
        "hard_resample" => Ok(DcStrategy::HardResample),
        other => bail!("reconstruct.dc_strategy: unknown strategy {other:?}"),
    }
}
