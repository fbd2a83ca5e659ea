//! Run configuration, mirrored one-to-one by the JSON config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use faithbench_core::attribution::AttributionConfig;
use faithbench_core::metrics::{MetricConfig, ScoreMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub model: ModelSource,
    pub methods: Vec<String>,
    pub baselines: Vec<String>,
    /// JSON tensor with a precomputed featviz baseline; when absent and the
    /// baseline list names `featviz`, the image is optimized during the run.
    #[serde(default)]
    pub featviz_image: Option<PathBuf>,
    #[serde(default)]
    pub metric: MetricSettings,
    pub image_count: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Training-feature subsample used for the 1-NN OOD index.
    #[serde(default = "default_index_size")]
    pub ood_index_size: usize,
    #[serde(default)]
    pub attribution: AttributionSettings,
    /// Dump PGM perturbation chains for the first image.
    #[serde(default)]
    pub dump_chains: bool,
}

fn default_index_size() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    /// Path to a model JSON file.
    Path(PathBuf),
    /// Train on the configured training set before evaluating.
    Train(TrainSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSpec {
    pub hidden: Vec<usize>,
    pub classes: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub l2_penalty: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    3
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSettings {
    /// "softmax" or "logit".
    pub score_mode: String,
    /// Replacement steps; omitted means exact per-feature mode.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "yes")]
    pub record_energy: bool,
    #[serde(default = "yes")]
    pub record_ood: bool,
}

fn yes() -> bool {
    true
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            score_mode: "softmax".into(),
            steps: Some(100),
            record_energy: true,
            record_ood: true,
        }
    }
}

impl MetricSettings {
    pub fn to_metric_config(&self) -> anyhow::Result<MetricConfig> {
        let score_mode = match self.score_mode.as_str() {
            "softmax" => ScoreMode::Softmax,
            "logit" => ScoreMode::Logit,
            other => bail!("unknown score mode '{other}' (use \"softmax\" or \"logit\")"),
        };
        Ok(MetricConfig {
            score_mode,
            steps: self.steps,
            record_energy: self.record_energy,
            record_ood: self.record_ood,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionSettings {
    #[serde(default = "default_sigma")]
    pub smoothgrad_sigma: f64,
    #[serde(default = "default_sg_samples")]
    pub smoothgrad_samples: usize,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default = "default_patch")]
    pub occlusion_patch: usize,
    #[serde(default)]
    pub occlusion_fill: f64,
    #[serde(default = "default_q")]
    pub rise_probability: f64,
    #[serde(default = "default_masks")]
    pub rise_masks: usize,
    #[serde(default)]
    pub absolute_values: bool,
}

fn default_sigma() -> f64 {
    0.1
}
fn default_sg_samples() -> usize {
    64
}
fn default_ig_steps() -> usize {
    32
}
fn default_patch() -> usize {
    2
}
fn default_q() -> f64 {
    0.5
}
fn default_masks() -> usize {
    2000
}

impl Default for AttributionSettings {
    fn default() -> Self {
        Self {
            smoothgrad_sigma: default_sigma(),
            smoothgrad_samples: default_sg_samples(),
            ig_steps: default_ig_steps(),
            occlusion_patch: default_patch(),
            occlusion_fill: 0.0,
            rise_probability: default_q(),
            rise_masks: default_masks(),
            absolute_values: false,
        }
    }
}

impl AttributionSettings {
    /// Attribution config for one image; the per-image seed feeds the
    /// per-method sample streams.
    pub fn to_attribution_config(&self, seed: u64) -> AttributionConfig {
        AttributionConfig {
            smoothgrad_sigma: self.smoothgrad_sigma,
            smoothgrad_samples: self.smoothgrad_samples,
            ig_steps: self.ig_steps,
            occlusion_patch: self.occlusion_patch,
            occlusion_fill: self.occlusion_fill,
            rise_probability: self.rise_probability,
            rise_masks: self.rise_masks,
            seed,
            absolute_values: self.absolute_values,
            ..AttributionConfig::default()
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.methods.is_empty() {
            bail!("config needs at least one attribution method");
        }
        if self.baselines.is_empty() {
            bail!("config needs at least one baseline");
        }
        if self.image_count == 0 {
            bail!("image_count must be >= 1");
        }
        if self.ood_index_size == 0 {
            bail!("ood_index_size must be >= 1");
        }
        Ok(())
    }
}
