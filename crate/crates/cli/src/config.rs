//! Experiment configuration: one strict JSON document shared by every
//! subcommand, validated before any work starts. The hash of the
//! effective config (after command-line overrides) is stamped into all
//! artifacts so downstream commands can verify provenance.

use std::fs;
use std::path::{Path, PathBuf};

use lpntk_core::analysis::RelationshipConfig;
use lpntk_core::data::{synth_generate, LabeledDataset, SyntheticSpec};
use lpntk_core::kernel::KernelKind;
use lpntk_core::model::{Activation, NetworkSpec, TrainConfig};
use lpntk_core::rl::{RlConfig, Strategy};
use serde::{Deserialize, Serialize};

use crate::formats::sha256_bytes;
use crate::{idx, CliError, CliResult};

pub const DEFAULT_CACHE_BYTES: u64 = 1 << 30;
pub const CACHE_ENV: &str = "LPNTK_CACHE_BYTES";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub rl: RlSection,
    pub out_dir: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// "synthetic" or "idx".
    pub source: String,
    pub classes: Option<usize>,
    pub n_per_class: Option<usize>,
    pub dim: Option<usize>,
    pub cluster_std: Option<f64>,
    pub duplicate_rate: Option<f64>,
    pub flip_rate: Option<f64>,
    /// Image/label paths for the idx source.
    pub images: Option<String>,
    pub labels: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub layer_widths: Vec<usize>,
    #[serde(default = "d_activation")]
    pub activation: String,
    #[serde(default = "d_true")]
    pub bias: bool,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_true")]
    pub shuffle: bool,
    /// Snapshot parameters after every update; needed by `forget`.
    #[serde(default)]
    pub record_iterations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "d_kind")]
    pub kind: String,
    /// Jacobian cache budget; the environment variable wins over this.
    #[serde(default)]
    pub cache_bytes: Option<u64>,
}

impl Default for KernelSection {
    fn default() -> KernelSection {
        KernelSection {
            kind: d_kind(),
            cache_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Cluster count; defaults to a tenth of the sample count.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "d_frac")]
    pub frac: f64,
    #[serde(default = "d_t_pos")]
    pub t_pos: f64,
    #[serde(default = "d_t_neg")]
    pub t_neg: f64,
    #[serde(default = "d_zero_band")]
    pub zero_band: f64,
}

impl Default for AnalysisSection {
    fn default() -> AnalysisSection {
        AnalysisSection {
            m: None,
            frac: d_frac(),
            t_pos: d_t_pos(),
            t_neg: d_t_neg(),
            zero_band: d_zero_band(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSection {
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_rl_lr")]
    pub lr: f64,
    #[serde(default = "d_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "d_rl_batch")]
    pub batch_size: usize,
    #[serde(default = "d_total_steps")]
    pub total_steps: usize,
    #[serde(default = "d_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "d_strategy")]
    pub strategy: String,
}

impl Default for RlSection {
    fn default() -> RlSection {
        RlSection {
            gamma: d_gamma(),
            epsilon: d_epsilon(),
            lr: d_rl_lr(),
            buffer_capacity: d_capacity(),
            batch_size: d_rl_batch(),
            total_steps: d_total_steps(),
            eval_episodes: d_eval_episodes(),
            strategy: d_strategy(),
        }
    }
}

fn d_true() -> bool {
    true
}
fn d_activation() -> String {
    "relu".to_owned()
}
fn d_lr() -> f64 {
    0.1
}
fn d_batch() -> usize {
    32
}
fn d_epochs() -> usize {
    10
}
fn d_kind() -> String {
    "lpntk".to_owned()
}
fn d_frac() -> f64 {
    0.1
}
fn d_t_pos() -> f64 {
    0.6
}
fn d_t_neg() -> f64 {
    -0.6
}
fn d_zero_band() -> f64 {
    0.05
}
fn d_gamma() -> f64 {
    0.95
}
fn d_epsilon() -> f64 {
    0.2
}
fn d_rl_lr() -> f64 {
    0.05
}
fn d_capacity() -> usize {
    2000
}
fn d_rl_batch() -> usize {
    16
}
fn d_total_steps() -> usize {
    4000
}
fn d_eval_episodes() -> usize {
    3
}
fn d_strategy() -> String {
    "eps_greedy".to_owned()
}

pub fn parse_kind(s: &str) -> CliResult<KernelKind> {
    match s {
        "pntk" => Ok(KernelKind::Pntk),
        "lpntk" => Ok(KernelKind::Lpntk),
        "lpntk_variant" => Ok(KernelKind::LpntkVariant),
        other => Err(CliError::config(format!(
            "unknown kernel kind {other:?}; use pntk, lpntk or lpntk_variant"
        ))),
    }
}

fn parse_activation(s: &str) -> CliResult<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(CliError::config(format!(
            "unknown activation {other:?}; use relu or tanh"
        ))),
    }
}

fn parse_strategy(s: &str) -> CliResult<Strategy> {
    match s {
        "eps_greedy" => Ok(Strategy::EpsGreedy),
        "lpntk_max" => Ok(Strategy::LpntkMax),
        other => Err(CliError::config(format!(
            "unknown strategy {other:?}; use eps_greedy or lpntk_max"
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| CliError::config(format!("config does not match the schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    /// Command-line flags take precedence over the file contents; the
    /// config hash is computed after this step.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<&Path>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o.to_string_lossy().into_owned();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        match self.dataset.source.as_str() {
            "synthetic" => {
                self.synthetic_spec()?;
            }
            "idx" => {
                if self.dataset.images.is_none() || self.dataset.labels.is_none() {
                    return Err(CliError::config(
                        "idx datasets need both images and labels paths",
                    ));
                }
            }
            other => {
                return Err(CliError::config(format!(
                    "unknown dataset source {other:?}; use synthetic or idx"
                )));
            }
        }
        self.network_spec()?;
        if !(self.model.lr.is_finite() && self.model.lr > 0.0) {
            return Err(CliError::config("model.lr must be positive"));
        }
        if self.model.batch_size == 0 || self.model.epochs == 0 {
            return Err(CliError::config(
                "model.batch_size and model.epochs must be positive",
            ));
        }
        parse_kind(&self.kernel.kind)?;
        self.relationship_config()?;
        if !(0.0..=1.0).contains(&self.analysis.frac) {
            return Err(CliError::config("analysis.frac must lie in [0, 1]"));
        }
        self.rl_config(None)?;
        if self.out_dir.is_empty() {
            return Err(CliError::config("out_dir must not be empty"));
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> CliResult<SyntheticSpec> {
        let d = &self.dataset;
        let base = SyntheticSpec::default();
        let spec = SyntheticSpec {
            classes: d.classes.unwrap_or(base.classes),
            n_per_class: d.n_per_class.unwrap_or(base.n_per_class),
            dim: d.dim.unwrap_or(base.dim),
            cluster_std: d.cluster_std.unwrap_or(base.cluster_std),
            duplicate_rate: d.duplicate_rate.unwrap_or(base.duplicate_rate),
            flip_rate: d.flip_rate.unwrap_or(base.flip_rate),
            seed: self.seed,
        };
        if spec.classes < 2 || spec.n_per_class == 0 || spec.dim == 0 {
            return Err(CliError::config(
                "synthetic dataset needs classes >= 2, n_per_class >= 1, dim >= 1",
            ));
        }
        for (name, v) in [
            ("cluster_std", spec.cluster_std),
            ("duplicate_rate", spec.duplicate_rate),
            ("flip_rate", spec.flip_rate),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CliError::config(format!("dataset.{name} must be >= 0")));
            }
        }
        Ok(spec)
    }

    pub fn build_dataset(&self) -> CliResult<LabeledDataset> {
        match self.dataset.source.as_str() {
            "synthetic" => {
                let spec = self.synthetic_spec()?;
                synth_generate(&spec).map_err(|e| CliError::config(e.to_string()))
            }
            "idx" => {
                let images = self.dataset.images.as_ref().ok_or_else(|| {
                    CliError::config("idx datasets need an images path")
                })?;
                let labels = self.dataset.labels.as_ref().ok_or_else(|| {
                    CliError::config("idx datasets need a labels path")
                })?;
                idx::load_idx(Path::new(images), Path::new(labels))
            }
            other => Err(CliError::config(format!("unknown dataset source {other:?}"))),
        }
    }

    pub fn network_spec(&self) -> CliResult<NetworkSpec> {
        let activation = parse_activation(&self.model.activation)?;
        NetworkSpec::new(self.model.layer_widths.clone(), activation, self.model.bias)
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.model.lr,
            batch_size: self.model.batch_size,
            epochs: self.model.epochs,
            seed: self.seed,
            shuffle: self.model.shuffle,
            record_iteration_params: self.model.record_iterations,
        }
    }

    pub fn kernel_kind(&self) -> CliResult<KernelKind> {
        parse_kind(&self.kernel.kind)
    }

    pub fn relationship_config(&self) -> CliResult<RelationshipConfig> {
        let cfg = RelationshipConfig {
            t_pos: self.analysis.t_pos,
            t_neg: self.analysis.t_neg,
            zero_band: self.analysis.zero_band,
        };
        // the core validates thresholds on use; probe once so bad values
        // surface as config errors before any work
        lpntk_core::analysis::classify_relationship(&[1.0], &[1.0], &cfg)
            .map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    /// Cluster count for a kernel of `n` samples: the configured value,
    /// or a tenth of the samples (at least one).
    pub fn cluster_count(&self, n: usize) -> usize {
        self.analysis.m.unwrap_or_else(|| (n / 10).max(1)).min(n)
    }

    pub fn rl_config(&self, strategy: Option<Strategy>) -> CliResult<RlConfig> {
        let r = &self.rl;
        let cfg = RlConfig {
            gamma: r.gamma,
            epsilon: r.epsilon,
            lr: r.lr,
            buffer_capacity: r.buffer_capacity,
            batch_size: r.batch_size,
            total_steps: r.total_steps,
            eval_episodes: r.eval_episodes,
            seed: self.seed,
            strategy: match strategy {
                Some(s) => s,
                None => parse_strategy(&r.strategy)?,
            },
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    /// Jacobian cache budget in bytes; the environment variable beats the
    /// config value, which beats the 1 GiB default.
    pub fn cache_bytes(&self) -> CliResult<u64> {
        if let Ok(raw) = std::env::var(CACHE_ENV) {
            return raw.trim().parse::<u64>().map_err(|_| {
                CliError::config(format!("{CACHE_ENV} must be an integer, got {raw:?}"))
            });
        }
        Ok(self.kernel.cache_bytes.unwrap_or(DEFAULT_CACHE_BYTES))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }

    /// Hash of the effective config; stamped into every artifact.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(sha256_bytes(text.as_bytes()))
    }
}
