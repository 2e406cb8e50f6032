//! End-to-end runs: dataset files, training, evaluation and heatmap export.
//!
//! Everything here is a pure function of a [`RunConfig`]; running the same
//! config twice produces byte-identical files.

mod dataset;
mod run;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{DEFAULT_IOU_THRESHOLD, DEFAULT_RARE_THRESHOLD};
use crate::inference::{InferenceConfig, DEFAULT_TOP_K};
use crate::loss::LossConfig;
use crate::model::ModelConfig;
use crate::supervision::{MaskMode, SupervisionConfig, WoPlacement, DEFAULT_CENTER_RATIO, DEFAULT_LAMBDA_S};
use crate::synth::SynthConfig;

pub use dataset::{generate_split, read_dataset, write_dataset, Dataset, DatasetScene, Split};
pub use run::{
    evaluate_model, export_heatmaps, predict_dataset, run_heatmaps, EvalOutcome, Heatmap, ScenePredictions,
};
pub use train::{arranged_examples, epoch_examples, train, EpochStats, TrainOutcome};

pub const CONFIG_SNAPSHOT: &str = "config.resolved.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_LOG: &str = "loss_log.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const PREDICTIONS_JSON: &str = "predictions.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train_scenes: usize,
    pub test_scenes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_scenes: 200,
            test_scenes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Negatives kept per positive actor example.
    pub balance_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-3,
            seed: 0,
            balance_ratio: 1.0,
        }
    }
}

/// Whether the actor branch is trained and whether it scores triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorBranch {
    /// Trained and used at inference.
    #[default]
    Fused,
    /// Trained, but triplets are scored by the object branch alone.
    TrainOnly,
    /// Neither trained nor used.
    Off,
}

impl ActorBranch {
    pub fn trained(&self) -> bool {
        !matches!(self, ActorBranch::Off)
    }

    pub fn used_at_inference(&self) -> bool {
        matches!(self, ActorBranch::Fused)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub mask_mode: MaskMode,
    pub actor_branch: ActorBranch,
    pub wo_channel: WoPlacement,
    pub hanning: bool,
    pub scale_weight: bool,
    pub center_ratio: f64,
    pub lambda_s: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            mask_mode: MaskMode::Rgbm,
            actor_branch: ActorBranch::Fused,
            wo_channel: WoPlacement::Object,
            hanning: true,
            scale_weight: true,
            center_ratio: DEFAULT_CENTER_RATIO,
            lambda_s: DEFAULT_LAMBDA_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub top_k: Option<usize>,
    pub iou_threshold: f64,
    pub known_object: bool,
    pub rare_threshold: usize,
    /// Detector stub overrides for evaluation; `None` keeps the synth value.
    pub jitter: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            top_k: Some(DEFAULT_TOP_K),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            known_object: false,
            rare_threshold: DEFAULT_RARE_THRESHOLD,
            jitter: None,
            false_positive_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    pub eval: EvalSettings,
}


impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Sets the synth, model-init and training seeds together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Fills fields implied by others and validates the result: model input
    /// size and channel count follow the images and mask mode, the head width
    /// follows the verb count, and an untrained actor branch gets zero loss
    /// weight.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mut cfg = self.clone();
        cfg.model.input_width = cfg.synth.image_width;
        cfg.model.input_height = cfg.synth.image_height;
        cfg.model.input_channels = cfg.ablation.mask_mode.channels();
        cfg.model.num_verbs = cfg.synth.num_verbs;
        if !cfg.ablation.actor_branch.trained() {
            cfg.loss.lambda_actor = 0.0;
        }
        cfg.synth.validate()?;
        cfg.model.validate()?;
        cfg.loss.validate()?;
        if cfg.train.lr <= 0.0 || cfg.train.balance_ratio < 0.0 {
            return Err(Error::InvalidConfig("train.lr must be > 0 and balance_ratio >= 0".into()));
        }
        if !(0.0..1.0).contains(&cfg.ablation.center_ratio) || cfg.ablation.center_ratio == 0.0 {
            return Err(Error::InvalidConfig("center_ratio must be in (0, 1)".into()));
        }
        if cfg.eval.top_k == Some(0) {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn supervision(&self) -> SupervisionConfig {
        SupervisionConfig {
            num_verbs: self.synth.num_verbs,
            center_ratio: self.ablation.center_ratio,
            lambda_s: self.ablation.lambda_s,
            hanning: self.ablation.hanning,
            scale_weight: self.ablation.scale_weight,
            wo_channel: self.ablation.wo_channel,
        }
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            top_k: self.eval.top_k,
            mask_mode: self.ablation.mask_mode,
            use_actor_branch: self.ablation.actor_branch.used_at_inference(),
        }
    }

    /// Detector settings used at evaluation time.
    pub fn eval_detector(&self) -> SynthConfig {
        let mut s = self.synth.clone();
        if let Some(j) = self.eval.jitter {
            s.jitter = j;
        }
        if let Some(f) = self.eval.false_positive_rate {
            s.false_positive_rate = f;
        }
        s
    }

    /// Writes the pretty-printed config to `dir/config.resolved.json`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(CONFIG_SNAPSHOT), self)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
