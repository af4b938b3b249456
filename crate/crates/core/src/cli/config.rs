//! JSON run configuration. One file drives every subcommand; unknown keys
//! are rejected and errors name the offending key path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annosim::SimConfig;
use crate::error::{Error, Result};
use crate::eval::AurocSupport;
use crate::mixup::MixupConfig;
use crate::training::{Method, ModelConfig, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub mixup: MixupConfig,
    #[serde(default)]
    pub models: ModelConfig,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub benchmark: Option<BenchmarkSection>,
}

/// Dataset locations. Paths are resolved against the config file's
/// directory. Either file paths or `synthetic` supply the train/val/test
/// sets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_features: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub val_features: Option<PathBuf>,
    pub val_labels: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Every annotator's label for every test instance.
    pub test_annotation_table: Option<PathBuf>,
    /// Sparse (masked) test annotations.
    pub test_annotations: Option<PathBuf>,
    pub num_classes: Option<usize>,
    pub num_annotators: Option<usize>,
    pub synthetic: Option<SyntheticConfig>,
}

/// Gaussian blobs generated from the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub n_train: usize,
    #[serde(default)]
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_radius() -> f64 {
    3.0
}

fn default_spread() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
}

mod defaults {
    use crate::training::TrainConfig;

    pub fn epochs() -> usize {
        TrainConfig::default().epochs
    }

    pub fn batch_size() -> usize {
        TrainConfig::default().batch_size
    }

    pub fn learning_rate() -> f64 {
        TrainConfig::default().learning_rate
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            seed: t.seed,
            method: t.method,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub perf_auroc_support: AurocSupport,
    /// Checkpoint scored by `evaluate`.
    pub checkpoint: Option<PathBuf>,
    /// Training logs merged into `curves.csv` by `evaluate`.
    #[serde(default)]
    pub curves: Vec<CurveSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSource {
    pub variant: String,
    pub metrics: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub variants: Vec<Variant>,
    /// Seeds `train.seed, train.seed + 1, …`.
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
}

fn default_num_seeds() -> usize {
    1
}

/// One benchmark row: a method plus optional mixing override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub method: Method,
    #[serde(default)]
    pub mixup: Option<MixupConfig>,
}

impl Config {
    /// Parses JSON text; errors carry the key path of the first problem.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::Config {
                key,
                message: e.into_inner().to_string(),
            }
        })
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [
            &mut d.train_features,
            &mut d.train_labels,
            &mut d.annotations,
            &mut d.val_features,
            &mut d.val_labels,
            &mut d.test_features,
            &mut d.test_labels,
            &mut d.test_annotation_table,
            &mut d.test_annotations,
            &mut self.eval.checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for c in &mut self.eval.curves {
            if c.metrics.is_relative() {
                c.metrics = base.join(&c.metrics);
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    /// Trainer settings for `method` and `mixup` at `seed`.
    pub fn train_config(&self, method: Method, mixup: MixupConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            weight_decay: self.train.weight_decay,
            seed,
            method,
            mixup,
            models: self.models.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_uses_defaults() {
        let cfg = Config::from_json("{}").unwrap();
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.mixup.alpha, 1.0);
        assert_eq!(cfg.models.classifier_hidden, vec![128, 128]);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::from_json(r#"{"train": {"epoch": 3}}"#).unwrap_err();
        match err {
            Error::Config { key, message } => {
                assert_eq!(key, "train.epoch");
                assert!(message.contains("epoch"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_is_named() {
        let err = Config::from_json(r#"{"mixup": {"alpha": "big"}}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref key, .. } if key == "mixup.alpha"),
            "{err:?}"
        );
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg =
            Config::from_json(r#"{"data": {"train_features": "x.csv", "test_features": "/abs/t.csv"}}"#).unwrap();
        cfg.resolve_paths(Path::new("/runs/a"));
        assert_eq!(cfg.data.train_features.unwrap(), PathBuf::from("/runs/a/x.csv"));
        assert_eq!(cfg.data.test_features.unwrap(), PathBuf::from("/abs/t.csv"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::from_json("{}").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
