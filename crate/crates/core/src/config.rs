//! Run configuration: one TOML file covering model, training and paths,
//! with CLI flags layered on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capsule::{ModelConfig, ModelError, ModelMode, Variant};
use crate::encoder::EncoderConfig;
use crate::training::{TrainConfig, UniquenessReduction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // data
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub contextual_vectors: Option<PathBuf>,
    pub out_dir: PathBuf,

    // model
    pub d_e: usize,
    pub d_l: usize,
    pub layers: usize,
    pub word_dropout: f64,
    pub predicate_flag: bool,
    pub capsule_k: usize,
    pub variant: Variant,
    pub iterations: usize,
    /// "f64" or "f32".
    pub precision: String,

    // training
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub eta: f64,
    pub uniqueness_reduction: UniquenessReduction,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global-norm gradient clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            dev: None,
            embeddings: None,
            contextual_vectors: None,
            out_dir: PathBuf::from("out"),
            d_e: 300,
            d_l: 500,
            layers: 2,
            word_dropout: 0.0,
            predicate_flag: false,
            capsule_k: 16,
            variant: Variant::CapsuleGlobal,
            iterations: 2,
            precision: "f64".to_string(),
            learning_rate: 0.0001,
            batch_size: 32,
            l2: 0.0004,
            eta: 0.0,
            uniqueness_reduction: UniquenessReduction::Max,
            max_epochs: 200,
            patience: 20,
            seed: 1,
            clip_norm: 5.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                d_e: self.d_e,
                d_l: self.d_l,
                layers: self.layers,
                word_dropout: self.word_dropout,
                predicate_flag: self.predicate_flag,
            },
            capsule_k: self.capsule_k,
            mode: ModelMode {
                variant: self.variant,
                iterations: self.iterations,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            l2: self.l2,
            eta: self.eta,
            uniqueness_reduction: self.uniqueness_reduction,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            clip_norm: if self.clip_norm > 0.0 {
                Some(self.clip_norm)
            } else {
                None
            },
            stop_token_accuracy: None,
            stop_exact_match: None,
        }
    }

    /// The fully resolved configuration, as written to `config.resolved`.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_shipped_hyperparameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.capsule_k, 16);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.l2, 0.0004);
        assert_eq!(cfg.learning_rate, 0.0001);
        assert_eq!(cfg.d_l, 500);
        assert_eq!(cfg.iterations, 2);
        assert_eq!(cfg.eta, 0.0);
        assert_eq!(cfg.variant, Variant::CapsuleGlobal);
    }

    #[test]
    fn toml_roundtrip_preserves_everything() {
        let mut cfg = RunConfig::default();
        cfg.variant = Variant::Baseline;
        cfg.train = Some(PathBuf::from("train.conll"));
        cfg.seed = 99;
        let text = cfg.to_toml();
        let parsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = toml::from_str::<RunConfig>("no_such_field = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg: RunConfig = toml::from_str("variant = \"baseline\"\nseed = 3\n").unwrap();
        assert_eq!(cfg.variant, Variant::Baseline);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.capsule_k, 16);
    }
}
