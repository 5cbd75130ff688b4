//! The two prediction paths.
//!
//! The frozen path ([`frozen`]) stacks five heads over precomputed span
//! embeddings and hand-crafted features. The fine-tuned path ([`finetune`])
//! trains a classifier together with a desk-scale encoder on
//! [`segment`]-preprocessed inputs. Both train through [`training::fit`].

pub mod finetune;
pub mod frozen;
pub mod segment;
pub mod training;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_bank::EmbeddingError;
use crate::ensemble::EnsembleError;
use crate::nn::Activation;

pub use finetune::{train_finetuned, FinetuneConfig, FinetunedClassifier};
pub use frozen::{siamese_forward, train_frozen, FrozenEnsemble, FrozenInputs, FrozenModel, FrozenSpec};
pub use segment::{segment_preprocess, SegmentedInput};
pub use training::{fit, fold_splits, TrainingLog};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dim { what: String, expected: usize, got: usize },
    #[error("{id}: missing {what}")]
    MissingInput { id: String, what: String },
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("non-finite loss at epoch {epoch} ({detail})")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("{0} rows appear in both the training and validation split")]
    SplitOverlap(usize),
    #[error("{id}: pronoun falls outside every segment")]
    PronounLost { id: String },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HeadKind {
    MlpCased,
    MlpUncased,
    SiameseAB,
    SiameseProducts,
    FeatureMlp,
}

impl HeadKind {
    pub const ALL: [HeadKind; 5] = [
        HeadKind::MlpCased,
        HeadKind::MlpUncased,
        HeadKind::SiameseAB,
        HeadKind::SiameseProducts,
        HeadKind::FeatureMlp,
    ];

    pub fn is_siamese(self) -> bool {
        matches!(self, HeadKind::SiameseAB | HeadKind::SiameseProducts)
    }
}

/// One head of the frozen path. For Siamese heads `input_dim` is the width
/// of one side and the shared sub-network ends in a single score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

impl HeadSpec {
    /// Default layout for `kind` given the per-span embedding width and the
    /// feature count.
    pub fn default_for(kind: HeadKind, span_dim: usize, feature_dim: usize) -> Self {
        let (input_dim, output_dim, hidden) = match kind {
            HeadKind::MlpCased | HeadKind::MlpUncased => (3 * span_dim, 112, vec![512]),
            HeadKind::SiameseAB | HeadKind::SiameseProducts => (2 * span_dim, 1, vec![64]),
            HeadKind::FeatureMlp => (feature_dim, 16, vec![32]),
        };
        Self {
            kind,
            input_dim,
            output_dim,
            hidden,
            activation: Activation::Relu,
            dropout: 0.3,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }

    /// Columns this head contributes to the stacker input.
    pub fn stack_width(&self) -> usize {
        if self.kind.is_siamese() {
            2
        } else {
            self.output_dim
        }
    }

    pub fn validate(&self, span_dim: usize, feature_dim: usize) -> Result<(), ModelError> {
        let expected = match self.kind {
            HeadKind::MlpCased | HeadKind::MlpUncased => 3 * span_dim,
            HeadKind::SiameseAB | HeadKind::SiameseProducts => 2 * span_dim,
            HeadKind::FeatureMlp => feature_dim,
        };
        if self.input_dim != expected {
            return Err(ModelError::Dim {
                what: format!("{:?} input", self.kind),
                expected,
                got: self.input_dim,
            });
        }
        if self.kind.is_siamese() && self.output_dim != 1 {
            return Err(ModelError::Spec(format!("{:?} must score each side with one output", self.kind)));
        }
        if self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(ModelError::Spec(format!("{:?} has a zero-width layer", self.kind)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Spec(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Optimisation settings shared by both paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 5,
            folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Spec(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.folds == 0 {
            return bad("epochs, batch size, patience and folds must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_profile_head_dims() {
        // 1024 hidden × 3 layers per span.
        let span = 3 * 1024;
        let mlp = HeadSpec::default_for(HeadKind::MlpCased, span, 69);
        assert_eq!((mlp.input_dim, mlp.output_dim), (9216, 112));
        assert_eq!(HeadSpec::default_for(HeadKind::FeatureMlp, span, 69).input_dim, 69);
        let stack: usize = HeadKind::ALL
            .iter()
            .map(|k| HeadSpec::default_for(*k, span, 69).stack_width())
            .sum();
        assert_eq!(stack, 112 + 112 + 2 + 2 + 16);
    }

    #[test]
    fn spec_validation() {
        let mut s = HeadSpec::default_for(HeadKind::SiameseAB, 8, 69);
        s.validate(8, 69).unwrap();
        assert!(s.validate(9, 69).is_err());
        s.output_dim = 2;
        assert!(s.validate(8, 69).is_err());
        let mut d = HeadSpec::default_for(HeadKind::FeatureMlp, 8, 69);
        d.dropout = 1.0;
        assert!(d.validate(8, 69).is_err());
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.folds = 0;
        assert!(c.validate().is_err());
    }
}
