//! Convolutional classifier trained from scratch.
//!
//! Architecture: conv(ReLU) -> max-pool -> conv(ReLU) -> max-pool -> two
//! ReLU fully connected layers with dropout -> softmax. Everything is generic
//! over [`Real`] so gradient checks can run in `f64` while training and
//! stored models use `f32`.

mod config;
mod io;
mod layers;
mod network;
mod optim;
mod train;

use std::fmt::Debug;
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabelVocabulary;
use crate::features::NormStats;

pub use config::{CnnConfig, ConvSpec, PoolSpec, StageShapes, TrainConfig};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use network::{cross_entropy, softmax_rows, ForwardCache, Mode, Network, Parameters};
pub use optim::{nesterov_update, sgd_step};
pub use train::{predict_segments, stack_patches, train, EpochLog, LabeledPatch, TrainLog};

/// Floating-point element type of the network.
pub trait Real:
    Float + NumAssign + FromPrimitive + LinalgScalar + ScalarOperand + Sum + Default + Debug + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("training diverged at epoch {0} (non-finite loss)")]
    Diverged(usize),
    #[error("model file has format version {found}, expected {expected}")]
    IncompatibleVersion { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A trained classifier with everything needed to score new patches.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T = f32> {
    pub config: CnnConfig,
    pub params: Parameters<T>,
    pub norm_stats: NormStats,
    pub vocabulary: LabelVocabulary,
    /// Hash of the pipeline configuration that produced the model.
    pub config_hash: String,
}

impl<T: Real> CnnModel<T> {
    pub fn new(
        config: CnnConfig,
        vocabulary: LabelVocabulary,
        norm_stats: NormStats,
        seed: u64,
    ) -> Result<Self, CnnError> {
        if config.num_classes != vocabulary.class_count() {
            return Err(CnnError::InvalidConfig(format!(
                "{} output classes for a vocabulary of {}",
                config.num_classes,
                vocabulary.class_count()
            )));
        }
        let params = Parameters::he_uniform(&config, seed)?;
        Ok(Self {
            config,
            params,
            norm_stats,
            vocabulary,
            config_hash: String::new(),
        })
    }

    pub fn network(&self) -> Result<Network, CnnError> {
        Network::new(&self.config)
    }
}

/// One scored segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub segment_id: String,
    pub probabilities: Vec<f64>,
    pub predicted_class: String,
    pub confidence: f64,
}

impl Prediction {
    /// Softmax in `f64`; ties in the argmax go to the lowest class index.
    pub fn from_logits(segment_id: String, logits: &[f64], vocabulary: &LabelVocabulary) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        let probabilities: Vec<f64> = exp.iter().map(|e| e / sum).collect();
        let (best, confidence) = argmax(&probabilities);
        Prediction {
            segment_id,
            predicted_class: vocabulary.label(best).to_string(),
            confidence,
            probabilities,
        }
    }

    pub fn predicted_index(&self) -> usize {
        argmax(&self.probabilities).0
    }
}

/// Index and value of the first maximum.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}
