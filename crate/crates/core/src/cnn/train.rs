//! Training and batched inference drivers.

use log::info;
use ndarray::{Array2, Array4, Axis};
use serde::{Deserialize, Serialize};

use super::network::{Network, Parameters};
use super::optim::sgd_step;
use super::{CnnConfig, CnnError, CnnModel, Prediction, Real, TrainConfig};
use crate::dataset::LabelVocabulary;
use crate::features::{FeaturePatch, NormStats};
use crate::rng::{seeded, shuffle};

const INFER_BATCH: usize = 256;

/// A normalised patch with its class index and parent clip.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub patch: FeaturePatch,
    pub label: usize,
    pub clip_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (highest validation accuracy).
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Stacks patches into a `[batch][mel][frame][channel]` tensor.
pub fn stack_patches<'a, T: Real, I>(patches: I) -> Array4<T>
where
    I: IntoIterator<Item = &'a FeaturePatch>,
{
    let views: Vec<_> = patches.into_iter().map(|p| p.values.view()).collect();
    if views.is_empty() {
        return Array4::zeros((0, 0, 0, 0));
    }
    let stacked = ndarray::stack(Axis(0), &views).expect("patches share one shape");
    stacked.mapv(|v| T::from(v).unwrap())
}

/// Trains on normalised patches, tracking patch-level validation accuracy
/// after every epoch and returning the best-scoring parameters.
///
/// Batches are drawn from a fresh seeded permutation each epoch. Given the
/// same inputs and `cfg.seed` the result is bit-identical.
pub fn train<T: Real>(
    train: &[LabeledPatch],
    val: &[LabeledPatch],
    cfg: &TrainConfig,
    cnn_cfg: &CnnConfig,
    vocabulary: &LabelVocabulary,
    norm_stats: NormStats,
) -> Result<(CnnModel<T>, TrainLog), CnnError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(CnnError::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(CnnError::EmptyValidationSet);
    }
    let mut model = CnnModel::<T>::new(cnn_cfg.clone(), vocabulary.clone(), norm_stats, cfg.seed)?;
    let net = model.network()?;
    let mut velocity = Parameters::<T>::zeros(cnn_cfg)?;
    let mut rng = seeded(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let l2 = T::from(cfg.l2).unwrap();

    let mut log = TrainLog {
        best_val_acc: -1.0,
        ..Default::default()
    };
    let mut best = model.params.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Array4<T> = stack_patches(chunk.iter().map(|&i| &train[i].patch));
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label).collect();
            let cache = net.forward_train(&model.params, batch.view(), &mut rng)?;
            let (loss, grads) = net.backward(&model.params, &cache, &labels, l2)?;
            let loss = loss.to_f64().unwrap();
            if !loss.is_finite() {
                return Err(CnnError::Diverged(epoch));
            }
            loss_sum += loss * chunk.len() as f64;
            sgd_step(&mut model.params, &grads, &mut velocity, cfg);
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_acc = patch_accuracy(&net, &model.params, val)?;
        info!("epoch {epoch}: train_loss {train_loss:.5} val_acc {val_acc:.4}");
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_acc,
        });
        if val_acc > log.best_val_acc {
            log.best_val_acc = val_acc;
            log.best_epoch = epoch;
            best = model.params.clone();
        } else if epoch - log.best_epoch >= cfg.early_stop_patience {
            info!("early stop after epoch {epoch}, best epoch {}", log.best_epoch);
            break;
        }
    }
    if log.best_epoch > 0 {
        model.params = best;
    }
    Ok((model, log))
}

fn patch_accuracy<T: Real>(net: &Network, params: &Parameters<T>, set: &[LabeledPatch]) -> Result<f64, CnnError> {
    let mut correct = 0usize;
    for chunk in set.chunks(INFER_BATCH) {
        let batch: Array4<T> = stack_patches(chunk.iter().map(|p| &p.patch));
        let logits = net.logits(params, batch.view())?;
        for (row, item) in logits.outer_iter().zip(chunk) {
            let row: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap()).collect();
            if super::argmax(&row).0 == item.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Scores normalised patches in batches; output order follows input order.
pub fn predict_segments<T: Real>(model: &CnnModel<T>, patches: &[FeaturePatch]) -> Result<Vec<Prediction>, CnnError> {
    let net = model.network()?;
    let mut out = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(INFER_BATCH) {
        let batch: Array4<T> = stack_patches(chunk);
        let logits: Array2<T> = net.logits(&model.params, batch.view())?;
        for (row, patch) in logits.outer_iter().zip(chunk) {
            let row: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap()).collect();
            out.push(Prediction::from_logits(patch.segment_id.clone(), &row, &model.vocabulary));
        }
    }
    Ok(out)
}
