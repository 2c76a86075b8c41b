//! Two-stage transfer: match the pre-trained backbone into a fresh model,
//! train a new head with the backbone frozen, then fine-tune everything at
//! a lower learning rate.

use crate::model::{EgnnConfig, EgnnParams};
use crate::train::{train, EpochStats, LabeledGraph, TrainConfig};
use crate::{EgnnError, Result};
use affbench_rng::Xoshiro256;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferConfig {
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub early_stopping_patience: usize,
    /// Seed for the freshly initialised pooling head.
    pub head_seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            stage1_lr: 5e-4,
            stage2_lr: 1e-4,
            stage1_epochs: 300,
            stage2_epochs: 300,
            early_stopping_patience: 20,
            head_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    /// Parameters after stage 1 (head trained, backbone untouched).
    pub params_after_stage1: EgnnParams,
    /// Final fine-tuned parameters.
    pub params: EgnnParams,
    pub stage1_history: Vec<EpochStats>,
    pub stage2_history: Vec<EpochStats>,
}

/// Copies backbone tensors from `source` into a model built for
/// `target_config`. The head stays freshly initialised; coordinate MLPs in
/// the source are dropped when the target runs without coordinate updates
/// (the predictive setting).
pub fn match_backbone(
    source: &EgnnParams,
    target_config: &EgnnConfig,
    head_seed: u64,
) -> Result<EgnnParams> {
    let mut rng = Xoshiro256::seed_from(head_seed);
    let mut target = EgnnParams::init(target_config, &mut rng);

    let source_map: std::collections::HashMap<String, &affbench_gradkit::TensorData> =
        source.named_tensors().into_iter().collect();
    let mut mismatched = Vec::new();
    for (name, tensor) in target.named_tensors_mut() {
        if !EgnnParams::is_backbone(&name) {
            continue;
        }
        match source_map.get(&name) {
            Some(src) if src.shape == tensor.shape => {
                *tensor = (*src).clone();
            }
            Some(src) => mismatched.push(format!(
                "{name}: source {:?} vs target {:?}",
                src.shape, tensor.shape
            )),
            None => mismatched.push(format!("{name}: missing from source")),
        }
    }
    if !mismatched.is_empty() {
        return Err(EgnnError::BackboneShapeMismatch(mismatched));
    }
    Ok(target)
}

/// Stage 1: backbone bit-frozen, fresh head trained at `stage1_lr` until
/// early stopping. Stage 2: all parameters trained at `stage2_lr`.
pub fn transfer(
    backbone: &EgnnParams,
    target_config: &EgnnConfig,
    train_set: &[LabeledGraph],
    val_set: Option<&[LabeledGraph]>,
    config: &TransferConfig,
) -> Result<TransferOutcome> {
    let matched = match_backbone(backbone, target_config, config.head_seed)?;

    let stage1 = train(
        matched,
        train_set,
        val_set,
        &TrainConfig {
            lr: config.stage1_lr,
            epochs: config.stage1_epochs,
            early_stopping_patience: config.early_stopping_patience,
            freeze_backbone: true,
            ..Default::default()
        },
    )?;
    let params_after_stage1 = stage1.params.clone();

    let stage2 = train(
        stage1.params,
        train_set,
        val_set,
        &TrainConfig {
            lr: config.stage2_lr,
            epochs: config.stage2_epochs,
            early_stopping_patience: config.early_stopping_patience,
            freeze_backbone: false,
            ..Default::default()
        },
    )?;

    Ok(TransferOutcome {
        params_after_stage1,
        params: stage2.params,
        stage1_history: stage1.history,
        stage2_history: stage2.history,
    })
}
