//! Full-batch training with MSE loss, AdamW, plateau scheduling and
//! early stopping on a validation set.

use crate::model::{forward_on_tape, EgnnIds, EgnnParams};
use crate::{EgnnError, Result};
use affbench_core::molgraph::MolGraph;
use affbench_gradkit::optim::{AdamW, PlateauScheduler};
use affbench_gradkit::{Tape, TensorData};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub id: String,
    pub graph: MolGraph,
    pub label: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub early_stopping_patience: usize,
    /// Improvements smaller than this do not reset the patience counter.
    pub early_stopping_min_delta: f64,
    /// Train only the pooling head (transfer stage 1).
    pub freeze_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            weight_decay: 0.0,
            epochs: 500,
            early_stopping_patience: 20,
            early_stopping_min_delta: 1e-8,
            freeze_backbone: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best monitored loss.
    pub params: EgnnParams,
    pub history: Vec<EpochStats>,
}

fn coords_tensor(graph: &MolGraph) -> TensorData {
    TensorData::matrix(
        graph.nodes.len(),
        3,
        graph.nodes.iter().flat_map(|n| n.pos.into_iter()).collect(),
    )
}

/// Grad vectors parallel to `named_tensors`, zero where untouched.
pub(crate) fn collect_grads(tape: &Tape, params: &EgnnParams, ids: &EgnnIds) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let grab = |tape: &Tape, id, len: usize| -> Vec<f64> {
        tape.grad(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    };
    out.push(grab(tape, ids.embedding, params.embedding.len()));
    for (layer, lids) in params.layers.iter().zip(&ids.layers) {
        for (w, id) in layer.message.weights.iter().zip(&lids.message.weights) {
            out.push(grab(tape, *id, w.len()));
        }
        for (b, id) in layer.message.biases.iter().zip(&lids.message.biases) {
            out.push(grab(tape, *id, b.len()));
        }
        for (w, id) in layer.update.weights.iter().zip(&lids.update.weights) {
            out.push(grab(tape, *id, w.len()));
        }
        for (b, id) in layer.update.biases.iter().zip(&lids.update.biases) {
            out.push(grab(tape, *id, b.len()));
        }
        if let (Some(coord), Some(cids)) = (&layer.coord, &lids.coord) {
            for (w, id) in coord.weights.iter().zip(&cids.weights) {
                out.push(grab(tape, *id, w.len()));
            }
            for (b, id) in coord.biases.iter().zip(&cids.biases) {
                out.push(grab(tape, *id, b.len()));
            }
        }
    }
    for (w, id) in params.head.weights.iter().zip(&ids.head.weights) {
        out.push(grab(tape, *id, w.len()));
    }
    for (b, id) in params.head.biases.iter().zip(&ids.head.biases) {
        out.push(grab(tape, *id, b.len()));
    }
    out
}

/// Squared-error loss (pred − label)² for one graph together with its
/// gradient w.r.t. every parameter tensor, in `named_tensors` order.
/// Exposed for gradient checking against finite differences.
pub fn loss_and_grads(params: &EgnnParams, item: &LabeledGraph) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let ids = params.insert(&mut tape, true, true);
    let coords = tape.constant(coords_tensor(&item.graph));
    let (pred, _, _) = forward_on_tape(&mut tape, &item.graph, params, &ids, coords, 0.0)?;
    let target = tape.constant(TensorData::matrix(1, 1, vec![item.label]));
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    let loss = tape.mean(sq);
    let loss_value = tape.value(loss).data[0];
    tape.backward(loss)?;
    Ok((loss_value, collect_grads(&tape, params, &ids)))
}

/// Mean squared error of the current parameters over a set (no gradients).
pub fn evaluate_mse(params: &EgnnParams, set: &[LabeledGraph]) -> Result<f64> {
    let mut total = 0.0;
    for item in set {
        let out = crate::model::forward(&item.graph, params, 0.0)?;
        total += (out.prediction - item.label).powi(2);
    }
    Ok(total / set.len().max(1) as f64)
}

/// Predictions for a set of graphs.
pub fn predict(params: &EgnnParams, graphs: &[&MolGraph]) -> Result<Vec<f64>> {
    graphs
        .iter()
        .map(|g| crate::model::forward(g, params, 0.0).map(|o| o.prediction))
        .collect()
}

/// Trains on pAffinity labels. Full-batch: one optimizer step per epoch
/// with the gradient of the mean squared error over all training graphs.
/// Early-stops on validation MSE when a validation set is given (train MSE
/// otherwise) and returns the parameters from the best epoch.
pub fn train(
    initial: EgnnParams,
    train_set: &[LabeledGraph],
    val_set: Option<&[LabeledGraph]>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.len() < 2 {
        return Err(EgnnError::TooFewGraphs {
            need: 2,
            got: train_set.len(),
        });
    }
    let mut params = initial;
    let mut opt = AdamW::with_lr(config.lr, config.weight_decay)?;
    let mut sched = PlateauScheduler::new(config.lr);

    let names: Vec<String> = params
        .named_tensors()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let trainable: Vec<bool> = names
        .iter()
        .map(|n| !config.freeze_backbone || !EgnnParams::is_backbone(n))
        .collect();

    let mut history = Vec::new();
    let mut best: (f64, EgnnParams) = (f64::INFINITY, params.clone());
    let mut bad = 0usize;

    for epoch in 0..config.epochs {
        let n = train_set.len() as f64;
        let mut grad_acc: Vec<Vec<f64>> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        let mut train_mse = 0.0;

        for item in train_set {
            let mut tape = Tape::new();
            let ids = params.insert(&mut tape, !config.freeze_backbone, true);
            let coords = tape.constant(coords_tensor(&item.graph));
            let (pred, _, _) = forward_on_tape(&mut tape, &item.graph, &params, &ids, coords, 0.0)?;
            let target = tape.constant(TensorData::matrix(1, 1, vec![item.label]));
            let diff = tape.sub(pred, target)?;
            let sq = tape.square(diff);
            let loss = tape.mean(sq);
            train_mse += tape.value(loss).data[0];
            tape.backward(loss)?;
            for (acc, g) in grad_acc.iter_mut().zip(collect_grads(&tape, &params, &ids)) {
                for (a, gi) in acc.iter_mut().zip(&g) {
                    *a += gi / n;
                }
            }
        }
        train_mse /= n;
        if !train_mse.is_finite() {
            return Err(EgnnError::Diverged { epoch });
        }

        // step only the trainable subset so frozen tensors stay bit-identical
        {
            let tensors = params.named_tensors_mut();
            let mut pg: Vec<(&mut [f64], &[f64])> = Vec::new();
            for (((_, tensor), grad), &is_trainable) in
                tensors.into_iter().zip(&grad_acc).zip(&trainable)
            {
                if is_trainable {
                    pg.push((tensor.data.as_mut_slice(), grad.as_slice()));
                }
            }
            opt.step(&mut pg)?;
        }
        if !params.all_finite() {
            return Err(EgnnError::Diverged { epoch });
        }

        let val_mse = match val_set {
            Some(set) if !set.is_empty() => Some(evaluate_mse(&params, set)?),
            _ => None,
        };
        let monitored = val_mse.unwrap_or(train_mse);
        let lr = sched.observe(monitored);
        opt.set_lr(lr)?;
        history.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
            lr,
        });

        if monitored < best.0 - config.early_stopping_min_delta {
            best = (monitored, params.clone());
            bad = 0;
        } else {
            bad += 1;
            if bad >= config.early_stopping_patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best.1,
        history,
    })
}
