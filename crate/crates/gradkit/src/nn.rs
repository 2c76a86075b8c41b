//! Small MLP building blocks over the tape, plus a standalone MLP
//! regressor for flat feature vectors.

use crate::optim::{AdamW, PlateauScheduler};
use crate::tape::{NodeId, Tape};
use crate::tensor::TensorData;
use crate::Result;
use affbench_rng::Xoshiro256;
use serde::{Deserialize, Serialize};

/// Kaiming-uniform fan-in initialisation: U(−√(6/fan_in), √(6/fan_in)).
pub fn kaiming_uniform(fan_in: usize, fan_out: usize, rng: &mut Xoshiro256) -> TensorData {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.next_range(-bound, bound))
        .collect();
    TensorData::matrix(fan_in, fan_out, data)
}

/// Fully connected stack with SiLU between layers and a linear final layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<TensorData>,
    pub biases: Vec<TensorData>,
}

/// Tape node ids for one inserted MLP.
pub struct MlpIds {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

impl Mlp {
    /// `dims` = [input, hidden..., output]. Biases start at zero.
    pub fn new(dims: &[usize], rng: &mut Xoshiro256) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output dims");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            weights.push(kaiming_uniform(w[0], w[1], rng));
            biases.push(TensorData::vector(vec![0.0; w[1]]));
        }
        Mlp { weights, biases }
    }

    /// Zeroes the last layer (used for coordinate heads, which must start
    /// as the identity update).
    pub fn zero_final_layer(&mut self) {
        if let Some(w) = self.weights.last_mut() {
            w.data.iter_mut().for_each(|v| *v = 0.0);
        }
        if let Some(b) = self.biases.last_mut() {
            b.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].shape[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.weights.last().unwrap().shape.last().unwrap()
    }

    /// Inserts all parameters as tape leaves.
    pub fn insert(&self, tape: &mut Tape, trainable: bool) -> MlpIds {
        MlpIds {
            weights: self
                .weights
                .iter()
                .map(|w| tape.leaf(w.clone(), trainable))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| tape.leaf(b.clone(), trainable))
                .collect(),
        }
    }

    /// Forward pass over inserted parameters: x is [n, input_dim].
    pub fn forward(&self, tape: &mut Tape, ids: &MlpIds, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let n_layers = ids.weights.len();
        for l in 0..n_layers {
            let z = tape.matmul(h, ids.weights[l])?;
            let rows = tape.value(z).dims2().unwrap().0;
            let b = tape.broadcast_rows(ids.biases[l], rows)?;
            h = tape.add(z, b)?;
            if l + 1 < n_layers {
                h = tape.silu(h);
            }
        }
        Ok(h)
    }

    /// Pulls accumulated grads for the inserted ids. Zero for parameters
    /// the loss never touched.
    pub fn grads(&self, tape: &Tape, ids: &MlpIds) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (w, id) in self.weights.iter().zip(&ids.weights) {
            out.push(tape.grad(*id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; w.len()]));
        }
        for (b, id) in self.biases.iter().zip(&ids.biases) {
            out.push(tape.grad(*id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; b.len()]));
        }
        out
    }

    /// Parameter tensors in the same order as [`Mlp::grads`].
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for w in &mut self.weights {
            out.push(&mut w.data);
        }
        for b in &mut self.biases {
            out.push(&mut b.data);
        }
        out
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for w in &self.weights {
            out.push(&w.data);
        }
        for b in &self.biases {
            out.push(&b.data);
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpRegressorConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub early_stopping_patience: usize,
    pub seed: u64,
}

impl Default for MlpRegressorConfig {
    fn default() -> Self {
        MlpRegressorConfig {
            hidden: 64,
            lr: 5e-4,
            weight_decay: 0.0,
            epochs: 300,
            early_stopping_patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged (non-finite loss) at epoch {0}")]
    Diverged(usize),
    #[error("need at least {need} training rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error(transparent)]
    Grad(#[from] crate::GradError),
}

/// One hidden layer MLP regressor on flat feature rows, trained with AdamW
/// and plateau LR scheduling, early-stopped on a validation split when one
/// is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpRegressor {
    pub mlp: Mlp,
    pub config: MlpRegressorConfig,
}

impl MlpRegressor {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        val: Option<(&[Vec<f64>], &[f64])>,
        config: &MlpRegressorConfig,
    ) -> std::result::Result<(Self, Vec<(usize, f64, f64)>), TrainError> {
        if x.len() < 2 {
            return Err(TrainError::TooFewRows { need: 2, got: x.len() });
        }
        let width = x[0].len();
        let mut rng = Xoshiro256::seed_from(config.seed);
        let mut mlp = Mlp::new(&[width, config.hidden, 1], &mut rng);
        let mut opt = AdamW::with_lr(config.lr, config.weight_decay)?;
        let mut sched = PlateauScheduler::new(config.lr);

        let x_tensor = TensorData::matrix(x.len(), width, x.concat());
        let y_tensor = TensorData::matrix(x.len(), 1, y.to_vec());
        let val_tensors = val.map(|(vx, vy)| {
            (
                TensorData::matrix(vx.len(), width, vx.concat()),
                TensorData::matrix(vx.len(), 1, vy.to_vec()),
            )
        });

        let mut history = Vec::new();
        let mut best = (f64::INFINITY, mlp.clone());
        let mut bad = 0usize;
        for epoch in 0..config.epochs {
            let mut tape = Tape::new();
            let ids = mlp.insert(&mut tape, true);
            let xin = tape.constant(x_tensor.clone());
            let pred = mlp.forward(&mut tape, &ids, xin)?;
            let target = tape.constant(y_tensor.clone());
            let diff = tape.sub(pred, target)?;
            let sq = tape.square(diff);
            let loss = tape.mean(sq);
            let train_mse = tape.value(loss).data[0];
            if !train_mse.is_finite() {
                return Err(TrainError::Diverged(epoch));
            }
            tape.backward(loss)?;
            let grads = mlp.grads(&tape, &ids);
            let mut pg: Vec<(&mut [f64], &[f64])> = mlp
                .params_mut()
                .into_iter()
                .zip(grads.iter())
                .map(|(p, g)| (p.as_mut_slice(), g.as_slice()))
                .collect();
            opt.step(&mut pg)?;

            let monitored = match &val_tensors {
                Some((vx, vy)) => {
                    let mut vt = Tape::new();
                    let vids = mlp.insert(&mut vt, false);
                    let vxin = vt.constant(vx.clone());
                    let vpred = mlp.forward(&mut vt, &vids, vxin)?;
                    let vtar = vt.constant(vy.clone());
                    let vd = vt.sub(vpred, vtar)?;
                    let vsq = vt.square(vd);
                    let vloss = vt.mean(vsq);
                    vt.value(vloss).data[0]
                }
                Option::None => train_mse,
            };
            history.push((epoch, train_mse, monitored));
            opt.set_lr(sched.observe(monitored))?;

            if monitored < best.0 - 1e-9 {
                best = (monitored, mlp.clone());
                bad = 0;
            } else {
                bad += 1;
                if bad > config.early_stopping_patience {
                    break;
                }
            }
        }
        Ok((
            MlpRegressor {
                mlp: best.1,
                config: config.clone(),
            },
            history,
        ))
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> std::result::Result<Vec<f64>, TrainError> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let width = self.mlp.input_dim();
        let mut tape = Tape::new();
        let ids = self.mlp.insert(&mut tape, false);
        let xin = tape.constant(TensorData::matrix(x.len(), width, x.concat()));
        let pred = self.mlp.forward(&mut tape, &ids, xin)?;
        Ok(tape.value(pred).data.clone())
    }
}
