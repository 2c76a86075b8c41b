//! Pre-training objectives: interaction-energy regression on molecule sets
//! with known self energies, and coordinate denoising ("coord-diffusion",
//! coordinates only — no categorical feature channel).

use crate::model::{forward_on_tape, EgnnParams};
use crate::train::{train, LabeledGraph, TrainConfig, TrainOutcome};
use crate::{EgnnError, Result};
use affbench_core::molgraph::MolGraph;
use affbench_gradkit::optim::AdamW;
use affbench_gradkit::{Tape, TensorData};
use affbench_rng::Xoshiro256;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct QmMolecule {
    pub id: String,
    pub graph: MolGraph,
    /// Total energy label (arbitrary consistent units).
    pub total_energy: f64,
}

/// Regression target: total energy minus the summed per-element self
/// energies of the molecule's atoms.
pub fn qm_targets(
    molecules: &[QmMolecule],
    self_energies: &BTreeMap<u8, f64>,
) -> Result<Vec<f64>> {
    molecules
        .iter()
        .map(|m| {
            let mut self_sum = 0.0;
            for node in &m.graph.nodes {
                self_sum += self_energies
                    .get(&node.z)
                    .ok_or(EgnnError::MissingSelfEnergy { element: node.z })?;
            }
            Ok(m.total_energy - self_sum)
        })
        .collect()
}

/// Supervised pre-training on interaction energies. Coordinate updates are
/// off; the model regresses E_total − ΣE_self.
pub fn pretrain_qm(
    molecules: &[QmMolecule],
    self_energies: &BTreeMap<u8, f64>,
    initial: EgnnParams,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let targets = qm_targets(molecules, self_energies)?;
    let labeled: Vec<LabeledGraph> = molecules
        .iter()
        .zip(targets)
        .map(|(m, t)| LabeledGraph {
            id: m.id.clone(),
            graph: m.graph.clone(),
            label: t,
        })
        .collect();
    train(initial, &labeled, None, config)
}

/// Variance-preserving noise schedule: alpha decreasing from ~1 to ~0 with
/// alpha² + sigma² = 1 at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DiffusionSchedule {
    /// Cosine schedule over `steps` diffusion steps (t = 0..=steps).
    pub fn cosine(steps: usize) -> Self {
        let mut alpha = Vec::with_capacity(steps + 1);
        let mut sigma = Vec::with_capacity(steps + 1);
        for t in 0..=steps {
            let phase = std::f64::consts::FRAC_PI_2 * t as f64 / steps as f64;
            alpha.push(phase.cos());
            sigma.push(phase.sin());
        }
        DiffusionSchedule { alpha, sigma }
    }

    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        for (t, (a, s)) in self.alpha.iter().zip(&self.sigma).enumerate() {
            let residual = (a * a + s * s - 1.0).abs();
            if residual > 1e-9 {
                return Err(EgnnError::BadSchedule { step: t, residual });
            }
        }
        let monotone = self.alpha.windows(2).all(|w| w[1] <= w[0]);
        let endpoints = self.alpha[0] > 1.0 - 1e-6 && *self.alpha.last().unwrap() < 1e-6;
        if !monotone || !endpoints {
            return Err(EgnnError::BadSchedule {
                step: 0,
                residual: f64::NAN,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            steps: 100,
            epochs: 200,
            lr: 5e-4,
            seed: 0,
        }
    }
}

/// Subtracts the centroid from every node position.
pub fn center_graph(graph: &mut MolGraph) {
    let n = graph.nodes.len().max(1) as f64;
    let mut com = [0.0; 3];
    for node in &graph.nodes {
        for k in 0..3 {
            com[k] += node.pos[k] / n;
        }
    }
    for node in &mut graph.nodes {
        for k in 0..3 {
            node.pos[k] -= com[k];
        }
    }
}

/// Standard normal noise with the per-axis mean removed (center-of-mass
/// free subspace).
pub fn com_free_noise(n: usize, rng: &mut Xoshiro256) -> Vec<f64> {
    let mut eps: Vec<f64> = (0..n * 3).map(|_| rng.next_normal()).collect();
    for axis in 0..3 {
        let mean: f64 = (0..n).map(|i| eps[i * 3 + axis]).sum::<f64>() / n as f64;
        for i in 0..n {
            eps[i * 3 + axis] -= mean;
        }
    }
    eps
}

/// Noised coordinates z_t = alpha·x + sigma·eps.
pub fn noised_coords(x: &[f64], eps: &[f64], alpha: f64, sigma: f64) -> Vec<f64> {
    x.iter()
        .zip(eps)
        .map(|(xi, ei)| alpha * xi + sigma * ei)
        .collect()
}

/// Denoising pre-training: per epoch and molecule, sample a step t and
/// CoM-free noise, form z_t, and train the coordinate stream so that
/// (coords_out − z_t) predicts the noise. Time conditioning enters through
/// the auxiliary embedding channel as t/T.
pub fn pretrain_diffusion(
    molecules: &[MolGraph],
    schedule: &DiffusionSchedule,
    initial: EgnnParams,
    config: &DiffusionConfig,
) -> Result<(EgnnParams, Vec<f64>)> {
    schedule.validate()?;
    if molecules.is_empty() {
        return Err(EgnnError::TooFewGraphs { need: 1, got: 0 });
    }
    let mut params = initial;
    assert!(
        params.config.coord_updates,
        "diffusion pre-training requires coordinate updates"
    );
    let mut centered: Vec<MolGraph> = molecules.to_vec();
    for g in &mut centered {
        center_graph(g);
    }

    let mut opt = AdamW::with_lr(config.lr, 0.0)?;
    let mut rng = Xoshiro256::seed_from(config.seed);
    let t_max = schedule.steps();
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let n_mols = centered.len() as f64;
        let mut grad_acc: Vec<Vec<f64>> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        let mut epoch_loss = 0.0;

        for graph in &centered {
            let n = graph.nodes.len();
            let t = 1 + rng.next_below(t_max);
            let (alpha, sigma) = (schedule.alpha[t], schedule.sigma[t]);
            let x: Vec<f64> = graph.nodes.iter().flat_map(|nd| nd.pos.into_iter()).collect();
            let eps = com_free_noise(n, &mut rng);
            let z = noised_coords(&x, &eps, alpha, sigma);

            let mut tape = Tape::new();
            let ids = params.insert(&mut tape, true, true);
            let z_node = tape.constant(TensorData::matrix(n, 3, z));
            let time_aux = t as f64 / t_max as f64;
            let (_, x_out, _) =
                forward_on_tape(&mut tape, graph, &params, &ids, z_node, time_aux)?;
            let eps_hat = tape.sub(x_out, z_node)?;
            let eps_node = tape.constant(TensorData::matrix(n, 3, eps));
            let resid = tape.sub(eps_hat, eps_node)?;
            let sq = tape.square(resid);
            let loss = tape.mean(sq);
            epoch_loss += tape.value(loss).data[0];
            tape.backward(loss)?;
            for (acc, g) in grad_acc
                .iter_mut()
                .zip(crate::train::collect_grads(&tape, &params, &ids))
            {
                for (a, gi) in acc.iter_mut().zip(&g) {
                    *a += gi / n_mols;
                }
            }
        }
        epoch_loss /= n_mols;
        if !epoch_loss.is_finite() {
            return Err(EgnnError::Diverged { epoch });
        }
        losses.push(epoch_loss);

        let tensors = params.named_tensors_mut();
        let mut pg: Vec<(&mut [f64], &[f64])> = tensors
            .into_iter()
            .zip(&grad_acc)
            .map(|((_, t), g)| (t.data.as_mut_slice(), g.as_slice()))
            .collect();
        opt.step(&mut pg)?;
    }
    Ok((params, losses))
}
