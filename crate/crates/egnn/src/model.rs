//! Network definition: parameters, radial basis, and the tape forward pass.

use crate::{EgnnError, Result};
use affbench_core::molgraph::{GraphForm, MolGraph, Origin, VOCAB_SIZE};
use affbench_gradkit::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use affbench_gradkit::nn::{kaiming_uniform, Mlp, MlpIds};
use affbench_gradkit::{NodeId, Tape, TensorData};
use affbench_rng::Xoshiro256;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Extra embedding row used as a scalar input channel (diffusion time).
/// Zero for predictive and energy models, so backbone shapes always match
/// across the model family.
pub const AUX_CHANNEL: usize = VOCAB_SIZE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgnnConfig {
    pub num_layers: usize,
    pub c_hidden: usize,
    pub num_rbf: usize,
    pub cutoff: f64,
    /// Off in predictive mode; on for the diffusion objective.
    pub coord_updates: bool,
    pub form: GraphForm,
}

impl Default for EgnnConfig {
    fn default() -> Self {
        EgnnConfig {
            num_layers: 5,
            c_hidden: 128,
            num_rbf: 8,
            cutoff: 5.0,
            coord_updates: false,
            form: GraphForm::Single,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgnnLayerParams {
    pub message: Mlp,
    pub update: Mlp,
    pub coord: Option<Mlp>,
}

/// All trainable tensors: embedding, per-layer MLPs, pooling head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgnnParams {
    pub config: EgnnConfig,
    pub embedding: TensorData,
    pub layers: Vec<EgnnLayerParams>,
    pub head: Mlp,
}

impl EgnnParams {
    /// Fresh parameters: Kaiming-uniform weights, zero biases, and a
    /// zero-initialised final coordinate layer.
    pub fn init(config: &EgnnConfig, rng: &mut Xoshiro256) -> Self {
        let c = config.c_hidden;
        let embedding = kaiming_uniform(VOCAB_SIZE + 1, c, rng);
        let layers = (0..config.num_layers)
            .map(|_| {
                let message = Mlp::new(&[2 * c + config.num_rbf, c, c], rng);
                let update = Mlp::new(&[2 * c, c, c], rng);
                let coord = if config.coord_updates {
                    let mut m = Mlp::new(&[c, c, 1], rng);
                    m.zero_final_layer();
                    Some(m)
                } else {
                    None
                };
                EgnnLayerParams {
                    message,
                    update,
                    coord,
                }
            })
            .collect();
        let head_in = match config.form {
            GraphForm::Single => c,
            GraphForm::Multi => 2 * c,
        };
        let head = Mlp::new(&[head_in, c, 1], rng);
        EgnnParams {
            config: config.clone(),
            embedding,
            layers,
            head,
        }
    }

    /// Deterministic (name, tensor) listing; the optimizer and checkpoints
    /// both rely on this order.
    pub fn named_tensors(&self) -> Vec<(String, &TensorData)> {
        let mut out: Vec<(String, &TensorData)> = vec![("embedding".into(), &self.embedding)];
        for (l, layer) in self.layers.iter().enumerate() {
            for (i, w) in layer.message.weights.iter().enumerate() {
                out.push((format!("layer{l}.message.w{i}"), w));
            }
            for (i, b) in layer.message.biases.iter().enumerate() {
                out.push((format!("layer{l}.message.b{i}"), b));
            }
            for (i, w) in layer.update.weights.iter().enumerate() {
                out.push((format!("layer{l}.update.w{i}"), w));
            }
            for (i, b) in layer.update.biases.iter().enumerate() {
                out.push((format!("layer{l}.update.b{i}"), b));
            }
            if let Some(coord) = &layer.coord {
                for (i, w) in coord.weights.iter().enumerate() {
                    out.push((format!("layer{l}.coord.w{i}"), w));
                }
                for (i, b) in coord.biases.iter().enumerate() {
                    out.push((format!("layer{l}.coord.b{i}"), b));
                }
            }
        }
        for (i, w) in self.head.weights.iter().enumerate() {
            out.push((format!("head.w{i}"), w));
        }
        for (i, b) in self.head.biases.iter().enumerate() {
            out.push((format!("head.b{i}"), b));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut TensorData)> {
        let mut out: Vec<(String, &mut TensorData)> =
            vec![("embedding".into(), &mut self.embedding)];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (i, w) in layer.message.weights.iter_mut().enumerate() {
                out.push((format!("layer{l}.message.w{i}"), w));
            }
            for (i, b) in layer.message.biases.iter_mut().enumerate() {
                out.push((format!("layer{l}.message.b{i}"), b));
            }
            for (i, w) in layer.update.weights.iter_mut().enumerate() {
                out.push((format!("layer{l}.update.w{i}"), w));
            }
            for (i, b) in layer.update.biases.iter_mut().enumerate() {
                out.push((format!("layer{l}.update.b{i}"), b));
            }
            if let Some(coord) = &mut layer.coord {
                for (i, w) in coord.weights.iter_mut().enumerate() {
                    out.push((format!("layer{l}.coord.w{i}"), w));
                }
                for (i, b) in coord.biases.iter_mut().enumerate() {
                    out.push((format!("layer{l}.coord.b{i}"), b));
                }
            }
        }
        for (i, w) in self.head.weights.iter_mut().enumerate() {
            out.push((format!("head.w{i}"), w));
        }
        for (i, b) in self.head.biases.iter_mut().enumerate() {
            out.push((format!("head.b{i}"), b));
        }
        out
    }

    pub fn is_backbone(name: &str) -> bool {
        !name.starts_with("head.")
    }

    /// All tensors finite (training sanity check).
    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    pub fn save(&self, prefix: &Path, model_kind: &str) -> std::result::Result<(), CheckpointError> {
        let tensors: Vec<(String, TensorData)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        save_checkpoint(
            prefix,
            model_kind,
            serde_json::to_value(&self.config).expect("config serializes"),
            &tensors,
        )
    }

    pub fn load(prefix: &Path) -> std::result::Result<(String, Self), CheckpointError> {
        let (manifest, tensors) = load_checkpoint(prefix)?;
        let config: EgnnConfig = serde_json::from_value(manifest.hyperparameters.clone())?;
        let mut rng = Xoshiro256::seed_from(0);
        let mut params = EgnnParams::init(&config, &mut rng);
        let lookup: std::collections::HashMap<String, TensorData> = tensors.into_iter().collect();
        for (name, tensor) in params.named_tensors_mut() {
            if let Some(loaded) = lookup.get(&name) {
                *tensor = loaded.clone();
            }
        }
        Ok((manifest.model_kind, params))
    }
}

/// Gaussian radial basis: centers evenly spaced on [0, cutoff], width equal
/// to the spacing. Plain-value counterpart of the on-tape expansion.
pub fn rbf_expand(d: f64, num_rbf: usize, cutoff: f64) -> Vec<f64> {
    let spacing = cutoff / (num_rbf.saturating_sub(1).max(1)) as f64;
    (0..num_rbf)
        .map(|k| {
            let mu = spacing * k as f64;
            (-(d - mu).powi(2) / (2.0 * spacing * spacing)).exp()
        })
        .collect()
}

/// Instrumentation for the multi-graph contract: how many cross-origin
/// pair distances the forward pass computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardStats {
    pub cross_origin_distance_reads: usize,
}

#[derive(Debug, Clone)]
pub struct EgnnOutput {
    pub prediction: f64,
    /// Final coordinates when coordinate updates are enabled.
    pub coords: Option<Vec<[f64; 3]>>,
    pub stats: ForwardStats,
}

pub(crate) struct LayerIds {
    pub message: MlpIds,
    pub update: MlpIds,
    pub coord: Option<MlpIds>,
}

pub(crate) struct EgnnIds {
    pub embedding: NodeId,
    pub layers: Vec<LayerIds>,
    pub head: MlpIds,
}

impl EgnnParams {
    pub(crate) fn insert(
        &self,
        tape: &mut Tape,
        backbone_trainable: bool,
        head_trainable: bool,
    ) -> EgnnIds {
        EgnnIds {
            embedding: tape.leaf(self.embedding.clone(), backbone_trainable),
            layers: self
                .layers
                .iter()
                .map(|l| LayerIds {
                    message: l.message.insert(tape, backbone_trainable),
                    update: l.update.insert(tape, backbone_trainable),
                    coord: l.coord.as_ref().map(|c| c.insert(tape, backbone_trainable)),
                })
                .collect(),
            head: self.head.insert(tape, head_trainable),
        }
    }
}

/// Full forward pass on a caller-provided tape.
///
/// Returns (prediction node, final-coordinate node, stats). `time_aux`
/// scales the auxiliary embedding row (diffusion time conditioning); pass 0
/// for predictive and energy models.
pub(crate) fn forward_on_tape(
    tape: &mut Tape,
    graph: &MolGraph,
    params: &EgnnParams,
    ids: &EgnnIds,
    coords: NodeId,
    time_aux: f64,
) -> Result<(NodeId, NodeId, ForwardStats)> {
    let config = &params.config;
    if graph.form != config.form {
        return Err(EgnnError::FormMismatch {
            graph: graph.form,
            model: config.form,
        });
    }
    let n = graph.nodes.len();
    let classes: Vec<usize> = graph.nodes.iter().map(|node| node.class).collect();
    if let Some(&bad) = classes.iter().find(|&&c| c >= VOCAB_SIZE) {
        return Err(EgnnError::VocabMismatch {
            class: bad,
            vocab: VOCAB_SIZE,
        });
    }

    // directed edges: one message per direction
    let mut receivers = Vec::with_capacity(graph.edges.len() * 2);
    let mut senders = Vec::with_capacity(graph.edges.len() * 2);
    let mut cross_per_pass = 0usize;
    for &(i, j) in &graph.edges {
        receivers.push(i);
        senders.push(j);
        receivers.push(j);
        senders.push(i);
        if graph.nodes[i].origin != graph.nodes[j].origin {
            cross_per_pass += 2;
        }
    }
    let n_edges = receivers.len();

    // node embeddings, plus the scaled aux channel when requested
    let mut h = tape.gather_rows(ids.embedding, &classes)?;
    if time_aux != 0.0 {
        let aux_row = tape.gather_rows(ids.embedding, &[AUX_CHANNEL])?;
        let aux_vec = tape.reshape(aux_row, vec![config.c_hidden])?;
        let aux_mat = tape.broadcast_rows(aux_vec, n)?;
        let scaled = tape.mul_scalar(aux_mat, time_aux);
        h = tape.add(h, scaled)?;
    }

    let spacing = config.cutoff / (config.num_rbf.saturating_sub(1).max(1)) as f64;
    let mu = TensorData::vector(
        (0..config.num_rbf).map(|k| spacing * k as f64).collect(),
    );

    let mut x = coords;
    let mut stats = ForwardStats::default();

    for (layer, layer_ids) in params.layers.iter().zip(&ids.layers) {
        if n_edges > 0 {
            stats.cross_origin_distance_reads += cross_per_pass;
        }
        // distances and radial features
        let xi = tape.gather_rows(x, &receivers)?;
        let xj = tape.gather_rows(x, &senders)?;
        let dx = tape.sub(xi, xj)?;
        let dsq = tape.square(dx);
        let dsum = tape.row_sum(dsq)?;
        let dist = tape.sqrt(dsum);
        let dist_wide = tape.broadcast_cols(dist, config.num_rbf)?;
        let mu_id = tape.constant(mu.clone());
        let mu_wide = tape.broadcast_rows(mu_id, n_edges)?;
        let delta = tape.sub(dist_wide, mu_wide)?;
        let delta_sq = tape.square(delta);
        let scaled = tape.mul_scalar(delta_sq, -1.0 / (2.0 * spacing * spacing));
        let rbf = tape.exp(scaled);

        // messages
        let hi = tape.gather_rows(h, &receivers)?;
        let hj = tape.gather_rows(h, &senders)?;
        let m_in = tape.concat_cols(&[hi, hj, rbf])?;
        let m_raw = layer.message.forward(tape, &layer_ids.message, m_in)?;
        let m = tape.silu(m_raw);
        let agg = tape.scatter_sum_rows(m, &receivers, n)?;

        // node update (residual)
        let u_in = tape.concat_cols(&[h, agg])?;
        let u = layer.update.forward(tape, &layer_ids.update, u_in)?;
        h = tape.add(h, u)?;

        // optional equivariant coordinate update
        if config.coord_updates {
            if let (Some(coord_mlp), Some(coord_ids)) = (&layer.coord, &layer_ids.coord) {
                let w = coord_mlp.forward(tape, coord_ids, m)?;
                let w_wide = tape.broadcast_cols(w, 3)?;
                let moved = tape.mul(dx, w_wide)?;
                let delta_x = tape.scatter_sum_rows(moved, &receivers, n)?;
                // remove the centroid so the update is translation-free
                let ones = tape.constant(TensorData::matrix(1, n, vec![1.0 / n as f64; n]));
                let centroid = tape.matmul(ones, delta_x)?;
                let centroid_vec = tape.reshape(centroid, vec![3])?;
                let centroid_mat = tape.broadcast_rows(centroid_vec, n)?;
                let centered = tape.sub(delta_x, centroid_mat)?;
                x = tape.add(x, centered)?;
            }
        }
    }

    // pooling
    let pooled = match config.form {
        GraphForm::Single => {
            let index = vec![0usize; n];
            tape.scatter_sum_rows(h, &index, 1)?
        }
        GraphForm::Multi => {
            let index: Vec<usize> = graph
                .nodes
                .iter()
                .map(|node| match node.origin {
                    Origin::Ligand => 0usize,
                    Origin::Protein => 1usize,
                })
                .collect();
            let pools = tape.scatter_sum_rows(h, &index, 2)?;
            tape.reshape(pools, vec![1, 2 * config.c_hidden])?
        }
    };
    let pred = params.head.forward(tape, &ids.head, pooled)?;
    Ok((pred, x, stats))
}

/// Forward pass without gradient tracking.
pub fn forward(graph: &MolGraph, params: &EgnnParams, time_aux: f64) -> Result<EgnnOutput> {
    let mut tape = Tape::new();
    let ids = params.insert(&mut tape, false, false);
    let coords_data: Vec<f64> = graph
        .nodes
        .iter()
        .flat_map(|node| node.pos.into_iter())
        .collect();
    let coords = tape.constant(TensorData::matrix(graph.nodes.len(), 3, coords_data));
    let (pred, x_out, stats) = forward_on_tape(&mut tape, graph, params, &ids, coords, time_aux)?;
    let prediction = tape.value(pred).data[0];
    let coords = if params.config.coord_updates {
        let data = &tape.value(x_out).data;
        Some(
            data.chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect(),
        )
    } else {
        None
    };
    Ok(EgnnOutput {
        prediction,
        coords,
        stats,
    })
}
