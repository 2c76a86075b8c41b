use affbench_core::molgraph::{GraphForm, GraphNode, MolGraph, Origin};
use affbench_egnn::*;
use affbench_gradkit::gradcheck::{central_difference, max_relative_error};
use affbench_rng::Xoshiro256;
use std::collections::BTreeMap;

fn class_of(z: u8) -> usize {
    affbench_core::molgraph::element_class(z)
}

/// Builds a graph with distance-cutoff edges from raw positions.
fn graph_from(atoms: &[(u8, [f64; 3], Origin)], form: GraphForm, cutoff: f64) -> MolGraph {
    let nodes: Vec<GraphNode> = atoms
        .iter()
        .map(|(z, pos, origin)| GraphNode {
            z: *z,
            class: class_of(*z),
            pos: *pos,
            origin: *origin,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if form == GraphForm::Multi && nodes[i].origin != nodes[j].origin {
                continue;
            }
            let d: f64 = (0..3)
                .map(|k| (nodes[i].pos[k] - nodes[j].pos[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            if d <= cutoff {
                edges.push((i, j));
            }
        }
    }
    MolGraph { nodes, edges, form }
}

fn small_config(form: GraphForm, coord_updates: bool) -> EgnnConfig {
    EgnnConfig {
        num_layers: 2,
        c_hidden: 8,
        num_rbf: 4,
        cutoff: 5.0,
        coord_updates,
        form,
    }
}

fn six_node_graph(form: GraphForm) -> MolGraph {
    graph_from(
        &[
            (6, [0.0, 0.0, 0.0], Origin::Protein),
            (7, [1.4, 0.3, 0.0], Origin::Protein),
            (8, [0.5, 1.8, 0.4], Origin::Protein),
            (6, [2.5, 1.0, 1.0], Origin::Ligand),
            (7, [3.0, 2.2, 0.5], Origin::Ligand),
            (16, [2.0, 2.8, 1.8], Origin::Ligand),
        ],
        form,
        5.0,
    )
}

fn random_rigid(rng: &mut Xoshiro256) -> ([[f64; 3]; 3], [f64; 3]) {
    let q: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
    let n = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let mut rot = [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ];
    if rng.next_f64() < 0.5 {
        for row in &mut rot {
            row[0] = -row[0];
        }
    }
    let t = [
        rng.next_range(-8.0, 8.0),
        rng.next_range(-8.0, 8.0),
        rng.next_range(-8.0, 8.0),
    ];
    (rot, t)
}

fn apply_motion(rot: [[f64; 3]; 3], t: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    [
        rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2] + t[0],
        rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2] + t[1],
        rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2] + t[2],
    ]
}

fn moved_graph(graph: &MolGraph, rot: [[f64; 3]; 3], t: [f64; 3]) -> MolGraph {
    let mut out = graph.clone();
    for node in &mut out.nodes {
        node.pos = apply_motion(rot, t, node.pos);
    }
    out
}

#[test]
fn rbf_center_hits_and_range() {
    let v = rbf_expand(0.0, 8, 5.0);
    assert_eq!(v[0], 1.0);
    let spacing = 5.0 / 7.0;
    let v = rbf_expand(3.0 * spacing, 8, 5.0);
    assert!((v[3] - 1.0).abs() < 1e-15);
    for d in 0..=50 {
        let v = rbf_expand(d as f64 * 0.1, 8, 5.0);
        assert!(v.iter().all(|&x| x > 0.0 && x <= 1.0), "d = {}", d as f64 * 0.1);
    }
}

#[test]
fn prediction_invariant_under_rigid_motion() {
    let config = small_config(GraphForm::Single, false);
    let mut rng = Xoshiro256::seed_from(11);
    let params = EgnnParams::init(&config, &mut rng);
    let graph = six_node_graph(GraphForm::Single);
    let base = forward(&graph, &params, 0.0).unwrap().prediction;
    for _ in 0..25 {
        let (rot, t) = random_rigid(&mut rng);
        let moved = moved_graph(&graph, rot, t);
        let pred = forward(&moved, &params, 0.0).unwrap().prediction;
        assert!((pred - base).abs() < 1e-8, "Δ = {}", (pred - base).abs());
    }
}

#[test]
fn prediction_invariant_under_node_permutation() {
    let config = small_config(GraphForm::Single, false);
    let mut rng = Xoshiro256::seed_from(13);
    let params = EgnnParams::init(&config, &mut rng);
    let graph = six_node_graph(GraphForm::Single);
    let base = forward(&graph, &params, 0.0).unwrap().prediction;

    for _ in 0..10 {
        let mut perm: Vec<usize> = (0..graph.nodes.len()).collect();
        rng.shuffle(&mut perm);
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let nodes: Vec<GraphNode> = perm.iter().map(|&old| graph.nodes[old].clone()).collect();
        let edges: Vec<(usize, usize)> = graph
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (inv[i], inv[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        let permuted = MolGraph {
            nodes,
            edges,
            form: graph.form,
        };
        let pred = forward(&permuted, &params, 0.0).unwrap().prediction;
        assert!((pred - base).abs() < 1e-10);
    }
}

#[test]
fn coordinate_outputs_are_equivariant() {
    let config = small_config(GraphForm::Single, true);
    let mut rng = Xoshiro256::seed_from(17);
    let mut params = EgnnParams::init(&config, &mut rng);
    // zero-initialised coordinate layers would make this trivial: randomize
    for layer in &mut params.layers {
        if let Some(coord) = &mut layer.coord {
            for w in &mut coord.weights {
                for v in &mut w.data {
                    *v = rng.next_range(-0.3, 0.3);
                }
            }
        }
    }
    let graph = six_node_graph(GraphForm::Single);
    let base = forward(&graph, &params, 0.0).unwrap().coords.unwrap();
    for _ in 0..10 {
        let (rot, t) = random_rigid(&mut rng);
        let moved = moved_graph(&graph, rot, t);
        let coords = forward(&moved, &params, 0.0).unwrap().coords.unwrap();
        for (c_moved, c_base) in coords.iter().zip(&base) {
            let want = apply_motion(rot, t, *c_base);
            for k in 0..3 {
                assert!(
                    (c_moved[k] - want[k]).abs() < 1e-8,
                    "Δ = {}",
                    (c_moved[k] - want[k]).abs()
                );
            }
        }
    }
}

#[test]
fn full_model_gradient_check_six_nodes() {
    let config = small_config(GraphForm::Single, false);
    let mut rng = Xoshiro256::seed_from(19);
    let params = EgnnParams::init(&config, &mut rng);
    let graph = six_node_graph(GraphForm::Single);
    let item = LabeledGraph {
        id: "g".into(),
        graph,
        label: 2.0,
    };

    let shapes: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.len()).collect();
    let flat: Vec<f64> = params
        .named_tensors()
        .iter()
        .flat_map(|(_, t)| t.data.iter().copied())
        .collect();

    let eval = |theta: &[f64]| -> f64 {
        let mut p = params.clone();
        let mut offset = 0;
        for ((_, tensor), &len) in p.named_tensors_mut().into_iter().zip(&shapes) {
            tensor.data.copy_from_slice(&theta[offset..offset + len]);
            offset += len;
        }
        let pred = forward(&item.graph, &p, 0.0).unwrap().prediction;
        (pred - item.label).powi(2)
    };
    let numeric = central_difference(eval, &flat);

    let (_, grads) = loss_and_grads(&params, &item).unwrap();
    let analytic: Vec<f64> = grads.into_iter().flatten().collect();
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn multigraph_reads_no_cross_origin_distances() {
    let mut rng = Xoshiro256::seed_from(23);
    let multi_params = EgnnParams::init(&small_config(GraphForm::Multi, false), &mut rng);
    let single_params = EgnnParams::init(&small_config(GraphForm::Single, false), &mut rng);

    let multi = six_node_graph(GraphForm::Multi);
    let out = forward(&multi, &multi_params, 0.0).unwrap();
    assert_eq!(out.stats.cross_origin_distance_reads, 0);

    let single = six_node_graph(GraphForm::Single);
    let out = forward(&single, &single_params, 0.0).unwrap();
    assert!(out.stats.cross_origin_distance_reads > 0);
}

#[test]
fn multigraph_prediction_ignores_cross_origin_geometry() {
    // single ligand atom: its position feeds no within-origin distance,
    // so moving it toward the protein cannot change the prediction
    let mut rng = Xoshiro256::seed_from(29);
    let params = EgnnParams::init(&small_config(GraphForm::Multi, false), &mut rng);
    let far = graph_from(
        &[
            (6, [0.0, 0.0, 0.0], Origin::Protein),
            (7, [1.5, 0.0, 0.0], Origin::Protein),
            (8, [4.9, 0.0, 0.0], Origin::Ligand),
        ],
        GraphForm::Multi,
        5.0,
    );
    let near = graph_from(
        &[
            (6, [0.0, 0.0, 0.0], Origin::Protein),
            (7, [1.5, 0.0, 0.0], Origin::Protein),
            (8, [4.5, 0.0, 0.0], Origin::Ligand),
        ],
        GraphForm::Multi,
        5.0,
    );
    let a = forward(&far, &params, 0.0).unwrap().prediction;
    let b = forward(&near, &params, 0.0).unwrap().prediction;
    assert_eq!(a, b);

    // the single-graph model does see the change
    let single_params = EgnnParams::init(&small_config(GraphForm::Single, false), &mut rng);
    let far_s = graph_from(
        &[
            (6, [0.0, 0.0, 0.0], Origin::Protein),
            (7, [1.5, 0.0, 0.0], Origin::Protein),
            (8, [4.9, 0.0, 0.0], Origin::Ligand),
        ],
        GraphForm::Single,
        5.0,
    );
    let near_s = graph_from(
        &[
            (6, [0.0, 0.0, 0.0], Origin::Protein),
            (7, [1.5, 0.0, 0.0], Origin::Protein),
            (8, [4.5, 0.0, 0.0], Origin::Ligand),
        ],
        GraphForm::Single,
        5.0,
    );
    let a = forward(&far_s, &single_params, 0.0).unwrap().prediction;
    let b = forward(&near_s, &single_params, 0.0).unwrap().prediction;
    assert_ne!(a, b);
}

fn chain_graph(n: usize, label_scale: f64) -> LabeledGraph {
    let atoms: Vec<(u8, [f64; 3], Origin)> = (0..n)
        .map(|k| {
            (
                6u8,
                [1.5 * k as f64, 0.3 * (k % 2) as f64, 0.0],
                Origin::Ligand,
            )
        })
        .collect();
    LabeledGraph {
        id: format!("chain{n}"),
        graph: graph_from(&atoms, GraphForm::Single, 5.0),
        label: label_scale * n as f64,
    }
}

#[test]
fn learns_node_count_signal() {
    let train_set: Vec<LabeledGraph> = (2..=9).map(|n| chain_graph(n, 0.1)).collect();
    let mut rng = Xoshiro256::seed_from(31);
    let params = EgnnParams::init(&small_config(GraphForm::Single, false), &mut rng);
    let config = TrainConfig {
        lr: 5e-3,
        epochs: 300,
        early_stopping_patience: 300,
        ..Default::default()
    };
    let outcome = train(params, &train_set, None, &config).unwrap();
    let final_mse = evaluate_mse(&outcome.params, &train_set).unwrap();
    assert!(final_mse < 1e-2, "train MSE {final_mse}");
}

#[test]
fn early_stopping_on_constant_validation() {
    let train_set: Vec<LabeledGraph> = (2..=5).map(|n| chain_graph(n, 0.1)).collect();
    // constant labels in the validation set: loss can never improve once flat
    let val_set: Vec<LabeledGraph> = (2..=4)
        .map(|n| {
            let mut g = chain_graph(n, 0.0);
            g.label = 0.0;
            g
        })
        .collect();
    let mut rng = Xoshiro256::seed_from(37);
    let params = EgnnParams::init(&small_config(GraphForm::Single, false), &mut rng);
    let patience = 5;
    let config = TrainConfig {
        lr: 1e-12, // negligible updates: val loss is effectively constant
        epochs: 1000,
        early_stopping_patience: patience,
        ..Default::default()
    };
    let outcome = train(params, &train_set, Some(&val_set), &config).unwrap();
    assert!(
        outcome.history.len() <= patience + 1,
        "ran {} epochs",
        outcome.history.len()
    );
}

#[test]
fn identical_seeds_identical_history() {
    let train_set: Vec<LabeledGraph> = (2..=6).map(|n| chain_graph(n, 0.1)).collect();
    let config = TrainConfig {
        epochs: 20,
        ..Default::default()
    };
    let run = || {
        let mut rng = Xoshiro256::seed_from(41);
        let params = EgnnParams::init(&small_config(GraphForm::Single, false), &mut rng);
        train(params, &train_set, None, &config).unwrap().history
    };
    assert_eq!(run(), run());
}

#[test]
fn qm_targets_arithmetic() {
    let mols: Vec<QmMolecule> = (2..=4)
        .map(|n| QmMolecule {
            id: format!("m{n}"),
            graph: chain_graph(n, 0.0).graph,
            total_energy: -10.0 * n as f64,
        })
        .collect();
    let mut self_energies = BTreeMap::new();
    self_energies.insert(6u8, -9.5);
    let targets = qm_targets(&mols, &self_energies).unwrap();
    // hand subtraction on all three fixtures
    assert_eq!(targets[0], -20.0 - 2.0 * -9.5);
    assert_eq!(targets[1], -30.0 - 3.0 * -9.5);
    assert_eq!(targets[2], -40.0 - 4.0 * -9.5);

    // total equal to self sum → target zero
    let zero_mol = [QmMolecule {
        id: "z".into(),
        graph: chain_graph(3, 0.0).graph,
        total_energy: 3.0 * -9.5,
    }];
    assert_eq!(qm_targets(&zero_mol, &self_energies).unwrap()[0], 0.0);

    // missing element
    let mut incomplete = BTreeMap::new();
    incomplete.insert(1u8, -0.5);
    assert!(matches!(
        qm_targets(&mols, &incomplete),
        Err(EgnnError::MissingSelfEnergy { element: 6 })
    ));
}

#[test]
fn schedule_validation() {
    let good = DiffusionSchedule::cosine(50);
    good.validate().unwrap();
    assert!(good.alpha[0] > 1.0 - 1e-12);
    assert!(*good.alpha.last().unwrap() < 1e-9);

    let bad = DiffusionSchedule {
        alpha: vec![1.0, 0.5, 0.0],
        sigma: vec![0.0, 0.5, 1.0], // 0.25+0.25 ≠ 1 at step 1
    };
    assert!(matches!(bad.validate(), Err(EgnnError::BadSchedule { step: 1, .. })));
}

#[test]
fn noised_coords_stay_com_free() {
    let mut rng = Xoshiro256::seed_from(43);
    let mut graph = chain_graph(6, 0.0).graph;
    center_graph(&mut graph);
    let x: Vec<f64> = graph.nodes.iter().flat_map(|n| n.pos.into_iter()).collect();
    let schedule = DiffusionSchedule::cosine(100);
    for t in [1usize, 50, 99] {
        let eps = com_free_noise(6, &mut rng);
        let z = noised_coords(&x, &eps, schedule.alpha[t], schedule.sigma[t]);
        for axis in 0..3 {
            let com: f64 = (0..6).map(|i| z[i * 3 + axis]).sum::<f64>() / 6.0;
            assert!(com.abs() < 1e-10, "t {t} axis {axis} com {com}");
        }
    }
}

#[test]
fn diffusion_loss_decreases() {
    let mols: Vec<MolGraph> = (3..=7).map(|n| chain_graph(n, 0.0).graph).collect();
    let mut rng = Xoshiro256::seed_from(47);
    let config = EgnnConfig {
        coord_updates: true,
        ..small_config(GraphForm::Single, true)
    };
    let params = EgnnParams::init(&config, &mut rng);
    let schedule = DiffusionSchedule::cosine(50);
    let dconfig = DiffusionConfig {
        steps: 50,
        epochs: 60,
        lr: 2e-3,
        seed: 7,
    };
    let (_, losses) = pretrain_diffusion(&mols, &schedule, params, &dconfig).unwrap();
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(
        tail < head,
        "loss did not decrease: first10 {head}, last10 {tail}"
    );
}

#[test]
fn transfer_stage1_freezes_backbone_bits() {
    let train_set: Vec<LabeledGraph> = (2..=7).map(|n| chain_graph(n, 0.1)).collect();
    let mut rng = Xoshiro256::seed_from(53);
    let config = small_config(GraphForm::Single, false);
    let backbone = EgnnParams::init(&config, &mut rng);

    let outcome = transfer(
        &backbone,
        &config,
        &train_set,
        None,
        &TransferConfig {
            stage1_epochs: 15,
            stage2_epochs: 5,
            head_seed: 99,
            ..Default::default()
        },
    )
    .unwrap();

    // backbone tensors bit-identical after stage 1
    let before: Vec<(String, Vec<u64>)> = backbone
        .named_tensors()
        .into_iter()
        .filter(|(n, _)| EgnnParams::is_backbone(n))
        .map(|(n, t)| (n, t.data.iter().map(|v| v.to_bits()).collect()))
        .collect();
    let after: Vec<(String, Vec<u64>)> = outcome
        .params_after_stage1
        .named_tensors()
        .into_iter()
        .filter(|(n, _)| EgnnParams::is_backbone(n))
        .map(|(n, t)| (n, t.data.iter().map(|v| v.to_bits()).collect()))
        .collect();
    assert_eq!(before, after);

    // head tensors must have moved away from their fresh initialisation
    let mut head_rng = Xoshiro256::seed_from(99);
    let fresh = EgnnParams::init(&config, &mut head_rng);
    let moved = outcome
        .params_after_stage1
        .head
        .weights
        .iter()
        .zip(&fresh.head.weights)
        .any(|(a, b)| a.data != b.data);
    assert!(moved, "head did not train in stage 1");
}

#[test]
fn transfer_rejects_mismatched_shapes() {
    let mut rng = Xoshiro256::seed_from(59);
    let small = EgnnParams::init(&small_config(GraphForm::Single, false), &mut rng);
    let bigger = EgnnConfig {
        c_hidden: 16,
        ..small_config(GraphForm::Single, false)
    };
    match match_backbone(&small, &bigger, 0) {
        Err(EgnnError::BackboneShapeMismatch(names)) => {
            assert!(names.iter().any(|n| n.contains("embedding")));
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn diffusion_backbone_transfers_with_coord_mlps_detached() {
    let mut rng = Xoshiro256::seed_from(61);
    let diff_config = EgnnConfig {
        coord_updates: true,
        ..small_config(GraphForm::Single, true)
    };
    let diff_params = EgnnParams::init(&diff_config, &mut rng);
    // target: predictive, no coordinate updates
    let target_config = small_config(GraphForm::Single, false);
    let matched = match_backbone(&diff_params, &target_config, 3).unwrap();
    assert!(matched.layers.iter().all(|l| l.coord.is_none()));
    assert_eq!(matched.embedding, diff_params.embedding);
}

#[test]
fn checkpoint_round_trip_with_model_kind() {
    let dir = std::env::temp_dir().join("egnn_ckpt_test");
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = Xoshiro256::seed_from(67);
    let params = EgnnParams::init(&small_config(GraphForm::Multi, false), &mut rng);
    let prefix = dir.join("model_multi");
    params.save(&prefix, "egnn_qm").unwrap();
    let (kind, loaded) = EgnnParams::load(&prefix).unwrap();
    assert_eq!(kind, "egnn_qm");
    assert_eq!(loaded, params);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn hydrogen_mode_changes_inputs_and_prediction() {
    use affbench_core::molgraph::{build_graph, GraphConfig, HydrogenMode};
    use affbench_core::structio::{Atom, Bond, BondOrder, Ligand};

    let atom = |element: u8, pos: [f64; 3], hetero: bool| Atom {
        element,
        position: pos,
        name: "X".into(),
        residue_name: if hetero { String::new() } else { "ALA".into() },
        chain_id: 'A',
        residue_seq: 1,
        is_hetero: hetero,
        formal_charge: 0,
    };
    // ligand with an O-H (polar) and C-H (apolar)
    let ligand = Ligand {
        name: "LIG".into(),
        atoms: vec![
            atom(8, [0.0, 0.0, 0.0], true),
            atom(6, [1.4, 0.0, 0.0], true),
            atom(1, [-0.9, 0.3, 0.0], true),
            atom(1, [1.9, 0.9, 0.0], true),
        ],
        bonds: vec![
            Bond { i: 0, j: 1, order: BondOrder::Single },
            Bond { i: 0, j: 2, order: BondOrder::Single },
            Bond { i: 1, j: 3, order: BondOrder::Single },
        ],
    };
    let pocket = vec![atom(7, [3.0, 0.0, 0.0], false), atom(6, [3.5, 1.5, 0.0], false)];

    let mut rng = Xoshiro256::seed_from(71);
    let params = EgnnParams::init(&small_config(GraphForm::Single, false), &mut rng);

    let graph_for = |mode: HydrogenMode| {
        let cfg = GraphConfig {
            mode,
            ..GraphConfig::default()
        };
        build_graph(&pocket, &ligand, &cfg).unwrap()
    };
    let g_none = graph_for(HydrogenMode::None);
    let g_polar = graph_for(HydrogenMode::Polar);
    let g_explicit = graph_for(HydrogenMode::Explicit);
    assert!(g_none.nodes.len() <= g_polar.nodes.len());
    assert!(g_polar.nodes.len() < g_explicit.nodes.len());

    let p_none = forward(&g_none, &params, 0.0).unwrap().prediction;
    let p_explicit = forward(&g_explicit, &params, 0.0).unwrap().prediction;
    assert_ne!(p_none, p_explicit);

    // no hydrogens anywhere: mode cannot matter
    let bare_ligand = Ligand {
        name: "LIG".into(),
        atoms: vec![atom(8, [0.0, 0.0, 0.0], true), atom(6, [1.4, 0.0, 0.0], true)],
        bonds: vec![Bond { i: 0, j: 1, order: BondOrder::Single }],
    };
    let bare_pocket = vec![atom(7, [3.0, 0.0, 0.0], false)];
    let bare = |mode: HydrogenMode| {
        let cfg = GraphConfig { mode, ..GraphConfig::default() };
        let g = build_graph(&bare_pocket, &bare_ligand, &cfg).unwrap();
        forward(&g, &params, 0.0).unwrap().prediction
    };
    assert_eq!(bare(HydrogenMode::None), bare(HydrogenMode::Explicit));
}
