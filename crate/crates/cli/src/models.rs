//! The benchmark's model roster and per-model training/prediction logic.

use crate::config::RunConfig;
use crate::dataset::{complex_graph, synth_molecules, synth_qm_set};
use crate::{config_err, data_err, Result, RunError};
use affbench_core::featkit::{FeatureSpec, InteractionKind};
use affbench_core::lowsim::{cv_split, SplitPlan};
use affbench_core::molgraph::{FingerprintKind, GraphForm, MolGraph};
use affbench_core::structio::ComplexRecord;
use affbench_egnn::{
    pretrain_diffusion, pretrain_qm, transfer, DiffusionConfig, DiffusionSchedule, EgnnConfig,
    EgnnParams, LabeledGraph, TrainConfig, TransferConfig,
};
use affbench_forest::{ligand_bias_model, molecular_weight_model, TrainedTabularModel};
use affbench_gradkit::nn::{MlpRegressor, MlpRegressorConfig};
use affbench_rng::derive_seed;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    SingleProtein,
    LigandBias,
    MolecularWeight,
    RfScore,
    ShellMlp,
    Egnn,
    EgnnQm,
    EgnnDiff,
}

pub const ROSTER: &[(&str, ModelKind)] = &[
    ("single_protein", ModelKind::SingleProtein),
    ("ligand_bias", ModelKind::LigandBias),
    ("molecular_weight", ModelKind::MolecularWeight),
    ("rf_score", ModelKind::RfScore),
    ("shell_mlp", ModelKind::ShellMlp),
    ("egnn", ModelKind::Egnn),
    ("egnn_qm", ModelKind::EgnnQm),
    ("egnn_diff", ModelKind::EgnnDiff),
];

impl ModelKind {
    pub fn parse(name: &str) -> Result<ModelKind> {
        ROSTER
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, k)| *k)
            .ok_or_else(|| {
                let known: Vec<&str> = ROSTER.iter().map(|(n, _)| *n).collect();
                config_err(format!("unknown model {name:?}; roster: {known:?}"))
            })
    }

    pub fn name(&self) -> &'static str {
        ROSTER.iter().find(|(_, k)| k == self).unwrap().0
    }

    /// Local models train per case-study protein on its own ligands only;
    /// they cannot exist at the 0% fraction.
    pub fn is_local(&self) -> bool {
        matches!(self, ModelKind::SingleProtein | ModelKind::MolecularWeight)
    }

    pub fn is_egnn(&self) -> bool {
        matches!(self, ModelKind::Egnn | ModelKind::EgnnQm | ModelKind::EgnnDiff)
    }
}

/// Data shared by every model training in one `train` stage run.
pub struct TrainContext<'a> {
    pub config: &'a RunConfig,
    pub records: &'a BTreeMap<String, ComplexRecord>,
    pub case_uniprots: BTreeSet<String>,
    /// Graphs for EGNN models, built once per stage.
    pub graphs: BTreeMap<String, MolGraph>,
    pub qm_backbone: Option<EgnnParams>,
    pub diff_backbone: Option<EgnnParams>,
}

impl<'a> TrainContext<'a> {
    pub fn new(
        config: &'a RunConfig,
        records: &'a BTreeMap<String, ComplexRecord>,
        case_uniprots: BTreeSet<String>,
        kinds: &[ModelKind],
        checkpoint_dir: &Path,
    ) -> Result<Self> {
        let needs_graphs = kinds.iter().any(ModelKind::is_egnn);
        let mut graphs = BTreeMap::new();
        if needs_graphs {
            for (id, record) in records {
                graphs.insert(id.clone(), complex_graph(record, &config.graph)?);
            }
        }

        let mut ctx = TrainContext {
            config,
            records,
            case_uniprots,
            graphs,
            qm_backbone: None,
            diff_backbone: None,
        };
        if kinds.contains(&ModelKind::EgnnQm) {
            ctx.qm_backbone = Some(ctx.pretrain_qm_backbone(checkpoint_dir)?);
        }
        if kinds.contains(&ModelKind::EgnnDiff) {
            ctx.diff_backbone = Some(ctx.pretrain_diff_backbone(checkpoint_dir)?);
        }
        Ok(ctx)
    }

    fn egnn_config(&self, form: GraphForm, coord_updates: bool) -> EgnnConfig {
        let e = &self.config.models.egnn;
        EgnnConfig {
            num_layers: e.num_layers,
            c_hidden: e.c_hidden,
            num_rbf: e.num_rbf,
            cutoff: self.config.graph.cutoff,
            coord_updates,
            form,
        }
    }

    fn pretrain_qm_backbone(&self, checkpoint_dir: &Path) -> Result<EgnnParams> {
        let p = &self.config.pretrain;
        let (molecules, self_energies) = synth_qm_set(p.seed, p.n_molecules);
        let config = self.egnn_config(GraphForm::Single, false);
        let mut rng = affbench_rng::Xoshiro256::seed_from(derive_seed(p.seed, 1));
        let initial = EgnnParams::init(&config, &mut rng);
        let outcome = pretrain_qm(
            &molecules,
            &self_energies,
            initial,
            &TrainConfig {
                lr: self.config.models.egnn.lr,
                epochs: p.qm_epochs,
                early_stopping_patience: self.config.models.egnn.patience,
                ..Default::default()
            },
        )
        .map_err(|e| RunError::Training(format!("energy pre-training: {e}")))?;
        let prefix = checkpoint_dir.join("pretrain_qm");
        outcome
            .params
            .save(&prefix, "egnn_qm")
            .map_err(|e| data_err(format!("checkpoint: {e}")))?;
        Ok(outcome.params)
    }

    fn pretrain_diff_backbone(&self, checkpoint_dir: &Path) -> Result<EgnnParams> {
        let p = &self.config.pretrain;
        let molecules = synth_molecules(derive_seed(p.seed, 2), p.n_molecules);
        let config = self.egnn_config(GraphForm::Single, true);
        let mut rng = affbench_rng::Xoshiro256::seed_from(derive_seed(p.seed, 3));
        let initial = EgnnParams::init(&config, &mut rng);
        let schedule = DiffusionSchedule::cosine(p.diffusion_steps);
        let (params, _losses) = pretrain_diffusion(
            &molecules,
            &schedule,
            initial,
            &DiffusionConfig {
                steps: p.diffusion_steps,
                epochs: p.diffusion_epochs,
                lr: self.config.models.egnn.lr,
                seed: derive_seed(p.seed, 4),
            },
        )
        .map_err(|e| RunError::Training(format!("coord-diffusion pre-training: {e}")))?;
        let prefix = checkpoint_dir.join("pretrain_diff");
        params
            .save(&prefix, "egnn_diff")
            .map_err(|e| data_err(format!("checkpoint: {e}")))?;
        Ok(params)
    }

    fn record(&self, id: &str) -> Result<&ComplexRecord> {
        self.records
            .get(id)
            .ok_or_else(|| data_err(format!("structure {id} missing from prepared records")))
    }
}

/// Fingerprint × descriptor grid searched for the classical ligand models.
fn candidate_specs(fp_bits: usize, fp_radius: usize) -> Vec<FeatureSpec> {
    let kinds = [
        FingerprintKind::Ecfp,
        FingerprintKind::Fcfp,
        FingerprintKind::AtomPair,
        FingerprintKind::TopologicalTorsion,
    ];
    let mut specs = Vec::new();
    for kind in kinds {
        for with_descriptors in [false, true] {
            let mut spec = if with_descriptors {
                FeatureSpec::fingerprint_plus_descriptors(kind)
            } else {
                FeatureSpec::fingerprint_only(kind)
            };
            spec.fp_bits = fp_bits;
            spec.fp_radius = fp_radius;
            specs.push(spec);
        }
    }
    specs
}

/// Trained tabular predictor, with a constant fallback for one-sample
/// train sets (possible at the 5% fraction on small proteins).
pub enum TabularPredictor {
    Constant(f64),
    Forest(TrainedTabularModel),
    ShellMlpModel {
        assembler: affbench_core::featkit::FittedAssembler,
        regressor: MlpRegressor,
    },
}

impl TabularPredictor {
    pub fn predict(&self, records: &[&ComplexRecord]) -> Result<Vec<f64>> {
        match self {
            TabularPredictor::Constant(value) => Ok(vec![*value; records.len()]),
            TabularPredictor::Forest(model) => model
                .predict(records)
                .map_err(|e| RunError::Training(e.to_string())),
            TabularPredictor::ShellMlpModel { assembler, regressor } => {
                let table = assembler
                    .transform(records)
                    .map_err(|e| RunError::Training(e.to_string()))?;
                regressor
                    .predict(&table.rows)
                    .map_err(|e| RunError::Training(e.to_string()))
            }
        }
    }
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len().max(1) as f64
}

/// Model selection over candidate feature specs by a random 80:20 split,
/// then a refit of the winner on the full train set.
fn fit_forest_with_selection(
    train: &[&ComplexRecord],
    candidates: &[FeatureSpec],
    forest_config: &affbench_forest::ForestConfig,
    cv_ratio: f64,
    cv_seed: u64,
) -> Result<TabularPredictor> {
    match train.len() {
        0 => return Err(data_err("empty train set")),
        1 => return Ok(TabularPredictor::Constant(train[0].p_affinity)),
        _ => {}
    }

    let selected = if train.len() >= 3 && candidates.len() > 1 {
        let ids: Vec<String> = train.iter().map(|r| r.structure_id.clone()).collect();
        let (inner_ids, val_ids) =
            cv_split(&ids, cv_ratio, cv_seed).map_err(|e| data_err(e.to_string()))?;
        let by_id: BTreeMap<&str, &ComplexRecord> = train
            .iter()
            .map(|r| (r.structure_id.as_str(), *r))
            .collect();
        let inner: Vec<&ComplexRecord> = inner_ids.iter().map(|id| by_id[id.as_str()]).collect();
        let val: Vec<&ComplexRecord> = val_ids.iter().map(|id| by_id[id.as_str()]).collect();
        let val_truth: Vec<f64> = val.iter().map(|r| r.p_affinity).collect();

        let mut best: Option<(f64, usize)> = None;
        for (k, spec) in candidates.iter().enumerate() {
            let model = match TrainedTabularModel::fit(&inner, spec, forest_config) {
                Ok(m) => m,
                Err(_) => continue, // e.g. all-constant features on a tiny inner set
            };
            let preds = model
                .predict(&val)
                .map_err(|e| RunError::Training(e.to_string()))?;
            let score = mse(&preds, &val_truth);
            if best.map(|(s, _)| score < s).unwrap_or(true) {
                best = Some((score, k));
            }
        }
        best.map(|(_, k)| k).unwrap_or(0)
    } else {
        0
    };

    let model = TrainedTabularModel::fit(train, &candidates[selected], forest_config)
        .map_err(|e| RunError::Training(e.to_string()))?;
    Ok(TabularPredictor::Forest(model))
}

fn shell_mlp_fit(
    ctx: &TrainContext,
    train: &[&ComplexRecord],
    combo_seed: u64,
) -> Result<TabularPredictor> {
    if train.len() == 1 {
        return Ok(TabularPredictor::Constant(train[0].p_affinity));
    }
    let s = &ctx.config.models.shell_mlp;
    let spec = FeatureSpec::interaction_only(InteractionKind::Shells {
        n_shells: s.n_shells,
        width: s.shell_width,
    });
    let assembler = affbench_core::featkit::fit_assembler(&spec, train)
        .map_err(|e| RunError::Training(e.to_string()))?;
    let table = assembler
        .transform(train)
        .map_err(|e| RunError::Training(e.to_string()))?;
    let labels: Vec<f64> = train.iter().map(|r| r.p_affinity).collect();

    // random early-stopping holdout when the train set is big enough
    let n = table.rows.len();
    let (fit_x, fit_y, val) = if n >= 5 {
        let n_val = ((n as f64 * (1.0 - ctx.config.train.es_ratio)).round_ties_even() as usize)
            .max(1);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = affbench_rng::Xoshiro256::seed_from(derive_seed(
            ctx.config.train.es_seed,
            combo_seed,
        ));
        rng.shuffle(&mut order);
        let (fit_idx, val_idx) = order.split_at(n - n_val);
        (
            fit_idx.iter().map(|&i| table.rows[i].clone()).collect::<Vec<_>>(),
            fit_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
            Some((
                val_idx.iter().map(|&i| table.rows[i].clone()).collect::<Vec<_>>(),
                val_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
            )),
        )
    } else {
        (table.rows.clone(), labels.clone(), None)
    };
    let config = MlpRegressorConfig {
        hidden: s.hidden,
        lr: s.lr,
        epochs: s.epochs,
        seed: combo_seed,
        ..Default::default()
    };
    let (regressor, _history) = MlpRegressor::fit(
        &fit_x,
        &fit_y,
        val.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice())),
        &config,
    )
    .map_err(|e| RunError::Training(e.to_string()))?;
    Ok(TabularPredictor::ShellMlpModel {
        assembler,
        regressor,
    })
}

fn labeled_graphs(ctx: &TrainContext, ids: &[String]) -> Result<Vec<LabeledGraph>> {
    ids.iter()
        .map(|id| {
            let record = ctx.record(id)?;
            let graph = ctx
                .graphs
                .get(id)
                .ok_or_else(|| data_err(format!("graph missing for {id}")))?;
            Ok(LabeledGraph {
                id: id.clone(),
                graph: graph.clone(),
                label: record.p_affinity,
            })
        })
        .collect()
}

fn egnn_fit_predict(
    ctx: &TrainContext,
    kind: ModelKind,
    train_ids: &[String],
    test_ids: &[String],
    combo: u64,
    checkpoint_prefix: &Path,
) -> Result<Vec<(String, f64, f64)>> {
    let e = &ctx.config.models.egnn;
    let target_config = ctx.egnn_config(ctx.config.graph.form, false);

    // 80:20 early-stopping split of the train set
    let (inner_ids, val_ids) = if train_ids.len() >= 5 {
        cv_split(
            train_ids,
            ctx.config.train.es_ratio,
            derive_seed(ctx.config.train.es_seed, combo),
        )
        .map_err(|e| data_err(e.to_string()))?
    } else {
        (train_ids.to_vec(), Vec::new())
    };
    let inner = labeled_graphs(ctx, &inner_ids)?;
    let val = labeled_graphs(ctx, &val_ids)?;
    let val_opt = if val.is_empty() { None } else { Some(val.as_slice()) };

    let train_config = TrainConfig {
        lr: e.lr,
        epochs: e.epochs,
        early_stopping_patience: e.patience,
        ..Default::default()
    };

    let (params, model_kind_tag) = match kind {
        ModelKind::Egnn => {
            let mut rng =
                affbench_rng::Xoshiro256::seed_from(derive_seed(e.init_seed, combo));
            let initial = EgnnParams::init(&target_config, &mut rng);
            let outcome = affbench_egnn::train(initial, &inner, val_opt, &train_config)
                .map_err(|err| RunError::Training(format!("egnn: {err}")))?;
            (outcome.params, "egnn")
        }
        ModelKind::EgnnQm | ModelKind::EgnnDiff => {
            let backbone = match kind {
                ModelKind::EgnnQm => ctx.qm_backbone.as_ref(),
                _ => ctx.diff_backbone.as_ref(),
            }
            .ok_or_else(|| RunError::Training("pre-trained backbone missing".into()))?;
            let p = &ctx.config.pretrain;
            let outcome = transfer(
                backbone,
                &target_config,
                &inner,
                val_opt,
                &TransferConfig {
                    stage1_lr: p.stage1_lr,
                    stage2_lr: p.stage2_lr,
                    stage1_epochs: p.stage1_epochs,
                    stage2_epochs: p.stage2_epochs,
                    early_stopping_patience: e.patience,
                    head_seed: derive_seed(e.init_seed, combo ^ 0x5a5a),
                },
            )
            .map_err(|err| RunError::Training(format!("{}: {err}", kind.name())))?;
            (
                outcome.params,
                if kind == ModelKind::EgnnQm { "egnn_qm" } else { "egnn_diff" },
            )
        }
        _ => unreachable!("not an EGNN variant"),
    };

    params
        .save(checkpoint_prefix, model_kind_tag)
        .map_err(|e| data_err(format!("checkpoint: {e}")))?;

    let mut rows = Vec::with_capacity(test_ids.len());
    for id in test_ids {
        let record = ctx.record(id)?;
        let graph = ctx
            .graphs
            .get(id)
            .ok_or_else(|| data_err(format!("graph missing for {id}")))?;
        let pred = affbench_egnn::forward(graph, &params, 0.0)
            .map_err(|err| RunError::Training(err.to_string()))?
            .prediction;
        rows.push((id.clone(), record.p_affinity, pred));
    }
    Ok(rows)
}

/// Ids of the plan's case-study structures grouped by protein for one side.
fn per_protein(
    ctx: &TrainContext,
    ids: &[String],
) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for id in ids {
        let record = ctx.record(id)?;
        out.entry(record.uniprot_id.clone()).or_default().push(id.clone());
    }
    Ok(out)
}

/// Trains one model for one (fraction, fold) plan and predicts its test
/// set. Returns (structure_id, y_true, y_pred) rows sorted by id.
pub fn train_and_predict(
    ctx: &TrainContext,
    kind: ModelKind,
    plan: &SplitPlan,
    combo: u64,
    checkpoint_dir: &Path,
) -> Result<Vec<(String, f64, f64)>> {
    let test_ids = plan.test_ids();
    let case_train = plan.train_ids();
    let global_train = plan.global_train_ids();
    let fetch =
        |ids: &[String]| -> Result<Vec<&ComplexRecord>> { ids.iter().map(|id| ctx.record(id)).collect() };

    let forest_config = {
        let mut cfg = ctx.config.models.forest.to_config();
        cfg.rng_seed = derive_seed(cfg.rng_seed, combo);
        cfg
    };
    let candidates = candidate_specs(
        ctx.config.models.fingerprint_bits,
        ctx.config.models.fingerprint_radius,
    );
    let cv_seed = derive_seed(ctx.config.split.cv_seed, combo);

    let mut rows: Vec<(String, f64, f64)> = match kind {
        ModelKind::SingleProtein | ModelKind::MolecularWeight => {
            let train_by_protein = per_protein(ctx, &case_train)?;
            let test_by_protein = per_protein(ctx, &test_ids)?;
            let mut rows = Vec::new();
            for (uniprot, test_group) in &test_by_protein {
                let Some(train_group) = train_by_protein.get(uniprot) else {
                    continue; // no local model without local training data
                };
                let train_records = fetch(train_group)?;
                let predictor = match kind {
                    ModelKind::MolecularWeight => {
                        if train_records.len() == 1 {
                            TabularPredictor::Constant(train_records[0].p_affinity)
                        } else {
                            TabularPredictor::Forest(
                                molecular_weight_model(&train_records, &forest_config)
                                    .map_err(|e| RunError::Training(e.to_string()))?,
                            )
                        }
                    }
                    _ => fit_forest_with_selection(
                        &train_records,
                        &candidates,
                        &forest_config,
                        ctx.config.train.cv_ratio,
                        cv_seed,
                    )?,
                };
                let test_records = fetch(test_group)?;
                let preds = predictor.predict(&test_records)?;
                for (record, pred) in test_records.iter().zip(preds) {
                    rows.push((record.structure_id.clone(), record.p_affinity, pred));
                }
            }
            rows
        }
        ModelKind::LigandBias => {
            let train_records = fetch(&global_train)?;
            // same grid as the local models, restricted to ligand features
            let predictor = if train_records.len() == 1 {
                TabularPredictor::Constant(train_records[0].p_affinity)
            } else if train_records.len() >= 3 {
                fit_forest_with_selection(
                    &train_records,
                    &candidates,
                    &forest_config,
                    ctx.config.train.cv_ratio,
                    cv_seed,
                )?
            } else {
                TabularPredictor::Forest(
                    ligand_bias_model(&train_records, &candidates[0], &forest_config)
                        .map_err(|e| RunError::Training(e.to_string()))?,
                )
            };
            let test_records = fetch(&test_ids)?;
            let preds = predictor.predict(&test_records)?;
            test_records
                .iter()
                .zip(preds)
                .map(|(r, p)| (r.structure_id.clone(), r.p_affinity, p))
                .collect()
        }
        ModelKind::RfScore => {
            let train_records = fetch(&global_train)?;
            let spec = FeatureSpec::interaction_only(InteractionKind::PairCounts {
                cutoff: ctx.config.models.rf_score.cutoff,
            });
            let model = TrainedTabularModel::fit(&train_records, &spec, &forest_config)
                .map_err(|e| RunError::Training(e.to_string()))?;
            let test_records = fetch(&test_ids)?;
            let preds = model
                .predict(&test_records)
                .map_err(|e| RunError::Training(e.to_string()))?;
            test_records
                .iter()
                .zip(preds)
                .map(|(r, p)| (r.structure_id.clone(), r.p_affinity, p))
                .collect()
        }
        ModelKind::ShellMlp => {
            let train_records = fetch(&global_train)?;
            let predictor = shell_mlp_fit(
                ctx,
                &train_records,
                derive_seed(ctx.config.models.shell_mlp.seed, combo),
            )?;
            let test_records = fetch(&test_ids)?;
            let preds = predictor.predict(&test_records)?;
            test_records
                .iter()
                .zip(preds)
                .map(|(r, p)| (r.structure_id.clone(), r.p_affinity, p))
                .collect()
        }
        ModelKind::Egnn | ModelKind::EgnnQm | ModelKind::EgnnDiff => {
            let prefix = checkpoint_dir.join(format!(
                "{}_{}",
                kind.name(),
                crate::dataset::combo_tag(plan.fraction, plan.fold)
            ));
            egnn_fit_predict(ctx, kind, &global_train, &test_ids, combo, &prefix)?
        }
    };

    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows)
}
