//! The eight pipeline stages. Every stage validates its upstream manifests
//! (config hash and output hashes) before running and writes its own
//! manifest afterwards.

use crate::config::RunConfig;
use crate::dataset::{
    combo_tag, folds_for, load_prepared_records, load_raw_complex,
    plan_file_name, read_index, read_predictions_csv, read_prepared_index, sorted_fractions,
    write_predictions_csv, write_prepared, PreparedEntry,
};
use crate::manifest::{check_upstream, ManifestWriter};
use crate::models::{train_and_predict, ModelKind, TrainContext};
use crate::{config_err, data_err, Result, RunError};
use affbench_core::evalkit::{stratify, TaggedPrediction};
use affbench_core::featkit;
use affbench_core::lowsim::{
    build_plan, filter_other_proteins, select_case_study, CaseStudySet, SplitInput, SplitPlan,
};
use affbench_core::molgraph::{ecfp, Fingerprint, FingerprintKind};
use affbench_core::simkit::{
    audit_overlap, ligand_similarity_rect, load_protein_similarity, protein_similarity_proxy,
    OverlapReport, ProteinSimSource, RectSimilarity,
};
use affbench_core::structio::{prepare_complex, ComplexRecord, PrepConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Similarity,
    Split,
    Audit,
    Featurize,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Similarity => "similarity",
            Stage::Split => "split",
            Stage::Audit => "audit",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

pub fn run_stage(stage: Stage, config: &RunConfig, model_filter: Option<&str>) -> Result<()> {
    std::fs::create_dir_all(&config.paths.output_dir)
        .map_err(|e| data_err(format!("cannot create output dir: {e}")))?;
    match stage {
        Stage::Prepare => stage_prepare(config),
        Stage::Similarity => stage_similarity(config),
        Stage::Split => stage_split(config),
        Stage::Audit => stage_audit(config),
        Stage::Featurize => stage_featurize(config),
        Stage::Train => stage_train(config, model_filter),
        Stage::Evaluate => stage_evaluate(config),
        Stage::Report => stage_report(config),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| data_err(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn stage_prepare(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    let entries = read_index(&config.paths.index)?;
    let prep_config = PrepConfig {
        buffer_blacklist: config.prepare.buffer_blacklist.clone(),
    };

    struct PrepOutcome {
        entry: PreparedEntry,
        record: Option<ComplexRecord>,
        warnings: Vec<serde_json::Value>,
    }

    let outcomes: Vec<PrepOutcome> = entries
        .par_iter()
        .map(|ix| {
            let attempt = (|| -> Result<(ComplexRecord, Vec<serde_json::Value>)> {
                let (protein, ligand) =
                    load_raw_complex(&config.paths.structures_dir, &ix.structure_id)?;
                let prepared = prepare_complex(
                    &protein,
                    &ligand,
                    config.prepare.hydrogen_mode,
                    &prep_config,
                )
                .map_err(|e| data_err(e.to_string()))?;
                let warnings = prepared
                    .warnings
                    .iter()
                    .map(|w| {
                        let mut v = serde_json::to_value(w).expect("warning serializes");
                        v["structure_id"] = serde_json::json!(ix.structure_id);
                        v
                    })
                    .collect();
                Ok((
                    ComplexRecord {
                        structure_id: ix.structure_id.clone(),
                        uniprot_id: ix.uniprot_id.clone(),
                        protein: prepared.protein,
                        ligand: prepared.ligand,
                        p_affinity: ix.p_affinity,
                    },
                    warnings,
                ))
            })();
            match attempt {
                Ok((record, warnings)) => PrepOutcome {
                    entry: PreparedEntry {
                        structure_id: ix.structure_id.clone(),
                        uniprot_id: ix.uniprot_id.clone(),
                        p_affinity: ix.p_affinity,
                        ok: true,
                        error: None,
                    },
                    record: Some(record),
                    warnings,
                },
                Err(e) => PrepOutcome {
                    entry: PreparedEntry {
                        structure_id: ix.structure_id.clone(),
                        uniprot_id: ix.uniprot_id.clone(),
                        p_affinity: ix.p_affinity,
                        ok: false,
                        error: Some(e.to_string()),
                    },
                    record: None,
                    warnings: Vec::new(),
                },
            }
        })
        .collect();

    let mut manifest = ManifestWriter::new(out, "prepare", &config.snapshot());
    manifest.record_input(&config.paths.index)?;

    let mut diag = String::new();
    let mut index = Vec::with_capacity(outcomes.len());
    let mut survived = 0usize;
    for outcome in &outcomes {
        for w in &outcome.warnings {
            diag.push_str(&w.to_string());
            diag.push('\n');
        }
        if let Some(record) = &outcome.record {
            let (pdb, sdf) = write_prepared(out, record)?;
            manifest.record_output(&pdb)?;
            manifest.record_output(&sdf)?;
            survived += 1;
        }
        index.push(outcome.entry.clone());
    }

    let index_path = out.join("prepared").join("index.json");
    write_text(
        &index_path,
        &serde_json::to_string_pretty(&index).expect("index serializes"),
    )?;
    manifest.record_output(&index_path)?;

    let diag_path = out.join("diagnostics").join("prepare_warnings.jsonl");
    write_text(&diag_path, &diag)?;
    manifest.record_output(&diag_path)?;
    manifest.finish()?;

    println!(
        "prepare: {survived} of {} structures prepared ({} failed)",
        entries.len(),
        entries.len() - survived
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FingerprintFile {
    pub kind: FingerprintKind,
    pub nbits: usize,
    pub radius: usize,
    /// id → hex bitset
    pub entries: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProteinSimFile {
    pub source: ProteinSimSource,
    pub rect: RectSimilarity,
}

fn load_fingerprints(out: &Path) -> Result<(FingerprintFile, BTreeMap<String, Fingerprint>)> {
    let path = out.join("similarity").join("fingerprints.json");
    let file: FingerprintFile = serde_json::from_str(
        &std::fs::read_to_string(&path)
            .map_err(|_| data_err("missing fingerprints; run `affbench similarity` first"))?,
    )
    .map_err(|e| data_err(format!("fingerprints.json: {e}")))?;
    let mut map = BTreeMap::new();
    for (id, hex) in &file.entries {
        let fp = Fingerprint::from_hex(file.kind, file.nbits, hex)
            .ok_or_else(|| data_err(format!("corrupt fingerprint hex for {id}")))?;
        map.insert(id.clone(), fp);
    }
    Ok((file, map))
}

fn split_inputs(
    entries: &[PreparedEntry],
    fingerprints: &BTreeMap<String, Fingerprint>,
) -> Result<Vec<SplitInput>> {
    entries
        .iter()
        .filter(|e| e.ok)
        .map(|e| {
            let fp = fingerprints
                .get(&e.structure_id)
                .ok_or_else(|| data_err(format!("no fingerprint for {}", e.structure_id)))?;
            Ok(SplitInput {
                structure_id: e.structure_id.clone(),
                uniprot_id: e.uniprot_id.clone(),
                fingerprint: fp.clone(),
            })
        })
        .collect()
}

fn selected_case_study(config: &RunConfig, inputs: &[SplitInput]) -> Result<CaseStudySet> {
    let explicit = if config.split.case_study_ids.is_empty() {
        None
    } else {
        Some(config.split.case_study_ids.as_slice())
    };
    select_case_study(inputs, config.split.min_count, explicit)
        .map_err(|e| data_err(e.to_string()))
}

fn stage_similarity(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    check_upstream(out, &config.snapshot(), &["prepare"])?;
    let records = load_prepared_records(out)?;
    let entries = read_prepared_index(out)?;

    // ligand fingerprints for every prepared record
    let bits = config.models.fingerprint_bits;
    let radius = config.models.fingerprint_radius;
    let fingerprints: BTreeMap<String, Fingerprint> = records
        .par_iter()
        .map(|(id, r)| (id.clone(), ecfp(&r.ligand, radius, bits)))
        .collect();

    let inputs = split_inputs(&entries, &fingerprints)?;
    let case = selected_case_study(config, &inputs)?;
    let case_ids: Vec<String> = case.structure_ids();
    let other_ids: Vec<String> = inputs
        .iter()
        .filter(|r| !case.contains_uniprot(&r.uniprot_id))
        .map(|r| r.structure_id.clone())
        .collect();

    let fp_of = |id: &String| (id.clone(), fingerprints[id].clone());
    let ligand_rect = ligand_similarity_rect(
        &other_ids.iter().map(fp_of).collect::<Vec<_>>(),
        &case_ids.iter().map(fp_of).collect::<Vec<_>>(),
    )
    .map_err(|e| data_err(e.to_string()))?;

    let (source, protein_rect) = match &config.paths.protein_similarity_tsv {
        Some(tsv_path) => {
            let text = std::fs::read_to_string(tsv_path)
                .map_err(|e| data_err(format!("cannot read {}: {e}", tsv_path.display())))?;
            let all_ids: Vec<String> = records.keys().cloned().collect();
            let matrix = load_protein_similarity(&text, &all_ids)
                .map_err(|e| data_err(e.to_string()))?;
            let values: Vec<Vec<f64>> = other_ids
                .iter()
                .map(|o| {
                    case_ids
                        .iter()
                        .map(|c| {
                            use affbench_core::simkit::PairSim;
                            matrix.pair_sim(o, c).unwrap_or(0.0)
                        })
                        .collect()
                })
                .collect();
            (
                ProteinSimSource::IngestedTsv,
                rect_from(other_ids.clone(), case_ids.clone(), values),
            )
        }
        None => {
            let values: Vec<Vec<f64>> = other_ids
                .par_iter()
                .map(|o| {
                    case_ids
                        .iter()
                        .map(|c| {
                            protein_similarity_proxy(&records[o].protein, &records[c].protein)
                                .unwrap_or(0.0)
                        })
                        .collect()
                })
                .collect();
            (
                ProteinSimSource::HistogramProxy,
                rect_from(other_ids.clone(), case_ids.clone(), values),
            )
        }
    };

    let mut manifest = ManifestWriter::new(out, "similarity", &config.snapshot());
    let fp_file = FingerprintFile {
        kind: FingerprintKind::Ecfp,
        nbits: bits,
        radius,
        entries: fingerprints.iter().map(|(id, fp)| (id.clone(), fp.to_hex())).collect(),
    };
    let fp_path = out.join("similarity").join("fingerprints.json");
    write_text(&fp_path, &serde_json::to_string_pretty(&fp_file).unwrap())?;
    manifest.record_output(&fp_path)?;

    let lig_path = out.join("similarity").join("ligand_sim.json");
    write_text(&lig_path, &serde_json::to_string_pretty(&ligand_rect).unwrap())?;
    manifest.record_output(&lig_path)?;

    let prot_path = out.join("similarity").join("protein_sim.json");
    write_text(
        &prot_path,
        &serde_json::to_string_pretty(&ProteinSimFile {
            source,
            rect: protein_rect,
        })
        .unwrap(),
    )?;
    manifest.record_output(&prot_path)?;
    manifest.finish()?;

    println!(
        "similarity: {} fingerprints, {}x{} ligand block, protein source {:?}",
        fp_file.entries.len(),
        other_ids.len(),
        case_ids.len(),
        source,
    );
    Ok(())
}

fn rect_from(row_ids: Vec<String>, col_ids: Vec<String>, values: Vec<Vec<f64>>) -> RectSimilarity {
    // serde round-trip to build the private-field struct from parts
    serde_json::from_value(serde_json::json!({
        "row_ids": row_ids,
        "col_ids": col_ids,
        "values": values.into_iter().flatten().collect::<Vec<f64>>(),
    }))
    .expect("rect fields")
}

fn load_protein_sim_file(out: &Path) -> Result<ProteinSimFile> {
    let path = out.join("similarity").join("protein_sim.json");
    serde_json::from_str(
        &std::fs::read_to_string(&path)
            .map_err(|_| data_err("missing protein similarity; run `affbench similarity`"))?,
    )
    .map_err(|e| data_err(format!("protein_sim.json: {e}")))
}

fn stage_split(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    check_upstream(out, &config.snapshot(), &["prepare", "similarity"])?;
    let entries = read_prepared_index(out)?;
    let (_, fingerprints) = load_fingerprints(out)?;
    let inputs = split_inputs(&entries, &fingerprints)?;
    let case = selected_case_study(config, &inputs)?;

    let ligand_rect: RectSimilarity = serde_json::from_str(
        &std::fs::read_to_string(out.join("similarity").join("ligand_sim.json"))
            .map_err(|_| data_err("missing ligand similarity; run `affbench similarity`"))?,
    )
    .map_err(|e| data_err(format!("ligand_sim.json: {e}")))?;
    let protein_sim = load_protein_sim_file(out)?;

    let kept_other = filter_other_proteins(
        &inputs,
        &case,
        &protein_sim.rect,
        &ligand_rect,
        config.split.protein_sim_threshold,
        config.split.ligand_sim_threshold,
    )
    .map_err(|e| data_err(e.to_string()))?;
    let n_candidates = inputs
        .iter()
        .filter(|r| !case.contains_uniprot(&r.uniprot_id))
        .count();
    println!(
        "split: case-study proteins {:?}; {} of {} other structures kept ({} removed)",
        case.counts(),
        kept_other.len(),
        n_candidates,
        n_candidates - kept_other.len()
    );

    let case_ligands: BTreeMap<String, Vec<(String, Fingerprint)>> = case
        .proteins
        .iter()
        .map(|(uniprot, ids)| {
            (
                uniprot.clone(),
                ids.iter().map(|id| (id.clone(), fingerprints[id].clone())).collect(),
            )
        })
        .collect();

    let mut manifest = ManifestWriter::new(out, "split", &config.snapshot());
    for fraction in sorted_fractions(config) {
        let plans = build_plan(
            &case_ligands,
            &kept_other,
            fraction,
            &config.split.seeds[..folds_for(config, fraction)],
            (
                config.split.protein_sim_threshold,
                config.split.ligand_sim_threshold,
            ),
            protein_sim.source,
        )
        .map_err(|e| data_err(e.to_string()))?;
        for plan in &plans {
            let path = out.join("splits").join(plan_file_name(plan.fraction, plan.fold));
            write_text(&path, &serde_json::to_string_pretty(&plan.to_json()).unwrap())?;
            manifest.record_output(&path)?;
            println!(
                "split: fraction {} fold {}: {} train / {} test / {} other",
                plan.fraction,
                plan.fold,
                plan.train_ids().len(),
                plan.test_ids().len(),
                plan.other_train.len()
            );
        }
    }
    manifest.finish()?;
    Ok(())
}

pub fn load_plan(out: &Path, fraction: f64, fold: usize) -> Result<SplitPlan> {
    let path = out.join("splits").join(plan_file_name(fraction, fold));
    let value: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&path)
            .map_err(|_| data_err(format!("missing {}; run `affbench split`", path.display())))?,
    )
    .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    SplitPlan::from_json(&value)
        .ok_or_else(|| data_err(format!("{} is not a valid split plan", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditEntry {
    pub fraction: f64,
    pub fold: usize,
    pub protein_sim_source: ProteinSimSource,
    pub report: OverlapReport,
}

fn stage_audit(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    check_upstream(out, &config.snapshot(), &["prepare", "split"])?;
    let entries = read_prepared_index(out)?;
    let uniprot_of: BTreeMap<&str, &str> = entries
        .iter()
        .map(|e| (e.structure_id.as_str(), e.uniprot_id.as_str()))
        .collect();
    let tag = |ids: &[String]| -> Vec<(String, String)> {
        ids.iter()
            .map(|id| {
                (
                    id.clone(),
                    uniprot_of.get(id.as_str()).unwrap_or(&"").to_string(),
                )
            })
            .collect()
    };

    let mut audits = Vec::new();
    for fraction in sorted_fractions(config) {
        for fold in 0..folds_for(config, fraction) {
            let plan = load_plan(out, fraction, fold)?;
            let train = tag(&plan.global_train_ids());
            let test = tag(&plan.test_ids());
            let report = audit_overlap(&train, &test);
            println!(
                "audit: fraction {fraction} fold {fold}: {} overlapping uniprots, {}/{} train, {}/{} test",
                report.n_overlapping_uniprots,
                report.n_train_overlap,
                report.n_train_total,
                report.n_test_overlap,
                report.n_test_total
            );
            audits.push(AuditEntry {
                fraction,
                fold,
                protein_sim_source: plan.protein_sim_source,
                report,
            });
        }
    }

    let mut manifest = ManifestWriter::new(out, "audit", &config.snapshot());
    let path = out.join("audit").join("audit.json");
    write_text(&path, &serde_json::to_string_pretty(&audits).unwrap())?;
    manifest.record_output(&path)?;
    manifest.finish()?;
    Ok(())
}

fn stage_featurize(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    check_upstream(out, &config.snapshot(), &["prepare"])?;
    let records = load_prepared_records(out)?;
    let mut manifest = ManifestWriter::new(out, "featurize", &config.snapshot());

    // descriptor matrix
    let mut desc_csv = String::from("structure_id");
    for name in affbench_core::molgraph::DESCRIPTOR_NAMES {
        desc_csv.push(',');
        desc_csv.push_str(name);
    }
    desc_csv.push('\n');
    for (id, record) in &records {
        desc_csv.push_str(id);
        for v in affbench_core::molgraph::descriptors(&record.ligand).to_vec() {
            desc_csv.push_str(&format!(",{v}"));
        }
        desc_csv.push('\n');
    }
    let desc_path = out.join("features").join("descriptors.csv");
    write_text(&desc_path, &desc_csv)?;
    manifest.record_output(&desc_path)?;

    // element-pair contact counts
    let cutoff = config.models.rf_score.cutoff;
    let mut pair_csv = String::from("structure_id");
    for name in featkit::PairCountFeatures::names() {
        pair_csv.push(',');
        pair_csv.push_str(&name);
    }
    pair_csv.push('\n');
    for (id, record) in &records {
        pair_csv.push_str(id);
        for v in featkit::rf_score_features(record, cutoff).flatten() {
            pair_csv.push_str(&format!(",{v}"));
        }
        pair_csv.push('\n');
    }
    let pair_path = out.join("features").join("pair_counts.csv");
    write_text(&pair_path, &pair_csv)?;
    manifest.record_output(&pair_path)?;

    // shell counts
    let (n_shells, width) = (
        config.models.shell_mlp.n_shells,
        config.models.shell_mlp.shell_width,
    );
    let mut shell_csv = String::from("structure_id");
    for name in featkit::ShellFeatures::names(n_shells) {
        shell_csv.push(',');
        shell_csv.push_str(&name);
    }
    shell_csv.push('\n');
    for (id, record) in &records {
        shell_csv.push_str(id);
        for v in featkit::shell_features(record, n_shells, width).flatten() {
            shell_csv.push_str(&format!(",{v}"));
        }
        shell_csv.push('\n');
    }
    let shell_path = out.join("features").join("shell_counts.csv");
    write_text(&shell_path, &shell_csv)?;
    manifest.record_output(&shell_path)?;

    manifest.finish()?;
    println!("featurize: wrote feature matrices for {} records", records.len());
    Ok(())
}

fn stage_train(config: &RunConfig, model_filter: Option<&str>) -> Result<()> {
    let out = &config.paths.output_dir;
    check_upstream(out, &config.snapshot(), &["prepare", "split"])?;

    let kinds: Vec<ModelKind> = match model_filter {
        Some(name) => {
            let kind = ModelKind::parse(name)?;
            if kind.is_local() && config.split.fractions.iter().any(|f| *f == 0.0) {
                return Err(config_err(format!(
                    "model {name} is a local model and cannot train at the 0% fraction: \
                     there is no protein-specific training data there. Drop 0.0 from \
                     split.fractions or train a global model."
                )));
            }
            vec![kind]
        }
        None => config
            .models
            .roster
            .iter()
            .map(|n| ModelKind::parse(n))
            .collect::<Result<Vec<_>>>()?,
    };

    let records = load_prepared_records(out)?;
    let entries = read_prepared_index(out)?;
    let (_, fingerprints) = load_fingerprints(out).or_else(|_| {
        // fingerprints are only needed for case-study selection here
        let bits = config.models.fingerprint_bits;
        let radius = config.models.fingerprint_radius;
        let map: BTreeMap<String, Fingerprint> = records
            .iter()
            .map(|(id, r)| (id.clone(), ecfp(&r.ligand, radius, bits)))
            .collect();
        Ok::<_, RunError>((
            FingerprintFile {
                kind: FingerprintKind::Ecfp,
                nbits: bits,
                radius,
                entries: BTreeMap::new(),
            },
            map,
        ))
    })?;
    let inputs = split_inputs(&entries, &fingerprints)?;
    let case = selected_case_study(config, &inputs)?;
    let case_uniprots: BTreeSet<String> = case.proteins.keys().cloned().collect();

    let checkpoint_dir = out.join("checkpoints");
    std::fs::create_dir_all(&checkpoint_dir)
        .map_err(|e| data_err(format!("cannot create checkpoints dir: {e}")))?;
    let ctx = TrainContext::new(config, &records, case_uniprots, &kinds, &checkpoint_dir)?;

    // every (model, fraction, fold) combination, local models skip 0%
    let mut jobs = Vec::new();
    for &kind in &kinds {
        for fraction in sorted_fractions(config) {
            if kind.is_local() && fraction == 0.0 {
                continue;
            }
            for fold in 0..folds_for(config, fraction) {
                jobs.push((kind, fraction, fold));
            }
        }
    }

    let results: Vec<Result<(ModelKind, f64, usize, Vec<(String, f64, f64)>)>> = jobs
        .par_iter()
        .map(|&(kind, fraction, fold)| {
            let plan = load_plan(out, fraction, fold)?;
            let combo = ((fraction * 100.0).round() as u64) * 8 + fold as u64;
            let rows = train_and_predict(&ctx, kind, &plan, combo, &checkpoint_dir)?;
            Ok((kind, fraction, fold, rows))
        })
        .collect();

    let mut manifest = ManifestWriter::new(out, "train", &config.snapshot());
    for result in results {
        let (kind, fraction, fold, rows) = result?;
        let path = out
            .join("predictions")
            .join(kind.name())
            .join(format!("{}.csv", combo_tag(fraction, fold)));
        write_predictions_csv(&path, &rows)?;
        manifest.record_output(&path)?;
        println!(
            "train: {} fraction {fraction} fold {fold}: {} test predictions",
            kind.name(),
            rows.len()
        );
    }
    manifest.finish()?;
    Ok(())
}

fn stage_evaluate(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    check_upstream(out, &config.snapshot(), &["prepare", "train"])?;
    let entries = read_prepared_index(out)?;
    let uniprot_of: BTreeMap<&str, &str> = entries
        .iter()
        .map(|e| (e.structure_id.as_str(), e.uniprot_id.as_str()))
        .collect();

    let mut csv = String::from("model,fraction,fold,scope,uniprot,n,r2,pearson,rmse\n");
    let mut json_rows = Vec::new();

    let pred_root = out.join("predictions");
    let mut model_dirs: Vec<PathBuf> = std::fs::read_dir(&pred_root)
        .map_err(|_| data_err("no predictions found; run `affbench train` first"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    model_dirs.sort();

    for model_dir in &model_dirs {
        let model = model_dir.file_name().unwrap().to_string_lossy().to_string();
        let mut files: Vec<PathBuf> = std::fs::read_dir(model_dir)
            .map_err(|e| data_err(format!("{}: {e}", model_dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
            .collect();
        files.sort();
        for file in &files {
            let stem = file.file_stem().unwrap().to_string_lossy();
            let (fraction, fold) = parse_combo_tag(&stem)
                .ok_or_else(|| data_err(format!("bad prediction file name {stem}")))?;
            let rows = read_predictions_csv(file)?;
            let tagged: Vec<TaggedPrediction> = rows
                .iter()
                .map(|(id, y_true, y_pred)| TaggedPrediction {
                    structure_id: id.clone(),
                    uniprot_id: uniprot_of.get(id.as_str()).unwrap_or(&"").to_string(),
                    y_true: *y_true,
                    y_pred: *y_pred,
                })
                .collect();
            for report in stratify(&tagged) {
                let (scope, uniprot) = report.scope.csv_fields();
                csv.push_str(&format!(
                    "{model},{fraction},{fold},{scope},{uniprot},{},{},{},{}\n",
                    report.n,
                    report.r2.to_field(),
                    report.pearson.to_field(),
                    report.rmse.to_field()
                ));
                json_rows.push(serde_json::json!({
                    "model": model,
                    "fraction": fraction,
                    "fold": fold,
                    "report": report,
                }));
            }
        }
    }

    let mut manifest = ManifestWriter::new(out, "evaluate", &config.snapshot());
    let csv_path = out.join("reports").join("metrics.csv");
    write_text(&csv_path, &csv)?;
    manifest.record_output(&csv_path)?;
    let json_path = out.join("reports").join("metrics.json");
    write_text(
        &json_path,
        &serde_json::to_string_pretty(&json_rows).unwrap(),
    )?;
    manifest.record_output(&json_path)?;
    manifest.finish()?;
    println!("evaluate: wrote {} metric rows", json_rows.len());
    Ok(())
}

fn parse_combo_tag(stem: &str) -> Option<(f64, usize)> {
    // f{percent:03}_k{fold}
    let rest = stem.strip_prefix('f')?;
    let (pct, fold) = rest.split_once("_k")?;
    let pct: u32 = pct.parse().ok()?;
    let fold: usize = fold.parse().ok()?;
    Some((pct as f64 / 100.0, fold))
}

fn stage_report(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    check_upstream(out, &config.snapshot(), &["evaluate"])?;
    let csv_path = out.join("reports").join("metrics.csv");
    let text = std::fs::read_to_string(&csv_path)
        .map_err(|_| data_err("missing metrics.csv; run `affbench evaluate`"))?;

    // (model, fraction) → overall-scope r2 per fold
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 || fields[3] != "overall" {
            continue;
        }
        if let Ok(r2) = fields[6].parse::<f64>() {
            groups
                .entry((fields[0].to_string(), fields[1].to_string()))
                .or_default()
                .push(r2);
        }
    }

    let mut plot = String::from("model,fraction,mean_r2,sd_r2,n_folds\n");
    for ((model, fraction), values) in &groups {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        plot.push_str(&format!("{model},{fraction},{mean},{sd},{}\n", values.len()));
    }

    let mut manifest = ManifestWriter::new(out, "report", &config.snapshot());
    let plot_path = out.join("reports").join("plot_data.csv");
    write_text(&plot_path, &plot)?;
    manifest.record_output(&plot_path)?;
    manifest.finish()?;
    println!("report: wrote {}", plot_path.display());
    let _ = std::io::stdout().flush();
    Ok(())
}
