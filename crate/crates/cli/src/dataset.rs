//! Artifact IO between stages: prepared complexes, labeled graphs,
//! prediction tables and the synthetic pre-training sets.

use crate::config::{GraphSection, RunConfig};
use crate::{data_err, Result};
use affbench_core::molgraph::{
    build_graph, extract_pocket, GraphConfig, GraphForm, GraphNode, MolGraph, Origin,
};
use affbench_core::structio::{
    load_index, parse_pdb, parse_sdf, write_pdb, write_sdf, ComplexRecord, IndexEntry,
};
use affbench_egnn::QmMolecule;
use affbench_rng::Xoshiro256;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreparedEntry {
    pub structure_id: String,
    pub uniprot_id: String,
    pub p_affinity: f64,
    pub ok: bool,
    #[serde(default)]
    pub error: Option<String>,
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    load_index(&text).map_err(|e| data_err(format!("index: {e}")))
}

pub fn load_raw_complex(
    structures_dir: &Path,
    id: &str,
) -> Result<(affbench_core::ProteinStructure, affbench_core::Ligand)> {
    let pdb_path = structures_dir.join(format!("{id}.pdb"));
    let sdf_path = structures_dir.join(format!("{id}.sdf"));
    let pdb_text = std::fs::read_to_string(&pdb_path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", pdb_path.display())))?;
    let sdf_text = std::fs::read_to_string(&sdf_path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", sdf_path.display())))?;
    let mut protein =
        parse_pdb(&pdb_text).map_err(|e| data_err(format!("{id}.pdb: {e}")))?;
    protein.structure_id = id.to_string();
    let ligand = parse_sdf(&sdf_text).map_err(|e| data_err(format!("{id}.sdf: {e}")))?;
    Ok((protein, ligand))
}

pub fn write_prepared(
    out_dir: &Path,
    record: &ComplexRecord,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let dir = out_dir.join("prepared");
    std::fs::create_dir_all(&dir)
        .map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))?;
    let pdb_path = dir.join(format!("{}.pdb", record.structure_id));
    let sdf_path = dir.join(format!("{}.sdf", record.structure_id));
    std::fs::write(&pdb_path, write_pdb(&record.protein))
        .map_err(|e| data_err(format!("cannot write {}: {e}", pdb_path.display())))?;
    std::fs::write(&sdf_path, write_sdf(&record.ligand))
        .map_err(|e| data_err(format!("cannot write {}: {e}", sdf_path.display())))?;
    Ok((pdb_path, sdf_path))
}

pub fn read_prepared_index(out_dir: &Path) -> Result<Vec<PreparedEntry>> {
    let path = out_dir.join("prepared").join("index.json");
    let text = std::fs::read_to_string(&path).map_err(|_| {
        data_err("missing prepared index; run `affbench prepare` first".to_string())
    })?;
    serde_json::from_str(&text).map_err(|e| data_err(format!("prepared index: {e}")))
}

/// Loads every successfully prepared complex back from disk.
pub fn load_prepared_records(out_dir: &Path) -> Result<BTreeMap<String, ComplexRecord>> {
    let entries = read_prepared_index(out_dir)?;
    let dir = out_dir.join("prepared");
    let mut out = BTreeMap::new();
    for entry in entries.iter().filter(|e| e.ok) {
        let id = &entry.structure_id;
        let pdb_text = std::fs::read_to_string(dir.join(format!("{id}.pdb")))
            .map_err(|e| data_err(format!("prepared {id}.pdb: {e}")))?;
        let sdf_text = std::fs::read_to_string(dir.join(format!("{id}.sdf")))
            .map_err(|e| data_err(format!("prepared {id}.sdf: {e}")))?;
        let mut protein = parse_pdb(&pdb_text).map_err(|e| data_err(format!("{id}.pdb: {e}")))?;
        protein.structure_id = id.clone();
        let ligand = parse_sdf(&sdf_text).map_err(|e| data_err(format!("{id}.sdf: {e}")))?;
        out.insert(
            id.clone(),
            ComplexRecord {
                structure_id: id.clone(),
                uniprot_id: entry.uniprot_id.clone(),
                protein,
                ligand,
                p_affinity: entry.p_affinity,
            },
        );
    }
    Ok(out)
}

/// Pocket extraction plus graph construction for one prepared complex.
pub fn complex_graph(record: &ComplexRecord, graph: &GraphSection) -> Result<MolGraph> {
    let mut protein_atoms = record.protein.atoms.clone();
    affbench_core::molgraph::filter_protein_hydrogens(&mut protein_atoms, graph.hydrogen_mode);
    let mut ligand = record.ligand.clone();
    affbench_core::molgraph::filter_ligand_hydrogens(&mut ligand, graph.hydrogen_mode);
    let filtered_protein = affbench_core::ProteinStructure {
        structure_id: record.protein.structure_id.clone(),
        atoms: protein_atoms,
    };
    let pocket = extract_pocket(&filtered_protein, &ligand, graph.pocket_radius)
        .map_err(|e| data_err(format!("{}: {e}", record.structure_id)))?;
    let cfg = GraphConfig {
        mode: graph.hydrogen_mode,
        form: graph.form,
        cutoff: graph.cutoff,
        max_nodes: graph.max_nodes,
    };
    build_graph(&pocket, &ligand, &cfg).map_err(|e| data_err(format!("{}: {e}", record.structure_id)))
}

pub fn write_predictions_csv(path: &Path, rows: &[(String, f64, f64)]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| data_err(format!("cannot create {}: {e}", parent.display())))?;
    }
    let mut text = String::from("structure_id,y_true,y_pred\n");
    for (id, y_true, y_pred) in rows {
        text.push_str(&format!("{id},{y_true},{y_pred}\n"));
    }
    std::fs::write(path, text)
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(data_err(format!(
                "{}: line {} has {} fields",
                path.display(),
                k + 1,
                fields.len()
            )));
        }
        let y_true: f64 = fields[1]
            .parse()
            .map_err(|_| data_err(format!("{}: bad y_true at line {}", path.display(), k + 1)))?;
        let y_pred: f64 = fields[2]
            .parse()
            .map_err(|_| data_err(format!("{}: bad y_pred at line {}", path.display(), k + 1)))?;
        out.push((fields[0].to_string(), y_true, y_pred));
    }
    Ok(out)
}

pub fn plan_file_name(fraction: f64, fold: usize) -> String {
    format!("plan_f{:03}_k{fold}.json", (fraction * 100.0).round() as u32)
}

pub fn combo_tag(fraction: f64, fold: usize) -> String {
    format!("f{:03}_k{fold}", (fraction * 100.0).round() as u32)
}

/// Synthetic molecule graphs for toy-scale pre-training: short random
/// chains of C/N/O with mild geometric jitter, single-graph form.
pub fn synth_molecules(seed: u64, count: usize) -> Vec<MolGraph> {
    let mut rng = Xoshiro256::seed_from(seed);
    let elements = [6u8, 6, 6, 7, 8]; // carbon-rich
    (0..count)
        .map(|_| {
            let n = 3 + rng.next_below(6);
            let nodes: Vec<GraphNode> = (0..n)
                .map(|k| {
                    let z = elements[rng.next_below(elements.len())];
                    GraphNode {
                        z,
                        class: affbench_core::molgraph::element_class(z),
                        pos: [
                            1.5 * k as f64 + rng.next_range(-0.2, 0.2),
                            rng.next_range(-0.5, 0.5),
                            rng.next_range(-0.5, 0.5),
                        ],
                        origin: Origin::Ligand,
                    }
                })
                .collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let d: f64 = (0..3)
                        .map(|k| (nodes[i].pos[k] - nodes[j].pos[k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if d <= 5.0 {
                        edges.push((i, j));
                    }
                }
            }
            MolGraph {
                nodes,
                edges,
                form: GraphForm::Single,
            }
        })
        .collect()
}

/// Element self-energies for the synthetic energy task.
pub fn synth_self_energies() -> BTreeMap<u8, f64> {
    let mut table = BTreeMap::new();
    table.insert(1u8, -0.5);
    table.insert(6, -38.0);
    table.insert(7, -54.6);
    table.insert(8, -75.1);
    table
}

/// Synthetic energy-labeled molecules: total energy is the self-energy sum
/// plus harmonic pair terms over the graph edges, so the interaction target
/// is learnable from geometry alone.
pub fn synth_qm_set(seed: u64, count: usize) -> (Vec<QmMolecule>, BTreeMap<u8, f64>) {
    let table = synth_self_energies();
    let molecules = synth_molecules(seed, count)
        .into_iter()
        .enumerate()
        .map(|(i, graph)| {
            let self_sum: f64 = graph.nodes.iter().map(|n| table[&n.z]).sum();
            let harmonic: f64 = graph
                .edges
                .iter()
                .map(|&(a, b)| {
                    let d: f64 = (0..3)
                        .map(|k| (graph.nodes[a].pos[k] - graph.nodes[b].pos[k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    0.5 * (d - 1.5).powi(2)
                })
                .sum();
            QmMolecule {
                id: format!("synth{i:03}"),
                graph,
                total_energy: self_sum + harmonic,
            }
        })
        .collect();
    (molecules, table)
}

/// Sorted fraction list from the config with stable ordering.
pub fn sorted_fractions(config: &RunConfig) -> Vec<f64> {
    let mut fractions = config.split.fractions.clone();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    fractions
}

/// Fold count for a fraction: the 0% split has a single fold.
pub fn folds_for(config: &RunConfig, fraction: f64) -> usize {
    if fraction == 0.0 {
        1
    } else {
        config.split.folds
    }
}
