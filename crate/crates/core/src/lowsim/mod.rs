//! Low-similarity benchmark construction: case-study selection, similarity
//! filtering, greedy Tanimoto splits per protein, fraction/fold plans and
//! the shuffled splits used for model selection and early stopping.

use crate::molgraph::Fingerprint;
use crate::simkit::{tanimoto, PairSim, ProteinSimSource, SimError};
use affbench_rng::Xoshiro256;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("explicit case-study id {0} not present in the records")]
    UnknownCaseStudyId(String),
    #[error("fraction {fraction} over {n} ligands yields an empty {side} set")]
    Degenerate {
        fraction: f64,
        n: usize,
        side: &'static str,
    },
    #[error("need at least {need} ids, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("seed list has {got} entries, expected {want} (one per fold)")]
    SeedCount { got: usize, want: usize },
    #[error(transparent)]
    Similarity(#[from] SimError),
    #[error("fraction {0} outside the supported set {{0, 0.05, 0.30, 0.80}}")]
    UnsupportedFraction(f64),
}

/// Minimal per-structure information the splitter needs.
#[derive(Debug, Clone)]
pub struct SplitInput {
    pub structure_id: String,
    pub uniprot_id: String,
    pub fingerprint: Fingerprint,
}

/// Selected case-study proteins with their structure ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudySet {
    /// uniprot → sorted structure ids
    pub proteins: BTreeMap<String, Vec<String>>,
}

impl CaseStudySet {
    pub fn contains_uniprot(&self, uniprot: &str) -> bool {
        self.proteins.contains_key(uniprot)
    }

    pub fn structure_ids(&self) -> Vec<String> {
        self.proteins.values().flatten().cloned().collect()
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        self.proteins
            .iter()
            .map(|(u, ids)| (u.clone(), ids.len()))
            .collect()
    }
}

/// Picks the case-study proteins: the explicit list when given, otherwise
/// every UniProt with strictly more than `min_count` structures.
pub fn select_case_study(
    records: &[SplitInput],
    min_count: usize,
    explicit_ids: Option<&[String]>,
) -> Result<CaseStudySet, SplitError> {
    let mut by_uniprot: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in records {
        by_uniprot
            .entry(r.uniprot_id.clone())
            .or_default()
            .push(r.structure_id.clone());
    }
    for ids in by_uniprot.values_mut() {
        ids.sort_unstable();
    }

    let proteins = match explicit_ids {
        Some(wanted) => {
            let mut out = BTreeMap::new();
            for u in wanted {
                let ids = by_uniprot
                    .get(u)
                    .ok_or_else(|| SplitError::UnknownCaseStudyId(u.clone()))?;
                out.insert(u.clone(), ids.clone());
            }
            out
        }
        None => by_uniprot
            .into_iter()
            .filter(|(_, ids)| ids.len() > min_count)
            .collect(),
    };
    Ok(CaseStudySet { proteins })
}

/// Drops every non-case-study record that is too similar to the case study:
/// max protein similarity > `protein_thresh` OR max ligand Tanimoto >
/// `ligand_thresh` (strictly greater), plus records sharing a case-study
/// UniProt. Both thresholds default to 0.5 in the pipeline. Returns the
/// surviving structure ids, sorted.
pub fn filter_other_proteins(
    records: &[SplitInput],
    case_study: &CaseStudySet,
    protein_sim: &dyn PairSim,
    ligand_sim: &dyn PairSim,
    protein_thresh: f64,
    ligand_thresh: f64,
) -> Result<Vec<String>, SplitError> {
    let case_ids = case_study.structure_ids();
    let mut kept = Vec::new();
    for r in records {
        if case_study.contains_uniprot(&r.uniprot_id) {
            continue;
        }
        let mut similar = false;
        for cid in &case_ids {
            if protein_sim.pair_sim(&r.structure_id, cid)? > protein_thresh
                || ligand_sim.pair_sim(&r.structure_id, cid)? > ligand_thresh
            {
                similar = true;
                break;
            }
        }
        if !similar {
            kept.push(r.structure_id.clone());
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Greedy agglomerative Tanimoto split of one protein's ligands.
///
/// Train starts from the seed ligand (the `seed_index`-th id in
/// lexicographic order) and repeatedly absorbs the unassigned ligand with
/// the highest Tanimoto to any current train member, ties broken by
/// lexicographic structure id, until |train| = round(fraction·n)
/// (round half to even). The remainder is the test set.
pub fn similarity_split(
    ligands: &[(String, Fingerprint)],
    fraction: f64,
    seed_index: usize,
) -> Result<(Vec<String>, Vec<String>), SplitError> {
    let n = ligands.len();
    if n < 2 {
        return Err(SplitError::TooFew { need: 2, got: n });
    }
    let target = (fraction * n as f64).round_ties_even() as usize;
    if target == 0 {
        return Err(SplitError::Degenerate {
            fraction,
            n,
            side: "train",
        });
    }
    if target >= n {
        return Err(SplitError::Degenerate {
            fraction,
            n,
            side: "test",
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ligands[a].0.cmp(&ligands[b].0));
    let seed = order[seed_index % n];

    let mut in_train = vec![false; n];
    in_train[seed] = true;
    // best similarity of each unassigned ligand to the current train set
    let mut best: Vec<f64> = (0..n)
        .map(|i| {
            if i == seed {
                f64::NEG_INFINITY
            } else {
                tanimoto(&ligands[i].1, &ligands[seed].1).unwrap_or(0.0)
            }
        })
        .collect();

    let mut train_size = 1;
    while train_size < target {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if in_train[i] {
                continue;
            }
            match pick {
                Option::None => pick = Some(i),
                Some(p) => {
                    let better = best[i] > best[p]
                        || (best[i] == best[p] && ligands[i].0 < ligands[p].0);
                    if better {
                        pick = Some(i);
                    }
                }
            }
        }
        let p = pick.expect("target < n guarantees an unassigned ligand");
        in_train[p] = true;
        train_size += 1;
        for i in 0..n {
            if !in_train[i] {
                let s = tanimoto(&ligands[i].1, &ligands[p].1)?;
                if s > best[i] {
                    best[i] = s;
                }
            }
        }
    }

    let mut train: Vec<String> = (0..n)
        .filter(|&i| in_train[i])
        .map(|i| ligands[i].0.clone())
        .collect();
    let mut test: Vec<String> = (0..n)
        .filter(|&i| !in_train[i])
        .map(|i| ligands[i].0.clone())
        .collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Train,
    Test,
}

/// One benchmarking split: per-structure assignments for the case-study
/// proteins plus the other-proteins train pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fraction: f64,
    pub fold: usize,
    /// case-study structure id → train/test
    pub assignments: BTreeMap<String, Assignment>,
    /// structures that global models add to their train set
    pub other_train: Vec<String>,
    /// uniprot → seed structure id used for this fold
    pub seed_ligands: BTreeMap<String, String>,
    /// (protein similarity, ligand similarity) filter thresholds
    pub thresholds: (f64, f64),
    pub protein_sim_source: ProteinSimSource,
}

impl SplitPlan {
    pub fn train_ids(&self) -> Vec<String> {
        self.assignments
            .iter()
            .filter(|(_, a)| **a == Assignment::Train)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn test_ids(&self) -> Vec<String> {
        self.assignments
            .iter()
            .filter(|(_, a)| **a == Assignment::Test)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Train set for global models: case-study train plus other proteins.
    pub fn global_train_ids(&self) -> Vec<String> {
        let mut ids = self.train_ids();
        ids.extend(self.other_train.iter().cloned());
        ids
    }

    /// Spec'd JSON shape with flat train/test arrays.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "fraction": self.fraction,
            "fold": self.fold,
            "seed_ligands": self.seed_ligands,
            "train": self.train_ids(),
            "test": self.test_ids(),
            "other_train": self.other_train,
            "thresholds": { "protein_sim": self.thresholds.0, "ligand_sim": self.thresholds.1 },
            "protein_sim_source": self.protein_sim_source,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Option<SplitPlan> {
        let fraction = value.get("fraction")?.as_f64()?;
        let fold = value.get("fold")?.as_u64()? as usize;
        let mut assignments = BTreeMap::new();
        for id in value.get("train")?.as_array()? {
            assignments.insert(id.as_str()?.to_string(), Assignment::Train);
        }
        for id in value.get("test")?.as_array()? {
            assignments.insert(id.as_str()?.to_string(), Assignment::Test);
        }
        let other_train = value
            .get("other_train")?
            .as_array()?
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()?;
        let seed_ligands = value
            .get("seed_ligands")?
            .as_object()?
            .iter()
            .map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
            .collect::<Option<BTreeMap<_, _>>>()?;
        let thresholds = (
            value.get("thresholds")?.get("protein_sim")?.as_f64()?,
            value.get("thresholds")?.get("ligand_sim")?.as_f64()?,
        );
        let protein_sim_source =
            serde_json::from_value(value.get("protein_sim_source")?.clone()).ok()?;
        Some(SplitPlan {
            fraction,
            fold,
            assignments,
            other_train,
            seed_ligands,
            thresholds,
            protein_sim_source,
        })
    }
}

pub const SUPPORTED_FRACTIONS: &[f64] = &[0.0, 0.05, 0.30, 0.80];

fn fraction_supported(fraction: f64) -> bool {
    SUPPORTED_FRACTIONS.iter().any(|f| (f - fraction).abs() < 1e-12)
}

/// Builds split plans for one fraction.
///
/// Fraction 0 yields a single fold with every case-study structure in the
/// test set. Positive fractions yield one plan per seed index, each running
/// the greedy similarity split per protein with that fold's seed ligand.
#[allow(clippy::too_many_arguments)]
pub fn build_plan(
    case_ligands: &BTreeMap<String, Vec<(String, Fingerprint)>>,
    other_train: &[String],
    fraction: f64,
    seed_indices: &[usize],
    thresholds: (f64, f64),
    protein_sim_source: ProteinSimSource,
) -> Result<Vec<SplitPlan>, SplitError> {
    if !fraction_supported(fraction) {
        return Err(SplitError::UnsupportedFraction(fraction));
    }

    if fraction == 0.0 {
        let mut assignments = BTreeMap::new();
        for ligands in case_ligands.values() {
            for (id, _) in ligands {
                assignments.insert(id.clone(), Assignment::Test);
            }
        }
        return Ok(vec![SplitPlan {
            fraction,
            fold: 0,
            assignments,
            other_train: other_train.to_vec(),
            seed_ligands: BTreeMap::new(),
            thresholds,
            protein_sim_source,
        }]);
    }

    let mut plans = Vec::with_capacity(seed_indices.len());
    for (fold, &seed_index) in seed_indices.iter().enumerate() {
        let mut assignments = BTreeMap::new();
        let mut seed_ligands = BTreeMap::new();
        for (uniprot, ligands) in case_ligands {
            let mut sorted_ids: Vec<&String> = ligands.iter().map(|(id, _)| id).collect();
            sorted_ids.sort_unstable();
            seed_ligands.insert(
                uniprot.clone(),
                sorted_ids[seed_index % sorted_ids.len()].clone(),
            );
            let (train, test) = similarity_split(ligands, fraction, seed_index)?;
            for id in train {
                assignments.insert(id, Assignment::Train);
            }
            for id in test {
                assignments.insert(id, Assignment::Test);
            }
        }
        plans.push(SplitPlan {
            fraction,
            fold,
            assignments,
            other_train: other_train.to_vec(),
            seed_ligands,
            thresholds,
            protein_sim_source,
        });
    }
    Ok(plans)
}

/// Uniform random partition at `ratio` (train share), deterministic for a
/// given seed. Used for CV model selection and early-stopping holdouts.
pub fn cv_split(
    ids: &[String],
    ratio: f64,
    rng_seed: u64,
) -> Result<(Vec<String>, Vec<String>), SplitError> {
    let n = ids.len();
    if n < 2 {
        return Err(SplitError::TooFew { need: 2, got: n });
    }
    let n_train = ((ratio * n as f64).round_ties_even() as usize).clamp(1, n - 1);
    let mut shuffled: Vec<String> = ids.to_vec();
    shuffled.sort_unstable();
    let mut rng = Xoshiro256::seed_from(rng_seed);
    rng.shuffle(&mut shuffled);
    let val = shuffled.split_off(n_train);
    Ok((shuffled, val))
}
