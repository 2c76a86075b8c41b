//! Pairwise similarity: ligand Tanimoto, protein structural similarity
//! (ingested scores or a histogram proxy), and train/test overlap audits.

use crate::molgraph::Fingerprint;
use crate::structio::ProteinStructure;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("fingerprint kind or length mismatch: {0}")]
    FingerprintMismatch(String),
    #[error("similarity score {score} for pair {a}/{b} outside [0,1]")]
    ScoreOutOfRange { a: String, b: String, score: f64 },
    #[error("unknown entity id {0}")]
    UnknownId(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("structure {0} has fewer than 3 Cα atoms")]
    TooFewCalpha(String),
    #[error("missing similarity entry for pair {a}/{b}")]
    MissingPair { a: String, b: String },
}

/// |a∧b| / |a∨b| over equal-kind, equal-length bitsets. Empty over empty is
/// defined as 0.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, SimError> {
    if a.kind != b.kind {
        return Err(SimError::FingerprintMismatch(format!(
            "{:?} vs {:?}",
            a.kind, b.kind
        )));
    }
    if a.nbits != b.nbits {
        return Err(SimError::FingerprintMismatch(format!(
            "{} vs {} bits",
            a.nbits, b.nbits
        )));
    }
    let (and, or) = a.and_or_counts(b);
    if or == 0 {
        return Ok(0.0);
    }
    Ok(and as f64 / or as f64)
}

/// Lookup of a similarity score for a pair of entity ids.
pub trait PairSim {
    fn pair_sim(&self, a: &str, b: &str) -> Result<f64, SimError>;
}

/// Dense symmetric similarity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub ids: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    fn index_of(&self, id: &str) -> Result<usize, SimError> {
        self.ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| SimError::UnknownId(id.to_string()))
    }

    /// Checks diagonal, symmetry (1e-12) and range invariants.
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.n();
        for i in 0..n {
            if (self.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(SimError::ScoreOutOfRange {
                    a: self.ids[i].clone(),
                    b: self.ids[i].clone(),
                    score: self.get(i, i),
                });
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(SimError::ScoreOutOfRange {
                        a: self.ids[i].clone(),
                        b: self.ids[j].clone(),
                        score: v,
                    });
                }
                if (v - self.get(j, i)).abs() > 1e-12 {
                    return Err(SimError::ScoreOutOfRange {
                        a: self.ids[i].clone(),
                        b: self.ids[j].clone(),
                        score: v - self.get(j, i),
                    });
                }
            }
        }
        Ok(())
    }
}

impl PairSim for SimilarityMatrix {
    fn pair_sim(&self, a: &str, b: &str) -> Result<f64, SimError> {
        Ok(self.get(self.index_of(a)?, self.index_of(b)?))
    }
}

/// Rectangular similarity block (rows × columns), for case-study-vs-rest
/// comparisons where the full square matrix would be wasteful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectSimilarity {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    values: Vec<f64>,
}

impl RectSimilarity {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.col_ids.len() + col]
    }
}

impl PairSim for RectSimilarity {
    fn pair_sim(&self, a: &str, b: &str) -> Result<f64, SimError> {
        // accept either orientation
        if let (Some(r), Some(c)) = (
            self.row_ids.iter().position(|x| x == a),
            self.col_ids.iter().position(|x| x == b),
        ) {
            return Ok(self.get(r, c));
        }
        if let (Some(r), Some(c)) = (
            self.row_ids.iter().position(|x| x == b),
            self.col_ids.iter().position(|x| x == a),
        ) {
            return Ok(self.get(r, c));
        }
        Err(SimError::MissingPair {
            a: a.to_string(),
            b: b.to_string(),
        })
    }
}

/// Full pairwise Tanimoto matrix. The fill is parallel over rows; each cell
/// is an independent popcount ratio, so the result is identical for any
/// worker count.
pub fn ligand_similarity_matrix(
    entries: &[(String, Fingerprint)],
) -> Result<SimilarityMatrix, SimError> {
    let n = entries.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for (j, item) in row.iter_mut().enumerate() {
                *item = if i == j {
                    1.0
                } else {
                    tanimoto(&entries[i].1, &entries[j].1).unwrap_or(f64::NAN)
                };
            }
            row
        })
        .collect();
    // surface any mismatch error deterministically
    for row in &rows {
        if row.iter().any(|v| v.is_nan()) {
            return Err(SimError::FingerprintMismatch(
                "mixed fingerprint kinds in matrix input".into(),
            ));
        }
    }
    Ok(SimilarityMatrix {
        ids: entries.iter().map(|(id, _)| id.clone()).collect(),
        values: rows.into_iter().flatten().collect(),
    })
}

/// Rectangular Tanimoto block rows × cols.
pub fn ligand_similarity_rect(
    rows: &[(String, Fingerprint)],
    cols: &[(String, Fingerprint)],
) -> Result<RectSimilarity, SimError> {
    let data: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|(_, fa)| {
            cols.iter()
                .map(|(_, fb)| tanimoto(fa, fb).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    for row in &data {
        if row.iter().any(|v| v.is_nan()) {
            return Err(SimError::FingerprintMismatch(
                "mixed fingerprint kinds in matrix input".into(),
            ));
        }
    }
    Ok(RectSimilarity {
        row_ids: rows.iter().map(|(id, _)| id.clone()).collect(),
        col_ids: cols.iter().map(|(id, _)| id.clone()).collect(),
        values: data.into_iter().flatten().collect(),
    })
}

/// Assembles a similarity matrix from `id_a<TAB>id_b<TAB>score` rows.
/// Missing pairs default to 0, the diagonal is forced to 1.
pub fn load_protein_similarity(
    text: &str,
    expected_ids: &[String],
) -> Result<SimilarityMatrix, SimError> {
    let n = expected_ids.len();
    let index: std::collections::HashMap<&str, usize> = expected_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut values = vec![0.0; n * n];
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(SimError::Parse {
                line: lineno + 1,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let a = *index
            .get(fields[0].trim())
            .ok_or_else(|| SimError::UnknownId(fields[0].trim().to_string()))?;
        let b = *index
            .get(fields[1].trim())
            .ok_or_else(|| SimError::UnknownId(fields[1].trim().to_string()))?;
        let score: f64 = fields[2].trim().parse().map_err(|_| SimError::Parse {
            line: lineno + 1,
            msg: format!("bad score {:?}", fields[2]),
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(SimError::ScoreOutOfRange {
                a: fields[0].trim().to_string(),
                b: fields[1].trim().to_string(),
                score,
            });
        }
        values[a * n + b] = score;
        values[b * n + a] = score;
    }
    for i in 0..n {
        values[i * n + i] = 1.0;
    }
    Ok(SimilarityMatrix {
        ids: expected_ids.to_vec(),
        values,
    })
}

const HISTOGRAM_BINS: usize = 32;
const HISTOGRAM_RANGE: f64 = 40.0;

fn calpha_histogram(structure: &ProteinStructure) -> Result<[f64; HISTOGRAM_BINS], SimError> {
    let ca: Vec<[f64; 3]> = structure
        .atoms
        .iter()
        .filter(|a| a.name == "CA" && a.element == 6 && !a.is_hetero)
        .map(|a| a.position)
        .collect();
    if ca.len() < 3 {
        return Err(SimError::TooFewCalpha(structure.structure_id.clone()));
    }
    let mut hist = [0.0; HISTOGRAM_BINS];
    for i in 0..ca.len() {
        for j in (i + 1)..ca.len() {
            let d = crate::geom::distance(ca[i], ca[j]);
            let bin = ((d / HISTOGRAM_RANGE) * HISTOGRAM_BINS as f64).floor() as usize;
            hist[bin.min(HISTOGRAM_BINS - 1)] += 1.0;
        }
    }
    Ok(hist)
}

/// Structural similarity stand-in for fixture-only runs: cosine similarity
/// of 32-bin Cα-Cα distance histograms over 0-40 Å. Rigid-motion invariant
/// by construction. Reports must label results from this path as proxy
/// scores, not ingested ones.
pub fn protein_similarity_proxy(
    a: &ProteinStructure,
    b: &ProteinStructure,
) -> Result<f64, SimError> {
    let ha = calpha_histogram(a)?;
    let hb = calpha_histogram(b)?;
    let dot: f64 = ha.iter().zip(&hb).map(|(x, y)| x * y).sum();
    let na: f64 = ha.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = hb.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Where protein similarity scores came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProteinSimSource {
    IngestedTsv,
    HistogramProxy,
}

/// UniProt-level leakage audit between a train and a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub n_overlapping_uniprots: usize,
    pub n_train_overlap: usize,
    pub n_train_total: usize,
    pub n_test_overlap: usize,
    pub n_test_total: usize,
}

/// Counts UniProts present in both sets and the structures carrying them.
/// Input: (structure_id, uniprot_id) pairs per side.
pub fn audit_overlap(train: &[(String, String)], test: &[(String, String)]) -> OverlapReport {
    let train_uniprots: std::collections::BTreeSet<&str> =
        train.iter().map(|(_, u)| u.as_str()).collect();
    let test_uniprots: std::collections::BTreeSet<&str> =
        test.iter().map(|(_, u)| u.as_str()).collect();
    let shared: std::collections::BTreeSet<&str> = train_uniprots
        .intersection(&test_uniprots)
        .copied()
        .collect();
    OverlapReport {
        n_overlapping_uniprots: shared.len(),
        n_train_overlap: train
            .iter()
            .filter(|(_, u)| shared.contains(u.as_str()))
            .count(),
        n_train_total: train.len(),
        n_test_overlap: test
            .iter()
            .filter(|(_, u)| shared.contains(u.as_str()))
            .count(),
        n_test_total: test.len(),
    }
}
