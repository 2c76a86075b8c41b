//! Protein-ligand interaction features (element-pair contact counts and
//! concentric shells) plus ligand feature assembly with train-fitted
//! normalization.

use crate::geom;
use crate::molgraph::{self, FingerprintKind, DESCRIPTOR_NAMES};
use crate::structio::ComplexRecord;
use serde::{Deserialize, Serialize};

/// Ligand-side element classes for contact counting.
pub const LIGAND_CLASSES: &[(u8, &str)] = &[
    (6, "C"),
    (7, "N"),
    (8, "O"),
    (9, "F"),
    (15, "P"),
    (16, "S"),
    (17, "Cl"),
    (35, "Br"),
    (53, "I"),
];

/// Protein-side element classes for contact counting.
pub const PROTEIN_CLASSES: &[(u8, &str)] = &[(6, "C"), (7, "N"), (8, "O"), (16, "S")];

fn ligand_class(z: u8) -> Option<usize> {
    LIGAND_CLASSES.iter().position(|(e, _)| *e == z)
}

fn protein_class(z: u8) -> Option<usize> {
    PROTEIN_CLASSES.iter().position(|(e, _)| *e == z)
}

/// Element-pair contact counts within a distance cutoff. 9 ligand classes ×
/// 4 protein classes = 36 cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCountFeatures {
    /// counts[ligand_class][protein_class]
    pub counts: Vec<Vec<u64>>,
    pub cutoff: f64,
}

impl PairCountFeatures {
    pub fn flatten(&self) -> Vec<f64> {
        self.counts
            .iter()
            .flat_map(|row| row.iter().map(|&c| c as f64))
            .collect()
    }

    pub fn names() -> Vec<String> {
        let mut names = Vec::with_capacity(36);
        for (_, lname) in LIGAND_CLASSES {
            for (_, pname) in PROTEIN_CLASSES {
                names.push(format!("pair:{lname}-{pname}"));
            }
        }
        names
    }
}

/// Contact counts partitioned into concentric distance shells
/// [k·width, (k+1)·width).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellFeatures {
    /// counts[ligand_class][protein_class][shell]
    pub counts: Vec<Vec<Vec<u64>>>,
    pub n_shells: usize,
    pub width: f64,
}

impl ShellFeatures {
    pub fn flatten(&self) -> Vec<f64> {
        self.counts
            .iter()
            .flat_map(|row| row.iter().flat_map(|cell| cell.iter().map(|&c| c as f64)))
            .collect()
    }

    pub fn names(n_shells: usize) -> Vec<String> {
        let mut names = Vec::new();
        for (_, lname) in LIGAND_CLASSES {
            for (_, pname) in PROTEIN_CLASSES {
                for k in 0..n_shells {
                    names.push(format!("shell:{lname}-{pname}:{k}"));
                }
            }
        }
        names
    }
}

/// Counts (ligand heavy atom, protein heavy atom) pairs with distance ≤
/// cutoff, bucketed by element class. Hydrogens and unlisted elements are
/// ignored.
pub fn rf_score_features(complex: &ComplexRecord, cutoff: f64) -> PairCountFeatures {
    let mut counts = vec![vec![0u64; PROTEIN_CLASSES.len()]; LIGAND_CLASSES.len()];
    for latom in &complex.ligand.atoms {
        let Some(lc) = ligand_class(latom.element) else {
            continue;
        };
        for patom in &complex.protein.atoms {
            let Some(pc) = protein_class(patom.element) else {
                continue;
            };
            if geom::distance(latom.position, patom.position) <= cutoff {
                counts[lc][pc] += 1;
            }
        }
    }
    PairCountFeatures { counts, cutoff }
}

/// Same pair counting, partitioned into `n_shells` half-open shells of
/// `width` Å.
pub fn shell_features(complex: &ComplexRecord, n_shells: usize, width: f64) -> ShellFeatures {
    let mut counts =
        vec![vec![vec![0u64; n_shells]; PROTEIN_CLASSES.len()]; LIGAND_CLASSES.len()];
    for latom in &complex.ligand.atoms {
        let Some(lc) = ligand_class(latom.element) else {
            continue;
        };
        for patom in &complex.protein.atoms {
            let Some(pc) = protein_class(patom.element) else {
                continue;
            };
            let d = geom::distance(latom.position, patom.position);
            let shell = (d / width).floor() as usize;
            if shell < n_shells {
                counts[lc][pc][shell] += 1;
            }
        }
    }
    ShellFeatures {
        counts,
        n_shells,
        width,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FeatError {
    #[error("normalizer used before fitting")]
    Unfitted,
    #[error("record {id} produced {got} features, schema expects {want}")]
    SchemaMismatch { id: String, got: usize, want: usize },
    #[error("cannot fit on an empty train set")]
    EmptyTrain,
}

/// Per-feature (mean, std) fitted on the train set only. Features with zero
/// train variance are dropped from the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    stats: Option<Vec<(f64, f64)>>,
}

impl Normalizer {
    pub fn new() -> Self {
        Normalizer { stats: None }
    }

    /// Column means and standard deviations with compensated summation:
    /// the result is independent of how callers might batch the rows.
    pub fn fit(&mut self, rows: &[Vec<f64>]) -> Result<(), FeatError> {
        if rows.is_empty() {
            return Err(FeatError::EmptyTrain);
        }
        let width = rows[0].len();
        let n = rows.len() as f64;
        let mut stats = Vec::with_capacity(width);
        for col in 0..width {
            let mean = kahan_sum(rows.iter().map(|r| r[col])) / n;
            let var = kahan_sum(rows.iter().map(|r| (r[col] - mean).powi(2))) / n;
            stats.push((mean, var.sqrt()));
        }
        self.stats = Some(stats);
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.stats.is_some()
    }

    /// Indices of features with non-zero train variance.
    pub fn kept_columns(&self) -> Result<Vec<usize>, FeatError> {
        let stats = self.stats.as_ref().ok_or(FeatError::Unfitted)?;
        Ok(stats
            .iter()
            .enumerate()
            .filter(|(_, (_, std))| *std > 0.0)
            .map(|(i, _)| i)
            .collect())
    }

    /// Z-scores the kept columns of one row.
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, FeatError> {
        let stats = self.stats.as_ref().ok_or(FeatError::Unfitted)?;
        Ok(stats
            .iter()
            .zip(row)
            .filter(|((_, std), _)| *std > 0.0)
            .map(|((mean, std), x)| (x - mean) / std)
            .collect())
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::new()
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Which feature blocks a model consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub fingerprint: Option<FingerprintKind>,
    pub fp_radius: usize,
    pub fp_bits: usize,
    pub descriptors: DescriptorChoice,
    pub interaction: Option<InteractionKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorChoice {
    None,
    All,
    MolecularWeightOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    PairCounts { cutoff: f64 },
    Shells { n_shells: usize, width: f64 },
}

impl FeatureSpec {
    pub fn fingerprint_only(kind: FingerprintKind) -> Self {
        FeatureSpec {
            fingerprint: Some(kind),
            fp_radius: 2,
            fp_bits: 2048,
            descriptors: DescriptorChoice::None,
            interaction: None,
        }
    }

    pub fn fingerprint_plus_descriptors(kind: FingerprintKind) -> Self {
        FeatureSpec {
            descriptors: DescriptorChoice::All,
            ..Self::fingerprint_only(kind)
        }
    }

    pub fn molecular_weight_only() -> Self {
        FeatureSpec {
            fingerprint: None,
            fp_radius: 2,
            fp_bits: 2048,
            descriptors: DescriptorChoice::MolecularWeightOnly,
            interaction: None,
        }
    }

    pub fn interaction_only(kind: InteractionKind) -> Self {
        FeatureSpec {
            fingerprint: None,
            fp_radius: 2,
            fp_bits: 2048,
            descriptors: DescriptorChoice::None,
            interaction: Some(kind),
        }
    }

    /// True when no interaction block is present (ligand-only models).
    pub fn is_ligand_only(&self) -> bool {
        self.interaction.is_none()
    }
}

/// Raw (pre-normalization) blocks for one record.
fn raw_features(spec: &FeatureSpec, record: &ComplexRecord) -> (Vec<f64>, Vec<f64>) {
    // returns (unscaled fingerprint bits, scalable block)
    let mut fp_block = Vec::new();
    if let Some(kind) = spec.fingerprint {
        let fp = match kind {
            FingerprintKind::Ecfp => molgraph::ecfp(&record.ligand, spec.fp_radius, spec.fp_bits),
            FingerprintKind::Fcfp => molgraph::fcfp(&record.ligand, spec.fp_radius, spec.fp_bits),
            FingerprintKind::AtomPair => molgraph::atom_pair(&record.ligand, spec.fp_bits),
            FingerprintKind::TopologicalTorsion => {
                molgraph::topological_torsion(&record.ligand, spec.fp_bits)
            }
        };
        fp_block = (0..spec.fp_bits)
            .map(|b| if fp.get_bit(b) { 1.0 } else { 0.0 })
            .collect();
    }

    let mut scaled = Vec::new();
    match spec.descriptors {
        DescriptorChoice::None => {}
        DescriptorChoice::All => scaled.extend(molgraph::descriptors(&record.ligand).to_vec()),
        DescriptorChoice::MolecularWeightOnly => {
            scaled.push(molgraph::descriptors(&record.ligand).molecular_weight)
        }
    }
    match spec.interaction {
        Some(InteractionKind::PairCounts { cutoff }) => {
            scaled.extend(rf_score_features(record, cutoff).flatten())
        }
        Some(InteractionKind::Shells { n_shells, width }) => {
            scaled.extend(shell_features(record, n_shells, width).flatten())
        }
        Option::None => {}
    }
    (fp_block, scaled)
}

fn scaled_block_names(spec: &FeatureSpec) -> Vec<String> {
    let mut names = Vec::new();
    match spec.descriptors {
        DescriptorChoice::None => {}
        DescriptorChoice::All => {
            names.extend(DESCRIPTOR_NAMES.iter().map(|n| format!("desc:{n}")))
        }
        DescriptorChoice::MolecularWeightOnly => names.push("desc:molecular_weight".to_string()),
    }
    match spec.interaction {
        Some(InteractionKind::PairCounts { .. }) => names.extend(PairCountFeatures::names()),
        Some(InteractionKind::Shells { n_shells, .. }) => {
            names.extend(ShellFeatures::names(n_shells))
        }
        Option::None => {}
    }
    names
}

/// Assembler fitted on a train set: fingerprints pass through unscaled,
/// descriptors and interaction counts are z-scored with train statistics,
/// zero-variance columns are dropped from the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedAssembler {
    pub spec: FeatureSpec,
    pub schema: Vec<String>,
    normalizer: Normalizer,
}

/// Assembled feature rows in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub schema: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("structure_id");
        for name in &self.schema {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Fits normalization on the train records only.
pub fn fit_assembler(
    spec: &FeatureSpec,
    train: &[&ComplexRecord],
) -> Result<FittedAssembler, FeatError> {
    if train.is_empty() {
        return Err(FeatError::EmptyTrain);
    }
    let scaled_rows: Vec<Vec<f64>> = train
        .iter()
        .map(|r| raw_features(spec, r).1)
        .collect();
    let mut normalizer = Normalizer::new();
    let mut schema: Vec<String> = Vec::new();
    if let Some(kind) = spec.fingerprint {
        let tag = match kind {
            FingerprintKind::Ecfp => "ecfp",
            FingerprintKind::Fcfp => "fcfp",
            FingerprintKind::AtomPair => "atom_pair",
            FingerprintKind::TopologicalTorsion => "torsion",
        };
        schema.extend((0..spec.fp_bits).map(|b| format!("fp:{tag}:{b}")));
    }
    if scaled_rows[0].is_empty() {
        // nothing to normalize
        normalizer.fit(&[vec![]])?;
    } else {
        normalizer.fit(&scaled_rows)?;
        let names = scaled_block_names(spec);
        for col in normalizer.kept_columns()? {
            schema.push(names[col].clone());
        }
    }
    Ok(FittedAssembler {
        spec: spec.clone(),
        schema,
        normalizer,
    })
}

impl FittedAssembler {
    /// Applies the fitted transform to any record set.
    pub fn transform(&self, records: &[&ComplexRecord]) -> Result<FeatureTable, FeatError> {
        let mut ids = Vec::with_capacity(records.len());
        let mut rows = Vec::with_capacity(records.len());
        for r in records {
            let (fp_block, scaled) = raw_features(&self.spec, r);
            let mut row = fp_block;
            row.extend(self.normalizer.transform(&scaled)?);
            if row.len() != self.schema.len() {
                return Err(FeatError::SchemaMismatch {
                    id: r.structure_id.clone(),
                    got: row.len(),
                    want: self.schema.len(),
                });
            }
            ids.push(r.structure_id.clone());
            rows.push(row);
        }
        Ok(FeatureTable {
            schema: self.schema.clone(),
            ids,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structio::{Atom, Ligand, ProteinStructure};

    fn atom(element: u8, pos: [f64; 3], hetero: bool) -> Atom {
        Atom {
            element,
            position: pos,
            name: "X".into(),
            residue_name: if hetero { String::new() } else { "ALA".into() },
            chain_id: 'A',
            residue_seq: 1,
            is_hetero: hetero,
            formal_charge: 0,
        }
    }

    fn complex_with(ligand_atoms: Vec<Atom>, protein_atoms: Vec<Atom>) -> ComplexRecord {
        ComplexRecord {
            structure_id: "test".into(),
            uniprot_id: "P1".into(),
            protein: ProteinStructure {
                structure_id: "test".into(),
                atoms: protein_atoms,
            },
            ligand: Ligand {
                name: "LIG".into(),
                atoms: ligand_atoms,
                bonds: vec![],
            },
            p_affinity: 5.0,
        }
    }

    #[test]
    fn pair_count_boundary() {
        let inside = complex_with(
            vec![atom(6, [0.0, 0.0, 0.0], true)],
            vec![atom(8, [11.9, 0.0, 0.0], false)],
        );
        let f = rf_score_features(&inside, 12.0);
        assert_eq!(f.counts[0][2], 1); // C (ligand index 0) × O (protein index 2)
        assert_eq!(f.flatten().iter().sum::<f64>(), 1.0);

        let outside = complex_with(
            vec![atom(6, [0.0, 0.0, 0.0], true)],
            vec![atom(8, [12.1, 0.0, 0.0], false)],
        );
        assert_eq!(rf_score_features(&outside, 12.0).flatten().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn pair_counts_match_brute_force_on_lattice() {
        let mut lig = Vec::new();
        let mut prot = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                lig.push(atom(
                    [6, 7, 8][(i + j) % 3],
                    [i as f64 * 3.0, j as f64 * 3.0, 0.0],
                    true,
                ));
                prot.push(atom(
                    [6, 7, 8, 16][(i * 3 + j) % 4],
                    [i as f64 * 3.0, j as f64 * 3.0, 6.0],
                    false,
                ));
            }
        }
        let complex = complex_with(lig.clone(), prot.clone());
        let f = rf_score_features(&complex, 12.0);
        // brute-force oracle
        let mut want = vec![vec![0u64; 4]; 9];
        for la in &lig {
            for pa in &prot {
                let lc = LIGAND_CLASSES.iter().position(|(z, _)| *z == la.element);
                let pc = PROTEIN_CLASSES.iter().position(|(z, _)| *z == pa.element);
                if let (Some(lc), Some(pc)) = (lc, pc) {
                    if geom::distance(la.position, pa.position) <= 12.0 {
                        want[lc][pc] += 1;
                    }
                }
            }
        }
        assert_eq!(f.counts, want);
    }

    #[test]
    fn hydrogens_are_ignored() {
        let complex = complex_with(
            vec![atom(1, [0.0, 0.0, 0.0], true), atom(6, [1.0, 0.0, 0.0], true)],
            vec![atom(1, [2.0, 0.0, 0.0], false), atom(8, [3.0, 0.0, 0.0], false)],
        );
        let f = rf_score_features(&complex, 12.0);
        assert_eq!(f.flatten().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn shell_half_open_rule() {
        let at_half = complex_with(
            vec![atom(6, [0.0, 0.0, 0.0], true)],
            vec![atom(6, [0.5, 0.0, 0.0], false)],
        );
        let f = shell_features(&at_half, 12, 1.0);
        assert_eq!(f.counts[0][0][0], 1);

        let at_one = complex_with(
            vec![atom(6, [0.0, 0.0, 0.0], true)],
            vec![atom(6, [1.0, 0.0, 0.0], false)],
        );
        let f = shell_features(&at_one, 12, 1.0);
        assert_eq!(f.counts[0][0][0], 0);
        assert_eq!(f.counts[0][0][1], 1);
    }

    #[test]
    fn shells_sum_to_pair_counts() {
        let mut lig = Vec::new();
        let mut prot = Vec::new();
        for k in 0..6 {
            lig.push(atom([6, 7][k % 2], [k as f64 * 1.7, 0.2 * k as f64, 0.0], true));
            prot.push(atom([8, 16][k % 2], [k as f64 * 1.3, 3.0, 1.0], false));
        }
        let complex = complex_with(lig, prot);
        let shells = shell_features(&complex, 12, 1.0);
        let pairs = rf_score_features(&complex, 12.0);
        for lc in 0..LIGAND_CLASSES.len() {
            for pc in 0..PROTEIN_CLASSES.len() {
                let shell_sum: u64 = shells.counts[lc][pc].iter().sum();
                assert_eq!(shell_sum, pairs.counts[lc][pc], "class {lc},{pc}");
            }
        }
    }

    #[test]
    fn rf_features_rigid_motion_invariant() {
        use crate::molgraph::tests_support::{apply, random_rigid};
        let mut rng = affbench_rng::Xoshiro256::seed_from(77);
        let complex = complex_with(
            vec![atom(6, [0.0, 0.0, 0.0], true), atom(7, [1.5, 0.4, 0.2], true)],
            vec![atom(8, [3.0, 1.0, 0.0], false), atom(16, [9.0, 2.0, 1.0], false)],
        );
        let base = rf_score_features(&complex, 12.0);
        for _ in 0..10 {
            let (rot, t) = random_rigid(&mut rng);
            let mut moved = complex.clone();
            for a in moved.ligand.atoms.iter_mut().chain(moved.protein.atoms.iter_mut()) {
                a.position = apply(rot, a.position, t);
            }
            assert_eq!(rf_score_features(&moved, 12.0).counts, base.counts);
        }
    }

    fn record_with_mw(id: &str, n_carbons: usize) -> ComplexRecord {
        let lig: Vec<Atom> = (0..n_carbons)
            .map(|k| atom(6, [k as f64 * 1.5, 0.0, 0.0], true))
            .collect();
        let mut c = complex_with(lig, vec![atom(6, [0.0, 5.0, 0.0], false)]);
        c.structure_id = id.to_string();
        c
    }

    #[test]
    fn normalization_fit_on_train_only() {
        let train: Vec<ComplexRecord> =
            (1..=4).map(|k| record_with_mw(&format!("t{k}"), k)).collect();
        let held_out = record_with_mw("h", 10);
        let spec = FeatureSpec::molecular_weight_only();
        let refs: Vec<&ComplexRecord> = train.iter().collect();
        let fitted = fit_assembler(&spec, &refs).unwrap();

        // z-transform of the held-out record matches a hand z-score
        let mw: Vec<f64> = train
            .iter()
            .map(|r| molgraph::descriptors(&r.ligand).molecular_weight)
            .collect();
        let mean = mw.iter().sum::<f64>() / mw.len() as f64;
        let std =
            (mw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / mw.len() as f64).sqrt();
        let table = fitted.transform(&[&held_out]).unwrap();
        let want = (molgraph::descriptors(&held_out.ligand).molecular_weight - mean) / std;
        assert!((table.rows[0][0] - want).abs() < 1e-12);

        // train transforms have mean zero
        let train_table = fitted.transform(&refs).unwrap();
        let z_mean: f64 =
            train_table.rows.iter().map(|r| r[0]).sum::<f64>() / train.len() as f64;
        assert!(z_mean.abs() < 1e-12);
    }

    #[test]
    fn constant_descriptor_dropped() {
        // all train ligands identical → every descriptor is constant
        let train: Vec<ComplexRecord> =
            (0..3).map(|k| record_with_mw(&format!("t{k}"), 3)).collect();
        let refs: Vec<&ComplexRecord> = train.iter().collect();
        let fitted = fit_assembler(&FeatureSpec::molecular_weight_only(), &refs).unwrap();
        assert!(fitted.schema.is_empty());
    }

    #[test]
    fn test_side_records_never_change_the_transform() {
        let train: Vec<ComplexRecord> =
            (1..=4).map(|k| record_with_mw(&format!("t{k}"), k)).collect();
        let refs: Vec<&ComplexRecord> = train.iter().collect();
        let fitted = fit_assembler(&FeatureSpec::molecular_weight_only(), &refs).unwrap();

        let test_a = vec![record_with_mw("x", 9)];
        let test_b: Vec<ComplexRecord> =
            (5..30).map(|k| record_with_mw(&format!("y{k}"), k)).collect();
        let refs_a: Vec<&ComplexRecord> = test_a.iter().collect();
        let row_a = fitted.transform(&refs_a).unwrap().rows[0].clone();

        // transform the same record as part of a much larger test batch
        let mut combined: Vec<&ComplexRecord> = test_b.iter().collect();
        combined.push(&test_a[0]);
        let rows = fitted.transform(&combined).unwrap();
        assert_eq!(rows.rows.last().unwrap(), &row_a);
    }

    #[test]
    fn unfitted_normalizer_errors() {
        let n = Normalizer::new();
        assert!(matches!(n.transform(&[1.0]), Err(FeatError::Unfitted)));
    }

    #[test]
    fn fingerprint_block_passes_unscaled() {
        let train: Vec<ComplexRecord> =
            (1..=3).map(|k| record_with_mw(&format!("t{k}"), k)).collect();
        let refs: Vec<&ComplexRecord> = train.iter().collect();
        let spec = FeatureSpec {
            fp_bits: 64,
            ..FeatureSpec::fingerprint_only(FingerprintKind::Ecfp)
        };
        let fitted = fit_assembler(&spec, &refs).unwrap();
        let table = fitted.transform(&refs).unwrap();
        assert_eq!(table.schema.len(), 64);
        assert!(table
            .rows
            .iter()
            .all(|r| r.iter().all(|&v| v == 0.0 || v == 1.0)));
    }
}
