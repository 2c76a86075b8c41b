//! Rule-based complex preparation: buffer/water removal, valence-rule
//! hydrogen completion for ligands, template hydrogens for proteins.

use super::{Atom, Bond, BondOrder, Ligand, ProteinStructure, Result, StructError};
use crate::geom::{self, Vec3};
use crate::molgraph::{self, HydrogenMode};
use serde::{Deserialize, Serialize};

/// Residues stripped from the protein side in addition to waters.
/// Which buffer components the original preparation removed is not
/// documented anywhere, so the list is configurable.
pub const DEFAULT_BLACKLIST: &[&str] = &[
    "SO4", "GOL", "EDO", "PEG", "PO4", "CL", "NA", "K", "MG", "ZN",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepConfig {
    pub buffer_blacklist: Vec<String>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            buffer_blacklist: DEFAULT_BLACKLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Non-fatal events recorded during preparation, emitted downstream as
/// JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrepWarning {
    UnknownResidue { residue: String, chain: char, seq: i32 },
    DuplicatePosition { atom: String, residue: String, seq: i32 },
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub protein: ProteinStructure,
    pub ligand: Ligand,
    pub warnings: Vec<PrepWarning>,
}

/// Target valences for hydrogen completion. Elements outside this table
/// never receive hydrogens.
fn target_valence(element: u8) -> Option<f64> {
    match element {
        1 => Some(1.0),
        6 => Some(4.0),
        7 => Some(3.0),
        8 => Some(2.0),
        16 => Some(2.0),
        _ => None,
    }
}

/// X–H bond length in Å by heavy-atom element.
fn h_bond_length(element: u8) -> f64 {
    match element {
        7 => 1.01,
        8 => 0.96,
        16 => 1.34,
        _ => 1.09,
    }
}

/// Prepares one complex: strips waters and blacklisted buffer residues,
/// completes ligand hydrogens from valence rules and protein hydrogens from
/// per-residue templates, then applies the hydrogen mode filter.
pub fn prepare_complex(
    protein: &ProteinStructure,
    ligand: &Ligand,
    mode: HydrogenMode,
    config: &PrepConfig,
) -> Result<Prepared> {
    let mut warnings = Vec::new();

    let mut protein = protein.clone();
    strip_hetero(&mut protein, &ligand.name, config);
    dedup_positions(&mut protein, &mut warnings);
    if protein.atoms.is_empty() {
        return Err(StructError::Preparation(
            "no protein atoms remain after water/buffer removal".into(),
        ));
    }

    let mut ligand = ligand.clone();
    add_ligand_hydrogens(&mut ligand)?;
    if !ligand.is_connected() {
        return Err(StructError::Preparation(format!(
            "ligand {} is not a single connected component",
            ligand.name
        )));
    }

    add_protein_hydrogens(&mut protein, &mut warnings);

    molgraph::filter_ligand_hydrogens(&mut ligand, mode);
    molgraph::filter_protein_hydrogens(&mut protein.atoms, mode);

    Ok(Prepared {
        protein,
        ligand,
        warnings,
    })
}

fn strip_hetero(protein: &mut ProteinStructure, ligand_name: &str, config: &PrepConfig) {
    protein.atoms.retain(|a| {
        if !a.is_hetero {
            return true;
        }
        if a.residue_name == "HOH" {
            return false;
        }
        if a.residue_name.eq_ignore_ascii_case(ligand_name) {
            // the biologically relevant ligand arrives separately
            return false;
        }
        !config
            .buffer_blacklist
            .iter()
            .any(|b| b.eq_ignore_ascii_case(&a.residue_name))
    });
}

fn dedup_positions(protein: &mut ProteinStructure, warnings: &mut Vec<PrepWarning>) {
    let mut seen: std::collections::HashSet<[u64; 3]> = std::collections::HashSet::new();
    let mut keep = Vec::with_capacity(protein.atoms.len());
    for a in protein.atoms.drain(..) {
        let key = [
            a.position[0].to_bits(),
            a.position[1].to_bits(),
            a.position[2].to_bits(),
        ];
        if seen.insert(key) {
            keep.push(a);
        } else {
            warnings.push(PrepWarning::DuplicatePosition {
                atom: a.name.clone(),
                residue: a.residue_name.clone(),
                seq: a.residue_seq,
            });
        }
    }
    protein.atoms = keep;
}

/// Hydrogen deficit for one heavy atom: target valence adjusted by formal
/// charge, minus the bond order sum. Aromatic bonds count 1.5, so fused-ring
/// junctions can come out at −0.5; anything below −0.75 is a real
/// over-bonded atom and is rejected.
fn hydrogen_deficit(target: f64, charge: i8, bond_sum: f64) -> std::result::Result<usize, f64> {
    let deficit = target + charge as f64 - bond_sum;
    if deficit < -0.75 {
        Err(deficit)
    } else {
        Ok(deficit.max(0.0).round() as usize)
    }
}

fn add_ligand_hydrogens(ligand: &mut Ligand) -> Result<()> {
    let n_heavy = ligand.atoms.len();
    let mut new_atoms = Vec::new();
    let mut new_bonds = Vec::new();
    for i in 0..n_heavy {
        let atom = &ligand.atoms[i];
        if atom.is_hydrogen() {
            continue;
        }
        let Some(target) = target_valence(atom.element) else {
            continue;
        };
        let neighbors = ligand.neighbors(i);
        let bond_sum: f64 = neighbors.iter().map(|(_, o)| o.valence()).sum();
        let count = hydrogen_deficit(target, atom.formal_charge, bond_sum).map_err(|_| {
            StructError::OverBonded {
                atom: i,
                symbol: crate::elements::z_to_symbol(atom.element)
                    .unwrap_or("?")
                    .to_string(),
                valence_sum: bond_sum,
                target: target + atom.formal_charge as f64,
            }
        })?;
        if count == 0 {
            continue;
        }
        let neighbor_pos: Vec<Vec3> = neighbors
            .iter()
            .map(|(j, _)| ligand.atoms[*j].position)
            .collect();
        let length = h_bond_length(atom.element);
        for (k, pos) in place_hydrogens(atom.position, &neighbor_pos, count, length)
            .into_iter()
            .enumerate()
        {
            let h_index = n_heavy + new_atoms.len();
            new_atoms.push(Atom {
                element: 1,
                position: pos,
                name: format!("H{}{}", i + 1, (b'a' + k as u8) as char),
                residue_name: atom.residue_name.clone(),
                chain_id: atom.chain_id,
                residue_seq: atom.residue_seq,
                is_hetero: atom.is_hetero,
                formal_charge: 0,
            });
            new_bonds.push(Bond {
                i,
                j: h_index,
                order: BondOrder::Single,
            });
        }
    }
    ligand.atoms.extend(new_atoms);
    ligand.bonds.extend(new_bonds);
    Ok(())
}

/// Places `count` hydrogens around `center`, pointing away from the existing
/// neighbors at the given bond length. Directions are deterministic.
fn place_hydrogens(center: Vec3, neighbors: &[Vec3], count: usize, length: f64) -> Vec<Vec3> {
    // canonical tetrahedral frame for isolated atoms
    const TETRA: [Vec3; 4] = [
        [0.577350269189626, 0.577350269189626, 0.577350269189626],
        [0.577350269189626, -0.577350269189626, -0.577350269189626],
        [-0.577350269189626, 0.577350269189626, -0.577350269189626],
        [-0.577350269189626, -0.577350269189626, 0.577350269189626],
    ];

    let mut away = [0.0f64; 3];
    for n in neighbors {
        let d = geom::sub(*n, center);
        let len = geom::norm(d);
        if len > 1e-9 {
            away = geom::sub(away, geom::scale(d, 1.0 / len));
        }
    }

    let dirs: Vec<Vec3> = if geom::norm(away) < 1e-6 {
        if neighbors.is_empty() {
            TETRA.iter().take(count).copied().collect()
        } else {
            // neighbors cancel out (e.g. linear arrangement): fan out in a
            // plane perpendicular to the first neighbor direction
            let axis = geom::normalize(geom::sub(neighbors[0], center));
            let (u, v) = geom::orthonormal_pair(axis);
            (0..count)
                .map(|k| {
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / count.max(1) as f64;
                    geom::add(geom::scale(u, phi.cos()), geom::scale(v, phi.sin()))
                })
                .collect()
        }
    } else {
        let axis = geom::normalize(away);
        if count == 1 {
            vec![axis]
        } else {
            // cone at the tetrahedral complement angle around the away axis
            let half = 70.528779_f64.to_radians();
            let (u, v) = geom::orthonormal_pair(axis);
            (0..count)
                .map(|k| {
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    let radial =
                        geom::add(geom::scale(u, phi.cos()), geom::scale(v, phi.sin()));
                    geom::add(geom::scale(axis, half.cos()), geom::scale(radial, half.sin()))
                })
                .collect()
        }
    };

    dirs.into_iter()
        .map(|d| geom::add(center, geom::scale(geom::normalize(d), length)))
        .collect()
}

/// Hydrogen counts per heavy atom for the 20 standard residues.
/// Backbone: N carries 1 (0 in proline), CA carries 1 (2 in glycine).
/// Titratable sites use the dominant state at neutral pH; histidine is
/// protonated on ND1.
fn residue_hydrogen_count(residue: &str, atom_name: &str) -> Option<usize> {
    let side: &[(&str, usize)] = match residue {
        "ALA" => &[("CB", 3)],
        "ARG" => &[("CB", 2), ("CG", 2), ("CD", 2), ("NE", 1), ("NH1", 2), ("NH2", 2)],
        "ASN" => &[("CB", 2), ("ND2", 2)],
        "ASP" => &[("CB", 2)],
        "CYS" => &[("CB", 2), ("SG", 1)],
        "GLN" => &[("CB", 2), ("CG", 2), ("NE2", 2)],
        "GLU" => &[("CB", 2), ("CG", 2)],
        "GLY" => &[],
        "HIS" => &[("CB", 2), ("ND1", 1), ("CD2", 1), ("CE1", 1)],
        "ILE" => &[("CB", 1), ("CG1", 2), ("CG2", 3), ("CD1", 3)],
        "LEU" => &[("CB", 2), ("CG", 1), ("CD1", 3), ("CD2", 3)],
        "LYS" => &[("CB", 2), ("CG", 2), ("CD", 2), ("CE", 2), ("NZ", 3)],
        "MET" => &[("CB", 2), ("CG", 2), ("CE", 3)],
        "PHE" => &[("CB", 2), ("CD1", 1), ("CD2", 1), ("CE1", 1), ("CE2", 1), ("CZ", 1)],
        "PRO" => &[("CB", 2), ("CG", 2), ("CD", 2)],
        "SER" => &[("CB", 2), ("OG", 1)],
        "THR" => &[("CB", 1), ("OG1", 1), ("CG2", 3)],
        "TRP" => &[
            ("CB", 2),
            ("CD1", 1),
            ("NE1", 1),
            ("CE3", 1),
            ("CZ2", 1),
            ("CZ3", 1),
            ("CH2", 1),
        ],
        "TYR" => &[("CB", 2), ("CD1", 1), ("CD2", 1), ("CE1", 1), ("CE2", 1), ("OH", 1)],
        "VAL" => &[("CB", 1), ("CG1", 3), ("CG2", 3)],
        _ => return None,
    };
    let count = match atom_name {
        "N" => usize::from(residue != "PRO"),
        "CA" => {
            if residue == "GLY" {
                2
            } else {
                1
            }
        }
        other => side
            .iter()
            .find(|(name, _)| *name == other)
            .map(|(_, c)| *c)
            .unwrap_or(0),
    };
    Some(count)
}

fn add_protein_hydrogens(protein: &mut ProteinStructure, warnings: &mut Vec<PrepWarning>) {
    let heavy: Vec<usize> = (0..protein.atoms.len())
        .filter(|&i| !protein.atoms[i].is_hydrogen())
        .collect();
    let positions: Vec<Vec3> = heavy.iter().map(|&i| protein.atoms[i].position).collect();
    let grid = geom::NeighborGrid::build(&positions, 2.0);

    let mut warned: std::collections::HashSet<(char, i32)> = std::collections::HashSet::new();
    let mut added = Vec::new();
    for (hi, &i) in heavy.iter().enumerate() {
        let atom = &protein.atoms[i];
        if atom.is_hetero {
            continue;
        }
        let Some(count) = residue_hydrogen_count(&atom.residue_name, &atom.name) else {
            if warned.insert((atom.chain_id, atom.residue_seq)) {
                warnings.push(PrepWarning::UnknownResidue {
                    residue: atom.residue_name.clone(),
                    chain: atom.chain_id,
                    seq: atom.residue_seq,
                });
            }
            continue;
        };
        if count == 0 || target_valence(atom.element).is_none() {
            continue;
        }
        // covalent neighbors: heavy atoms within 1.8 Å (peptide bonds included)
        let neighbor_pos: Vec<Vec3> = grid
            .within(atom.position, 1.8)
            .into_iter()
            .filter(|&n| n != hi)
            .map(|n| positions[n])
            .collect();
        let length = h_bond_length(atom.element);
        for (k, pos) in place_hydrogens(atom.position, &neighbor_pos, count, length)
            .into_iter()
            .enumerate()
        {
            added.push(Atom {
                element: 1,
                position: pos,
                name: format!("H{}{}", atom.name.to_lowercase(), k + 1),
                residue_name: atom.residue_name.clone(),
                chain_id: atom.chain_id,
                residue_seq: atom.residue_seq,
                is_hetero: false,
                formal_charge: 0,
            });
        }
    }
    protein.atoms.extend(added);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structio::{parse_pdb, parse_sdf};

    const METHANE: &str = "methane\n\n\n  1  0  0  0  0  0  0  0  0  0999 V2000\n    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0\nM  END\n";

    fn tiny_protein() -> ProteinStructure {
        let text = "\
ATOM      1  N   ALA A   1       0.000   0.000   0.000  1.00  0.00           N
ATOM      2  CA  ALA A   1       1.458   0.000   0.000  1.00  0.00           C
ATOM      3  C   ALA A   1       2.009   1.420   0.000  1.00  0.00           C
ATOM      4  O   ALA A   1       1.251   2.390   0.000  1.00  0.00           O
ATOM      5  CB  ALA A   1       1.986  -0.760  -1.220  1.00  0.00           C  ";
        parse_pdb(text).unwrap()
    }

    #[test]
    fn waters_and_buffers_are_removed() {
        let text = "\
ATOM      1  CA  ALA A   1       1.000   2.000   3.000  1.00  0.00           C
HETATM    2  O   HOH A 101      10.000  10.000  10.000  1.00  0.00           O
HETATM    3  S   SO4 A 102      12.000  10.000  10.000  1.00  0.00           S  ";
        let protein = parse_pdb(text).unwrap();
        let ligand = parse_sdf(METHANE).unwrap();
        let prepared =
            prepare_complex(&protein, &ligand, HydrogenMode::Explicit, &PrepConfig::default())
                .unwrap();
        assert!(prepared.protein.atoms.iter().all(|a| !a.is_hetero));
    }

    #[test]
    fn methane_gains_four_hydrogens_at_bond_length() {
        let protein = tiny_protein();
        let ligand = parse_sdf(METHANE).unwrap();
        let prepared =
            prepare_complex(&protein, &ligand, HydrogenMode::Explicit, &PrepConfig::default())
                .unwrap();
        let hs: Vec<&Atom> = prepared
            .ligand
            .atoms
            .iter()
            .filter(|a| a.is_hydrogen())
            .collect();
        assert_eq!(hs.len(), 4);
        for h in hs {
            let d = geom::distance(h.position, [0.0, 0.0, 0.0]);
            assert!((d - 1.09).abs() < 0.05, "C-H distance {d}");
        }
        // valence rule oracle: bond order sum + attached H equals the target
        for (i, a) in prepared.ligand.atoms.iter().enumerate() {
            if a.element == 6 {
                let sum: f64 = prepared
                    .ligand
                    .neighbors(i)
                    .iter()
                    .map(|(_, o)| o.valence())
                    .sum();
                assert_eq!(sum, 4.0);
            }
        }
    }

    #[test]
    fn over_bonded_atom_is_an_error() {
        // carbon with five single bonds
        let mut text = String::from("bad\n\n\n  6  5  0  0  0  0  0  0  0  0999 V2000\n");
        text.push_str("    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0\n");
        for k in 0..5 {
            text.push_str(&format!(
                "{:>10.4}{:>10.4}{:>10.4} C   0  0  0  0  0  0  0  0  0  0  0  0\n",
                1.5 * f64::cos(k as f64),
                1.5 * f64::sin(k as f64),
                (k as f64) * 0.5 - 1.0
            ));
        }
        for k in 0..5 {
            text.push_str(&format!("  1{:>3}  1  0  0  0  0\n", k + 2));
        }
        text.push_str("M  END\n");
        let ligand = parse_sdf(&text).unwrap();
        let result = prepare_complex(
            &tiny_protein(),
            &ligand,
            HydrogenMode::Explicit,
            &PrepConfig::default(),
        );
        assert!(matches!(result, Err(StructError::OverBonded { atom: 0, .. })));
    }

    #[test]
    fn unknown_residue_kept_with_warning() {
        let text = "\
ATOM      1  CA  XYZ A   1       1.000   2.000   3.000  1.00  0.00           C
ATOM      2  CA  ALA A   2       4.000   2.000   3.000  1.00  0.00           C  ";
        let protein = parse_pdb(text).unwrap();
        let ligand = parse_sdf(METHANE).unwrap();
        let prepared =
            prepare_complex(&protein, &ligand, HydrogenMode::Explicit, &PrepConfig::default())
                .unwrap();
        assert!(prepared
            .protein
            .atoms
            .iter()
            .any(|a| a.residue_name == "XYZ"));
        assert!(prepared
            .warnings
            .iter()
            .any(|w| matches!(w, PrepWarning::UnknownResidue { residue, .. } if residue == "XYZ")));
    }

    #[test]
    fn charged_nitrogen_valence() {
        // ammonium fragment: N+ with one explicit bond gets 3 hydrogens
        let text = "methylamine+\n\n\n  2  1  0  0  0  0  0  0  0  0999 V2000\n    0.0000    0.0000    0.0000 N   0  0  0  0  0  0  0  0  0  0  0  0\n    1.4700    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0\n  1  2  1  0  0  0  0\nM  CHG  1   1   1\nM  END\n";
        let ligand = parse_sdf(text).unwrap();
        let prepared = prepare_complex(
            &tiny_protein(),
            &ligand,
            HydrogenMode::Explicit,
            &PrepConfig::default(),
        )
        .unwrap();
        let n_h = prepared.ligand.attached_hydrogens(0);
        assert_eq!(n_h, 3);
    }

    #[test]
    fn preparation_is_deterministic() {
        let protein = tiny_protein();
        let ligand = parse_sdf(METHANE).unwrap();
        let a = prepare_complex(&protein, &ligand, HydrogenMode::Explicit, &PrepConfig::default())
            .unwrap();
        let b = prepare_complex(&protein, &ligand, HydrogenMode::Explicit, &PrepConfig::default())
            .unwrap();
        assert_eq!(a.protein, b.protein);
        assert_eq!(a.ligand, b.ligand);
    }

    #[test]
    fn alanine_residue_gets_template_hydrogens() {
        let protein = tiny_protein();
        let ligand = parse_sdf(METHANE).unwrap();
        let prepared =
            prepare_complex(&protein, &ligand, HydrogenMode::Explicit, &PrepConfig::default())
                .unwrap();
        // ALA: N 1, CA 1, CB 3 → 5 hydrogens
        let n_h = prepared
            .protein
            .atoms
            .iter()
            .filter(|a| a.is_hydrogen())
            .count();
        assert_eq!(n_h, 5);
    }
}
