//! Geometric graphs over prepared complexes plus ligand fingerprints and
//! descriptors.

mod descriptors;
mod fingerprint;

pub use descriptors::{descriptors, DescriptorVector, DESCRIPTOR_NAMES};
pub use fingerprint::{
    atom_pair, ecfp, fcfp, topological_torsion, Fingerprint, FingerprintKind,
};

use crate::geom;
use crate::structio::{Atom, Ligand, ProteinStructure};
use serde::{Deserialize, Serialize};

/// Which hydrogens stay in the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HydrogenMode {
    /// No hydrogen atoms.
    None,
    /// Only hydrogens on nitrogen, oxygen or sulfur.
    Polar,
    /// All hydrogens.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Protein,
    Ligand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphForm {
    /// One graph over pocket and ligand together.
    Single,
    /// Protein-protein and ligand-ligand edges only.
    Multi,
}

/// Closed 11-class element vocabulary for node features.
pub const ELEMENT_VOCAB: &[&str] = &[
    "H", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "other",
];
pub const VOCAB_SIZE: usize = 11;

/// Index into [`ELEMENT_VOCAB`] for an atomic number.
pub fn element_class(z: u8) -> usize {
    match z {
        1 => 0,
        6 => 1,
        7 => 2,
        8 => 3,
        9 => 4,
        15 => 5,
        16 => 6,
        17 => 7,
        35 => 8,
        53 => 9,
        _ => 10,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    /// Atomic number.
    pub z: u8,
    /// Index into the element vocabulary.
    pub class: usize,
    pub pos: [f64; 3],
    pub origin: Origin,
}

impl GraphNode {
    pub fn onehot(&self) -> Vec<f64> {
        let mut v = vec![0.0; VOCAB_SIZE];
        v[self.class] = 1.0;
        v
    }
}

/// Geometric graph: nodes with one-hot element classes and positions,
/// undirected distance-cutoff edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolGraph {
    pub nodes: Vec<GraphNode>,
    /// Undirected edges, stored once with i < j.
    pub edges: Vec<(usize, usize)>,
    pub form: GraphForm,
}

impl MolGraph {
    /// Spec'd JSON export shape.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes": self.nodes.iter().map(|n| serde_json::json!({
                "z": n.z,
                "onehot": n.onehot(),
                "pos": n.pos,
                "origin": match n.origin { Origin::Protein => "protein", Origin::Ligand => "ligand" },
            })).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|(i, j)| vec![*i, *j]).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphConfig {
    pub mode: HydrogenMode,
    pub form: GraphForm,
    pub cutoff: f64,
    pub max_nodes: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            mode: HydrogenMode::Explicit,
            form: GraphForm::Single,
            cutoff: 5.0,
            max_nodes: 4096,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("no protein atoms within {radius} Å of the ligand")]
    EmptyPocket { radius: f64 },
    #[error("graph has {nodes} nodes, exceeding the configured maximum {max}")]
    TooLarge { nodes: usize, max: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

/// Protein atoms whose minimum distance to any ligand atom is ≤ `radius`.
pub fn extract_pocket(
    protein: &ProteinStructure,
    ligand: &Ligand,
    radius: f64,
) -> Result<Vec<Atom>, GraphError> {
    let pocket: Vec<Atom> = protein
        .atoms
        .iter()
        .filter(|p| {
            ligand
                .atoms
                .iter()
                .any(|l| geom::distance(p.position, l.position) <= radius)
        })
        .cloned()
        .collect();
    if pocket.is_empty() {
        return Err(GraphError::EmptyPocket { radius });
    }
    Ok(pocket)
}

/// Removes hydrogens from a ligand according to the mode. Polar keeps
/// exactly the hydrogens bonded to N, O or S.
pub fn filter_ligand_hydrogens(ligand: &mut Ligand, mode: HydrogenMode) {
    if mode == HydrogenMode::Explicit {
        return;
    }
    let mut drop = Vec::new();
    for (i, atom) in ligand.atoms.iter().enumerate() {
        if !atom.is_hydrogen() {
            continue;
        }
        let keep = mode == HydrogenMode::Polar
            && ligand
                .neighbors(i)
                .iter()
                .any(|(j, _)| matches!(ligand.atoms[*j].element, 7 | 8 | 16));
        if !keep {
            drop.push(i);
        }
    }
    ligand.remove_atoms(&drop);
}

/// Removes hydrogens from a protein atom list according to the mode. With no
/// bond table, Polar keeps hydrogens within 1.25 Å of any N, O or S atom.
pub fn filter_protein_hydrogens(atoms: &mut Vec<Atom>, mode: HydrogenMode) {
    if mode == HydrogenMode::Explicit {
        return;
    }
    let polar_anchors: Vec<[f64; 3]> = atoms
        .iter()
        .filter(|a| matches!(a.element, 7 | 8 | 16))
        .map(|a| a.position)
        .collect();
    atoms.retain(|a| {
        if !a.is_hydrogen() {
            return true;
        }
        mode == HydrogenMode::Polar
            && polar_anchors
                .iter()
                .any(|p| geom::distance(*p, a.position) <= 1.25)
    });
}

/// Builds the geometric graph from a pocket and a ligand.
///
/// Hydrogens are filtered per `config.mode` (a no-op when the inputs were
/// already filtered), nodes are pocket atoms followed by ligand atoms, and
/// an undirected edge connects every pair within the closed cutoff ball.
/// The multi-graph form drops protein-ligand edges.
pub fn build_graph(
    pocket: &[Atom],
    ligand: &Ligand,
    config: &GraphConfig,
) -> Result<MolGraph, GraphError> {
    if pocket.is_empty() {
        return Err(GraphError::EmptyInput("pocket"));
    }
    if ligand.atoms.is_empty() {
        return Err(GraphError::EmptyInput("ligand"));
    }

    let mut pocket_atoms = pocket.to_vec();
    filter_protein_hydrogens(&mut pocket_atoms, config.mode);
    let mut ligand = ligand.clone();
    filter_ligand_hydrogens(&mut ligand, config.mode);

    let mut nodes = Vec::with_capacity(pocket_atoms.len() + ligand.atoms.len());
    for a in &pocket_atoms {
        nodes.push(GraphNode {
            z: a.element,
            class: element_class(a.element),
            pos: a.position,
            origin: Origin::Protein,
        });
    }
    for a in &ligand.atoms {
        nodes.push(GraphNode {
            z: a.element,
            class: element_class(a.element),
            pos: a.position,
            origin: Origin::Ligand,
        });
    }
    if nodes.len() > config.max_nodes {
        return Err(GraphError::TooLarge {
            nodes: nodes.len(),
            max: config.max_nodes,
        });
    }

    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if config.form == GraphForm::Multi && nodes[i].origin != nodes[j].origin {
                continue;
            }
            if geom::distance(nodes[i].pos, nodes[j].pos) <= config.cutoff {
                edges.push((i, j));
            }
        }
    }

    Ok(MolGraph {
        nodes,
        edges,
        form: config.form,
    })
}

/// Random rigid motions for invariance tests (unit-test support only).
#[cfg(test)]
pub(crate) mod tests_support {
    pub fn random_rigid(rng: &mut affbench_rng::Xoshiro256) -> ([[f64; 3]; 3], [f64; 3]) {
        // rotation from a normalized quaternion
        let q: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
        let n = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        let rot = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        let t = [
            rng.next_range(-10.0, 10.0),
            rng.next_range(-10.0, 10.0),
            rng.next_range(-10.0, 10.0),
        ];
        (rot, t)
    }

    pub fn apply(rot: [[f64; 3]; 3], p: [f64; 3], t: [f64; 3]) -> [f64; 3] {
        [
            rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2] + t[0],
            rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2] + t[1],
            rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2] + t[2],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::{apply, random_rigid};
    use super::*;
    use crate::structio::{Bond, BondOrder};

    fn atom(element: u8, pos: [f64; 3]) -> Atom {
        Atom {
            element,
            position: pos,
            name: "X".into(),
            residue_name: "ALA".into(),
            chain_id: 'A',
            residue_seq: 1,
            is_hetero: false,
            formal_charge: 0,
        }
    }

    fn ligand_of(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Ligand {
        Ligand {
            name: "LIG".into(),
            atoms,
            bonds,
        }
    }

    fn protein_of(atoms: Vec<Atom>) -> ProteinStructure {
        ProteinStructure {
            structure_id: "TEST".into(),
            atoms,
        }
    }

    #[test]
    fn pocket_boundary_inclusive() {
        let ligand = ligand_of(vec![atom(6, [0.0, 0.0, 0.0])], vec![]);
        let protein = protein_of(vec![
            atom(6, [4.9, 0.0, 0.0]),
            atom(6, [5.1, 0.0, 0.0]),
            atom(6, [5.0, 0.0, 0.0]),
        ]);
        let pocket = extract_pocket(&protein, &ligand, 5.0).unwrap();
        let xs: Vec<f64> = pocket.iter().map(|a| a.position[0]).collect();
        assert_eq!(xs, vec![4.9, 5.0]);
    }

    #[test]
    fn pocket_on_a_line_matches_brute_force() {
        // 10 protein atoms at x = 1..10, ligand at the origin: pocket = first five
        let ligand = ligand_of(vec![atom(6, [0.0, 0.0, 0.0])], vec![]);
        let atoms: Vec<Atom> = (1..=10).map(|k| atom(6, [k as f64, 0.0, 0.0])).collect();
        let protein = protein_of(atoms);
        let pocket = extract_pocket(&protein, &ligand, 5.0).unwrap();
        assert_eq!(pocket.len(), 5);
        assert_eq!(pocket.last().unwrap().position[0], 5.0);
    }

    #[test]
    fn empty_pocket_is_error() {
        let ligand = ligand_of(vec![atom(6, [0.0, 0.0, 0.0])], vec![]);
        let protein = protein_of(vec![atom(6, [50.0, 0.0, 0.0])]);
        assert!(matches!(
            extract_pocket(&protein, &ligand, 5.0),
            Err(GraphError::EmptyPocket { .. })
        ));
    }

    #[test]
    fn two_atoms_within_cutoff_single_edge() {
        let pocket = vec![atom(6, [0.0, 0.0, 0.0])];
        let ligand = ligand_of(vec![atom(7, [3.0, 0.0, 0.0])], vec![]);
        let g = build_graph(&pocket, &ligand, &GraphConfig::default()).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn multigraph_drops_cross_edges() {
        let pocket = vec![atom(6, [0.0, 0.0, 0.0])];
        let ligand = ligand_of(vec![atom(7, [3.0, 0.0, 0.0])], vec![]);
        let cfg = GraphConfig {
            form: GraphForm::Multi,
            ..GraphConfig::default()
        };
        let g = build_graph(&pocket, &ligand, &cfg).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn square_has_four_edges() {
        // 4 Å sides, 5.66 Å diagonals: exactly the sides connect
        let pocket = vec![
            atom(6, [0.0, 0.0, 0.0]),
            atom(6, [4.0, 0.0, 0.0]),
            atom(6, [4.0, 4.0, 0.0]),
        ];
        let ligand = ligand_of(vec![atom(6, [0.0, 4.0, 0.0])], vec![]);
        let g = build_graph(&pocket, &ligand, &GraphConfig::default()).unwrap();
        assert_eq!(g.edges.len(), 4);
        // brute-force pair check
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d = geom::distance(g.nodes[i].pos, g.nodes[j].pos);
                assert_eq!(g.edges.contains(&(i, j)), d <= 5.0, "pair {i},{j}");
            }
        }
    }

    #[test]
    fn graph_too_large_is_error() {
        let pocket: Vec<Atom> = (0..5).map(|k| atom(6, [k as f64, 0.0, 0.0])).collect();
        let ligand = ligand_of(vec![atom(6, [0.0, 1.0, 0.0])], vec![]);
        let cfg = GraphConfig {
            max_nodes: 4,
            ..GraphConfig::default()
        };
        assert!(matches!(
            build_graph(&pocket, &ligand, &cfg),
            Err(GraphError::TooLarge { nodes: 6, max: 4 })
        ));
    }

    #[test]
    fn hydrogen_mode_monotone_node_counts() {
        // ligand: O-H plus C-H; protein: N with a polar H and C with an apolar H
        let ligand = ligand_of(
            vec![
                atom(8, [0.0, 0.0, 0.0]),
                atom(6, [1.4, 0.0, 0.0]),
                atom(1, [-0.9, 0.3, 0.0]),
                atom(1, [1.8, 1.0, 0.0]),
            ],
            vec![
                Bond { i: 0, j: 1, order: BondOrder::Single },
                Bond { i: 0, j: 2, order: BondOrder::Single },
                Bond { i: 1, j: 3, order: BondOrder::Single },
            ],
        );
        let pocket = vec![
            atom(7, [3.0, 0.0, 0.0]),
            atom(1, [3.5, 0.8, 0.0]),
            atom(6, [3.0, 2.0, 0.0]),
            atom(1, [3.6, 2.8, 0.0]),
        ];
        let mut counts = Vec::new();
        for mode in [HydrogenMode::None, HydrogenMode::Polar, HydrogenMode::Explicit] {
            let cfg = GraphConfig { mode, ..GraphConfig::default() };
            counts.push(build_graph(&pocket, &ligand, &cfg).unwrap().nodes.len());
        }
        assert_eq!(counts, vec![4, 6, 8]);
        assert!(counts[0] <= counts[1] && counts[1] <= counts[2]);
    }

    #[test]
    fn polar_filter_keeps_exactly_nos_attached() {
        let mut ligand = ligand_of(
            vec![
                atom(7, [0.0, 0.0, 0.0]),
                atom(6, [1.5, 0.0, 0.0]),
                atom(1, [-0.6, 0.8, 0.0]),
                atom(1, [2.0, 0.9, 0.0]),
            ],
            vec![
                Bond { i: 0, j: 1, order: BondOrder::Single },
                Bond { i: 0, j: 2, order: BondOrder::Single },
                Bond { i: 1, j: 3, order: BondOrder::Single },
            ],
        );
        filter_ligand_hydrogens(&mut ligand, HydrogenMode::Polar);
        let hydrogens: Vec<usize> = ligand
            .atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_hydrogen())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(hydrogens.len(), 1);
        // the surviving hydrogen is bonded to the nitrogen
        assert!(ligand
            .neighbors(hydrogens[0])
            .iter()
            .any(|(j, _)| ligand.atoms[*j].element == 7));
    }

    #[test]
    fn rigid_motion_preserves_edges() {
        use affbench_rng::Xoshiro256;
        let mut rng = Xoshiro256::seed_from(17);
        let pocket: Vec<Atom> = (0..6)
            .map(|_| {
                atom(
                    6,
                    [
                        rng.next_range(-4.0, 4.0),
                        rng.next_range(-4.0, 4.0),
                        rng.next_range(-4.0, 4.0),
                    ],
                )
            })
            .collect();
        let ligand = ligand_of(vec![atom(7, [0.5, 0.5, 0.5])], vec![]);
        let cfg = GraphConfig::default();
        let base = build_graph(&pocket, &ligand, &cfg).unwrap();

        for _ in 0..20 {
            let (rot, t) = random_rigid(&mut rng);
            let moved_pocket: Vec<Atom> = pocket
                .iter()
                .map(|a| {
                    let mut b = a.clone();
                    b.position = apply(rot, a.position, t);
                    b
                })
                .collect();
            let mut moved_ligand = ligand.clone();
            for a in &mut moved_ligand.atoms {
                a.position = apply(rot, a.position, t);
            }
            let g = build_graph(&moved_pocket, &moved_ligand, &cfg).unwrap();
            assert_eq!(g.edges, base.edges);
            assert_eq!(
                g.nodes.iter().map(|n| n.class).collect::<Vec<_>>(),
                base.nodes.iter().map(|n| n.class).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn single_graph_edges_superset_of_multi() {
        let pocket = vec![atom(6, [0.0, 0.0, 0.0]), atom(7, [2.0, 0.0, 0.0])];
        let ligand = ligand_of(
            vec![atom(6, [0.0, 2.0, 0.0]), atom(8, [2.0, 2.0, 0.0])],
            vec![Bond { i: 0, j: 1, order: BondOrder::Single }],
        );
        let single = build_graph(&pocket, &ligand, &GraphConfig::default()).unwrap();
        let multi = build_graph(
            &pocket,
            &ligand,
            &GraphConfig { form: GraphForm::Multi, ..GraphConfig::default() },
        )
        .unwrap();
        for e in &multi.edges {
            assert!(single.edges.contains(e));
        }
        for e in &single.edges {
            if !multi.edges.contains(e) {
                assert_ne!(single.nodes[e.0].origin, single.nodes[e.1].origin);
            }
        }
    }
}
