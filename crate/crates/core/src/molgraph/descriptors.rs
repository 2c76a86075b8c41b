//! Ligand descriptors computed from the heavy-atom graph and explicit
//! hydrogens: molecular weight, donor/acceptor counts, rotatable bonds,
//! aromatic ring count, a reduced Ertl TPSA and a reduced Crippen logP
//! proxy (named clogp_proxy so it is never confused with xLogP).

use super::fingerprint::HeavyGraph;
use crate::elements;
use crate::structio::{BondOrder, Ligand};
use serde::{Deserialize, Serialize};

pub const DESCRIPTOR_NAMES: &[&str] = &[
    "clogp_proxy",
    "aromatic_ring_count",
    "molecular_weight",
    "num_acceptors",
    "num_donors",
    "rotatable_bonds",
    "tpsa",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector {
    pub clogp_proxy: f64,
    pub aromatic_ring_count: f64,
    pub molecular_weight: f64,
    pub num_acceptors: f64,
    pub num_donors: f64,
    pub rotatable_bonds: f64,
    pub tpsa: f64,
}

impl DescriptorVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.clogp_proxy,
            self.aromatic_ring_count,
            self.molecular_weight,
            self.num_acceptors,
            self.num_donors,
            self.rotatable_bonds,
            self.tpsa,
        ]
    }
}

/// Computes all descriptors. Expects a prepared ligand with explicit
/// hydrogens (donor counts depend on them).
pub fn descriptors(ligand: &Ligand) -> DescriptorVector {
    let graph = HeavyGraph::build(ligand);

    let molecular_weight: f64 = ligand
        .atoms
        .iter()
        .map(|a| elements::atomic_weight(a.element).unwrap_or(0.0))
        .sum();

    let num_acceptors = (0..graph.len()).filter(|&i| graph.is_acceptor(i)).count() as f64;
    let num_donors = (0..graph.len()).filter(|&i| graph.is_donor(i)).count() as f64;
    let rotatable_bonds = count_rotatable(&graph) as f64;
    let aromatic_ring_count = aromatic_rings(&graph) as f64;
    let tpsa = (0..graph.len()).map(|i| tpsa_contribution(&graph, i)).sum();
    let clogp_proxy = clogp(&graph);

    DescriptorVector {
        clogp_proxy,
        aromatic_ring_count,
        molecular_weight,
        num_acceptors,
        num_donors,
        rotatable_bonds,
        tpsa,
    }
}

/// Non-ring single bonds between heavy atoms that each have at least one
/// additional heavy neighbor (terminal bonds never rotate).
fn count_rotatable(graph: &HeavyGraph) -> usize {
    let mut count = 0;
    for i in 0..graph.len() {
        for &(j, order) in &graph.adj[i] {
            if j <= i || order != BondOrder::Single {
                continue;
            }
            if graph.in_ring[i] && graph.in_ring[j] && in_same_ring_edge(graph, i, j) {
                continue;
            }
            if graph.degree(i) >= 2 && graph.degree(j) >= 2 {
                count += 1;
            }
        }
    }
    count
}

/// A bond is a ring bond when removing it keeps its endpoints connected.
fn in_same_ring_edge(graph: &HeavyGraph, a: usize, b: usize) -> bool {
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(i) = stack.pop() {
        for &(j, _) in &graph.adj[i] {
            if (i == a && j == b) || (i == b && j == a) {
                continue;
            }
            if !seen[j] {
                if j == b {
                    return true;
                }
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen[b]
}

/// Independent cycle count of the aromatic-bond subgraph
/// (edges − vertices + components, per connected component).
fn aromatic_rings(graph: &HeavyGraph) -> usize {
    let n = graph.len();
    let mut touched = vec![false; n];
    let mut edge_count = 0usize;
    for i in 0..n {
        for &(j, order) in &graph.adj[i] {
            if order == BondOrder::Aromatic && i < j {
                edge_count += 1;
                touched[i] = true;
                touched[j] = true;
            }
        }
    }
    let vertex_count = touched.iter().filter(|&&t| t).count();
    if vertex_count == 0 {
        return 0;
    }
    // count components of the aromatic subgraph
    let mut seen = vec![false; n];
    let mut components = 0usize;
    for start in 0..n {
        if !touched[start] || seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &(j, order) in &graph.adj[i] {
                if order == BondOrder::Aromatic && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edge_count + components - vertex_count
}

/// Reduced Ertl fragment contributions, nitrogen and oxygen entries only.
fn tpsa_contribution(graph: &HeavyGraph, i: usize) -> f64 {
    let h = graph.attached_h[i];
    let charge = graph.formal_charge[i];
    let doubles = graph.adj[i]
        .iter()
        .filter(|(_, o)| *o == BondOrder::Double)
        .count();
    let triples = graph.adj[i]
        .iter()
        .filter(|(_, o)| *o == BondOrder::Triple)
        .count();
    match graph.z[i] {
        8 => {
            if graph.aromatic[i] {
                13.14
            } else if charge < 0 {
                23.06
            } else if h >= 1 {
                20.23
            } else if doubles >= 1 {
                17.07
            } else {
                9.23
            }
        }
        7 => {
            if graph.aromatic[i] {
                match (charge > 0, h) {
                    (true, 0) => 4.10,
                    (true, _) => 14.14,
                    (false, 0) => {
                        if graph.degree(i) >= 3 {
                            4.41
                        } else {
                            12.89
                        }
                    }
                    (false, _) => 15.79,
                }
            } else if charge > 0 {
                match h {
                    0 => 3.01,
                    1 => 4.44,
                    2 => 16.61,
                    _ => 27.64,
                }
            } else if triples >= 1 {
                23.79
            } else if doubles >= 2 {
                11.68 // nitro-style
            } else if doubles == 1 {
                if h >= 1 {
                    23.85
                } else {
                    12.36
                }
            } else {
                match h {
                    0 => 3.24,
                    1 => 12.03,
                    _ => 26.02,
                }
            }
        }
        _ => 0.0,
    }
}

/// Reduced Crippen-style atomic contributions. Deliberately coarse; the
/// result is a proxy, reported under its own name.
fn clogp(graph: &HeavyGraph) -> f64 {
    let mut total = 0.0;
    for i in 0..graph.len() {
        let hetero_neighbor = graph.adj[i]
            .iter()
            .any(|&(j, _)| !matches!(graph.z[j], 1 | 6));
        total += match graph.z[i] {
            6 => {
                if graph.aromatic[i] {
                    0.1581
                } else if hetero_neighbor {
                    -0.2035
                } else {
                    0.1441
                }
            }
            7 => {
                if graph.aromatic[i] {
                    -0.3239
                } else {
                    -1.0190
                }
            }
            8 => {
                if graph.aromatic[i] {
                    0.1552
                } else {
                    -0.2893
                }
            }
            9 => 0.4202,
            15 => 0.8612,
            16 => 0.6482,
            17 => 0.6895,
            35 => 0.8456,
            53 => 0.8857,
            _ => 0.0,
        };
        // hydrogens contribute through their heavy parent
        let h_term = if matches!(graph.z[i], 6) { 0.1230 } else { -0.2677 };
        total += graph.attached_h[i] as f64 * h_term;
    }
    total
}
