//! Ligand fingerprints: circular (ECFP/FCFP), atom pairs and topological
//! torsions over the heavy-atom graph. All hashing is 64-bit FNV-1a so
//! bitsets are identical across platforms.

use crate::structio::{BondOrder, Ligand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintKind {
    Ecfp,
    Fcfp,
    AtomPair,
    TopologicalTorsion,
}

/// Fixed-length bitset fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub kind: FingerprintKind,
    pub nbits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn new(kind: FingerprintKind, nbits: usize) -> Self {
        Fingerprint {
            kind,
            nbits,
            words: vec![0; nbits.div_ceil(64)],
        }
    }

    pub fn set_bit(&mut self, hash: u64) {
        let pos = (hash % self.nbits as u64) as usize;
        self.words[pos / 64] |= 1u64 << (pos % 64);
    }

    pub fn get_bit(&self, pos: usize) -> bool {
        (self.words[pos / 64] >> (pos % 64)) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Intersection and union popcounts against another fingerprint of the
    /// same length.
    pub fn and_or_counts(&self, other: &Fingerprint) -> (u32, u32) {
        let mut and = 0;
        let mut or = 0;
        for (a, b) in self.words.iter().zip(&other.words) {
            and += (a & b).count_ones();
            or += (a | b).count_ones();
        }
        (and, or)
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.words.len() * 16);
        for w in &self.words {
            s.push_str(&format!("{w:016x}"));
        }
        s
    }

    pub fn from_hex(kind: FingerprintKind, nbits: usize, hex: &str) -> Option<Self> {
        let n_words = nbits.div_ceil(64);
        if hex.len() != n_words * 16 {
            return None;
        }
        let mut words = Vec::with_capacity(n_words);
        for k in 0..n_words {
            words.push(u64::from_str_radix(&hex[k * 16..(k + 1) * 16], 16).ok()?);
        }
        Some(Fingerprint { kind, nbits, words })
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(values: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Heavy-atom view of a ligand: adjacency, attached-hydrogen counts, ring
/// membership and aromaticity flags. Shared by fingerprints and descriptors.
pub(crate) struct HeavyGraph {
    /// Atomic number per heavy atom.
    pub z: Vec<u8>,
    pub formal_charge: Vec<i8>,
    pub attached_h: Vec<usize>,
    /// (neighbor, bond order) lists in the heavy-atom index space.
    pub adj: Vec<Vec<(usize, BondOrder)>>,
    pub in_ring: Vec<bool>,
    pub aromatic: Vec<bool>,
}

impl HeavyGraph {
    pub fn build(ligand: &Ligand) -> Self {
        let heavy: Vec<usize> = (0..ligand.atoms.len())
            .filter(|&i| !ligand.atoms[i].is_hydrogen())
            .collect();
        let mut index = vec![usize::MAX; ligand.atoms.len()];
        for (h, &i) in heavy.iter().enumerate() {
            index[i] = h;
        }

        let n = heavy.len();
        let mut adj = vec![Vec::new(); n];
        let mut attached_h = vec![0usize; n];
        for b in &ligand.bonds {
            let (hi, hj) = (index[b.i], index[b.j]);
            match (hi == usize::MAX, hj == usize::MAX) {
                (false, false) => {
                    adj[hi].push((hj, b.order));
                    adj[hj].push((hi, b.order));
                }
                (false, true) => attached_h[hi] += 1,
                (true, false) => attached_h[hj] += 1,
                (true, true) => {}
            }
        }

        let z: Vec<u8> = heavy.iter().map(|&i| ligand.atoms[i].element).collect();
        let formal_charge: Vec<i8> = heavy
            .iter()
            .map(|&i| ligand.atoms[i].formal_charge)
            .collect();
        let aromatic: Vec<bool> = (0..n)
            .map(|i| adj[i].iter().any(|(_, o)| *o == BondOrder::Aromatic))
            .collect();
        let in_ring = ring_membership(&adj);

        HeavyGraph {
            z,
            formal_charge,
            attached_h,
            adj,
            in_ring,
            aromatic,
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Initial circular-fingerprint invariant:
    /// (element, degree, formal charge, attached hydrogens, ring flag).
    pub fn atom_invariant(&self, i: usize) -> u64 {
        fnv1a(&[
            self.z[i] as u64,
            self.degree(i) as u64,
            self.formal_charge[i] as i64 as u64,
            self.attached_h[i] as u64,
            self.in_ring[i] as u64,
        ])
    }

    /// 6-bit functional class: donor, acceptor, aromatic, halogen, basic,
    /// acidic.
    pub fn functional_class(&self, i: usize) -> u64 {
        let mut bits = 0u64;
        if self.is_donor(i) {
            bits |= 1;
        }
        if self.is_acceptor(i) {
            bits |= 2;
        }
        if self.aromatic[i] {
            bits |= 4;
        }
        if matches!(self.z[i], 9 | 17 | 35 | 53) {
            bits |= 8;
        }
        if self.is_basic(i) {
            bits |= 16;
        }
        if self.is_acidic(i) {
            bits |= 32;
        }
        bits
    }

    /// N or O with at least one hydrogen.
    pub fn is_donor(&self, i: usize) -> bool {
        matches!(self.z[i], 7 | 8) && self.attached_h[i] >= 1
    }

    /// N or O, excluding positively charged atoms.
    pub fn is_acceptor(&self, i: usize) -> bool {
        matches!(self.z[i], 7 | 8) && self.formal_charge[i] <= 0
    }

    /// Nitrogen that is protonated, or a saturated non-aromatic amine not
    /// adjacent to a carbonyl carbon.
    pub fn is_basic(&self, i: usize) -> bool {
        if self.z[i] != 7 {
            return false;
        }
        if self.formal_charge[i] > 0 {
            return true;
        }
        if self.aromatic[i] || self.adj[i].iter().any(|(_, o)| *o != BondOrder::Single) {
            return false;
        }
        !self.adj[i].iter().any(|&(j, _)| self.is_carbonyl_carbon(j))
    }

    /// Negatively charged oxygen or a hydroxyl on a carbonyl carbon
    /// (carboxylic acid pattern).
    pub fn is_acidic(&self, i: usize) -> bool {
        if self.z[i] != 8 {
            return false;
        }
        if self.formal_charge[i] < 0 {
            return true;
        }
        self.attached_h[i] >= 1
            && self.adj[i].iter().any(|&(j, _)| self.is_carbonyl_carbon(j))
    }

    fn is_carbonyl_carbon(&self, j: usize) -> bool {
        self.z[j] == 6
            && self.adj[j]
                .iter()
                .any(|&(k, o)| self.z[k] == 8 && o == BondOrder::Double)
    }

    /// All-pairs shortest path lengths through bonds (BFS per atom).
    pub fn path_lengths(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut dist = vec![vec![usize::MAX; n]; n];
        for start in 0..n {
            let row = &mut dist[start];
            row[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                for &(j, _) in &self.adj[i] {
                    if row[j] == usize::MAX {
                        row[j] = row[i] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        dist
    }
}

/// Atoms incident to at least one non-bridge edge lie on a cycle.
fn ring_membership(adj: &[Vec<(usize, BondOrder)>]) -> Vec<bool> {
    let n = adj.len();
    let mut in_ring = vec![false; n];
    if n == 0 {
        return in_ring;
    }
    // iterative Tarjan bridge finding
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0usize;
    let mut bridges: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // stack of (node, parent, neighbor cursor)
        let mut stack = vec![(root, usize::MAX, 0usize)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.last().copied() {
            let (u, parent, cursor) = top;
            if cursor < adj[u].len() {
                stack.last_mut().unwrap().2 += 1;
                let (v, _) = adj[u][cursor];
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, u, 0));
                } else if v != parent {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        bridges.insert((p.min(u), p.max(u)));
                    }
                }
            }
        }
    }

    for (i, neighbors) in adj.iter().enumerate() {
        for &(j, _) in neighbors {
            if !bridges.contains(&(i.min(j), i.max(j))) {
                in_ring[i] = true;
                break;
            }
        }
    }
    in_ring
}

fn circular(graph: &HeavyGraph, initial: Vec<u64>, radius: usize, fp: &mut Fingerprint) {
    let mut ids = initial;
    for &id in &ids {
        fp.set_bit(id);
    }
    for _ in 0..radius {
        let mut next = Vec::with_capacity(graph.len());
        for i in 0..graph.len() {
            let mut parts: Vec<(u64, u64)> = graph.adj[i]
                .iter()
                .map(|&(j, o)| (o.code(), ids[j]))
                .collect();
            parts.sort_unstable();
            let mut hash_input = vec![ids[i]];
            for (order, nid) in parts {
                hash_input.push(order);
                hash_input.push(nid);
            }
            let id = fnv1a(&hash_input);
            fp.set_bit(id);
            next.push(id);
        }
        ids = next;
    }
}

/// Extended-connectivity fingerprint by iterative neighborhood hashing.
pub fn ecfp(ligand: &Ligand, radius: usize, nbits: usize) -> Fingerprint {
    let graph = HeavyGraph::build(ligand);
    let mut fp = Fingerprint::new(FingerprintKind::Ecfp, nbits);
    let initial: Vec<u64> = (0..graph.len()).map(|i| graph.atom_invariant(i)).collect();
    circular(&graph, initial, radius, &mut fp);
    fp
}

/// Functional-class variant: the initial invariant is the 6-bit
/// donor/acceptor/aromatic/halogen/basic/acidic class.
pub fn fcfp(ligand: &Ligand, radius: usize, nbits: usize) -> Fingerprint {
    let graph = HeavyGraph::build(ligand);
    let mut fp = Fingerprint::new(FingerprintKind::Fcfp, nbits);
    let initial: Vec<u64> = (0..graph.len())
        .map(|i| fnv1a(&[graph.functional_class(i)]))
        .collect();
    circular(&graph, initial, radius, &mut fp);
    fp
}

const MAX_PAIR_PATH: usize = 30;

/// Hashes (invariant, invariant, topological distance) for every heavy-atom
/// pair with bond-path length 1..=30.
pub fn atom_pair(ligand: &Ligand, nbits: usize) -> Fingerprint {
    let graph = HeavyGraph::build(ligand);
    let mut fp = Fingerprint::new(FingerprintKind::AtomPair, nbits);
    let inv: Vec<u64> = (0..graph.len()).map(|i| graph.atom_invariant(i)).collect();
    let dist = graph.path_lengths();
    for i in 0..graph.len() {
        for j in (i + 1)..graph.len() {
            let d = dist[i][j];
            if d == usize::MAX || d > MAX_PAIR_PATH {
                continue;
            }
            let (lo, hi) = if inv[i] <= inv[j] {
                (inv[i], inv[j])
            } else {
                (inv[j], inv[i])
            };
            fp.set_bit(fnv1a(&[lo, hi, d as u64]));
        }
    }
    fp
}

/// Hashes every linear 4-atom bond path (canonical direction). Molecules
/// with fewer than four heavy atoms yield the empty fingerprint.
pub fn topological_torsion(ligand: &Ligand, nbits: usize) -> Fingerprint {
    let graph = HeavyGraph::build(ligand);
    let mut fp = Fingerprint::new(FingerprintKind::TopologicalTorsion, nbits);
    let inv: Vec<u64> = (0..graph.len()).map(|i| graph.atom_invariant(i)).collect();
    for b in 0..graph.len() {
        for &(c, _) in &graph.adj[b] {
            if b >= c {
                continue; // each central bond once
            }
            for &(a, _) in &graph.adj[b] {
                if a == c {
                    continue;
                }
                for &(d, _) in &graph.adj[c] {
                    if d == b || d == a {
                        continue;
                    }
                    let fwd = [inv[a], inv[b], inv[c], inv[d]];
                    let rev = [inv[d], inv[c], inv[b], inv[a]];
                    let canonical = if fwd <= rev { fwd } else { rev };
                    fp.set_bit(fnv1a(&canonical));
                }
            }
        }
    }
    fp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structio::{parse_sdf, Atom, Bond};
    use affbench_rng::Xoshiro256;

    fn chain(n: usize) -> Ligand {
        // linear alkane with n carbons
        let atoms = (0..n)
            .map(|k| Atom {
                element: 6,
                position: [1.54 * k as f64, 0.0, 0.0],
                name: format!("C{k}"),
                residue_name: String::new(),
                chain_id: ' ',
                residue_seq: 0,
                is_hetero: true,
                formal_charge: 0,
            })
            .collect();
        let bonds = (0..n.saturating_sub(1))
            .map(|k| Bond {
                i: k,
                j: k + 1,
                order: BondOrder::Single,
            })
            .collect();
        Ligand {
            name: format!("C{n}"),
            atoms,
            bonds,
        }
    }

    fn benzene() -> Ligand {
        let atoms = (0..6)
            .map(|k| {
                let ang = std::f64::consts::PI / 3.0 * k as f64;
                Atom {
                    element: 6,
                    position: [1.39 * ang.cos(), 1.39 * ang.sin(), 0.0],
                    name: format!("C{k}"),
                    residue_name: String::new(),
                    chain_id: ' ',
                    residue_seq: 0,
                    is_hetero: true,
                    formal_charge: 0,
                }
            })
            .collect();
        let bonds = (0..6)
            .map(|k| Bond {
                i: k,
                j: (k + 1) % 6,
                order: BondOrder::Aromatic,
            })
            .collect();
        Ligand {
            name: "benzene".into(),
            atoms,
            bonds,
        }
    }

    fn permuted(ligand: &Ligand, rng: &mut Xoshiro256) -> Ligand {
        let n = ligand.atoms.len();
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let atoms = perm.iter().map(|&old| ligand.atoms[old].clone()).collect();
        let bonds = ligand
            .bonds
            .iter()
            .map(|b| Bond {
                i: inv[b.i],
                j: inv[b.j],
                order: b.order,
            })
            .collect();
        Ligand {
            name: ligand.name.clone(),
            atoms,
            bonds,
        }
    }

    #[test]
    fn methane_vs_ethane_differ() {
        let a = ecfp(&chain(1), 2, 2048);
        let b = ecfp(&chain(2), 2, 2048);
        assert_ne!(a, b);
        assert!(a.popcount() >= 1);
        assert!(b.popcount() >= 1);
    }

    #[test]
    fn all_kinds_permutation_invariant() {
        let mut rng = Xoshiro256::seed_from(23);
        let base = parse_sdf(
            "mol\n\n\n  6  5  0  0  0  0  0  0  0  0999 V2000\n    0.0000    0.0000    0.0000 C   0  0\n    1.5000    0.0000    0.0000 C   0  0\n    2.2000    1.3000    0.0000 N   0  0\n    2.2000   -1.3000    0.0000 O   0  0\n    3.7000    1.3000    0.0000 C   0  0\n    4.4000    2.6000    0.0000 S   0  0\n  1  2  1  0\n  2  3  1  0\n  2  4  2  0\n  3  5  1  0\n  5  6  1  0\nM  END\n",
        )
        .unwrap();
        let reference = [
            ecfp(&base, 2, 2048),
            fcfp(&base, 2, 2048),
            atom_pair(&base, 2048),
            topological_torsion(&base, 2048),
        ];
        for _ in 0..100 {
            let shuffled = permuted(&base, &mut rng);
            assert_eq!(ecfp(&shuffled, 2, 2048), reference[0]);
            assert_eq!(fcfp(&shuffled, 2, 2048), reference[1]);
            assert_eq!(atom_pair(&shuffled, 2048), reference[2]);
            assert_eq!(topological_torsion(&shuffled, 2048), reference[3]);
        }
    }

    #[test]
    fn torsion_needs_four_heavy_atoms() {
        assert_eq!(topological_torsion(&chain(3), 2048).popcount(), 0);
        assert!(topological_torsion(&chain(4), 2048).popcount() >= 1);
    }

    #[test]
    fn benzene_atoms_are_ring_and_aromatic() {
        let g = HeavyGraph::build(&benzene());
        assert!(g.in_ring.iter().all(|&r| r));
        assert!(g.aromatic.iter().all(|&a| a));
        let h = HeavyGraph::build(&chain(4));
        assert!(h.in_ring.iter().all(|&r| !r));
    }

    #[test]
    fn single_atom_has_a_bit() {
        assert!(ecfp(&chain(1), 2, 2048).popcount() >= 1);
    }

    #[test]
    fn hex_round_trip() {
        let fp = ecfp(&benzene(), 2, 2048);
        let restored =
            Fingerprint::from_hex(FingerprintKind::Ecfp, 2048, &fp.to_hex()).unwrap();
        assert_eq!(fp, restored);
    }

    #[test]
    fn attached_hydrogens_affect_invariant() {
        // same heavy skeleton, one with an explicit hydrogen on C0
        let without = chain(2);
        let mut with = chain(2);
        with.atoms.push(Atom {
            element: 1,
            position: [0.0, 1.09, 0.0],
            name: "H1".into(),
            residue_name: String::new(),
            chain_id: ' ',
            residue_seq: 0,
            is_hetero: true,
            formal_charge: 0,
        });
        with.bonds.push(Bond {
            i: 0,
            j: 2,
            order: BondOrder::Single,
        });
        assert_ne!(ecfp(&without, 2, 2048), ecfp(&with, 2, 2048));
    }
}
