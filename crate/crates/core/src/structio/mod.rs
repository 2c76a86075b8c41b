//! Structure file ingestion: PDB (ATOM/HETATM subset), SDF V2000, the
//! affinity index CSV, and rule-based complex preparation.

mod index;
mod pdb;
mod prepare;
mod sdf;

pub use index::{load_index, IndexEntry};
pub use pdb::{parse_pdb, write_pdb};
pub use prepare::{prepare_complex, PrepConfig, PrepWarning, Prepared, DEFAULT_BLACKLIST};
pub use sdf::{parse_sdf, write_sdf};

use serde::{Deserialize, Serialize};

/// One atom with enough context to classify and protonate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Atomic number, 1..=118.
    pub element: u8,
    /// Cartesian position in Å.
    pub position: [f64; 3],
    /// Atom name as written in the source file ("CA", "OG1", ...).
    pub name: String,
    /// Three-letter residue code, empty for ligand atoms.
    pub residue_name: String,
    pub chain_id: char,
    pub residue_seq: i32,
    pub is_hetero: bool,
    pub formal_charge: i8,
}

impl Atom {
    pub fn is_hydrogen(&self) -> bool {
        self.element == 1
    }
}

/// Protein-side atoms of one complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinStructure {
    /// 4-character PDB code.
    pub structure_id: String,
    pub atoms: Vec<Atom>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence sum.
    pub fn valence(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }

    /// Stable integer code used in fingerprint hashing.
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

/// Small molecule: atoms plus an explicit bond list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ligand {
    pub name: String,
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl Ligand {
    /// Indices of neighbors of atom `i` with the connecting bond order.
    pub fn neighbors(&self, i: usize) -> Vec<(usize, BondOrder)> {
        let mut out = Vec::new();
        for b in &self.bonds {
            if b.i == i {
                out.push((b.j, b.order));
            } else if b.j == i {
                out.push((b.i, b.order));
            }
        }
        out
    }

    /// Number of hydrogens bonded to atom `i`.
    pub fn attached_hydrogens(&self, i: usize) -> usize {
        self.neighbors(i)
            .iter()
            .filter(|(j, _)| self.atoms[*j].is_hydrogen())
            .count()
    }

    /// Drops the atoms at `remove` (sorted or not), reindexing bonds.
    /// Bonds with a removed endpoint are dropped.
    pub fn remove_atoms(&mut self, remove: &[usize]) {
        let removed: std::collections::HashSet<usize> = remove.iter().copied().collect();
        let mut new_index = vec![usize::MAX; self.atoms.len()];
        let mut kept = Vec::with_capacity(self.atoms.len());
        for (i, atom) in self.atoms.drain(..).enumerate() {
            if !removed.contains(&i) {
                new_index[i] = kept.len();
                kept.push(atom);
            }
        }
        self.atoms = kept;
        self.bonds.retain_mut(|b| {
            if new_index[b.i] == usize::MAX || new_index[b.j] == usize::MAX {
                false
            } else {
                b.i = new_index[b.i];
                b.j = new_index[b.j];
                true
            }
        });
    }

    /// True when every atom is reachable from atom 0 through bonds.
    pub fn is_connected(&self) -> bool {
        if self.atoms.len() <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.i].push(b.j);
            adj[b.j].push(b.i);
        }
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// One protein-ligand complex with its affinity label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexRecord {
    pub structure_id: String,
    pub uniprot_id: String,
    pub protein: ProteinStructure,
    pub ligand: Ligand,
    /// −log10 of the binding constant in molar units.
    pub p_affinity: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum StructError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no atoms remain after parsing")]
    EmptyStructure,
    #[error("row {row}: {msg}")]
    IndexRow { row: usize, msg: String },
    #[error("duplicate structure id {0}")]
    DuplicateId(String),
    #[error("atom {atom} ({symbol}) is over-bonded: valence sum {valence_sum:.2} exceeds target {target:.2}")]
    OverBonded {
        atom: usize,
        symbol: String,
        valence_sum: f64,
        target: f64,
    },
    #[error("preparation failed: {0}")]
    Preparation(String),
}

pub type Result<T> = std::result::Result<T, StructError>;
