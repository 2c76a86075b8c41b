//! Core data pipeline for structure-based affinity benchmarking:
//! file parsing and preparation ([`structio`]), geometric graphs and ligand
//! features ([`molgraph`]), pairwise similarity ([`simkit`]), leakage-free
//! split construction ([`lowsim`]), interaction features ([`featkit`]) and
//! metric reporting ([`evalkit`]).

pub mod elements;
pub mod evalkit;
pub mod featkit;
pub mod geom;
pub mod lowsim;
pub mod molgraph;
pub mod simkit;
pub mod structio;

pub use structio::{Atom, Bond, BondOrder, ComplexRecord, Ligand, ProteinStructure};
