//! Affinity index ingestion.

use super::{Result, StructError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub structure_id: String,
    pub uniprot_id: String,
    /// −log10(molar), pre-converted from KI/KD/IC50 upstream.
    pub p_affinity: f64,
}

/// Reads the `structure_id,uniprot_id,p_affinity` CSV.
pub fn load_index(text: &str) -> Result<Vec<IndexEntry>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(StructError::IndexRow {
        row: 0,
        msg: "empty index".into(),
    })?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header != ["structure_id", "uniprot_id", "p_affinity"] {
        return Err(StructError::IndexRow {
            row: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }

    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(StructError::IndexRow {
                row,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let structure_id = fields[0].to_string();
        if !seen.insert(structure_id.clone()) {
            return Err(StructError::DuplicateId(structure_id));
        }
        let p_affinity: f64 = fields[2].parse().map_err(|_| StructError::IndexRow {
            row,
            msg: format!("unparseable p_affinity {:?}", fields[2]),
        })?;
        if !p_affinity.is_finite() {
            return Err(StructError::IndexRow {
                row,
                msg: "non-finite p_affinity".into(),
            });
        }
        out.push(IndexEntry {
            structure_id,
            uniprot_id: fields[1].to_string(),
            p_affinity,
        });
    }
    Ok(out)
}
