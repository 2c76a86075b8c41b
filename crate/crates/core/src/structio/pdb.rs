//! Fixed-width PDB v3.3 ATOM/HETATM reader and writer.

use super::{Atom, ProteinStructure, Result, StructError};
use crate::elements;

fn field(line: &str, start: usize, end: usize) -> &str {
    // 1-based inclusive columns, per the format spec
    let bytes = line.as_bytes();
    if bytes.len() < start {
        return "";
    }
    let hi = end.min(bytes.len());
    std::str::from_utf8(&bytes[start - 1..hi]).unwrap_or("")
}

fn parse_coord(line: &str, lineno: usize, start: usize, end: usize, axis: char) -> Result<f64> {
    let raw = field(line, start, end);
    raw.trim().parse::<f64>().map_err(|_| StructError::Parse {
        line: lineno,
        msg: format!("bad {axis} coordinate {raw:?}"),
    })
}

/// Element from the atom name when columns 77-78 are absent. Two-letter
/// symbols are only tried for HETATM records; in polymer residues a leading
/// "CA"/"CD"/... is a carbon, not calcium or cadmium.
fn element_from_name(name: &str, is_hetero: bool) -> Option<u8> {
    let letters: String = name.chars().filter(|c| c.is_ascii_alphabetic()).collect();
    if letters.is_empty() {
        return None;
    }
    if is_hetero && letters.len() >= 2 {
        if let Some(z) = elements::symbol_to_z(&letters[..2]) {
            return Some(z);
        }
    }
    let first = &letters[..1];
    // deuterium names (D, DA, ...) are hydrogen
    if first.eq_ignore_ascii_case("D") && elements::symbol_to_z(first).is_none() {
        return Some(1);
    }
    elements::symbol_to_z(first)
}

/// Parses ATOM/HETATM records into a [`ProteinStructure`].
///
/// Waters (residue HOH) are dropped. For alternate locations the first
/// occurrence of each (chain, residue, atom name) wins. TER/END and header
/// records are skipped.
pub fn parse_pdb(text: &str) -> Result<ProteinStructure> {
    let mut structure_id = String::from("XXXX");
    let mut atoms = Vec::new();
    let mut seen_alt: std::collections::HashSet<(char, i32, String)> =
        std::collections::HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if !line.is_ascii() {
            return Err(StructError::Parse {
                line: lineno,
                msg: "non-ASCII record".into(),
            });
        }
        let record = field(line, 1, 6).trim_end();
        match record {
            "HEADER" => {
                let id = field(line, 63, 66).trim();
                if id.len() == 4 {
                    structure_id = id.to_string();
                }
            }
            "ATOM" | "HETATM" => {
                if line.len() < 54 {
                    return Err(StructError::Parse {
                        line: lineno,
                        msg: format!("record too short ({} cols, need 54)", line.len()),
                    });
                }
                let name = field(line, 13, 16).trim().to_string();
                let alt_loc = field(line, 17, 17).chars().next().unwrap_or(' ');
                let residue_name = field(line, 18, 20).trim().to_string();
                if residue_name == "HOH" {
                    continue;
                }
                let chain_id = field(line, 22, 22).chars().next().unwrap_or(' ');
                let residue_seq: i32 =
                    field(line, 23, 26).trim().parse().map_err(|_| StructError::Parse {
                        line: lineno,
                        msg: format!("bad residue number {:?}", field(line, 23, 26)),
                    })?;
                let x = parse_coord(line, lineno, 31, 38, 'x')?;
                let y = parse_coord(line, lineno, 39, 46, 'y')?;
                let z = parse_coord(line, lineno, 47, 54, 'z')?;
                if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                    return Err(StructError::Parse {
                        line: lineno,
                        msg: "non-finite coordinate".into(),
                    });
                }
                let is_hetero = record == "HETATM";

                let key = (chain_id, residue_seq, name.clone());
                if alt_loc != ' ' && seen_alt.contains(&key) {
                    continue;
                }
                seen_alt.insert(key);

                let elem_field = field(line, 77, 78).trim();
                let element = if elem_field.is_empty() {
                    element_from_name(&name, is_hetero)
                } else {
                    elements::symbol_to_z(elem_field)
                        .or_else(|| if elem_field.eq_ignore_ascii_case("D") { Some(1) } else { None })
                };
                let element = element.ok_or_else(|| StructError::Parse {
                    line: lineno,
                    msg: format!("cannot resolve element for atom {name:?}"),
                })?;

                let formal_charge = match field(line, 79, 80).trim() {
                    "" => 0,
                    c => parse_pdb_charge(c),
                };

                atoms.push(Atom {
                    element,
                    position: [x, y, z],
                    name,
                    residue_name,
                    chain_id,
                    residue_seq,
                    is_hetero,
                    formal_charge,
                });
            }
            _ => {}
        }
    }

    if atoms.is_empty() {
        return Err(StructError::EmptyStructure);
    }
    Ok(ProteinStructure {
        structure_id,
        atoms,
    })
}

// "2+" / "1-" style charge column; malformed values read as neutral
fn parse_pdb_charge(s: &str) -> i8 {
    let bytes = s.as_bytes();
    match bytes {
        [d, b'+'] if d.is_ascii_digit() => (d - b'0') as i8,
        [d, b'-'] if d.is_ascii_digit() => -((d - b'0') as i8),
        _ => s.parse::<i8>().unwrap_or(0),
    }
}

/// Serializes a structure back to fixed-width PDB text.
pub fn write_pdb(structure: &ProteinStructure) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "HEADER    COMPLEX                                 01-JAN-00   {:<4}\n",
        structure.structure_id
    ));
    for (i, a) in structure.atoms.iter().enumerate() {
        let record = if a.is_hetero { "HETATM" } else { "ATOM  " };
        let name = if a.name.len() >= 4 {
            a.name.clone()
        } else {
            format!(" {:<3}", a.name)
        };
        let symbol = elements::z_to_symbol(a.element).unwrap_or("X");
        let charge = match a.formal_charge {
            0 => "  ".to_string(),
            c if c > 0 => format!("{c}+"),
            c => format!("{}-", -c),
        };
        out.push_str(&format!(
            "{record}{serial:>5} {name:<4} {res:<3} {chain}{seq:>4}    {x:>8.3}{y:>8.3}{z:>8.3}{occ:>6.2}{b:>6.2}          {sym:>2}{charge}\n",
            serial = (i + 1).min(99999),
            res = a.residue_name,
            chain = a.chain_id,
            seq = a.residue_seq,
            x = a.position[0],
            y = a.position[1],
            z = a.position[2],
            occ = 1.00,
            b = 0.00,
            sym = symbol,
        ));
    }
    out.push_str("END\n");
    out
}
