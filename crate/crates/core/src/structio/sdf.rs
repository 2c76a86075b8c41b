//! SDF / MDL molfile V2000 reader and writer (single molecule).

use super::{Atom, Bond, BondOrder, Ligand, Result, StructError};
use crate::elements;

fn take(line: &str, start: usize, width: usize) -> &str {
    let bytes = line.as_bytes();
    if bytes.len() <= start {
        return "";
    }
    let hi = (start + width).min(bytes.len());
    std::str::from_utf8(&bytes[start..hi]).unwrap_or("")
}

/// Parses one V2000 connection table.
///
/// Reads the counts line, atom block, bond block and `M  CHG` properties up
/// to `M  END`. Aromatic bonds (type 4) map to [`BondOrder::Aromatic`].
pub fn parse_sdf(text: &str) -> Result<Ligand> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 4 {
        return Err(StructError::Parse {
            line: lines.len(),
            msg: "truncated molfile header".into(),
        });
    }
    let name = lines[0].trim().to_string();
    let counts_line = lines[3];
    let n_atoms: usize = take(counts_line, 0, 3)
        .trim()
        .parse()
        .map_err(|_| StructError::Parse {
            line: 4,
            msg: format!("bad atom count {:?}", take(counts_line, 0, 3)),
        })?;
    let n_bonds: usize = take(counts_line, 3, 3)
        .trim()
        .parse()
        .map_err(|_| StructError::Parse {
            line: 4,
            msg: format!("bad bond count {:?}", take(counts_line, 3, 3)),
        })?;
    if counts_line.contains("V3000") {
        return Err(StructError::Parse {
            line: 4,
            msg: "V3000 connection tables are not supported".into(),
        });
    }

    let atoms_start = 4;
    let bonds_start = atoms_start + n_atoms;
    let props_start = bonds_start + n_bonds;
    if lines.len() < props_start {
        return Err(StructError::Parse {
            line: lines.len(),
            msg: format!(
                "counts line declares {n_atoms} atoms / {n_bonds} bonds but file has {} lines",
                lines.len()
            ),
        });
    }

    let mut atoms = Vec::with_capacity(n_atoms);
    for k in 0..n_atoms {
        let lineno = atoms_start + k + 1;
        let line = lines[atoms_start + k];
        let mut coord = [0.0f64; 3];
        for (axis, c) in coord.iter_mut().enumerate() {
            let raw = take(line, axis * 10, 10);
            *c = raw.trim().parse().map_err(|_| StructError::Parse {
                line: lineno,
                msg: format!("bad coordinate {raw:?}"),
            })?;
        }
        let symbol = take(line, 31, 3).trim();
        if symbol.is_empty() {
            return Err(StructError::Parse {
                line: lineno,
                msg: "missing element symbol".into(),
            });
        }
        let element = elements::symbol_to_z(symbol).ok_or_else(|| StructError::Parse {
            line: lineno,
            msg: format!("unknown element {symbol:?}"),
        })?;
        atoms.push(Atom {
            element,
            position: coord,
            name: format!("{}{}", symbol.to_ascii_uppercase(), k + 1),
            residue_name: String::new(),
            chain_id: ' ',
            residue_seq: 0,
            is_hetero: true,
            formal_charge: 0,
        });
    }

    let mut bonds = Vec::with_capacity(n_bonds);
    for k in 0..n_bonds {
        let lineno = bonds_start + k + 1;
        let line = lines[bonds_start + k];
        let i: usize = take(line, 0, 3).trim().parse().map_err(|_| StructError::Parse {
            line: lineno,
            msg: format!("bad bond atom index {:?}", take(line, 0, 3)),
        })?;
        let j: usize = take(line, 3, 3).trim().parse().map_err(|_| StructError::Parse {
            line: lineno,
            msg: format!("bad bond atom index {:?}", take(line, 3, 3)),
        })?;
        let order_code: u8 = take(line, 6, 3).trim().parse().map_err(|_| StructError::Parse {
            line: lineno,
            msg: format!("bad bond order {:?}", take(line, 6, 3)),
        })?;
        let order = match order_code {
            1 => BondOrder::Single,
            2 => BondOrder::Double,
            3 => BondOrder::Triple,
            4 => BondOrder::Aromatic,
            other => {
                return Err(StructError::Parse {
                    line: lineno,
                    msg: format!("unsupported bond type {other}"),
                })
            }
        };
        if i == 0 || j == 0 || i > n_atoms || j > n_atoms || i == j {
            return Err(StructError::Parse {
                line: lineno,
                msg: format!("bond endpoints {i}-{j} out of range"),
            });
        }
        bonds.push(Bond {
            i: i - 1,
            j: j - 1,
            order,
        });
    }

    // property block: only charges are interpreted
    let mut saw_end = false;
    for (k, line) in lines.iter().enumerate().skip(props_start) {
        if line.starts_with("M  END") {
            saw_end = true;
            break;
        }
        if line.starts_with("M  CHG") {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let n: usize = fields
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| StructError::Parse {
                    line: k + 1,
                    msg: "bad M  CHG count".into(),
                })?;
            for pair in 0..n {
                let ai: usize = fields
                    .get(3 + 2 * pair)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| StructError::Parse {
                        line: k + 1,
                        msg: "bad M  CHG atom index".into(),
                    })?;
                let chg: i8 = fields
                    .get(4 + 2 * pair)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| StructError::Parse {
                        line: k + 1,
                        msg: "bad M  CHG value".into(),
                    })?;
                if ai == 0 || ai > atoms.len() {
                    return Err(StructError::Parse {
                        line: k + 1,
                        msg: format!("M  CHG atom index {ai} out of range"),
                    });
                }
                atoms[ai - 1].formal_charge = chg;
            }
        }
    }
    if !saw_end {
        return Err(StructError::Parse {
            line: lines.len(),
            msg: "missing M  END".into(),
        });
    }

    Ok(Ligand { name, atoms, bonds })
}

/// Serializes a ligand back to a V2000 molfile.
pub fn write_sdf(ligand: &Ligand) -> String {
    let mut out = String::new();
    out.push_str(&ligand.name);
    out.push('\n');
    out.push_str("  affbench\n\n");
    out.push_str(&format!(
        "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000\n",
        ligand.atoms.len(),
        ligand.bonds.len()
    ));
    for a in &ligand.atoms {
        let symbol = elements::z_to_symbol(a.element).unwrap_or("X");
        out.push_str(&format!(
            "{:>10.4}{:>10.4}{:>10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0\n",
            a.position[0], a.position[1], a.position[2], symbol
        ));
    }
    for b in &ligand.bonds {
        let code = match b.order {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        };
        out.push_str(&format!("{:>3}{:>3}{:>3}  0  0  0  0\n", b.i + 1, b.j + 1, code));
    }
    let charged: Vec<(usize, i8)> = ligand
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| a.formal_charge != 0)
        .map(|(i, a)| (i + 1, a.formal_charge))
        .collect();
    for chunk in charged.chunks(8) {
        out.push_str(&format!("M  CHG{:>3}", chunk.len()));
        for (i, c) in chunk {
            out.push_str(&format!("{i:>4}{c:>4}"));
        }
        out.push('\n');
    }
    out.push_str("M  END\n$$$$\n");
    out
}
