//! Deterministic synthetic demo set: 40 protein-ligand complexes across
//! two case-study proteins (14 structures each) and six other proteins
//! (two each), with an affinity index, a protein similarity TSV and a
//! desk-scale run config. Everything is generated from fixed seeds so the
//! committed files can be re-derived and diffed.

use affbench_rng::Xoshiro256;
use std::fmt::Write as _;
use std::path::Path;

struct ProteinSpec {
    uniprot: &'static str,
    /// helix-like fold for the case-study proteins, extended strands for
    /// the rest: the shapes are deliberately dissimilar
    helix: bool,
    n_structures: usize,
    id_prefix: &'static str,
    base_affinity: f64,
}

const PROTEINS: &[ProteinSpec] = &[
    ProteinSpec { uniprot: "P10001", helix: true, n_structures: 14, id_prefix: "a", base_affinity: 6.0 },
    ProteinSpec { uniprot: "P20002", helix: true, n_structures: 14, id_prefix: "b", base_affinity: 5.0 },
    ProteinSpec { uniprot: "Q00001", helix: false, n_structures: 2, id_prefix: "x0", base_affinity: 4.0 },
    ProteinSpec { uniprot: "Q00002", helix: false, n_structures: 2, id_prefix: "x1", base_affinity: 4.5 },
    ProteinSpec { uniprot: "Q00003", helix: false, n_structures: 2, id_prefix: "x2", base_affinity: 5.5 },
    ProteinSpec { uniprot: "Q00004", helix: false, n_structures: 2, id_prefix: "x3", base_affinity: 6.5 },
    ProteinSpec { uniprot: "Q00005", helix: false, n_structures: 2, id_prefix: "x4", base_affinity: 7.0 },
    ProteinSpec { uniprot: "Q00006", helix: false, n_structures: 2, id_prefix: "x5", base_affinity: 7.5 },
];

fn residue_name(k: usize) -> &'static str {
    ["ALA", "GLY", "SER", "VAL", "LEU", "THR", "CYS", "ALA"][k % 8]
}

/// One 8-residue backbone with CB side-chain stubs plus a water and a
/// sulfate so that preparation has something to strip.
fn protein_pdb(spec: &ProteinSpec, jitter_seed: u64) -> String {
    let mut rng = Xoshiro256::seed_from(jitter_seed);
    let mut jitter = || rng.next_range(-0.12, 0.12);
    let n_res = 8;

    // CA trace
    let mut ca = Vec::with_capacity(n_res);
    for k in 0..n_res {
        if spec.helix {
            let t = k as f64 * 100.0_f64.to_radians();
            ca.push([
                2.3 * t.cos() + jitter(),
                2.3 * t.sin() + jitter(),
                1.5 * k as f64 + jitter(),
            ]);
        } else {
            ca.push([3.5 * k as f64 + jitter(), jitter(), jitter()]);
        }
    }

    let mut out = String::new();
    let mut serial = 0usize;
    let mut push_atom = |name: &str, res: &str, seq: usize, pos: [f64; 3], element: &str,
                         hetero: bool, out: &mut String| {
        serial += 1;
        let record = if hetero { "HETATM" } else { "ATOM  " };
        let padded = if name.len() >= 4 {
            name.to_string()
        } else {
            format!(" {name:<3}")
        };
        let _ = writeln!(
            out,
            "{record}{serial:>5} {padded:<4} {res:<3} A{seq:>4}    {:>8.3}{:>8.3}{:>8.3}  1.00  0.00          {element:>2}",
            pos[0], pos[1], pos[2]
        );
    };

    for (k, ca_pos) in ca.iter().enumerate() {
        let seq = k + 1;
        let res = residue_name(k);
        let towards_prev = if k > 0 {
            direction(ca[k - 1], *ca_pos)
        } else {
            [-1.0, 0.0, 0.0]
        };
        let towards_next = if k + 1 < n_res {
            direction(ca[k + 1], *ca_pos)
        } else {
            [1.0, 0.0, 0.0]
        };
        let n_pos = offset(*ca_pos, towards_prev, 1.46);
        let c_pos = offset(*ca_pos, towards_next, 1.52);
        let up = [0.0, 0.0, 1.0];
        let o_pos = offset(c_pos, up, 1.23);
        push_atom("N", res, seq, n_pos, "N", false, &mut out);
        push_atom("CA", res, seq, *ca_pos, "C", false, &mut out);
        push_atom("C", res, seq, c_pos, "C", false, &mut out);
        push_atom("O", res, seq, o_pos, "O", false, &mut out);
        if res != "GLY" {
            let side = [-up[0], -up[1], -up[2]];
            push_atom("CB", res, seq, offset(*ca_pos, side, 1.53), "C", false, &mut out);
            if res == "SER" {
                push_atom("OG", res, seq, offset(*ca_pos, side, 2.9), "O", false, &mut out);
            }
            if res == "CYS" {
                push_atom("SG", res, seq, offset(*ca_pos, side, 3.0), "S", false, &mut out);
            }
        }
    }
    // crystallization leftovers, removed during preparation
    push_atom("O", "HOH", 101, [20.0, 20.0, 20.0], "O", true, &mut out);
    push_atom("S", "SO4", 102, [22.0, 20.0, 20.0], "S", true, &mut out);
    out.push_str("END\n");
    out
}

fn direction(to: [f64; 3], from: [f64; 3]) -> [f64; 3] {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
    [d[0] / n, d[1] / n, d[2] / n]
}

fn offset(base: [f64; 3], dir: [f64; 3], len: f64) -> [f64; 3] {
    [
        base[0] + dir[0] * len,
        base[1] + dir[1] * len,
        base[2] + dir[2] * len,
    ]
}

/// Pocket anchor the ligands are centered on.
fn pocket_center(helix: bool) -> [f64; 3] {
    if helix {
        [4.6, 0.8, 5.2]
    } else {
        [9.0, 3.6, 0.4]
    }
}

enum LigandFamily {
    /// linear chain with a terminal oxygen (case cluster A)
    Alcohol { carbons: usize },
    /// linear chain with a terminal nitrogen (case cluster B)
    Amine { carbons: usize },
    /// aromatic six-ring with a halogen substituent (other proteins)
    HaloArene { halogen: &'static str },
}

fn ligand_sdf(name: &str, family: &LigandFamily, center: [f64; 3]) -> String {
    let mut atoms: Vec<(String, [f64; 3])> = Vec::new();
    let mut bonds: Vec<(usize, usize, u8)> = Vec::new();
    match family {
        LigandFamily::Alcohol { carbons } | LigandFamily::Amine { carbons } => {
            for k in 0..*carbons {
                atoms.push((
                    "C".into(),
                    [1.45 * k as f64, 0.55 * (k % 2) as f64, 0.15 * k as f64],
                ));
                if k > 0 {
                    bonds.push((k, k + 1, 1));
                }
            }
            let terminal = if matches!(family, LigandFamily::Alcohol { .. }) {
                "O"
            } else {
                "N"
            };
            atoms.push((
                terminal.into(),
                [1.45 * *carbons as f64, 0.55 * (*carbons % 2) as f64, 0.15 * *carbons as f64],
            ));
            bonds.push((*carbons, *carbons + 1, 1));
        }
        LigandFamily::HaloArene { halogen } => {
            for k in 0..6 {
                let ang = std::f64::consts::PI / 3.0 * k as f64;
                atoms.push(("C".into(), [1.39 * ang.cos(), 1.39 * ang.sin(), 0.0]));
                bonds.push((k + 1, (k + 1) % 6 + 1, 4));
            }
            atoms.push((halogen.to_string(), [3.1, 0.0, 0.0]));
            bonds.push((1, 7, 1));
        }
    }

    // shift the ligand into the pocket
    let n = atoms.len() as f64;
    let centroid = atoms.iter().fold([0.0; 3], |acc, (_, p)| {
        [acc[0] + p[0] / n, acc[1] + p[1] / n, acc[2] + p[2] / n]
    });
    for (_, p) in &mut atoms {
        for axis in 0..3 {
            p[axis] += center[axis] - centroid[axis];
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "{name}");
    out.push_str("  affbench demo\n\n");
    let _ = writeln!(out, "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000", atoms.len(), bonds.len());
    for (symbol, p) in &atoms {
        let _ = writeln!(
            out,
            "{:>10.4}{:>10.4}{:>10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0",
            p[0], p[1], p[2], symbol
        );
    }
    for (i, j, order) in &bonds {
        let _ = writeln!(out, "{i:>3}{j:>3}{order:>3}  0  0  0  0");
    }
    out.push_str("M  END\n$$$$\n");
    out
}

fn family_for(spec: &ProteinSpec, idx: usize) -> LigandFamily {
    if spec.helix {
        // two similarity clusters per case protein
        if idx % 2 == 0 {
            LigandFamily::Alcohol { carbons: 3 + idx % 4 }
        } else {
            LigandFamily::Amine { carbons: 3 + idx % 5 }
        }
    } else {
        LigandFamily::HaloArene {
            halogen: ["F", "Cl", "Br"][idx % 3],
        }
    }
}

fn heavy_atom_count(family: &LigandFamily) -> usize {
    match family {
        LigandFamily::Alcohol { carbons } | LigandFamily::Amine { carbons } => carbons + 1,
        LigandFamily::HaloArene { .. } => 7,
    }
}

/// Writes the demo fixture tree: structures/, index.csv, protein_sim.tsv
/// and config.toml. Returns the number of complexes written.
pub fn write_demo_set(dir: &Path) -> std::io::Result<usize> {
    let structures = dir.join("structures");
    std::fs::create_dir_all(&structures)?;

    let mut index = String::from("structure_id,uniprot_id,p_affinity\n");
    let mut ids_by_protein: Vec<(String, Vec<String>)> = Vec::new();
    let mut count = 0usize;

    for (pi, spec) in PROTEINS.iter().enumerate() {
        let mut ids = Vec::new();
        for s in 0..spec.n_structures {
            let id = format!("{}{:03}", spec.id_prefix, s + 1);
            let pdb = protein_pdb(spec, (pi as u64) << 16 | s as u64);
            std::fs::write(structures.join(format!("{id}.pdb")), pdb)?;

            let family = family_for(spec, s);
            let sdf = ligand_sdf(&format!("LIG_{id}"), &family, pocket_center(spec.helix));
            std::fs::write(structures.join(format!("{id}.sdf")), sdf)?;

            // affinity: protein base plus a size term and a deterministic wiggle
            let mut rng = Xoshiro256::seed_from(0xAFF0 ^ ((pi as u64) << 20) ^ s as u64);
            let affinity = spec.base_affinity
                + 0.18 * heavy_atom_count(&family) as f64
                + rng.next_range(-0.25, 0.25);
            let _ = writeln!(index, "{id},{},{affinity:.4}", spec.uniprot);
            ids.push(id);
            count += 1;
        }
        ids_by_protein.push((spec.uniprot.to_string(), ids));
    }
    std::fs::write(dir.join("index.csv"), index)?;

    // protein similarity: case structures resemble each other, everything
    // else sits safely under the 0.5 filter threshold
    let case_ids: Vec<&String> = ids_by_protein
        .iter()
        .filter(|(u, _)| u.starts_with('P'))
        .flat_map(|(_, ids)| ids)
        .collect();
    let other_ids: Vec<&String> = ids_by_protein
        .iter()
        .filter(|(u, _)| u.starts_with('Q'))
        .flat_map(|(_, ids)| ids)
        .collect();
    let mut tsv = String::new();
    for (i, a) in case_ids.iter().enumerate() {
        for b in case_ids.iter().skip(i + 1) {
            let _ = writeln!(tsv, "{a}\t{b}\t0.85");
        }
    }
    let mut rng = Xoshiro256::seed_from(0x51417);
    for o in &other_ids {
        for c in &case_ids {
            let _ = writeln!(tsv, "{o}\t{c}\t{:.3}", rng.next_range(0.05, 0.35));
        }
    }
    std::fs::write(dir.join("protein_sim.tsv"), tsv)?;

    std::fs::write(dir.join("config.toml"), demo_config_toml())?;
    Ok(count)
}

/// Desk-scale configuration for the demo set (small models, short
/// trainings; the code defaults carry the full-scale hyperparameters).
pub fn demo_config_toml() -> &'static str {
    r#"[paths]
index = "index.csv"
structures_dir = "structures"
protein_similarity_tsv = "protein_sim.tsv"
output_dir = "out"

[prepare]
hydrogen_mode = "explicit"
buffer_blacklist = ["SO4", "GOL", "EDO", "PEG", "PO4", "CL", "NA", "K", "MG", "ZN"]

[split]
fractions = [0.0, 0.05, 0.30, 0.80]
folds = 3
seeds = [0, 1, 2]
min_count = 100
case_study_ids = ["P10001", "P20002"]
protein_sim_threshold = 0.5
ligand_sim_threshold = 0.5
cv_seed = 17

[graph]
hydrogen_mode = "polar"
form = "single"
cutoff = 5.0
pocket_radius = 5.0
max_nodes = 4096

[train]
cv_ratio = 0.8
es_ratio = 0.8
es_seed = 23

[models]
roster = [
  "single_protein",
  "ligand_bias",
  "molecular_weight",
  "rf_score",
  "shell_mlp",
  "egnn",
  "egnn_qm",
  "egnn_diff",
]
fingerprint_bits = 256
fingerprint_radius = 2

[models.forest]
n_estimators = 40
max_features = 0.3333333333333333
min_samples_leaf = 1
bootstrap = true
rng_seed = 7

[models.egnn]
num_layers = 2
c_hidden = 12
num_rbf = 4
lr = 0.01
epochs = 150
patience = 25
init_seed = 11

[models.shell_mlp]
hidden = 24
lr = 0.005
epochs = 200
n_shells = 6
shell_width = 2.0
seed = 13

[models.rf_score]
cutoff = 12.0

[pretrain]
qm_epochs = 60
diffusion_epochs = 40
diffusion_steps = 30
stage1_lr = 0.01
stage2_lr = 0.002
stage1_epochs = 80
stage2_epochs = 60
seed = 5
n_molecules = 12
"#
}
