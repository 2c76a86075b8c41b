//! Keeps the committed demo fixture set in sync with its generator.

use affbench_cli::fixtures::write_demo_set;
use std::path::{Path, PathBuf};

fn committed_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn collect_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// One-time generator for the committed fixture tree:
/// `cargo test -p affbench-cli --test fixtures_gen -- --ignored`
#[test]
#[ignore]
fn regenerate_committed_fixtures() {
    let dir = committed_dir();
    std::fs::create_dir_all(&dir).unwrap();
    let n = write_demo_set(&dir).unwrap();
    assert_eq!(n, 40);
}

#[test]
fn committed_fixtures_match_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let n = write_demo_set(tmp.path()).unwrap();
    assert_eq!(n, 40, "demo set is 40 complexes");
    let generated = collect_files(tmp.path());
    let committed = collect_files(&committed_dir());
    assert_eq!(
        generated.len(),
        committed.len(),
        "file count drifted from the generator"
    );
    for ((name_a, bytes_a), (name_b, bytes_b)) in generated.iter().zip(&committed) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "fixture {name_a} drifted from the generator");
    }
}

#[test]
fn fixture_set_survives_preparation_and_filtering() {
    use affbench_core::lowsim::{filter_other_proteins, select_case_study, SplitInput};
    use affbench_core::molgraph::ecfp;
    use affbench_core::simkit::{ligand_similarity_rect, load_protein_similarity};
    use affbench_core::structio::{
        load_index, parse_pdb, parse_sdf, prepare_complex, PrepConfig,
    };

    let dir = committed_dir();
    let index = load_index(&std::fs::read_to_string(dir.join("index.csv")).unwrap()).unwrap();
    assert_eq!(index.len(), 40);

    let mut inputs = Vec::new();
    for entry in &index {
        let pdb = std::fs::read_to_string(
            dir.join("structures").join(format!("{}.pdb", entry.structure_id)),
        )
        .unwrap();
        let sdf = std::fs::read_to_string(
            dir.join("structures").join(format!("{}.sdf", entry.structure_id)),
        )
        .unwrap();
        let protein = parse_pdb(&pdb).unwrap();
        let ligand = parse_sdf(&sdf).unwrap();
        let prepared = prepare_complex(
            &protein,
            &ligand,
            affbench_core::molgraph::HydrogenMode::Explicit,
            &PrepConfig::default(),
        )
        .unwrap_or_else(|e| panic!("{} failed preparation: {e}", entry.structure_id));
        // waters and sulfate stripped
        assert!(prepared.protein.atoms.iter().all(|a| !a.is_hetero));
        inputs.push(SplitInput {
            structure_id: entry.structure_id.clone(),
            uniprot_id: entry.uniprot_id.clone(),
            fingerprint: ecfp(&prepared.ligand, 2, 256),
        });
    }

    let case = select_case_study(
        &inputs,
        100,
        Some(&["P10001".to_string(), "P20002".to_string()]),
    )
    .unwrap();
    assert_eq!(case.structure_ids().len(), 28);

    let case_ids = case.structure_ids();
    let other: Vec<&SplitInput> = inputs
        .iter()
        .filter(|r| !case.contains_uniprot(&r.uniprot_id))
        .collect();
    assert_eq!(other.len(), 12);

    let fp_of = |id: &String| {
        (
            id.clone(),
            inputs
                .iter()
                .find(|r| &r.structure_id == id)
                .unwrap()
                .fingerprint
                .clone(),
        )
    };
    let other_ids: Vec<String> = other.iter().map(|r| r.structure_id.clone()).collect();
    let ligand_rect = ligand_similarity_rect(
        &other_ids.iter().map(fp_of).collect::<Vec<_>>(),
        &case_ids.iter().map(fp_of).collect::<Vec<_>>(),
    )
    .unwrap();

    let all_ids: Vec<String> = index.iter().map(|e| e.structure_id.clone()).collect();
    let tsv = std::fs::read_to_string(dir.join("protein_sim.tsv")).unwrap();
    let protein_sim = load_protein_similarity(&tsv, &all_ids).unwrap();

    // the demo set is built so that every other-protein record clears the
    // 0.5 similarity filter
    let kept =
        filter_other_proteins(&inputs, &case, &protein_sim, &ligand_rect, 0.5, 0.5).unwrap();
    assert_eq!(kept.len(), 12, "kept: {kept:?}");
}
