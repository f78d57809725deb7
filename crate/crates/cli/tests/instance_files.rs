use std::path::{Path, PathBuf};

use mts_core::samples;
use mts_core::ucdemo;

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances")
}

fn load(name: &str) -> mts_cli::Instance {
    mts_cli::load_path(&dir().join(format!("{name}.toml"))).unwrap_or_else(|c| panic!("{name}: exit {c}"))
}

#[test]
fn shipped_files_match_the_builtin_samples() {
    for p in samples::golden_set() {
        let inst = load(&p.name);
        assert!(inst.problem == p, "{}: {:?}", p.name, inst.problem);
    }
}

#[test]
fn shipped_unit_commitment_file_matches_the_builtin_config() {
    let inst = load("uc_tiny");
    let cfg = ucdemo::uc_tiny();
    assert_eq!(inst.uc.as_ref(), Some(&cfg));
    assert!(inst.problem == ucdemo::build_instance(&cfg).unwrap());
}

#[test]
fn every_shipped_file_validates() {
    for e in std::fs::read_dir(dir()).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            assert!(mts_cli::load_path(&path).is_ok(), "{}", path.display());
        }
    }
}
