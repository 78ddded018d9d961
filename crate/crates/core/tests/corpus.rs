use depforge_core::dsl::{load_model, parse_model, serialize_model, SourceFile};
use depforge_core::instance::{instantiate, list_configurations};
use depforge_core::validate::validate_core;
use std::path::{Path, PathBuf};

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus_files() -> Vec<PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "dep"))
        .collect();
    files.sort();
    files
}

fn is_broken(p: &Path) -> bool {
    p.file_name().unwrap() == "broken.dep"
}

#[test]
fn corpus_models_validate_and_instantiate() {
    for path in corpus_files().iter().filter(|p| !is_broken(p)) {
        let model = load_model(path).unwrap_or_else(|d| panic!("{}: {d:?}", path.display()));
        let rep = validate_core(&model);
        assert!(!rep.has_errors(), "{}: {:?}", path.display(), rep.findings);
        for cfg in list_configurations(&model).configurations {
            instantiate(&model, &cfg).unwrap_or_else(|e| panic!("{} {}: {e}", path.display(), cfg.name));
        }
    }
}

#[test]
fn broken_model_reports_several_diagnostics() {
    let path = corpus_dir().join("broken.dep");
    let diags = load_model(&path).unwrap_err();
    assert!(diags.len() >= 2, "{diags:?}");
}

#[test]
fn corpus_round_trips_through_the_printer() {
    for path in corpus_files().iter().filter(|p| !is_broken(p)) {
        let model = load_model(path).unwrap();
        let text = serialize_model(&model);
        let again = parse_model(&[SourceFile::new("printed.dep", text.clone())])
            .unwrap_or_else(|d| panic!("{}: {d:?}\n{text}", path.display()));
        assert_eq!(again, model, "{}", path.display());
        assert_eq!(serialize_model(&again), text);
    }
}

#[test]
fn power_system_matches_frozen_canonical_form() {
    let model = load_model(&corpus_dir().join("power_system.dep")).unwrap();
    let printed = serialize_model(&model);
    let canonical_path = corpus_dir().join("canonical/power_system.dep");
    if std::env::var_os("DEPFORGE_BLESS").is_some() {
        std::fs::create_dir_all(canonical_path.parent().unwrap()).unwrap();
        std::fs::write(&canonical_path, &printed).unwrap();
    }
    let frozen = std::fs::read_to_string(&canonical_path).unwrap();
    assert_eq!(printed, frozen);
}
