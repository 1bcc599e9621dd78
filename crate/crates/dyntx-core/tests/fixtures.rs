//! The checked-in model configs must stay in lockstep with the built-in
//! presets: CLI examples and downstream tests read the files, unit tests use
//! the constructors, and the two must describe the same populations.
//!
//! On drift, run with `REGEN_FIXTURES=1` to rewrite the files.

use std::path::PathBuf;

use dyntx_core::model::presets::{
    example_model, example_model_exogenous, gapped_model, masked_example_model,
};
use dyntx_core::model::{read_model, write_model};
use dyntx_core::StructuralModel;

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn check(name: &str, model: &StructuralModel) {
    let path = fixture_path(name);
    if std::env::var_os("REGEN_FIXTURES").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        write_model(&path, model).unwrap();
    }
    let parsed = read_model(&path)
        .unwrap_or_else(|e| panic!("{name}: {e}; regenerate with REGEN_FIXTURES=1"));
    assert_eq!(
        &parsed, model,
        "{name} drifted from its preset; regenerate with REGEN_FIXTURES=1"
    );
}

#[test]
fn checked_in_configs_match_the_presets() {
    check("dgp_a.json", &example_model());
    check("dgp_a_exogenous.json", &example_model_exogenous());
    check("dgp_a_masked.json", &masked_example_model());
    check("dgp_b.json", &gapped_model());
}
