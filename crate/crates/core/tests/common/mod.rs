#![allow(dead_code)]

use std::path::PathBuf;

use stsperf::{parse_model, StsModel};

/// Valid models that every pipeline stage must accept.
pub const CORPUS: &[&str] = &[
    "creditadd",
    "linear_chain",
    "three_way",
    "nested_branch",
    "degenerate_uniform",
    "overhead",
];

pub fn shipped_model_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/creditadd.xml")
}

pub fn fixture_path(name: &str) -> PathBuf {
    if name == "creditadd" {
        return shipped_model_path();
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("{name}.xml"))
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

pub fn load(name: &str) -> StsModel {
    let path = fixture_path(name);
    let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_model(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn creditadd() -> StsModel {
    load("creditadd")
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
