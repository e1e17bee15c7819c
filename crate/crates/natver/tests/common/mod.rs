#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use natver::backend::{Scenario, ScriptedBackend};
use natver::pipeline::{Pipeline, PipelineConfig, Resources};
use natver::templates::TemplateBank;
use natver_core::NatOp;

pub const HOBBIT_CLAIM: &str = "Harry Potter and the Sorcerer's Stone was published before The Hobbit.";
pub const HOBBIT_EVIDENCE: &str =
    "The Hobbit was published in 1937. Harry Potter and the Sorcerer's Stone was published in 1997.";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn repo(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

pub fn scenario(name: &str) -> Scenario {
    ScriptedBackend::from_file(&fixture(name)).unwrap().scenario().clone()
}

pub fn backend(name: &str) -> ScriptedBackend {
    ScriptedBackend::from_file(&fixture(name)).unwrap()
}

pub fn pipeline(config: PipelineConfig) -> Pipeline {
    Pipeline::new(config, Resources::builtin()).unwrap()
}

/// Two templates per operator: `<op> one X Y?` and `<op> two X Y?`.
pub fn toy_bank() -> TemplateBank {
    let mut m = BTreeMap::new();
    for op in NatOp::ASSIGNABLE {
        m.insert(
            op,
            vec![format!("{} one X Y?", op.name()), format!("{} two X Y?", op.name())],
        );
    }
    TemplateBank::new(m).unwrap()
}
