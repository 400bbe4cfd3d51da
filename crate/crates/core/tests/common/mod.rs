#![allow(dead_code)]

use std::path::PathBuf;

use smf_core::kb::{parse_kb, KnowledgeBase};
use smf_core::predictions::{load_predictions, PredictionCorpus};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture_kb() -> KnowledgeBase {
    parse_kb(&fixture_text("imagenet_fixture.smk")).unwrap()
}

pub fn sample_corpus() -> PredictionCorpus {
    load_predictions(fixture_path("ra_sample.jsonl")).unwrap()
}
