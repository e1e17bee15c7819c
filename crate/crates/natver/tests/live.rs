//! Smoke test against a running completions server. Ignored by default:
//!
//! ```sh
//! NATVER_LIVE_URL=http://127.0.0.1:8080 cargo test -p natver --test live -- --ignored
//! ```

mod common;

use natver::backend::{HttpBackend, HttpConfig};
use natver::document::ProofDocument;
use natver::pipeline::PipelineConfig;

use common::*;

#[test]
#[ignore]
fn live_endpoint_produces_a_checked_proof() {
    let Ok(url) = std::env::var("NATVER_LIVE_URL") else {
        eprintln!("NATVER_LIVE_URL not set; skipping");
        return;
    };
    let mut cfg = HttpConfig::new(url);
    cfg.model = std::env::var("NATVER_LIVE_MODEL").ok();
    let backend = HttpBackend::connect(cfg).unwrap();
    let r = pipeline(PipelineConfig::default())
        .verify(&backend, "live", HOBBIT_CLAIM, HOBBIT_EVIDENCE)
        .unwrap();
    let doc = ProofDocument::parse(&ProofDocument::from_result(&r).to_json()).unwrap();
    let joined: String = doc.triples.iter().map(|t| t.claim_span.text.as_str()).collect();
    assert_eq!(
        joined.split_whitespace().collect::<Vec<_>>(),
        HOBBIT_CLAIM.split_whitespace().collect::<Vec<_>>()
    );
    eprintln!(
        "verdict: {} via {:?}",
        r.verdict,
        r.proof.iter().map(|t| t.natop.symbol()).collect::<Vec<_>>()
    );
}
