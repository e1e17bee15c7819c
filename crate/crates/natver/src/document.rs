//! Proof documents: the JSON a verification emits.
//!
//! ```json
//! {"claim": "...", "triples": [{"claim_span": {...}, "evidence_text": "...",
//!   "natop": "negation", "scores": {...}, "signal": "refute"}],
//!  "states": ["Supported", "Refuted"], "verdict": "Refuted"}
//! ```

use natver_core::proof::execute;
use natver_core::{DfaState, ProofTriple, Verdict};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::VerificationResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofDocument {
    pub claim: String,
    pub triples: Vec<ProofTriple>,
    pub states: Vec<DfaState>,
    pub verdict: Verdict,
}

impl ProofDocument {
    pub fn new(claim: &str, triples: Vec<ProofTriple>) -> Self {
        let trace = execute(&triples);
        ProofDocument {
            claim: claim.to_string(),
            triples,
            states: trace.states,
            verdict: trace.verdict,
        }
    }

    pub fn from_result(r: &VerificationResult) -> Self {
        ProofDocument {
            claim: r.claim.clone(),
            triples: r.proof.clone(),
            states: r.trace.states.clone(),
            verdict: r.verdict,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("proof documents serialize")
    }

    /// Parses a document and re-executes its operators; the stored states
    /// and verdict must match.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: ProofDocument =
            serde_json::from_str(text).map_err(|e| Error::input(format!("proof document: {e}")))?;
        doc.check()?;
        Ok(doc)
    }

    pub fn check(&self) -> Result<()> {
        let trace = execute(&self.triples);
        if trace.states != self.states || trace.verdict != self.verdict {
            return Err(Error::input(format!(
                "proof re-executes to {} but the document says {}",
                trace.verdict, self.verdict
            )));
        }
        let chars: Vec<char> = self.claim.chars().collect();
        for (i, t) in self.triples.iter().enumerate() {
            let s = &t.claim_span;
            let inside = s.start <= s.end && s.end <= chars.len();
            if !inside || chars[s.start..s.end].iter().collect::<String>() != s.text {
                return Err(Error::input(format!("triple {i}: span does not match the claim")));
            }
            if !t.scores_in_unit_interval() {
                return Err(Error::input(format!("triple {i}: score outside [0, 1]")));
            }
        }
        Ok(())
    }
}
