//! Proof data model.

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::dfa::{self, VerdictTrace};
use crate::natop::NatOp;

/// Coarse cue parsed from an alignment explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Signal {
    Support,
    Refute,
}

/// A piece of the claim. `start` and `end` count Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TextSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl TextSpan {
    pub fn new(start: usize, end: usize, text: impl Into<String>) -> Self {
        TextSpan {
            start,
            end,
            text: text.into(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.end - self.start
    }
}

/// One step of a proof.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProofTriple {
    pub claim_span: TextSpan,
    /// Post-processed aligned evidence; may be empty.
    pub evidence_text: String,
    pub natop: NatOp,
    /// Ensemble score of every operator that was tested for this pair.
    pub scores: BTreeMap<NatOp, f64>,
    pub signal: Option<Signal>,
}

impl ProofTriple {
    pub fn scores_in_unit_interval(&self) -> bool {
        self.scores.values().all(|s| (0.0..=1.0).contains(s))
    }
}

pub fn execute(proof: &[ProofTriple]) -> VerdictTrace {
    dfa::execute_ops(proof.iter().map(|t| t.natop))
}
