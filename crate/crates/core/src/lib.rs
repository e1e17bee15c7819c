//! Core of the natver fact-verification engine.
//!
//! Everything in this crate is a pure function over owned values: the
//! natural-logic operator algebra, the verdict automaton, the proof data
//! model, the faithfulness filter for evidence alignments, ensemble scoring
//! and operator selection, plus the BM25 ranker and classification metrics
//! used by the evaluation harness.
//!
//! The crate is `no_std` and only needs `alloc`. Model access, file formats
//! and the command line live in the `natver` crate.
//!
//! # Features
//! * `serde` - derives `Serialize`/`Deserialize` for the proof model and
//!   configuration types.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod align;
pub mod assign;
pub mod bm25;
pub mod chunk;
pub mod dfa;
pub mod direct;
pub mod metrics;
pub mod natop;
pub mod proof;
pub mod text;
pub mod yesno;

pub use align::{AlignmentBlock, Signal, SignalLexicon};
pub use assign::{CandidateList, NatOpScores, TemplateWeights};
pub use chunk::ClaimChunks;
pub use dfa::{DfaState, Verdict, VerdictTrace};
pub use natop::NatOp;
pub use proof::{ProofTriple, TextSpan};
pub use yesno::{Answer, YesNoScore};
