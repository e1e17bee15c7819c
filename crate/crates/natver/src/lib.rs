//! Natural-logic fact verification: chunking, alignment, operator
//! assignment and proof execution over a language-model backend.

pub mod aligner;
pub mod assigner;
pub mod backend;
pub mod chunker;
pub mod cli;
pub mod data;
pub mod document;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod templates;

pub use error::{Error, Result, Stage};
