//! Chunk-to-evidence alignment.
//!
//! The completion is built block by block in three modes: the chunk line is
//! inserted verbatim, the alignment line is generated with every claim-only
//! token masked out, and the explanation line is generated freely. The
//! assembled transcript is then parsed, alignments are filtered down to
//! evidence words and explanations are searched for support/refute cues.

use std::collections::BTreeSet;

use log::warn;
use natver_core::align::{
    alignment_label, chunk_label, explanation_label, parse_alignment_blocks, parse_signal, post_process_alignment,
};
use natver_core::{ClaimChunks, Signal, SignalLexicon, TextSpan};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ConstraintMask, GenerationParams, Step, TokenId};
use crate::chunker::DecodingMode;
use crate::error::{Error, Result};
use crate::templates::PromptTemplates;

/// Upper bound on tokens for one alignment or explanation line.
pub const LINE_TOKEN_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPair {
    pub chunk: TextSpan,
    pub raw_alignment: String,
    /// Evidence words only, unless the post-filter was switched off.
    pub alignment: String,
    pub explanation: String,
    pub signal: Option<Signal>,
    /// The completion had no block for this chunk.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignOutcome {
    pub pairs: Vec<AlignmentPair>,
    pub mode: DecodingMode,
    /// Whether alignments went through the evidence filter.
    pub filtered: bool,
    /// Generated completion (everything after the prompt).
    pub transcript: String,
}

#[allow(clippy::too_many_arguments)]
pub fn align(
    claim: &str,
    evidence: &str,
    chunks: &ClaimChunks,
    backend: &dyn Backend,
    templates: &PromptTemplates,
    lexicon: &SignalLexicon,
    params: &GenerationParams,
    constrained: bool,
) -> Result<AlignOutcome> {
    if chunks.is_empty() {
        return Err(Error::input("no chunks to align"));
    }
    if evidence.trim().is_empty() {
        return Err(Error::input("evidence is empty"));
    }
    let chunk_texts: Vec<&str> = chunks.texts().collect();
    let prompt = templates.alignment_prompt(evidence, claim, &chunk_texts);

    let (transcript, mode) = if constrained {
        match constrained_transcript(&prompt, claim, evidence, &chunk_texts, backend, params) {
            Ok(t) => (t, DecodingMode::Constrained),
            Err(Error::Backend(BackendError::Capability(what))) => {
                warn!("alignment falls back to free generation: backend cannot {what}");
                (backend.generate_free(&prompt, params)?.text, DecodingMode::FreeFallback)
            }
            Err(e) => return Err(e),
        }
    } else {
        (backend.generate_free(&prompt, params)?.text, DecodingMode::Free)
    };
    // The evidence filter belongs to the constrained method; switching
    // constrained decoding off drops both.
    let filtered = mode != DecodingMode::Free;
    let pairs = pairs_from_transcript(&transcript, evidence, chunks, lexicon, filtered);
    Ok(AlignOutcome {
        pairs,
        mode,
        filtered,
        transcript,
    })
}

fn constrained_transcript(
    prompt: &str,
    claim: &str,
    evidence: &str,
    chunks: &[&str],
    backend: &dyn Backend,
    params: &GenerationParams,
) -> Result<String> {
    let newline = backend.newline_token()?;
    let evidence_tokens = surface_variants(backend, evidence)?;
    let mut claim_only: BTreeSet<TokenId> = surface_variants(backend, claim)?
        .into_iter()
        .filter(|t| !evidence_tokens.contains(t))
        .collect();
    claim_only.remove(&newline);
    let mask = ConstraintMask::Deny(claim_only);

    let line_params = params.clone().with_max_tokens(LINE_TOKEN_LIMIT);
    let mut transcript = String::new();
    for (i, text) in chunks.iter().enumerate() {
        let n = i + 1;
        // Claim mode.
        transcript.push_str(&format!("{} {}\n{}", chunk_label(n), text, alignment_label(n)));

        // Evidence mode.
        let tokens = backend.generate_constrained(
            &format!("{prompt}{transcript}"),
            &mut |so_far| {
                if so_far.last() == Some(&newline) {
                    Step::Stop
                } else {
                    Step::Mask(mask.clone())
                }
            },
            &line_params,
        )?;
        let line = backend.detokenize(&tokens)?;
        transcript.push_str(line.trim_end_matches('\n'));
        transcript.push('\n');

        // Explanation mode.
        transcript.push_str(&explanation_label(n));
        let expl = backend.generate_free(&format!("{prompt}{transcript}"), &line_params.clone().with_stop("\n"))?;
        transcript.push_str(expl.text.lines().next().unwrap_or(""));
        transcript.push('\n');
    }
    Ok(transcript)
}

/// Tokens of `text` as written, plus each word with and without a leading
/// space, so both spellings of a word land in the same set.
fn surface_variants(backend: &dyn Backend, text: &str) -> Result<BTreeSet<TokenId>> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out: BTreeSet<TokenId> = backend.tokenize(text)?.into_iter().collect();
    out.extend(backend.tokenize(&words.join("\n"))?);
    out.extend(backend.tokenize(&format!(" {}", words.join("\n ")))?);
    Ok(out)
}

fn pairs_from_transcript(
    transcript: &str,
    evidence: &str,
    chunks: &ClaimChunks,
    lexicon: &SignalLexicon,
    filtered: bool,
) -> Vec<AlignmentPair> {
    let blocks = parse_alignment_blocks(transcript, chunks.len());
    chunks
        .chunks
        .iter()
        .zip(blocks)
        .map(|(span, block)| match block {
            Some(b) => AlignmentPair {
                chunk: span.clone(),
                alignment: if filtered {
                    post_process_alignment(&b.alignment, evidence)
                } else {
                    b.alignment.clone()
                },
                raw_alignment: b.alignment,
                signal: parse_signal(&b.explanation, lexicon),
                explanation: b.explanation,
                degraded: false,
            },
            None => {
                warn!("no alignment block for chunk {:?}", span.text);
                AlignmentPair {
                    chunk: span.clone(),
                    raw_alignment: String::new(),
                    alignment: String::new(),
                    explanation: String::new(),
                    signal: None,
                    degraded: true,
                }
            }
        })
        .collect()
}
