//! Claim chunking by token-queue constrained decoding.
//!
//! The claim is tokenized into a queue. At every step the model may only
//! emit the token at the front of the queue or a newline; a newline starts
//! a new chunk. Decoding ends once the queue is empty, so the model cannot
//! add, drop or alter claim text.

use log::warn;
use natver_core::chunk::chunks_from_lines;
use natver_core::ClaimChunks;
use serde::{Deserialize, Serialize};

use crate::backend::{token_lengths, Backend, BackendError, ConstraintMask, GenerationParams, Step, TokenId};
use crate::error::{Error, Result};
use crate::templates::PromptTemplates;

/// How a stage's text was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMode {
    Constrained,
    /// Unconstrained generation by request.
    Free,
    /// Unconstrained generation because the backend could not apply masks.
    FreeFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkOutcome {
    pub chunks: ClaimChunks,
    pub mode: DecodingMode,
    /// Model output, newlines included.
    pub raw_output: String,
}

struct QueueState<'a> {
    queue: &'a [TokenId],
    newline: TokenId,
    front: usize,
    seen: usize,
    breaks: Vec<usize>,
}

impl QueueState<'_> {
    fn absorb(&mut self, out: &[TokenId]) {
        for &tok in &out[self.seen..] {
            if self.queue.get(self.front) == Some(&tok) {
                self.front += 1;
            } else if tok == self.newline {
                self.breaks.push(self.front);
            }
        }
        self.seen = out.len();
    }

    fn next(&mut self, out: &[TokenId]) -> Step {
        self.absorb(out);
        match self.queue.get(self.front) {
            Some(&t) => Step::Mask(ConstraintMask::allow([t, self.newline])),
            None => Step::Stop,
        }
    }
}

pub fn chunk(
    claim: &str,
    backend: &dyn Backend,
    templates: &PromptTemplates,
    params: &GenerationParams,
    constrained: bool,
) -> Result<ChunkOutcome> {
    if claim.trim().is_empty() {
        return Err(Error::input("claim is empty"));
    }
    let prompt = templates.chunking_prompt(claim);
    if !constrained {
        return free_chunk(claim, backend, &prompt, params, DecodingMode::Free);
    }
    match constrained_chunk(claim, backend, &prompt, params) {
        Err(Error::Backend(BackendError::Capability(what))) => {
            warn!("chunking falls back to free generation: backend cannot {what}");
            free_chunk(claim, backend, &prompt, params, DecodingMode::FreeFallback)
        }
        other => other,
    }
}

fn constrained_chunk(
    claim: &str,
    backend: &dyn Backend,
    prompt: &str,
    params: &GenerationParams,
) -> Result<ChunkOutcome> {
    let tokens = backend.tokenize(claim)?;
    let lens = token_lengths(backend, &tokens, claim)?;
    let newline = backend.newline_token()?;
    let mut state = QueueState {
        queue: &tokens,
        newline,
        front: 0,
        seen: 0,
        breaks: Vec::new(),
    };
    let params = params
        .clone()
        .with_max_tokens(params.max_tokens.max(2 * tokens.len() + 1));
    let out = backend.generate_constrained(prompt, &mut |so_far| state.next(so_far), &params)?;
    state.absorb(&out);
    if state.front < tokens.len() {
        warn!(
            "chunking stopped with {} claim tokens unconsumed; they join the last chunk",
            tokens.len() - state.front
        );
    }
    let chunks = ClaimChunks::from_units(claim, &lens, &state.breaks).map_err(|e| Error::input(e.to_string()))?;
    Ok(ChunkOutcome {
        chunks,
        mode: DecodingMode::Constrained,
        raw_output: backend.detokenize(&out)?,
    })
}

fn free_chunk(
    claim: &str,
    backend: &dyn Backend,
    prompt: &str,
    params: &GenerationParams,
    mode: DecodingMode,
) -> Result<ChunkOutcome> {
    let generation = backend.generate_free(prompt, params)?;
    let chunks = chunks_from_lines(claim, &generation.text).map_err(|e| Error::input(e.to_string()))?;
    Ok(ChunkOutcome {
        chunks,
        mode,
        raw_output: generation.text,
    })
}
