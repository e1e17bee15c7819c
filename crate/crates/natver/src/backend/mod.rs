//! Language-model access.
//!
//! Every stage talks to a model through [`Backend`]: token-masked
//! generation, free generation and Yes/No scoring. Two implementations
//! ship: [`ScriptedBackend`] replays a scenario file deterministically and
//! [`HttpBackend`] talks to an OpenAI-compatible completions server.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use natver_core::YesNoScore;
use serde::{Deserialize, Serialize};

mod http;
mod scripted;

pub use http::{HttpBackend, HttpConfig};
pub use scripted::{fingerprint, Scenario, ScenarioEntry, ScenarioRule, ScriptedBackend};

pub type TokenId = u32;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport {
        message: String,
        attempts: u32,
        retryable: bool,
    },
    #[error("backend cannot {0}")]
    Capability(String),
    #[error("unexpected backend response: {0}")]
    Protocol(String),
    #[error("empty constraint mask at step {0}")]
    EmptyMask(usize),
    #[error("token {token} emitted at step {step} is outside its mask")]
    MaskViolation { step: usize, token: TokenId },
    #[error("token {0} is outside the vocabulary")]
    UnknownToken(TokenId),
}

/// Tokens permitted at one decoding step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintMask {
    Allow(BTreeSet<TokenId>),
    /// Everything in the vocabulary except these tokens.
    Deny(BTreeSet<TokenId>),
}

impl ConstraintMask {
    pub fn allow<I: IntoIterator<Item = TokenId>>(tokens: I) -> Self {
        ConstraintMask::Allow(tokens.into_iter().collect())
    }

    pub fn deny<I: IntoIterator<Item = TokenId>>(tokens: I) -> Self {
        ConstraintMask::Deny(tokens.into_iter().collect())
    }

    pub fn allows(&self, token: TokenId) -> bool {
        match self {
            ConstraintMask::Allow(set) => set.contains(&token),
            ConstraintMask::Deny(set) => !set.contains(&token),
        }
    }

    /// A mask is usable when at least one token passes it.
    pub fn is_satisfiable(&self, vocab_size: Option<u64>) -> bool {
        match self {
            ConstraintMask::Allow(set) => !set.is_empty(),
            ConstraintMask::Deny(set) => vocab_size.is_none_or(|v| (set.len() as u64) < v),
        }
    }
}

/// What the caller of a constrained generation wants next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Mask(ConstraintMask),
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub system_prompt: String,
    #[serde(default)]
    pub stop: Vec<String>,
}

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a helpful assistant.";

impl GenerationParams {
    /// Sampling for Yes/No question answering.
    pub fn qa() -> Self {
        GenerationParams {
            temperature: 1.0,
            top_p: 0.9,
            max_tokens: 1,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            stop: Vec::new(),
        }
    }

    /// Sampling for chunking, alignment and the direct baseline.
    pub fn task() -> Self {
        GenerationParams {
            temperature: 0.1,
            top_p: 0.9,
            max_tokens: 512,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            stop: Vec::new(),
        }
    }

    pub fn with_max_tokens(mut self, n: usize) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop.push(stop.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    /// Generation ended at `max_tokens` rather than naturally.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub score: YesNoScore,
    /// No likelihoods were available; the answer was sampled.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub tokenize: bool,
    pub token_masks: bool,
    pub logprobs: bool,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    fn vocab_size(&self) -> Option<u64>;

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, BackendError>;

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String, BackendError>;

    fn newline_token(&self) -> Result<TokenId, BackendError> {
        match self.tokenize("\n")?.as_slice() {
            [t] => Ok(*t),
            other => Err(BackendError::Protocol(format!(
                "newline tokenizes to {} tokens",
                other.len()
            ))),
        }
    }

    /// Generates token by token. Before every step `step` sees the tokens
    /// emitted so far and returns the mask for the next token, or
    /// [`Step::Stop`]. Generation also ends at `params.max_tokens`.
    fn generate_constrained(
        &self,
        prompt: &str,
        step: &mut dyn FnMut(&[TokenId]) -> Step,
        params: &GenerationParams,
    ) -> Result<Vec<TokenId>, BackendError>;

    fn generate_free(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError>;

    fn score_yes_no(&self, prompt: &str, params: &GenerationParams) -> Result<ScoredAnswer, BackendError>;
}

/// Per-call counters for one unit of work.
#[derive(Debug, Default)]
pub struct CallCounter {
    tokenize: AtomicU64,
    constrained: AtomicU64,
    free: AtomicU64,
    yes_no: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub tokenize: u64,
    pub constrained: u64,
    pub free: u64,
    pub yes_no: u64,
}

impl CallCounter {
    pub fn snapshot(&self) -> CallCounts {
        CallCounts {
            tokenize: self.tokenize.load(Ordering::Relaxed),
            constrained: self.constrained.load(Ordering::Relaxed),
            free: self.free.load(Ordering::Relaxed),
            yes_no: self.yes_no.load(Ordering::Relaxed),
        }
    }
}

/// Wraps a backend, counts calls and checks every constrained step
/// against the mask handed out for it.
pub struct Checked<'a> {
    inner: &'a dyn Backend,
    counter: CallCounter,
}

impl<'a> Checked<'a> {
    pub fn new(inner: &'a dyn Backend) -> Self {
        Checked {
            inner,
            counter: CallCounter::default(),
        }
    }

    pub fn counts(&self) -> CallCounts {
        self.counter.snapshot()
    }
}

impl Backend for Checked<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn vocab_size(&self) -> Option<u64> {
        self.inner.vocab_size()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, BackendError> {
        self.counter.tokenize.fetch_add(1, Ordering::Relaxed);
        self.inner.tokenize(text)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String, BackendError> {
        self.inner.detokenize(tokens)
    }

    fn newline_token(&self) -> Result<TokenId, BackendError> {
        self.inner.newline_token()
    }

    fn generate_constrained(
        &self,
        prompt: &str,
        step: &mut dyn FnMut(&[TokenId]) -> Step,
        params: &GenerationParams,
    ) -> Result<Vec<TokenId>, BackendError> {
        self.counter.constrained.fetch_add(1, Ordering::Relaxed);
        let vocab = self.inner.vocab_size();
        let mut masks: Vec<ConstraintMask> = Vec::new();
        let mut bad_mask = None;
        let mut wrapped = |so_far: &[TokenId]| -> Step {
            let s = step(so_far);
            if let Step::Mask(m) = &s {
                if !m.is_satisfiable(vocab) {
                    bad_mask.get_or_insert(masks.len());
                    return Step::Stop;
                }
                masks.push(m.clone());
            }
            s
        };
        let out = self.inner.generate_constrained(prompt, &mut wrapped, params)?;
        if let Some(i) = bad_mask {
            return Err(BackendError::EmptyMask(i));
        }
        for (i, tok) in out.iter().enumerate() {
            match masks.get(i) {
                Some(m) if m.allows(*tok) => {}
                _ => return Err(BackendError::MaskViolation { step: i, token: *tok }),
            }
        }
        Ok(out)
    }

    fn generate_free(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError> {
        self.counter.free.fetch_add(1, Ordering::Relaxed);
        self.inner.generate_free(prompt, params)
    }

    fn score_yes_no(&self, prompt: &str, params: &GenerationParams) -> Result<ScoredAnswer, BackendError> {
        self.counter.yes_no.fetch_add(1, Ordering::Relaxed);
        self.inner.score_yes_no(prompt, params)
    }
}

/// Byte length of every token's surface, such that the lengths tile the
/// detokenized text. Falls back to prefix differences for tokenizers whose
/// single tokens do not decode on their own.
pub fn token_lengths(backend: &dyn Backend, tokens: &[TokenId], text: &str) -> Result<Vec<usize>, BackendError> {
    let mut lens = Vec::with_capacity(tokens.len());
    let mut joined = String::new();
    for t in tokens {
        let s = backend.detokenize(std::slice::from_ref(t))?;
        lens.push(s.len());
        joined.push_str(&s);
    }
    if joined == text {
        return Ok(lens);
    }
    lens.clear();
    let mut prev = 0;
    for i in 1..=tokens.len() {
        let prefix = backend.detokenize(&tokens[..i])?;
        if prefix.len() < prev || !text.is_char_boundary(prefix.len().min(text.len())) {
            return Err(BackendError::Protocol("token surfaces do not tile the text".into()));
        }
        lens.push(prefix.len() - prev);
        prev = prefix.len();
    }
    if prev != text.len() {
        return Err(BackendError::Protocol("detokenized text differs from input".into()));
    }
    Ok(lens)
}
