//! Deterministic backend driven by a scenario file.
//!
//! A scenario says what the "model" wants to write after a prompt and how
//! likely it finds "Yes". Responses are looked up by prompt fingerprint
//! first, then by substring rules, then the default.
//!
//! Response text is treated as a target continuation. When the prompt's
//! last line also starts a line of the target (for example `Alignment 2:`),
//! the continuation resumes after it, so one multi-block response can drive
//! a generation that the caller interleaves with inserted text.
//!
//! Tokens are whitespace-led pieces (`"a b"` is `"a"`, `" b"`), newlines
//! are tokens of their own, and ids are derived from a hash of the surface.

use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;

use natver_core::chunk::whitespace_units;
use natver_core::yesno::parse_answer;
use natver_core::{Answer, YesNoScore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Backend, BackendError, Capabilities, ConstraintMask, Generation, GenerationParams, ScoredAnswer, Step, TokenId,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_yes: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRule {
    /// Every string must occur in the prompt.
    pub contains: Vec<String>,
    #[serde(flatten)]
    pub entry: ScenarioEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub default: ScenarioEntry,
    /// Prompt fingerprint to response.
    #[serde(default)]
    pub responses: HashMap<String, ScenarioEntry>,
    #[serde(default)]
    pub rules: Vec<ScenarioRule>,
    /// When false the backend behaves like an API without likelihoods.
    #[serde(default = "yes")]
    pub logprobs: bool,
    /// When false the backend refuses token masks.
    #[serde(default = "yes")]
    pub token_masks: bool,
    /// With no target text left, pick uniformly among allowed tokens
    /// instead of the lowest-id non-newline token.
    #[serde(default)]
    pub random_choice: bool,
}

fn yes() -> bool {
    true
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 0,
            default: ScenarioEntry::default(),
            responses: HashMap::new(),
            rules: Vec::new(),
            logprobs: true,
            token_masks: true,
            random_choice: false,
        }
    }
}

impl Scenario {
    pub fn rule(mut self, contains: &[&str], text: Option<&str>, p_yes: Option<f64>) -> Self {
        self.rules.push(ScenarioRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            entry: ScenarioEntry {
                text: text.map(str::to_string),
                p_yes,
            },
        });
        self
    }

    pub fn respond(mut self, prompt: &str, text: Option<&str>, p_yes: Option<f64>) -> Self {
        self.responses.insert(
            fingerprint(prompt),
            ScenarioEntry {
                text: text.map(str::to_string),
                p_yes,
            },
        );
        self
    }

    pub fn with_default_p_yes(mut self, p_yes: f64) -> Self {
        self.default.p_yes = Some(p_yes);
        self
    }

    fn text_for(&self, prompt: &str) -> Option<&str> {
        if let Some(t) = self.responses.get(&fingerprint(prompt)).and_then(|e| e.text.as_deref()) {
            return Some(t);
        }
        self.rules
            .iter()
            .filter(|r| r.contains.iter().all(|c| prompt.contains(c.as_str())))
            .find_map(|r| r.entry.text.as_deref())
            .or(self.default.text.as_deref())
    }

    fn p_yes_for(&self, prompt: &str) -> f64 {
        if let Some(p) = self.responses.get(&fingerprint(prompt)).and_then(|e| e.p_yes) {
            return p;
        }
        self.rules
            .iter()
            .filter(|r| r.contains.iter().all(|c| prompt.contains(c.as_str())))
            .find_map(|r| r.entry.p_yes)
            .or(self.default.p_yes)
            .unwrap_or(0.0)
    }
}

/// Stable fingerprint of a prompt: SHA-256 over the whitespace-normalized
/// text, first 16 hex digits.
pub fn fingerprint(prompt: &str) -> String {
    let normalized = prompt.split_whitespace().collect::<Vec<_>>().join(" ");
    let digest = Sha256::digest(normalized.as_bytes());
    hex::encode(&digest[..8])
}

fn token_id(surface: &str) -> TokenId {
    let digest = Sha256::digest(surface.as_bytes());
    u32::from_le_bytes([digest[0], digest[1], digest[2], digest[3]])
}

pub struct ScriptedBackend {
    scenario: Scenario,
    vocab: RwLock<HashMap<TokenId, String>>,
}

impl ScriptedBackend {
    pub fn new(scenario: Scenario) -> Self {
        ScriptedBackend {
            scenario,
            vocab: RwLock::new(HashMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, crate::Error> {
        let raw = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let scenario: Scenario =
            serde_json::from_str(&raw).map_err(|e| crate::Error::Input(format!("{}: {e}", path.display())))?;
        Ok(ScriptedBackend::new(scenario))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn intern(&self, surface: &str) -> TokenId {
        let id = token_id(surface);
        let known = self.vocab.read().expect("vocab lock").contains_key(&id);
        if !known {
            self.vocab
                .write()
                .expect("vocab lock")
                .entry(id)
                .or_insert_with(|| surface.to_string());
        }
        id
    }

    fn surface(&self, id: TokenId) -> Option<String> {
        self.vocab.read().expect("vocab lock").get(&id).cloned()
    }

    fn pieces(text: &str) -> Vec<&str> {
        whitespace_units(text).into_iter().map(|r| &text[r]).collect()
    }

    /// Remaining target text for `prompt`.
    fn continuation(&self, prompt: &str) -> String {
        let Some(target) = self.scenario.text_for(prompt) else {
            return String::new();
        };
        let last = prompt.rsplit('\n').next().unwrap_or("").trim_end();
        if !last.trim().is_empty() {
            let mut offset = 0;
            for line in target.split_inclusive('\n') {
                if line.starts_with(last) {
                    return target[offset + last.len()..].to_string();
                }
                offset += line.len();
            }
        }
        target.to_string()
    }

    fn rng(&self, prompt: &str, salt: u64) -> ChaCha8Rng {
        let digest = Sha256::digest(prompt.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        for (i, b) in (self.scenario.seed ^ salt).to_le_bytes().iter().enumerate() {
            seed[i] ^= b;
        }
        ChaCha8Rng::from_seed(seed)
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            tokenize: true,
            token_masks: self.scenario.token_masks,
            logprobs: self.scenario.logprobs,
        }
    }

    fn vocab_size(&self) -> Option<u64> {
        Some(u64::from(u32::MAX) + 1)
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, BackendError> {
        Ok(Self::pieces(text).into_iter().map(|p| self.intern(p)).collect())
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String, BackendError> {
        let mut out = String::new();
        for t in tokens {
            out.push_str(&self.surface(*t).ok_or(BackendError::UnknownToken(*t))?);
        }
        Ok(out)
    }

    fn generate_constrained(
        &self,
        prompt: &str,
        step: &mut dyn FnMut(&[TokenId]) -> Step,
        params: &GenerationParams,
    ) -> Result<Vec<TokenId>, BackendError> {
        if !self.scenario.token_masks {
            return Err(BackendError::Capability("apply token masks".into()));
        }
        let target = self.continuation(prompt);
        let target: Vec<(TokenId, String)> = Self::pieces(&target)
            .into_iter()
            .map(|p| (self.intern(p), p.to_string()))
            .collect();
        let newline = self.intern("\n");
        let mut rng = self.rng(prompt, 0x5eed);
        let mut cursor = 0;
        let mut out = Vec::new();
        while out.len() < params.max_tokens {
            let mask = match step(&out) {
                Step::Stop => break,
                Step::Mask(m) => m,
            };
            let mut chosen = None;
            while chosen.is_none() && cursor < target.len() {
                let (tid, surface) = &target[cursor];
                cursor += 1;
                if mask.allows(*tid) {
                    chosen = Some(*tid);
                } else if let ConstraintMask::Allow(set) = &mask {
                    let want = surface.trim_start();
                    chosen = set
                        .iter()
                        .copied()
                        .find(|a| !want.is_empty() && self.surface(*a).is_some_and(|s| s.trim_start() == want));
                }
            }
            let chosen = match chosen {
                Some(t) => t,
                None => match &mask {
                    ConstraintMask::Allow(set) if set.is_empty() => break,
                    ConstraintMask::Allow(set) if self.scenario.random_choice => {
                        let i = rng.gen_range(0..set.len());
                        *set.iter().nth(i).expect("index in range")
                    }
                    ConstraintMask::Allow(set) => set.iter().copied().find(|t| *t != newline).unwrap_or(newline),
                    ConstraintMask::Deny(_) if mask.allows(newline) => newline,
                    ConstraintMask::Deny(_) => break,
                },
            };
            out.push(chosen);
        }
        Ok(out)
    }

    fn generate_free(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError> {
        let mut text = self.continuation(prompt);
        if let Some(cut) = params.stop.iter().filter_map(|s| text.find(s.as_str())).min() {
            text.truncate(cut);
        }
        let pieces = Self::pieces(&text);
        let truncated = pieces.len() > params.max_tokens;
        if truncated {
            text = pieces[..params.max_tokens].concat();
        }
        Ok(Generation { text, truncated })
    }

    fn score_yes_no(&self, prompt: &str, _params: &GenerationParams) -> Result<ScoredAnswer, BackendError> {
        let p = self.scenario.p_yes_for(prompt);
        if self.scenario.logprobs {
            return Ok(ScoredAnswer {
                score: YesNoScore::from_p_yes(p),
                degraded: false,
            });
        }
        // Sampling regime: the answer text decides, otherwise a draw.
        let answer = self
            .scenario
            .text_for(prompt)
            .and_then(parse_answer)
            .unwrap_or_else(|| {
                if self.rng(prompt, 0xa5).gen_bool(p.clamp(0.0, 1.0)) {
                    Answer::Yes
                } else {
                    Answer::No
                }
            });
        Ok(ScoredAnswer {
            score: YesNoScore::certain(answer),
            degraded: true,
        })
    }
}
