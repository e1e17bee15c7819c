//! OpenAI-compatible completions client.
//!
//! Token masks are sent as `logit_bias` on single-token requests and the
//! returned token is checked against the mask. Tokenization uses the
//! `/tokenize` and `/detokenize` routes that llama.cpp-style servers expose;
//! a server without them gets no token masks.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use natver_core::yesno::parse_answer;
use natver_core::YesNoScore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    Backend, BackendError, Capabilities, ConstraintMask, Generation, GenerationParams, ScoredAnswer, Step, TokenId,
};

pub const API_KEY_ENV: &str = "NATVER_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Server root, e.g. `http://127.0.0.1:8080`.
    pub base_url: String,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u32,
}

fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    120
}
fn default_top_logprobs() -> u32 {
    20
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: None,
            max_in_flight: default_in_flight(),
            max_attempts: default_retries(),
            timeout_secs: default_timeout(),
            top_logprobs: default_top_logprobs(),
        }
    }
}

struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("gate lock");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("gate lock");
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    gate: Gate,
    caps: Capabilities,
    backoff: Duration,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Debug, Deserialize)]
struct Logprobs {
    #[serde(default)]
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

impl HttpBackend {
    /// Connects and probes which features the server supports.
    pub fn connect(config: HttpConfig) -> Result<Self, BackendError> {
        let mut backend = HttpBackend::unprobed(config)?;
        backend.caps = backend.probe();
        debug!("http backend capabilities: {:?}", backend.caps);
        Ok(backend)
    }

    /// Builds a client that assumes every capability; used by tests that
    /// script the server.
    pub fn unprobed(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport {
                message: e.to_string(),
                attempts: 0,
                retryable: false,
            })?;
        let limit = config.max_in_flight.max(1);
        Ok(HttpBackend {
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            client,
            gate: Gate {
                used: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
            caps: Capabilities {
                tokenize: true,
                token_masks: true,
                logprobs: true,
            },
            backoff: Duration::from_millis(200),
            config,
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn probe(&self) -> Capabilities {
        let tokenize = self.tokenize_remote("Yes").is_ok();
        let logprobs = self
            .complete("Answer Yes or No.", &GenerationParams::qa(), None, true)
            .map(|c| c.logprobs.is_some_and(|l| !l.top_logprobs.is_empty()))
            .unwrap_or(false);
        Capabilities {
            tokenize,
            token_masks: tokenize,
            logprobs,
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}{}", self.config.base_url, path);
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let _permit = self.gate.acquire();
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<Value>().map_err(|e| BackendError::Protocol(e.to_string()));
                    }
                    let text = resp.text().unwrap_or_default();
                    last = format!("{status}: {text}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        return Err(BackendError::Transport {
                            message: last,
                            attempts: attempt,
                            retryable: false,
                        });
                    }
                }
                Err(e) => last = e.to_string(),
            }
            if attempt < attempts {
                warn!("{url}: attempt {attempt} failed ({last}), retrying");
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
        }
        Err(BackendError::Transport {
            message: last,
            attempts,
            retryable: true,
        })
    }

    fn render(prompt: &str, params: &GenerationParams) -> String {
        if params.system_prompt.is_empty() {
            prompt.to_string()
        } else {
            format!("{}\n\n{}", params.system_prompt, prompt)
        }
    }

    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        mask: Option<&ConstraintMask>,
        logprobs: bool,
    ) -> Result<Choice, BackendError> {
        let mut body = json!({
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        });
        if let Some(model) = &self.config.model {
            body["model"] = json!(model);
        }
        if !params.stop.is_empty() {
            body["stop"] = json!(params.stop);
        }
        if logprobs {
            body["logprobs"] = json!(self.config.top_logprobs);
        }
        if let Some(mask) = mask {
            let (set, bias) = match mask {
                ConstraintMask::Allow(s) => (s, 100),
                ConstraintMask::Deny(s) => (s, -100),
            };
            let bias: BTreeMap<String, i32> = set.iter().map(|t| (t.to_string(), bias)).collect();
            body["logit_bias"] = json!(bias);
        }
        let v = self.post("/v1/completions", &body)?;
        let mut resp: CompletionResponse =
            serde_json::from_value(v).map_err(|e| BackendError::Protocol(e.to_string()))?;
        if resp.choices.is_empty() {
            return Err(BackendError::Protocol("completion has no choices".into()));
        }
        Ok(resp.choices.swap_remove(0))
    }

    fn tokenize_remote(&self, text: &str) -> Result<Vec<TokenId>, BackendError> {
        let v = self.post("/tokenize", &json!({ "content": text, "add_special": false }))?;
        let tokens = v
            .get("tokens")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Protocol("tokenize response lacks `tokens`".into()))?;
        tokens
            .iter()
            .map(|t| {
                t.as_u64()
                    .or_else(|| t.get("id").and_then(Value::as_u64))
                    .and_then(|x| TokenId::try_from(x).ok())
                    .ok_or_else(|| BackendError::Protocol("bad token id".into()))
            })
            .collect()
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn capabilities(&self) -> Capabilities {
        self.caps
    }

    fn vocab_size(&self) -> Option<u64> {
        None
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, BackendError> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        if !self.caps.tokenize {
            return Err(BackendError::Capability("tokenize".into()));
        }
        self.tokenize_remote(text)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String, BackendError> {
        if tokens.is_empty() {
            return Ok(String::new());
        }
        if !self.caps.tokenize {
            return Err(BackendError::Capability("detokenize".into()));
        }
        let v = self.post("/detokenize", &json!({ "tokens": tokens }))?;
        v.get("content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol("detokenize response lacks `content`".into()))
    }

    fn generate_constrained(
        &self,
        prompt: &str,
        step: &mut dyn FnMut(&[TokenId]) -> Step,
        params: &GenerationParams,
    ) -> Result<Vec<TokenId>, BackendError> {
        if !self.caps.token_masks {
            return Err(BackendError::Capability("apply token masks".into()));
        }
        let base = HttpBackend::render(prompt, params);
        let one = GenerationParams {
            max_tokens: 1,
            stop: Vec::new(),
            ..params.clone()
        };
        let mut out: Vec<TokenId> = Vec::new();
        let mut generated = String::new();
        while out.len() < params.max_tokens {
            let mask = match step(&out) {
                Step::Stop => break,
                Step::Mask(m) => m,
            };
            let choice = self.complete(&format!("{base}{generated}"), &one, Some(&mask), true)?;
            let mut candidates = vec![choice.text.clone()];
            if let Some(top) = choice
                .logprobs
                .and_then(|l| l.top_logprobs.into_iter().next().flatten())
            {
                let mut ranked: Vec<(String, f64)> = top.into_iter().collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
                candidates.extend(ranked.into_iter().map(|(t, _)| t));
            }
            let mut picked = None;
            for c in candidates.iter().filter(|c| !c.is_empty()) {
                if let [t] = self.tokenize(c)?.as_slice() {
                    if mask.allows(*t) {
                        picked = Some((*t, c.clone()));
                        break;
                    }
                }
            }
            let Some((tok, surface)) = picked else {
                return Err(BackendError::Capability("honor token masks".into()));
            };
            out.push(tok);
            generated.push_str(&surface);
        }
        Ok(out)
    }

    fn generate_free(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError> {
        let choice = self.complete(&HttpBackend::render(prompt, params), params, None, false)?;
        Ok(Generation {
            truncated: choice.finish_reason.as_deref() == Some("length"),
            text: choice.text,
        })
    }

    fn score_yes_no(&self, prompt: &str, params: &GenerationParams) -> Result<ScoredAnswer, BackendError> {
        let rendered = HttpBackend::render(prompt, params);
        let choice = self.complete(&rendered, params, None, self.caps.logprobs)?;
        let from_lp = choice
            .logprobs
            .as_ref()
            .and_then(|l| l.top_logprobs.first().cloned().flatten())
            .and_then(|top| YesNoScore::from_logprobs(top.iter().map(|(k, v)| (k.as_str(), *v))));
        if let Some(score) = from_lp {
            return Ok(ScoredAnswer { score, degraded: false });
        }
        let answer = parse_answer(&choice.text)
            .ok_or_else(|| BackendError::Protocol(format!("no Yes/No answer in {:?}", choice.text)))?;
        Ok(ScoredAnswer {
            score: YesNoScore::certain(answer),
            degraded: true,
        })
    }
}
