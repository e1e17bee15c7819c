//! HTTP backend against an in-process mock server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use natver::backend::{Backend, BackendError, ConstraintMask, GenerationParams, HttpBackend, HttpConfig, Step};
use natver::chunker::{chunk, DecodingMode};
use natver::templates::PromptTemplates;
use serde_json::{json, Value};

type Handler = dyn Fn(&str, &Value) -> (u16, Value) + Send + Sync;

struct Mock {
    url: String,
    log: Arc<Mutex<Vec<(String, Value)>>>,
}

impl Mock {
    fn start(handler: impl Fn(&str, &Value) -> (u16, Value) + Send + Sync + 'static) -> Mock {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let seen = Arc::clone(&log);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut len = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                seen.lock().unwrap().push((path.clone(), body.clone()));
                let (status, out) = handler(&path, &body);
                let out = out.to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                    out.len()
                );
            }
        });
        Mock { url, log }
    }

    fn calls(&self, path: &str) -> usize {
        self.log.lock().unwrap().iter().filter(|(p, _)| p == path).count()
    }

    fn bodies(&self, path: &str) -> Vec<Value> {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|(p, _)| p == path)
            .map(|(_, b)| b.clone())
            .collect()
    }
}

/// Whitespace-led word pieces; ids are positions in a growing vocabulary.
#[derive(Default)]
struct Vocab(Mutex<Vec<String>>);

impl Vocab {
    fn pieces(text: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in text.chars() {
            let fresh = c == '\n'
                || out.last().is_none_or(|p| p == "\n")
                || (c.is_whitespace() && !out.last().unwrap().chars().all(char::is_whitespace));
            if fresh {
                out.push(String::new());
            }
            out.last_mut().unwrap().push(c);
        }
        out
    }

    fn id(&self, piece: &str) -> u64 {
        let mut v = self.0.lock().unwrap();
        match v.iter().position(|p| p == piece) {
            Some(i) => i as u64,
            None => {
                v.push(piece.to_string());
                (v.len() - 1) as u64
            }
        }
    }

    fn tokenize(&self, text: &str) -> Value {
        json!({ "tokens": Vocab::pieces(text).iter().map(|p| self.id(p)).collect::<Vec<_>>() })
    }

    fn detokenize(&self, body: &Value) -> Value {
        let v = self.0.lock().unwrap();
        let text: String = body["tokens"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| v[t.as_u64().unwrap() as usize].clone())
            .collect();
        json!({ "content": text })
    }
}

fn completion(text: &str, top: Option<Value>) -> Value {
    let mut choice = json!({ "text": text, "finish_reason": "stop" });
    if let Some(top) = top {
        choice["logprobs"] = json!({ "top_logprobs": [top] });
    }
    json!({ "choices": [choice] })
}

fn client(url: &str) -> HttpConfig {
    HttpConfig {
        max_attempts: 3,
        timeout_secs: 5,
        ..HttpConfig::new(url)
    }
}

#[test]
fn tokenize_round_trip() {
    let vocab = Arc::new(Vocab::default());
    let v = Arc::clone(&vocab);
    let mock = Mock::start(move |path, body| match path {
        "/tokenize" => (200, v.tokenize(body["content"].as_str().unwrap())),
        "/detokenize" => (200, v.detokenize(body)),
        _ => (200, completion(" Yes", Some(json!({" Yes": -0.1, " No": -2.4})))),
    });
    let b = HttpBackend::connect(client(&mock.url)).unwrap();
    let caps = b.capabilities();
    assert!(caps.tokenize && caps.token_masks && caps.logprobs);
    let text = "The Hobbit was\npublished  in 1937.";
    let toks = b.tokenize(text).unwrap();
    assert_eq!(toks.len(), 7);
    assert_eq!(b.detokenize(&toks).unwrap(), text);
    assert_eq!(b.tokenize("\n").unwrap().len(), 1);
    assert!(b.tokenize("").unwrap().is_empty());
}

#[test]
fn yes_no_from_logprobs_and_text() {
    let mock = Mock::start(|path, body| match path {
        "/v1/completions" if body.get("logprobs").is_some() => (
            200,
            completion(
                " Yes",
                Some(json!({" Yes": (0.6f64).ln(), "No": (0.2f64).ln(), " maybe": -3.0})),
            ),
        ),
        "/v1/completions" => (200, completion(" No, it is not.", None)),
        _ => (404, json!({})),
    });
    let b = HttpBackend::unprobed(client(&mock.url)).unwrap();
    let s = b.score_yes_no("Is X Y?", &GenerationParams::qa()).unwrap();
    assert!(!s.degraded);
    assert!((s.score.p_yes - 0.75).abs() < 1e-9, "{:?}", s.score);
    let body = &mock.bodies("/v1/completions")[0];
    assert_eq!(body["max_tokens"], json!(1));
    assert!(body["prompt"].as_str().unwrap().ends_with("Is X Y?"));

    let no_lp = Mock::start(|_, _| (200, completion(" No, it is not.", None)));
    let b = HttpBackend::unprobed(client(&no_lp.url)).unwrap();
    let s = b.score_yes_no("Is X Y?", &GenerationParams::qa()).unwrap();
    assert!(s.degraded);
    assert_eq!(s.score.p_yes, 0.0);
}

#[test]
fn retries_server_errors_then_succeeds() {
    let hits = Arc::new(Mutex::new(0));
    let h = Arc::clone(&hits);
    let mock = Mock::start(move |_, _| {
        let mut n = h.lock().unwrap();
        *n += 1;
        if *n < 3 {
            (503, json!({"error": "busy"}))
        } else {
            (200, completion("ok", None))
        }
    });
    let b = HttpBackend::unprobed(client(&mock.url))
        .unwrap()
        .with_backoff(Duration::from_millis(1));
    let g = b.generate_free("prompt", &GenerationParams::task()).unwrap();
    assert_eq!(g.text, "ok");
    assert_eq!(mock.calls("/v1/completions"), 3);
}

#[test]
fn gives_up_after_max_attempts() {
    let mock = Mock::start(|_, _| (500, json!({})));
    let b = HttpBackend::unprobed(client(&mock.url))
        .unwrap()
        .with_backoff(Duration::from_millis(1));
    match b.generate_free("p", &GenerationParams::task()) {
        Err(BackendError::Transport {
            attempts: 3,
            retryable: true,
            ..
        }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.calls("/v1/completions"), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = Mock::start(|_, _| (400, json!({"error": "bad"})));
    let b = HttpBackend::unprobed(client(&mock.url))
        .unwrap()
        .with_backoff(Duration::from_millis(1));
    match b.generate_free("p", &GenerationParams::task()) {
        Err(BackendError::Transport {
            attempts: 1,
            retryable: false,
            ..
        }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.calls("/v1/completions"), 1);
}

#[test]
fn masked_step_picks_an_allowed_candidate() {
    let vocab = Arc::new(Vocab::default());
    let v = Arc::clone(&vocab);
    let mock = Mock::start(move |path, body| match path {
        "/tokenize" => (200, v.tokenize(body["content"].as_str().unwrap())),
        "/detokenize" => (200, v.detokenize(body)),
        _ => (
            200,
            completion(" banned", Some(json!({" banned": -0.1, " fine": -1.0, " other": -3.0}))),
        ),
    });
    let b = HttpBackend::unprobed(client(&mock.url)).unwrap();
    let banned = b.tokenize(" banned").unwrap()[0];
    let fine = b.tokenize(" fine").unwrap()[0];
    let mut step = |so_far: &[u32]| {
        if so_far.len() == 2 {
            Step::Stop
        } else {
            Step::Mask(ConstraintMask::deny([banned]))
        }
    };
    let out = b
        .generate_constrained("go", &mut step, &GenerationParams::task())
        .unwrap();
    assert_eq!(out, vec![fine, fine]);
    let bodies = mock.bodies("/v1/completions");
    assert_eq!(bodies[0]["max_tokens"], json!(1));
    assert_eq!(bodies[0]["logit_bias"][banned.to_string()], json!(-100));
    assert!(bodies[1]["prompt"].as_str().unwrap().ends_with("go fine"));

    let mut only_banned = |_: &[u32]| Step::Mask(ConstraintMask::allow([9999]));
    assert!(matches!(
        b.generate_constrained("go", &mut only_banned, &GenerationParams::task()),
        Err(BackendError::Capability(_))
    ));
}

#[test]
fn server_without_tokenizer_falls_back_to_free_chunking() {
    let mock = Mock::start(|path, body| match path {
        "/tokenize" | "/detokenize" => (404, json!({"error": "not found"})),
        _ if body["prompt"].as_str().unwrap_or("").contains("Split the claim") => {
            (200, completion("The Eiffel Tower\nis in Paris.\n", None))
        }
        _ => (200, completion(" Yes", None)),
    });
    let b = HttpBackend::connect(client(&mock.url)).unwrap();
    let caps = b.capabilities();
    assert!(!caps.tokenize && !caps.token_masks && !caps.logprobs);
    let claim = "The Eiffel Tower is in Paris.";
    let out = chunk(claim, &b, &PromptTemplates::builtin(), &GenerationParams::task(), true).unwrap();
    assert_eq!(out.mode, DecodingMode::FreeFallback);
    assert_eq!(out.chunks.reconstruct(), claim);
    let texts: Vec<&str> = out.chunks.texts().collect();
    assert_eq!(texts, ["The Eiffel Tower", "is in Paris."]);
}
