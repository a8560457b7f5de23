//! Clients for remote inference endpoints.
//!
//! Wire protocol (JSON over HTTP POST):
//!
//! - `/v1/score`    `{id, text, want: ["logprob","rank","entropy"]}` ->
//!   `{id, tokens: [{text, byte_start, byte_end, logprob, rank?,
//!   rank_lower_bound?, entropy?}]}`. Token byte ranges must tile the text.
//!   A server that only exposes top-K candidates reports `rank = K + 1`
//!   with `rank_lower_bound = true`; a server with no rank information may
//!   omit `rank`, which the client records as a flagged lower bound of 1.
//! - `/v1/generate` `{prompt, max_tokens, temperature, top_p}` -> `{text}`.
//! - `/v1/perturb`  `{text, k, span_fraction}` -> `{variants: [string]}`.
//!
//! Transport failures and 5xx responses are retried with exponential
//! backoff; malformed payloads are protocol errors and are not retried.
//! At most `max_in_flight` requests run concurrently per client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectError, Perturber};
use crate::scoring::{ScoreError, ScoredCode, ScoredToken, Scorer};

pub const ENV_SCORER_URL: &str = "CODEPROV_SCORER_URL";
pub const ENV_SCORER_TIMEOUT_MS: &str = "CODEPROV_SCORER_TIMEOUT_MS";

const DEFAULT_TIMEOUT_MS: u64 = 30_000;
const BACKOFF_BASE_MS: u64 = 100;

#[derive(Debug, Clone)]
pub struct RemoteOptions {
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        let timeout_ms = std::env::var(ENV_SCORER_TIMEOUT_MS)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(DEFAULT_TIMEOUT_MS);
        RemoteOptions { timeout_ms, max_retries: 3, max_in_flight: 4 }
    }
}

/// Counting semaphore for the in-flight bound.
struct InFlight {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight { slots: Mutex::new(limit.max(1)), freed: Condvar::new() }
    }

    fn run<T>(&self, work: impl FnOnce() -> T) -> T {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
        drop(slots);
        let out = work();
        *self.slots.lock().unwrap() += 1;
        self.freed.notify_one();
        out
    }
}

fn is_retryable_status(status: reqwest::StatusCode) -> bool {
    status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS
}

/// POST `body` as JSON, retrying transport failures and retryable statuses
/// with exponential backoff. Returns the response body on 2xx.
fn post_with_retry<B: Serialize>(
    client: &reqwest::blocking::Client,
    url: &str,
    body: &B,
    max_retries: u32,
) -> Result<String, ScoreError> {
    let mut attempt = 0;
    loop {
        let outcome = client.post(url).json(body).send();
        match outcome {
            Ok(response) => {
                let status = response.status();
                if status.is_success() {
                    return response
                        .text()
                        .map_err(|e| ScoreError::ScorerUnavailable(e.to_string()));
                }
                if !is_retryable_status(status) {
                    return Err(ScoreError::ScorerProtocolError(format!(
                        "{url} returned {status}"
                    )));
                }
                if attempt >= max_retries {
                    return Err(ScoreError::ScorerUnavailable(format!(
                        "{url} returned {status} after {attempt} retries"
                    )));
                }
            }
            Err(e) => {
                if attempt >= max_retries {
                    return Err(ScoreError::ScorerUnavailable(format!(
                        "{url}: {e} after {attempt} retries"
                    )));
                }
            }
        }
        std::thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << attempt));
        attempt += 1;
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    id: String,
    text: &'a str,
    want: [&'static str; 3],
}

#[derive(Deserialize)]
struct ScoreResponse {
    #[serde(default)]
    id: Option<String>,
    tokens: Vec<WireToken>,
}

#[derive(Deserialize)]
struct WireToken {
    text: String,
    byte_start: usize,
    byte_end: usize,
    logprob: f64,
    #[serde(default)]
    rank: Option<u64>,
    #[serde(default)]
    rank_lower_bound: Option<bool>,
    #[serde(default)]
    entropy: Option<f64>,
}

/// Scoring client for the `/v1/score` protocol. The endpoint must be
/// configured deterministic for the determinism contract to hold.
pub struct RemoteScorer {
    base_url: String,
    id: String,
    client: reqwest::blocking::Client,
    options: RemoteOptions,
    in_flight: InFlight,
    counter: std::sync::atomic::AtomicU64,
}

impl RemoteScorer {
    pub fn new(base_url: &str, options: RemoteOptions) -> Result<Self, ScoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(options.timeout_ms))
            .build()
            .map_err(|e| ScoreError::ScorerUnavailable(e.to_string()))?;
        let base_url = base_url.trim_end_matches('/').to_string();
        Ok(RemoteScorer {
            id: format!("remote:{base_url}"),
            in_flight: InFlight::new(options.max_in_flight),
            base_url,
            client,
            options,
            counter: std::sync::atomic::AtomicU64::new(0),
        })
    }

    fn validate(&self, text: &str, response: ScoreResponse, id: &str) -> Result<ScoredCode, ScoreError> {
        if let Some(echoed) = &response.id {
            if echoed != id {
                return Err(ScoreError::ScorerProtocolError(format!(
                    "response id {echoed:?} does not match request id {id:?}"
                )));
            }
        }
        if response.tokens.is_empty() {
            return Err(ScoreError::ScorerProtocolError("empty token list".into()));
        }
        let mut tokens = Vec::with_capacity(response.tokens.len());
        let mut cursor = 0;
        for wire in response.tokens {
            if wire.byte_start != cursor || wire.byte_end <= wire.byte_start {
                return Err(ScoreError::ScorerProtocolError(format!(
                    "token byte ranges do not tile the text at offset {cursor}"
                )));
            }
            cursor = wire.byte_end;
            if wire.logprob > 1e-9 {
                return Err(ScoreError::ScorerProtocolError(
                    "positive log probability".into(),
                ));
            }
            if let Some(entropy) = wire.entropy {
                if entropy < -1e-9 {
                    return Err(ScoreError::ScorerProtocolError("negative entropy".into()));
                }
            }
            let (rank, lower_bound) = match wire.rank {
                Some(0) => {
                    return Err(ScoreError::ScorerProtocolError("rank must be >= 1".into()))
                }
                Some(rank) => (rank, wire.rank_lower_bound.unwrap_or(false)),
                None => (1, true), // no rank info at all: lower bound K+1 with K=0
            };
            tokens.push(ScoredToken {
                text: wire.text,
                byte_start: wire.byte_start,
                byte_end: wire.byte_end,
                log_likelihood: wire.logprob.min(0.0),
                rank,
                entropy: wire.entropy.map(|e| e.max(0.0)),
                rank_is_lower_bound: lower_bound,
            });
        }
        if cursor != text.len() {
            return Err(ScoreError::ScorerProtocolError(format!(
                "tokens cover {cursor} bytes of a {} byte text",
                text.len()
            )));
        }
        Ok(ScoredCode {
            text: text.to_string(),
            tokens,
            scorer_id: self.id.clone(),
        })
    }
}

impl Scorer for RemoteScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, text: &str) -> Result<ScoredCode, ScoreError> {
        if text.is_empty() {
            return Err(ScoreError::EmptyText);
        }
        let seq = self.counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let id = format!("score-{seq}");
        let request = ScoreRequest { id: id.clone(), text, want: ["logprob", "rank", "entropy"] };
        let body = self.in_flight.run(|| {
            post_with_retry(
                &self.client,
                &format!("{}/v1/score", self.base_url),
                &request,
                self.options.max_retries,
            )
        })?;
        let response: ScoreResponse = serde_json::from_str(&body)
            .map_err(|e| ScoreError::ScorerProtocolError(e.to_string()))?;
        self.validate(text, response, &id)
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Client for the `/v1/generate` protocol, used by the benchmark builder
/// to collect continuations from a real code LLM.
pub struct GenerationClient {
    base_url: String,
    id: String,
    client: reqwest::blocking::Client,
    options: RemoteOptions,
    in_flight: InFlight,
}

impl GenerationClient {
    pub fn new(base_url: &str, options: RemoteOptions) -> Result<Self, ScoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(options.timeout_ms))
            .build()
            .map_err(|e| ScoreError::ScorerUnavailable(e.to_string()))?;
        let base_url = base_url.trim_end_matches('/').to_string();
        Ok(GenerationClient {
            id: format!("remote:{base_url}"),
            in_flight: InFlight::new(options.max_in_flight),
            base_url,
            client,
            options,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn generate(
        &self,
        prompt: &str,
        max_tokens: usize,
        temperature: f64,
        top_p: f64,
    ) -> Result<String, ScoreError> {
        let request = GenerateRequest { prompt, max_tokens, temperature, top_p };
        let body = self.in_flight.run(|| {
            post_with_retry(
                &self.client,
                &format!("{}/v1/generate", self.base_url),
                &request,
                self.options.max_retries,
            )
        })?;
        let response: GenerateResponse = serde_json::from_str(&body)
            .map_err(|e| ScoreError::ScorerProtocolError(e.to_string()))?;
        Ok(response.text)
    }
}

#[derive(Serialize)]
struct PerturbRequest<'a> {
    text: &'a str,
    k: u32,
    span_fraction: f64,
}

#[derive(Deserialize)]
struct PerturbResponse {
    variants: Vec<String>,
}

/// Client for an external mask-and-recover perturber behind `/v1/perturb`.
/// Variants pass through unmodified.
pub struct MlmPerturberClient {
    base_url: String,
    id: String,
    client: reqwest::blocking::Client,
    options: RemoteOptions,
    in_flight: InFlight,
    pub span_fraction: f64,
}

impl MlmPerturberClient {
    pub fn new(
        base_url: &str,
        span_fraction: f64,
        options: RemoteOptions,
    ) -> Result<Self, ScoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(options.timeout_ms))
            .build()
            .map_err(|e| ScoreError::ScorerUnavailable(e.to_string()))?;
        let base_url = base_url.trim_end_matches('/').to_string();
        Ok(MlmPerturberClient {
            id: format!("mlm:{base_url}"),
            in_flight: InFlight::new(options.max_in_flight),
            base_url,
            client,
            options,
            span_fraction,
        })
    }
}

impl Perturber for MlmPerturberClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn perturb(&self, code: &str, k: u32, _sample_id: &str) -> Result<Vec<String>, DetectError> {
        let request = PerturbRequest { text: code, k, span_fraction: self.span_fraction };
        let body = self
            .in_flight
            .run(|| {
                post_with_retry(
                    &self.client,
                    &format!("{}/v1/perturb", self.base_url),
                    &request,
                    self.options.max_retries,
                )
            })
            .map_err(|e| match e {
                ScoreError::ScorerProtocolError(m) => DetectError::PerturberProtocol(m),
                other => DetectError::PerturberUnavailable(other.to_string()),
            })?;
        let response: PerturbResponse = serde_json::from_str(&body)
            .map_err(|e| DetectError::PerturberProtocol(e.to_string()))?;
        if response.variants.len() != k as usize {
            return Err(DetectError::PerturberProtocol(format!(
                "asked for {k} variants, got {}",
                response.variants.len()
            )));
        }
        Ok(response.variants)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server: answers `responses.len()` requests
    /// with the canned (status, body) pairs in order, then exits.
    fn serve(responses: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = vec![0u8; 65536];
                let mut read = 0;
                // read until end of headers plus declared body length
                loop {
                    let n = stream.read(&mut buf[read..]).unwrap();
                    read += n;
                    let text = String::from_utf8_lossy(&buf[..read]);
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find(|l| l.to_ascii_lowercase().starts_with("content-length:"))
                            .and_then(|l| l.split(':').nth(1))
                            .and_then(|v| v.trim().parse::<usize>().ok())
                            .unwrap_or(0);
                        if read >= header_end + 4 + content_length {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reason = if status == 200 { "OK" } else { "ERR" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}")
    }

    fn fast_options() -> RemoteOptions {
        RemoteOptions { timeout_ms: 2_000, max_retries: 2, max_in_flight: 2 }
    }

    fn token_json(text: &str, start: usize, extra: &str) -> String {
        format!(
            r#"{{"text":"{text}","byte_start":{start},"byte_end":{},"logprob":-1.5{extra}}}"#,
            start + 1
        )
    }

    #[test]
    fn score_round_trip() {
        let tokens = format!(
            "[{},{}]",
            token_json("a", 0, r#","rank":3,"entropy":2.0"#),
            token_json("b", 1, r#","rank":51,"rank_lower_bound":true"#)
        );
        let url = serve(vec![(200, format!(r#"{{"tokens":{tokens}}}"#))]);
        let scorer = RemoteScorer::new(&url, fast_options()).unwrap();
        let scored = scorer.score("ab").unwrap();
        assert_eq!(scored.tokens.len(), 2);
        assert_eq!(scored.tokens[0].rank, 3);
        assert_eq!(scored.tokens[0].entropy, Some(2.0));
        assert!(!scored.tokens[0].rank_is_lower_bound);
        assert!(scored.tokens[1].rank_is_lower_bound);
        assert_eq!(scored.tokens[1].entropy, None);
        assert!(scored.has_lower_bound_ranks());
    }

    #[test]
    fn missing_rank_is_flagged_lower_bound() {
        let tokens = format!("[{}]", token_json("a", 0, ""));
        let url = serve(vec![(200, format!(r#"{{"tokens":{tokens}}}"#))]);
        let scorer = RemoteScorer::new(&url, fast_options()).unwrap();
        let scored = scorer.score("a").unwrap();
        assert_eq!(scored.tokens[0].rank, 1);
        assert!(scored.tokens[0].rank_is_lower_bound);
    }

    #[test]
    fn transient_failure_is_retried() {
        let tokens = format!("[{}]", token_json("a", 0, r#","rank":1"#));
        let url = serve(vec![
            (500, "busy".to_string()),
            (200, format!(r#"{{"tokens":{tokens}}}"#)),
        ]);
        let scorer = RemoteScorer::new(&url, fast_options()).unwrap();
        assert!(scorer.score("a").is_ok());
    }

    #[test]
    fn client_error_is_not_retried() {
        let url = serve(vec![(400, "bad".to_string())]);
        let scorer = RemoteScorer::new(&url, fast_options()).unwrap();
        assert!(matches!(
            scorer.score("a"),
            Err(ScoreError::ScorerProtocolError(_))
        ));
    }

    #[test]
    fn non_tiling_tokens_rejected() {
        let tokens = format!("[{}]", token_json("a", 1, r#","rank":1"#)); // starts at 1
        let url = serve(vec![(200, format!(r#"{{"tokens":{tokens}}}"#))]);
        let scorer = RemoteScorer::new(&url, fast_options()).unwrap();
        assert!(matches!(
            scorer.score("ab"),
            Err(ScoreError::ScorerProtocolError(_))
        ));
    }

    #[test]
    fn mismatched_response_id_rejected() {
        let tokens = format!("[{}]", token_json("a", 0, r#","rank":1"#));
        let url = serve(vec![(
            200,
            format!(r#"{{"id":"other","tokens":{tokens}}}"#),
        )]);
        let scorer = RemoteScorer::new(&url, fast_options()).unwrap();
        assert!(matches!(
            scorer.score("a"),
            Err(ScoreError::ScorerProtocolError(_))
        ));
    }

    #[test]
    fn generate_round_trip() {
        let url = serve(vec![(200, r#"{"text":"return 1\n"}"#.to_string())]);
        let client = GenerationClient::new(&url, fast_options()).unwrap();
        let text = client.generate("def f():\n", 16, 0.2, 0.95).unwrap();
        assert_eq!(text, "return 1\n");
    }

    #[test]
    fn perturb_contract() {
        let url = serve(vec![
            (200, r#"{"variants":["a ","a  ","a"]}"#.to_string()),
            (200, r#"{"variants":[]}"#.to_string()),
        ]);
        let perturber = MlmPerturberClient::new(&url, 0.1, fast_options()).unwrap();
        let variants = perturber.perturb("a", 3, "s").unwrap();
        assert_eq!(variants.len(), 3);
        // empty response: protocol error
        assert!(matches!(
            perturber.perturb("a", 3, "s"),
            Err(DetectError::PerturberProtocol(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        // bind then drop a listener so the port is very likely closed
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let scorer = RemoteScorer::new(
            &format!("http://127.0.0.1:{port}"),
            RemoteOptions { timeout_ms: 300, max_retries: 0, max_in_flight: 1 },
        )
        .unwrap();
        assert!(matches!(
            scorer.score("a"),
            Err(ScoreError::ScorerUnavailable(_))
        ));
    }
}
