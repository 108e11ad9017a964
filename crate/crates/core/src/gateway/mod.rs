//! Chat-completion access: retries with jittered exponential backoff, a cap on
//! in-flight requests, a minimum spacing between requests, and a transcript of
//! every attempt.
//!
//! The transport is pluggable through [`Backend`]. [`HttpBackend`] talks to a
//! provider endpoint; [`MockBackend`] answers from a [`MockProfile`] without
//! any network access.

mod http;
pub mod mock;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{prompt_digest, seed_from_parts};

pub use http::{extract_text, wire_payload, HttpBackend};
pub use mock::{complete_mock, MockBackend, MockContext, MockMode, MockProfile, TraitFunction};

/// Sampling temperature used when a request does not set one.
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub request_id: String,
    pub system_text: String,
    pub user_text: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    pub model_id: String,
    #[serde(default)]
    pub max_output: Option<u32>,
}

impl ChatRequest {
    pub fn new(
        request_id: impl Into<String>,
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        model_id: impl Into<String>,
    ) -> Self {
        ChatRequest {
            request_id: request_id.into(),
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: None,
            model_id: model_id.into(),
            max_output: None,
        }
    }

    pub fn effective_temperature(&self) -> f64 {
        self.temperature.unwrap_or(DEFAULT_TEMPERATURE)
    }

    pub fn prompt_digest(&self) -> String {
        prompt_digest(&self.system_text, &self.user_text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub request_id: String,
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, String>,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".into()
}
fn default_credential() -> String {
    "VPOP_API_KEY".into()
}
fn default_model() -> String {
    "mock".into()
}
fn default_parallel() -> usize {
    4
}
fn default_retry() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_timeout() -> u64 {
    120_000
}

/// Provider settings. `credential` names an environment variable; the secret
/// itself is read at request time and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_credential")]
    pub credential: String,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retry")]
    pub retry_limit: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    /// Requests per minute; 0 disables the limiter.
    #[serde(default)]
    pub rate_limit: u32,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub temperature: Option<f64>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: default_endpoint(),
            credential: default_credential(),
            model_id: default_model(),
            max_parallel: default_parallel(),
            retry_limit: default_retry(),
            backoff_base_ms: default_backoff(),
            rate_limit: 0,
            timeout_ms: default_timeout(),
            temperature: None,
        }
    }
}

impl ProviderConfig {
    pub fn from_toml(text: &str) -> Result<ProviderConfig, GatewayError> {
        let cfg: ProviderConfig = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_parallel == 0 {
            return Err(GatewayError::Config("max_parallel must be at least 1".into()));
        }
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(GatewayError::Config(format!("temperature {t} outside [0, 2]")));
            }
        }
        if self.credential.is_empty()
            || !self
                .credential
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Err(GatewayError::Config(
                "credential must be the name of an environment variable".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("rate limited by provider (HTTP 429)")]
    RateLimited,
    #[error("provider error HTTP {status}: {body}")]
    Server { status: u16, body: String },
    #[error("request rejected HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("gave up after {attempts} attempt(s); last error: {last}")]
    Exhausted { attempts: u32, last: Box<GatewayError> },
    #[error("no scripted response for prompt digest {0}")]
    UnscriptedPrompt(String),
    #[error("persona-conditioned mock needs a persona context")]
    MissingContext,
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// 408, 429, 5xx and transport failures are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited | GatewayError::Server { .. } | GatewayError::Transport(_)
        )
    }

    /// Map an HTTP status of a failed call onto an error.
    pub fn from_status(status: u16, body: String) -> GatewayError {
        match status {
            401 | 403 => GatewayError::AuthFailure(format!("HTTP {status}")),
            429 => GatewayError::RateLimited,
            408 | 500..=599 => GatewayError::Server { status, body },
            _ => GatewayError::Rejected { status, body },
        }
    }
}

/// What a backend returns for one successful attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub meta: BTreeMap<String, String>,
}

pub trait Backend: Send + Sync {
    fn send(&self, req: &ChatRequest, ctx: Option<&MockContext>) -> Result<BackendReply, GatewayError>;

    /// Deterministic backends get latency recorded as 0 so their transcripts
    /// are reproducible.
    fn is_deterministic(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

/// One attempt, as written to the run transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_id: String,
    pub attempt: u32,
    pub backend: String,
    pub model_id: String,
    pub temperature: f64,
    pub prompt_digest: String,
    pub system_text: String,
    pub user_text: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

struct Slots {
    in_flight: Mutex<usize>,
    freed: Condvar,
    peak: Mutex<usize>,
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("slot lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Shareable client. Clone-free: pass `&Gateway` to worker threads.
pub struct Gateway {
    config: ProviderConfig,
    backend: Box<dyn Backend>,
    slots: Slots,
    next_slot: Mutex<Option<Instant>>,
    transcript: Mutex<Vec<TranscriptEntry>>,
    sleeper: Sleeper,
}

impl Gateway {
    pub fn new(config: ProviderConfig, backend: Box<dyn Backend>) -> Result<Gateway, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            config,
            backend,
            slots: Slots {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                peak: Mutex::new(0),
            },
            next_slot: Mutex::new(None),
            transcript: Mutex::new(Vec::new()),
            sleeper: Arc::new(std::thread::sleep),
        })
    }

    pub fn http(config: ProviderConfig) -> Result<Gateway, GatewayError> {
        let backend = HttpBackend::new(&config)?;
        Gateway::new(config, Box::new(backend))
    }

    pub fn mock(config: ProviderConfig, profile: MockProfile) -> Result<Gateway, GatewayError> {
        Gateway::new(config, Box::new(MockBackend::new(profile)))
    }

    /// Replace the function used to wait between retries and rate-limit slots.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Gateway {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn is_deterministic(&self) -> bool {
        self.backend.is_deterministic()
    }

    /// Highest number of simultaneously in-flight attempts seen so far.
    pub fn peak_in_flight(&self) -> usize {
        *self.slots.peak.lock().expect("peak lock")
    }

    /// Remove and return the transcript entries collected so far, ordered by
    /// request id and attempt.
    pub fn drain_transcript(&self) -> Vec<TranscriptEntry> {
        let mut entries = std::mem::take(&mut *self.transcript.lock().expect("transcript lock"));
        entries.sort_by(|a, b| (&a.request_id, a.attempt).cmp(&(&b.request_id, b.attempt)));
        entries
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut n = self.slots.in_flight.lock().expect("slot lock");
        while *n >= self.config.max_parallel {
            n = self.slots.freed.wait(n).expect("slot lock");
        }
        *n += 1;
        let mut peak = self.slots.peak.lock().expect("peak lock");
        *peak = (*peak).max(*n);
        SlotGuard(&self.slots)
    }

    fn pace(&self) {
        if self.config.rate_limit == 0 {
            return;
        }
        let interval = Duration::from_micros(60_000_000 / u64::from(self.config.rate_limit));
        let wait = {
            let mut next = self.next_slot.lock().expect("rate lock");
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + interval);
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            (self.sleeper)(wait);
        }
    }

    /// Full-jitter backoff: uniform in `[0, base * 2^(attempt-1)]`, seeded by
    /// the request id so retries are reproducible.
    fn backoff(&self, request_id: &str, attempt: u32) -> Duration {
        let cap = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.saturating_sub(1).min(20));
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from_parts(&[request_id, &attempt.to_string()]));
        Duration::from_millis(rng.gen_range(0..=cap))
    }

    /// Send a request, retrying transient failures up to `retry_limit` times.
    /// `ctx` is only consulted by the mock backend.
    pub fn complete(&self, req: &ChatRequest, ctx: Option<&MockContext>) -> Result<ChatResponse, GatewayError> {
        let mut req = req.clone();
        if req.temperature.is_none() {
            req.temperature = self.config.temperature;
        }
        if req.model_id.is_empty() {
            req.model_id = self.config.model_id.clone();
        }
        let digest = req.prompt_digest();
        let max_attempts = self.config.retry_limit + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.pace();
            let started = Instant::now();
            let outcome = {
                let _slot = self.acquire();
                self.backend.send(&req, ctx)
            };
            let latency_ms = if self.backend.is_deterministic() {
                0
            } else {
                started.elapsed().as_millis() as u64
            };
            let outcome = outcome.and_then(|reply| {
                if reply.text.trim().is_empty() {
                    Err(GatewayError::MalformedResponse("empty completion text".into()))
                } else {
                    Ok(reply)
                }
            });
            self.transcript.lock().expect("transcript lock").push(TranscriptEntry {
                request_id: req.request_id.clone(),
                attempt,
                backend: self.backend.name().to_string(),
                model_id: req.model_id.clone(),
                temperature: req.effective_temperature(),
                prompt_digest: digest.clone(),
                system_text: req.system_text.clone(),
                user_text: req.user_text.clone(),
                latency_ms,
                response_text: outcome.as_ref().ok().map(|r| r.text.clone()),
                error: outcome.as_ref().err().map(|e| e.to_string()),
            });
            match outcome {
                Ok(reply) => {
                    return Ok(ChatResponse {
                        request_id: req.request_id.clone(),
                        text: reply.text,
                        latency_ms,
                        attempt_count: attempt,
                        provider_meta: reply.meta,
                    })
                }
                Err(e) if !e.is_retryable() => return Err(e),
                Err(e) if attempt >= max_attempts => {
                    return Err(GatewayError::Exhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(_) => (self.sleeper)(self.backoff(&req.request_id, attempt)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Fails with the queued errors, then answers "ok".
    struct Flaky {
        failures: Mutex<Vec<GatewayError>>,
        calls: AtomicUsize,
        hold: Duration,
    }

    impl Flaky {
        fn new(failures: Vec<GatewayError>) -> Flaky {
            Flaky {
                failures: Mutex::new(failures),
                calls: AtomicUsize::new(0),
                hold: Duration::ZERO,
            }
        }
    }

    impl Backend for Flaky {
        fn send(&self, _: &ChatRequest, _: Option<&MockContext>) -> Result<BackendReply, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(self.hold);
            let mut f = self.failures.lock().unwrap();
            if f.is_empty() {
                Ok(BackendReply {
                    text: "ok".into(),
                    meta: BTreeMap::new(),
                })
            } else {
                Err(f.remove(0))
            }
        }
        fn name(&self) -> &str {
            "flaky"
        }
    }

    fn gateway(failures: Vec<GatewayError>, retry_limit: u32) -> (Gateway, Arc<Mutex<Vec<Duration>>>) {
        let slept = Arc::new(Mutex::new(Vec::new()));
        let log = slept.clone();
        let cfg = ProviderConfig {
            retry_limit,
            backoff_base_ms: 100,
            ..ProviderConfig::default()
        };
        let gw = Gateway::new(cfg, Box::new(Flaky::new(failures)))
            .unwrap()
            .with_sleeper(Arc::new(move |d| log.lock().unwrap().push(d)));
        (gw, slept)
    }

    fn req() -> ChatRequest {
        ChatRequest::new("r1", "sys", "user", "m")
    }

    #[test]
    fn retry_then_success() {
        let (gw, slept) = gateway(vec![GatewayError::RateLimited], 3);
        let resp = gw.complete(&req(), None).unwrap();
        assert_eq!(resp.attempt_count, 2);
        assert_eq!(resp.text, "ok");
        let t = gw.drain_transcript();
        assert_eq!(t.len(), 2);
        assert!(t[0].error.is_some() && t[1].response_text.as_deref() == Some("ok"));
        assert_eq!(slept.lock().unwrap().len(), 1);
        assert!(slept.lock().unwrap()[0] <= Duration::from_millis(100));
    }

    #[test]
    fn zero_retries_exhausts() {
        let (gw, _) = gateway(vec![GatewayError::Server { status: 503, body: String::new() }], 0);
        let err = gw.complete(&req(), None).unwrap_err();
        assert!(matches!(err, GatewayError::Exhausted { attempts: 1, .. }), "{err}");
        assert_eq!(gw.drain_transcript().len(), 1);
    }

    #[test]
    fn auth_failure_is_final() {
        let (gw, slept) = gateway(vec![GatewayError::from_status(401, String::new())], 5);
        assert!(matches!(gw.complete(&req(), None), Err(GatewayError::AuthFailure(_))));
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn empty_body_is_malformed() {
        struct Empty;
        impl Backend for Empty {
            fn send(&self, _: &ChatRequest, _: Option<&MockContext>) -> Result<BackendReply, GatewayError> {
                Ok(BackendReply { text: "  ".into(), meta: BTreeMap::new() })
            }
            fn name(&self) -> &str {
                "empty"
            }
        }
        let gw = Gateway::new(ProviderConfig::default(), Box::new(Empty)).unwrap();
        assert!(matches!(gw.complete(&req(), None), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn status_classification() {
        assert!(GatewayError::from_status(408, String::new()).is_retryable());
        assert!(GatewayError::from_status(429, String::new()).is_retryable());
        assert!(GatewayError::from_status(502, String::new()).is_retryable());
        assert!(!GatewayError::from_status(400, String::new()).is_retryable());
        assert!(!GatewayError::from_status(403, String::new()).is_retryable());
        assert!(GatewayError::Transport("reset".into()).is_retryable());
    }

    #[test]
    fn backoff_grows_and_is_seeded() {
        let (gw, _) = gateway(vec![], 0);
        for attempt in 1..6 {
            let d = gw.backoff("x", attempt);
            assert!(d <= Duration::from_millis(100 << (attempt - 1)));
            assert_eq!(d, gw.backoff("x", attempt));
        }
    }

    #[test]
    fn in_flight_is_bounded() {
        let mut flaky = Flaky::new(vec![]);
        flaky.hold = Duration::from_millis(20);
        let cfg = ProviderConfig {
            max_parallel: 3,
            ..ProviderConfig::default()
        };
        let gw = Gateway::new(cfg, Box::new(flaky)).unwrap();
        std::thread::scope(|s| {
            for i in 0..12 {
                let gw = &gw;
                s.spawn(move || gw.complete(&ChatRequest::new(format!("r{i:02}"), "", "u", "m"), None).unwrap());
            }
        });
        assert!(gw.peak_in_flight() <= 3);
        let t = gw.drain_transcript();
        assert_eq!(t.len(), 12);
        assert!(t.windows(2).all(|w| w[0].request_id < w[1].request_id));
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let slept = Arc::new(Mutex::new(Vec::new()));
        let log = slept.clone();
        let cfg = ProviderConfig {
            rate_limit: 60,
            ..ProviderConfig::default()
        };
        let gw = Gateway::new(cfg, Box::new(Flaky::new(vec![])))
            .unwrap()
            .with_sleeper(Arc::new(move |d| log.lock().unwrap().push(d)));
        for i in 0..3 {
            gw.complete(&ChatRequest::new(format!("r{i}"), "", "u", "m"), None).unwrap();
        }
        let waits = slept.lock().unwrap();
        assert_eq!(waits.len(), 2);
        assert!(waits.iter().all(|d| *d > Duration::from_millis(900)));
    }

    #[test]
    fn config_parsing() {
        let cfg = ProviderConfig::from_toml("model_id = \"glm-4\"\nmax_parallel = 2\ncredential = \"GLM_KEY\"\n").unwrap();
        assert_eq!(cfg.model_id, "glm-4");
        assert_eq!(cfg.retry_limit, 3);
        assert!(ProviderConfig::from_toml("max_parallel = 0").is_err());
        assert!(ProviderConfig::from_toml("credential = \"sk-abc def\"").is_err());
        assert!(ProviderConfig::from_toml("bogus = 1").is_err());
    }
}
