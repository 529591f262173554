//! Minimal chat-completion client with retries, backoff and bounded
//! concurrency. Shared by the external generator and the external
//! strategist.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const ENV_ENDPOINT: &str = "MOBSIM_ENDPOINT";
pub const ENV_TOKEN: &str = "MOBSIM_TOKEN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub url: String,
    /// Never written back out.
    #[serde(skip_serializing)]
    pub token: Option<String>,
    pub model: String,
    pub max_in_flight: usize,
    /// Extra attempts after the first one.
    pub retries: u32,
    pub timeout_secs: f64,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: "http://127.0.0.1:8080/v1/chat/completions".into(),
            token: None,
            model: "default".into(),
            max_in_flight: 4,
            retries: 3,
            timeout_secs: 120.0,
            backoff_ms: 500,
        }
    }
}

impl EndpointConfig {
    /// Apply `MOBSIM_ENDPOINT` / `MOBSIM_TOKEN` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(u) = std::env::var(ENV_ENDPOINT) {
            if !u.is_empty() {
                self.url = u;
            }
        }
        if let Ok(t) = std::env::var(ENV_TOKEN) {
            if !t.is_empty() {
                self.token = Some(t);
            }
        }
        self
    }
}

/// Final outcome of a call after retries.
#[derive(Clone, Debug, PartialEq)]
pub enum CallOutcome<T> {
    Ok(T),
    ParseFailure(String),
    BackendError(String),
}

enum Attempt {
    Content(String),
    /// Worth retrying: rate limit, server error, transport failure.
    Transient(String),
    Fatal(String),
}

pub struct ChatClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(cfg: EndpointConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs.max(0.001)))
            .build();
        ChatClient { cfg, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn attempt(&self, system: &str, user: &str) -> Attempt {
        let body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut req = self.agent.post(&self.cfg.url);
        if let Some(t) = &self.cfg.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        match req.send_json(body) {
            Ok(resp) => match resp.into_string() {
                Ok(text) => match extract_content(&text) {
                    Some(c) => Attempt::Content(c),
                    // a reply without message content is treated like malformed content
                    None => Attempt::Content(text),
                },
                Err(e) => Attempt::Transient(format!("reading reply: {e}")),
            },
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Attempt::Transient(format!("HTTP {code}"))
            }
            Err(ureq::Error::Status(code, _)) => Attempt::Fatal(format!("HTTP {code}")),
            Err(ureq::Error::Transport(t)) => Attempt::Transient(t.to_string()),
        }
    }

    /// Send one system + user exchange and parse the reply content, retrying
    /// transient failures and unparseable replies with exponential backoff.
    pub fn call<T>(
        &self,
        system: &str,
        user: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> CallOutcome<T> {
        let mut last_parse: Option<String> = None;
        let mut last_backend: Option<String> = None;
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                let ms = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(ms));
            }
            match self.attempt(system, user) {
                Attempt::Content(c) => match parse(&c) {
                    Ok(v) => return CallOutcome::Ok(v),
                    Err(e) => {
                        log::debug!("unparseable reply (attempt {}): {e}", attempt + 1);
                        last_parse = Some(e);
                        last_backend = None;
                    }
                },
                Attempt::Transient(e) => {
                    log::debug!("transient failure (attempt {}): {e}", attempt + 1);
                    last_backend = Some(e);
                }
                Attempt::Fatal(e) => return CallOutcome::BackendError(e),
            }
        }
        match (last_backend, last_parse) {
            (Some(e), _) => CallOutcome::BackendError(e),
            (None, Some(e)) => CallOutcome::ParseFailure(e),
            (None, None) => CallOutcome::BackendError("no attempts made".into()),
        }
    }
}

/// `choices[0].message.content` of an OpenAI-style reply.
pub fn extract_content(reply: &str) -> Option<String> {
    let v: Value = serde_json::from_str(reply).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_owned)
}

/// Map `f` over `items` with at most `limit` calls in flight; results keep
/// input order.
pub fn run_bounded<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let workers = limit.max(1).min(items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every item processed"))
        .collect()
}
