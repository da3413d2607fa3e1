//! Model backends: live HTTP, transcript replay/record, and a rule-driven
//! scripted stand-in for tests and fixtures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompt::prompt_target;
use super::Stage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{0}")]
    Unavailable(String),
    #[error("no transcript entry {0}")]
    ReplayMiss(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub stage: Stage,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
}

impl Request {
    /// Hex SHA-256 over stage, model, temperature and prompt text.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.stage.as_str().as_bytes());
        h.update(b"\n");
        h.update(self.model.as_bytes());
        h.update(b"\n");
        h.update(self.temperature.to_string().as_bytes());
        h.update(b"\n");
        h.update(self.prompt.as_bytes());
        hex::encode(h.finalize())
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &Request) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    pub response: String,
}

impl TranscriptEntry {
    pub fn path(dir: &Path, key: &str) -> PathBuf {
        dir.join(format!("{key}.json"))
    }

    pub fn read(dir: &Path, key: &str) -> Option<TranscriptEntry> {
        let text = std::fs::read_to_string(Self::path(dir, key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Write-then-rename so concurrent readers never see a partial file.
    pub fn write(&self, dir: &Path, key: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("entry serializes");
        text.push('\n');
        tmp.write_all(text.as_bytes())?;
        tmp.persist(Self::path(dir, key)).map_err(|e| e.error)?;
        Ok(())
    }
}

/// Answers from a transcript directory; a missing entry is an error.
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        let key = req.key();
        TranscriptEntry::read(&self.dir, &key)
            .map(|e| e.response)
            .ok_or(BackendError::ReplayMiss(key))
    }
}

/// Forwards to `inner` and persists every exchange as a transcript entry.
pub struct RecordBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: Backend> RecordBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }
}

impl<B: Backend> Backend for RecordBackend<B> {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        let response = self.inner.complete(req)?;
        let entry = TranscriptEntry {
            prompt: req.prompt.clone(),
            response: response.clone(),
        };
        entry
            .write(&self.dir, &req.key())
            .map_err(|e| BackendError::Unavailable(format!("cannot record transcript: {e}")))?;
        Ok(response)
    }
}

/// One scripted answer rule. Unset selectors match anything.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptRule {
    pub stage: Option<Stage>,
    /// Exact match on the prompt's `Target:` line.
    pub focus: Option<String>,
    pub contains: Option<String>,
    /// Successive answers; the last one repeats.
    pub responses: Vec<String>,
}

/// Deterministic backend driven by an ordered rule list.
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    used: Mutex<Vec<usize>>,
}

fn response_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        let used = Mutex::new(vec![0; rules.len()]);
        Self { rules, used }
    }

    /// `{"rules": [{"stage", "focus", "contains", "response" | "responses"}]}`.
    /// A JSON-valued response is sent as its compact serialization, a string
    /// response verbatim.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let rules = v
            .get("rules")
            .and_then(Value::as_array)
            .ok_or("script needs a \"rules\" array")?;
        let mut out = Vec::new();
        for (i, r) in rules.iter().enumerate() {
            let s = |k: &str| r.get(k).and_then(Value::as_str).map(str::to_string);
            let stage = match s("stage") {
                Some(name) => Some(Stage::parse(&name).ok_or(format!("rule {i}: unknown stage {name:?}"))?),
                None => None,
            };
            let responses = match (r.get("response"), r.get("responses")) {
                (Some(one), None) => vec![response_text(one)],
                (None, Some(Value::Array(many))) if !many.is_empty() => many.iter().map(response_text).collect(),
                _ => return Err(format!("rule {i}: needs \"response\" or a non-empty \"responses\"")),
            };
            out.push(ScriptRule {
                stage,
                focus: s("focus"),
                contains: s("contains"),
                responses,
            });
        }
        Ok(Self::new(out))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn matches(rule: &ScriptRule, req: &Request) -> bool {
        rule.stage.is_none_or(|s| s == req.stage)
            && rule
                .focus
                .as_deref()
                .is_none_or(|f| prompt_target(&req.prompt) == Some(f))
            && rule.contains.as_deref().is_none_or(|c| req.prompt.contains(c))
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        let i = self
            .rules
            .iter()
            .position(|r| Self::matches(r, req))
            .ok_or_else(|| BackendError::ReplayMiss(req.key()))?;
        let mut used = self.used.lock().expect("script lock");
        let rule = &self.rules[i];
        let n = used[i].min(rule.responses.len() - 1);
        used[i] += 1;
        Ok(rule.responses[n].clone())
    }
}

/// Concurrency and request-rate limits for the live backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLimit {
    pub max_in_flight: usize,
    pub requests_per_second: f64,
    pub burst: f64,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            requests_per_second: 2.0,
            burst: 4.0,
        }
    }
}

struct Bucket {
    tokens: f64,
    last: Instant,
}

/// Chat-completion endpoint client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    limit: RateLimit,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    bucket: Mutex<Bucket>,
}

pub const API_KEY_ENV: &str = "SPECKERNEL_API_KEY";

impl HttpBackend {
    pub fn new(endpoint: &str, limit: RateLimit, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            limit,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            bucket: Mutex::new(Bucket {
                tokens: limit.burst.max(1.0),
                last: Instant::now(),
            }),
        })
    }

    fn take_token(&self) {
        if self.limit.requests_per_second <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut b = self.bucket.lock().expect("bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(b.last).as_secs_f64() * self.limit.requests_per_second;
                b.tokens = (b.tokens + refill).min(self.limit.burst.max(1.0));
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                (1.0 - b.tokens) / self.limit.requests_per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }

    fn acquire_slot(&self) {
        let mut n = self.in_flight.lock().expect("slot lock");
        while *n >= self.limit.max_in_flight.max(1) {
            n = self.slot_freed.wait(n).expect("slot lock");
        }
        *n += 1;
    }

    fn release_slot(&self) {
        *self.in_flight.lock().expect("slot lock") -= 1;
        self.slot_freed.notify_one();
    }

    fn post(&self, req: &Request) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": req.model,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        let mut rb = self.client.post(&self.endpoint).json(&body);
        if let Some(k) = &self.api_key {
            rb = rb.bearer_auth(k);
        }
        let resp = rb.send().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("endpoint returned {status}")));
        }
        let v: Value = resp.json().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Unavailable("reply has no choices[0].message.content".into()))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        self.take_token();
        self.acquire_slot();
        let r = self.post(req);
        self.release_slot();
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(stage: Stage, prompt: &str) -> Request {
        Request {
            stage,
            model: "m".into(),
            temperature: 0.1,
            prompt: prompt.into(),
        }
    }

    #[test]
    fn key_depends_on_every_field() {
        let a = req(Stage::Repair, "p");
        let mut b = a.clone();
        b.temperature = 0.2;
        let mut c = a.clone();
        c.stage = Stage::HandlerInit;
        assert_ne!(a.key(), b.key());
        assert_ne!(a.key(), c.key());
        assert_eq!(a.key().len(), 64);
    }

    #[test]
    fn scripted_sequences_and_focus() {
        let s = ScriptedBackend::from_json(
            r#"{"rules": [
                {"stage": "repair", "focus": "x", "responses": ["bad", {"result": 1}]},
                {"stage": "repair", "response": {"result": 0}}
            ]}"#,
        )
        .unwrap();
        let px = "--- Task ---\nTarget: x\n";
        assert_eq!(s.complete(&req(Stage::Repair, px)).unwrap(), "bad");
        assert_eq!(s.complete(&req(Stage::Repair, px)).unwrap(), "{\"result\":1}");
        assert_eq!(s.complete(&req(Stage::Repair, px)).unwrap(), "{\"result\":1}");
        assert_eq!(s.complete(&req(Stage::Repair, "Target: y")).unwrap(), "{\"result\":0}");
        assert!(matches!(
            s.complete(&req(Stage::HandlerInit, px)),
            Err(BackendError::ReplayMiss(_))
        ));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let inner = ScriptedBackend::from_json(r#"{"rules": [{"response": "hello"}]}"#).unwrap();
        let rec = RecordBackend::new(inner, dir.path());
        let r = req(Stage::TypeRecovery, "q");
        assert_eq!(rec.complete(&r).unwrap(), "hello");
        let rep = ReplayBackend::new(dir.path());
        assert_eq!(rep.complete(&r).unwrap(), "hello");
        assert!(matches!(
            rep.complete(&req(Stage::TypeRecovery, "other")),
            Err(BackendError::ReplayMiss(_))
        ));
    }
}
