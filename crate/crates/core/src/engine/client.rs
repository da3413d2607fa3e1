//! Cached, retrying front end over a [`Backend`].

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::backend::{Backend, HttpBackend, RateLimit, RecordBackend, ReplayBackend, Request, TranscriptEntry};
use super::prompt::{units, Prompt, PromptAssets, DEFAULT_BUDGET_UNITS};
use super::{parse_envelope, AnalysisResponse, EngineError, Stage};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Record,
}

impl BackendKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "http" => BackendKind::Http,
            "replay" => BackendKind::Replay,
            "record" => BackendKind::Record,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub cache_dir: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub rate_limit: RateLimit,
    pub timeout: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Replay,
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_name: "gpt-4".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_retries: DEFAULT_MAX_RETRIES,
            cache_dir: None,
            transcripts: None,
            rate_limit: RateLimit::default(),
            timeout: Duration::from_secs(120),
        }
    }
}

impl BackendConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} is outside [0, 2]", self.temperature));
        }
        if self.kind != BackendKind::Http && self.transcripts.is_none() {
            return Err("replay and record backends need a transcript directory".into());
        }
        Ok(())
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>, EngineError> {
        self.check().map_err(EngineError::BackendUnavailable)?;
        let http = || HttpBackend::new(&self.endpoint_url, self.rate_limit, self.timeout).map_err(EngineError::from);
        Ok(match self.kind {
            BackendKind::Http => Box::new(http()?),
            BackendKind::Replay => Box::new(ReplayBackend::new(self.transcripts.clone().unwrap_or_default())),
            BackendKind::Record => Box::new(RecordBackend::new(
                http()?,
                self.transcripts.clone().unwrap_or_default(),
            )),
        })
    }
}

/// Prompt-hash keyed response store, in memory and optionally on disk.
#[derive(Default)]
pub struct ResponseCache {
    mem: Mutex<HashMap<String, String>>,
    dir: Option<PathBuf>,
}

impl ResponseCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            mem: Mutex::default(),
            dir,
        }
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(v) = self.mem.lock().expect("cache lock").get(key) {
            return Some(v.clone());
        }
        let e = TranscriptEntry::read(self.dir.as_ref()?, key)?;
        self.mem
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), e.response.clone());
        Some(e.response)
    }

    pub fn put(&self, key: &str, prompt: &str, response: &str) {
        self.mem
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), response.to_string());
        if let Some(dir) = &self.dir {
            let e = TranscriptEntry {
                prompt: prompt.to_string(),
                response: response.to_string(),
            };
            if let Err(err) = e.write(dir, key) {
                log::warn!("cache write failed for {key}: {err}");
            }
        }
    }
}

/// Counters over everything sent through one client.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    /// Prompts submitted, cache hits included.
    pub queries: u64,
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
    pub prompt_units: u64,
    pub response_units: u64,
}

pub struct LlmClient {
    backend: Box<dyn Backend>,
    model: String,
    temperature: f64,
    max_retries: u32,
    cache: ResponseCache,
    assets: PromptAssets,
    budget_units: usize,
    usage: Mutex<Usage>,
}

impl LlmClient {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Self {
            backend,
            model: BackendConfig::default().model_name,
            temperature: DEFAULT_TEMPERATURE,
            max_retries: DEFAULT_MAX_RETRIES,
            cache: ResponseCache::default(),
            assets: PromptAssets::builtin(),
            budget_units: DEFAULT_BUDGET_UNITS,
            usage: Mutex::default(),
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, EngineError> {
        Ok(Self::new(cfg.build_backend()?)
            .with_model(&cfg.model_name, cfg.temperature)
            .with_max_retries(cfg.max_retries)
            .with_cache(ResponseCache::new(cfg.cache_dir.clone())))
    }

    pub fn with_model(mut self, model: &str, temperature: f64) -> Self {
        self.model = model.to_string();
        self.temperature = temperature;
        self
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_assets(mut self, assets: PromptAssets) -> Self {
        self.assets = assets;
        self
    }

    pub fn with_budget(mut self, units: usize) -> Self {
        self.budget_units = units;
        self
    }

    pub fn assets(&self) -> &PromptAssets {
        &self.assets
    }

    pub fn budget_units(&self) -> usize {
        self.budget_units
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    pub fn usage(&self) -> Usage {
        *self.usage.lock().expect("usage lock")
    }

    /// One raw completion, served from cache when the same request was seen.
    pub fn complete(&self, stage: Stage, prompt: &str) -> Result<String, EngineError> {
        let req = Request {
            stage,
            model: self.model.clone(),
            temperature: self.temperature,
            prompt: prompt.to_string(),
        };
        let key = req.key();
        {
            let mut u = self.usage.lock().expect("usage lock");
            u.queries += 1;
            u.prompt_units += units(prompt) as u64;
        }
        if let Some(hit) = self.cache.get(&key) {
            let mut u = self.usage.lock().expect("usage lock");
            u.cache_hits += 1;
            u.response_units += units(&hit) as u64;
            return Ok(hit);
        }
        self.usage.lock().expect("usage lock").backend_calls += 1;
        let resp = self.backend.complete(&req)?;
        self.usage.lock().expect("usage lock").response_units += units(&resp) as u64;
        self.cache.put(&key, prompt, &resp);
        Ok(resp)
    }

    /// Query and parse the envelope plus the stage payload. Malformed
    /// replies are re-asked up to `retries` times with the parse error
    /// appended.
    pub fn query_with<T>(
        &self,
        prompt: &Prompt,
        retries: u32,
        parse: impl Fn(&Value) -> Result<T, String>,
    ) -> Result<(AnalysisResponse, T), EngineError> {
        let mut text = prompt.text.clone();
        let mut attempt = 0;
        loop {
            let raw = self.complete(prompt.stage, &text)?;
            let parsed = parse_envelope(&raw).and_then(|r| parse(&r.result).map(|t| (r, t)));
            match parsed {
                Ok(ok) => return Ok(ok),
                Err(reason) if attempt >= retries => {
                    return Err(EngineError::MalformedResponse { raw, reason });
                }
                Err(reason) => {
                    attempt += 1;
                    self.usage.lock().expect("usage lock").retries += 1;
                    text = reask(&prompt.text, &raw, &reason);
                }
            }
        }
    }

    pub fn query(&self, prompt: &Prompt) -> Result<AnalysisResponse, EngineError> {
        self.query_with(prompt, self.max_retries, |_| Ok(())).map(|(r, _)| r)
    }
}

fn reask(original: &str, raw: &str, reason: &str) -> String {
    format!(
        "{original}\n--- Previous answer ---\n{raw}\n--- Problem ---\n{reason}\nReformat your answer as a single JSON object {{\"result\": ..., \"unknowns\": [...]}} following the examples.\n"
    )
}
