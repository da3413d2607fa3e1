//! Run configuration: defaults, then a TOML file, then flag overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use super::OrchestratorError;
use crate::engine::{BackendConfig, BackendKind, RateLimit, DEFAULT_MAX_ITER, DEFAULT_UNKNOWN_CAP};
use crate::indexer::{IndexerConfig, SourceCorpus, DEFAULT_TRIGGER_FIELDS};
use crate::pipeline::PipelineConfig;
use crate::repair::DEFAULT_MAX_ROUNDS;

/// Keys accepted in a config file. Relative paths are taken relative to the
/// file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub include_globs: Option<Vec<String>>,
    pub exclude_globs: Option<Vec<String>>,
    pub trigger_fields: Option<Vec<String>>,
    pub snippet_radius: Option<u32>,
    pub skip_unreadable: Option<bool>,
    pub backend: Option<String>,
    pub endpoint_url: Option<String>,
    pub transcripts: Option<PathBuf>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_retries: Option<u32>,
    pub max_in_flight: Option<usize>,
    pub requests_per_second: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub prompt_dir: Option<PathBuf>,
    pub max_iter: Option<u32>,
    pub unknown_cap: Option<usize>,
    pub max_rounds: Option<u32>,
    pub parallel: Option<usize>,
    pub out: Option<PathBuf>,
    pub handlers: Option<String>,
    pub resume: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, OrchestratorError> {
        toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.corpus, &mut cfg.transcripts, &mut cfg.prompt_dir, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Later values win field by field.
    pub fn overlay(self, o: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: o.$f.or(self.$f)),* } };
        }
        pick!(
            corpus,
            include_globs,
            exclude_globs,
            trigger_fields,
            snippet_radius,
            skip_unreadable,
            backend,
            endpoint_url,
            transcripts,
            model,
            temperature,
            max_retries,
            max_in_flight,
            requests_per_second,
            timeout_secs,
            prompt_dir,
            max_iter,
            unknown_cap,
            max_rounds,
            parallel,
            out,
            handlers,
            resume
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: SourceCorpus,
    pub indexer: IndexerConfig,
    pub trigger_fields: Vec<String>,
    pub backend: BackendConfig,
    pub prompt_dir: Option<PathBuf>,
    pub max_iter: u32,
    pub unknown_cap: usize,
    pub max_rounds: u32,
    pub parallel: usize,
    pub out: PathBuf,
    pub handlers: Option<regex::Regex>,
    pub resume: bool,
}

impl RunConfig {
    /// Build from `file` (already merged with flag overrides) over defaults.
    pub fn from_file(f: ConfigFile) -> Result<Self, OrchestratorError> {
        let bad = |m: String| OrchestratorError::Config(m);
        let mut corpus = SourceCorpus::new(f.corpus.unwrap_or_else(|| PathBuf::from(".")));
        if let Some(g) = f.include_globs {
            corpus.include_globs = g;
        }
        if let Some(g) = f.exclude_globs {
            corpus.exclude_globs = g;
        }
        let mut indexer = IndexerConfig::default();
        if let Some(r) = f.snippet_radius {
            indexer.snippet_radius = r;
        }
        if let Some(s) = f.skip_unreadable {
            indexer.skip_unreadable = s;
        }
        let trigger_fields = f
            .trigger_fields
            .unwrap_or_else(|| DEFAULT_TRIGGER_FIELDS.iter().map(|s| s.to_string()).collect());
        if trigger_fields.is_empty() {
            return Err(bad("trigger_fields must not be empty".into()));
        }

        let out = f.out.unwrap_or_else(|| PathBuf::from("out"));
        let mut backend = BackendConfig::default();
        if let Some(k) = f.backend {
            backend.kind = BackendKind::parse(&k).ok_or_else(|| bad(format!("unknown backend {k:?}")))?;
        }
        if let Some(u) = f.endpoint_url {
            backend.endpoint_url = u;
        }
        if let Some(m) = f.model {
            backend.model_name = m;
        }
        if let Some(t) = f.temperature {
            backend.temperature = t;
        }
        if let Some(r) = f.max_retries {
            backend.max_retries = r;
        }
        let mut limit = RateLimit::default();
        if let Some(n) = f.max_in_flight {
            limit.max_in_flight = n.max(1);
        }
        if let Some(r) = f.requests_per_second {
            limit.requests_per_second = r;
        }
        backend.rate_limit = limit;
        if let Some(s) = f.timeout_secs {
            backend.timeout = Duration::from_secs(s);
        }
        backend.transcripts = f.transcripts;
        backend.cache_dir = Some(out.join("cache"));
        if !(0.0..=2.0).contains(&backend.temperature) {
            return Err(bad(format!("temperature {} is outside [0, 2]", backend.temperature)));
        }

        let max_iter = f.max_iter.unwrap_or(DEFAULT_MAX_ITER);
        if max_iter < 1 {
            return Err(bad("max_iter must be at least 1".into()));
        }
        let handlers = f
            .handlers
            .map(|h| regex::Regex::new(&h).map_err(|e| bad(format!("handler filter: {e}"))))
            .transpose()?;
        Ok(Self {
            corpus,
            indexer,
            trigger_fields,
            backend,
            prompt_dir: f.prompt_dir,
            max_iter,
            unknown_cap: f.unknown_cap.unwrap_or(DEFAULT_UNKNOWN_CAP),
            max_rounds: f.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS),
            parallel: f.parallel.unwrap_or(1).max(1),
            out,
            handlers,
            resume: f.resume.unwrap_or(false),
        })
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            max_iter: self.max_iter,
            unknown_cap: self.unknown_cap,
            trigger_fields: self.trigger_fields.clone(),
            parallel: self.parallel,
            state_dir: Some(self.out.join("state")),
            resume: self.resume,
        }
    }
}
