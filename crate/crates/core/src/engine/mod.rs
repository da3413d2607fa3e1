//! Model-driven iterative analysis: prompts, backends, response envelopes
//! and the bounded recursion over unknown identifiers.

mod analyze;
mod backend;
mod client;
mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::indexer::lexer::is_c_identifier;

pub use analyze::{analyze, AnalysisCtx, StageOutput, StepInput, DEFAULT_MAX_ITER, DEFAULT_UNKNOWN_CAP};
pub use backend::{
    Backend, BackendError, HttpBackend, RateLimit, RecordBackend, ReplayBackend, Request, ScriptRule, ScriptedBackend,
    TranscriptEntry,
};
pub use client::{BackendConfig, BackendKind, LlmClient, ResponseCache, Usage, DEFAULT_TEMPERATURE};
pub use prompt::{
    gen_prompt, prompt_target, units, Asset, CodeBlock, Prompt, PromptAssets, PromptInput, DEFAULT_BUDGET_UNITS,
    NO_CODE, TRUNCATION_MARKER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    HandlerInit,
    IdentifierDeduction,
    TypeRecovery,
    DependencyAnalysis,
    TypeDefinition,
    Repair,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::HandlerInit,
        Stage::IdentifierDeduction,
        Stage::TypeRecovery,
        Stage::DependencyAnalysis,
        Stage::TypeDefinition,
        Stage::Repair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::HandlerInit => "handler_init",
            Stage::IdentifierDeduction => "identifier_deduction",
            Stage::TypeRecovery => "type_recovery",
            Stage::DependencyAnalysis => "dependency_analysis",
            Stage::TypeDefinition => "type_definition",
            Stage::Repair => "repair",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnknownKind {
    Function,
    Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownTarget {
    pub identifier: String,
    pub kind: UnknownKind,
    pub usage_info: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResponse {
    pub result: Value,
    pub unknowns: Vec<UnknownTarget>,
    pub raw_text: String,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no prompt asset for stage {0}")]
    AssetMissing(Stage),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed response after retries: {reason}")]
    MalformedResponse { raw: String, reason: String },
    #[error("no transcript for prompt {0}")]
    ReplayMiss(String),
}

impl From<BackendError> for EngineError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Unavailable(m) => EngineError::BackendUnavailable(m),
            BackendError::ReplayMiss(h) => EngineError::ReplayMiss(h),
        }
    }
}

/// Drop a surrounding Markdown code fence, if any.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map_or("", |(_, b)| b);
        body.trim_end().strip_suffix("```").unwrap_or(body).trim()
    } else {
        t
    }
}

/// Parse the `{"result": ..., "unknowns": [...]}` envelope.
pub fn parse_envelope(raw: &str) -> Result<AnalysisResponse, String> {
    let v: Value = serde_json::from_str(strip_fence(raw)).map_err(|e| format!("not a JSON object: {e}"))?;
    let Value::Object(mut obj) = v else {
        return Err("reply is not a JSON object".into());
    };
    let result = match obj.remove("result") {
        Some(Value::Null) | None => return Err("missing \"result\"".into()),
        Some(r) => r,
    };
    let mut unknowns: Vec<UnknownTarget> = Vec::new();
    match obj.remove("unknowns") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for it in items {
                let Value::Object(o) = it else {
                    return Err("unknowns entries must be objects".into());
                };
                let id = o
                    .get("identifier")
                    .and_then(Value::as_str)
                    .ok_or("unknown without \"identifier\"")?
                    .trim()
                    .to_string();
                if !is_c_identifier(&id) {
                    return Err(format!("unknown identifier {id:?} is not a C identifier"));
                }
                let kind = match o.get("kind").and_then(Value::as_str).unwrap_or("Function") {
                    "Function" | "function" => UnknownKind::Function,
                    "Type" | "type" => UnknownKind::Type,
                    k => return Err(format!("unknown kind {k:?}")),
                };
                let usage_info = o
                    .get("usage_info")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                if !unknowns.iter().any(|u| u.identifier == id) {
                    unknowns.push(UnknownTarget {
                        identifier: id,
                        kind,
                        usage_info,
                    });
                }
            }
        }
        Some(_) => return Err("\"unknowns\" must be an array".into()),
    }
    Ok(AnalysisResponse {
        result,
        unknowns,
        raw_text: raw.to_string(),
    })
}
