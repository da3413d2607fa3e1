//! Bounded recursive analysis over unknown identifiers.

use std::collections::BTreeSet;

use serde_json::Value;

use super::client::LlmClient;
use super::prompt::{gen_prompt, units, CodeBlock, PromptInput};
use super::{EngineError, Stage, UnknownTarget};
use crate::indexer::DefinitionDatabase;

pub const DEFAULT_MAX_ITER: u32 = 5;
pub const DEFAULT_UNKNOWN_CAP: usize = 8;

/// Stage payload that can be parsed from a reply and merged with the
/// payloads of deeper steps.
pub trait StageOutput: Default + Clone {
    fn from_result(v: &Value) -> Result<Self, String>;

    fn merge(&mut self, child: Self);

    /// Record `u` in the payload instead of following it. Returning `true`
    /// stops the recursion for that unknown.
    fn defer(&mut self, _u: &UnknownTarget) -> bool {
        false
    }

    /// Text passed to deeper steps as prior findings.
    fn summary(&self) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepInput {
    pub target: String,
    pub code: Vec<CodeBlock>,
    pub usage: Vec<CodeBlock>,
    pub prior: Option<String>,
}

pub struct AnalysisCtx<'a> {
    pub db: &'a DefinitionDatabase,
    pub client: &'a LlmClient,
    pub max_iter: u32,
    pub unknown_cap: usize,
    /// Re-asks allowed per step on malformed replies.
    pub retries: u32,
    /// Identifiers already analysed in the current scope.
    pub visited: BTreeSet<String>,
    pub notes: Vec<String>,
    /// Analysis steps that reached the client.
    pub queries: u64,
    pub prompt_units: u64,
}

impl<'a> AnalysisCtx<'a> {
    pub fn new(db: &'a DefinitionDatabase, client: &'a LlmClient) -> Self {
        Self {
            db,
            client,
            max_iter: DEFAULT_MAX_ITER,
            unknown_cap: DEFAULT_UNKNOWN_CAP,
            retries: client.max_retries(),
            visited: BTreeSet::new(),
            notes: Vec::new(),
            queries: 0,
            prompt_units: 0,
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        let s = s.into();
        log::debug!("{s}");
        self.notes.push(s);
    }

    /// Code blocks for every definition of `identifier`, or a placeholder
    /// note when the indexer has none.
    pub fn code_for(&mut self, identifier: &str) -> Vec<CodeBlock> {
        let defs = self.db.extract_code(identifier);
        if defs.is_empty() {
            self.note(format!("definition not found: {identifier}"));
            return vec![CodeBlock::note(&format!("/* definition of {identifier} not found */"))];
        }
        defs.iter().map(CodeBlock::from_definition).collect()
    }
}

/// One step of the recursion. `step` starts at 1; steps beyond `max_iter`
/// return the empty payload without querying.
pub fn analyze<T: StageOutput>(
    ctx: &mut AnalysisCtx<'_>,
    stage: Stage,
    input: &StepInput,
    step: u32,
) -> Result<T, EngineError> {
    if step > ctx.max_iter {
        return Ok(T::default());
    }
    if step == 1 {
        ctx.visited.insert(input.target.clone());
    }
    let prompt = gen_prompt(
        ctx.client.assets(),
        stage,
        &PromptInput {
            target: &input.target,
            related_code: &input.code,
            usage_info: &input.usage,
            prior_findings: input.prior.as_deref(),
        },
        ctx.client.budget_units(),
    )?;
    ctx.queries += 1;
    ctx.prompt_units += units(&prompt.text) as u64;
    let (resp, mut result) = match ctx.client.query_with(&prompt, ctx.retries, T::from_result) {
        Ok(r) => r,
        Err(EngineError::MalformedResponse { reason, .. }) => {
            ctx.note(format!(
                "{stage} step {step} on {}: malformed reply dropped ({reason})",
                input.target
            ));
            return Ok(T::default());
        }
        Err(e) => return Err(e),
    };

    let mut unknowns = resp.unknowns;
    if unknowns.len() > ctx.unknown_cap {
        let dropped: Vec<String> = unknowns.drain(ctx.unknown_cap..).map(|u| u.identifier).collect();
        ctx.note(format!(
            "{stage} on {}: not following {}",
            input.target,
            dropped.join(", ")
        ));
    }
    for u in unknowns {
        if result.defer(&u) {
            continue;
        }
        if !ctx.visited.insert(u.identifier.clone()) {
            continue;
        }
        let code = ctx.code_for(&u.identifier);
        let mut usage = Vec::new();
        if !u.usage_info.is_empty() {
            usage.push(CodeBlock::note(&format!(
                "{} (from {}): {}",
                u.identifier, input.target, u.usage_info
            )));
        }
        let child_input = StepInput {
            target: u.identifier.clone(),
            code,
            usage,
            prior: result.summary(),
        };
        let child: T = analyze(ctx, stage, &child_input, step + 1)?;
        result.merge(child);
    }
    Ok(result)
}
