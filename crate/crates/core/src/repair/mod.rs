//! Validate, repair one declaration at a time, prune what cannot be fixed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{gen_prompt, CodeBlock, EngineError, LlmClient, PromptInput, Stage, StageOutput, UnknownKind};
use crate::indexer::DefinitionDatabase;
use crate::pipeline::{needed_names, DefinitionPayload};
use crate::syzlang::{
    decl_at_line, parse_spec, render_flag_set, render_resource, render_syscall, render_typedef, render_with_lines,
    validate_with, SpecFile, ValidateOptions, ValidationError, BUILTIN_RESOURCES,
};

pub const DEFAULT_MAX_ROUNDS: u32 = 3;

/// Hard cap on validate/repair iterations of one spec.
const MAX_PASSES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairTask {
    pub target: String,
    pub current_text: String,
    pub errors: Vec<ValidationError>,
    pub related_code: Vec<CodeBlock>,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTarget {
    pub target: String,
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedTarget {
    pub target: String,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub fixed: Vec<FixedTarget>,
    pub pruned: Vec<PrunedTarget>,
    pub final_error_count: usize,
    /// Repair-stage queries.
    pub queries: u64,
    /// Nested type-definition queries made while repairing.
    pub type_queries: u64,
}

/// Repair outcome plus the removed declarations, verbatim.
#[derive(Debug, Clone, Default)]
pub struct RepairResult {
    pub spec: SpecFile,
    pub report: RepairReport,
    pub pruned_text: String,
}

/// Group errors by the declaration they belong to. Errors without a target
/// that names a declaration go to the declaration at their line in the
/// canonical rendering.
pub fn match_errors(spec: &SpecFile, errors: &[ValidationError]) -> BTreeMap<String, Vec<ValidationError>> {
    let (_, lines) = render_with_lines(spec);
    let mut out: BTreeMap<String, Vec<ValidationError>> = BTreeMap::new();
    for e in errors {
        let key = if !e.target.is_empty() && spec.decl_kind(&e.target).is_some() {
            Some(e.target.clone())
        } else {
            decl_at_line(&lines, e.location.line).map(|d| d.name.clone())
        };
        match key {
            Some(k) => out.entry(k).or_default().push(e.clone()),
            None => log::warn!("validation error matches no declaration: {e}"),
        }
    }
    out
}

/// Every declaration named `target`, rendered.
pub fn render_target(spec: &SpecFile, target: &str) -> String {
    let mut s = String::new();
    for r in spec.resources.iter().filter(|r| r.name == target) {
        s.push_str(&render_resource(r));
    }
    for c in spec.syscalls.iter().filter(|c| c.full_name() == target) {
        s.push_str(&render_syscall(c));
    }
    for t in spec.types.iter().filter(|t| t.name == target) {
        s.push_str(&render_typedef(t));
    }
    for f in spec.flag_sets.iter().filter(|f| f.name == target) {
        s.push_str(&render_flag_set(f));
    }
    s
}

/// Replace every declaration named `target` with `frag`'s declarations.
/// Replacements take the position of the first removed declaration of the
/// same kind; other new declarations are appended.
pub fn substitute(spec: &SpecFile, target: &str, frag: &SpecFile) -> SpecFile {
    fn splice<T: Clone>(
        list: &mut Vec<T>,
        is_target: impl Fn(&T) -> bool,
        new: &[T],
        exists: impl Fn(&[T], &T) -> bool,
    ) {
        let pos = list.iter().position(&is_target);
        list.retain(|x| !is_target(x));
        let fresh: Vec<T> = new.iter().filter(|x| !exists(list, x)).cloned().collect();
        let at = pos.unwrap_or(list.len()).min(list.len());
        list.splice(at..at, fresh);
    }
    let mut out = spec.clone();
    splice(
        &mut out.resources,
        |r| r.name == target,
        &frag.resources,
        |l, x| l.iter().any(|y| y.name == x.name),
    );
    splice(
        &mut out.syscalls,
        |c| c.full_name() == target,
        &frag.syscalls,
        |l, x| l.iter().any(|y| y.full_name() == x.full_name()),
    );
    splice(
        &mut out.types,
        |t| t.name == target,
        &frag.types,
        |l, x| l.iter().any(|y| y.name == x.name),
    );
    splice(
        &mut out.flag_sets,
        |f| f.name == target,
        &frag.flag_sets,
        |l, x| l.iter().any(|y| y.name == x.name),
    );
    // carry the generator-side fields of a replaced syscall
    for c in &mut out.syscalls {
        if c.full_name() == target && c.source_handler.is_none() {
            c.source_handler = spec
                .syscalls
                .iter()
                .find(|o| o.full_name() == target)
                .and_then(|o| o.source_handler.clone());
        }
    }
    out.link_resources();
    out
}

/// Remove `targets` and, transitively, every type that embeds or points to
/// a removed type and every syscall that mentions a removed name.
pub fn prune(spec: &SpecFile, targets: &BTreeSet<String>) -> (SpecFile, Vec<String>) {
    let mut gone: BTreeSet<String> = targets.clone();
    loop {
        let before = gone.len();
        for t in &spec.types {
            if gone.contains(&t.name) {
                continue;
            }
            let mut need = BTreeSet::new();
            for f in &t.fields {
                needed_names(&f.ty, &mut need);
            }
            if need.iter().any(|n| gone.contains(n)) {
                gone.insert(t.name.clone());
            }
        }
        if gone.len() == before {
            break;
        }
    }
    let mut removed = Vec::new();
    let mut out = spec.clone();
    out.resources.retain(|r| {
        let keep = !gone.contains(&r.name);
        if !keep {
            removed.push(render_resource(r));
        }
        keep
    });
    out.syscalls.retain(|c| {
        let mut need = BTreeSet::new();
        for p in &c.params {
            needed_names(&p.ty, &mut need);
        }
        need.extend(c.ret.iter().cloned());
        let keep = !gone.contains(&c.full_name()) && !need.iter().any(|n| gone.contains(n));
        if !keep {
            removed.push(render_syscall(c));
        }
        keep
    });
    out.types.retain(|t| {
        let keep = !gone.contains(&t.name);
        if !keep {
            removed.push(render_typedef(t));
        }
        keep
    });
    out.flag_sets.retain(|f| {
        let keep = !gone.contains(&f.name);
        if !keep {
            removed.push(render_flag_set(f));
        }
        keep
    });
    out.link_resources();
    (out, removed)
}

#[derive(Debug, Clone, Default)]
struct ReplacementPayload {
    fragment: SpecFile,
}

impl StageOutput for ReplacementPayload {
    fn from_result(v: &Value) -> Result<Self, String> {
        let text = v
            .get("replacement")
            .and_then(Value::as_str)
            .ok_or("missing \"replacement\" text")?;
        let fragment =
            parse_spec(&format!("{}\n", text.trim_end())).map_err(|e| format!("replacement does not parse: {e}"))?;
        if fragment.is_empty() {
            return Err("replacement is empty".into());
        }
        Ok(Self { fragment })
    }

    fn merge(&mut self, _child: Self) {}
}

pub struct RepairCtx<'a> {
    pub client: &'a LlmClient,
    pub db: &'a DefinitionDatabase,
    pub opts: ValidateOptions<'a>,
    pub max_rounds: u32,
}

impl<'a> RepairCtx<'a> {
    pub fn new(client: &'a LlmClient, db: &'a DefinitionDatabase, opts: ValidateOptions<'a>) -> Self {
        Self {
            client,
            db,
            opts,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

/// C source behind a declaration: the struct of the same name for types,
/// the command macro and argument structs for syscalls.
pub fn related_code(spec: &SpecFile, db: &DefinitionDatabase, target: &str) -> Vec<CodeBlock> {
    let mut names = vec![target.to_string()];
    if let Some(c) = spec.syscall(target) {
        names = c.identifier_const.iter().cloned().collect();
        let mut need = BTreeSet::new();
        for p in &c.params {
            needed_names(&p.ty, &mut need);
        }
        names.extend(need);
    }
    let mut out = Vec::new();
    for n in names {
        out.extend(db.extract_code(&n).iter().map(CodeBlock::from_definition));
    }
    out
}

/// Errors keyed to anything other than `target`.
fn others(spec: &SpecFile, errs: &[ValidationError], target: &str) -> usize {
    match_errors(spec, errs)
        .into_iter()
        .filter(|(k, _)| k != target)
        .map(|(_, v)| v.len())
        .sum()
}

fn undefined_names(spec: &SpecFile, opts: &ValidateOptions<'_>) -> BTreeSet<String> {
    let mut need = BTreeSet::new();
    for c in &spec.syscalls {
        for p in &c.params {
            needed_names(&p.ty, &mut need);
        }
    }
    for t in &spec.types {
        for f in &t.fields {
            needed_names(&f.ty, &mut need);
        }
    }
    need.retain(|n| {
        spec.decl_kind(n).is_none()
            && !BUILTIN_RESOURCES.contains(&n.as_str())
            && !opts.builtin_resources.contains(n)
            && !opts.external_resources.contains_key(n)
    });
    need
}

#[derive(Debug)]
pub enum RepairAttempt {
    /// The spec with the replacement substituted.
    Accepted(SpecFile),
    /// Replacement text and what was still wrong with it.
    Rejected { text: String, errors: Vec<ValidationError> },
    /// No usable reply.
    NoReply(String),
}

/// One repair round for one declaration. The replacement is accepted when
/// the target validates clean in context and no other declaration gains
/// errors.
pub fn repair_description(
    task: &RepairTask,
    spec: &SpecFile,
    ctx: &RepairCtx<'_>,
    report: &mut RepairReport,
) -> Result<RepairAttempt, EngineError> {
    let errors: Vec<String> = task
        .errors
        .iter()
        .map(|e| format!("- {}: {}", e.code, e.message))
        .collect();
    let usage = [CodeBlock::note(&format!(
        "Declaration:\n{}\nErrors:\n{}",
        task.current_text.trim_end(),
        errors.join("\n")
    ))];
    let prior = (task.round > 1).then(|| format!("attempt {} of {}", task.round, ctx.max_rounds));
    let prompt = gen_prompt(
        ctx.client.assets(),
        Stage::Repair,
        &PromptInput {
            target: &task.target,
            related_code: &task.related_code,
            usage_info: &usage,
            prior_findings: prior.as_deref(),
        },
        ctx.client.budget_units(),
    )?;
    report.queries += 1;
    let (resp, payload) = match ctx.client.query_with(&prompt, 0, ReplacementPayload::from_result) {
        Ok(r) => r,
        Err(EngineError::MalformedResponse { reason, .. }) => return Ok(RepairAttempt::NoReply(reason)),
        Err(e) => return Err(e),
    };
    let mut frag = payload.fragment;
    if frag.decl_kind(&task.target).is_none() {
        return Ok(RepairAttempt::NoReply(format!(
            "replacement does not declare {}",
            task.target
        )));
    }

    let before = validate_with(spec, &ctx.opts);
    let mut candidate = substitute(spec, &task.target, &frag);
    let missing = undefined_names(&candidate, &ctx.opts);
    let asked: Vec<String> = resp
        .unknowns
        .iter()
        .filter(|u| u.kind == UnknownKind::Type && missing.contains(&u.identifier))
        .map(|u| u.identifier.clone())
        .chain(missing.iter().cloned())
        .collect();
    if let Some(name) = asked.first() {
        let code: Vec<CodeBlock> = ctx
            .db
            .extract_code(name)
            .iter()
            .map(CodeBlock::from_definition)
            .collect();
        let p = gen_prompt(
            ctx.client.assets(),
            Stage::TypeDefinition,
            &PromptInput {
                target: name,
                related_code: &code,
                usage_info: &[],
                prior_findings: None,
            },
            ctx.client.budget_units(),
        )?;
        report.type_queries += 1;
        match ctx.client.query_with(&p, 0, DefinitionPayload::from_result) {
            Ok((_, defs)) => {
                frag.types.extend(defs.types);
                frag.flag_sets.extend(defs.flag_sets);
                candidate = substitute(spec, &task.target, &frag);
            }
            Err(EngineError::MalformedResponse { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    let after = validate_with(&candidate, &ctx.opts);
    let target_errs: Vec<ValidationError> = match_errors(&candidate, &after)
        .remove(&task.target)
        .unwrap_or_default();
    if target_errs.is_empty() && others(&candidate, &after, &task.target) <= others(spec, &before, &task.target) {
        return Ok(RepairAttempt::Accepted(candidate));
    }
    let errors = if target_errs.is_empty() { after } else { target_errs };
    Ok(RepairAttempt::Rejected {
        text: render_target(&candidate, &task.target),
        errors,
    })
}

/// Validate and repair until clean; declarations still failing after
/// `max_rounds` attempts are pruned. The result always validates clean.
pub fn repair_spec(spec: &SpecFile, ctx: &RepairCtx<'_>) -> Result<RepairResult, EngineError> {
    let mut spec = spec.clone();
    spec.link_resources();
    let mut report = RepairReport::default();
    let mut rounds: BTreeMap<String, u32> = BTreeMap::new();
    let mut feedback: BTreeMap<String, (String, Vec<ValidationError>)> = BTreeMap::new();
    let mut fixed: BTreeMap<String, u32> = BTreeMap::new();
    let mut pruned: Vec<PrunedTarget> = Vec::new();
    let mut pruned_text = String::new();

    for pass in 0.. {
        let errs = validate_with(&spec, &ctx.opts);
        if errs.is_empty() {
            break;
        }
        let groups = match_errors(&spec, &errs);
        let next = groups
            .iter()
            .filter(|_| pass < MAX_PASSES)
            .find(|(t, _)| rounds.get(*t).copied().unwrap_or(0) < ctx.max_rounds);
        if let Some((target, terrs)) = next {
            let round = rounds.entry(target.clone()).or_insert(0);
            *round += 1;
            let (text, errors) = match feedback.remove(target) {
                Some(fb) => fb,
                None => (render_target(&spec, target), terrs.clone()),
            };
            let task = RepairTask {
                target: target.clone(),
                current_text: text,
                errors,
                related_code: related_code(&spec, ctx.db, target),
                round: *round,
            };
            match repair_description(&task, &spec, ctx, &mut report)? {
                RepairAttempt::Accepted(s) => {
                    log::info!("repaired {} in round {}", task.target, task.round);
                    fixed.insert(task.target.clone(), task.round);
                    spec = s;
                }
                RepairAttempt::Rejected { text, errors } => {
                    feedback.insert(task.target.clone(), (text, errors));
                }
                RepairAttempt::NoReply(why) => {
                    log::info!("no repair for {} in round {}: {why}", task.target, task.round);
                }
            }
            continue;
        }
        let mut targets: BTreeSet<String> = groups.keys().cloned().collect();
        if targets.is_empty() {
            // errors that map to no declaration: nothing left to keep
            targets = spec
                .syscalls
                .iter()
                .map(|c| c.full_name())
                .chain(spec.types.iter().map(|t| t.name.clone()))
                .chain(spec.resources.iter().map(|r| r.name.clone()))
                .chain(spec.flag_sets.iter().map(|f| f.name.clone()))
                .collect();
            if targets.is_empty() {
                break;
            }
        }
        for t in &targets {
            let errors = groups
                .get(t)
                .map(|v| v.iter().map(|e| format!("{}: {}", e.code, e.message)).collect())
                .unwrap_or_default();
            fixed.remove(t);
            pruned.push(PrunedTarget {
                target: t.clone(),
                errors,
            });
        }
        let (s, removed) = prune(&spec, &targets);
        for r in removed {
            pruned_text.push_str(&r);
        }
        spec = s;
    }

    report.fixed = fixed
        .into_iter()
        .filter(|(t, _)| !pruned.iter().any(|p| &p.target == t))
        .map(|(target, rounds)| FixedTarget { target, rounds })
        .collect();
    report.pruned = pruned;
    report.final_error_count = validate_with(&spec, &ctx.opts).len();
    Ok(RepairResult {
        spec,
        report,
        pruned_text,
    })
}
