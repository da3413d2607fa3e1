//! Commands behind the CLI and the end-to-end run.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Backend, EngineError, LlmClient, PromptAssets, ResponseCache, Usage};
use crate::indexer::{
    find_operation_handlers, index_corpus, DefinitionDatabase, FieldLayouts, HandlerRegistration, IndexError,
};
use crate::pipeline::{link_and_assemble, run_stages, write_atomic, HandlerOutput, HandlerRun};
use crate::repair::{repair_spec, FixedTarget, PrunedTarget, RepairCtx, RepairReport};
use crate::syzlang::{
    parse_const_file, parse_spec, render_const_file, render_spec, resolve_with, validate_with, ErrorCode, Location,
    SpecFile, ValidateOptions, ValidationError,
};

pub use config::{ConfigFile, RunConfig};
pub use report::{Counts, HandlerReport, Report, Totals, REPORT_SCHEMA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_NO_HANDLERS: i32 = 3;

/// Outer validate/repair passes across a run's specs.
const RUN_REPAIR_PASSES: usize = 3;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl OrchestratorError {
    pub fn exit_code(&self) -> i32 {
        EXIT_ERROR
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), OrchestratorError> {
    write_atomic(path, text.as_bytes()).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String, OrchestratorError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct HandlerList {
    schema: u32,
    handlers: Vec<HandlerRegistration>,
}

#[derive(Debug)]
pub struct IndexSummary {
    pub db: DefinitionDatabase,
    pub handlers: Vec<HandlerRegistration>,
    pub warnings: Vec<String>,
}

impl IndexSummary {
    pub fn describe(&self) -> String {
        use crate::indexer::DefKind::*;
        let c = |k| self.db.count_of(k);
        format!(
            "indexed {} file(s): {} function(s), {} struct(s), {} union(s), {} enum(s), {} macro(s), {} global(s); {} handler(s); {} warning(s)",
            self.db.files().count(),
            c(Function),
            c(Struct),
            c(Union),
            c(Enum),
            c(Macro),
            c(GlobalVar),
            self.handlers.len(),
            self.warnings.len()
        )
    }
}

/// Index the corpus and write `defs.json` and `handlers.json`.
pub fn cmd_index(cfg: &RunConfig) -> Result<IndexSummary, OrchestratorError> {
    let out = index_corpus(&cfg.corpus, &cfg.indexer)?;
    let handlers = find_operation_handlers(&out.db, &cfg.trigger_fields, &FieldLayouts::default());
    write(&cfg.out.join("defs.json"), &out.db.to_json())?;
    let list = HandlerList {
        schema: 1,
        handlers: handlers.clone(),
    };
    write(
        &cfg.out.join("handlers.json"),
        &serde_json::to_string_pretty(&list).expect("handler list serializes"),
    )?;
    Ok(IndexSummary {
        db: out.db,
        handlers,
        warnings: out.warnings.iter().map(ToString::to_string).collect(),
    })
}

/// Previously written index artifacts, or a fresh index.
pub fn load_or_index(cfg: &RunConfig) -> Result<IndexSummary, OrchestratorError> {
    let defs = cfg.out.join("defs.json");
    let hl = cfg.out.join("handlers.json");
    if defs.is_file() && hl.is_file() {
        let db = DefinitionDatabase::from_json(&read(&defs)?).map_err(|e| io_err(&defs, e))?;
        let list: HandlerList = serde_json::from_str(&read(&hl)?).map_err(|e| io_err(&hl, e))?;
        return Ok(IndexSummary {
            db,
            handlers: list.handlers,
            warnings: Vec::new(),
        });
    }
    cmd_index(cfg)
}

pub fn load_defs(path: &Path) -> Result<DefinitionDatabase, OrchestratorError> {
    DefinitionDatabase::from_json(&read(path)?).map_err(|e| io_err(path, e))
}

pub fn select_handlers(cfg: &RunConfig, all: &[HandlerRegistration]) -> Vec<HandlerRegistration> {
    all.iter()
        .filter(|h| cfg.handlers.as_ref().is_none_or(|re| re.is_match(&h.struct_name)))
        .cloned()
        .collect()
}

pub fn build_client(cfg: &RunConfig) -> Result<LlmClient, OrchestratorError> {
    Ok(configure_client(cfg, LlmClient::from_config(&cfg.backend)?))
}

/// A client over `backend` with the model settings, cache and prompts of
/// `cfg`.
pub fn client_with_backend(cfg: &RunConfig, backend: Box<dyn Backend>) -> LlmClient {
    let b = &cfg.backend;
    let client = LlmClient::new(backend)
        .with_model(&b.model_name, b.temperature)
        .with_max_retries(b.max_retries)
        .with_cache(ResponseCache::new(b.cache_dir.clone()));
    configure_client(cfg, client)
}

fn configure_client(cfg: &RunConfig, mut client: LlmClient) -> LlmClient {
    if let Some(dir) = &cfg.prompt_dir {
        client = client.with_assets(PromptAssets::load_dir(dir));
    }
    client
}

fn spec_rel(key: &str) -> String {
    format!("specs/{key}.txt")
}

/// Validation options for `key` with every other spec of the run as
/// externally declared resources.
fn run_opts<'a>(db: &'a DefinitionDatabase, specs: &BTreeMap<String, SpecFile>, key: &str) -> ValidateOptions<'a> {
    ValidateOptions::with_db(db)
        .file(&spec_rel(key))
        .externals(specs.iter().filter(|(k, _)| k.as_str() != key).map(|(_, s)| s))
}

fn handler_report(run: &HandlerRun, out: &HandlerOutput) -> HandlerReport {
    let st = &run.state;
    let ids = st.identifiers.as_ref().map_or(0, |i| i.findings.len());
    let types = st.types.as_ref().map_or(0, |t| t.types.len());
    let deps = st.dependencies.as_ref().map_or(0, Vec::len);
    let mut unresolved: Vec<String> = st.types.iter().flat_map(|t| t.unresolved.iter().cloned()).collect();
    for f in st.types.iter().flat_map(|t| t.findings.iter()) {
        if let Some(u) = &f.unresolved {
            unresolved.push(format!("{}: {u}", f.identifier));
        }
    }
    if let Some(i) = &st.identifiers {
        for f in i.findings.iter().filter(|f| !f.resolved) {
            let h = f.handling_function.as_deref().unwrap_or("?");
            unresolved.push(format!("{}: handling function {h} not found", f.const_name));
        }
    }
    let mut notes = st.notes.clone();
    notes.extend(out.notes.iter().cloned());
    HandlerReport {
        handler: run.registration.struct_name.clone(),
        key: run.key.clone(),
        file: run.registration.file.clone(),
        line: run.registration.line,
        kind: run.registration.kind,
        ok: out.error.is_none(),
        error: out.error.as_ref().map(ToString::to_string),
        stages_completed: st.completed(),
        init: out.init.clone(),
        handle: out.handle.clone(),
        counts: Counts {
            identifiers: ids,
            types,
            dependencies: deps,
            syscalls: out.spec.as_ref().map_or(0, |s| s.syscalls.len()),
        },
        unresolved,
        notes,
        queries: st.queries,
        prompt_units: st.prompt_units,
        spec: out.spec.as_ref().map(|_| spec_rel(&out.key)),
        validation_errors: None,
        clean: false,
        repair: None,
    }
}

fn reset_dir(dir: &Path) -> Result<(), OrchestratorError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(())
}

fn write_spec(
    cfg: &RunConfig,
    db: &DefinitionDatabase,
    key: &str,
    spec: &SpecFile,
    others: &BTreeMap<String, SpecFile>,
) -> Result<(), OrchestratorError> {
    let opts = run_opts(db, others, key);
    let (resolved, _) = resolve_with(spec, &opts);
    let dir = cfg.out.join("specs");
    write(&dir.join(format!("{key}.txt")), &render_spec(spec))?;
    write(
        &dir.join(format!("{key}.const")),
        &render_const_file(&resolved.constants),
    )?;
    Ok(())
}

/// Outcome of `generate` or `run`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub exit_code: i32,
    pub usage: Usage,
    /// Final spec per handler key.
    pub specs: BTreeMap<String, SpecFile>,
}

struct Generated {
    found: usize,
    runs: Vec<HandlerRun>,
    outputs: Vec<HandlerOutput>,
    collisions: Vec<String>,
    db: DefinitionDatabase,
    client: LlmClient,
}

fn generate(cfg: &RunConfig, idx: IndexSummary, client: LlmClient) -> Result<Generated, OrchestratorError> {
    let selected = select_handlers(cfg, &idx.handlers);
    let runs = run_stages(&idx.db, &selected, &client, &cfg.pipeline());
    let link = link_and_assemble(&idx.db, &runs);
    Ok(Generated {
        found: idx.handlers.len(),
        runs,
        outputs: link.outputs,
        collisions: link.collisions,
        db: idx.db,
        client,
    })
}

/// Stages and assembly for every selected handler; specs are written
/// unrepaired.
pub fn cmd_generate(cfg: &RunConfig) -> Result<RunOutcome, OrchestratorError> {
    cmd_generate_with(cfg, build_client(cfg)?)
}

pub fn cmd_generate_with(cfg: &RunConfig, client: LlmClient) -> Result<RunOutcome, OrchestratorError> {
    let idx = load_or_index(cfg)?;
    reset_dir(&cfg.out.join("specs"))?;
    let g = generate(cfg, idx, client)?;
    let specs: BTreeMap<String, SpecFile> = g
        .outputs
        .iter()
        .filter_map(|o| o.spec.clone().map(|s| (o.key.clone(), s)))
        .collect();
    let mut reports = Vec::new();
    for (run, out) in g.runs.iter().zip(&g.outputs) {
        let mut h = handler_report(run, out);
        if let Some(spec) = &out.spec {
            let n = validate_with(spec, &run_opts(&g.db, &specs, &out.key)).len();
            h.validation_errors = Some(n);
            h.clean = n == 0;
            write_spec(cfg, &g.db, &out.key, spec, &specs)?;
        }
        reports.push(h);
    }
    let report = Report::new("generate", g.found, reports, g.collisions);
    write_report(cfg, &report)?;
    let all_failed = !report.handlers.is_empty() && report.totals.failed == report.handlers.len();
    Ok(RunOutcome {
        exit_code: if all_failed { EXIT_FAILED } else { EXIT_OK },
        usage: g.client.usage(),
        report,
        specs,
    })
}

fn write_report(cfg: &RunConfig, r: &Report) -> Result<(), OrchestratorError> {
    write(
        &cfg.out.join("report.json"),
        &serde_json::to_string_pretty(r).expect("report serializes"),
    )
}

fn merge_repair(into: &mut RepairReport, r: RepairReport) {
    for f in r.fixed {
        into.fixed.retain(|x| x.target != f.target);
        into.fixed.push(f);
    }
    for p in r.pruned {
        into.fixed.retain(|x: &FixedTarget| x.target != p.target);
        if !into.pruned.iter().any(|x: &PrunedTarget| x.target == p.target) {
            into.pruned.push(p);
        }
    }
    into.fixed.sort_by(|a, b| a.target.cmp(&b.target));
    into.final_error_count = r.final_error_count;
    into.queries += r.queries;
    into.type_queries += r.type_queries;
}

/// Repair reports and pruned-declaration text, both keyed by spec.
pub type RepairOutcome = (BTreeMap<String, RepairReport>, BTreeMap<String, String>);

/// Repair every spec against the others until the set is stable.
pub fn repair_all(
    db: &DefinitionDatabase,
    client: &LlmClient,
    max_rounds: u32,
    specs: &mut BTreeMap<String, SpecFile>,
) -> Result<RepairOutcome, EngineError> {
    let mut reports: BTreeMap<String, RepairReport> = BTreeMap::new();
    let mut pruned: BTreeMap<String, String> = BTreeMap::new();
    for _ in 0..RUN_REPAIR_PASSES {
        let mut changed = false;
        let keys: Vec<String> = specs.keys().cloned().collect();
        for key in keys {
            let opts = run_opts(db, specs, &key);
            let spec = &specs[&key];
            let dirty = !validate_with(spec, &opts).is_empty();
            let entry = reports.entry(key.clone()).or_default();
            if !dirty {
                continue;
            }
            let mut ctx = RepairCtx::new(client, db, opts);
            ctx.max_rounds = max_rounds;
            let r = repair_spec(spec, &ctx)?;
            merge_repair(entry, r.report);
            pruned.entry(key.clone()).or_default().push_str(&r.pruned_text);
            specs.insert(key, r.spec);
            changed = true;
        }
        if !changed {
            break;
        }
    }
    for (key, r) in reports.iter_mut() {
        r.final_error_count = validate_with(&specs[key], &run_opts(db, specs, key)).len();
    }
    pruned.retain(|_, t| !t.is_empty());
    Ok((reports, pruned))
}

/// Index, generate, validate, repair; write final specs and the report.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome, OrchestratorError> {
    cmd_run_with(cfg, build_client(cfg)?)
}

pub fn cmd_run_with(cfg: &RunConfig, client: LlmClient) -> Result<RunOutcome, OrchestratorError> {
    let idx = cmd_index(cfg)?;
    if select_handlers(cfg, &idx.handlers).is_empty() {
        let report = Report::new("run", idx.handlers.len(), Vec::new(), Vec::new());
        write_report(cfg, &report)?;
        return Ok(RunOutcome {
            report,
            exit_code: EXIT_NO_HANDLERS,
            usage: Usage::default(),
            specs: BTreeMap::new(),
        });
    }
    reset_dir(&cfg.out.join("specs"))?;
    reset_dir(&cfg.out.join("pruned"))?;
    let g = generate(cfg, idx, client)?;
    let mut specs: BTreeMap<String, SpecFile> = g
        .outputs
        .iter()
        .filter_map(|o| o.spec.clone().map(|s| (o.key.clone(), s)))
        .collect();
    let before: BTreeMap<String, usize> = specs
        .iter()
        .map(|(k, s)| (k.clone(), validate_with(s, &run_opts(&g.db, &specs, k)).len()))
        .collect();
    let (repairs, pruned) = repair_all(&g.db, &g.client, cfg.max_rounds, &mut specs)?;

    let mut reports = Vec::new();
    for (run, out) in g.runs.iter().zip(&g.outputs) {
        let mut h = handler_report(run, out);
        if let Some(spec) = specs.get(&out.key) {
            h.validation_errors = before.get(&out.key).copied();
            h.counts.syscalls = spec.syscalls.len();
            let r = repairs.get(&out.key).cloned().unwrap_or_default();
            h.clean = r.final_error_count == 0;
            h.repair = Some(r);
            write_spec(cfg, &g.db, &out.key, spec, &specs)?;
            if let Some(text) = pruned.get(&out.key) {
                write(&cfg.out.join("pruned").join(format!("{}.txt", out.key)), text)?;
            }
        }
        reports.push(h);
    }
    let report = Report::new("run", g.found, reports, g.collisions);
    write_report(cfg, &report)?;
    let any_clean = report.handlers.iter().any(|h| h.clean);
    Ok(RunOutcome {
        exit_code: if any_clean { EXIT_OK } else { EXIT_FAILED },
        usage: g.client.usage(),
        report,
        specs,
    })
}

/// Validate spec files together; each file sees the resources of the others
/// and the constants of its `.const` sidecar, when present.
/// Exit 2 when any file fails to parse, 1 on validation errors, else 0.
pub fn cmd_validate(
    paths: &[PathBuf],
    db: Option<&DefinitionDatabase>,
) -> Result<(Vec<ValidationError>, i32), OrchestratorError> {
    let mut parsed: Vec<(String, SpecFile)> = Vec::new();
    let mut errors = Vec::new();
    let mut parse_failed = false;
    for p in paths {
        let name = p.display().to_string();
        match parse_spec(&read(p)?) {
            Ok(mut s) => {
                let sidecar = p.with_extension("const");
                if sidecar.is_file() {
                    s.constants = parse_const_file(&read(&sidecar)?).map_err(|e| io_err(&sidecar, e))?;
                }
                parsed.push((name, s))
            }
            Err(e) => {
                parse_failed = true;
                errors.push(ValidationError {
                    code: ErrorCode::SyntaxError,
                    message: format!("expected {}", e.expected),
                    target: String::new(),
                    location: Location {
                        file: name,
                        line: e.line,
                    },
                });
            }
        }
    }
    for (i, (name, spec)) in parsed.iter().enumerate() {
        let mut opts = ValidateOptions {
            db,
            ..Default::default()
        }
        .file(name);
        opts = opts.externals(parsed.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, (_, s))| s));
        errors.extend(validate_with(spec, &opts));
    }
    let code = if parse_failed {
        EXIT_ERROR
    } else if errors.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILED
    };
    Ok((errors, code))
}

/// Repair spec files in place under `<out>/specs`, archiving pruned
/// declarations under `<out>/pruned`.
pub fn cmd_repair(cfg: &RunConfig, paths: &[PathBuf]) -> Result<BTreeMap<String, RepairReport>, OrchestratorError> {
    let defs = cfg.out.join("defs.json");
    let db = if defs.is_file() {
        load_defs(&defs)?
    } else {
        index_corpus(&cfg.corpus, &cfg.indexer)?.db
    };
    let mut specs = BTreeMap::new();
    for p in paths {
        let key = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "spec".into());
        let spec = parse_spec(&read(p)?).map_err(|e| io_err(p, e))?;
        specs.insert(key, spec);
    }
    let client = build_client(cfg)?;
    let (reports, pruned) = repair_all(&db, &client, cfg.max_rounds, &mut specs)?;
    for (key, spec) in &specs {
        write_spec(cfg, &db, key, spec, &specs)?;
    }
    for (key, text) in &pruned {
        write(&cfg.out.join("pruned").join(format!("{key}.txt")), text)?;
    }
    Ok(reports)
}

pub fn cmd_report(out: &Path) -> Result<Report, OrchestratorError> {
    let p = out.join("report.json");
    serde_json::from_str(&read(&p)?).map_err(|e| io_err(&p, e))
}

/// Validation errors as pretty JSON.
pub fn errors_json(errors: &[ValidationError]) -> String {
    serde_json::to_string_pretty(errors).expect("errors serialize")
}
