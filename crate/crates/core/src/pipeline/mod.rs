//! Per-handler analysis stages and spec assembly.

mod assemble;
mod payload;
mod stages;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AnalysisCtx, EngineError, LlmClient, DEFAULT_MAX_ITER, DEFAULT_UNKNOWN_CAP};
use crate::indexer::{DefinitionDatabase, HandlerRegistration, DEFAULT_TRIGGER_FIELDS};
use crate::syzlang::SpecFile;

pub use assemble::{assemble_spec, header_includes, include_path, AssemblyInput, HandleRef};
pub use payload::{
    DefinitionPayload, DependencyPayload, IdentifierPayload, InitPayload, RawDependency, RawIdentifier, TypePayload,
};
pub use stages::{
    analyze_dependencies, command_roots, deduce_identifiers, infer_handler_init, needed_names, recover_types,
    sanitize_variant, DependencyFinding, HandlerInitSpec, IdentifierFinding, IdentifierStage, InitSyscall,
    SocketTriple, TypeFinding, TypeStage,
};
pub use state::{write_atomic, HandlerState, StateStore, STATE_SCHEMA};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub max_iter: u32,
    pub unknown_cap: usize,
    pub trigger_fields: Vec<String>,
    /// Worker threads for the handler pool.
    pub parallel: usize,
    pub state_dir: Option<PathBuf>,
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            unknown_cap: DEFAULT_UNKNOWN_CAP,
            trigger_fields: DEFAULT_TRIGGER_FIELDS.iter().map(|s| s.to_string()).collect(),
            parallel: 1,
            state_dir: None,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum HandlerFailure {
    #[error("{0}")]
    Engine(String),
    #[error("UnresolvedHandlerInit: no device name or socket triple for {0}")]
    UnresolvedHandlerInit(String),
    #[error("state write failed: {0}")]
    State(String),
}

impl From<EngineError> for HandlerFailure {
    fn from(e: EngineError) -> Self {
        HandlerFailure::Engine(e.to_string())
    }
}

/// Stage results of one handler.
#[derive(Debug, Clone)]
pub struct HandlerRun {
    /// File-name-safe unique key, usually the struct name.
    pub key: String,
    pub registration: HandlerRegistration,
    pub state: HandlerState,
    pub error: Option<HandlerFailure>,
}

/// Unique per-handler keys; repeated struct names get `_2`, `_3`, ...
pub fn handler_keys(regs: &[HandlerRegistration]) -> Vec<String> {
    let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
    regs.iter()
        .map(|r| {
            let n = seen.entry(&r.struct_name).or_insert(0);
            *n += 1;
            if *n == 1 {
                r.struct_name.clone()
            } else {
                format!("{}_{}", r.struct_name, n)
            }
        })
        .collect()
}

fn commit(
    ctx: &mut AnalysisCtx<'_>,
    st: &mut HandlerState,
    store: Option<&StateStore>,
    key: &str,
) -> Result<(), HandlerFailure> {
    st.queries += std::mem::take(&mut ctx.queries);
    st.prompt_units += std::mem::take(&mut ctx.prompt_units);
    st.notes.append(&mut ctx.notes);
    if let Some(s) = store {
        s.save(key, st).map_err(|e| HandlerFailure::State(e.to_string()))?;
    }
    Ok(())
}

fn stages_for(
    reg: &HandlerRegistration,
    key: &str,
    st: &mut HandlerState,
    ctx: &mut AnalysisCtx<'_>,
    cfg: &PipelineConfig,
    store: Option<&StateStore>,
) -> Result<(), HandlerFailure> {
    if st.init.is_none() {
        st.init = Some(infer_handler_init(reg, ctx)?);
        commit(ctx, st, store, key)?;
    }
    if st.identifiers.is_none() {
        st.identifiers = Some(deduce_identifiers(reg, &cfg.trigger_fields, ctx)?);
        commit(ctx, st, store, key)?;
    }
    let ids = st.identifiers.clone().unwrap_or_default();
    if st.types.is_none() {
        let known: BTreeSet<String> = st
            .init
            .as_ref()
            .and_then(HandlerInitSpec::from_payload)
            .map(|i| i.resource_name)
            .into_iter()
            .collect();
        st.types = Some(recover_types(&ids.findings, &known, ctx)?);
        commit(ctx, st, store, key)?;
    }
    if st.dependencies.is_none() {
        st.dependencies = Some(analyze_dependencies(reg, &ids, ctx)?);
        commit(ctx, st, store, key)?;
    }
    Ok(())
}

/// Run all stages for one handler, resuming from saved state when asked.
pub fn run_handler(
    reg: &HandlerRegistration,
    key: &str,
    db: &DefinitionDatabase,
    client: &LlmClient,
    cfg: &PipelineConfig,
) -> HandlerRun {
    let store = cfg.state_dir.as_ref().map(StateStore::new);
    let mut st = cfg
        .resume
        .then(|| store.as_ref().and_then(|s| s.load(key, &reg.struct_name)))
        .flatten()
        .unwrap_or_else(|| HandlerState::new(&reg.struct_name));
    let mut ctx = AnalysisCtx::new(db, client);
    ctx.max_iter = cfg.max_iter;
    ctx.unknown_cap = cfg.unknown_cap;
    let error = stages_for(reg, key, &mut st, &mut ctx, cfg, store.as_ref()).err();
    if let Some(e) = &error {
        log::warn!("{key}: {e}");
    }
    HandlerRun {
        key: key.to_string(),
        registration: reg.clone(),
        state: st,
        error,
    }
}

/// Run every handler through the stages on a pool of `cfg.parallel`
/// workers. Output order follows `regs`.
pub fn run_stages(
    db: &DefinitionDatabase,
    regs: &[HandlerRegistration],
    client: &LlmClient,
    cfg: &PipelineConfig,
) -> Vec<HandlerRun> {
    let keys = handler_keys(regs);
    let work = || -> Vec<HandlerRun> {
        regs.par_iter()
            .zip(keys.par_iter())
            .map(|(r, k)| run_handler(r, k, db, client, cfg))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(cfg.parallel.max(1)).build() {
        Ok(pool) => pool.install(work),
        Err(e) => {
            log::warn!("worker pool unavailable ({e}), running inline");
            work()
        }
    }
}

/// Assembled spec (or failure) for one handler.
#[derive(Debug, Clone)]
pub struct HandlerOutput {
    pub key: String,
    pub handler: String,
    pub init: Option<HandlerInitSpec>,
    /// Resource the command syscalls take as their first argument.
    pub handle: Option<String>,
    pub spec: Option<SpecFile>,
    pub error: Option<HandlerFailure>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LinkOutcome {
    pub outputs: Vec<HandlerOutput>,
    /// Device paths or socket triples shared by several handlers.
    pub collisions: Vec<String>,
}

/// Cross-handler step run after every handler finished its stages: make
/// resource names unique, route produced resources to consumer handlers and
/// assemble one spec per handler.
pub fn link_and_assemble(db: &DefinitionDatabase, runs: &[HandlerRun]) -> LinkOutcome {
    let mut used = BTreeSet::new();
    let mut inits: Vec<Option<HandlerInitSpec>> = Vec::new();
    let mut notes: Vec<Vec<String>> = vec![Vec::new(); runs.len()];
    let mut handles_by_open: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, r) in runs.iter().enumerate() {
        let init = r
            .error
            .is_none()
            .then(|| r.state.init.as_ref().and_then(HandlerInitSpec::from_payload))
            .flatten();
        let init = init.map(|mut s| {
            let base = s.resource_name.clone();
            let mut n = 2;
            while !used.insert(s.resource_name.clone()) {
                s.resource_name = format!("{base}_{n}");
                n += 1;
            }
            if s.resource_name != base {
                notes[i].push(format!("resource {base} renamed to {}", s.resource_name));
            }
            let opened = match (&s.device_path, &s.socket) {
                (Some(p), _) => p.clone(),
                (None, Some(t)) => format!("socket({}, {}, {})", t.domain, t.sock_type, t.protocol),
                (None, None) => String::new(),
            };
            handles_by_open.entry(opened).or_default().push(r.key.clone());
            s
        });
        inits.push(init);
    }
    let collisions = handles_by_open
        .into_iter()
        .filter(|(_, keys)| keys.len() > 1)
        .map(|(opened, keys)| format!("{opened} is opened by {}", keys.join(", ")))
        .collect();

    let mut consumed_by: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.error.is_none()) {
        for d in r.state.dependencies.iter().flatten() {
            for c in &d.consumer_handlers {
                if c != &r.registration.struct_name {
                    consumed_by
                        .entry(c.as_str())
                        .or_insert((d.resource_name.as_str(), r.key.as_str()));
                }
            }
        }
    }

    let mut outputs = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let mut out = HandlerOutput {
            key: r.key.clone(),
            handler: r.registration.struct_name.clone(),
            init: inits[i].clone(),
            handle: None,
            spec: None,
            error: r.error.clone(),
            notes: std::mem::take(&mut notes[i]),
        };
        if out.error.is_some() {
            outputs.push(out);
            continue;
        }
        let (handle, init) = match (consumed_by.get(r.registration.struct_name.as_str()), &inits[i]) {
            (Some((res, producer)), own) => {
                if own.is_some() {
                    out.notes
                        .push(format!("own open syscall dropped: handle {res} comes from {producer}"));
                }
                (
                    HandleRef {
                        name: res.to_string(),
                        declare_as: None,
                    },
                    None,
                )
            }
            (None, Some(init)) => (
                HandleRef {
                    name: init.resource_name.clone(),
                    declare_as: Some(init.underlying().to_string()),
                },
                Some(init),
            ),
            (None, None) => {
                out.error = Some(HandlerFailure::UnresolvedHandlerInit(
                    r.registration.struct_name.clone(),
                ));
                outputs.push(out);
                continue;
            }
        };
        let ids = r.state.identifiers.clone().unwrap_or_default();
        let produced = r.state.dependencies.clone().unwrap_or_default();
        let mut spec = assemble_spec(&AssemblyInput {
            handler: &r.registration.struct_name,
            init,
            handle: handle.clone(),
            identifiers: &ids.findings,
            types: r.state.types.as_ref(),
            produced: &produced,
        });
        spec.includes = header_includes(&spec, db);
        out.handle = Some(handle.name);
        out.spec = Some(spec);
        outputs.push(out);
    }
    LinkOutcome { outputs, collisions }
}
