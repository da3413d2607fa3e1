use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};
use speckernel::engine::{prompt_target, AnalysisCtx, Backend, BackendError, LlmClient, Request, ScriptedBackend};
use speckernel::indexer::{DefinitionDatabase, HandlerKind, HandlerRegistration, DEFAULT_TRIGGER_FIELDS};
use speckernel::orchestrator::{cmd_run, ConfigFile, RunConfig, RunOutcome};
use speckernel::pipeline::deduce_identifiers;
use speckernel::repair::{repair_spec, RepairCtx, RepairResult};
use speckernel::syzlang::{parse_spec, SpecFile, SyscallDesc, TypeExpr, ValidateOptions};

/// Wraps a backend and counts the requests that reach it.
pub struct Counting<B> {
    pub inner: B,
    pub calls: Arc<AtomicU64>,
}

impl<B: Backend> Backend for Counting<B> {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }
}

/// Answers every step with no identifiers and a single unknown function
/// chosen by `next(target)`.
pub struct OneUnknown<F>(pub F);

impl<F: Fn(&str) -> String + Send + Sync> Backend for OneUnknown<F> {
    fn complete(&self, req: &Request) -> Result<String, BackendError> {
        let target = prompt_target(&req.prompt).unwrap_or_default();
        let next = (self.0)(target);
        Ok(format!(
            r#"{{"result":{{"identifiers":[]}},"unknowns":[{{"identifier":"{next}","kind":"Function","usage_info":"called by {target}"}}]}}"#
        ))
    }
}

fn registration(root: &str) -> HandlerRegistration {
    HandlerRegistration {
        struct_name: "adv_fops".into(),
        struct_type: "file_operations".into(),
        kind: HandlerKind::FileOps,
        bound_ops: BTreeMap::from([("unlocked_ioctl".to_string(), root.to_string())]),
        file: "adv.c".into(),
        line: 1,
        usages: Vec::new(),
    }
}

/// Backend requests made by the identifier stage on one handler.
pub fn identifier_stage_queries(
    db: &DefinitionDatabase,
    root: &str,
    backend: impl Backend + 'static,
    max_iter: u32,
) -> u64 {
    let calls = Arc::new(AtomicU64::new(0));
    let client = LlmClient::new(Box::new(Counting {
        inner: backend,
        calls: calls.clone(),
    }));
    let mut ctx = AnalysisCtx::new(db, &client);
    ctx.max_iter = max_iter;
    let triggers: Vec<String> = DEFAULT_TRIGGER_FIELDS.iter().map(|s| s.to_string()).collect();
    deduce_identifiers(&registration(root), &triggers, &mut ctx).expect("stage runs");
    assert_eq!(ctx.queries, calls.load(Ordering::SeqCst));
    calls.load(Ordering::SeqCst)
}

/// A fresh, never-seen unknown at every step.
pub fn fresh_chain_queries(max_iter: u32) -> u64 {
    let db = DefinitionDatabase::from_sources(
        vec![(
            "adv.c".into(),
            "static long f0(struct file *f, unsigned int cmd, unsigned long arg)\n{\n\treturn f1(cmd);\n}\n".into(),
        )],
        5,
    );
    let next = |t: &str| format!("f{}", t.trim_start_matches('f').parse::<u32>().unwrap_or(0) + 1);
    identifier_stage_queries(&db, "f0", OneUnknown(next), max_iter)
}

/// `a_ioctl` names `b_dispatch`, which names `a_ioctl` again.
pub fn cycle_queries(max_iter: u32) -> u64 {
    let db = DefinitionDatabase::from_sources(
        vec![(
            "adv.c".into(),
            "static long a_ioctl(struct file *f, unsigned int cmd, unsigned long arg)\n{\n\treturn b_dispatch(f, cmd);\n}\n\nstatic long b_dispatch(struct file *f, unsigned int cmd)\n{\n\treturn a_ioctl(f, cmd, 0);\n}\n".into(),
        )],
        5,
    );
    let next = |t: &str| {
        if t == "a_ioctl" {
            "b_dispatch".to_string()
        } else {
            "a_ioctl".to_string()
        }
    };
    identifier_stage_queries(&db, "a_ioctl", OneUnknown(next), max_iter)
}

/// `run` on a bundled fixture with its replay transcripts, writing to `out`.
pub fn run_fixture(name: &str, out: &Path) -> RunOutcome {
    let file = ConfigFile::load(&super::fixture(name).join("run.toml")).unwrap();
    let cfg = RunConfig::from_file(file.overlay(ConfigFile {
        out: Some(out.to_path_buf()),
        ..Default::default()
    }))
    .unwrap();
    cmd_run(&cfg).unwrap()
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree_snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let e = e.unwrap();
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, std::fs::read(e.path()).unwrap());
        }
    }
    out
}

/// Parse every `*.txt` spec under `dir`, keyed by file stem.
pub fn load_specs(dir: &Path) -> BTreeMap<String, SpecFile> {
    super::files_with_ext(dir, "txt")
        .into_iter()
        .map(|p| {
            let key = p.file_stem().unwrap().to_string_lossy().to_string();
            (key, parse_spec(&super::read(&p)).unwrap())
        })
        .collect()
}

fn handle_of(s: &SyscallDesc) -> Option<&str> {
    match &s.params.first()?.ty {
        TypeExpr::Ref(r) => Some(r),
        _ => None,
    }
}

/// Resource producers and the cross-spec producer -> consumer edges.
pub fn dependency_graph(specs: &BTreeMap<String, SpecFile>) -> Value {
    let mut resources = serde_json::Map::new();
    let mut edges = Vec::new();
    for (key, spec) in specs {
        for r in &spec.resources {
            let produced_by: Vec<String> = specs
                .values()
                .flat_map(|s| &s.syscalls)
                .filter(|c| c.ret.as_deref() == Some(r.name.as_str()))
                .map(SyscallDesc::full_name)
                .collect();
            resources.insert(r.name.clone(), json!({"declared_in": key, "produced_by": produced_by}));
        }
        for c in &spec.syscalls {
            let (Some(from), Some(to)) = (handle_of(c), c.ret.as_deref()) else {
                continue;
            };
            let consumers: Vec<&String> = specs
                .iter()
                .filter(|(k, s)| *k != key && s.syscalls.iter().any(|x| handle_of(x) == Some(to)))
                .map(|(k, _)| k)
                .collect();
            edges.push(json!({"from": from, "via": c.full_name(), "to": to, "producer": key, "consumers": consumers}));
        }
    }
    json!({"resources": resources, "edges": edges})
}

// A spec seeded with three validator errors on three declarations, and
// replacements that fix each of them.

pub const SEEDED: &str = "resource fd_x[fd]

openat$x(fd const[AT_FDCWD], file ptr[in, string[\"/dev/x\"]], flags const[O_RDWR], mode const[0]) fd_x
ioctl$x_get(fd fd_x, cmd const[X_NOPE], arg ptr[out, int32])
ioctl$x_list(fd fd_x, cmd const[X_LIST], arg ptr[inout, x_list])
ioctl$x_set(fd fd_x, cmd const[X_SET], arg ptr[in, x_item])
ioctl$x_reset(fd fd_x, cmd const[X_RESET])

x_list {
\tcount int32
\tdevices array[x_item, count]
}

x_item {
\tid int32
\tlevel int8[0:300]
}
";

pub const FIX_GET: &str = "ioctl$x_get(fd fd_x, cmd const[X_GET], arg ptr[out, int32])";
pub const FIX_LIST: &str = "x_list {\n\tcount len[devices, int32]\n\tdevices array[x_item]\n}";
pub const FIX_ITEM: &str = "x_item {\n\tid int32\n\tlevel int8[0:100]\n}";

/// What is left after all three seeded targets and their referrers go.
pub const PRUNED_ALL: &str = "resource fd_x[fd]

openat$x(fd const[AT_FDCWD], file ptr[in, string[\"/dev/x\"]], flags const[O_RDWR], mode const[0]) fd_x
ioctl$x_reset(fd fd_x, cmd const[X_RESET])
";

pub fn seeded() -> SpecFile {
    let mut s = parse_spec(SEEDED).unwrap();
    for (i, c) in ["X_GET", "X_LIST", "X_SET", "X_RESET"].iter().enumerate() {
        s.constants.insert(c.to_string(), 0x5800 + i as u64);
    }
    s
}

pub fn rule(focus: &str, replies: &[&str]) -> serde_json::Value {
    let responses: Vec<_> = replies
        .iter()
        .map(|r| json!({"result": {"replacement": r}, "unknowns": []}))
        .collect();
    json!({"stage": "repair", "focus": focus, "responses": responses})
}

pub fn repair_with(rules: Vec<serde_json::Value>) -> RepairResult {
    let script = json!({ "rules": rules }).to_string();
    let client = LlmClient::new(Box::new(ScriptedBackend::from_json(&script).unwrap()));
    let db = DefinitionDatabase::default();
    let ctx = RepairCtx::new(&client, &db, ValidateOptions::default());
    repair_spec(&seeded(), &ctx).unwrap()
}
