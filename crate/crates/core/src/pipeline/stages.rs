//! The four per-handler analysis stages.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::payload::{
    DefinitionPayload, DependencyPayload, IdentifierPayload, InitPayload, RawDependency, TypePayload,
};
use crate::engine::{analyze, AnalysisCtx, CodeBlock, EngineError, Stage, StepInput};
use crate::indexer::HandlerRegistration;
use crate::syzlang::{FlagSet, TypeDef, TypeExpr, BUILTIN_RESOURCES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSyscall {
    Openat,
    SyzOpenDev,
    Socket,
}

impl InitSyscall {
    pub fn as_str(self) -> &'static str {
        match self {
            InitSyscall::Openat => "openat",
            InitSyscall::SyzOpenDev => "syz_open_dev",
            InitSyscall::Socket => "socket",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocketTriple {
    pub domain: String,
    pub sock_type: String,
    pub protocol: String,
}

/// How userspace obtains a handle to one operation handler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerInitSpec {
    /// Absolute device node path, for drivers.
    pub device_path: Option<String>,
    pub socket: Option<SocketTriple>,
    pub init_syscall: InitSyscall,
    /// `$` suffix of the init syscall.
    pub variant: String,
    pub resource_name: String,
}

/// Lowercase, with every run of characters outside `[a-z0-9]` collapsed to
/// one underscore and `#` wildcards dropped.
pub fn sanitize_variant(name: &str) -> String {
    let name = name.strip_prefix("/dev/").unwrap_or(name);
    let mut out = String::new();
    for c in name.chars().filter(|&c| c != '#') {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

impl HandlerInitSpec {
    pub fn from_payload(p: &InitPayload) -> Option<Self> {
        if let Some(dev) = &p.device_name {
            let path = if dev.starts_with("/dev/") {
                dev.clone()
            } else {
                format!("/dev/{}", dev.trim_start_matches('/'))
            };
            let variant = sanitize_variant(&path);
            if variant.is_empty() {
                return None;
            }
            let init_syscall = if path.contains('#') {
                InitSyscall::SyzOpenDev
            } else {
                InitSyscall::Openat
            };
            let resource_name = p.resource_name.clone().unwrap_or_else(|| format!("fd_{variant}"));
            return Some(Self {
                device_path: Some(path),
                socket: None,
                init_syscall,
                variant,
                resource_name,
            });
        }
        let (domain, sock_type) = (p.domain.clone()?, p.sock_type.clone()?);
        let variant = sanitize_variant(domain.strip_prefix("AF_").unwrap_or(&domain));
        if variant.is_empty() {
            return None;
        }
        let resource_name = p.resource_name.clone().unwrap_or_else(|| format!("sock_{variant}"));
        Some(Self {
            device_path: None,
            socket: Some(SocketTriple {
                domain,
                sock_type,
                protocol: p.protocol.clone().unwrap_or_else(|| "0".into()),
            }),
            init_syscall: InitSyscall::Socket,
            variant,
            resource_name,
        })
    }

    /// Builtin resource the handle derives from.
    pub fn underlying(&self) -> &'static str {
        if self.socket.is_some() {
            "sock"
        } else {
            "fd"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierFinding {
    pub const_name: String,
    /// Generic syscall carrying the identifier: ioctl, setsockopt or getsockopt.
    pub syscall: String,
    pub handling_function: Option<String>,
    /// Whether the indexer has a definition for `handling_function`.
    pub resolved: bool,
    pub usage_info: String,
    pub modified: bool,
    /// Socket option level, for setsockopt/getsockopt findings.
    pub level: Option<String>,
}

impl IdentifierFinding {
    pub fn syscall_name(&self) -> String {
        format!("{}${}", self.syscall, self.const_name.to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierStage {
    pub findings: Vec<IdentifierFinding>,
    pub return_relevant: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeFinding {
    pub identifier: String,
    /// Base syscall of the finding, e.g. `setsockopt`.
    pub syscall: String,
    pub arg_type: TypeExpr,
    pub pending_types: Vec<String>,
    /// Why the argument type fell back to an opaque buffer.
    pub unresolved: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeStage {
    pub findings: Vec<TypeFinding>,
    pub types: Vec<TypeDef>,
    pub flag_sets: Vec<FlagSet>,
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyFinding {
    pub producer_syscall: String,
    pub producer_const: String,
    pub resource_name: String,
    pub consumer_handlers: Vec<String>,
}

pub fn infer_handler_init(reg: &HandlerRegistration, ctx: &mut AnalysisCtx<'_>) -> Result<InitPayload, EngineError> {
    ctx.visited.clear();
    let code = ctx.code_for(&reg.struct_name);
    let usage: Vec<CodeBlock> = reg.usages.iter().map(CodeBlock::from_usage).collect();
    if usage.is_empty() {
        ctx.note(format!("{}: no usages, using the definition only", reg.struct_name));
    }
    let input = StepInput {
        target: reg.struct_name.clone(),
        code,
        usage,
        prior: None,
    };
    analyze(ctx, Stage::HandlerInit, &input, 1)
}

const IOCTL_FIELDS: [&str; 3] = ["unlocked_ioctl", "ioctl", "compat_ioctl"];

/// `(syscall, function)` entry points whose command values are deduced.
pub fn command_roots(reg: &HandlerRegistration, trigger_fields: &[String]) -> Vec<(String, String)> {
    let enabled = |f: &str| trigger_fields.iter().any(|t| t == f);
    let mut roots = Vec::new();
    if let Some(f) = IOCTL_FIELDS
        .iter()
        .find(|f| enabled(f) && reg.bound_ops.contains_key(**f))
    {
        roots.push(("ioctl".to_string(), reg.bound_ops[*f].clone()));
    }
    for f in ["setsockopt", "getsockopt"] {
        if let Some(func) = reg.bound_ops.get(f).filter(|_| enabled(f)) {
            roots.push((f.to_string(), func.clone()));
        }
    }
    roots
}

pub fn deduce_identifiers(
    reg: &HandlerRegistration,
    trigger_fields: &[String],
    ctx: &mut AnalysisCtx<'_>,
) -> Result<IdentifierStage, EngineError> {
    let mut out = IdentifierStage::default();
    for (syscall, func) in command_roots(reg, trigger_fields) {
        if ctx.db.extract_code(&func).is_empty() {
            ctx.note(format!(
                "{}: {syscall} handler {func} has no definition",
                reg.struct_name
            ));
            continue;
        }
        ctx.visited.clear();
        let input = StepInput {
            target: func.clone(),
            code: ctx.code_for(&func),
            usage: vec![CodeBlock::note(&format!(
                "{func} handles {syscall}(2) for {} ({})",
                reg.struct_name, reg.struct_type
            ))],
            prior: None,
        };
        let p: IdentifierPayload = analyze(ctx, Stage::IdentifierDeduction, &input, 1)?;
        for r in p.return_relevant {
            if !out.return_relevant.contains(&r) {
                out.return_relevant.push(r);
            }
        }
        for i in p.identifiers {
            if out
                .findings
                .iter()
                .any(|f| f.const_name == i.name && f.syscall == syscall)
            {
                continue;
            }
            let resolved = i.handler.as_deref().is_some_and(|h| !ctx.db.extract_code(h).is_empty());
            out.findings.push(IdentifierFinding {
                const_name: i.name,
                syscall: syscall.clone(),
                handling_function: i.handler,
                resolved,
                usage_info: i.usage,
                modified: i.modified,
                level: i.level,
            });
        }
    }
    out.findings
        .sort_by(|a, b| (&a.const_name, &a.syscall).cmp(&(&b.const_name, &b.syscall)));
    Ok(out)
}

/// Type and flag-set names an expression depends on.
pub fn needed_names(t: &TypeExpr, out: &mut BTreeSet<String>) {
    match t {
        TypeExpr::Ref(n) => {
            out.insert(n.clone());
        }
        TypeExpr::Flags { set, .. } => {
            out.insert(set.clone());
        }
        TypeExpr::Ptr { elem, .. } | TypeExpr::Array { elem, .. } => needed_names(elem, out),
        _ => {}
    }
}

fn missing_names(stage: &TypeStage, known: &BTreeSet<String>) -> BTreeSet<String> {
    let mut need = BTreeSet::new();
    for f in &stage.findings {
        needed_names(&f.arg_type, &mut need);
    }
    for t in &stage.types {
        for f in &t.fields {
            needed_names(&f.ty, &mut need);
        }
    }
    need.retain(|n| {
        !known.contains(n)
            && !BUILTIN_RESOURCES.contains(&n.as_str())
            && !stage.types.iter().any(|t| &t.name == n)
            && !stage.flag_sets.iter().any(|f| &f.name == n)
    });
    need
}

/// Argument types per finding, then syzlang definitions for every named
/// type they need. `known` lists names defined elsewhere (resources).
pub fn recover_types(
    findings: &[IdentifierFinding],
    known: &BTreeSet<String>,
    ctx: &mut AnalysisCtx<'_>,
) -> Result<TypeStage, EngineError> {
    let mut stage = TypeStage::default();
    let mut pending = BTreeSet::new();
    for f in findings {
        ctx.visited.clear();
        let code = match &f.handling_function {
            Some(h) => ctx.code_for(h),
            None => vec![CodeBlock::note(&format!(
                "/* no handling function reported for {} */",
                f.const_name
            ))],
        };
        let mut usage = vec![CodeBlock::note(&format!(
            "{} selects this command in {}(2)",
            f.const_name, f.syscall
        ))];
        if !f.usage_info.is_empty() {
            usage.push(CodeBlock::note(&f.usage_info));
        }
        let input = StepInput {
            target: f.const_name.clone(),
            code,
            usage,
            prior: None,
        };
        let p: TypePayload = analyze(ctx, Stage::TypeRecovery, &input, 1)?;
        let (arg_type, unresolved) = match p.arg_type {
            Some(t) => (t, None),
            None => {
                let why = format!("no argument type for {}", f.const_name);
                ctx.note(why.clone());
                (TypeExpr::opaque_buffer(), Some(why))
            }
        };
        let mut pend: BTreeSet<String> = p.types.into_iter().collect();
        needed_names(&arg_type, &mut pend);
        pend.retain(|n| !known.contains(n) && !BUILTIN_RESOURCES.contains(&n.as_str()));
        pending.extend(pend.iter().cloned());
        stage.findings.push(TypeFinding {
            identifier: f.const_name.clone(),
            syscall: f.syscall.clone(),
            arg_type,
            pending_types: pend.into_iter().collect(),
            unresolved,
        });
    }

    ctx.visited.clear();
    loop {
        let todo: Vec<String> = pending.iter().filter(|n| !ctx.visited.contains(*n)).cloned().collect();
        if todo.is_empty() {
            break;
        }
        for name in todo {
            if ctx.visited.contains(&name) {
                continue;
            }
            let input = StepInput {
                target: name.clone(),
                code: ctx.code_for(&name),
                usage: Vec::new(),
                prior: None,
            };
            let d: DefinitionPayload = analyze(ctx, Stage::TypeDefinition, &input, 1)?;
            for t in d.types {
                if !stage.types.iter().any(|x| x.name == t.name) {
                    stage.types.push(t);
                }
            }
            for fs in d.flag_sets {
                if !stage.flag_sets.iter().any(|x| x.name == fs.name) {
                    stage.flag_sets.push(fs);
                }
            }
        }
        pending.extend(missing_names(&stage, known));
    }

    let unresolved = missing_names(&stage, known);
    for name in &unresolved {
        ctx.note(format!("UnresolvedType({name})"));
    }
    for f in &mut stage.findings {
        let mut need = BTreeSet::new();
        needed_names(&f.arg_type, &mut need);
        if let Some(bad) = need.intersection(&unresolved).next() {
            f.unresolved = Some(format!("UnresolvedType({bad})"));
            f.arg_type = TypeExpr::opaque_buffer();
        }
    }
    stage.unresolved = unresolved.into_iter().collect();
    stage.types.sort_by(|a, b| a.name.cmp(&b.name));
    stage.flag_sets.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(stage)
}

pub fn analyze_dependencies(
    reg: &HandlerRegistration,
    ids: &IdentifierStage,
    ctx: &mut AnalysisCtx<'_>,
) -> Result<Vec<DependencyFinding>, EngineError> {
    if ids.return_relevant.is_empty() {
        return Ok(Vec::new());
    }
    ctx.visited.clear();
    let mut code = Vec::new();
    for f in &ids.return_relevant {
        ctx.visited.insert(f.clone());
        code.extend(ctx.code_for(f));
    }
    let listing: Vec<String> = ids
        .findings
        .iter()
        .map(|f| match &f.handling_function {
            Some(h) => format!("{} -> {h}", f.const_name),
            None => f.const_name.clone(),
        })
        .collect();
    let input = StepInput {
        target: reg.struct_name.clone(),
        code,
        usage: vec![CodeBlock::note(&format!(
            "commands of {}: {}",
            reg.struct_name,
            listing.join(", ")
        ))],
        prior: None,
    };
    let p: DependencyPayload = analyze(ctx, Stage::DependencyAnalysis, &input, 1)?;
    let mut out: Vec<DependencyFinding> = Vec::new();
    for RawDependency {
        producer,
        resource,
        consumer_handler,
    } in p.resources
    {
        let Some(f) = ids
            .findings
            .iter()
            .find(|f| f.const_name == producer || f.handling_function.as_deref() == Some(producer.as_str()))
        else {
            ctx.note(format!(
                "{}: producer {producer} is not a known command",
                reg.struct_name
            ));
            continue;
        };
        let consumers: Vec<String> = consumer_handler.into_iter().collect();
        match out
            .iter_mut()
            .find(|d| d.resource_name == resource && d.producer_const == f.const_name)
        {
            Some(d) => {
                for c in consumers {
                    if !d.consumer_handlers.contains(&c) {
                        d.consumer_handlers.push(c);
                    }
                }
            }
            None => out.push(DependencyFinding {
                producer_syscall: f.syscall_name(),
                producer_const: f.const_name.clone(),
                resource_name: resource,
                consumer_handlers: consumers,
            }),
        }
    }
    out.sort_by(|a, b| (&a.producer_const, &a.resource_name).cmp(&(&b.producer_const, &b.resource_name)));
    Ok(out)
}
