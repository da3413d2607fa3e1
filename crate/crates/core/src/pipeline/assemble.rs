//! Stage outputs to one spec file per handler.

use std::collections::BTreeSet;

use super::stages::{DependencyFinding, HandlerInitSpec, IdentifierFinding, InitSyscall, TypeStage};
use crate::indexer::{DefKind, DefinitionDatabase};
use crate::syzlang::{Dir, IntBits, Param, ResourceDecl, SpecFile, SyscallDesc, TypeExpr};

/// The handle the command syscalls operate on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandleRef {
    pub name: String,
    /// Builtin it derives from; `None` when another spec declares it.
    pub declare_as: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AssemblyInput<'a> {
    pub handler: &'a str,
    /// Init syscall to emit, if the handler can be opened directly.
    pub init: Option<&'a HandlerInitSpec>,
    pub handle: HandleRef,
    pub identifiers: &'a [IdentifierFinding],
    pub types: Option<&'a TypeStage>,
    /// Dependencies this handler produces.
    pub produced: &'a [DependencyFinding],
}

fn const_of(s: &str) -> TypeExpr {
    match s.parse::<i64>() {
        Ok(v) => TypeExpr::int_const(v),
        Err(_) => TypeExpr::named_const(s),
    }
}

fn init_syscall(init: &HandlerInitSpec) -> SyscallDesc {
    let ret = Some(init.resource_name.clone());
    let path = || {
        TypeExpr::ptr(
            Dir::In,
            TypeExpr::String {
                literal: init.device_path.clone(),
            },
        )
    };
    let params = match init.init_syscall {
        InitSyscall::Openat => vec![
            Param::new("fd", TypeExpr::named_const("AT_FDCWD")),
            Param::new("file", path()),
            Param::new("flags", TypeExpr::named_const("O_RDWR")),
            Param::new("mode", TypeExpr::int_const(0)),
        ],
        InitSyscall::SyzOpenDev => vec![
            Param::new("dev", path()),
            Param::new(
                "id",
                TypeExpr::Int {
                    bits: IntBits::Intptr,
                    range: None,
                },
            ),
            Param::new("flags", TypeExpr::named_const("O_RDWR")),
        ],
        InitSyscall::Socket => {
            let t = init.socket.as_ref().expect("socket init carries a triple");
            vec![
                Param::new("domain", const_of(&t.domain)),
                Param::new("type", const_of(&t.sock_type)),
                Param::new("proto", const_of(&t.protocol)),
            ]
        }
    };
    SyscallDesc::new(init.init_syscall.as_str(), &init.variant, params, ret)
}

fn command_syscall(f: &IdentifierFinding, handle: &str, arg: TypeExpr, ret: Option<String>) -> SyscallDesc {
    let fd = Param::new("fd", TypeExpr::Ref(handle.to_string()));
    let cmd = TypeExpr::named_const(&f.const_name);
    let level = || const_of(f.level.as_deref().unwrap_or("SOL_SOCKET"));
    let params = match f.syscall.as_str() {
        "setsockopt" => vec![
            fd,
            Param::new("level", level()),
            Param::new("optname", cmd),
            Param::new("optval", arg),
            Param::new(
                "optlen",
                TypeExpr::Len {
                    path: vec!["optval".into()],
                    base: None,
                },
            ),
        ],
        "getsockopt" => vec![
            fd,
            Param::new("level", level()),
            Param::new("optname", cmd),
            Param::new("optval", arg),
            Param::new(
                "optlen",
                TypeExpr::ptr(
                    Dir::InOut,
                    TypeExpr::Len {
                        path: vec!["optval".into()],
                        base: Some(IntBits::Int32),
                    },
                ),
            ),
        ],
        _ => vec![fd, Param::new("cmd", cmd), Param::new("arg", arg)],
    };
    SyscallDesc::new(&f.syscall, &f.const_name.to_ascii_lowercase(), params, ret)
}

/// Combine stage outputs into a spec: init syscall first, then one syscall
/// per identifier finding ordered by constant name, then types by name.
pub fn assemble_spec(input: &AssemblyInput<'_>) -> SpecFile {
    let mut spec = SpecFile::default();
    if let Some(u) = &input.handle.declare_as {
        spec.resources.push(ResourceDecl::new(&input.handle.name, u));
    }
    let mut produced: Vec<&DependencyFinding> = input
        .produced
        .iter()
        .filter(|d| d.resource_name != input.handle.name)
        .collect();
    produced.sort_by(|a, b| a.resource_name.cmp(&b.resource_name));
    for d in &produced {
        if spec.resource(&d.resource_name).is_none() {
            spec.resources.push(ResourceDecl::new(&d.resource_name, "fd"));
        }
    }

    if let Some(init) = input.init {
        let mut s = init_syscall(init);
        s.source_handler = Some(input.handler.to_string());
        spec.syscalls.push(s);
    }

    let mut findings: Vec<&IdentifierFinding> = input.identifiers.iter().collect();
    findings.sort_by(|a, b| (&a.const_name, &a.syscall).cmp(&(&b.const_name, &b.syscall)));
    for f in findings {
        let tf = input.types.and_then(|t| {
            t.findings
                .iter()
                .find(|x| x.identifier == f.const_name && x.syscall == f.syscall)
        });
        let arg = tf.map_or_else(TypeExpr::opaque_buffer, |t| t.arg_type.clone());
        let ret = produced
            .iter()
            .find(|d| d.producer_const == f.const_name)
            .map(|d| d.resource_name.clone());
        let mut s = command_syscall(f, &input.handle.name, arg, ret);
        s.source_handler = Some(input.handler.to_string());
        if f.modified {
            s.comments.push(format!(
                "{} is compared after the handler transforms the command value",
                f.const_name
            ));
        }
        match tf.and_then(|t| t.unresolved.as_deref()) {
            Some(why) => s.comments.push(format!("argument left untyped: {why}")),
            None if tf.is_none() => s.comments.push("argument left untyped: no type recovered".into()),
            None => {}
        }
        spec.syscalls.push(s);
    }

    if let Some(t) = input.types {
        spec.types = t.types.clone();
        spec.types.sort_by(|a, b| a.name.cmp(&b.name));
        spec.flag_sets = t.flag_sets.clone();
        spec.flag_sets.sort_by(|a, b| a.name.cmp(&b.name));
    }
    spec.link_resources();
    spec
}

/// Header path as written in an include: `include/uapi/linux/x.h` and
/// `include/linux/x.h` both become `linux/x.h`.
pub fn include_path(file: &str) -> String {
    for p in ["include/uapi/", "include/"] {
        if let Some(rest) = file.strip_prefix(p) {
            return rest.to_string();
        }
    }
    file.to_string()
}

/// Headers defining the named constants used by `spec`.
pub fn header_includes(spec: &SpecFile, db: &DefinitionDatabase) -> Vec<String> {
    let mut out = BTreeSet::new();
    for name in spec.constant_names() {
        for d in db.extract_code(&name) {
            if d.kind == DefKind::Macro && d.file.ends_with(".h") {
                out.insert(include_path(&d.file));
            }
        }
        if let Some(file) = enumerator_file(db, &name) {
            out.insert(include_path(&file));
        }
    }
    out.into_iter().collect()
}

fn enumerator_file(db: &DefinitionDatabase, name: &str) -> Option<String> {
    db.enumerator(name)?;
    db.definitions()
        .filter(|d| d.kind == DefKind::Enum && d.file.ends_with(".h"))
        .find(|d| {
            d.text
                .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .any(|w| w == name)
        })
        .map(|d| d.file.clone())
}
