use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    In,
    Out,
    InOut,
}

impl Dir {
    pub fn as_str(self) -> &'static str {
        match self {
            Dir::In => "in",
            Dir::Out => "out",
            Dir::InOut => "inout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "in" => Dir::In,
            "out" => Dir::Out,
            "inout" => Dir::InOut,
            _ => return None,
        })
    }

    pub fn writes(self) -> bool {
        self != Dir::In
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntBits {
    Int8,
    Int16,
    Int32,
    Int64,
    Intptr,
}

impl IntBits {
    pub const ALL: [IntBits; 5] = [
        IntBits::Int8,
        IntBits::Int16,
        IntBits::Int32,
        IntBits::Int64,
        IntBits::Intptr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntBits::Int8 => "int8",
            IntBits::Int16 => "int16",
            IntBits::Int32 => "int32",
            IntBits::Int64 => "int64",
            IntBits::Intptr => "intptr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        IntBits::ALL.into_iter().find(|b| b.as_str() == s)
    }

    pub fn width(self) -> u32 {
        match self {
            IntBits::Int8 => 8,
            IntBits::Int16 => 16,
            IntBits::Int32 => 32,
            IntBits::Int64 | IntBits::Intptr => 64,
        }
    }
}

/// Integer literal or named constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstValue {
    Int(i64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArrayLen {
    Literal(u64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeExpr {
    Const {
        value: ConstValue,
        base: Option<IntBits>,
    },
    Int {
        bits: IntBits,
        range: Option<(i64, i64)>,
    },
    Flags {
        set: String,
        base: Option<IntBits>,
    },
    Ptr {
        dir: Dir,
        elem: Box<TypeExpr>,
    },
    Array {
        elem: Box<TypeExpr>,
        len: Option<ArrayLen>,
    },
    String {
        literal: Option<String>,
    },
    /// `len[a:b]`; `path` holds the `:`-separated components.
    Len {
        path: Vec<String>,
        base: Option<IntBits>,
    },
    /// Struct, union or resource reference.
    Ref(String),
}

impl TypeExpr {
    pub fn ptr(dir: Dir, elem: TypeExpr) -> Self {
        TypeExpr::Ptr {
            dir,
            elem: Box::new(elem),
        }
    }

    pub fn named_const(name: &str) -> Self {
        TypeExpr::Const {
            value: ConstValue::Named(name.to_string()),
            base: None,
        }
    }

    pub fn int_const(v: i64) -> Self {
        TypeExpr::Const {
            value: ConstValue::Int(v),
            base: None,
        }
    }

    /// Untyped byte buffer used when an argument type is unknown.
    pub fn opaque_buffer() -> Self {
        TypeExpr::ptr(
            Dir::In,
            TypeExpr::Array {
                elem: Box::new(TypeExpr::Int {
                    bits: IntBits::Int8,
                    range: None,
                }),
                len: None,
            },
        )
    }

    /// Every `Ref` name in the expression, including ones behind pointers.
    pub fn refs(&self, out: &mut BTreeSet<String>) {
        match self {
            TypeExpr::Ref(n) => {
                out.insert(n.clone());
            }
            TypeExpr::Ptr { elem, .. } | TypeExpr::Array { elem, .. } => elem.refs(out),
            _ => {}
        }
    }

    /// Named constants used by the expression.
    pub fn constants(&self, out: &mut Vec<String>) {
        match self {
            TypeExpr::Const {
                value: ConstValue::Named(n),
                ..
            } => out.push(n.clone()),
            TypeExpr::Ptr { elem, .. } => elem.constants(out),
            TypeExpr::Array { elem, len } => {
                elem.constants(out);
                if let Some(ArrayLen::Named(n)) = len {
                    out.push(n.clone());
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceDecl {
    pub name: String,
    pub underlying: String,
    /// Derived by [`SpecFile::link_resources`]; not part of the text form.
    pub produced_by: Vec<String>,
    pub consumed_by: Vec<String>,
    pub comments: Vec<String>,
}

impl ResourceDecl {
    pub fn new(name: &str, underlying: &str) -> Self {
        Self {
            name: name.into(),
            underlying: underlying.into(),
            produced_by: Vec::new(),
            consumed_by: Vec::new(),
            comments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
}

impl Param {
    pub fn new(name: &str, ty: TypeExpr) -> Self {
        Self { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallDesc {
    pub base_name: String,
    pub variant: String,
    pub params: Vec<Param>,
    pub ret: Option<String>,
    /// Handler struct the description was generated for. Not rendered.
    pub source_handler: Option<String>,
    pub identifier_const: Option<String>,
    pub comments: Vec<String>,
}

/// Index of the command/option-name parameter of generic syscalls.
pub fn identifier_param_index(base: &str) -> Option<usize> {
    match base {
        "ioctl" => Some(1),
        "setsockopt" | "getsockopt" => Some(2),
        _ => None,
    }
}

impl SyscallDesc {
    pub fn new(base: &str, variant: &str, params: Vec<Param>, ret: Option<String>) -> Self {
        let mut s = Self {
            base_name: base.into(),
            variant: variant.into(),
            params,
            ret,
            source_handler: None,
            identifier_const: None,
            comments: Vec::new(),
        };
        s.identifier_const = s.derive_identifier();
        s
    }

    pub fn full_name(&self) -> String {
        if self.variant.is_empty() {
            self.base_name.clone()
        } else {
            format!("{}${}", self.base_name, self.variant)
        }
    }

    /// The named constant in the command parameter, if any.
    pub fn derive_identifier(&self) -> Option<String> {
        let idx = identifier_param_index(&self.base_name)?;
        match &self.params.get(idx)?.ty {
            TypeExpr::Const {
                value: ConstValue::Named(n),
                ..
            } => Some(n.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    Struct,
    Union,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub ty: TypeExpr,
    pub dir: Option<Dir>,
}

impl Field {
    pub fn new(name: &str, ty: TypeExpr) -> Self {
        Self {
            name: name.into(),
            ty,
            dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDef {
    pub name: String,
    pub kind: RecordKind,
    pub fields: Vec<Field>,
    /// `[packed]`, `[varlen]`, ...
    pub attrs: Vec<String>,
    pub comments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSet {
    pub name: String,
    pub values: Vec<ConstValue>,
    pub comments: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecFile {
    pub includes: Vec<String>,
    pub resources: Vec<ResourceDecl>,
    pub syscalls: Vec<SyscallDesc>,
    pub types: Vec<TypeDef>,
    pub flag_sets: Vec<FlagSet>,
    /// Filled by constant resolution; emitted as the `.const` sidecar.
    pub constants: BTreeMap<String, u64>,
}

/// A top-level declaration, addressed by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeclKind {
    Include,
    Resource,
    Syscall,
    Type,
    FlagSet,
}

impl SpecFile {
    pub fn is_empty(&self) -> bool {
        self.includes.is_empty()
            && self.resources.is_empty()
            && self.syscalls.is_empty()
            && self.types.is_empty()
            && self.flag_sets.is_empty()
    }

    pub fn resource(&self, name: &str) -> Option<&ResourceDecl> {
        self.resources.iter().find(|r| r.name == name)
    }

    pub fn type_def(&self, name: &str) -> Option<&TypeDef> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn syscall(&self, full_name: &str) -> Option<&SyscallDesc> {
        self.syscalls.iter().find(|s| s.full_name() == full_name)
    }

    pub fn flag_set(&self, name: &str) -> Option<&FlagSet> {
        self.flag_sets.iter().find(|f| f.name == name)
    }

    /// Kind of the declaration named `target`, syscalls first.
    pub fn decl_kind(&self, target: &str) -> Option<DeclKind> {
        if self.syscall(target).is_some() {
            Some(DeclKind::Syscall)
        } else if self.type_def(target).is_some() {
            Some(DeclKind::Type)
        } else if self.resource(target).is_some() {
            Some(DeclKind::Resource)
        } else if self.flag_set(target).is_some() {
            Some(DeclKind::FlagSet)
        } else {
            None
        }
    }

    /// Every named constant the spec refers to, first-use order, deduplicated.
    pub fn constant_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for s in &self.syscalls {
            for p in &s.params {
                p.ty.constants(&mut names);
            }
        }
        for t in &self.types {
            for f in &t.fields {
                f.ty.constants(&mut names);
            }
        }
        for fs in &self.flag_sets {
            for v in &fs.values {
                if let ConstValue::Named(n) = v {
                    names.push(n.clone());
                }
            }
        }
        let mut seen = BTreeSet::new();
        names.retain(|n| seen.insert(n.clone()));
        names
    }

    /// Recompute `produced_by`/`consumed_by` of every resource from the
    /// syscall signatures.
    pub fn link_resources(&mut self) {
        let flow: Vec<(String, ResourceFlow)> = self
            .syscalls
            .iter()
            .map(|s| (s.full_name(), resource_flow(self, s)))
            .collect();
        for r in &mut self.resources {
            r.produced_by = flow
                .iter()
                .filter(|(_, f)| f.produced.contains(&r.name))
                .map(|(n, _)| n.clone())
                .collect();
            r.consumed_by = flow
                .iter()
                .filter(|(_, f)| f.consumed.contains(&r.name))
                .map(|(n, _)| n.clone())
                .collect();
            r.produced_by.sort();
            r.produced_by.dedup();
            r.consumed_by.sort();
            r.consumed_by.dedup();
        }
    }
}

/// Resource names one syscall reads and writes.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ResourceFlow {
    pub produced: BTreeSet<String>,
    pub consumed: BTreeSet<String>,
}

/// Walk a syscall's signature: a resource is produced by the return value
/// or by any position the kernel writes (`ptr[out|inout]`, `(out)` fields),
/// and consumed by any position userspace supplies.
pub fn resource_flow(spec: &SpecFile, s: &SyscallDesc) -> ResourceFlow {
    let mut flow = ResourceFlow::default();
    if let Some(r) = &s.ret {
        flow.produced.insert(r.clone());
    }
    let mut visiting = BTreeSet::new();
    for p in &s.params {
        walk_flow(spec, &p.ty, Dir::In, &mut flow, &mut visiting);
    }
    flow
}

fn walk_flow(spec: &SpecFile, ty: &TypeExpr, dir: Dir, flow: &mut ResourceFlow, visiting: &mut BTreeSet<String>) {
    match ty {
        TypeExpr::Ref(name) => {
            if let Some(t) = spec.type_def(name) {
                if !visiting.insert(name.clone()) {
                    return;
                }
                for f in &t.fields {
                    walk_flow(spec, &f.ty, f.dir.unwrap_or(dir), flow, visiting);
                }
                visiting.remove(name);
            } else if spec.flag_set(name).is_none() {
                if dir != Dir::Out {
                    flow.consumed.insert(name.clone());
                }
                if dir.writes() {
                    flow.produced.insert(name.clone());
                }
            }
        }
        TypeExpr::Ptr { dir: pd, elem } => walk_flow(spec, elem, *pd, flow, visiting),
        TypeExpr::Array { elem, .. } => walk_flow(spec, elem, dir, flow, visiting),
        _ => {}
    }
}
