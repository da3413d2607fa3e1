//! Semantic checks over a parsed spec.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::indexer::DefinitionDatabase;

use super::ast::*;
use super::parser::parse_spec;
use super::render::render_with_lines;
use super::resolve::{ConstantTable, BUILTIN_RESOURCES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    UndefinedType,
    UnknownConstant,
    NonConstantArrayLength,
    UnmatchedDependency,
    DuplicateSyscall,
    IllegalRange,
    CyclicType,
    SyntaxError,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 8] = [
        ErrorCode::UndefinedType,
        ErrorCode::UnknownConstant,
        ErrorCode::NonConstantArrayLength,
        ErrorCode::UnmatchedDependency,
        ErrorCode::DuplicateSyscall,
        ErrorCode::IllegalRange,
        ErrorCode::CyclicType,
        ErrorCode::SyntaxError,
    ];
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub code: ErrorCode,
    pub message: String,
    /// Offending declaration; empty for syntax errors.
    pub target: String,
    pub location: Location,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.location.file, self.location.line, self.code, self.message
        )
    }
}

/// Knobs for [`validate_with`].
#[derive(Clone)]
pub struct ValidateOptions<'a> {
    pub db: Option<&'a DefinitionDatabase>,
    /// File name used in error locations.
    pub file: String,
    pub builtin_resources: Vec<String>,
    /// Resources declared by sibling specs of the same run, with whether
    /// any of them produces it.
    pub external_resources: BTreeMap<String, bool>,
}

impl Default for ValidateOptions<'_> {
    fn default() -> Self {
        Self {
            db: None,
            file: "<spec>".into(),
            builtin_resources: BUILTIN_RESOURCES.iter().map(|s| s.to_string()).collect(),
            external_resources: BTreeMap::new(),
        }
    }
}

impl<'a> ValidateOptions<'a> {
    pub fn with_db(db: &'a DefinitionDatabase) -> Self {
        Self {
            db: Some(db),
            ..Default::default()
        }
    }

    pub fn file(mut self, f: &str) -> Self {
        self.file = f.to_string();
        self
    }

    /// Treat every resource in `others` as declared, and as produced when
    /// some syscall there returns or writes it.
    pub fn externals<'s>(mut self, others: impl IntoIterator<Item = &'s SpecFile>) -> Self {
        for o in others {
            let mut o = o.clone();
            o.link_resources();
            for r in &o.resources {
                let e = self.external_resources.entry(r.name.clone()).or_insert(false);
                *e |= !r.produced_by.is_empty();
            }
        }
        self
    }
}

pub fn validate_spec(spec: &SpecFile, db: &DefinitionDatabase) -> Vec<ValidationError> {
    validate_with(spec, &ValidateOptions::with_db(db))
}

pub fn validate_with(spec: &SpecFile, opts: &ValidateOptions<'_>) -> Vec<ValidationError> {
    check_spec(spec, opts).errors
}

/// Parse then validate; parse failures become a single `SyntaxError`.
pub fn validate_text(
    text: &str,
    opts: &ValidateOptions<'_>,
) -> Result<(SpecFile, Vec<ValidationError>), ValidationError> {
    match parse_spec(text) {
        Ok(spec) => {
            let errs = validate_with(&spec, opts);
            Ok((spec, errs))
        }
        Err(e) => Err(ValidationError {
            code: ErrorCode::SyntaxError,
            message: format!("expected {} at column {}", e.expected, e.col),
            target: String::new(),
            location: Location {
                file: opts.file.clone(),
                line: e.line,
            },
        }),
    }
}

pub(crate) struct CheckReport {
    pub errors: Vec<ValidationError>,
    pub resolved: BTreeMap<String, u64>,
}

struct Checker<'s, 'o> {
    spec: &'s SpecFile,
    opts: &'o ValidateOptions<'o>,
    consts: ConstantTable<'o>,
    lines: BTreeMap<(DeclKind, String), Vec<u32>>,
    errors: Vec<ValidationError>,
    resolved: BTreeMap<String, u64>,
    reported_consts: BTreeSet<(String, String)>,
}

const INT_NAMES: [&str; 5] = ["int8", "int16", "int32", "int64", "intptr"];

pub(crate) fn check_spec(spec: &SpecFile, opts: &ValidateOptions<'_>) -> CheckReport {
    let (_, decl_lines) = render_with_lines(spec);
    let mut lines: BTreeMap<(DeclKind, String), Vec<u32>> = BTreeMap::new();
    for d in decl_lines {
        lines.entry((d.kind, d.name)).or_default().push(d.line);
    }
    let mut c = Checker {
        spec,
        opts,
        consts: ConstantTable::new(opts.db, &spec.constants),
        lines,
        errors: Vec::new(),
        resolved: BTreeMap::new(),
        reported_consts: BTreeSet::new(),
    };
    c.run();
    let mut errors = c.errors;
    errors.sort_by_key(|e| e.location.line);
    CheckReport {
        errors,
        resolved: c.resolved,
    }
}

impl Checker<'_, '_> {
    fn line_of(&self, kind: DeclKind, name: &str, last: bool) -> u32 {
        self.lines
            .get(&(kind, name.to_string()))
            .and_then(|v| if last { v.last() } else { v.first() })
            .copied()
            .unwrap_or(0)
    }

    fn push(&mut self, code: ErrorCode, kind: DeclKind, target: &str, message: String) {
        let line = self.line_of(kind, target, code == ErrorCode::DuplicateSyscall);
        self.errors.push(ValidationError {
            code,
            message,
            target: target.to_string(),
            location: Location {
                file: self.opts.file.clone(),
                line,
            },
        });
    }

    fn is_resource(&self, name: &str) -> bool {
        self.spec.resource(name).is_some()
            || self.opts.builtin_resources.iter().any(|b| b == name)
            || self.opts.external_resources.contains_key(name)
    }

    fn run(&mut self) {
        let spec = self.spec;
        self.duplicates();
        for r in &spec.resources {
            let u = &r.underlying;
            if !INT_NAMES.contains(&u.as_str()) && !self.is_resource(u) {
                self.push(
                    ErrorCode::UndefinedType,
                    DeclKind::Resource,
                    &r.name,
                    format!("resource {} has undefined underlying type {u}", r.name),
                );
            }
        }
        for s in &spec.syscalls {
            let name = s.full_name();
            let scope: Vec<(String, TypeExpr)> = s.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect();
            for p in &s.params {
                self.check_type(&p.ty, &scope, DeclKind::Syscall, &name);
            }
            if let Some(r) = &s.ret {
                if !self.is_resource(r) {
                    self.push(
                        ErrorCode::UndefinedType,
                        DeclKind::Syscall,
                        &name,
                        format!("return type {r} of {name} is not a resource"),
                    );
                }
            }
        }
        for t in &spec.types {
            let scope: Vec<(String, TypeExpr)> = t.fields.iter().map(|f| (f.name.clone(), f.ty.clone())).collect();
            for f in &t.fields {
                self.check_type(&f.ty, &scope, DeclKind::Type, &t.name);
            }
        }
        for fs in &spec.flag_sets {
            for v in &fs.values {
                if let ConstValue::Named(n) = v {
                    self.constant(n, DeclKind::FlagSet, &fs.name);
                }
            }
        }
        self.cycles();
        self.dependencies();
    }

    fn duplicates(&mut self) {
        let mut seen = BTreeSet::new();
        let mut dup_sys = BTreeSet::new();
        for s in &self.spec.syscalls {
            let n = s.full_name();
            if !seen.insert(n.clone()) {
                dup_sys.insert(n);
            }
        }
        for n in dup_sys {
            self.push(
                ErrorCode::DuplicateSyscall,
                DeclKind::Syscall,
                &n,
                format!("syscall {n} is declared more than once"),
            );
        }
        // types, resources and flag sets share one namespace
        let mut names: BTreeMap<String, Vec<DeclKind>> = BTreeMap::new();
        for r in &self.spec.resources {
            names.entry(r.name.clone()).or_default().push(DeclKind::Resource);
        }
        for t in &self.spec.types {
            names.entry(t.name.clone()).or_default().push(DeclKind::Type);
        }
        for f in &self.spec.flag_sets {
            names.entry(f.name.clone()).or_default().push(DeclKind::FlagSet);
        }
        for (n, kinds) in names {
            if kinds.len() > 1 {
                self.push(
                    ErrorCode::DuplicateSyscall,
                    *kinds.last().unwrap(),
                    &n,
                    format!("{n} is declared more than once"),
                );
            }
        }
    }

    fn constant(&mut self, name: &str, kind: DeclKind, target: &str) {
        if let Some(v) = self.consts.lookup(name) {
            self.resolved.insert(name.to_string(), v);
        } else if self.reported_consts.insert((target.to_string(), name.to_string())) {
            self.push(
                ErrorCode::UnknownConstant,
                kind,
                target,
                format!("unknown constant {name} in {target}"),
            );
        }
    }

    fn check_type(&mut self, ty: &TypeExpr, scope: &[(String, TypeExpr)], kind: DeclKind, target: &str) {
        match ty {
            TypeExpr::Const {
                value: ConstValue::Named(n),
                ..
            } => self.constant(n, kind, target),
            TypeExpr::Const { .. } | TypeExpr::String { .. } => {}
            TypeExpr::Int {
                bits,
                range: Some((lo, hi)),
            } => {
                let w = bits.width();
                let fits = w == 64 || (*lo >= -(1i64 << (w - 1)) && *hi < (1i64 << w));
                if lo > hi {
                    self.push(
                        ErrorCode::IllegalRange,
                        kind,
                        target,
                        format!("range [{lo}:{hi}] in {target} is empty"),
                    );
                } else if !fits {
                    self.push(
                        ErrorCode::IllegalRange,
                        kind,
                        target,
                        format!("range [{lo}:{hi}] in {target} does not fit {}", bits.as_str()),
                    );
                }
            }
            TypeExpr::Int { .. } => {}
            TypeExpr::Flags { set, .. } => {
                if self.spec.flag_set(set).is_none() {
                    self.push(
                        ErrorCode::UndefinedType,
                        kind,
                        target,
                        format!("undefined flag set {set} in {target}"),
                    );
                }
            }
            TypeExpr::Ptr { elem, .. } => self.check_type(elem, scope, kind, target),
            TypeExpr::Array { elem, len } => {
                self.check_type(elem, scope, kind, target);
                if let Some(ArrayLen::Named(n)) = len {
                    if scope.iter().any(|(s, _)| s == n) {
                        self.push(
                            ErrorCode::NonConstantArrayLength,
                            kind,
                            target,
                            format!("{n} is unsupported on all arches"),
                        );
                    } else {
                        self.constant(n, kind, target);
                    }
                }
            }
            TypeExpr::Len { path, .. } => {
                if !self.len_path_ok(path, scope) {
                    self.push(
                        ErrorCode::UndefinedType,
                        kind,
                        target,
                        format!("len target {} in {target} is not a field", path.join(":")),
                    );
                }
            }
            TypeExpr::Ref(n) => {
                let known = self.spec.type_def(n).is_some() || self.is_resource(n);
                if !known {
                    self.push(
                        ErrorCode::UndefinedType,
                        kind,
                        target,
                        format!("undefined type {n} in {target}"),
                    );
                }
            }
        }
    }

    fn len_path_ok(&self, path: &[String], scope: &[(String, TypeExpr)]) -> bool {
        let mut fields: Vec<(String, TypeExpr)> = scope.to_vec();
        for (i, comp) in path.iter().enumerate() {
            let Some((_, ty)) = fields.iter().find(|(n, _)| n == comp) else {
                return false;
            };
            if i + 1 == path.len() {
                return true;
            }
            let mut t = ty.clone();
            while let TypeExpr::Ptr { elem, .. } | TypeExpr::Array { elem, .. } = t {
                t = *elem;
            }
            let TypeExpr::Ref(r) = t else { return false };
            let Some(def) = self.spec.type_def(&r) else {
                return false;
            };
            fields = def.fields.iter().map(|f| (f.name.clone(), f.ty.clone())).collect();
        }
        false
    }

    fn cycles(&mut self) {
        let spec = self.spec;
        let embeds = |t: &TypeDef| -> BTreeSet<String> {
            let mut out = BTreeSet::new();
            for f in &t.fields {
                embedded_refs(&f.ty, &mut out);
            }
            out.retain(|n| spec.type_def(n).is_some());
            out
        };
        let graph: BTreeMap<&str, BTreeSet<String>> = spec.types.iter().map(|t| (t.name.as_str(), embeds(t))).collect();
        let reach = |from: &str| -> BTreeSet<String> {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<String> = graph.get(from).into_iter().flatten().cloned().collect();
            while let Some(n) = stack.pop() {
                if seen.insert(n.clone()) {
                    stack.extend(graph.get(n.as_str()).into_iter().flatten().cloned());
                }
            }
            seen
        };
        let reach: BTreeMap<&str, BTreeSet<String>> =
            spec.types.iter().map(|t| (t.name.as_str(), reach(&t.name))).collect();
        let mut reported: BTreeSet<String> = BTreeSet::new();
        for t in &spec.types {
            let r = &reach[t.name.as_str()];
            if !r.contains(&t.name) || reported.contains(&t.name) {
                continue;
            }
            let members: Vec<String> = spec
                .types
                .iter()
                .filter(|u| r.contains(&u.name) && reach[u.name.as_str()].contains(&t.name))
                .map(|u| u.name.clone())
                .collect();
            reported.extend(members.iter().cloned());
            self.push(
                ErrorCode::CyclicType,
                DeclKind::Type,
                &t.name,
                format!(
                    "type {} contains itself without pointer indirection (cycle: {})",
                    t.name,
                    members.join(", ")
                ),
            );
        }
    }

    fn dependencies(&mut self) {
        let spec = self.spec;
        let flows: Vec<(String, ResourceFlow)> = spec
            .syscalls
            .iter()
            .map(|s| (s.full_name(), resource_flow(spec, s)))
            .collect();
        let mut produced: BTreeSet<String> = flows.iter().flat_map(|(_, f)| f.produced.clone()).collect();
        produced.extend(self.opts.builtin_resources.iter().cloned());
        produced.extend(
            self.opts
                .external_resources
                .iter()
                .filter(|(_, p)| **p)
                .map(|(n, _)| n.clone()),
        );
        for (name, f) in flows {
            for r in &f.consumed {
                let declared = spec.resource(r).is_some() || self.opts.external_resources.contains_key(r);
                if declared && !produced.contains(r) {
                    self.push(
                        ErrorCode::UnmatchedDependency,
                        DeclKind::Syscall,
                        &name,
                        format!("resource {r} consumed by {name} is never produced"),
                    );
                }
            }
        }
    }
}

/// Refs reachable without crossing a pointer.
fn embedded_refs(t: &TypeExpr, out: &mut BTreeSet<String>) {
    match t {
        TypeExpr::Ref(n) => {
            out.insert(n.clone());
        }
        TypeExpr::Array { elem, .. } => embedded_refs(elem, out),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(text: &str) -> Vec<ErrorCode> {
        let spec = parse_spec(text).unwrap();
        validate_with(&spec, &ValidateOptions::default())
            .into_iter()
            .map(|e| e.code)
            .collect()
    }

    const OPEN: &str = "resource fd_x[fd]\nopenat$x(fd const[0], file ptr[in, string[\"/dev/x\"]], flags const[2], mode const[0]) fd_x\n";

    #[test]
    fn minimal_valid() {
        assert!(codes(OPEN).is_empty());
    }

    #[test]
    fn each_code() {
        let cases = [
            (
                "ioctl$a(fd fd_x, cmd const[1], arg ptr[in, foo_args])\n",
                ErrorCode::UndefinedType,
            ),
            ("ioctl$a(fd fd_x, cmd const[NOPE])\n", ErrorCode::UnknownConstant),
            (
                "s {\n\tcount int32\n\tdevices array[int64, count]\n}\n",
                ErrorCode::NonConstantArrayLength,
            ),
            (
                "ioctl$a(fd fd_x, cmd const[1])\nioctl$a(fd fd_x, cmd const[2])\n",
                ErrorCode::DuplicateSyscall,
            ),
            ("s {\n\tp int8[0:300]\n}\n", ErrorCode::IllegalRange),
            ("s {\n\tp int8[5:3]\n}\n", ErrorCode::IllegalRange),
            ("a {\n\tb b\n}\nb {\n\ta array[a, 2]\n}\n", ErrorCode::CyclicType),
        ];
        for (extra, code) in cases {
            let got = codes(&format!("{OPEN}{extra}"));
            assert_eq!(got, [code], "{extra}");
        }
    }

    #[test]
    fn pointer_breaks_cycle() {
        assert!(codes("a {\n\tnext ptr[in, a]\n}\n").is_empty());
    }

    #[test]
    fn unmatched_dependency_per_consumer() {
        let text = "resource fd_y[fd]\nioctl$a(fd fd_y, cmd const[1])\nioctl$b(fd fd_y, cmd const[2])\n";
        let spec = parse_spec(text).unwrap();
        let errs = validate_with(&spec, &ValidateOptions::default());
        let t: Vec<_> = errs.iter().map(|e| (e.code, e.target.as_str())).collect();
        assert_eq!(
            t,
            [
                (ErrorCode::UnmatchedDependency, "ioctl$a"),
                (ErrorCode::UnmatchedDependency, "ioctl$b")
            ]
        );
        assert_eq!(errs[0].location.line, 3);
    }

    #[test]
    fn out_field_produces() {
        let text = "resource r[int32]\ns {\n\tid r (out)\n}\nioctl$get(fd fd, cmd const[1], arg ptr[in, s])\nioctl$use(fd fd, cmd const[2], arg r)\n";
        assert!(codes(text).is_empty());
    }

    #[test]
    fn externals_satisfy_consumers() {
        let producer = parse_spec("resource fd_vm[fd]\nioctl$mk(fd fd, cmd const[1]) fd_vm\n").unwrap();
        let consumer = parse_spec("ioctl$run(fd fd_vm, cmd const[2])\n").unwrap();
        let alone = validate_with(&consumer, &ValidateOptions::default());
        assert_eq!(alone[0].code, ErrorCode::UndefinedType);
        let opts = ValidateOptions::default().externals([&producer]);
        assert!(validate_with(&consumer, &opts).is_empty());
    }

    #[test]
    fn len_paths() {
        assert!(codes("s {\n\tn len[v]\n\tv array[int8]\n}\n").is_empty());
        assert_eq!(
            codes("s {\n\tn len[w]\n\tv array[int8]\n}\n"),
            [ErrorCode::UndefinedType]
        );
        assert!(codes("t {\n\tv array[int8]\n}\ns {\n\tn len[h:v]\n\th ptr[in, t]\n}\n").is_empty());
    }

    #[test]
    fn syntax_error_from_text() {
        let e = validate_text("ioctl$x(fd\n", &ValidateOptions::default()).unwrap_err();
        assert_eq!(e.code, ErrorCode::SyntaxError);
        assert_eq!(e.location.line, 1);
    }
}
