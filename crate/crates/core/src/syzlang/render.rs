//! Canonical text form.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::ast::*;

/// Where one declaration landed in the rendered text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclLine {
    pub kind: DeclKind,
    pub name: String,
    /// 1-based line of the declaration head (after its comments).
    pub line: u32,
    pub end_line: u32,
}

pub fn fmt_int(v: i64) -> String {
    if (0..256).contains(&v) || v < 0 {
        v.to_string()
    } else {
        format!("0x{v:x}")
    }
}

fn fmt_const(v: &ConstValue) -> String {
    match v {
        ConstValue::Int(i) => fmt_int(*i),
        ConstValue::Named(n) => n.clone(),
    }
}

fn with_base(head: &str, inner: &str, base: Option<IntBits>) -> String {
    match base {
        Some(b) => format!("{head}[{inner}, {}]", b.as_str()),
        None => format!("{head}[{inner}]"),
    }
}

pub fn render_type(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Const { value, base } => with_base("const", &fmt_const(value), *base),
        TypeExpr::Int { bits, range: None } => bits.as_str().to_string(),
        TypeExpr::Int {
            bits,
            range: Some((lo, hi)),
        } => format!("{}[{lo}:{hi}]", bits.as_str()),
        TypeExpr::Flags { set, base } => with_base("flags", set, *base),
        TypeExpr::Ptr { dir, elem } => format!("ptr[{}, {}]", dir.as_str(), render_type(elem)),
        TypeExpr::Array { elem, len: None } => format!("array[{}]", render_type(elem)),
        TypeExpr::Array { elem, len: Some(l) } => {
            let l = match l {
                ArrayLen::Literal(v) => v.to_string(),
                ArrayLen::Named(n) => n.clone(),
            };
            format!("array[{}, {l}]", render_type(elem))
        }
        TypeExpr::String { literal: None } => "string".into(),
        TypeExpr::String { literal: Some(s) } => format!("string[\"{s}\"]"),
        TypeExpr::Len { path, base } => with_base("len", &path.join(":"), *base),
        TypeExpr::Ref(n) => n.clone(),
    }
}

fn comments(out: &mut String, cs: &[String]) {
    for c in cs {
        if c.is_empty() {
            out.push_str("#\n");
        } else {
            let _ = writeln!(out, "# {c}");
        }
    }
}

pub fn render_resource(r: &ResourceDecl) -> String {
    let mut s = String::new();
    comments(&mut s, &r.comments);
    let _ = writeln!(s, "resource {}[{}]", r.name, r.underlying);
    s
}

pub fn render_syscall(c: &SyscallDesc) -> String {
    let mut s = String::new();
    comments(&mut s, &c.comments);
    let params: Vec<String> = c
        .params
        .iter()
        .map(|p| format!("{} {}", p.name, render_type(&p.ty)))
        .collect();
    let _ = write!(s, "{}({})", c.full_name(), params.join(", "));
    if let Some(r) = &c.ret {
        let _ = write!(s, " {r}");
    }
    s.push('\n');
    s
}

pub fn render_typedef(t: &TypeDef) -> String {
    let mut s = String::new();
    comments(&mut s, &t.comments);
    let (open, close) = match t.kind {
        RecordKind::Struct => ('{', '}'),
        RecordKind::Union => ('[', ']'),
    };
    let _ = writeln!(s, "{} {open}", t.name);
    for f in &t.fields {
        let _ = write!(s, "\t{} {}", f.name, render_type(&f.ty));
        if let Some(d) = f.dir {
            let _ = write!(s, " ({})", d.as_str());
        }
        s.push('\n');
    }
    s.push(close);
    if !t.attrs.is_empty() {
        let _ = write!(s, " [{}]", t.attrs.join(", "));
    }
    s.push('\n');
    s
}

pub fn render_flag_set(f: &FlagSet) -> String {
    let mut s = String::new();
    comments(&mut s, &f.comments);
    let vals: Vec<String> = f.values.iter().map(fmt_const).collect();
    let _ = writeln!(s, "{} = {}", f.name, vals.join(", "));
    s
}

/// Text of a single declaration, or `None` if there is no such target.
pub fn render_decl(spec: &SpecFile, target: &str) -> Option<String> {
    if let Some(s) = spec.syscall(target) {
        return Some(render_syscall(s));
    }
    if let Some(t) = spec.type_def(target) {
        return Some(render_typedef(t));
    }
    if let Some(r) = spec.resource(target) {
        return Some(render_resource(r));
    }
    spec.flag_set(target).map(render_flag_set)
}

pub fn render_spec(spec: &SpecFile) -> String {
    render_with_lines(spec).0
}

/// Render and report each declaration's line span.
pub fn render_with_lines(spec: &SpecFile) -> (String, Vec<DeclLine>) {
    // blocks separated by one blank line; a block is a list of decls
    let mut blocks: Vec<Vec<(DeclKind, String, usize, String)>> = Vec::new();
    if !spec.includes.is_empty() {
        blocks.push(
            spec.includes
                .iter()
                .map(|i| (DeclKind::Include, i.clone(), 0, format!("include <{i}>\n")))
                .collect(),
        );
    }
    let block = |v: Vec<(DeclKind, String, usize, String)>, blocks: &mut Vec<_>| {
        if !v.is_empty() {
            blocks.push(v);
        }
    };
    block(
        spec.resources
            .iter()
            .map(|r| (DeclKind::Resource, r.name.clone(), r.comments.len(), render_resource(r)))
            .collect(),
        &mut blocks,
    );
    block(
        spec.syscalls
            .iter()
            .map(|c| (DeclKind::Syscall, c.full_name(), c.comments.len(), render_syscall(c)))
            .collect(),
        &mut blocks,
    );
    for t in &spec.types {
        blocks.push(vec![(
            DeclKind::Type,
            t.name.clone(),
            t.comments.len(),
            render_typedef(t),
        )]);
    }
    block(
        spec.flag_sets
            .iter()
            .map(|f| (DeclKind::FlagSet, f.name.clone(), f.comments.len(), render_flag_set(f)))
            .collect(),
        &mut blocks,
    );

    let mut out = String::new();
    let mut lines = Vec::new();
    let mut line = 1u32;
    for (bi, b) in blocks.into_iter().enumerate() {
        if bi > 0 {
            out.push('\n');
            line += 1;
        }
        for (kind, name, n_comments, text) in b {
            let n = text.lines().count() as u32;
            lines.push(DeclLine {
                kind,
                name,
                line: line + n_comments as u32,
                end_line: line + n - 1,
            });
            out.push_str(&text);
            line += n;
        }
    }
    (out, lines)
}

/// Declaration containing `line`, or the nearest one before it.
pub fn decl_at_line(lines: &[DeclLine], line: u32) -> Option<&DeclLine> {
    lines
        .iter()
        .rev()
        .find(|d| d.kind != DeclKind::Include && d.line <= line)
}

/// `NAME = value` lines sorted by name.
pub fn render_const_file(constants: &BTreeMap<String, u64>) -> String {
    let mut s = String::new();
    for (k, v) in constants {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn parse_const_file(text: &str) -> Result<BTreeMap<String, u64>, String> {
    let mut m = BTreeMap::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected NAME = value", i + 1))?;
        let v = v.trim();
        let n = if let Some(h) = v.strip_prefix("0x") {
            u64::from_str_radix(h, 16)
        } else {
            v.parse()
        }
        .map_err(|_| format!("line {}: bad integer {v:?}", i + 1))?;
        m.insert(k.trim().to_string(), n);
    }
    Ok(m)
}
