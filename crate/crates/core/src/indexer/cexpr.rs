//! Evaluation of C integer constant expressions over the macro table,
//! including the `_IO`/`_IOR`/`_IOW`/`_IOWR` family and `sizeof` on
//! x86-64 LP64 type layouts.

use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

use super::lexer::{lex, Token, TokenKind};
use super::{DefKind, DefinitionDatabase};

pub const IOC_NRBITS: u32 = 8;
pub const IOC_TYPEBITS: u32 = 8;
pub const IOC_SIZEBITS: u32 = 14;
pub const IOC_DIRBITS: u32 = 2;
pub const IOC_NRSHIFT: u32 = 0;
pub const IOC_TYPESHIFT: u32 = IOC_NRSHIFT + IOC_NRBITS;
pub const IOC_SIZESHIFT: u32 = IOC_TYPESHIFT + IOC_TYPEBITS;
pub const IOC_DIRSHIFT: u32 = IOC_SIZESHIFT + IOC_SIZEBITS;
pub const IOC_NONE: u64 = 0;
pub const IOC_WRITE: u64 = 1;
pub const IOC_READ: u64 = 2;

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("`{0}` is not defined")]
    Undefined(String),
    #[error("unsupported expression: {0}")]
    Unsupported(String),
    #[error("macro expansion too deep at `{0}`")]
    TooDeep(String),
    #[error("ioctl field out of range: {0}")]
    IocRange(String),
}

/// Encode an ioctl command number with the generic Linux layout.
pub fn ioc(dir: u64, ty: u64, nr: u64, size: u64) -> Result<u64, EvalError> {
    let check = |v: u64, bits: u32, what: &str| {
        if v >> bits != 0 {
            Err(EvalError::IocRange(format!("{what} {v} exceeds {bits} bits")))
        } else {
            Ok(v)
        }
    };
    Ok((check(dir, IOC_DIRBITS, "direction")? << IOC_DIRSHIFT)
        | (check(ty, IOC_TYPEBITS, "type")? << IOC_TYPESHIFT)
        | (check(nr, IOC_NRBITS, "number")? << IOC_NRSHIFT)
        | (check(size, IOC_SIZEBITS, "size")? << IOC_SIZESHIFT))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub size: u64,
    pub align: u64,
}

/// Memoizing evaluator bound to one database.
pub struct ConstEvaluator<'a> {
    db: &'a DefinitionDatabase,
    cache: RefCell<HashMap<String, Result<u64, EvalError>>>,
}

impl<'a> ConstEvaluator<'a> {
    pub fn new(db: &'a DefinitionDatabase) -> Self {
        Self {
            db,
            cache: RefCell::new(HashMap::new()),
        }
    }

    /// Value of a macro or enumerator.
    pub fn eval_name(&self, name: &str) -> Result<u64, EvalError> {
        self.name_at(name, 0)
    }

    pub fn eval_expr(&self, expr: &str) -> Result<u64, EvalError> {
        self.text_at(expr, 0)
    }

    fn name_at(&self, name: &str, depth: usize) -> Result<u64, EvalError> {
        if let Some(r) = self.cache.borrow().get(name) {
            return r.clone();
        }
        if depth > MAX_DEPTH {
            return Err(EvalError::TooDeep(name.to_string()));
        }
        let body = self
            .db
            .macro_body(name)
            .or_else(|| self.db.enumerator(name))
            .ok_or_else(|| EvalError::Undefined(name.to_string()))?;
        if body.is_empty() {
            return Err(EvalError::Unsupported(format!("`{name}` has an empty body")));
        }
        let r = self.text_at(body, depth + 1);
        self.cache.borrow_mut().insert(name.to_string(), r.clone());
        r
    }

    fn text_at(&self, text: &str, depth: usize) -> Result<u64, EvalError> {
        let lx = lex(text);
        let mut p = ExprParser {
            ev: self,
            src: text,
            toks: &lx.tokens,
            pos: 0,
            depth,
        };
        let v = p.expr(0)?;
        if p.pos != lx.tokens.len() {
            return Err(EvalError::Unsupported(text.to_string()));
        }
        Ok(v)
    }

    /// Size of a C type spelled as text, e.g. `struct dm_ioctl` or `__u32`.
    pub fn sizeof_type(&self, ty: &str) -> Result<u64, EvalError> {
        Ok(self.layout_of_type(ty, 0)?.size)
    }

    fn layout_of_type(&self, ty: &str, depth: usize) -> Result<Layout, EvalError> {
        if depth > MAX_DEPTH {
            return Err(EvalError::TooDeep(ty.to_string()));
        }
        let words: Vec<&str> = ty
            .split(|c: char| c.is_whitespace())
            .filter(|w| !w.is_empty())
            .collect();
        let ty_norm = words.join(" ");
        if ty_norm.ends_with('*') {
            return Ok(Layout { size: 8, align: 8 });
        }
        let words: Vec<&str> = ty_norm
            .split(' ')
            .filter(|w| !matches!(*w, "const" | "volatile" | "__user" | "__iomem"))
            .collect();
        match words.as_slice() {
            ["struct", name] | ["union", name] => self.record_layout(name, depth),
            ["enum", _] => Ok(Layout { size: 4, align: 4 }),
            _ => {
                if let Some(size) = primitive_size(&words) {
                    return Ok(Layout { size, align: size });
                }
                if let [name] = words.as_slice() {
                    if self.db.record_definition(name).is_some() {
                        return self.record_layout(name, depth);
                    }
                }
                Err(EvalError::Unsupported(format!("sizeof({ty_norm})")))
            }
        }
    }

    fn record_layout(&self, name: &str, depth: usize) -> Result<Layout, EvalError> {
        let def = self
            .db
            .record_definition(name)
            .ok_or_else(|| EvalError::Undefined(format!("struct {name}")))?;
        let lx = lex(&def.text);
        let toks = &lx.tokens;
        let open = toks
            .iter()
            .position(|t| t.is_punct(&def.text, '{'))
            .ok_or_else(|| EvalError::Unsupported(format!("struct {name} has no body")))?;
        let close = matching(&def.text, toks, open);
        let packed = toks[close..]
            .iter()
            .chain(toks[..open].iter())
            .any(|t| matches!(t.text(&def.text), "packed" | "__packed"));
        let is_union = def.kind == DefKind::Union;
        self.body_layout(&def.text, toks, open, close, is_union, packed, depth + 1)
    }

    #[allow(clippy::too_many_arguments)]
    fn body_layout(
        &self,
        src: &str,
        toks: &[Token],
        open: usize,
        close: usize,
        is_union: bool,
        packed: bool,
        depth: usize,
    ) -> Result<Layout, EvalError> {
        let mut size = 0u64;
        let mut align = 1u64;
        let mut i = open + 1;
        while i < close {
            // one member declaration up to ';' at depth 0
            let mut j = i;
            let mut d = 0i32;
            let mut inner_open = None;
            while j < close {
                let t = toks[j].text(src);
                match t {
                    "{" => {
                        if d == 0 && inner_open.is_none() {
                            inner_open = Some(j);
                        }
                        d += 1;
                    }
                    "(" | "[" => d += 1,
                    "}" | ")" | "]" => d -= 1,
                    ";" if d == 0 => break,
                    _ => {}
                }
                j += 1;
            }
            let members: Vec<Layout> = if let Some(io) = inner_open {
                let ic = matching(src, toks, io);
                let inner_union = toks[i..io].iter().any(|t| t.text(src) == "union");
                let inner = self.body_layout(src, toks, io, ic, inner_union, packed, depth + 1)?;
                let dims = self.declarator_dims(src, &toks[ic + 1..j], depth)?;
                vec![scale(inner, dims.first().copied().unwrap_or(1))]
            } else {
                self.member_layouts(src, &toks[i..j], depth)?
            };
            for m in members {
                let a = if packed { 1 } else { m.align };
                align = align.max(a);
                if is_union {
                    size = size.max(m.size);
                } else {
                    size = round_up(size, a) + m.size;
                }
            }
            i = j + 1;
        }
        Ok(Layout {
            size: round_up(size, align),
            align,
        })
    }

    /// Layouts for `type a, *b, c[4]` declarations.
    fn member_layouts(&self, src: &str, toks: &[Token], depth: usize) -> Result<Vec<Layout>, EvalError> {
        let toks = strip_attributes(src, toks);
        if toks.is_empty() {
            return Ok(Vec::new());
        }
        if toks.iter().any(|t| t.is_punct(src, ':')) {
            return Err(EvalError::Unsupported("bit-field member".into()));
        }
        // split declarators on top-level commas
        let mut groups: Vec<Vec<Token>> = vec![Vec::new()];
        let mut d = 0;
        for t in &toks {
            match t.text(src) {
                "[" | "(" => d += 1,
                "]" | ")" => d -= 1,
                "," if d == 0 => {
                    groups.push(Vec::new());
                    continue;
                }
                _ => {}
            }
            groups.last_mut().unwrap().push(*t);
        }
        // base type: tokens of the first group before its declarator name
        let first = &groups[0];
        let name_idx =
            declarator_name_index(src, first).ok_or_else(|| EvalError::Unsupported("member without a name".into()))?;
        let base_end = (0..name_idx)
            .rev()
            .find(|&k| !first[k].is_punct(src, '*'))
            .map_or(0, |k| k + 1);
        let base: Vec<&str> = first[..base_end].iter().map(|t| t.text(src)).collect();
        let base = base.join(" ");
        let base_layout = self.layout_of_type(&base, depth + 1);

        let mut out = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            let decl = if gi == 0 { &g[base_end..] } else { &g[..] };
            let is_ptr = decl.first().is_some_and(|t| t.is_punct(src, '*'));
            let elem = if is_ptr {
                Layout { size: 8, align: 8 }
            } else {
                base_layout.clone()?
            };
            let dims = self.declarator_dims(src, decl, depth)?;
            out.push(scale(elem, dims.iter().product()));
        }
        Ok(out)
    }

    fn declarator_dims(&self, src: &str, toks: &[Token], depth: usize) -> Result<Vec<u64>, EvalError> {
        let mut dims = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            if toks[i].is_punct(src, '[') {
                let c = matching(src, toks, i);
                if c == i + 1 {
                    dims.push(0);
                } else {
                    let text = &src[toks[i + 1].start..toks[c - 1].end];
                    dims.push(self.text_at(text, depth + 1)?);
                }
                i = c + 1;
            } else {
                i += 1;
            }
        }
        Ok(dims)
    }
}

fn scale(l: Layout, n: u64) -> Layout {
    Layout {
        size: l.size * n,
        align: l.align,
    }
}

fn round_up(v: u64, a: u64) -> u64 {
    if a <= 1 {
        v
    } else {
        v.div_ceil(a) * a
    }
}

fn matching(src: &str, toks: &[Token], open: usize) -> usize {
    let (o, c) = match toks[open].text(src) {
        "{" => ("{", "}"),
        "(" => ("(", ")"),
        _ => ("[", "]"),
    };
    let mut d = 0;
    for (i, t) in toks.iter().enumerate().skip(open) {
        if t.text(src) == o {
            d += 1;
        } else if t.text(src) == c {
            d -= 1;
            if d == 0 {
                return i;
            }
        }
    }
    toks.len() - 1
}

fn strip_attributes(src: &str, toks: &[Token]) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i].text(src);
        if matches!(t, "__attribute__" | "__aligned" | "__attribute") {
            if i + 1 < toks.len() && toks[i + 1].is_punct(src, '(') {
                i = matching(src, toks, i + 1) + 1;
            } else {
                i += 1;
            }
            continue;
        }
        if matches!(t, "__user" | "__iomem" | "__packed" | "volatile" | "const") {
            i += 1;
            continue;
        }
        out.push(toks[i]);
        i += 1;
    }
    out
}

fn declarator_name_index(src: &str, toks: &[Token]) -> Option<usize> {
    let stop = toks.iter().position(|t| t.is_punct(src, '[')).unwrap_or(toks.len());
    (0..stop).rev().find(|&k| toks[k].kind == TokenKind::Ident)
}

fn primitive_size(words: &[&str]) -> Option<u64> {
    let core: Vec<&str> = words
        .iter()
        .copied()
        .filter(|w| !matches!(*w, "signed" | "unsigned"))
        .collect();
    let unsigned_only = core.is_empty() && !words.is_empty();
    if unsigned_only {
        return Some(4);
    }
    Some(match core.as_slice() {
        ["char"] | ["bool"] | ["_Bool"] => 1,
        ["short"] | ["short", "int"] => 2,
        ["int"] | ["float"] => 4,
        ["long"] | ["long", "int"] | ["long", "long"] | ["long", "long", "int"] | ["double"] => 8,
        [one] => match *one {
            "__u8" | "u8" | "__s8" | "s8" | "uint8_t" | "int8_t" => 1,
            "__u16" | "u16" | "__s16" | "s16" | "uint16_t" | "int16_t" | "__le16" | "__be16" => 2,
            "__u32" | "u32" | "__s32" | "s32" | "uint32_t" | "int32_t" | "__le32" | "__be32" | "__kernel_pid_t" => 4,
            "__u64" | "u64" | "__s64" | "s64" | "uint64_t" | "int64_t" | "__le64" | "__be64" | "__aligned_u64"
            | "size_t" | "ssize_t" | "loff_t" | "uintptr_t" | "__kernel_size_t" | "__kernel_ulong_t"
            | "__kernel_long_t" => 8,
            _ => return None,
        },
        _ => return None,
    })
}

struct ExprParser<'e, 'a> {
    ev: &'e ConstEvaluator<'a>,
    src: &'e str,
    toks: &'e [Token],
    pos: usize,
    depth: usize,
}

impl ExprParser<'_, '_> {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|t| t.text(self.src))
    }

    fn peek2(&self) -> Option<&str> {
        self.toks.get(self.pos + 1).map(|t| t.text(self.src))
    }

    fn unsupported(&self) -> EvalError {
        EvalError::Unsupported(self.src.to_string())
    }

    fn expect(&mut self, s: &str) -> Result<(), EvalError> {
        if self.peek() == Some(s) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unsupported())
        }
    }

    fn binop(&self) -> Option<(&'static str, u8)> {
        let a = self.peek()?;
        let b = self.peek2();
        // two-char shifts are lexed as two puncts
        let op = match (a, b) {
            ("<", Some("<")) => ("<<", 9),
            (">", Some(">")) => (">>", 9),
            ("*", _) => ("*", 11),
            ("/", _) => ("/", 11),
            ("%", _) => ("%", 11),
            ("+", _) => ("+", 10),
            ("-", _) => ("-", 10),
            ("&", _) if b != Some("&") => ("&", 6),
            ("^", _) => ("^", 5),
            ("|", _) if b != Some("|") => ("|", 4),
            _ => return None,
        };
        Some(op)
    }

    fn expr(&mut self, min_prec: u8) -> Result<u64, EvalError> {
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = self.binop() {
            if prec < min_prec {
                break;
            }
            self.pos += if op.len() == 2 { 2 } else { 1 };
            let rhs = self.expr(prec + 1)?;
            lhs = match op {
                "<<" => lhs.checked_shl(rhs as u32).unwrap_or(0),
                ">>" => lhs.checked_shr(rhs as u32).unwrap_or(0),
                "*" => lhs.wrapping_mul(rhs),
                "/" => lhs.checked_div(rhs).ok_or_else(|| self.unsupported())?,
                "%" => lhs.checked_rem(rhs).ok_or_else(|| self.unsupported())?,
                "+" => lhs.wrapping_add(rhs),
                "-" => lhs.wrapping_sub(rhs),
                "&" => lhs & rhs,
                "^" => lhs ^ rhs,
                _ => lhs | rhs,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<u64, EvalError> {
        match self.peek() {
            Some("-") => {
                self.pos += 1;
                Ok(self.unary()?.wrapping_neg())
            }
            Some("+") => {
                self.pos += 1;
                self.unary()
            }
            Some("~") => {
                self.pos += 1;
                Ok(!self.unary()?)
            }
            Some("!") => {
                self.pos += 1;
                Ok((self.unary()? == 0) as u64)
            }
            _ => self.primary(),
        }
    }

    fn is_cast(&self) -> bool {
        // `(` type-words `)` followed by something that can start an operand
        let mut i = self.pos + 1;
        let mut words = Vec::new();
        while let Some(t) = self.toks.get(i) {
            let s = t.text(self.src);
            if s == ")" {
                break;
            }
            if t.kind != TokenKind::Ident && s != "*" {
                return false;
            }
            words.push(s);
            i += 1;
        }
        if words.is_empty() || i + 1 >= self.toks.len() {
            return false;
        }
        let w: Vec<&str> = words.iter().copied().filter(|w| *w != "*").collect();
        primitive_size(&w).is_some()
    }

    fn primary(&mut self) -> Result<u64, EvalError> {
        let tok = *self.toks.get(self.pos).ok_or_else(|| self.unsupported())?;
        let text = tok.text(self.src);
        match tok.kind {
            TokenKind::Number => {
                self.pos += 1;
                parse_int(text).ok_or_else(|| EvalError::Unsupported(text.to_string()))
            }
            TokenKind::Char => {
                self.pos += 1;
                parse_char(text).ok_or_else(|| EvalError::Unsupported(text.to_string()))
            }
            TokenKind::Punct if text == "(" => {
                if self.is_cast() {
                    while self.peek() != Some(")") {
                        self.pos += 1;
                    }
                    self.pos += 1;
                    return self.unary();
                }
                self.pos += 1;
                let v = self.expr(0)?;
                self.expect(")")?;
                Ok(v)
            }
            TokenKind::Ident => {
                self.pos += 1;
                let called = self.peek() == Some("(");
                match text {
                    "sizeof" if called => {
                        let args = self.call_args()?;
                        let [arg] = args.as_slice() else {
                            return Err(self.unsupported());
                        };
                        self.ev.layout_of_type(arg, self.depth + 1).map(|l| l.size)
                    }
                    "_IO" | "_IOR" | "_IOW" | "_IOWR" | "_IOC" if called => self.ioc_call(text),
                    _ if called && self.is_function_macro(text) => self.expand_call(text),
                    _ => self.ev.name_at(text, self.depth + 1),
                }
            }
            _ => Err(self.unsupported()),
        }
    }

    /// Raw text of each comma-separated argument of the call at `pos`.
    fn call_args(&mut self) -> Result<Vec<String>, EvalError> {
        self.expect("(")?;
        let mut args = Vec::new();
        let mut depth = 0;
        let mut start = self.pos;
        loop {
            let Some(t) = self.peek() else {
                return Err(self.unsupported());
            };
            match t {
                "(" | "[" => depth += 1,
                ")" if depth == 0 => {
                    if self.pos > start {
                        args.push(self.span(start, self.pos));
                    }
                    self.pos += 1;
                    return Ok(args);
                }
                ")" | "]" => depth -= 1,
                "," if depth == 0 => {
                    args.push(self.span(start, self.pos));
                    start = self.pos + 1;
                }
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn span(&self, a: usize, b: usize) -> String {
        if a >= b {
            return String::new();
        }
        self.src[self.toks[a].start..self.toks[b - 1].end].to_string()
    }

    fn ioc_call(&mut self, which: &str) -> Result<u64, EvalError> {
        let args = self.call_args()?;
        let ev = |s: &str| self.ev.text_at(s, self.depth + 1);
        let size_of = |s: &str| self.ev.layout_of_type(s, self.depth + 1).map(|l| l.size);
        match (which, args.as_slice()) {
            ("_IO", [t, n]) => ioc(IOC_NONE, ev(t)?, ev(n)?, 0),
            ("_IOR", [t, n, s]) => ioc(IOC_READ, ev(t)?, ev(n)?, size_of(s)?),
            ("_IOW", [t, n, s]) => ioc(IOC_WRITE, ev(t)?, ev(n)?, size_of(s)?),
            ("_IOWR", [t, n, s]) => ioc(IOC_READ | IOC_WRITE, ev(t)?, ev(n)?, size_of(s)?),
            ("_IOC", [d, t, n, s]) => ioc(ev(d)?, ev(t)?, ev(n)?, ev(s)?),
            _ => Err(self.unsupported()),
        }
    }

    fn is_function_macro(&self, name: &str) -> bool {
        self.ev
            .db
            .extract_code(name)
            .iter()
            .any(|d| d.kind == DefKind::Macro && macro_params(&d.text).is_some())
    }

    fn expand_call(&mut self, name: &str) -> Result<u64, EvalError> {
        if self.depth > MAX_DEPTH {
            return Err(EvalError::TooDeep(name.to_string()));
        }
        let args = self.call_args()?;
        let defs = self.ev.db.extract_code(name);
        let def = defs
            .iter()
            .find(|d| d.kind == DefKind::Macro)
            .ok_or_else(|| EvalError::Undefined(name.to_string()))?;
        let params = macro_params(&def.text).unwrap_or_default();
        if params.len() != args.len() {
            return Err(EvalError::Unsupported(format!("{name}: wrong argument count")));
        }
        let body = self.ev.db.macro_body(name).unwrap_or_default();
        let lx = lex(body);
        let mut expanded = String::new();
        let mut last = 0;
        for t in &lx.tokens {
            if t.kind == TokenKind::Ident {
                if let Some(k) = params.iter().position(|p| p == t.text(body)) {
                    expanded.push_str(&body[last..t.start]);
                    expanded.push_str(&args[k]);
                    last = t.end;
                }
            }
        }
        expanded.push_str(&body[last..]);
        self.ev.text_at(&expanded, self.depth + 1)
    }
}

/// Parameter names of a function-like `#define`, or `None` for object-like.
fn macro_params(define_text: &str) -> Option<Vec<String>> {
    let lx = lex(define_text);
    let d = lx.directives.first()?;
    let toks = &d.tokens;
    if toks.len() < 3 || !toks[2].is_punct(define_text, '(') || toks[2].start != toks[1].end {
        return None;
    }
    let mut params = Vec::new();
    for t in &toks[3..] {
        match t.text(define_text) {
            ")" => return Some(params),
            "," => {}
            s => params.push(s.to_string()),
        }
    }
    None
}

pub fn parse_int(text: &str) -> Option<u64> {
    let t = text.trim_end_matches(['u', 'U', 'l', 'L']);
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()
    } else if let Some(b) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        u64::from_str_radix(b, 2).ok()
    } else if t.len() > 1 && t.starts_with('0') {
        u64::from_str_radix(&t[1..], 8).ok()
    } else {
        t.parse().ok()
    }
}

fn parse_char(text: &str) -> Option<u64> {
    let inner = text.strip_prefix('\'')?.strip_suffix('\'')?;
    let mut chars = inner.chars();
    match (chars.next()?, chars.next()) {
        ('\\', Some(c)) => Some(match c {
            'n' => 10,
            't' => 9,
            'r' => 13,
            '0' => 0,
            '\\' => 92,
            '\'' => 39,
            'x' => return u64::from_str_radix(&inner[2..], 16).ok(),
            _ => return None,
        }),
        (c, None) => Some(c as u64),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(src: &str) -> DefinitionDatabase {
        DefinitionDatabase::from_sources(vec![("x.h".into(), src.into())], 20)
    }

    #[test]
    fn arithmetic_and_literals() {
        let d = db("#define A (1 << 4)\n#define B (A | 0x3)\n#define C 'd'\n#define D (B - 1 + 010)\n");
        let ev = ConstEvaluator::new(&d);
        assert_eq!(ev.eval_name("A"), Ok(16));
        assert_eq!(ev.eval_name("B"), Ok(19));
        assert_eq!(ev.eval_name("C"), Ok(100));
        assert_eq!(ev.eval_name("D"), Ok(26));
        assert!(matches!(ev.eval_name("NOPE"), Err(EvalError::Undefined(_))));
    }

    #[test]
    fn struct_layout_with_padding() {
        let d = db("struct s {\n\t__u32 a;\n\t__u64 b;\n\tchar c[3];\n};\nstruct p {\n\t__u32 a;\n\t__u64 b;\n} __attribute__((packed));\n");
        let ev = ConstEvaluator::new(&d);
        assert_eq!(ev.sizeof_type("struct s"), Ok(24));
        assert_eq!(ev.sizeof_type("struct p"), Ok(12));
        assert_eq!(ev.sizeof_type("int"), Ok(4));
        assert_eq!(ev.sizeof_type("unsigned long"), Ok(8));
        assert_eq!(ev.sizeof_type("struct s *"), Ok(8));
    }

    #[test]
    fn nested_union_and_multi_declarators() {
        let d = db("struct n {\n\t__u32 a, b;\n\tunion {\n\t\t__u64 x;\n\t\t__u8 y[12];\n\t} u;\n};\n");
        let ev = ConstEvaluator::new(&d);
        // a,b = 8; union size 16 align 8 -> 8 + 16 = 24
        assert_eq!(ev.sizeof_type("struct n"), Ok(24));
    }

    #[test]
    fn function_like_macro_expansion() {
        let d =
            db("#define BASE 'd'\n#define MY_IOWR(nr, type) _IOWR(BASE, nr, type)\n#define CMD MY_IOWR(0x10, __u32)\n");
        let ev = ConstEvaluator::new(&d);
        assert_eq!(ev.eval_name("CMD"), Ok((3 << 30) | (4 << 16) | (100 << 8) | 0x10));
    }

    #[test]
    fn ioc_range_checked() {
        assert!(ioc(0, 256, 0, 0).is_err());
        assert!(ioc(0, 0, 0, 1 << 14).is_err());
        assert_eq!(ioc(IOC_NONE, 0xAE, 1, 0), Ok(0xAE01));
    }

    #[test]
    fn casts_are_skipped() {
        let d = db("#define X ((unsigned int)-1)\n");
        assert_eq!(ConstEvaluator::new(&d).eval_name("X"), Ok(u64::MAX));
    }
}
