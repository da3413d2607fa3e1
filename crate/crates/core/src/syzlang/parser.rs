//! Parser for the supported syzlang subset. Grammar summary lives in
//! `docs/syzlang-subset.md`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub expected: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.expected)
    }
}

impl std::error::Error for ParseError {}

/// Type names from full syzlang that this subset rejects by name.
const UNSUPPORTED_TYPES: &[&str] = &[
    "csum",
    "vma",
    "vma64",
    "proc",
    "bitsize",
    "bytesize",
    "offsetof",
    "fmt",
    "text",
    "glob",
    "optional",
    "boolptr",
    "fileoff",
    "void",
    "filename",
    "stringnoz",
    "compressed_image",
    "ptr64",
    "bool8",
    "bool16",
    "bool32",
    "bool64",
    "int16be",
    "int32be",
    "int64be",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    Path(String),
    Punct(char),
    Comment(String),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out: Vec<Spanned> = Vec::new();
    for (li, line) in text.split('\n').enumerate() {
        let line_no = li as u32 + 1;
        let bytes = line.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let col = i as u32 + 1;
            let err = |expected: &str| ParseError {
                line: line_no,
                col,
                expected: expected.to_string(),
            };
            let tok = if c == b' ' || c == b'\t' || c == b'\r' {
                i += 1;
                continue;
            } else if c == b'#' {
                let body = &line[i + 1..];
                let body = body.strip_prefix(' ').unwrap_or(body);
                i = bytes.len();
                Tok::Comment(body.trim_end_matches('\r').to_string())
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let s = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Spanned {
                    tok: Tok::Ident(line[s..i].to_string()),
                    line: line_no,
                    col,
                });
                continue;
            } else if c.is_ascii_digit() {
                let s = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let lit = &line[s..i];
                let v = if let Some(h) = lit.strip_prefix("0x").or_else(|| lit.strip_prefix("0X")) {
                    u64::from_str_radix(h, 16)
                } else {
                    lit.parse()
                };
                out.push(Spanned {
                    tok: Tok::Int(v.map_err(|_| err("integer literal"))?),
                    line: line_no,
                    col,
                });
                continue;
            } else if c == b'"' {
                let s = i + 1;
                let e = line[s..].find('"').map(|k| s + k).ok_or_else(|| err("closing quote"))?;
                i = e + 1;
                out.push(Spanned {
                    tok: Tok::Str(line[s..e].to_string()),
                    line: line_no,
                    col,
                });
                continue;
            } else if c == b'<' && matches!(out.last(), Some(Spanned { tok: Tok::Ident(k), .. }) if k == "include") {
                let e = line[i..]
                    .find('>')
                    .map(|k| i + k)
                    .ok_or_else(|| err("`>` closing the include path"))?;
                let path = line[i + 1..e].to_string();
                i = e + 1;
                out.push(Spanned {
                    tok: Tok::Path(path),
                    line: line_no,
                    col,
                });
                continue;
            } else if b"()[]{},:=$-".contains(&c) {
                Tok::Punct(c as char)
            } else {
                return Err(err("a token"));
            };
            if matches!(tok, Tok::Punct(_)) {
                i += 1;
            }
            out.push(Spanned {
                tok,
                line: line_no,
                col,
            });
        }
        out.push(Spanned {
            tok: Tok::Newline,
            line: line_no,
            col: bytes.len() as u32 + 1,
        });
    }
    let last = out.last().map_or(1, |s| s.line);
    out.push(Spanned {
        tok: Tok::Eof,
        line: last,
        col: 1,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn at(&self) -> &Spanned {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek(&self) -> &Tok {
        &self.at().tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.peek().clone();
        self.pos += 1;
        t
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        let s = self.at();
        ParseError {
            line: s.line,
            col: s.col,
            expected: expected.into(),
        }
    }

    fn punct(&mut self, c: char) -> PResult<()> {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("`{c}`")))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        if let Tok::Comment(_) = self.peek() {
            self.bump();
        }
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.error("end of line")),
        }
    }

    fn skip_blank(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Comment(_)) {
            self.bump();
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat('-');
        match self.bump() {
            Tok::Int(v) => Ok(if neg { (v as i64).wrapping_neg() } else { v as i64 }),
            _ => {
                self.pos -= 1;
                Err(self.error("integer"))
            }
        }
    }

    fn int_bits(&mut self) -> PResult<IntBits> {
        let s = self.ident("integer type")?;
        IntBits::parse(&s).ok_or_else(|| {
            self.pos -= 1;
            self.error("int8, int16, int32, int64 or intptr")
        })
    }

    fn optional_base(&mut self) -> PResult<Option<IntBits>> {
        if self.eat(',') {
            Ok(Some(self.int_bits()?))
        } else {
            Ok(None)
        }
    }

    fn parse_type(&mut self) -> PResult<TypeExpr> {
        let start = self.pos;
        let name = self.ident("type")?;
        if UNSUPPORTED_TYPES.contains(&name.as_str()) {
            self.pos = start;
            return Err(self.error(format!("supported type (`{name}` is not in the subset)")));
        }
        if let Some(bits) = IntBits::parse(&name) {
            let range = if self.eat('[') {
                let lo = self.signed_int()?;
                self.punct(':')?;
                let hi = self.signed_int()?;
                self.punct(']')?;
                Some((lo, hi))
            } else {
                None
            };
            return Ok(TypeExpr::Int { bits, range });
        }
        let ty = match name.as_str() {
            "const" => {
                self.punct('[')?;
                let value = match self.peek().clone() {
                    Tok::Ident(s) => {
                        self.bump();
                        ConstValue::Named(s)
                    }
                    _ => ConstValue::Int(self.signed_int()?),
                };
                let base = self.optional_base()?;
                self.punct(']')?;
                TypeExpr::Const { value, base }
            }
            "flags" => {
                self.punct('[')?;
                let set = self.ident("flag set name")?;
                let base = self.optional_base()?;
                self.punct(']')?;
                TypeExpr::Flags { set, base }
            }
            "ptr" => {
                self.punct('[')?;
                let d = self.ident("pointer direction")?;
                let dir = Dir::parse(&d).ok_or_else(|| {
                    self.pos -= 1;
                    self.error("in, out or inout")
                })?;
                self.punct(',')?;
                let elem = self.parse_type()?;
                self.punct(']')?;
                TypeExpr::ptr(dir, elem)
            }
            "array" => {
                self.punct('[')?;
                let elem = Box::new(self.parse_type()?);
                let len = if self.eat(',') {
                    let l = match self.bump() {
                        Tok::Ident(s) => ArrayLen::Named(s),
                        Tok::Int(v) => ArrayLen::Literal(v),
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("array length"));
                        }
                    };
                    if *self.peek() == Tok::Punct(':') {
                        return Err(self.error("`]` (array length ranges are not in the subset)"));
                    }
                    Some(l)
                } else {
                    None
                };
                self.punct(']')?;
                TypeExpr::Array { elem, len }
            }
            "string" => {
                let literal = if self.eat('[') {
                    let s = match self.bump() {
                        Tok::Str(s) => s,
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("string literal"));
                        }
                    };
                    self.punct(']')?;
                    Some(s)
                } else {
                    None
                };
                TypeExpr::String { literal }
            }
            "len" => {
                self.punct('[')?;
                let mut path = vec![self.ident("field name")?];
                while self.eat(':') {
                    path.push(self.ident("field name")?);
                }
                let base = self.optional_base()?;
                self.punct(']')?;
                TypeExpr::Len { path, base }
            }
            _ => {
                if *self.peek() == Tok::Punct('[') {
                    return Err(self.error(format!(
                        "end of type (`{name}[...]` template instantiation is not in the subset)"
                    )));
                }
                TypeExpr::Ref(name)
            }
        };
        Ok(ty)
    }

    fn syscall(&mut self, base: String, comments: Vec<String>) -> PResult<SyscallDesc> {
        let variant = if self.eat('$') {
            self.ident("syscall variant")?
        } else {
            String::new()
        };
        self.punct('(')?;
        let mut params = Vec::new();
        if !self.eat(')') {
            loop {
                let name = self.ident("parameter name")?;
                let ty = self.parse_type()?;
                params.push(Param { name, ty });
                if self.eat(')') {
                    break;
                }
                self.punct(',')?;
            }
        }
        let ret = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Some(s)
            }
            _ => None,
        };
        self.end_of_line()?;
        let mut s = SyscallDesc::new(&base, &variant, params, ret);
        s.comments = comments;
        Ok(s)
    }

    fn record(&mut self, name: String, kind: RecordKind, comments: Vec<String>) -> PResult<TypeDef> {
        let close = match kind {
            RecordKind::Struct => '}',
            RecordKind::Union => ']',
        };
        self.end_of_line()?;
        let mut fields = Vec::new();
        loop {
            self.skip_blank();
            if self.eat(close) {
                break;
            }
            if *self.peek() == Tok::Eof {
                return Err(self.error(format!("`{close}`")));
            }
            let fname = self.ident("field name")?;
            let ty = self.parse_type()?;
            let dir = if self.eat('(') {
                let a = self.ident("field attribute")?;
                if a == "if" {
                    self.pos -= 1;
                    return Err(self.error("field direction (conditional fields are not in the subset)"));
                }
                let d = Dir::parse(&a).ok_or_else(|| {
                    self.pos -= 1;
                    self.error("in, out or inout")
                })?;
                self.punct(')')?;
                Some(d)
            } else {
                None
            };
            fields.push(Field { name: fname, ty, dir });
            self.end_of_line()?;
        }
        let mut attrs = Vec::new();
        if self.eat('[') {
            loop {
                attrs.push(self.ident("attribute")?);
                if *self.peek() == Tok::Punct('[') {
                    return Err(self.error("`]` (parameterized attributes are not in the subset)"));
                }
                if self.eat(']') {
                    break;
                }
                self.punct(',')?;
            }
        }
        self.end_of_line()?;
        Ok(TypeDef {
            name,
            kind,
            fields,
            attrs,
            comments,
        })
    }

    fn flag_set(&mut self, name: String, comments: Vec<String>) -> PResult<FlagSet> {
        let mut values = Vec::new();
        loop {
            let v = match self.peek().clone() {
                Tok::Ident(s) => {
                    self.bump();
                    ConstValue::Named(s)
                }
                Tok::Str(_) => return Err(self.error("constant (string flags are not in the subset)")),
                _ => ConstValue::Int(self.signed_int()?),
            };
            values.push(v);
            if !self.eat(',') {
                break;
            }
        }
        self.end_of_line()?;
        Ok(FlagSet { name, values, comments })
    }

    fn file(&mut self) -> PResult<SpecFile> {
        let mut spec = SpecFile::default();
        let mut comments = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Newline => {
                    self.bump();
                }
                Tok::Comment(c) => {
                    self.bump();
                    comments.push(c);
                }
                Tok::Ident(kw) => {
                    let pending = std::mem::take(&mut comments);
                    match kw.as_str() {
                        "include" => {
                            self.bump();
                            match self.bump() {
                                Tok::Path(p) => spec.includes.push(p),
                                _ => {
                                    self.pos -= 1;
                                    return Err(self.error("`<path>`"));
                                }
                            }
                            self.end_of_line()?;
                        }
                        "resource" => {
                            self.bump();
                            let name = self.ident("resource name")?;
                            self.punct('[')?;
                            let underlying = self.ident("underlying type")?;
                            self.punct(']')?;
                            if *self.peek() == Tok::Punct(':') {
                                return Err(self.error("end of line (resource special values are not in the subset)"));
                            }
                            self.end_of_line()?;
                            let mut r = ResourceDecl::new(&name, &underlying);
                            r.comments = pending;
                            spec.resources.push(r);
                        }
                        "type" | "define" | "meta" | "incdir" => {
                            return Err(self.error(format!("declaration (`{kw}` is not in the subset)")));
                        }
                        _ => {
                            self.bump();
                            match self.peek_at(0) {
                                Tok::Punct('$') | Tok::Punct('(') => {
                                    let s = self.syscall(kw, pending)?;
                                    spec.syscalls.push(s);
                                }
                                Tok::Punct('{') => {
                                    self.bump();
                                    let t = self.record(kw, RecordKind::Struct, pending)?;
                                    spec.types.push(t);
                                }
                                Tok::Punct('[') => {
                                    self.bump();
                                    let t = self.record(kw, RecordKind::Union, pending)?;
                                    spec.types.push(t);
                                }
                                Tok::Punct('=') => {
                                    self.bump();
                                    let f = self.flag_set(kw, pending)?;
                                    spec.flag_sets.push(f);
                                }
                                _ => return Err(self.error("`(`, `$`, `{`, `[` or `=`")),
                            }
                        }
                    }
                }
                _ => return Err(self.error("declaration")),
            }
        }
        spec.link_resources();
        Ok(spec)
    }
}

pub fn parse_spec(text: &str) -> Result<SpecFile, ParseError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.file()
}

/// Parse a lone type expression such as `ptr[in, foo]`.
pub fn parse_type_expr(text: &str) -> Result<TypeExpr, ParseError> {
    let t = text.trim();
    if t.contains('\n') {
        return Err(ParseError {
            line: 1,
            col: 1,
            expected: "a single-line type".into(),
        });
    }
    let mut spec = parse_spec(&format!("f(a {t})\n"))?;
    match spec.syscalls.pop() {
        Some(mut s) if s.params.len() == 1 => Ok(s.params.remove(0).ty),
        _ => Err(ParseError {
            line: 1,
            col: 1,
            expected: "exactly one type".into(),
        }),
    }
}
