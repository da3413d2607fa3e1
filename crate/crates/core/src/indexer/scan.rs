//! Top-level declaration recognition over the token stream of one file.

use super::lexer::{lex, Directive, Lexed, Token, TokenKind};
use super::{DefKind, Definition};

/// Everything recognized in a single source file.
#[derive(Debug, Default)]
pub struct FileScan {
    pub definitions: Vec<Definition>,
    /// `(name, body)` for every `#define`, in file order.
    pub macros: Vec<(String, String)>,
    /// `(name, value expression)` for enumerators, implicit values spelled
    /// as `PREV + 1`.
    pub enumerators: Vec<(String, String)>,
}

const TYPE_KEYWORDS: [&str; 3] = ["struct", "union", "enum"];

pub fn scan_file(file: &str, src: &str) -> FileScan {
    let lexed = lex(src);
    let mut out = FileScan::default();
    for d in &lexed.directives {
        if let Some((name, body)) = macro_of(src, d) {
            out.definitions.push(Definition {
                kind: DefKind::Macro,
                name: name.clone(),
                file: file.to_string(),
                line_span: (d.line, d.end_line),
                text: src[d.start..d.end].to_string(),
            });
            out.macros.push((name, body));
        }
    }
    scan_tokens(file, src, &lexed, &mut out);
    out.definitions
        .sort_by(|a, b| a.line_span.cmp(&b.line_span).then(a.name.cmp(&b.name)));
    out
}

fn macro_of(src: &str, d: &Directive) -> Option<(String, String)> {
    let toks = &d.tokens;
    if toks.len() < 2 || toks[0].text(src) != "define" || toks[1].kind != TokenKind::Ident {
        return None;
    }
    let name = toks[1].text(src).to_string();
    let mut body_idx = 2;
    // function-like only when '(' touches the name
    if toks.len() > 2 && toks[2].is_punct(src, '(') && toks[2].start == toks[1].end {
        let mut depth = 0;
        for (i, t) in toks.iter().enumerate().skip(2) {
            if t.is_punct(src, '(') {
                depth += 1;
            } else if t.is_punct(src, ')') {
                depth -= 1;
                if depth == 0 {
                    body_idx = i + 1;
                    break;
                }
            }
        }
    }
    let body = match toks.get(body_idx) {
        Some(first) => collapse_ws(&src[first.start..d.end]),
        None => String::new(),
    };
    Some((name, body))
}

fn collapse_ws(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for part in s.split_whitespace() {
        if part == "\\" {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(part);
    }
    out
}

struct Walker<'a> {
    src: &'a str,
    toks: &'a [Token],
}

impl<'a> Walker<'a> {
    fn text(&self, i: usize) -> &'a str {
        self.toks[i].text(self.src)
    }

    fn punct(&self, i: usize, c: char) -> bool {
        self.toks[i].is_punct(self.src, c)
    }

    /// Index of the token closing the group opened at `open`.
    fn matching(&self, open: usize) -> usize {
        let (o, c) = match self.text(open) {
            "{" => ('{', '}'),
            "(" => ('(', ')'),
            _ => ('[', ']'),
        };
        let mut depth = 0usize;
        for i in open..self.toks.len() {
            if self.punct(i, o) {
                depth += 1;
            } else if self.punct(i, c) {
                depth -= 1;
                if depth == 0 {
                    return i;
                }
            }
        }
        self.toks.len() - 1
    }
}

fn scan_tokens(file: &str, src: &str, lexed: &Lexed, out: &mut FileScan) {
    let w = Walker {
        src,
        toks: &lexed.tokens,
    };
    let n = w.toks.len();
    let mut i = 0;
    while i < n {
        if w.punct(i, '}') || w.punct(i, ';') {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = i;
        let mut depth = 0i32;
        let mut saw_eq = false;
        let mut saw_paren = false;
        let mut end = None;
        while j < n {
            let t = w.text(j);
            match t {
                "(" | "[" => {
                    if depth == 0 && t == "(" && !is_attribute_group(&w, j) {
                        saw_paren = true;
                    }
                    depth += 1;
                }
                ")" | "]" => depth -= 1,
                "=" if depth == 0 => saw_eq = true,
                ";" if depth <= 0 => {
                    end = Some((j, None));
                    break;
                }
                "{" if depth <= 0 => {
                    end = Some((j, Some(w.matching(j))));
                    break;
                }
                _ => {}
            }
            j += 1;
        }
        let Some((stop, body)) = end else { break };
        let Some(close) = body else {
            // plain declaration or prototype
            i = stop + 1;
            continue;
        };

        if saw_eq {
            let semi = find_semicolon(&w, close + 1);
            if let Some(name) = initialized_var_name(&w, start, stop) {
                push_def(out, &w, file, DefKind::GlobalVar, name, start, semi);
            }
            i = semi + 1;
        } else if saw_paren {
            if let Some(name) = function_name(&w, start, stop) {
                push_def(out, &w, file, DefKind::Function, name, start, close);
            }
            i = close + 1;
        } else {
            let semi = find_semicolon(&w, close + 1);
            type_definition(out, &w, file, start, stop, close, semi);
            i = semi + 1;
        }
    }
}

fn is_attribute_group(w: &Walker<'_>, paren: usize) -> bool {
    paren > 0 && w.toks[paren - 1].kind == TokenKind::Ident && is_attribute(w.text(paren - 1))
}

fn is_attribute(s: &str) -> bool {
    matches!(
        s,
        "__attribute__" | "__attribute" | "__aligned" | "__section" | "__printf"
    )
}

/// Next `;` at brace depth zero starting from `from` (or the last token).
fn find_semicolon(w: &Walker<'_>, from: usize) -> usize {
    let mut depth = 0i32;
    for i in from..w.toks.len() {
        match w.text(i) {
            "{" | "(" | "[" => depth += 1,
            "}" | ")" | "]" => depth -= 1,
            ";" if depth <= 0 => return i,
            _ => {}
        }
    }
    w.toks.len().saturating_sub(1).max(from.min(w.toks.len() - 1))
}

fn push_def(out: &mut FileScan, w: &Walker<'_>, file: &str, kind: DefKind, name: String, first: usize, last: usize) {
    let a = w.toks[first];
    let b = w.toks[last];
    out.definitions.push(Definition {
        kind,
        name,
        file: file.to_string(),
        line_span: (a.line, b.line),
        text: w.src[a.start..b.end].to_string(),
    });
}

/// Identifier immediately before the first non-attribute `(` of the head.
fn function_name(w: &Walker<'_>, start: usize, stop: usize) -> Option<String> {
    let mut i = start;
    while i < stop {
        if w.punct(i, '(') {
            if is_attribute_group(w, i) {
                i = w.matching(i) + 1;
                continue;
            }
            if i > start && w.toks[i - 1].kind == TokenKind::Ident {
                return Some(w.text(i - 1).to_string());
            }
            return None;
        }
        i += 1;
    }
    None
}

/// Identifier directly before the top-level `=`, skipping array brackets.
fn initialized_var_name(w: &Walker<'_>, start: usize, stop: usize) -> Option<String> {
    let mut depth = 0i32;
    let mut eq = None;
    for i in start..stop {
        match w.text(i) {
            "(" | "[" => depth += 1,
            ")" | "]" => depth -= 1,
            "=" if depth == 0 => {
                eq = Some(i);
                break;
            }
            _ => {}
        }
    }
    let mut k = eq?;
    while k > start {
        k -= 1;
        if w.punct(k, ']') {
            // walk back to the opening bracket
            let mut d = 0;
            while k > start {
                if w.punct(k, ']') {
                    d += 1;
                } else if w.punct(k, '[') {
                    d -= 1;
                    if d == 0 {
                        break;
                    }
                }
                k -= 1;
            }
            continue;
        }
        if w.toks[k].kind == TokenKind::Ident && !is_qualifier(w.text(k)) {
            return Some(w.text(k).to_string());
        }
        if w.punct(k, ')') {
            return None;
        }
    }
    None
}

fn is_qualifier(s: &str) -> bool {
    matches!(
        s,
        "const" | "volatile" | "__initdata" | "__read_mostly" | "__ro_after_init" | "__initconst"
    )
}

fn type_definition(
    out: &mut FileScan,
    w: &Walker<'_>,
    file: &str,
    start: usize,
    brace: usize,
    close: usize,
    semi: usize,
) {
    let head: Vec<usize> = (start..brace).collect();
    let typedef = head.iter().any(|&i| w.text(i) == "typedef");
    let Some(kw_pos) = head.iter().position(|&i| TYPE_KEYWORDS.contains(&w.text(i))) else {
        return;
    };
    let kind = match w.text(head[kw_pos]) {
        "struct" => DefKind::Struct,
        "union" => DefKind::Union,
        _ => DefKind::Enum,
    };
    // tag: last identifier of the head after the keyword, ignoring attributes
    let mut tag = None;
    let mut k = kw_pos + 1;
    while k < head.len() {
        let i = head[k];
        if w.punct(i, '(') {
            let m = w.matching(i);
            k = head.iter().position(|&h| h == m).map_or(head.len(), |p| p + 1);
            continue;
        }
        if w.toks[i].kind == TokenKind::Ident && !is_attribute(w.text(i)) {
            tag = Some(w.text(i).to_string());
        }
        k += 1;
    }
    if kind == DefKind::Enum {
        collect_enumerators(out, w, brace, close);
    }
    let name = tag.or_else(|| {
        if !typedef {
            return None;
        }
        (close + 1..semi)
            .rev()
            .find(|&i| w.toks[i].kind == TokenKind::Ident && !is_attribute(w.text(i)))
            .map(|i| w.text(i).to_string())
    });
    if let Some(name) = name {
        push_def(out, w, file, kind, name, start, semi);
    }
}

fn collect_enumerators(out: &mut FileScan, w: &Walker<'_>, open: usize, close: usize) {
    let mut prev: Option<String> = None;
    let mut i = open + 1;
    while i < close {
        if w.toks[i].kind != TokenKind::Ident {
            i += 1;
            continue;
        }
        let name = w.text(i).to_string();
        let mut j = i + 1;
        let mut depth = 0i32;
        let mut expr_start = None;
        while j < close {
            match w.text(j) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                "," if depth == 0 => break,
                "=" if depth == 0 && expr_start.is_none() => expr_start = Some(j + 1),
                _ => {}
            }
            j += 1;
        }
        let value = match expr_start {
            Some(s) if s < j => w.src[w.toks[s].start..w.toks[j - 1].end].to_string(),
            _ => match &prev {
                Some(p) => format!("{p} + 1"),
                None => "0".to_string(),
            },
        };
        out.enumerators.push((name.clone(), value));
        prev = Some(name);
        i = j + 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(scan: &FileScan) -> Vec<(DefKind, &str)> {
        scan.definitions.iter().map(|d| (d.kind, d.name.as_str())).collect()
    }

    #[test]
    fn recognizes_each_kind() {
        let src = r#"
#include <linux/fs.h>
#define DM_IOCTL 0xfd
#define MAX(a, b) ((a) > (b) ? (a) : (b))

struct dm_ioctl {
	__u32 version[3];
	char name[128];
};

union u { int a; long b; };

enum { DM_VERSION_CMD = 0, DM_REMOVE_ALL_CMD };

typedef struct { int x; } point_t;

static int helper(int);

static long dm_ctl_ioctl(struct file *file, unsigned int command, u_long u)
{
	return (long)ctl_ioctl(file, command, (struct dm_ioctl __user *)u);
}

static const struct file_operations _ctl_fops = {
	.open = nonseekable_open,
	.unlocked_ioctl = dm_ctl_ioctl,
};
"#;
        let scan = scan_file("a.c", src);
        assert_eq!(
            names(&scan),
            vec![
                (DefKind::Macro, "DM_IOCTL"),
                (DefKind::Macro, "MAX"),
                (DefKind::Struct, "dm_ioctl"),
                (DefKind::Union, "u"),
                (DefKind::Struct, "point_t"),
                (DefKind::Function, "dm_ctl_ioctl"),
                (DefKind::GlobalVar, "_ctl_fops"),
            ]
        );
        assert_eq!(scan.macros[1], ("MAX".into(), "((a) > (b) ? (a) : (b))".into()));
        assert_eq!(
            scan.enumerators,
            vec![
                ("DM_VERSION_CMD".to_string(), "0".to_string()),
                ("DM_REMOVE_ALL_CMD".to_string(), "DM_VERSION_CMD + 1".to_string()),
            ]
        );
        let f = &scan.definitions[5];
        assert_eq!(f.line_span, (19, 22));
        assert!(f.text.starts_with("static long dm_ctl_ioctl("));
        assert!(f.text.ends_with('}'));
    }

    #[test]
    fn attributes_do_not_confuse_function_names() {
        let src = "static int __attribute__((unused)) __init dm_init(void)\n{\n\treturn 0;\n}\n";
        let scan = scan_file("x.c", src);
        assert_eq!(names(&scan), vec![(DefKind::Function, "dm_init")]);
    }

    #[test]
    fn function_returning_struct_pointer() {
        let src = "struct dm_table *dm_get_live_table(struct mapped_device *md)\n{\n\treturn md->map;\n}\n";
        let scan = scan_file("x.c", src);
        assert_eq!(names(&scan), vec![(DefKind::Function, "dm_get_live_table")]);
    }

    #[test]
    fn array_initializer_is_global_var() {
        let src = "static const struct cmd _ioctls[] = {\n\t{DM_VERSION_CMD, 0, NULL},\n};\n";
        let scan = scan_file("x.c", src);
        assert_eq!(names(&scan), vec![(DefKind::GlobalVar, "_ioctls")]);
    }

    #[test]
    fn scalar_initializers_and_prototypes_are_skipped() {
        let src = "static int debug = 1;\nint foo(void);\nstruct fwd;\nDEFINE_MUTEX(lock);\n";
        assert!(scan_file("x.c", src).definitions.is_empty());
    }
}
