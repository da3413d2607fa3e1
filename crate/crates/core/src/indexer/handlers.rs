//! Discovery of driver/socket operation-handler registrations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lexer::{is_c_identifier, lex, TokenKind};
use super::{DefKind, DefinitionDatabase, UsageReference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HandlerKind {
    FileOps,
    ProtoOps,
    MiscDevice,
    Other,
}

impl HandlerKind {
    fn of_struct_type(ty: &str) -> Self {
        match ty {
            "file_operations" => Self::FileOps,
            "proto_ops" => Self::ProtoOps,
            "miscdevice" => Self::MiscDevice,
            _ => Self::Other,
        }
    }

    pub fn is_socket(self) -> bool {
        self == Self::ProtoOps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerRegistration {
    /// Name of the initialized variable, e.g. `_ctl_fops`.
    pub struct_name: String,
    /// C struct type of the variable, e.g. `file_operations`.
    pub struct_type: String,
    pub kind: HandlerKind,
    pub bound_ops: BTreeMap<String, String>,
    pub file: String,
    pub line: u32,
    pub usages: Vec<UsageReference>,
}

/// Field order used to bind positional initializers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldLayouts(pub BTreeMap<String, Vec<String>>);

impl Default for FieldLayouts {
    fn default() -> Self {
        let fops = [
            "owner",
            "llseek",
            "read",
            "write",
            "read_iter",
            "write_iter",
            "iopoll",
            "iterate_shared",
            "poll",
            "unlocked_ioctl",
            "compat_ioctl",
            "mmap",
            "open",
            "flush",
            "release",
            "fsync",
            "fasync",
            "lock",
            "get_unmapped_area",
            "check_flags",
            "flock",
            "splice_write",
            "splice_read",
            "splice_eof",
            "setlease",
            "fallocate",
            "show_fdinfo",
        ];
        let pops = [
            "family",
            "owner",
            "release",
            "bind",
            "connect",
            "socketpair",
            "accept",
            "getname",
            "poll",
            "ioctl",
            "compat_ioctl",
            "gettstamp",
            "listen",
            "shutdown",
            "setsockopt",
            "getsockopt",
            "show_fdinfo",
            "sendmsg",
            "recvmsg",
            "mmap",
            "splice_read",
            "read_skb",
            "set_peek_off",
            "peek_len",
            "read_sock",
            "sendmsg_locked",
            "set_rcvlowat",
        ];
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        let mut m = BTreeMap::new();
        m.insert("file_operations".into(), owned(&fops));
        m.insert("proto_ops".into(), owned(&pops));
        Self(m)
    }
}

/// One handler per global struct initializer that binds a trigger field to
/// a function.
pub fn find_operation_handlers(
    db: &DefinitionDatabase,
    trigger_fields: &[String],
    layouts: &FieldLayouts,
) -> Vec<HandlerRegistration> {
    let mut vars: Vec<_> = db.definitions().filter(|d| d.kind == DefKind::GlobalVar).collect();
    vars.sort_by(|a, b| a.file.cmp(&b.file).then(a.line_span.cmp(&b.line_span)));

    let mut out = Vec::new();
    for def in vars {
        let Some((struct_type, bound_ops)) = parse_initializer(&def.text, layouts) else {
            continue;
        };
        if !bound_ops.keys().any(|k| trigger_fields.iter().any(|t| t == k)) {
            continue;
        }
        out.push(HandlerRegistration {
            struct_name: def.name.clone(),
            kind: HandlerKind::of_struct_type(&struct_type),
            struct_type,
            bound_ops,
            file: def.file.clone(),
            line: def.line_span.0,
            usages: db.find_usages(&def.name),
        });
    }
    out
}

/// `(struct type, field → function)` from `struct T name = { ... };`.
fn parse_initializer(text: &str, layouts: &FieldLayouts) -> Option<(String, BTreeMap<String, String>)> {
    let lx = lex(text);
    let toks = &lx.tokens;
    let t = |i: usize| toks[i].text(text);

    let eq = toks.iter().position(|tk| tk.is_punct(text, '='))?;
    let struct_type = (0..eq)
        .find(|&i| t(i) == "struct" && i + 1 < eq)
        .map(|i| t(i + 1).to_string())?;
    let open = eq + 1;
    if open >= toks.len() || t(open) != "{" {
        return None;
    }

    // split the top-level entries of the brace group
    let mut entries: Vec<(usize, usize)> = Vec::new();
    let mut depth = 0i32;
    let mut entry_start = open + 1;
    for i in open..toks.len() {
        match t(i) {
            "{" | "(" | "[" => depth += 1,
            "}" | ")" | "]" => {
                depth -= 1;
                if depth == 0 {
                    entries.push((entry_start, i));
                    break;
                }
            }
            "," if depth == 1 => {
                entries.push((entry_start, i));
                entry_start = i + 1;
            }
            _ => {}
        }
    }

    let layout = layouts.0.get(&struct_type);
    let mut bound = BTreeMap::new();
    let mut position = 0usize;
    for (s, e) in entries {
        if s >= e {
            continue;
        }
        let (field, value) = if t(s) == "." && s + 2 < e && t(s + 2) == "=" {
            (Some(t(s + 1).to_string()), (s + 3, e))
        } else {
            let f = layout.and_then(|l| l.get(position)).cloned();
            position += 1;
            (f, (s, e))
        };
        let Some(field) = field else { continue };
        if value.1 - value.0 != 1 {
            continue;
        }
        let tok = toks[value.0];
        let v = tok.text(text);
        if tok.kind == TokenKind::Ident && is_c_identifier(v) && looks_like_function(v) {
            bound.insert(field, v.to_string());
        }
    }
    Some((struct_type, bound))
}

/// Constants (`THIS_MODULE`, `AF_RDS`, `NULL`) are not functions.
fn looks_like_function(v: &str) -> bool {
    v.bytes().any(|b| b.is_ascii_lowercase())
}
