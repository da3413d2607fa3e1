#![allow(dead_code)]

pub mod scenarios;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use speckernel::indexer::DefKind;
use speckernel::syzlang::{
    ArrayLen, ConstValue, Dir, Field, FlagSet, IntBits, Param, RecordKind, ResourceDecl, SpecFile, SyscallDesc,
    TypeDef, TypeExpr,
};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

pub fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Sorted list of files under `dir` with the given extension.
pub fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

// ioctl command encoding, written out from the Linux asm-generic layout:
// bits 0..8 number, 8..16 type, 16..30 size, 30..32 direction.
pub const IOC_NONE: u64 = 0;
pub const IOC_WRITE: u64 = 1;
pub const IOC_READ: u64 = 2;

pub fn ioc(dir: u64, ty: u64, nr: u64, size: u64) -> u64 {
    assert!(dir < 4 && ty < 256 && nr < 256 && size < (1 << 14));
    nr | (ty << 8) | (size << 16) | (dir << 30)
}

pub fn io(ty: u64, nr: u64) -> u64 {
    ioc(IOC_NONE, ty, nr, 0)
}

pub fn ior(ty: u64, nr: u64, size: u64) -> u64 {
    ioc(IOC_READ, ty, nr, size)
}

pub fn iow(ty: u64, nr: u64, size: u64) -> u64 {
    ioc(IOC_WRITE, ty, nr, size)
}

pub fn iowr(ty: u64, nr: u64, size: u64) -> u64 {
    ioc(IOC_READ | IOC_WRITE, ty, nr, size)
}

const DM_IOCTL_SIZE: u64 = 312;
const KVM_REGS_SIZE: u64 = 18 * 8;
const KVM_MEM_REGION_SIZE: u64 = 4 + 4 + 8 + 8 + 8;
const VHUB_DEV_INFO_SIZE: u64 = 4 + 4 + 4;
const VHUB_DEV_LIST_SIZE: u64 = 4;

/// (fixture, macro, expected value) for ioctl request macros in the fixtures.
pub fn ioctl_macro_cases() -> Vec<(&'static str, &'static str, u64)> {
    vec![
        ("dm", "DM_VERSION", iowr(0xfd, 0, DM_IOCTL_SIZE)),
        ("dm", "DM_DEV_SUSPEND", iowr(0xfd, 6, DM_IOCTL_SIZE)),
        ("dm", "DM_TARGET_MSG", iowr(0xfd, 14, DM_IOCTL_SIZE)),
        ("kvm", "KVM_CREATE_VM", io(0xae, 0x01)),
        ("kvm", "KVM_CREATE_VCPU", io(0xae, 0x41)),
        (
            "kvm",
            "KVM_SET_USER_MEMORY_REGION",
            iow(0xae, 0x46, KVM_MEM_REGION_SIZE),
        ),
        ("kvm", "KVM_GET_REGS", ior(0xae, 0x81, KVM_REGS_SIZE)),
        ("kvm", "KVM_SET_REGS", iow(0xae, 0x82, KVM_REGS_SIZE)),
        ("typerec", "VHUB_GET_DEVICES", iowr(b'V' as u64, 1, VHUB_DEV_LIST_SIZE)),
        ("typerec", "VHUB_ATTACH", iow(b'V' as u64, 2, VHUB_DEV_INFO_SIZE)),
        ("typerec", "VHUB_DETACH", iow(b'V' as u64, 3, 4)),
        ("typerec", "VHUB_RESET", io(b'V' as u64, 4)),
    ]
}

/// Replace comments, string and char literals with spaces, keeping newlines.
fn blank_comments_and_literals(src: &str) -> String {
    let b = src.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    let blank = |c: u8| if c == b'\n' { b'\n' } else { b' ' };
    while i < b.len() {
        if b[i..].starts_with(b"//") {
            while i < b.len() && b[i] != b'\n' {
                out.push(b' ');
                i += 1;
            }
        } else if b[i..].starts_with(b"/*") {
            let end = src[i + 2..].find("*/").map_or(b.len(), |e| i + 2 + e + 2);
            out.extend(b[i..end].iter().map(|&c| blank(c)));
            i = end;
        } else if b[i] == b'"' || b[i] == b'\'' {
            let q = b[i];
            out.push(b' ');
            i += 1;
            while i < b.len() && b[i] != q {
                if b[i] == b'\\' {
                    out.push(b' ');
                    i += 1;
                }
                if i < b.len() {
                    out.push(blank(b[i]));
                    i += 1;
                }
            }
            out.push(b' ');
            i += 1;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    out.truncate(b.len());
    String::from_utf8(out).unwrap()
}

fn idents(s: &str) -> Vec<&str> {
    s.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| w.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_'))
        .collect()
}

fn strip_attributes(head: &str) -> String {
    let mut s = head.to_string();
    for kw in ["__attribute__", "__attribute", "__aligned", "__section", "__printf"] {
        while let Some(p) = s.find(kw) {
            let rest = &s[p + kw.len()..];
            let open = rest.find('(');
            let end = match open {
                Some(o) if rest[..o].trim().is_empty() => {
                    let mut depth = 0;
                    let mut end = rest.len();
                    for (k, c) in rest.char_indices().skip(o) {
                        match c {
                            '(' => depth += 1,
                            ')' => {
                                depth -= 1;
                                if depth == 0 {
                                    end = k + 1;
                                    break;
                                }
                            }
                            _ => {}
                        }
                    }
                    p + kw.len() + end
                }
                _ => p + kw.len(),
            };
            s.replace_range(p..end, " ");
        }
    }
    s
}

const QUALIFIERS: [&str; 6] = [
    "const",
    "volatile",
    "__initdata",
    "__read_mostly",
    "__ro_after_init",
    "__initconst",
];

fn classify(head: &str, trailer: &str) -> Option<(DefKind, String)> {
    let head = strip_attributes(head);
    if let Some(eq) = head.find('=') {
        let mut before = head[..eq].to_string();
        while let Some(o) = before.rfind('[') {
            before.truncate(o);
        }
        return idents(&before)
            .into_iter()
            .rev()
            .find(|w| !QUALIFIERS.contains(w))
            .map(|n| (DefKind::GlobalVar, n.to_string()));
    }
    if let Some(p) = head.find('(') {
        return idents(&head[..p]).last().map(|n| (DefKind::Function, n.to_string()));
    }
    let words = idents(&head);
    let kw = words.iter().position(|w| matches!(*w, "struct" | "union" | "enum"))?;
    let kind = match words[kw] {
        "struct" => DefKind::Struct,
        "union" => DefKind::Union,
        _ => DefKind::Enum,
    };
    let tag = words[kw + 1..].last().map(|s| s.to_string());
    let name = tag.or_else(|| {
        if words.contains(&"typedef") {
            idents(&strip_attributes(trailer)).last().map(|s| s.to_string())
        } else {
            None
        }
    })?;
    Some((kind, name))
}

/// Naive character scanner over one C file: `(kind, name)` of every
/// top-level definition and every `#define`.
pub fn naive_scan(src: &str) -> BTreeSet<(DefKind, String)> {
    let clean = blank_comments_and_literals(src);
    let mut out = BTreeSet::new();
    let mut code = String::new();
    let mut in_directive = false;
    for line in clean.lines() {
        let t = line.trim_start();
        if in_directive || t.starts_with('#') {
            if !in_directive {
                let d = t[1..].trim_start();
                if let Some(rest) = d.strip_prefix("define") {
                    if rest.starts_with(char::is_whitespace) {
                        if let Some(n) = idents(rest).first() {
                            out.insert((DefKind::Macro, n.to_string()));
                        }
                    }
                }
            }
            in_directive = line.trim_end().ends_with('\\');
            code.push('\n');
            continue;
        }
        code.push_str(line);
        code.push('\n');
    }

    let chars: Vec<char> = code.chars().collect();
    let mut i = 0;
    let mut head = String::new();
    let mut paren = 0i32;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' | '[' => paren += 1,
            ')' | ']' => paren -= 1,
            _ => {}
        }
        if paren <= 0 && c == ';' {
            head.clear();
            i += 1;
            continue;
        }
        if paren <= 0 && c == '{' {
            let mut depth = 0;
            let mut j = i;
            while j < chars.len() {
                match chars[j] {
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                j += 1;
            }
            let is_function = !head.contains('=') && strip_attributes(&head).contains('(');
            let mut next = j + 1;
            let mut trailer = String::new();
            if !is_function {
                while next < chars.len() && chars[next] != ';' {
                    trailer.push(chars[next]);
                    next += 1;
                }
                next += 1;
            }
            if let Some(d) = classify(&head, &trailer) {
                out.insert(d);
            }
            head.clear();
            paren = 0;
            i = next;
            continue;
        }
        head.push(c);
        i += 1;
    }
    out
}

// Property generators for spec files. Names carry prefixes so they never
// collide with syzlang keywords.

fn lower_name(prefix: &'static str) -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}".prop_map(move |s| format!("{prefix}{s}"))
}

fn const_name() -> impl Strategy<Value = String> {
    "[A-Z][A-Z0-9_]{0,8}".prop_map(|s| format!("C_{s}"))
}

fn comment() -> impl Strategy<Value = String> {
    prop_oneof![Just(String::new()), "[a-z][a-z0-9 ,.]{0,20}[a-z0-9]"]
}

fn comments() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(comment(), 0..3)
}

fn bits() -> impl Strategy<Value = IntBits> {
    prop::sample::select(IntBits::ALL.to_vec())
}

fn opt_bits() -> impl Strategy<Value = Option<IntBits>> {
    prop::option::of(bits())
}

fn dir() -> impl Strategy<Value = Dir> {
    prop_oneof![Just(Dir::In), Just(Dir::Out), Just(Dir::InOut)]
}

fn const_value() -> impl Strategy<Value = ConstValue> {
    prop_oneof![
        any::<i64>().prop_map(ConstValue::Int),
        const_name().prop_map(ConstValue::Named)
    ]
}

fn leaf_type() -> impl Strategy<Value = TypeExpr> {
    prop_oneof![
        (const_value(), opt_bits()).prop_map(|(value, base)| TypeExpr::Const { value, base }),
        (bits(), prop::option::of((-5000i64..5000, 0i64..5000))).prop_map(|(bits, r)| TypeExpr::Int {
            bits,
            range: r.map(|(lo, d)| (lo, lo + d))
        }),
        (lower_name("f_"), opt_bits()).prop_map(|(set, base)| TypeExpr::Flags { set, base }),
        prop::option::of("[a-z0-9/_.-]{0,12}").prop_map(|literal| TypeExpr::String { literal }),
        (prop::collection::vec(lower_name("m_"), 1..3), opt_bits())
            .prop_map(|(path, base)| TypeExpr::Len { path, base }),
        lower_name("r_").prop_map(TypeExpr::Ref),
    ]
}

pub fn type_expr() -> impl Strategy<Value = TypeExpr> {
    leaf_type().prop_recursive(3, 12, 1, |inner| {
        prop_oneof![
            (dir(), inner.clone()).prop_map(|(d, e)| TypeExpr::ptr(d, e)),
            (
                inner,
                prop::option::of(prop_oneof![
                    (0u64..1 << 20).prop_map(ArrayLen::Literal),
                    const_name().prop_map(ArrayLen::Named),
                ])
            )
                .prop_map(|(e, len)| TypeExpr::Array { elem: Box::new(e), len }),
        ]
    })
}

fn syscall() -> impl Strategy<Value = SyscallDesc> {
    (
        prop::sample::select(vec!["ioctl", "openat", "setsockopt", "read", "syz_open_dev", "socket"]),
        prop_oneof![Just(String::new()), "[a-z][a-z0-9_]{0,7}"],
        prop::collection::vec((lower_name("a_"), type_expr()), 0..5),
        prop::option::of(lower_name("fd_")),
        comments(),
    )
        .prop_map(|(base, variant, params, ret, comments)| {
            let params = params.into_iter().map(|(n, t)| Param::new(&n, t)).collect();
            let mut s = SyscallDesc::new(base, &variant, params, ret);
            s.comments = comments;
            s
        })
}

fn typedef() -> impl Strategy<Value = TypeDef> {
    (
        lower_name("t_"),
        prop_oneof![Just(RecordKind::Struct), Just(RecordKind::Union)],
        prop::collection::vec((lower_name("x_"), type_expr(), prop::option::of(dir())), 1..5),
        prop::sample::subsequence(vec!["packed", "varlen"], 0..=2),
        comments(),
    )
        .prop_map(|(name, kind, fields, attrs, comments)| TypeDef {
            name,
            kind,
            fields: fields
                .into_iter()
                .map(|(n, ty, dir)| Field { name: n, ty, dir })
                .collect(),
            attrs: attrs.into_iter().map(str::to_string).collect(),
            comments,
        })
}

fn flag_set() -> impl Strategy<Value = FlagSet> {
    (lower_name("f_"), prop::collection::vec(const_value(), 1..5), comments())
        .prop_map(|(name, values, comments)| FlagSet { name, values, comments })
}

fn resource() -> impl Strategy<Value = ResourceDecl> {
    (
        lower_name("fd_"),
        prop_oneof![
            Just("fd".to_string()),
            Just("sock".to_string()),
            Just("int32".to_string()),
            lower_name("fd_")
        ],
        comments(),
    )
        .prop_map(|(name, u, comments)| {
            let mut r = ResourceDecl::new(&name, &u);
            r.comments = comments;
            r
        })
}

pub fn spec_file() -> impl Strategy<Value = SpecFile> {
    (
        prop::collection::vec("linux/[a-z_]{1,8}\\.h", 0..3),
        prop::collection::vec(resource(), 0..3),
        prop::collection::vec(syscall(), 0..5),
        prop::collection::vec(typedef(), 0..4),
        prop::collection::vec(flag_set(), 0..3),
    )
        .prop_map(|(includes, resources, syscalls, types, flag_sets)| {
            let mut s = SpecFile {
                includes,
                resources,
                syscalls,
                types,
                flag_sets,
                ..Default::default()
            };
            s.link_resources();
            s
        })
}
