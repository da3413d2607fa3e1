//! Lexical/structural C indexer.
//!
//! Builds a [`DefinitionDatabase`] from a source tree without a compiler:
//! the tokenizer plus brace matching is enough to recover verbatim
//! definition text, macro bodies, handler initializers and usage snippets.

pub mod cexpr;
mod handlers;
pub mod lexer;
mod scan;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use handlers::{find_operation_handlers, FieldLayouts, HandlerKind, HandlerRegistration};
pub use scan::{scan_file, FileScan};

pub const DB_SCHEMA: u32 = 1;

pub const DEFAULT_TRIGGER_FIELDS: [&str; 5] = ["ioctl", "unlocked_ioctl", "compat_ioctl", "setsockopt", "getsockopt"];

pub const DEFAULT_SNIPPET_RADIUS: u32 = 20;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("corpus root {0} is not a readable directory")]
    BadRoot(PathBuf),
    #[error("invalid glob pattern {pattern:?}: {reason}")]
    BadGlob { pattern: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DefKind {
    Function,
    Struct,
    Union,
    Enum,
    Macro,
    GlobalVar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Definition {
    pub kind: DefKind,
    pub name: String,
    /// Path relative to the corpus root, `/`-separated.
    pub file: String,
    /// 1-based inclusive line range.
    pub line_span: (u32, u32),
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReference {
    pub identifier: String,
    pub file: String,
    pub line: u32,
    /// First line of `snippet`.
    pub snippet_start: u32,
    pub snippet: String,
}

#[derive(Debug, Clone)]
pub struct SourceCorpus {
    pub root_path: PathBuf,
    pub include_globs: Vec<String>,
    pub exclude_globs: Vec<String>,
}

impl SourceCorpus {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root_path: root.into(),
            include_globs: vec!["**/*.c".into(), "**/*.h".into()],
            exclude_globs: Vec::new(),
        }
    }

    fn globset(patterns: &[String]) -> Result<GlobSet, IndexError> {
        let mut b = GlobSetBuilder::new();
        for p in patterns {
            let g = Glob::new(p).map_err(|e| IndexError::BadGlob {
                pattern: p.clone(),
                reason: e.to_string(),
            })?;
            b.add(g);
        }
        b.build().map_err(|e| IndexError::BadGlob {
            pattern: patterns.join(","),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexerConfig {
    pub snippet_radius: u32,
    pub skip_unreadable: bool,
}

impl Default for IndexerConfig {
    fn default() -> Self {
        Self {
            snippet_radius: DEFAULT_SNIPPET_RADIUS,
            skip_unreadable: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DefRef {
    pub kind: DefKind,
    pub name: String,
    pub line: u32,
}

/// Immutable index of a corpus. Safe to share across threads.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct DefinitionDatabase {
    schema: u32,
    snippet_radius: u32,
    definitions: BTreeMap<String, Vec<Definition>>,
    macros: BTreeMap<String, String>,
    enumerators: BTreeMap<String, String>,
    file_index: BTreeMap<String, Vec<DefRef>>,
    sources: BTreeMap<String, String>,
    #[serde(skip)]
    occurrences: OnceLock<HashMap<String, Vec<(usize, u32)>>>,
}

impl PartialEq for DefinitionDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.definitions == other.definitions
            && self.macros == other.macros
            && self.enumerators == other.enumerators
            && self.file_index == other.file_index
            && self.sources == other.sources
    }
}

/// Result of indexing: the database plus files that were skipped.
#[derive(Debug)]
pub struct IndexOutput {
    pub db: DefinitionDatabase,
    pub warnings: Vec<IndexError>,
}

/// Index every matched file under the corpus root.
pub fn index_corpus(corpus: &SourceCorpus, cfg: &IndexerConfig) -> Result<IndexOutput, IndexError> {
    let root = &corpus.root_path;
    if !root.is_dir() {
        return Err(IndexError::BadRoot(root.clone()));
    }
    let include = SourceCorpus::globset(&corpus.include_globs)?;
    let exclude = SourceCorpus::globset(&corpus.exclude_globs)?;

    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                let err = IndexError::Io {
                    path,
                    reason: e.to_string(),
                };
                if cfg.skip_unreadable {
                    log::warn!("{err}");
                    continue;
                }
                return Err(err);
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative_path(root, entry.path());
        if include.is_match(&rel) && !exclude.is_match(&rel) {
            files.push((rel, entry.into_path()));
        }
    }

    let read: Vec<(String, Result<String, IndexError>)> = files
        .par_iter()
        .map(|(rel, path)| {
            let res = std::fs::read(path)
                .map_err(|e| e.to_string())
                .and_then(|bytes| String::from_utf8(bytes).map_err(|_| "not valid UTF-8".to_string()))
                .map_err(|reason| IndexError::Io {
                    path: rel.clone(),
                    reason,
                });
            (rel.clone(), res)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut sources = Vec::new();
    for (rel, res) in read {
        match res {
            Ok(src) => sources.push((rel, src)),
            Err(e) if cfg.skip_unreadable => {
                log::warn!("skipping {e}");
                warnings.push(e);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(IndexOutput {
        db: DefinitionDatabase::from_sources(sources, cfg.snippet_radius),
        warnings,
    })
}

fn relative_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

impl DefinitionDatabase {
    /// Build from `(relative path, source)` pairs. Order of input does not
    /// matter; everything is sorted by path then line.
    pub fn from_sources(mut sources: Vec<(String, String)>, snippet_radius: u32) -> Self {
        sources.sort_by(|a, b| a.0.cmp(&b.0));
        sources.dedup_by(|a, b| a.0 == b.0);
        let scans: Vec<FileScan> = sources.par_iter().map(|(path, src)| scan_file(path, src)).collect();

        let mut db = DefinitionDatabase {
            schema: DB_SCHEMA,
            snippet_radius,
            ..Default::default()
        };
        for ((path, src), scan) in sources.into_iter().zip(scans) {
            let refs = db.file_index.entry(path.clone()).or_default();
            for d in &scan.definitions {
                refs.push(DefRef {
                    kind: d.kind,
                    name: d.name.clone(),
                    line: d.line_span.0,
                });
            }
            for d in scan.definitions {
                db.definitions.entry(d.name.clone()).or_default().push(d);
            }
            for (name, body) in scan.macros {
                db.macros.entry(name).or_insert(body);
            }
            for (name, value) in scan.enumerators {
                db.enumerators.entry(name).or_insert(value);
            }
            db.sources.insert(path, src);
        }
        for defs in db.definitions.values_mut() {
            defs.sort_by(|a, b| a.file.cmp(&b.file).then(a.line_span.cmp(&b.line_span)));
        }
        db
    }

    pub fn schema(&self) -> u32 {
        self.schema
    }

    pub fn snippet_radius(&self) -> u32 {
        self.snippet_radius
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    pub fn definitions(&self) -> impl Iterator<Item = &Definition> {
        self.definitions.values().flatten()
    }

    pub fn definition_count(&self) -> usize {
        self.definitions.values().map(Vec::len).sum()
    }

    pub fn count_of(&self, kind: DefKind) -> usize {
        self.definitions().filter(|d| d.kind == kind).count()
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.file_index.keys().map(String::as_str)
    }

    pub fn source(&self, file: &str) -> Option<&str> {
        self.sources.get(file).map(String::as_str)
    }

    /// Definitions declared in `file`, in line order.
    pub fn definitions_in_file(&self, file: &str) -> Vec<&Definition> {
        let Some(refs) = self.file_index.get(file) else {
            return Vec::new();
        };
        refs.iter()
            .filter_map(|r| {
                self.definitions
                    .get(&r.name)?
                    .iter()
                    .find(|d| d.file == file && d.kind == r.kind && d.line_span.0 == r.line)
            })
            .collect()
    }

    pub fn macro_body(&self, name: &str) -> Option<&str> {
        self.macros.get(name).map(String::as_str)
    }

    pub fn macros(&self) -> &BTreeMap<String, String> {
        &self.macros
    }

    pub fn enumerator(&self, name: &str) -> Option<&str> {
        self.enumerators.get(name).map(String::as_str)
    }

    /// All definitions named `identifier`, ordered by path then line.
    pub fn extract_code(&self, identifier: &str) -> Vec<Definition> {
        self.definitions.get(identifier).cloned().unwrap_or_default()
    }

    /// First struct/union definition with the given name.
    pub fn record_definition(&self, name: &str) -> Option<&Definition> {
        self.definitions
            .get(name)?
            .iter()
            .find(|d| matches!(d.kind, DefKind::Struct | DefKind::Union))
    }

    fn occurrence_index(&self) -> &HashMap<String, Vec<(usize, u32)>> {
        self.occurrences.get_or_init(|| {
            let mut idx: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
            for (fi, src) in self.sources.values().enumerate() {
                let lx = lexer::lex(src);
                let mut push = |t: &lexer::Token| {
                    if t.kind == lexer::TokenKind::Ident {
                        idx.entry(t.text(src).to_string()).or_default().push((fi, t.line));
                    }
                };
                lx.tokens.iter().for_each(&mut push);
                for d in &lx.directives {
                    let is_include = d.tokens.first().is_some_and(|t| t.text(src) == "include");
                    if !is_include {
                        d.tokens.iter().skip(1).for_each(&mut push);
                    }
                }
            }
            for v in idx.values_mut() {
                v.sort_unstable();
            }
            idx
        })
    }

    /// Every token occurrence of `identifier` outside its own definitions.
    pub fn find_usages(&self, identifier: &str) -> Vec<UsageReference> {
        self.find_usages_with_radius(identifier, self.snippet_radius)
    }

    pub fn find_usages_with_radius(&self, identifier: &str, radius: u32) -> Vec<UsageReference> {
        let Some(occ) = self.occurrence_index().get(identifier) else {
            return Vec::new();
        };
        let own = self.definitions.get(identifier);
        let files: Vec<&String> = self.sources.keys().collect();
        let mut out = Vec::new();
        for &(fi, line) in occ {
            let file = files[fi];
            let inside_own = own.is_some_and(|defs| {
                defs.iter()
                    .any(|d| &d.file == file && d.line_span.0 <= line && line <= d.line_span.1)
            });
            if inside_own {
                continue;
            }
            let src = &self.sources[file];
            let (snippet_start, snippet) = snippet_window(src, line, radius);
            out.push(UsageReference {
                identifier: identifier.to_string(),
                file: file.clone(),
                line,
                snippet_start,
                snippet,
            });
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("database serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn snippet_window(src: &str, line: u32, radius: u32) -> (u32, String) {
    let lines: Vec<&str> = src.lines().collect();
    let lo = line.saturating_sub(radius).max(1);
    let hi = (line + radius).min(lines.len() as u32);
    let text = lines[(lo - 1) as usize..hi as usize].join("\n");
    (lo, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(files: &[(&str, &str)]) -> DefinitionDatabase {
        DefinitionDatabase::from_sources(files.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(), 2)
    }

    #[test]
    fn duplicates_are_kept_in_path_order() {
        let d = db(&[
            ("b.c", "static int helper(void)\n{\n\treturn 2;\n}\n"),
            ("a.c", "static int helper(void)\n{\n\treturn 1;\n}\n"),
        ]);
        let defs = d.extract_code("helper");
        assert_eq!(defs.len(), 2);
        assert_eq!(defs[0].file, "a.c");
        assert_eq!(defs[1].file, "b.c");
        assert!(d.extract_code("no_such_fn").is_empty());
    }

    #[test]
    fn usages_exclude_own_definition() {
        let src = "int only_self(void)\n{\n\treturn only_self();\n}\n";
        assert!(db(&[("a.c", src)]).find_usages("only_self").is_empty());
    }

    #[test]
    fn usage_snippet_window_is_clipped() {
        let src = "int x;\nint y = 1;\nvoid f(void)\n{\n\tuse_me(1);\n}\nint z;\n";
        let d = db(&[("a.c", src)]);
        let u = d.find_usages("use_me");
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].line, 5);
        assert_eq!(u[0].snippet_start, 3);
        assert_eq!(u[0].snippet, "void f(void)\n{\n\tuse_me(1);\n}\nint z;");
    }

    #[test]
    fn file_index_and_definitions_agree() {
        let d = db(&[("a.h", "#define A 1\nstruct s { int a; };\n")]);
        let in_file: Vec<_> = d.definitions_in_file("a.h").iter().map(|d| d.name.clone()).collect();
        assert_eq!(in_file, ["A", "s"]);
        assert_eq!(d.definition_count(), 2);
    }

    #[test]
    fn json_round_trip() {
        let d = db(&[("a.h", "#define A 1\nenum { B = 3 };\n")]);
        let back = DefinitionDatabase::from_json(&d.to_json()).unwrap();
        assert_eq!(d, back);
        assert_eq!(back.enumerator("B"), Some("3"));
    }
}
