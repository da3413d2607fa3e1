//! Prompt assets and rendering.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EngineError, Stage};
use crate::indexer::{Definition, UsageReference};

pub const DEFAULT_BUDGET_UNITS: usize = 24_000;
pub const TRUNCATION_MARKER: &str = "\n/* ... truncated ... */";
pub const NO_CODE: &str = "/* no code available */";

/// Rendered prompt size in budget units (four characters each).
pub fn units(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Asset {
    pub version: u32,
    pub system: String,
    pub examples: Vec<(String, String)>,
    pub template: String,
}

fn section<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let head = format!("## {name}\n");
    let start = text.find(&head)? + head.len();
    let rest = &text[start..];
    let end = rest.find("\n## ").map_or(rest.len(), |e| e + 1);
    Some(rest[..end].trim_matches('\n'))
}

impl Asset {
    pub fn parse(text: &str) -> Option<Asset> {
        let version = text
            .lines()
            .next()?
            .trim()
            .strip_prefix("<!-- version:")?
            .strip_suffix("-->")?
            .trim()
            .parse()
            .ok()?;
        let system = section(text, "SYSTEM")?.to_string();
        let template = section(text, "TEMPLATE")?.to_string();
        let ex = section(text, "EXAMPLES")?;
        let mut examples = Vec::new();
        for chunk in ex.split("### INPUT\n").skip(1) {
            let (input, output) = chunk.split_once("### OUTPUT\n")?;
            examples.push((input.trim_end().to_string(), output.trim_end().to_string()));
        }
        Some(Asset {
            version,
            system,
            examples,
            template,
        })
    }
}

/// Per-stage prompt assets.
#[derive(Debug, Clone, Default)]
pub struct PromptAssets {
    assets: BTreeMap<Stage, Asset>,
}

impl PromptAssets {
    /// Assets compiled into the binary.
    pub fn builtin() -> Self {
        let mut assets = BTreeMap::new();
        for stage in Stage::ALL {
            let text = match stage {
                Stage::HandlerInit => include_str!("../../assets/prompts/handler_init.md"),
                Stage::IdentifierDeduction => include_str!("../../assets/prompts/identifier_deduction.md"),
                Stage::TypeRecovery => include_str!("../../assets/prompts/type_recovery.md"),
                Stage::DependencyAnalysis => include_str!("../../assets/prompts/dependency_analysis.md"),
                Stage::TypeDefinition => include_str!("../../assets/prompts/type_definition.md"),
                Stage::Repair => include_str!("../../assets/prompts/repair.md"),
            };
            let a = Asset::parse(text).expect("builtin prompt asset is well-formed");
            assets.insert(stage, a);
        }
        Self { assets }
    }

    /// Load `<stage>.md` files from a directory; missing or malformed files
    /// leave that stage without an asset.
    pub fn load_dir(dir: &Path) -> Self {
        let mut assets = BTreeMap::new();
        for stage in Stage::ALL {
            let path = dir.join(format!("{}.md", stage.as_str()));
            if let Some(a) = std::fs::read_to_string(&path).ok().and_then(|t| Asset::parse(&t)) {
                assets.insert(stage, a);
            }
        }
        Self { assets }
    }

    pub fn get(&self, stage: Stage) -> Result<&Asset, EngineError> {
        self.assets.get(&stage).ok_or(EngineError::AssetMissing(stage))
    }
}

/// A block of source code shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    pub header: String,
    pub text: String,
}

impl CodeBlock {
    pub fn from_definition(d: &Definition) -> Self {
        Self {
            header: format!("// File: {}:{}-{}", d.file, d.line_span.0, d.line_span.1),
            text: d.text.clone(),
        }
    }

    pub fn from_usage(u: &UsageReference) -> Self {
        let end = u.snippet_start + u.snippet.lines().count().max(1) as u32 - 1;
        Self {
            header: format!(
                "// Usage of {} at {}:{} (lines {}-{})",
                u.identifier, u.file, u.line, u.snippet_start, end
            ),
            text: u.snippet.clone(),
        }
    }

    pub fn note(text: &str) -> Self {
        Self {
            header: String::new(),
            text: text.to_string(),
        }
    }

    fn render(&self) -> String {
        if self.header.is_empty() {
            self.text.clone()
        } else {
            format!("{}\n{}", self.header, self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub stage: Stage,
    pub asset_version: u32,
    pub system_text: String,
    pub few_shot_examples: Vec<(String, String)>,
    pub target: String,
    pub related_code: Vec<CodeBlock>,
    pub usage_info: Vec<CodeBlock>,
    pub prior_findings: Option<String>,
    pub truncated: bool,
    pub text: String,
}

impl Prompt {
    pub fn units(&self) -> usize {
        units(&self.text)
    }
}

#[derive(Debug, Clone)]
pub struct PromptInput<'a> {
    pub target: &'a str,
    pub related_code: &'a [CodeBlock],
    pub usage_info: &'a [CodeBlock],
    pub prior_findings: Option<&'a str>,
}

fn join_blocks(blocks: &[CodeBlock], empty: &str) -> String {
    if blocks.is_empty() {
        return empty.to_string();
    }
    blocks.iter().map(CodeBlock::render).collect::<Vec<_>>().join("\n\n")
}

fn assemble(asset: &Asset, input: &PromptInput<'_>, code: &[CodeBlock], usage: &[CodeBlock]) -> String {
    let mut out = String::new();
    out.push_str(&asset.system);
    for (i, (inp, outp)) in asset.examples.iter().enumerate() {
        out.push_str(&format!(
            "\n\n--- Example {} input ---\n{inp}\n--- Example {} output ---\n{outp}",
            i + 1,
            i + 1
        ));
    }
    let body = asset
        .template
        .replace("{{target}}", input.target)
        .replace("{{code}}", &join_blocks(code, NO_CODE))
        .replace("{{usage}}", &join_blocks(usage, "(none)"))
        .replace(
            "{{prior}}",
            &input
                .prior_findings
                .map(|p| format!("Findings so far:\n{p}"))
                .unwrap_or_default(),
        );
    out.push_str("\n\n--- Task ---\n");
    out.push_str(body.trim_end());
    out.push('\n');
    out
}

fn truncate_chars(s: &str, keep: usize) -> String {
    let cut = s.char_indices().nth(keep).map_or(s.len(), |(i, _)| i);
    let head = &s[..cut];
    // prefer ending on a line boundary
    let head = match head.rfind('\n') {
        Some(nl) if nl > 0 => &head[..nl],
        _ => head,
    };
    format!("{head}{TRUNCATION_MARKER}")
}

/// Build the prompt for one analysis step. Code and usage blocks are cut
/// longest-first until the text fits `budget_units`.
pub fn gen_prompt(
    assets: &PromptAssets,
    stage: Stage,
    input: &PromptInput<'_>,
    budget_units: usize,
) -> Result<Prompt, EngineError> {
    let asset = assets.get(stage)?;
    let mut blocks: Vec<CodeBlock> = input
        .related_code
        .iter()
        .chain(input.usage_info.iter())
        .cloned()
        .collect();
    let n_code = input.related_code.len();
    let limit = budget_units * 4;
    let mut cut = vec![false; blocks.len()];
    let mut text = assemble(asset, input, &blocks[..n_code], &blocks[n_code..]);
    let mut truncated = false;
    loop {
        let len = text.chars().count();
        if len <= limit {
            break;
        }
        let over = len - limit;
        let Some((i, cur)) = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (i, b.text.chars().count()))
            .filter(|&(i, n)| n > if cut[i] { TRUNCATION_MARKER.len() } else { 0 })
            .max_by_key(|&(i, n)| (n, std::cmp::Reverse(i)))
        else {
            break;
        };
        let marker = if cut[i] { 0 } else { TRUNCATION_MARKER.len() };
        let body = if cut[i] {
            blocks[i].text.trim_end_matches(TRUNCATION_MARKER).to_string()
        } else {
            blocks[i].text.clone()
        };
        let body_len = body.chars().count();
        let keep = body_len.saturating_sub(over + marker).min(cur.saturating_sub(1));
        blocks[i].text = if keep == 0 {
            TRUNCATION_MARKER.trim_start().to_string()
        } else {
            truncate_chars(&body, keep)
        };
        cut[i] = true;
        truncated = true;
        text = assemble(asset, input, &blocks[..n_code], &blocks[n_code..]);
    }
    Ok(Prompt {
        stage,
        asset_version: asset.version,
        system_text: asset.system.clone(),
        few_shot_examples: asset.examples.clone(),
        target: input.target.to_string(),
        related_code: blocks[..n_code].to_vec(),
        usage_info: blocks[n_code..].to_vec(),
        prior_findings: input.prior_findings.map(str::to_string),
        truncated,
        text,
    })
}

/// The target named in a rendered prompt (`Target: X` line).
pub fn prompt_target(text: &str) -> Option<&str> {
    let task = text.rfind("\n--- Task ---\n").map_or(text, |i| &text[i..]);
    task.lines().find_map(|l| l.strip_prefix("Target: ")).map(str::trim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(n: usize) -> CodeBlock {
        CodeBlock {
            header: "// File: a.c:1-2".into(),
            text: "x = 1;\n".repeat(n),
        }
    }

    #[test]
    fn builtin_assets_parse() {
        let a = PromptAssets::builtin();
        for s in Stage::ALL {
            let asset = a.get(s).unwrap();
            assert_eq!(asset.version, 1);
            assert!(!asset.examples.is_empty(), "{s:?}");
            assert!(asset.template.contains("{{target}}"));
        }
    }

    #[test]
    fn empty_code_placeholder() {
        let a = PromptAssets::builtin();
        let input = PromptInput {
            target: "f",
            related_code: &[],
            usage_info: &[],
            prior_findings: None,
        };
        let p = gen_prompt(&a, Stage::IdentifierDeduction, &input, DEFAULT_BUDGET_UNITS).unwrap();
        assert!(p.text.contains(NO_CODE));
        assert_eq!(prompt_target(&p.text), Some("f"));
        assert!(!p.truncated);
    }

    #[test]
    fn over_budget_is_truncated_longest_first() {
        let a = PromptAssets::builtin();
        let blocks = [code(2000), code(10)];
        let input = PromptInput {
            target: "f",
            related_code: &blocks,
            usage_info: &[],
            prior_findings: None,
        };
        let p = gen_prompt(&a, Stage::TypeRecovery, &input, 1500).unwrap();
        assert!(p.units() <= 1500, "{}", p.units());
        assert!(p.truncated);
        assert!(p.related_code[0].text.ends_with(TRUNCATION_MARKER));
        assert_eq!(p.related_code[1], blocks[1]);
    }

    #[test]
    fn missing_asset() {
        let empty = PromptAssets::default();
        let input = PromptInput {
            target: "f",
            related_code: &[],
            usage_info: &[],
            prior_findings: None,
        };
        assert!(matches!(
            gen_prompt(&empty, Stage::Repair, &input, 100),
            Err(EngineError::AssetMissing(Stage::Repair))
        ));
    }
}
