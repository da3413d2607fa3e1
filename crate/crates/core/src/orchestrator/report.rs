//! `report.json`: the machine-readable summary of a generate or run.

use serde::{Deserialize, Serialize};

use crate::engine::Stage;
use crate::indexer::HandlerKind;
use crate::pipeline::HandlerInitSpec;
use crate::repair::RepairReport;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub identifiers: usize,
    pub types: usize,
    pub dependencies: usize,
    pub syscalls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerReport {
    pub handler: String,
    pub key: String,
    pub file: String,
    pub line: u32,
    pub kind: HandlerKind,
    pub ok: bool,
    pub error: Option<String>,
    pub stages_completed: Vec<Stage>,
    pub init: Option<HandlerInitSpec>,
    pub handle: Option<String>,
    pub counts: Counts,
    pub unresolved: Vec<String>,
    pub notes: Vec<String>,
    /// Analysis steps and prompt size across the four stages.
    pub queries: u64,
    pub prompt_units: u64,
    /// Spec path relative to the output directory.
    pub spec: Option<String>,
    /// Validator errors in the assembled spec, before any repair.
    pub validation_errors: Option<usize>,
    /// Whether the written spec validates with zero errors.
    pub clean: bool,
    pub repair: Option<RepairReport>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub handlers: usize,
    pub failed: usize,
    pub clean_specs: usize,
    pub identifiers: usize,
    pub types: usize,
    pub dependencies: usize,
    pub syscalls: usize,
    pub queries: u64,
    pub repair_queries: u64,
    pub fixed: usize,
    pub pruned: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub handlers_found: usize,
    pub handlers: Vec<HandlerReport>,
    pub collisions: Vec<String>,
    pub totals: Totals,
}

impl Report {
    pub fn new(command: &str, handlers_found: usize, handlers: Vec<HandlerReport>, collisions: Vec<String>) -> Self {
        let mut t = Totals {
            handlers: handlers.len(),
            ..Default::default()
        };
        for h in &handlers {
            t.failed += usize::from(!h.ok);
            t.clean_specs += usize::from(h.clean);
            t.identifiers += h.counts.identifiers;
            t.types += h.counts.types;
            t.dependencies += h.counts.dependencies;
            t.syscalls += h.counts.syscalls;
            t.queries += h.queries;
            if let Some(r) = &h.repair {
                t.repair_queries += r.queries + r.type_queries;
                t.fixed += r.fixed.len();
                t.pruned += r.pruned.len();
            }
        }
        Self {
            schema: REPORT_SCHEMA,
            command: command.to_string(),
            handlers_found,
            handlers,
            collisions,
            totals: t,
        }
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let t = &self.totals;
        let mut s = format!(
            "{}: {} handler(s) found, {} processed, {} failed, {} clean spec(s)\n",
            self.command, self.handlers_found, t.handlers, t.failed, t.clean_specs
        );
        s.push_str(&format!(
            "identifiers {}  types {}  dependencies {}  syscalls {}  queries {}  repair queries {}  fixed {}  pruned {}\n",
            t.identifiers, t.types, t.dependencies, t.syscalls, t.queries, t.repair_queries, t.fixed, t.pruned
        ));
        for h in &self.handlers {
            let status = match (&h.error, h.clean) {
                (Some(e), _) => format!("FAILED: {e}"),
                (None, true) => "clean".to_string(),
                (None, false) => "has errors".to_string(),
            };
            s.push_str(&format!(
                "  {:<24} ids {:>3}  types {:>3}  deps {:>2}  syscalls {:>3}  {status}\n",
                h.key, h.counts.identifiers, h.counts.types, h.counts.dependencies, h.counts.syscalls
            ));
        }
        for c in &self.collisions {
            s.push_str(&format!("  collision: {c}\n"));
        }
        s
    }
}
