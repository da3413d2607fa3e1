//! Per-handler stage results persisted between runs.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::payload::InitPayload;
use super::stages::{DependencyFinding, IdentifierStage, TypeStage};
use crate::engine::Stage;

pub const STATE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerState {
    pub schema: u32,
    pub handler: String,
    pub init: Option<InitPayload>,
    pub identifiers: Option<IdentifierStage>,
    pub types: Option<TypeStage>,
    pub dependencies: Option<Vec<DependencyFinding>>,
    pub notes: Vec<String>,
    /// Analysis steps run across completed stages.
    pub queries: u64,
    pub prompt_units: u64,
}

impl HandlerState {
    pub fn new(handler: &str) -> Self {
        Self {
            schema: STATE_SCHEMA,
            handler: handler.to_string(),
            ..Default::default()
        }
    }

    pub fn completed(&self) -> Vec<Stage> {
        let mut v = Vec::new();
        if self.init.is_some() {
            v.push(Stage::HandlerInit);
        }
        if self.identifiers.is_some() {
            v.push(Stage::IdentifierDeduction);
        }
        if self.types.is_some() {
            v.push(Stage::TypeRecovery);
        }
        if self.dependencies.is_some() {
            v.push(Stage::DependencyAnalysis);
        }
        v
    }
}

pub struct StateStore {
    dir: PathBuf,
}

impl StateStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Saved state for `key`, if present, readable and for `handler`.
    pub fn load(&self, key: &str, handler: &str) -> Option<HandlerState> {
        let text = std::fs::read_to_string(self.path(key)).ok()?;
        let st: HandlerState = match serde_json::from_str(&text) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("ignoring unreadable state for {key}: {e}");
                return None;
            }
        };
        (st.schema == STATE_SCHEMA && st.handler == handler).then_some(st)
    }

    pub fn save(&self, key: &str, st: &HandlerState) -> std::io::Result<()> {
        write_atomic(&self.path(key), serde_json::to_string_pretty(st)?.as_bytes())
    }
}

/// Write through a temporary file in the same directory and rename over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    if !bytes.ends_with(b"\n") {
        tmp.write_all(b"\n")?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let store = StateStore::new(dir.path().join("state"));
        let mut st = HandlerState::new("_ctl_fops");
        st.init = Some(InitPayload::default());
        st.queries = 2;
        store.save("_ctl_fops", &st).unwrap();
        assert_eq!(store.load("_ctl_fops", "_ctl_fops"), Some(st.clone()));
        assert_eq!(store.load("_ctl_fops", "other"), None);
        assert_eq!(store.load("missing", "x"), None);
        assert_eq!(st.completed(), [Stage::HandlerInit]);
    }
}
