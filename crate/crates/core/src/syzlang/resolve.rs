//! Constant lookup: spec-local values, then the indexed macro/enumerator
//! tables, then a small builtin set for the init syscalls.

use std::collections::BTreeMap;

use crate::indexer::cexpr::ConstEvaluator;
use crate::indexer::DefinitionDatabase;

use super::ast::SpecFile;
use super::validate::{check_spec, ValidateOptions, ValidationError};

/// Resources every spec may consume without producing them.
pub const BUILTIN_RESOURCES: [&str; 2] = ["fd", "sock"];

pub fn builtin_constant(name: &str) -> Option<u64> {
    Some(match name {
        "AT_FDCWD" => (-100i64) as u64,
        "O_RDONLY" => 0,
        "O_WRONLY" => 1,
        "O_RDWR" => 2,
        "O_NONBLOCK" => 0o4000,
        "O_CLOEXEC" => 0o2000000,
        "AF_UNIX" => 1,
        "AF_INET" => 2,
        "AF_INET6" => 10,
        "AF_NETLINK" => 16,
        "SOCK_STREAM" => 1,
        "SOCK_DGRAM" => 2,
        "SOCK_RAW" => 3,
        "SOCK_SEQPACKET" => 5,
        "SOL_SOCKET" => 1,
        _ => return None,
    })
}

pub struct ConstantTable<'a> {
    local: BTreeMap<String, u64>,
    ev: Option<ConstEvaluator<'a>>,
}

impl<'a> ConstantTable<'a> {
    pub fn new(db: Option<&'a DefinitionDatabase>, local: &BTreeMap<String, u64>) -> Self {
        Self {
            local: local.clone(),
            ev: db.map(ConstEvaluator::new),
        }
    }

    pub fn lookup(&self, name: &str) -> Option<u64> {
        if let Some(v) = self.local.get(name) {
            return Some(*v);
        }
        if let Some(ev) = &self.ev {
            match ev.eval_name(name) {
                Ok(v) => return Some(v),
                Err(e) => log::debug!("constant {name}: {e}"),
            }
        }
        builtin_constant(name)
    }
}

/// Fill `constants` with a value for every named constant the spec uses.
/// Syscalls and types are left untouched; unresolved names come back as
/// `UnknownConstant` errors.
pub fn resolve_constants(spec: &SpecFile, db: &DefinitionDatabase) -> (SpecFile, Vec<ValidationError>) {
    resolve_with(spec, &ValidateOptions::with_db(db))
}

pub fn resolve_with(spec: &SpecFile, opts: &ValidateOptions<'_>) -> (SpecFile, Vec<ValidationError>) {
    let report = check_spec(spec, opts);
    let mut out = spec.clone();
    out.constants.extend(report.resolved);
    let errs = report
        .errors
        .into_iter()
        .filter(|e| e.code == super::validate::ErrorCode::UnknownConstant)
        .collect();
    (out, errs)
}
