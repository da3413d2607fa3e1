//! Stage payloads parsed out of the `result` field of model replies.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{StageOutput, UnknownKind, UnknownTarget};
use crate::indexer::lexer::is_c_identifier;
use crate::syzlang::{parse_spec, parse_type_expr, FlagSet, TypeDef, TypeExpr};

fn opt_str(v: &Value, key: &str) -> Result<Option<String>, String> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(format!("\"{key}\" must be a string")),
    }
}

fn str_list(v: &Value, key: &str) -> Result<Vec<String>, String> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(a)) => a
            .iter()
            .map(|x| {
                x.as_str()
                    .map(|s| s.trim().to_string())
                    .ok_or_else(|| format!("\"{key}\" entries must be strings"))
            })
            .collect(),
        Some(_) => Err(format!("\"{key}\" must be an array")),
    }
}

fn object(v: &Value) -> Result<&serde_json::Map<String, Value>, String> {
    v.as_object().ok_or_else(|| "result must be an object".to_string())
}

/// Handler-init reply: a device name or a socket triple.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitPayload {
    pub device_name: Option<String>,
    pub domain: Option<String>,
    pub sock_type: Option<String>,
    pub protocol: Option<String>,
    pub resource_name: Option<String>,
}

impl InitPayload {
    pub fn is_resolved(&self) -> bool {
        self.device_name.is_some() || (self.domain.is_some() && self.sock_type.is_some())
    }
}

impl StageOutput for InitPayload {
    fn from_result(v: &Value) -> Result<Self, String> {
        object(v)?;
        let p = InitPayload {
            device_name: opt_str(v, "device_name")?,
            domain: opt_str(v, "domain")?,
            sock_type: opt_str(v, "type")?,
            protocol: opt_str(v, "protocol")?,
            resource_name: opt_str(v, "resource_name")?,
        };
        if let Some(r) = &p.resource_name {
            if !is_c_identifier(r) {
                return Err(format!("resource_name {r:?} is not an identifier"));
            }
        }
        if p.device_name.is_some() && p.domain.is_some() {
            return Err("give either device_name or a socket triple, not both".into());
        }
        Ok(p)
    }

    fn merge(&mut self, child: Self) {
        if self.is_resolved() {
            return;
        }
        if child.is_resolved() {
            let name = self.resource_name.take();
            *self = child;
            if self.resource_name.is_none() {
                self.resource_name = name;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawIdentifier {
    pub name: String,
    pub handler: Option<String>,
    pub usage: String,
    pub modified: bool,
    pub level: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierPayload {
    pub identifiers: Vec<RawIdentifier>,
    pub return_relevant: Vec<String>,
}

impl StageOutput for IdentifierPayload {
    fn from_result(v: &Value) -> Result<Self, String> {
        object(v)?;
        let mut out = IdentifierPayload {
            identifiers: Vec::new(),
            return_relevant: str_list(v, "return_relevant")?,
        };
        if let Some(r) = out.return_relevant.iter().find(|r| !is_c_identifier(r)) {
            return Err(format!("return_relevant entry {r:?} is not an identifier"));
        }
        let items = match v.get("identifiers") {
            None | Some(Value::Null) => &[][..],
            Some(Value::Array(a)) => a.as_slice(),
            Some(_) => return Err("\"identifiers\" must be an array".into()),
        };
        for it in items {
            let name = opt_str(it, "name")?.ok_or("identifier without \"name\"")?;
            if !is_c_identifier(&name) {
                return Err(format!("identifier {name:?} is not a macro name"));
            }
            let handler = opt_str(it, "handler")?;
            if let Some(h) = &handler {
                if !is_c_identifier(h) {
                    return Err(format!("handler {h:?} is not an identifier"));
                }
            }
            let modified = match it.get("modified") {
                None | Some(Value::Null) => false,
                Some(Value::Bool(b)) => *b,
                Some(_) => return Err("\"modified\" must be a boolean".into()),
            };
            let level = opt_str(it, "level")?;
            if !out.identifiers.iter().any(|x| x.name == name) {
                out.identifiers.push(RawIdentifier {
                    name,
                    handler,
                    usage: opt_str(it, "usage")?.unwrap_or_default(),
                    modified,
                    level,
                });
            }
        }
        Ok(out)
    }

    fn merge(&mut self, child: Self) {
        for i in child.identifiers {
            if !self.identifiers.iter().any(|x| x.name == i.name) {
                self.identifiers.push(i);
            }
        }
        for r in child.return_relevant {
            if !self.return_relevant.contains(&r) {
                self.return_relevant.push(r);
            }
        }
    }

    fn summary(&self) -> Option<String> {
        if self.identifiers.is_empty() {
            return None;
        }
        let names: Vec<&str> = self.identifiers.iter().map(|i| i.name.as_str()).collect();
        Some(format!("identifiers found: {}", names.join(", ")))
    }
}

/// Argument type of one command, plus the named types it needs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypePayload {
    pub arg_type: Option<TypeExpr>,
    pub types: Vec<String>,
}

fn parse_arg_type(text: &str) -> Result<TypeExpr, String> {
    match text {
        "void" | "none" => Ok(TypeExpr::int_const(0)),
        t => parse_type_expr(t).map_err(|e| format!("arg_type {t:?}: {e}")),
    }
}

impl StageOutput for TypePayload {
    fn from_result(v: &Value) -> Result<Self, String> {
        object(v)?;
        let arg_type = opt_str(v, "arg_type")?.map(|t| parse_arg_type(&t)).transpose()?;
        let types = str_list(v, "types")?;
        if let Some(t) = types.iter().find(|t| !is_c_identifier(t)) {
            return Err(format!("type name {t:?} is not an identifier"));
        }
        Ok(TypePayload { arg_type, types })
    }

    fn merge(&mut self, child: Self) {
        if self.arg_type.is_none() {
            self.arg_type = child.arg_type;
        }
        for t in child.types {
            if !self.types.contains(&t) {
                self.types.push(t);
            }
        }
    }

    fn defer(&mut self, u: &UnknownTarget) -> bool {
        if u.kind != UnknownKind::Type {
            return false;
        }
        if !self.types.contains(&u.identifier) {
            self.types.push(u.identifier.clone());
        }
        true
    }

    fn summary(&self) -> Option<String> {
        self.arg_type
            .as_ref()
            .map(|t| format!("argument type so far: {}", crate::syzlang::render_type(t)))
    }
}

/// Syzlang struct/union (and flag set) declarations for named types.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionPayload {
    pub types: Vec<TypeDef>,
    pub flag_sets: Vec<FlagSet>,
}

impl StageOutput for DefinitionPayload {
    fn from_result(v: &Value) -> Result<Self, String> {
        object(v)?;
        let mut out = DefinitionPayload::default();
        for text in str_list(v, "definitions")? {
            let spec =
                parse_spec(&format!("{}\n", text.trim_end())).map_err(|e| format!("definition does not parse: {e}"))?;
            if !spec.syscalls.is_empty() || !spec.resources.is_empty() || !spec.includes.is_empty() {
                return Err("definitions may only contain types and flag sets".into());
            }
            out.merge(DefinitionPayload {
                types: spec.types,
                flag_sets: spec.flag_sets,
            });
        }
        Ok(out)
    }

    fn merge(&mut self, child: Self) {
        for t in child.types {
            if !self.types.iter().any(|x| x.name == t.name) {
                self.types.push(t);
            }
        }
        for f in child.flag_sets {
            if !self.flag_sets.iter().any(|x| x.name == f.name) {
                self.flag_sets.push(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDependency {
    pub producer: String,
    pub resource: String,
    pub consumer_handler: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyPayload {
    pub resources: Vec<RawDependency>,
}

impl StageOutput for DependencyPayload {
    fn from_result(v: &Value) -> Result<Self, String> {
        object(v)?;
        let items = match v.get("resources") {
            None | Some(Value::Null) => &[][..],
            Some(Value::Array(a)) => a.as_slice(),
            Some(_) => return Err("\"resources\" must be an array".into()),
        };
        let mut out = DependencyPayload::default();
        for it in items {
            let producer = opt_str(it, "producer")?.ok_or("resource without \"producer\"")?;
            let resource = opt_str(it, "resource")?.ok_or("resource without \"resource\"")?;
            let consumer_handler = opt_str(it, "consumer_handler")?;
            for id in [Some(&producer), Some(&resource), consumer_handler.as_ref()]
                .into_iter()
                .flatten()
            {
                if !is_c_identifier(id) {
                    return Err(format!("{id:?} is not an identifier"));
                }
            }
            out.merge(DependencyPayload {
                resources: vec![RawDependency {
                    producer,
                    resource,
                    consumer_handler,
                }],
            });
        }
        Ok(out)
    }

    fn merge(&mut self, child: Self) {
        for r in child.resources {
            if !self.resources.contains(&r) {
                self.resources.push(r);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn init_shapes() {
        let d =
            InitPayload::from_result(&json!({"device_name": "mapper/control", "resource_name": "fd_dm_ctl"})).unwrap();
        assert!(d.is_resolved());
        let s =
            InitPayload::from_result(&json!({"domain": "AF_RDS", "type": "SOCK_SEQPACKET", "protocol": 0})).unwrap();
        assert_eq!(s.protocol.as_deref(), Some("0"));
        assert!(!InitPayload::from_result(&json!({})).unwrap().is_resolved());
        assert!(InitPayload::from_result(&json!({"device_name": "x", "domain": "AF_X"})).is_err());
        assert!(InitPayload::from_result(&json!({"resource_name": "fd x"})).is_err());
    }

    #[test]
    fn identifiers_dedup_and_merge() {
        let mut a = IdentifierPayload::from_result(&json!({"identifiers": [
            {"name": "A", "handler": "fa"}, {"name": "A", "handler": "fb"}]}))
        .unwrap();
        assert_eq!(a.identifiers.len(), 1);
        a.merge(
            IdentifierPayload::from_result(
                &json!({"identifiers": [{"name": "A"}, {"name": "B", "modified": true}], "return_relevant": ["f"]}),
            )
            .unwrap(),
        );
        let names: Vec<_> = a.identifiers.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
        assert!(a.identifiers[1].modified);
        assert_eq!(a.summary().unwrap(), "identifiers found: A, B");
        assert!(IdentifierPayload::from_result(&json!({"identifiers": [{"name": "_IOC_NR(x)"}]})).is_err());
    }

    #[test]
    fn type_payload_parses_and_defers() {
        let mut t =
            TypePayload::from_result(&json!({"arg_type": "ptr[inout, dm_ioctl]", "types": ["dm_ioctl"]})).unwrap();
        assert!(t.arg_type.is_some());
        let u = UnknownTarget {
            identifier: "dm_target_spec".into(),
            kind: UnknownKind::Type,
            usage_info: String::new(),
        };
        assert!(t.defer(&u));
        assert_eq!(t.types, ["dm_ioctl", "dm_target_spec"]);
        let f = UnknownTarget {
            kind: UnknownKind::Function,
            ..u
        };
        assert!(!t.defer(&f));
        let v = TypePayload::from_result(&json!({"arg_type": "void"})).unwrap();
        assert_eq!(v.arg_type, Some(TypeExpr::int_const(0)));
        assert!(TypePayload::from_result(&json!({"arg_type": "ptr[in"})).is_err());
    }

    #[test]
    fn definitions_parse() {
        let d =
            DefinitionPayload::from_result(&json!({"definitions": ["a {\n\tx int32\n}", "b_flags = 1, 2"]})).unwrap();
        assert_eq!(d.types[0].name, "a");
        assert_eq!(d.flag_sets[0].name, "b_flags");
        assert!(DefinitionPayload::from_result(&json!({"definitions": ["ioctl$x(fd fd)"]})).is_err());
        assert!(DefinitionPayload::from_result(&json!({"definitions": ["a {"]})).is_err());
    }

    #[test]
    fn dependencies() {
        let d = DependencyPayload::from_result(&json!({"resources": [
            {"producer": "KVM_CREATE_VM", "resource": "fd_kvm_vm", "consumer_handler": "kvm_vm_fops"}]}))
        .unwrap();
        assert_eq!(d.resources.len(), 1);
        assert!(DependencyPayload::from_result(&json!({"resources": [{"producer": "A"}]})).is_err());
    }
}
