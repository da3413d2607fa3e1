mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::scenarios::{dependency_graph, load_specs, run_fixture, tree_snapshot};
use common::{fixture, read};
use serde_json::Value;
use speckernel::engine::{AnalysisCtx, LlmClient, ScriptedBackend, TranscriptEntry};
use speckernel::indexer::{DefinitionDatabase, HandlerKind, HandlerRegistration, DEFAULT_TRIGGER_FIELDS};
use speckernel::orchestrator::{cmd_run, ConfigFile, RunConfig, EXIT_OK};
use speckernel::pipeline::{deduce_identifiers, InitSyscall};
use speckernel::syzlang::{parse_const_file, parse_spec, validate_with, ValidateOptions};

fn assert_matches_golden(name: &str, out: &std::path::Path) {
    let golden = fixture(name).join("golden");
    let want = tree_snapshot(&golden.join("specs"));
    let got = tree_snapshot(&out.join("specs"));
    assert_eq!(
        got.keys().collect::<Vec<_>>(),
        want.keys().collect::<Vec<_>>(),
        "{name}"
    );
    for (k, v) in &want {
        assert_eq!(
            String::from_utf8_lossy(&got[k]),
            String::from_utf8_lossy(v),
            "{name}: {k}"
        );
    }
    assert_eq!(
        read(&out.join("report.json")),
        read(&golden.join("report.json")),
        "{name}"
    );
}

#[test]
fn dm_run_matches_golden_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let first = run_fixture("dm", a.path());
    assert!(started.elapsed().as_secs_f64() < 10.0);
    let second = run_fixture("dm", b.path());
    assert_eq!(first.exit_code, EXIT_OK);
    assert_eq!(second.exit_code, EXIT_OK);
    assert_matches_golden("dm", a.path());
    assert_eq!(tree_snapshot(a.path()), tree_snapshot(b.path()));

    let text = read(&a.path().join("specs/_ctl_fops.txt"));
    let mut spec = parse_spec(&text).unwrap();
    spec.constants = parse_const_file(&read(&a.path().join("specs/_ctl_fops.const"))).unwrap();
    assert!(validate_with(&spec, &ValidateOptions::default()).is_empty());
    let init = &spec.syscalls[0];
    assert_eq!(init.full_name(), "openat$mapper_control");
    assert!(text.contains("string[\"/dev/mapper/control\"]"));
    assert!(spec.syscall("ioctl$dm_version").is_some());
    let others = spec
        .syscalls
        .iter()
        .filter(|s| s.base_name == "ioctl" && s.full_name() != "ioctl$dm_version")
        .count();
    assert!(others >= 3, "{others}");
    assert_eq!(spec.constants["DM_VERSION"], 0xC138_FD00);

    let h = &first.report.handlers[0];
    assert!(h.counts.identifiers >= 1);
    let r = h.repair.as_ref().unwrap();
    assert_eq!(
        r.fixed.len() + r.pruned.len(),
        first.report.totals.fixed + first.report.totals.pruned
    );
    assert!(h.clean);
}

#[test]
fn every_fixture_matches_its_golden() {
    for name in ["kvm", "socket", "typerec"] {
        let out = tempfile::tempdir().unwrap();
        let o = run_fixture(name, out.path());
        assert_eq!(o.exit_code, EXIT_OK, "{name}");
        assert_matches_golden(name, out.path());
        assert_eq!(o.report.totals.clean_specs, o.report.handlers.len(), "{name}");
    }
}

#[test]
fn kvm_chain_matches_golden_graph() {
    let out = tempfile::tempdir().unwrap();
    run_fixture("kvm", out.path());
    let specs = load_specs(&out.path().join("specs"));
    let got = dependency_graph(&specs);
    let want: Value = serde_json::from_str(&read(&fixture("kvm").join("golden/dependencies.json"))).unwrap();
    assert_eq!(got, want);
    let edges = got["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 2);
    assert_eq!(edges[0]["to"], edges[1]["from"]);
}

#[test]
fn nested_types_recovered_with_len() {
    let out = tempfile::tempdir().unwrap();
    run_fixture("typerec", out.path());
    let text = read(&out.path().join("specs/vhub_fops.txt"));
    assert!(
        text.contains("vhub_dev_list {\n\tcount len[devices]\n\tdevices array[vhub_dev_info]\n}\n"),
        "{text}"
    );
    let spec = parse_spec(&text).unwrap();
    for t in ["vhub_dev_list", "vhub_dev_info", "vhub_port_addr"] {
        assert!(spec.type_def(t).is_some(), "{t}");
    }
    // the inner struct was asked for as its own definition step
    let asked: BTreeSet<String> = std::fs::read_dir(out.path().join("cache"))
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            let key = p.file_stem()?.to_str()?.to_string();
            let entry = TranscriptEntry::read(p.parent()?, &key)?;
            speckernel::engine::prompt_target(&entry.prompt).map(str::to_string)
        })
        .collect();
    assert!(
        asked.contains("vhub_dev_info") && asked.contains("vhub_port_addr"),
        "{asked:?}"
    );
}

#[test]
fn socket_handler_gets_socket_init() {
    let out = tempfile::tempdir().unwrap();
    let o = run_fixture("socket", out.path());
    let h = &o.report.handlers[0];
    assert_eq!(h.kind, HandlerKind::ProtoOps);
    let init = h.init.as_ref().unwrap();
    assert_eq!(init.init_syscall, InitSyscall::Socket);
    assert!(init.device_path.is_none());
    let t = init.socket.as_ref().unwrap();
    assert_eq!(
        (t.domain.as_str(), t.sock_type.as_str(), t.protocol.as_str()),
        ("AF_RDS", "SOCK_SEQPACKET", "0")
    );
    let spec = parse_spec(&read(&out.path().join("specs/rds_proto_ops.txt"))).unwrap();
    assert!(spec.syscall("getsockopt$rds_recverr").is_some());
    assert!(spec.syscall("setsockopt$rds_recverr").is_some());
}

#[test]
fn two_dispatch_levels_yield_four_findings() {
    let src = "static long x_a(void __user *p) { return 0; }\n\
               static long x_sub(unsigned int cmd, void __user *p)\n{\n\tswitch (cmd) {\n\tcase X_C: return 0;\n\tcase X_D: return 1;\n\t}\n\treturn -1;\n}\n\
               static long x_ioctl(struct file *f, unsigned int cmd, unsigned long arg)\n{\n\tswitch (cmd) {\n\tcase X_A: return x_a((void __user *)arg);\n\tcase X_B: return 0;\n\tdefault: return x_sub(cmd, (void __user *)arg);\n\t}\n}\n";
    let db = DefinitionDatabase::from_sources(vec![("x.c".into(), src.into())], 10);
    let script = r#"{"rules": [
        {"stage": "identifier_deduction", "focus": "x_ioctl", "response": {"result": {"identifiers": [{"name": "X_A", "handler": "x_a"}, {"name": "X_B"}]}, "unknowns": [{"identifier": "x_sub", "kind": "Function", "usage_info": "default branch"}]}},
        {"stage": "identifier_deduction", "focus": "x_sub", "response": {"result": {"identifiers": [{"name": "X_C"}, {"name": "X_D"}]}, "unknowns": []}}
    ]}"#;
    let client = LlmClient::new(Box::new(ScriptedBackend::from_json(script).unwrap()));
    let mut ctx = AnalysisCtx::new(&db, &client);
    let reg = HandlerRegistration {
        struct_name: "x_fops".into(),
        struct_type: "file_operations".into(),
        kind: HandlerKind::FileOps,
        bound_ops: [("unlocked_ioctl".to_string(), "x_ioctl".to_string())].into(),
        file: "x.c".into(),
        line: 1,
        usages: vec![],
    };
    let triggers: Vec<String> = DEFAULT_TRIGGER_FIELDS.iter().map(|s| s.to_string()).collect();
    let st = deduce_identifiers(&reg, &triggers, &mut ctx).unwrap();
    let names: Vec<&str> = st.findings.iter().map(|f| f.const_name.as_str()).collect();
    assert_eq!(names, ["X_A", "X_B", "X_C", "X_D"]);
    assert!(st.findings[0].resolved);
    assert!(st.findings.iter().all(|f| f.syscall == "ioctl"));
    assert_eq!(ctx.queries, 2);
}

#[test]
fn resume_answers_from_cache() {
    let out = tempfile::tempdir().unwrap();
    let first = run_fixture("dm", out.path());
    assert!(first.usage.backend_calls > 0);
    // simulate an interruption after the analysis finished
    std::fs::remove_dir_all(out.path().join("specs")).unwrap();
    std::fs::remove_file(out.path().join("report.json")).unwrap();
    let file = ConfigFile::load(&fixture("dm").join("run.toml")).unwrap();
    let cfg = RunConfig::from_file(file.overlay(ConfigFile {
        out: Some(out.path().to_path_buf()),
        resume: Some(true),
        ..Default::default()
    }))
    .unwrap();
    let again = cmd_run(&cfg).unwrap();
    assert_eq!(again.usage.backend_calls, 0);
    assert!(again.usage.cache_hits >= 1);
    assert_eq!(again.report, first.report);
    assert_matches_golden("dm", out.path());
}
