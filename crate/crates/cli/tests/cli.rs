use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    root().join("fixtures").join(name)
}

fn speckernel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speckernel"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_tree(&e.path(), &dst);
        } else {
            std::fs::copy(e.path(), dst).unwrap();
        }
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_dm(out: &Path, extra: &[&str]) -> Output {
    let cfg = fixture("dm").join("run.toml");
    let mut args = vec!["run", "--config", s(&cfg), "--out", s(out)];
    args.extend_from_slice(extra);
    speckernel(&args)
}

#[test]
fn empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty");
    std::fs::create_dir(&corpus).unwrap();
    let out = dir.path().join("out");
    let o = speckernel(&["index", "--corpus", s(&corpus), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("indexed 0 file(s)"));
    let handlers: Value = serde_json::from_str(&std::fs::read_to_string(out.join("handlers.json")).unwrap()).unwrap();
    assert_eq!(handlers["handlers"].as_array().map(Vec::len), Some(0));

    let transcripts = dir.path().join("t");
    let o = speckernel(&[
        "run",
        "--corpus",
        s(&corpus),
        "--out",
        s(&out),
        "--backend",
        "replay",
        "--transcripts",
        s(&transcripts),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("no handlers found"));
}

#[test]
fn corrupted_file_is_skipped_with_one_warning() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    copy_tree(&fixture("dm").join("src"), &corpus);
    std::fs::write(corpus.join("bad.c"), b"\xff\xfe int x;").unwrap();
    let o = speckernel(&["index", "--corpus", s(&corpus), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 0);
    let warnings: Vec<String> = stderr(&o)
        .lines()
        .filter(|l| l.contains("WARN"))
        .map(str::to_string)
        .collect();
    assert_eq!(warnings.len(), 1, "{warnings:?}");
    assert!(warnings[0].contains("bad.c"));
    assert!(stdout(&o).contains("1 warning(s)"));
}

#[test]
fn validate_exit_codes() {
    let specs = root().join("fixtures/specs");
    let valid: Vec<String> = std::fs::read_dir(specs.join("valid"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    let mut args = vec!["validate"];
    args.extend(valid.iter().map(String::as_str));
    let o = speckernel(&args);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(
        serde_json::from_str::<Value>(&stdout(&o)).unwrap(),
        Value::Array(vec![])
    );

    let o = speckernel(&["validate", s(&specs.join("invalid/UnknownConstant.txt"))]);
    assert_eq!(code(&o), 1);
    let errs: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(errs[0]["code"], "UnknownConstant");
    assert_eq!(errs[0]["location"]["line"], 4);

    let o = speckernel(&["validate", s(&specs.join("invalid/SyntaxError.txt"))]);
    assert_eq!(code(&o), 2);
    let errs: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(errs[0]["code"], "SyntaxError");
}

#[test]
fn filter_matching_nothing_exits_3() {
    let out = tempfile::tempdir().unwrap();
    let o = run_dm(out.path(), &["--handlers", "^no_such_handler$"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn handlers_lists_the_control_device() {
    let out = tempfile::tempdir().unwrap();
    let cfg = fixture("dm").join("run.toml");
    let o = speckernel(&["handlers", "--config", s(&cfg), "--out", s(out.path())]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["_ctl_fops"]);
}

#[test]
fn dm_run_is_byte_identical_and_matches_golden() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_dm(a.path(), &[]);
    let second = run_dm(b.path(), &[]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(code(&second), 0);
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(snapshot(a.path()), snapshot(b.path()));
    assert_eq!(
        snapshot(&a.path().join("specs")),
        snapshot(&fixture("dm").join("golden/specs"))
    );
    assert_eq!(
        std::fs::read(a.path().join("report.json")).unwrap(),
        std::fs::read(fixture("dm").join("golden/report.json")).unwrap()
    );

    let o = speckernel(&["report", "--out", s(a.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), stdout(&first));
}

#[test]
fn resume_makes_no_backend_calls() {
    let out = tempfile::tempdir().unwrap();
    let first = run_dm(out.path(), &[]);
    assert!(!stderr(&first).contains("backend 0,"), "{}", stderr(&first));
    std::fs::remove_dir_all(out.path().join("specs")).unwrap();
    let again = run_dm(out.path(), &["--resume"]);
    assert_eq!(code(&again), 0);
    assert!(stderr(&again).contains("backend 0,"), "{}", stderr(&again));
    assert_eq!(
        snapshot(&out.path().join("specs")),
        snapshot(&fixture("dm").join("golden/specs"))
    );
}

#[test]
fn missing_transcript_fails_only_its_handler() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    copy_tree(&fixture("dm").join("src"), &corpus);
    std::fs::write(
        corpus.join("extra.c"),
        "#include <linux/fs.h>\n\n\
         static long xtra_ioctl(struct file *f, unsigned int cmd, unsigned long arg)\n{\n\treturn 0;\n}\n\n\
         static const struct file_operations xtra_fops = {\n\t.unlocked_ioctl = xtra_ioctl,\n};\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let transcripts = fixture("dm").join("transcripts");
    let o = speckernel(&[
        "run",
        "--corpus",
        s(&corpus),
        "--out",
        s(&out),
        "--backend",
        "replay",
        "--transcripts",
        s(&transcripts),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let handlers = report["handlers"].as_array().unwrap();
    assert_eq!(handlers.len(), 2);
    let by_name: BTreeMap<&str, &Value> = handlers.iter().map(|h| (h["handler"].as_str().unwrap(), h)).collect();
    assert_eq!(by_name["_ctl_fops"]["clean"], true);
    assert_eq!(by_name["xtra_fops"]["ok"], false);
    assert!(by_name["xtra_fops"]["error"]
        .as_str()
        .unwrap()
        .contains("no transcript"));
    let specs: Vec<PathBuf> = snapshot(&out.join("specs")).into_keys().collect();
    assert_eq!(
        specs,
        [PathBuf::from("_ctl_fops.const"), PathBuf::from("_ctl_fops.txt")]
    );
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "backend = \"replay\"\n").unwrap();
    let o = speckernel(&["run", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error:"));
}
