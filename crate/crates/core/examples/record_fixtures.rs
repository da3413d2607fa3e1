//! Regenerate the replay transcripts and golden outputs of the bundled
//! fixtures from their `script.json` model scripts.
//!
//! cargo run -p speckernel --example record_fixtures [fixture...]

use std::path::{Path, PathBuf};

use speckernel::engine::{RecordBackend, ScriptedBackend};
use speckernel::orchestrator::{client_with_backend, cmd_run_with, ConfigFile, RunConfig};

fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let e = e?;
        let dst = to.join(e.file_name());
        if e.file_type()?.is_dir() {
            copy_tree(&e.path(), &dst)?;
        } else {
            std::fs::copy(e.path(), dst)?;
        }
    }
    Ok(())
}

fn record(dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let transcripts = dir.join("transcripts");
    let golden = dir.join("golden");
    for d in [&transcripts, &golden] {
        if d.exists() {
            std::fs::remove_dir_all(d)?;
        }
    }
    let out = tempfile::tempdir()?;
    let file = ConfigFile::load(&dir.join("run.toml"))?;
    let cfg = RunConfig::from_file(file.overlay(ConfigFile {
        out: Some(out.path().to_path_buf()),
        ..Default::default()
    }))?;
    let script = ScriptedBackend::load(&dir.join("script.json"))?;
    let client = client_with_backend(&cfg, Box::new(RecordBackend::new(script, &transcripts)));
    let outcome = cmd_run_with(&cfg, client)?;
    std::fs::create_dir_all(&golden)?;
    std::fs::copy(out.path().join("report.json"), golden.join("report.json"))?;
    for sub in ["specs", "pruned"] {
        if out.path().join(sub).is_dir() {
            copy_tree(&out.path().join(sub), &golden.join(sub))?;
        }
    }
    println!(
        "{}: exit {}, {} model exchange(s) recorded",
        dir.display(),
        outcome.exit_code,
        outcome.usage.backend_calls
    );
    print!("{}", outcome.report.summary());
    Ok(())
}

fn main() {
    let root = fixtures_root();
    let names: Vec<String> = std::env::args().skip(1).collect();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
        .expect("fixtures directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("script.json").is_file() && p.join("run.toml").is_file())
        .filter(|p| names.is_empty() || names.iter().any(|n| p.ends_with(n)))
        .collect();
    dirs.sort();
    for d in dirs {
        if let Err(e) = record(&d) {
            eprintln!("{}: {e}", d.display());
            std::process::exit(1);
        }
    }
}
