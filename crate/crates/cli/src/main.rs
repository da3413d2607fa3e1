use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use speckernel::engine::Usage;
use speckernel::orchestrator::{self as orch, ConfigFile, OrchestratorError, RunConfig};

#[derive(Parser)]
#[command(
    name = "speckernel",
    version,
    about = "Synthesize syzlang descriptions from kernel driver source"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Index the corpus; write defs.json and handlers.json.
    Index(Common),
    /// List operation handlers found in the corpus.
    Handlers(Common),
    /// Run the analysis stages and write unrepaired specs.
    Generate(Common),
    /// Validate spec files; prints a JSON array of errors.
    Validate {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        /// Definition database for constant checks.
        #[arg(long)]
        defs: Option<PathBuf>,
    },
    /// Repair spec files, writing results under the output directory.
    Repair {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Index, generate, validate and repair.
    Run(Common),
    /// Print the summary of a previous generate or run.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["http", "replay", "record"])]
    backend: Option<String>,
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_iter: Option<u32>,
    /// Only handlers whose struct name matches this regex.
    #[arg(long)]
    handlers: Option<String>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    resume: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, OrchestratorError> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            corpus: self.corpus.clone(),
            out: self.out.clone(),
            backend: self.backend.clone(),
            transcripts: self.transcripts.clone(),
            model: self.model.clone(),
            temperature: self.temperature,
            max_iter: self.max_iter,
            handlers: self.handlers.clone(),
            parallel: self.parallel,
            resume: self.resume.then_some(true),
            ..Default::default()
        };
        RunConfig::from_file(file.overlay(flags))
    }
}

fn usage_line(u: &Usage) -> String {
    format!(
        "model queries {} (backend {}, cache hits {}, retries {})",
        u.queries, u.backend_calls, u.cache_hits, u.retries
    )
}

fn run(cmd: Cmd) -> Result<i32, OrchestratorError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut say = |s: &str| {
        let _ = writeln!(out, "{s}");
    };
    match cmd {
        Cmd::Index(c) => {
            let s = orch::cmd_index(&c.config()?)?;
            say(&s.describe());
            Ok(orch::EXIT_OK)
        }
        Cmd::Handlers(c) => {
            let cfg = c.config()?;
            let s = orch::load_or_index(&cfg)?;
            for h in orch::select_handlers(&cfg, &s.handlers) {
                say(&format!("{}\t{:?}\t{}:{}", h.struct_name, h.kind, h.file, h.line));
            }
            Ok(orch::EXIT_OK)
        }
        Cmd::Generate(c) => {
            let o = orch::cmd_generate(&c.config()?)?;
            say(o.report.summary().trim_end());
            eprintln!("{}", usage_line(&o.usage));
            Ok(o.exit_code)
        }
        Cmd::Run(c) => {
            let o = orch::cmd_run(&c.config()?)?;
            if o.exit_code == orch::EXIT_NO_HANDLERS {
                eprintln!("no handlers found");
            } else {
                say(o.report.summary().trim_end());
                eprintln!("{}", usage_line(&o.usage));
            }
            Ok(o.exit_code)
        }
        Cmd::Validate { specs, defs } => {
            let db = defs.as_deref().map(orch::load_defs).transpose()?;
            let (errors, code) = orch::cmd_validate(&specs, db.as_ref())?;
            say(&orch::errors_json(&errors));
            Ok(code)
        }
        Cmd::Repair { specs, common } => {
            let cfg = common.config()?;
            let reports = orch::cmd_repair(&cfg, &specs)?;
            let mut code = orch::EXIT_OK;
            for (key, r) in &reports {
                say(&format!(
                    "{key}: fixed {} pruned {} remaining errors {}",
                    r.fixed.len(),
                    r.pruned.len(),
                    r.final_error_count
                ));
                if r.final_error_count > 0 {
                    code = orch::EXIT_FAILED;
                }
            }
            Ok(code)
        }
        Cmd::Report { out } => {
            say(orch::cmd_report(&out)?.summary().trim_end());
            Ok(orch::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli.cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
