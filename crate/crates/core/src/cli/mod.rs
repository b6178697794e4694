//! Command-line frontend: configuration, dispatch and artifact output.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use serde_json::json;

use crate::error::Error;
pub use commands::Outcome;
pub use config::{parse_config, Command, Flags, RunConfig, Source};
pub use report::{ArtifactWriter, Manifest, RowMeta};

#[derive(Debug, Parser)]
#[command(name = "twowell", version, about = "Discrete two-well lattice energies: runs, studies and verification suites")]
pub struct Cli {
    /// Command to run; may instead come from the `command` key of the config file
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Flat TOML file with the same keys as the flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: Flags,
}

/// Result of a complete run as seen by the process.
pub struct RunResult {
    pub exit_code: i32,
    /// JSON printed on stdout (success) or stderr (failure).
    pub output: serde_json::Value,
    pub manifest: Option<Manifest>,
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({ "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() } });
    if let Error::Parse { line, .. } = e {
        v["error"]["line"] = json!(line);
    }
    v
}

/// Runs one validated configuration, writing artifacts and the manifest.
pub fn execute(cfg: &RunConfig) -> RunResult {
    let fixture_version = if cfg.command == Command::Calibrate {
        crate::fixtures::FIXTURE_VERSION
    } else {
        match commands::fixture(cfg) {
            Ok(f) => f.version,
            Err(e) => return RunResult { exit_code: e.exit_code(), output: error_json(&e), manifest: None },
        }
    };
    let meta = RowMeta { n: cfg.n, a: cfg.a, lambda: cfg.lambda, seed: cfg.seed, fixture_version };
    let mut out = match ArtifactWriter::new(&cfg.out_dir(), meta) {
        Ok(o) => o,
        Err(e) => return RunResult { exit_code: e.exit_code(), output: error_json(&e), manifest: None },
    };
    let res = commands::run(cfg, &mut out);
    let (status, exit_code, output) = match &res {
        Ok(Outcome { summary, failure: None }) => ("ok", 0, summary.clone()),
        Ok(Outcome { summary, failure: Some(e) }) => {
            let mut v = error_json(e);
            v["summary"] = summary.clone();
            ("failed", e.exit_code(), v)
        }
        Err(e) => ("error", e.exit_code(), error_json(e)),
    };
    if status != "ok" {
        // keep the error next to any partial artifacts
        let _ = out.json("error.json", &output);
    }
    match out.finish(cfg.command.name(), status, cfg.echo()) {
        Ok(m) => RunResult { exit_code, output, manifest: Some(m) },
        Err(e) => RunResult { exit_code: e.exit_code(), output: error_json(&e), manifest: None },
    }
}

/// Parses arguments, runs, prints and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let v = json!({ "error": { "kind": "config", "message": e.to_string().trim(), "exit_code": 2 } });
            eprintln!("{}", serde_json::to_string_pretty(&v).unwrap());
            return 2;
        }
    };
    let cfg = match parse_config(cli.command, cli.config.as_deref(), cli.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&error_json(&e)).unwrap());
            return e.exit_code();
        }
    };
    let r = execute(&cfg);
    let text = serde_json::to_string_pretty(&r.output).unwrap();
    if r.exit_code == 0 {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
    r.exit_code
}
