#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use anyhow::Context;
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use run::{Failure, Run};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Runs non-local anisotropic fracture energy experiments from TOML configs.
#[derive(Parser)]
#[command(name = "aniso", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts and manifest.
    Run {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// As `run`, for configs of kind `minimize` only.
    Minimize {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the JSON schema of the config format.
    Schema,
}

fn threads() -> Result<usize, Failure> {
    let n = match std::env::var("ANISO_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Invalid(format!("ANISO_THREADS: expected a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Io(e.to_string()))?;
    Ok(rayon::current_num_threads())
}

/// Output directory, read leniently so a manifest can be written even
/// when the config does not parse.
fn output_dir(text: Option<&str>, cfg: Option<&ExperimentConfig>, out: Option<PathBuf>) -> PathBuf {
    if let Some(o) = out {
        return o;
    }
    if let Some(c) = cfg {
        return c.output.dir.clone().into();
    }
    text.and_then(|t| t.parse::<toml::Table>().ok())
        .and_then(|t| t.get("output")?.get("dir")?.as_str().map(PathBuf::from))
        .unwrap_or_else(|| config::default_dir().into())
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn run_command(path: &Path, out: Option<PathBuf>, only: Option<&str>) -> anyhow::Result<i32> {
    let start = Instant::now();
    let text = std::fs::read_to_string(path);
    let parsed = match &text {
        Ok(t) => config::parse(t).map_err(Failure::from),
        Err(e) => Err(Failure::Invalid(format!("cannot read {}: {e}", path.display()))),
    };
    let parsed = parsed.and_then(|c| match only {
        Some(kind) if c.experiment.kind() != kind => Err(Failure::Invalid(format!(
            "experiment.kind: expected {kind}, found {}",
            c.experiment.kind()
        ))),
        _ => Ok(c),
    });
    let cfg = parsed.as_ref().ok();
    let dir = output_dir(text.as_deref().ok(), cfg, out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut run = Run::new(&dir);
    let mut threads_used = None;
    let result = match &parsed {
        Ok(cfg) => threads().and_then(|n| {
            threads_used = Some(n);
            log::info!("running {} into {}", cfg.experiment.kind(), dir.display());
            run::execute(cfg, &mut run)
        }),
        Err(f) => Err(Failure::Invalid(f.message().to_string())),
    };
    let (status, message, code) = match &result {
        Ok(()) => ("ok", String::new(), 0),
        Err(f) => (f.status(), f.message().to_string(), f.exit_code()),
    };
    let manifest = json!({
        "tool": "aniso",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": aniso_core::VERSION,
        "config_path": path.display().to_string(),
        "config_sha256": text.as_ref().ok().map(|t| sha256_hex(t.as_bytes())),
        "experiment": cfg.map(|c| c.experiment.kind()),
        "seed": cfg.map(|c| c.seed),
        "config": cfg,
        "threads": threads_used,
        "status": status,
        "message": message,
        "exit_code": code,
        "artifacts": run.artifacts,
        "summary": run.summary,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    match &result {
        Ok(()) => println!("{}", serde_json::to_string_pretty(&run.summary)?),
        Err(f) => eprintln!("error: {}", f.message()),
    }
    Ok(code)
}

fn validate_command(path: &Path) -> i32 {
    let checked = std::fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))
        .and_then(|t| config::parse(&t).map_err(Failure::from))
        .and_then(|cfg| run::validate(&cfg).map(|()| cfg));
    match checked {
        Ok(cfg) => {
            println!("ok: {}", cfg.experiment.kind());
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => run_command(&config, out, None),
        Command::Minimize { config, out } => run_command(&config, out, Some("minimize")),
        Command::Validate { config } => Ok(validate_command(&config)),
        Command::Schema => {
            let schema = schemars::schema_for!(ExperimentConfig);
            println!("{}", serde_json::to_string_pretty(&schema).expect("serializable schema"));
            Ok(0)
        }
    }
    .unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        1
    });
    ExitCode::from(code as u8)
}
