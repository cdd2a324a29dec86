use std::path::PathBuf;
use std::process::ExitCode;

use aes_core::config::{validate, Overrides, RunConfig};
use aes_core::pipeline;
use aes_core::prompt::Level;
use anyhow::Context;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LevelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    All,
}

impl LevelArg {
    fn levels(self) -> Vec<Level> {
        match self {
            LevelArg::One => vec![Level::Holistic],
            LevelArg::Two => vec![Level::Hybrid],
            LevelArg::Three => vec![Level::RubricFewShot],
            LevelArg::All => Level::ALL.to_vec(),
        }
    }
}

/// Score an Arabic essay corpus with language models and report agreement
/// with human raters.
#[derive(Debug, Parser)]
#[command(name = "aes-eval", version)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Prompting level to run.
    #[arg(long, value_enum, default_value = "all")]
    level: LevelArg,
    /// Model name from the config, or "all".
    #[arg(long, default_value = "all")]
    model: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bootstrap_iters: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Validate the config and inputs without contacting any backend.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    match real_main(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main(args: Args) -> anyhow::Result<ExitCode> {
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    cfg.apply(&Overrides {
        levels: Some(args.level.levels()),
        models: (args.model != "all").then(|| vec![args.model.clone()]),
        seed: args.seed,
        bootstrap_iters: args.bootstrap_iters,
        output_dir: args.out_dir.clone(),
        max_concurrency: args.max_concurrency,
    });

    let violations = cfg.violations();
    if !violations.is_empty() {
        eprintln!("invalid configuration:");
        for v in &violations {
            eprintln!("  - {v}");
        }
        return Ok(ExitCode::from(1));
    }
    if args.dry_run {
        // file-level check as well, so the same path is exercised as `validate`
        if let Err(v) = validate(&args.config) {
            for line in v {
                eprintln!("  - {line}");
            }
            return Ok(ExitCode::from(1));
        }
        for (m, level) in cfg.enabled_groups() {
            println!("{} {}", m.backend.model_name, level);
        }
        println!("configuration ok");
        return Ok(ExitCode::SUCCESS);
    }

    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    let outcome = match runtime.block_on(pipeline::run(&cfg)) {
        Ok(o) => o,
        Err(aes_core::Error::Config(v)) => {
            for line in v {
                eprintln!("  - {line}");
            }
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    for d in &outcome.dispatch {
        eprintln!(
            "{} {}: {} prompts, {} backend calls, {} cache hits, {} failed",
            d.model, d.level, d.prompts, d.backend_calls, d.cache_hits, d.failed_completions
        );
    }
    println!("{}", outcome.run_dir.display());
    if outcome.all_completions_failed() {
        eprintln!("every completion failed; see parse_failures.csv");
    }
    Ok(ExitCode::from(outcome.exit_code() as u8))
}
