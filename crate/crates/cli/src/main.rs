//! `unidim`: the batch pipeline as composable subcommands over one workspace.

mod error;
mod fixtures;
mod stages;
mod state;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use unidim::io::RunConfig;

use crate::error::{CliError, Result};
use crate::stages::{align, content, contrast, factorize, kernel, report, universality, Ctx, Summary};
use crate::state::Workspace;

#[derive(Debug, Parser)]
#[command(name = "unidim", version, about = "Universality of symmetric-NMF similarity dimensions across models")]
struct Cli {
    /// JSON run config (default: <workspace>/config.json when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding stage outputs, markers and the log.
    #[arg(long, global = true, env = "UNIDIM_WORKSPACE")]
    workspace: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    /// Overrides the config's rng_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// RBF similarity matrices over the bandwidth grid.
    Kernel,
    /// Multi-seed symmetric NMF, bandwidth selection and central seed.
    Factorize,
    /// Matched, null-calibrated universality, ceilings, CKA and resampling.
    Universality,
    /// Category variance decomposition and reconstruction importance.
    Content,
    /// Neural encoding and triplet alignment, including half-masked runs.
    Align,
    /// Model-group contrasts on model-level universality.
    Contrast,
    /// Merged tables for plotting.
    Report,
    /// Every stage in order; align and contrast run when configured.
    All,
    /// Writes a synthetic planted ensemble and its config into the workspace.
    Fixtures(FixtureArgs),
}

#[derive(Debug, Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 10)]
    models: usize,
    #[arg(long, default_value_t = 25)]
    categories: usize,
    #[arg(long, default_value_t = 12)]
    per_category: usize,
    #[arg(long, default_value_t = 8)]
    rank: usize,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 200)]
    permutations: usize,
}

fn load_config(cli: &Cli, root: &Path) -> Result<RunConfig> {
    let default_path = root.join("config.json");
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if default_path.is_file() => RunConfig::load(&default_path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes the effective config unless the file already holds it.
fn persist_config(ws: &Workspace, cfg: &RunConfig) -> Result<()> {
    let path = ws.path("config.effective.json");
    let text = serde_json::to_string_pretty(cfg).expect("config serializes") + "\n";
    if std::fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn print_summary(stage: &str, s: Summary) {
    println!("{stage}: {} ran, {} skipped", s.ran, s.skipped);
}

fn run_stage(ctx: &Ctx, stage: &str, f: fn(&Ctx) -> Result<Summary>) -> Result<()> {
    ctx.ws.log(json!({"event": "command", "stage": stage}));
    let s = f(ctx)?;
    print_summary(stage, s);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let root = cli
        .workspace
        .clone()
        .ok_or_else(|| CliError::Config("no workspace: pass --workspace or set UNIDIM_WORKSPACE".into()))?;
    let ws = Workspace::open(&root)?;

    if let Command::Fixtures(a) = &cli.command {
        let opts = fixtures::FixtureOptions {
            models: a.models,
            categories: a.categories,
            per_category: a.per_category,
            rank: a.rank,
            seeds: a.seeds,
            permutations: a.permutations,
            seed: cli.seed.unwrap_or(0),
            ..Default::default()
        };
        let manifest = fixtures::generate(&root, &opts)?;
        ws.log(json!({"event": "fixtures", "manifest": manifest.display().to_string()}));
        println!(
            "fixtures: {} models, {} images, manifest {}",
            opts.models,
            opts.categories * opts.per_category,
            manifest.display()
        );
        return Ok(());
    }

    let cfg = load_config(&cli, &root)?;
    persist_config(&ws, &cfg)?;
    let ctx = Ctx {
        ws,
        cfg,
        force: cli.force,
    };
    let pipeline = || -> Result<()> {
        match cli.command {
            Command::Kernel => run_stage(&ctx, kernel::STAGE, kernel::run),
            Command::Factorize => run_stage(&ctx, factorize::STAGE, factorize::run),
            Command::Universality => run_stage(&ctx, universality::STAGE, universality::run),
            Command::Content => run_stage(&ctx, content::STAGE, content::run),
            Command::Align => run_stage(&ctx, align::STAGE, align::run),
            Command::Contrast => run_stage(&ctx, contrast::STAGE, contrast::run),
            Command::Report => run_stage(&ctx, report::STAGE, report::run),
            Command::All => {
                run_stage(&ctx, kernel::STAGE, kernel::run)?;
                run_stage(&ctx, factorize::STAGE, factorize::run)?;
                run_stage(&ctx, universality::STAGE, universality::run)?;
                run_stage(&ctx, content::STAGE, content::run)?;
                if align::configured(&ctx) {
                    run_stage(&ctx, align::STAGE, align::run)?;
                }
                if ctx.cfg.contrasts.is_some() {
                    run_stage(&ctx, contrast::STAGE, contrast::run)?;
                }
                run_stage(&ctx, report::STAGE, report::run)
            }
            Command::Fixtures(_) => unreachable!("handled above"),
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Pool(e.to_string()))?;
    pool.install(pipeline)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
