//! Batch front end: `segface synth|train|detect|eval|bench`.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

pub use config::{Backend, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Write a synthetic dataset.
    Synth,
    /// Train the proposal scorer on the training split.
    Train,
    /// Print one detection (or NONE) per frame.
    Detect,
    /// Write the metrics report and curve tables for the test split.
    Eval,
    /// Time per-frame detection.
    Bench,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "segface", version, about = "Face detection by facial-segment clustering")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML config; relative paths inside it resolve against its directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for frame-parallel work (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key=value` config overrides.
    pub overrides: Vec<String>,
}

/// Runs one command, writing user-facing output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = PipelineConfig::resolve(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    let base = match &cli.config {
        Some(p) => p.parent().map(PathBuf::from).unwrap_or_default(),
        None => PathBuf::from("."),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let ctx = commands::Ctx {
        cfg,
        paths: config::Paths { base },
        pool,
    };
    log::info!("resolved config:\n{}", ctx.cfg.to_toml());
    match cli.command {
        Command::Synth => commands::synth(&ctx, out),
        Command::Train => commands::train(&ctx, out),
        Command::Detect => commands::detect(&ctx, out),
        Command::Eval => commands::eval(&ctx, out),
        Command::Bench => commands::bench(&ctx, out),
    }
}
