//! Batch front end: synthetic data generation, LUT dumps, search,
//! evaluation and timing, all driven by one TOML experiment file.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Mode};

#[derive(Debug, Parser)]
#[command(name = "petal", version, about = "Petal-based cross-view localization experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment TOML file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (overrides [run].workers; 0 = one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Base seed (overrides [run].seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output / working directory (overrides [run].output_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenes, street views and a manifest.
    Generate,
    /// Dump the per-level LUTs, sample counts and occupancy rasters.
    Lut,
    /// Localize every manifest entry and write predictions.jsonl.
    Search(SearchArgs),
    /// Score predictions against the manifest.
    Eval,
    /// Time multiscale against flat search on every manifest entry.
    Bench,
}

#[derive(Debug, Args, Default)]
pub struct SearchArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Fixed prior orientation in degrees (enables the prior).
    #[arg(long)]
    pub prior_theta: Option<f64>,
    /// Prior noise bound in degrees (enables the prior).
    #[arg(long)]
    pub prior_noise: Option<f64>,
    #[arg(long)]
    pub prior_rho: Option<f64>,
    #[arg(long)]
    pub prior_delta_scale: Option<f64>,
    #[arg(long)]
    pub cs_factor: Option<usize>,
}

impl SearchArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(m) = self.mode {
            cfg.search.mode = m;
        }
        if self.prior_theta.is_some() || self.prior_noise.is_some() {
            cfg.prior.enabled = true;
        }
        if let Some(t) = self.prior_theta {
            cfg.prior.theta = Some(t);
        }
        if let Some(n) = self.prior_noise {
            cfg.prior.noise_deg = n;
        }
        if let Some(r) = self.prior_rho {
            cfg.prior.rho = r;
        }
        if let Some(s) = self.prior_delta_scale {
            cfg.prior.delta_scale = s;
        }
        if let Some(c) = self.cs_factor {
            cfg.search.cs_factor = c;
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let Some(path) = &cli.global.config else {
        anyhow::bail!("--config <FILE> is required");
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(w) = cli.global.workers {
        cfg.run.workers = w;
    }
    if let Some(s) = cli.global.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &cli.global.out {
        cfg.run.output_dir = o.clone();
    }
    if let Command::Search(args) = &cli.command {
        args.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cfg.run.output_dir.clone();
    match cli.command {
        Command::Generate => {
            let entries = commands::generate(&cfg, &out)?;
            println!("generated {} instances in {}", entries.len(), out.display());
        }
        Command::Lut => {
            let dir = out.join("lut");
            commands::lut(&cfg, &dir)?;
            println!("wrote LUTs to {}", dir.display());
        }
        Command::Search(_) => {
            let lines = commands::search(&cfg, &out)?;
            println!("wrote {} predictions to {}", lines.len(), out.join(io::PREDICTIONS).display());
        }
        Command::Eval => {
            let ev = commands::evaluate(&cfg, &out)?;
            print!("{}", ev.report.to_markdown());
            if ev.failed > 0 {
                println!("{} failed predictions excluded", ev.failed);
            }
        }
        Command::Bench => {
            let rows = commands::bench(&cfg, &out)?;
            println!(
                "{} instances: flat/multiscale queries {:.1}x, wall time {:.1}x",
                rows.len() / 2,
                commands::bench_ratio(&rows, |r| r.queries as f64),
                commands::bench_ratio(&rows, |r| r.wall_ms),
            );
        }
    }
    Ok(())
}
