//! `wxdiag` command line: runs diagnostics from a JSON run config, writes a
//! synthetic dataset, or checks a config without running it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wxdiag::composite::{read_metrics_csv, WeightScheme};
use wxdiag::grid::Variable;
use wxdiag::pipeline::{self, build_hmas_tables, write_hmas_reports, HmasCell, Metric, RunConfig};
use wxdiag::synth::dataset::{write_dataset, DatasetSpec};

#[derive(Parser)]
#[command(name = "wxdiag", version, about = "Verification and spectral diagnostics for gridded forecasts")]
#[command(after_help = "Relative paths inside manifests resolve against $WXDIAG_DATA_DIR when set, \
                        else against the manifest's directory.")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kinetic-energy spectra, spectral ratios, SFI and effective resolution.
    Spectra(RunArgs),
    /// RMSE and ACC with confidence intervals, plus scorecards.
    Skill(RunArgs),
    /// Error consensus ratio and model error divergence.
    Consensus(RunArgs),
    /// Error-growth rate, doubling time and kinetic-energy drift.
    Dynamics(RunArgs),
    /// Physical consistency (geostrophic, nondivergence, thermal wind, hydrostatic).
    Balance(RunArgs),
    /// Tail attenuation curves and extreme-event skill.
    Extremes(RunArgs),
    /// Composite HMAS table, weight sensitivity and Pareto front.
    Hmas(HmasArgs),
    /// Pre-training spectral feasibility score.
    Sfs(RunArgs),
    /// Every metric selected by the config (all of them by default).
    Run(RunArgs),
    /// Write a synthetic dataset (fields, manifests, climatology, config).
    Synth(SynthArgs),
    /// Check a config without running it.
    Validate(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run config (JSON).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Comma-separated variables, e.g. z500,t850.
    #[arg(long, value_delimiter = ',')]
    vars: Vec<Variable>,
    /// Comma-separated lead hours.
    #[arg(long, value_delimiter = ',')]
    leads: Vec<u32>,
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Seed recorded in every report.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct HmasArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Precomputed metrics CSV (model, lead_hours, sfi, l_eff, tau_d, ees,
    /// pcs, asi[, hmas]) instead of computing them from a config.
    #[arg(long, conflicts_with = "config")]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write the dataset into.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of initialization times (daily).
    #[arg(long, default_value_t = 2)]
    inits: usize,
    #[arg(long, default_value_t = 32)]
    nlat: usize,
    #[arg(long, default_value_t = 64)]
    nlon: usize,
}

impl RunArgs {
    fn config(&self, metrics: Option<Vec<Metric>>) -> Result<RunConfig> {
        let Some(path) = &self.config else {
            bail!("--config is required");
        };
        let mut cfg = RunConfig::load(path)?;
        if metrics.is_some() {
            cfg.metrics = metrics;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if !self.vars.is_empty() {
            cfg.variables = self.vars.clone();
        }
        if !self.leads.is_empty() {
            cfg.leads = self.leads.clone();
        }
        if !self.models.is_empty() {
            cfg.models = self.models.clone();
        }
        if let Some(w) = self.workers {
            if w == 0 {
                bail!("--workers must be at least 1");
            }
            cfg.workers = Some(w);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

fn run_metrics(args: &RunArgs, metrics: Option<Vec<Metric>>) -> Result<()> {
    let cfg = args.config(metrics)?;
    let summary = pipeline::run(cfg)?;
    for p in &summary.written {
        println!("{}", p.display());
    }
    if !summary.skipped.is_empty() {
        log::warn!("{} cells skipped; see skipped.csv", summary.skipped.len());
    }
    Ok(())
}

fn hmas_from_fixture(args: &HmasArgs, path: &Path) -> Result<()> {
    let rows = read_metrics_csv(path)?;
    let cells: Vec<HmasCell> = rows.iter().map(HmasCell::from).collect();
    let tables = build_hmas_tables(&cells, &WeightScheme::standard_set())?;
    let out = args.run.out.clone().unwrap_or_else(|| PathBuf::from("wxdiag-out"));
    let seed = args.run.seed.unwrap_or(0);
    for p in write_hmas_reports(&out, seed, &tables)? {
        println!("{}", p.display());
    }
    for t in &tables {
        for r in &t.rows {
            if let Some(d) = r.abs_diff {
                if d > 1e-3 {
                    log::warn!("{} at +{} h: HMAS {} differs from reference by {d}", r.model, t.lead_hours, r.hmas);
                }
            }
        }
    }
    Ok(())
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    let one = |m: Metric| Some(vec![m]);
    match &cli.command {
        Command::Spectra(a) => run_metrics(a, one(Metric::Spectra))?,
        Command::Skill(a) => run_metrics(a, one(Metric::Skill))?,
        Command::Consensus(a) => run_metrics(a, one(Metric::Consensus))?,
        Command::Dynamics(a) => run_metrics(a, one(Metric::Dynamics))?,
        Command::Balance(a) => run_metrics(a, one(Metric::Balance))?,
        Command::Extremes(a) => run_metrics(a, one(Metric::Extremes))?,
        Command::Sfs(a) => run_metrics(a, one(Metric::Sfs))?,
        Command::Run(a) => run_metrics(a, None)?,
        Command::Hmas(a) => match &a.metrics {
            Some(path) => hmas_from_fixture(a, path)?,
            None => run_metrics(&a.run, one(Metric::Hmas))?,
        },
        Command::Synth(a) => {
            let spec = DatasetSpec {
                nlat: a.nlat,
                nlon: a.nlon,
                inits: a.inits,
                seed: a.seed,
                ..DatasetSpec::default()
            };
            let ds = write_dataset(&a.out, &spec).with_context(|| format!("writing {}", a.out.display()))?;
            println!("{}", ds.config.display());
        }
        Command::Validate(a) => {
            let findings = pipeline::validate(&a.config(None)?);
            if findings.is_empty() {
                println!("ok");
            } else {
                for f in &findings {
                    println!("{}", f.message);
                }
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
