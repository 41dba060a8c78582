//! `boselab`: configuration-driven experiment runner.

mod check;
mod commands;
mod config;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format, RawConfig};
use output::{Cell, Report};

pub const VERSION: &str = env!("BOSELAB_VERSION");

const QUICK_NSAMPLES: usize = 2_000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Core(#[from] boselab::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Exact canonical partition function and one-body correlations.
    Exact,
    /// Trotter-product partition function for each ntau.
    Trotter,
    /// Auxiliary-field Monte Carlo estimate of the canonical partition function.
    HsMc,
    /// Random-walk representations (transfer, enumeration, identity-only).
    Walks,
    /// Grand-canonical partition function: exact sum and determinant Monte Carlo.
    Grand,
    /// Trotter error against the exact value, with a fitted log-log slope.
    Converge,
    /// Bogoliubov dispersion, kernel positivity and the condensate root.
    Bogoliubov,
    /// Invariant suite with one pass/fail row per invariant.
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Exact => "exact",
            Command::Trotter => "trotter",
            Command::HsMc => "hs-mc",
            Command::Walks => "walks",
            Command::Grand => "grand",
            Command::Converge => "converge",
            Command::Bogoliubov => "bogoliubov",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "boselab", version = VERSION, about = "Boson partition functions on a discrete torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file with `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "K=V", global = true)]
    set: Vec<String>,
    /// Output file (default: output.path, else stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides mc.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides mc.workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Smaller problem sizes and sample counts.
    #[arg(long, global = true)]
    quick: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut raw = RawConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        raw.set("mc.seed", &seed.to_string())?;
    }
    if let Some(w) = cli.workers {
        raw.set("mc.workers", &w.to_string())?;
    }
    if cli.quick {
        let n: usize = raw.get("mc.nsamples").parse().unwrap_or(QUICK_NSAMPLES);
        raw.set("mc.nsamples", &n.min(QUICK_NSAMPLES).to_string())?;
    }
    if let Some(out) = &cli.out {
        raw.set("output.path", &out.display().to_string())?;
    }
    ExperimentConfig::from_raw(raw)
}

fn dispatch(cmd: Command, cfg: &ExperimentConfig, quick: bool) -> Result<Report, CliError> {
    match cmd {
        Command::Exact => commands::exact(cfg),
        Command::Trotter => commands::trotter(cfg),
        Command::HsMc => commands::hs_mc(cfg),
        Command::Walks => commands::walks(cfg),
        Command::Grand => commands::grand(cfg),
        Command::Converge => commands::converge(cfg),
        Command::Bogoliubov => commands::bogoliubov(cfg),
        Command::Check => Ok(check::run(quick, cfg.mc.seed, cfg.mc.workers)),
    }
}

fn emit(cmd: Command, cfg: &ExperimentConfig, report: &Report, wall: f64) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match &cfg.path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match cfg.format {
        Format::Csv => report.table.write_csv(&mut sink)?,
        Format::Json => output::write_json(&mut sink, report, cmd.name(), &cfg.raw, wall)?,
    }
    sink.flush()?;
    for row in &report.table.rows {
        if let Some(err) = &row.error {
            eprintln!("row error: {err}");
        }
    }
    for (key, value) in &report.summary {
        let text = match value {
            Cell::Num(x) => output::fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "null".into(),
        };
        eprintln!("{key}: {text}");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let start = Instant::now();
    let cfg = load(cli)?;
    let report = dispatch(cli.command, &cfg, cli.quick)?;
    emit(cli.command, &cfg, &report, start.elapsed().as_secs_f64())?;
    if cli.command == Command::Check {
        let fails = report.table.rows.iter().filter(|r| matches!(&r.cells[1], Cell::Text(s) if s == "FAIL"));
        for row in fails {
            if let (Cell::Text(name), Cell::Text(detail)) = (&row.cells[0], &row.cells[2]) {
                eprintln!("FAIL {name}: {detail}");
            }
        }
    }
    Ok(!report.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("boselab: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
