use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kbl_core::expharness::{
    self, load_config, report_path, ExperimentReport, HarnessConfig, Output, OutputFormat,
};
use kbl_core::KblError;

/// Sparse kernel-based learning experiments.
#[derive(Parser, Debug)]
#[command(name = "kbl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectrum cartography with the nonparametric basis pursuit.
    Cartography(Common),
    /// Matrix completion with whole missing rows, KMC against SVT.
    Complete(Common),
    /// Link-load prediction on the backbone network, KMC against LMMSE.
    Traffic(Common),
    /// Fit one model from the `[fit]` section of the config.
    Fit(Common),
    /// Fit along a regularization grid from the `[fit]` section.
    Sweep(Common),
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML config; omitted sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the selected section.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for artifacts and report.json. Without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn exit_code(e: &KblError) -> u8 {
    match e {
        KblError::Config(_) | KblError::Csv { .. } | KblError::MissingInput(_) => EXIT_USAGE,
        KblError::NotConverged(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_FAILURE,
    }
}

fn run(command: &Command) -> Result<ExperimentReport, KblError> {
    let (Command::Cartography(c) | Command::Complete(c) | Command::Traffic(c) | Command::Fit(c) | Command::Sweep(c)) =
        command;
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None if matches!(command, Command::Fit(_) | Command::Sweep(_)) => {
            return Err(KblError::Config("fit and sweep need --config with a [fit] section".into()));
        }
        None => HarnessConfig::default(),
    };
    let format = match c.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let out = c.out.as_ref().map(|d| Output::new(d, format)).transpose()?;
    let out = out.as_ref();
    let base = c.config.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));

    let report = match command {
        Command::Cartography(_) => {
            cfg.cartography.seed = c.seed.unwrap_or(cfg.cartography.seed);
            expharness::run_cartography(&cfg.cartography, out)?
        }
        Command::Complete(_) => {
            cfg.completion.seed = c.seed.unwrap_or(cfg.completion.seed);
            expharness::run_completion_experiment(&cfg.completion, out)?
        }
        Command::Traffic(_) => {
            cfg.traffic.seed = c.seed.unwrap_or(cfg.traffic.seed);
            expharness::run_traffic_experiment(&cfg.traffic, out)?
        }
        Command::Fit(_) => {
            cfg.fit.seed = c.seed.unwrap_or(cfg.fit.seed);
            expharness::run_fit(&cfg.fit, base, out)?
        }
        Command::Sweep(_) => {
            cfg.fit.seed = c.seed.unwrap_or(cfg.fit.seed);
            expharness::run_sweep(&cfg.fit, base, out)?
        }
    };
    match out {
        Some(o) => report.write(&report_path(&o.dir))?,
        None => {
            // A closed pipe on stdout is not worth failing the run over.
            let _ = writeln!(std::io::stdout(), "{}", report.to_json()?);
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(report) if report.flags.get("converged") == Some(&false) => {
            eprintln!("kbl: solver did not converge; results written anyway");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kbl: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
