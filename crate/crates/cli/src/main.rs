use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use resonance::experiment::{run, Artifacts, Command, ExperimentConfig, RunReport, Stage};

#[derive(Parser, Debug)]
#[command(name = "resonance", version, about = "Spectral-Galerkin experiments for resonant reaction-diffusion systems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone)]
enum Sub {
    /// Eigenvalues of the truncated Dirichlet basis.
    Spectrum(Opts),
    /// Kernel / stable / unstable split of the modes.
    Decompose(Opts),
    /// Growth, sign, limit and LL conditions.
    Check(Opts),
    /// Index of the bounded set and the connection prediction.
    Index(Opts),
    /// Homotopy simulations against the a priori box.
    Simulate(Opts),
    /// Equilibria and shooting from the origin.
    Connect(Opts),
    /// Every stage.
    Full(Opts),
}

#[derive(clap::Args, Debug, Clone)]
struct Opts {
    /// TOML or JSON experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated homotopy parameters, e.g. "0,0.5,1".
    #[arg(long = "s-grid")]
    s_grid: Option<String>,
    /// Write report.json. Without --json or --csv both kinds are written.
    #[arg(long)]
    json: bool,
    /// Write spectrum.csv, margins.csv and trajectories/*.csv.
    #[arg(long)]
    csv: bool,
}

fn parse_s_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad s value {v:?}")))
        .collect()
}

fn write_outputs(dir: &Path, report: &RunReport, artifacts: &Artifacts, json: bool, csv: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if json {
        fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    }
    if csv {
        fs::write(dir.join("spectrum.csv"), &artifacts.spectrum_csv)?;
        if let Some(m) = &artifacts.margins_csv {
            fs::write(dir.join("margins.csv"), m)?;
        }
        if !artifacts.trajectories.is_empty() {
            let tdir = dir.join("trajectories");
            fs::create_dir_all(&tdir)?;
            for (name, body) in &artifacts.trajectories {
                fs::write(tdir.join(name), body)?;
            }
        }
    }
    Ok(())
}

fn print_summary(report: &RunReport, artifacts: &Artifacts) {
    if report.command == Command::Spectrum {
        print!("{}", artifacts.spectrum_csv);
        return;
    }
    let width = report.summary.keys().map(|k| k.len()).max().unwrap_or(0);
    for (k, v) in &report.summary {
        println!("{k:<width$}  {v}");
    }
    if let Stage::Ran(index) = &report.index {
        println!("{:<width$}  {}", "reason", index.reason);
    }
}

fn execute(command: Command, opts: &Opts) -> anyhow::Result<ExitCode> {
    let mut cfg = match ExperimentConfig::from_path(&opts.config) {
        Ok(c) => c,
        Err(e) => return Ok(fail("config", &e)),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(grid) = &opts.s_grid {
        cfg.run.s_grid = parse_s_grid(grid)?;
    }
    let (report, artifacts) = match run(&cfg, command) {
        Ok(r) => r,
        Err(failure) => return Ok(fail(failure.stage, &failure.error)),
    };
    let (json, csv) = if opts.json || opts.csv { (opts.json, opts.csv) } else { (true, true) };
    write_outputs(&opts.out, &report, &artifacts, json, csv)?;
    print_summary(&report, &artifacts);
    Ok(ExitCode::SUCCESS)
}

fn fail(stage: &str, error: &resonance::Error) -> ExitCode {
    eprintln!("error in stage {stage}: {error}");
    if error.is_hypothesis_violation() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Sub::Spectrum(o) => (Command::Spectrum, o),
        Sub::Decompose(o) => (Command::Decompose, o),
        Sub::Check(o) => (Command::Check, o),
        Sub::Index(o) => (Command::Index, o),
        Sub::Simulate(o) => (Command::Simulate, o),
        Sub::Connect(o) => (Command::Connect, o),
        Sub::Full(o) => (Command::Full, o),
    };
    match execute(command, opts) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
