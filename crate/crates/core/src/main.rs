use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wpsc::config::{parse_config, ParsedConfig};
use wpsc::experiments::{self, generate_instance_with, RawRecord};
use wpsc::{deployment, game, output, verify, Result};

#[derive(Parser)]
#[command(
    name = "wpsc",
    version,
    about = "Charging-power allocation and strategyproof base-station placement for wireless-powered crowdsourcing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Stackelberg game on one generated instance.
    Solve(Common),
    /// Solve one instance and place the base station with the configured mechanism.
    Deploy(Common),
    /// Market outcomes over a grid of roster sizes.
    SweepMarket(Sweep),
    /// Median against optimal placement over roster sizes and path-loss exponents.
    SweepDeploy(Sweep),
    /// Run the property suite and exit non-zero if any property fails.
    Verify(Verify),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; missing keys take reference values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; receives raw and aggregate CSV, or the JSON summary.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured number of replications per cell.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// On stdout, write one row per cell (replication means) instead of one per replication.
    #[arg(long)]
    aggregate: bool,
}

#[derive(Args)]
struct Verify {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of generated instances.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Side of the misreport lattice (overrides the configured value).
    #[arg(long)]
    grid: Option<usize>,
}

fn load(path: Option<&PathBuf>, seed: Option<u64>, reps: Option<usize>) -> Result<ParsedConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    if let Some(r) = reps {
        cfg.experiment.replications = r;
        cfg.experiment.validate()?;
    }
    Ok(cfg)
}

fn sink(dir: Option<&PathBuf>, file: &str) -> Result<Box<dyn Write>> {
    Ok(match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Box::new(BufWriter::new(File::create(d.join(file))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Serialize)]
struct SolveOutput<'a, T: Serialize> {
    config_hash: String,
    seed: u64,
    n_workers: usize,
    #[serde(flatten)]
    result: &'a T,
}

fn single(cmd: &Common, deploy: bool) -> Result<()> {
    let cfg = load(cmd.config.as_ref(), cmd.seed, None)?;
    let seed = cfg.seed();
    let name = if deploy { "deploy" } else { "solve" };
    let ext = match cmd.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let mut out = sink(cmd.out.as_ref(), &format!("{name}.{ext}"))?;
    match cmd.format {
        Format::Csv => {
            let exp = &cfg.experiment;
            let alpha = cfg.radio.pathloss_alpha;
            let rec: RawRecord = if deploy {
                experiments::deployment_replication(cfg.n_workers, alpha, seed, exp, &cfg.solver)?
            } else {
                experiments::market_replication(cfg.n_workers, alpha, seed, exp, &cfg.solver)?
            };
            output::write_raw_csv(&mut out, &cfg, &[rec])?;
        }
        Format::Json => {
            let exp = &cfg.experiment;
            let inst =
                generate_instance_with(cfg.n_workers, cfg.radio, exp.task_side, exp.b_range, seed)?;
            let eq = game::solve_stackelberg(&inst, &cfg.solver)?;
            if deploy {
                let outcome = deployment::deploy(cfg.mechanism.mechanism(), &inst, &eq)?;
                let body = SolveOutput {
                    config_hash: cfg.hash(),
                    seed,
                    n_workers: cfg.n_workers,
                    result: &outcome,
                };
                write_json(&mut out, &body)?;
            } else {
                let body = SolveOutput {
                    config_hash: cfg.hash(),
                    seed,
                    n_workers: cfg.n_workers,
                    result: &eq,
                };
                write_json(&mut out, &body)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn sweep(cmd: &Sweep, deploy: bool) -> Result<()> {
    let cfg = load(cmd.config.as_ref(), cmd.seed, cmd.reps)?;
    let result = if deploy {
        experiments::run_deployment_sweep(&cfg.experiment, &cfg.solver)?
    } else {
        experiments::run_market_sweep(&cfg.experiment, &cfg.solver)?
    };
    let name = if deploy {
        "sweep_deploy"
    } else {
        "sweep_market"
    };
    let dir = cmd.out.as_ref();
    match cmd.format {
        Format::Json => {
            let mut out = sink(dir, &format!("{name}_summary.json"))?;
            output::write_summary_json(&mut out, &cfg, &result)?;
            out.flush()?;
        }
        Format::Csv if dir.is_some() => {
            let mut raw = sink(dir, &format!("{name}_raw.csv"))?;
            output::write_raw_csv(&mut raw, &cfg, &result.records)?;
            raw.flush()?;
            let mut agg = sink(dir, &format!("{name}_aggregate.csv"))?;
            output::write_aggregate_csv(&mut agg, &cfg, &result.rows)?;
            agg.flush()?;
        }
        Format::Csv => {
            let mut out = sink(None, "")?;
            if cmd.aggregate {
                output::write_aggregate_csv(&mut out, &cfg, &result.rows)?;
            } else {
                output::write_raw_csv(&mut out, &cfg, &result.records)?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn run_verify(cmd: &Verify) -> Result<bool> {
    let cfg = load(cmd.config.as_ref(), cmd.seed, None)?;
    let grid = cmd.grid.unwrap_or(cfg.misreport_grid);
    let report = verify::run_suite(&cfg, cmd.reps, grid)?;
    println!(
        "{} instances of {} workers, strategyproofness of `{}` on a {grid}x{grid} lattice ({} with nobody employed)",
        report.instances, cfg.n_workers, report.mechanism, report.empty_rosters
    );
    println!(
        "{:<20} {:>8} {:>9} {:>14}  result",
        "property", "checked", "failures", "worst"
    );
    for p in &report.properties {
        println!(
            "{:<20} {:>8} {:>9} {:>14.6e}  {}",
            p.name,
            p.checked,
            p.failures,
            p.worst,
            if p.passed() { "PASS" } else { "FAIL" }
        );
    }
    if let Some(p) = report.first_failure() {
        let seed = p
            .first_failing_seed
            .expect("failed property records its seed");
        println!("first failing property: {} (instance seed {seed})", p.name);
        if let Some(d) = &p.detail {
            println!("  {d}");
        }
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(c) => single(c, false).map(|_| true),
        Command::Deploy(c) => single(c, true).map(|_| true),
        Command::SweepMarket(s) => sweep(s, false).map(|_| true),
        Command::SweepDeploy(s) => sweep(s, true).map(|_| true),
        Command::Verify(v) => run_verify(v),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
