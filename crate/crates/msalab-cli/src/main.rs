use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msalab_cli::config::{validation_report, ProbeKind, RunConfig};
use msalab_cli::run::run_to_dir;

/// Monte Carlo laboratory for multi-particle localization on the lattice.
#[derive(Parser)]
#[command(name = "msalab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config file, reporting the analysis mode.
    Validate {
        /// Path to the TOML run config.
        config: PathBuf,
    },
    /// Execute a probe and write its artifact directory.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML run config.
    config: PathBuf,
    /// Probe to run (overrides the config).
    #[arg(long, value_enum)]
    probe: Option<ProbeKind>,
    /// Trial count (overrides the config).
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated cube radii (overrides `probe_options.scales`).
    #[arg(long, value_delimiter = ',')]
    scales: Vec<i64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 means available parallelism (overrides the config).
    #[arg(long)]
    workers: Option<usize>,
    /// Refuse parameters outside the regime the decay statements are
    /// proved under.
    #[arg(long)]
    paper_strict: bool,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => validate(&config),
        Command::Run(args) => run(args),
    }
}

fn validate(path: &PathBuf) -> ExitCode {
    let config = match RunConfig::load(path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("invalid config: {e:#}");
            return ExitCode::from(2);
        }
    };
    let report = match validation_report(&config) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("invalid config: {e:#}");
            return ExitCode::from(2);
        }
    };
    println!("config ok: schema {}", config.schema);
    if report.strict {
        println!("mode: strict (parameters satisfy the proved-regime constraints)");
    } else {
        println!("mode: desk (outside the proved regime; results are exploratory)");
        for violation in &report.violations {
            println!("  - {violation}");
        }
    }
    ExitCode::SUCCESS
}

fn run(args: RunArgs) -> ExitCode {
    let mut config = match RunConfig::load(&args.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("invalid config: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(probe) = args.probe {
        config.probe = Some(probe);
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if !args.scales.is_empty() {
        config.probe_options.scales = args.scales.clone();
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    let out = match args.out.or_else(|| config.out.clone()) {
        Some(out) => out,
        None => {
            let probe = config
                .probe
                .map(|p| p.to_string())
                .unwrap_or_else(|| "probe".into());
            PathBuf::from(format!("runs/{probe}-seed{}", config.master_seed))
        }
    };
    config.out = Some(out.clone());

    match run_to_dir(&config, &out, args.paper_strict) {
        Ok(outcome) => {
            println!(
                "run complete: {} summary rows in {}",
                outcome.summary_rows,
                outcome.dir.display()
            );
            for hard in &outcome.hard {
                let status = if hard.passed { "pass" } else { "FAIL" };
                println!("  [{status}] {}: {}", hard.name, hard.detail);
            }
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("hard assertion failed");
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(2)
        }
    }
}
