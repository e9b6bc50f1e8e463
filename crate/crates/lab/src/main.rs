use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use earl_lab::audits::{run_audits, FaultInjection};
use earl_lab::config::ExperimentConfig;
use earl_lab::error::{Error, Result};
use earl_lab::experiment::{run_experiment, run_sweep, train_and_dump};
use earl_lab::report::{render_table, write_report};
use earl_learn::schedule::ScheduleKind;

/// Entropy-augmented RL workbench: audits, training runs, temperature
/// sweeps, and reports. Exit codes: 0 ok, 1 violation or runtime failure,
/// 2 configuration error.
#[derive(Parser)]
#[command(name = "earl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact-arithmetic audit corpus and write per-audit CSVs.
    Audit(AuditArgs),
    /// Train one configuration across its seeds.
    Train(TrainArgs),
    /// Cross a temperature grid with schedule kinds over one base config.
    Sweep(SweepArgs),
    /// Summarize aggregate CSVs in a directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct AuditArgs {
    /// Corpus seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of random models in the corpus.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Output directory for audit record files.
    #[arg(long, default_value = "out/audits")]
    out: PathBuf,
    /// Negative control: corrupt the value backup and expect a failure.
    #[arg(long, default_value_t = false)]
    inject_fault: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// After training, dump this many greedy-policy steps to
    /// <label>_trajectory.txt (one "t, s, a, r, s', done" line each).
    #[arg(long)]
    dump_trajectory: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base experiment config (TOML); the grid overrides its schedule.
    #[arg(long)]
    config: PathBuf,
    /// Initial temperatures to cross.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0])]
    alphas: Vec<f64>,
    /// Schedule kinds: "constant" and/or "decay".
    #[arg(long, value_delimiter = ',', default_values = ["constant", "decay"])]
    schedules: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding *_aggregate.csv files.
    #[arg(long, default_value = "out")]
    dir: PathBuf,
    /// Also render one SVG per curve.
    #[arg(long, default_value_t = false)]
    plots: bool,
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Audit(args) => {
            let fault = if args.inject_fault {
                FaultInjection::StretchedContraction
            } else {
                FaultInjection::None
            };
            let summary = run_audits(args.seed, args.trials, &args.out, fault)?;
            print!("{}", summary.render_table());
            println!("records under {}", summary.out_dir.display());
            Ok(if summary.violated() { 1 } else { 0 })
        }
        Command::Train(args) => {
            let mut cfg = ExperimentConfig::from_path(&args.config)?;
            if let Some(seeds) = args.seeds {
                cfg.run.seeds = seeds;
            }
            if let Some(out) = args.out {
                cfg.run.output_dir = out;
            }
            cfg.validate()?;
            let outcome = run_experiment(&cfg)?;
            for (seed, err) in &outcome.failures {
                eprintln!("seed {seed} failed: {err}");
            }
            if let Some(steps) = args.dump_trajectory {
                let path = cfg
                    .run
                    .output_dir
                    .join(format!("{}_trajectory.txt", cfg.run.label));
                train_and_dump(&cfg, steps, &path)?;
                println!("greedy trajectory at {}", path.display());
            }
            let summaries = write_report(&cfg.run.output_dir, false)?;
            print!("{}", render_table(&summaries));
            Ok(if outcome.failures.is_empty() { 0 } else { 1 })
        }
        Command::Sweep(args) => {
            let cfg = ExperimentConfig::from_path(&args.config)?;
            let kinds: Vec<ScheduleKind> = args
                .schedules
                .iter()
                .map(|s| match s.as_str() {
                    "constant" => Ok(ScheduleKind::Constant),
                    "decay" | "exponential" => Ok(ScheduleKind::ExponentialDecay),
                    other => Err(Error::Config(format!(
                        "unknown schedule {other:?}; expected \"constant\" or \"decay\""
                    ))),
                })
                .collect::<Result<_>>()?;
            let sweep = run_sweep(&cfg, &args.alphas, &kinds)?;
            println!("label                                    final mean   plateau");
            for e in &sweep.entries {
                println!("{:<40} {:>10.4} {:>9}", e.label, e.final_mean, e.plateau);
            }
            println!("summary at {}", sweep.summary_path.display());
            Ok(0)
        }
        Command::Report(args) => {
            let summaries = write_report(&args.dir, args.plots)?;
            print!("{}", render_table(&summaries));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
