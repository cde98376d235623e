use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ivs_core::cli::{
    cmd_load, cmd_report, cmd_run, cmd_verify, exit_code, resolve_workload, EXIT_OK,
};
use ivs_core::model::Mode;
use ivs_core::runner::RunOptions;
use ivs_core::Result;

/// Benchmark harness for stores whose record values grow over epochs.
#[derive(Parser)]
#[command(name = "ivs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct WorkloadArgs {
    /// Workload properties file (key=value lines); defaults apply when omitted.
    workload: Option<PathBuf>,
    /// Override a workload key, e.g. `-p epochs=3`. Repeatable.
    #[arg(short = 'p', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root; takes precedence over IVS_OUTPUT and `outputdir`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RecordArgs {
    /// Record a digest of the full logical state before each run phase.
    #[arg(long)]
    state_digest: bool,
    /// Embed raw latency histograms (base64 buckets) in the reports.
    #[arg(long)]
    export_histograms: bool,
    /// Records sampled by the ledger/driver consistency check per phase.
    #[arg(long, default_value_t = 100)]
    verify_samples: usize,
}

impl RecordArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            verify_samples: self.verify_samples,
            state_digest: self.state_digest,
            export_histograms: self.export_histograms,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Spread,
    Average,
}

#[derive(Subcommand)]
enum Command {
    /// Load the initial table and write its dump (epoch 0).
    Load(WorkloadArgs),
    /// Run the workload's mode (main-run unless set) for every trial.
    Run {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        mode: Option<Mode>,
        #[command(flatten)]
        record: RecordArgs,
    },
    /// Restore each main-run dump into a fresh store and run the run phase.
    CleanRun {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[command(flatten)]
        record: RecordArgs,
    },
    /// Run a baseline at the main run's per-epoch volumes.
    Baseline {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long, value_enum, default_value = "average")]
        kind: BaselineKind,
        #[command(flatten)]
        record: RecordArgs,
    },
    /// Render SVG charts from one or more mode result directories.
    Report {
        #[arg(required = true)]
        sets: Vec<PathBuf>,
        #[arg(long, default_value = "charts")]
        out: PathBuf,
    },
    /// Check dumps: checksum, ledger sidecar and restore equivalence.
    Verify {
        dump_dir: PathBuf,
        #[arg(long)]
        epoch: Option<u32>,
    },
}

fn run_mode(w: &WorkloadArgs, mode: Option<Mode>, record: &RecordArgs) -> Result<()> {
    let mut overrides = w.overrides.clone();
    if let Some(m) = mode {
        overrides.push(format!("mode={m}"));
    }
    let (config, out) =
        resolve_workload(w.workload.as_deref(), &overrides, w.output.as_deref(), |k| {
            std::env::var(k).ok()
        })?;
    let outcome = cmd_run(&config, &out, record.options())?;
    let epochs = outcome.reports.first().map_or(0, Vec::len);
    println!(
        "{}: {} trial(s) x {} epoch(s) -> {}",
        config.mode,
        outcome.reports.len(),
        epochs,
        outcome.mode_dir.display()
    );
    for r in outcome.aggregate.series("throughput") {
        println!("  epoch {:>3}  throughput {:>12.1} ops/s", r.0, r.1.mean);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Load(w) => {
            let (config, out) =
                resolve_workload(w.workload.as_deref(), &w.overrides, w.output.as_deref(), |k| {
                    std::env::var(k).ok()
                })?;
            let o = cmd_load(&config, &out)?;
            println!(
                "loaded {} records, {} bytes, checksum {:016x} -> {}",
                o.record_count,
                o.volume,
                o.checksum,
                o.dump_dir.display()
            );
        }
        Command::Run { workload, mode, record } => run_mode(&workload, mode, &record)?,
        Command::CleanRun { workload, record } => {
            run_mode(&workload, Some(Mode::CleanRun), &record)?
        }
        Command::Baseline { workload, kind, record } => {
            let mode = match kind {
                BaselineKind::Spread => Mode::SpreadBaseline,
                BaselineKind::Average => Mode::AverageBaseline,
            };
            run_mode(&workload, Some(mode), &record)?
        }
        Command::Report { sets, out } => {
            for p in cmd_report(&sets, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Verify { dump_dir, epoch } => {
            let v = cmd_verify(&dump_dir, epoch)?;
            println!("verified {} dump(s), {} records", v.epochs.len(), v.records);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
