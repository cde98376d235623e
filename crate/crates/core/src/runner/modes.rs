use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::phase::{
    check_consistency, load_initial, load_uniform, logical_digest, run_extend_phase,
    run_run_phase, ExtendPhaseStats, RunPhaseStats,
};
use super::report::{DumpInfo, EpochReport};
use crate::backend::{dump, restore, DriverFactory, DumpManifest, DumpPaths, StorageDriver};
use crate::genkit::{Stream, StreamSeed};
use crate::metrics::{aggregate_series, TrialAggregate};
use crate::model::{ExperimentConfig, LengthLedger, Mode};
use crate::{Error, Result};

/// Knobs that change what is checked or recorded, never what is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Records sampled by the ledger/driver consistency check at every
    /// phase boundary.
    pub verify_samples: usize,
    /// Record a digest of the full logical state before each run phase.
    pub state_digest: bool,
    /// Embed raw latency histograms in the reports.
    pub export_histograms: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            verify_samples: 100,
            state_digest: false,
            export_histograms: false,
        }
    }
}

/// What one epoch of a mode will execute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochPlan {
    pub epoch: u32,
    pub extend_attempts: u64,
    pub run_operations: u64,
    pub mode: Mode,
    pub dump_path: Option<PathBuf>,
}

impl EpochPlan {
    pub fn for_config(config: &ExperimentConfig, dump_dir: Option<&Path>) -> Vec<EpochPlan> {
        (1..=config.epochs)
            .map(|epoch| EpochPlan {
                epoch,
                extend_attempts: match config.mode {
                    Mode::MainRun => config.extend_ops_per_epoch,
                    _ => 0,
                },
                run_operations: config.run_ops_per_epoch,
                mode: config.mode,
                dump_path: match config.mode {
                    Mode::MainRun | Mode::CleanRun => {
                        dump_dir.map(|d| DumpPaths::new(d, epoch).bin)
                    }
                    _ => None,
                },
            })
            .collect()
    }
}

/// Synthetic load matching a target volume with uniform records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub target_volume: u64,
    pub record_count: u64,
    pub uniform_field_length: u32,
    /// The uniform length would exceed the field cap and was clamped.
    pub clamped: bool,
}

impl BaselineSpec {
    pub fn new(config: &ExperimentConfig, mode: Mode, target_volume: u64) -> Result<Self> {
        let fields = config.schema.field_count as u64;
        match mode {
            Mode::SpreadBaseline => {
                let init = config.schema.initial_field_length as u64;
                if init == 0 {
                    return Err(Error::InvalidConfig(
                        "spread baseline needs a positive initial field length".into(),
                    ));
                }
                let records = div_round(target_volume, fields * init).max(1);
                Ok(BaselineSpec {
                    target_volume,
                    record_count: records,
                    uniform_field_length: init as u32,
                    clamped: false,
                })
            }
            Mode::AverageBaseline => {
                let cap = config.schema.max_field_length as u64;
                let len = div_round(target_volume, config.record_count * fields);
                Ok(BaselineSpec {
                    target_volume,
                    record_count: config.record_count,
                    uniform_field_length: len.min(cap) as u32,
                    clamped: len > cap,
                })
            }
            m => Err(Error::InvalidArgument(format!("{m} is not a baseline mode"))),
        }
    }

    pub fn volume(&self, field_count: usize) -> u64 {
        self.record_count * field_count as u64 * self.uniform_field_length as u64
    }
}

fn div_round(a: u64, b: u64) -> u64 {
    (a + b / 2) / b
}

/// Target volume per epoch `1..=epochs`: analytic `V0 + e * ops * delta`,
/// or the volumes a main run actually reached when its reports are given.
pub fn baseline_targets(
    config: &ExperimentConfig,
    main_reports: Option<&[EpochReport]>,
) -> Vec<(u32, u64)> {
    match main_reports {
        Some(reports) => reports.iter().map(|r| (r.epoch, r.volume_bytes)).collect(),
        None => (1..=config.epochs)
            .map(|e| (e, config.analytic_volume(e)))
            .collect(),
    }
}

/// Shared state of one trial of one mode.
pub struct TrialContext<'a> {
    pub config: &'a ExperimentConfig,
    pub factory: &'a DriverFactory,
    pub trial: u32,
    pub options: RunOptions,
}

impl TrialContext<'_> {
    fn seed(&self) -> StreamSeed {
        StreamSeed::for_trial(self.config.seed, self.trial)
    }

    fn check(&self, driver: &dyn StorageDriver, ledger: &LengthLedger, epoch: u32, point: u64) -> Result<()> {
        let seed = self.seed().sub_seed(Stream::Sampling, epoch, point as usize);
        check_consistency(driver, ledger, self.options.verify_samples, seed)
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        mode: Mode,
        epoch: u32,
        driver: &dyn StorageDriver,
        state: StateSnapshot,
        extend: Option<&ExtendPhaseStats>,
        run: &RunPhaseStats,
        dump: Option<DumpInfo>,
        baseline: Option<BaselineSpec>,
    ) -> Result<EpochReport> {
        Ok(EpochReport {
            epoch,
            mode,
            trial: self.trial,
            backend: driver.name().to_string(),
            config_hash: self.config.experiment_hash(),
            record_count: state.record_count,
            volume_bytes: state.volume,
            extend: extend.map(ExtendPhaseStats::summary),
            run: run.summary(self.options.export_histograms)?,
            max_field_length: state.max_field_length,
            mean_field_length: state.mean_field_length,
            saturated_records: state.saturated,
            size_histogram: state.histogram,
            backend_stats: driver.stats(),
            dump,
            baseline,
            state_digest: state.digest,
        })
    }

    fn snapshot(&self, driver: &dyn StorageDriver, ledger: &LengthLedger) -> Result<StateSnapshot> {
        let schema = &self.config.schema;
        Ok(StateSnapshot {
            record_count: ledger.len() as u64,
            volume: ledger.total_volume(),
            max_field_length: ledger.max_field_length(),
            mean_field_length: ledger.mean_field_length().unwrap_or(0.0),
            saturated: ledger.saturated_records(schema.extend_delta, schema.max_field_length)
                as u64,
            histogram: ledger.live_histogram().into(),
            digest: if self.options.state_digest {
                Some(logical_digest(driver)?)
            } else {
                None
            },
        })
    }
}

/// State the run phase found: the epoch's volume and size distribution.
struct StateSnapshot {
    record_count: u64,
    volume: u64,
    max_field_length: u32,
    mean_field_length: f64,
    saturated: u64,
    histogram: super::report::SizeSnapshot,
    digest: Option<u64>,
}

fn dump_info(paths: &DumpPaths, m: &DumpManifest) -> DumpInfo {
    DumpInfo {
        path: paths.bin.display().to_string(),
        checksum: m.checksum,
        volume: m.volume,
    }
}

/// Main run of one trial: load, then per epoch extend, dump, run. The driver
/// persists across epochs. Dumps go to `dump_dir`; epoch 0 is the load.
pub fn run_main_trial(
    ctx: &TrialContext<'_>,
    dump_dir: &Path,
    sink: &mut dyn FnMut(EpochReport) -> Result<()>,
) -> Result<()> {
    let config = ctx.config;
    let seed = ctx.seed();
    let hash = config.experiment_hash();
    let fields = config.schema.field_count;
    let driver = ctx.factory.create()?;
    let driver = driver.as_ref();
    let mut ledger = load_initial(driver, config, seed).map_err(|e| e.at_epoch(0))?;
    ctx.check(driver, &ledger, 0, 0).map_err(|e| e.at_epoch(0))?;
    dump(driver, dump_dir, 0, hash, fields).map_err(|e| e.at_epoch(0))?;

    for epoch in 1..=config.epochs {
        let report = (|| {
            let extend = run_extend_phase(driver, &mut ledger, config, seed, epoch)?;
            ctx.check(driver, &ledger, epoch, 1)?;
            let manifest = dump(driver, dump_dir, epoch, hash, fields)?;
            if manifest.volume != ledger.total_volume() {
                return Err(Error::Verification(format!(
                    "dump volume {} differs from ledger volume {}",
                    manifest.volume,
                    ledger.total_volume()
                )));
            }
            let paths = DumpPaths::new(dump_dir, epoch);
            let state = ctx.snapshot(driver, &ledger)?;
            let run = run_run_phase(driver, &mut ledger, config, seed, epoch, config.record_count)?;
            ctx.check(driver, &ledger, epoch, 2)?;
            ctx.report(
                Mode::MainRun,
                epoch,
                driver,
                state,
                Some(&extend),
                &run,
                Some(dump_info(&paths, &manifest)),
                None,
            )
        })()
        .map_err(|e| e.at_epoch(epoch))?;
        sink(report)?;
    }
    Ok(())
}

/// Clean run of one trial: per epoch, restore the main run's dump into a
/// fresh driver, rebuild the ledger from the sidecar and run the same run
/// phase. No extend phase executes.
pub fn run_clean_trial(
    ctx: &TrialContext<'_>,
    dump_dir: &Path,
    sink: &mut dyn FnMut(EpochReport) -> Result<()>,
) -> Result<()> {
    let config = ctx.config;
    let seed = ctx.seed();
    for epoch in 1..=config.epochs {
        if !DumpPaths::new(dump_dir, epoch).exists() {
            return Err(Error::MissingDump {
                epoch,
                dir: dump_dir.to_path_buf(),
            });
        }
    }
    for epoch in 1..=config.epochs {
        let report = (|| {
            let paths = DumpPaths::new(dump_dir, epoch);
            let manifest = paths.read_manifest()?;
            if manifest.config_hash != config.experiment_hash() {
                return Err(Error::Verification(format!(
                    "dump {} belongs to a different experiment (hash {:016x}, expected {:016x})",
                    paths.manifest.display(),
                    manifest.config_hash,
                    config.experiment_hash()
                )));
            }
            let driver = ctx.factory.create()?;
            let driver = driver.as_ref();
            restore(&paths, driver)?;
            let mut ledger = paths.read_ledger(config.histogram_bin_width)?;
            if ledger.total_volume() != manifest.volume {
                return Err(Error::Verification(format!(
                    "ledger sidecar volume {} differs from manifest volume {}",
                    ledger.total_volume(),
                    manifest.volume
                )));
            }
            ctx.check(driver, &ledger, epoch, 1)?;
            let state = ctx.snapshot(driver, &ledger)?;
            let run = run_run_phase(driver, &mut ledger, config, seed, epoch, config.record_count)?;
            ctx.check(driver, &ledger, epoch, 2)?;
            ctx.report(
                Mode::CleanRun,
                epoch,
                driver,
                state,
                None,
                &run,
                Some(dump_info(&paths, &manifest)),
                None,
            )
        })()
        .map_err(|e| e.at_epoch(epoch))?;
        sink(report)?;
    }
    Ok(())
}

/// Baseline run of one trial: per target volume, a fresh driver loaded with
/// uniform records per [`BaselineSpec`], then the run phase over all of
/// them.
pub fn run_baseline_trial(
    ctx: &TrialContext<'_>,
    mode: Mode,
    targets: &[(u32, u64)],
    sink: &mut dyn FnMut(EpochReport) -> Result<()>,
) -> Result<()> {
    let config = ctx.config;
    let seed = ctx.seed();
    if mode == Mode::SpreadBaseline && !config.workload_mix.is_read_only() {
        log::warn!("spread-baseline with a mutating workload mix; proceeding");
    }
    for &(epoch, target) in targets {
        let report = (|| {
            let spec = BaselineSpec::new(config, mode, target)?;
            if spec.clamped {
                log::warn!(
                    "epoch {epoch}: uniform field length for {target} B exceeds the cap, clamped to {}",
                    spec.uniform_field_length
                );
            }
            let driver = ctx.factory.create()?;
            let driver = driver.as_ref();
            let mut ledger =
                load_uniform(driver, config, spec.record_count, spec.uniform_field_length, seed)?;
            ctx.check(driver, &ledger, epoch, 1)?;
            let state = ctx.snapshot(driver, &ledger)?;
            let run = run_run_phase(driver, &mut ledger, config, seed, epoch, spec.record_count)?;
            ctx.check(driver, &ledger, epoch, 2)?;
            ctx.report(mode, epoch, driver, state, None, &run, None, Some(spec))
        })()
        .map_err(|e| e.at_epoch(epoch))?;
        sink(report)?;
    }
    Ok(())
}

/// Per-trial dump directory under a main run's dump root.
pub fn trial_dump_dir(dump_root: &Path, trial: u32) -> PathBuf {
    dump_root.join(format!("trial-{trial:03}"))
}

/// Runs every trial of `config.mode`. Main and clean runs use
/// `dump_root/trial-NNN`; baselines take their targets from `targets`
/// (analytic when `None`). Reports are streamed to `sink` as
/// `(trial, report)` and also returned grouped by trial.
pub fn run_experiment(
    config: &ExperimentConfig,
    factory: &DriverFactory,
    dump_root: &Path,
    targets: Option<&[(u32, u64)]>,
    options: RunOptions,
    sink: &mut dyn FnMut(u32, &EpochReport) -> Result<()>,
) -> Result<Vec<Vec<EpochReport>>> {
    config.validate()?;
    let analytic = baseline_targets(config, None);
    let targets = targets.unwrap_or(&analytic);
    let mut all = Vec::with_capacity(config.trials as usize);
    for trial in 0..config.trials {
        let ctx = TrialContext {
            config,
            factory,
            trial,
            options,
        };
        let mut reports = Vec::new();
        let mut collect = |r: EpochReport| {
            sink(trial, &r)?;
            reports.push(r);
            Ok(())
        };
        let dir = trial_dump_dir(dump_root, trial);
        match config.mode {
            Mode::MainRun => run_main_trial(&ctx, &dir, &mut collect)?,
            Mode::CleanRun => run_clean_trial(&ctx, &dir, &mut collect)?,
            m => run_baseline_trial(&ctx, m, targets, &mut collect)?,
        }
        all.push(reports);
    }
    Ok(all)
}

/// Per-epoch mean, standard error and band of every report metric.
pub fn aggregate_trials(reports_by_trial: &[Vec<EpochReport>]) -> Result<TrialAggregate> {
    let series: Vec<Vec<_>> = reports_by_trial
        .iter()
        .map(|t| t.iter().map(|r| (r.epoch, r.metrics())).collect())
        .collect();
    aggregate_series(&series)
}
