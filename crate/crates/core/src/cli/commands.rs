use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::charts::{epoch_chart, size_distribution_chart, volume_chart};
use super::config::{apply_env, parse_with_overrides, WorkloadFile};
use super::export::{
    read_jsonl, read_report_set, trial_report_path, write_aggregate_file, write_config_echo,
    JsonlWriter, AGGREGATE_CSV, CONFIG_ECHO, FAILED_MARKER,
};
use crate::backend::{
    dump, load_dump, restore, BackendKind, DriverFactory, DumpPaths, MemStore, StorageDriver,
};
use crate::genkit::StreamSeed;
use crate::metrics::TrialAggregate;
use crate::model::{ExperimentConfig, Mode};
use crate::runner::{
    aggregate_trials, baseline_targets, check_consistency, load_initial, logical_scan,
    run_experiment, trial_dump_dir, EpochReport, RunOptions,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

pub const DEFAULT_OUTPUT_DIR: &str = "ivs-results";
const DUMPS: &str = "dumps";
const SCRATCH: &str = ".scratch";

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config { .. } | Error::InvalidConfig(_) => EXIT_CONFIG,
        Error::Verification(_) | Error::Checksum { .. } | Error::Corrupt { .. } => EXIT_VERIFY,
        _ => EXIT_RUNTIME,
    }
}

/// Reads a workload file, applies `key=value` overrides, then `IVS_SEED` /
/// `IVS_OUTPUT` from `env`, then an explicit output directory.
pub fn resolve_workload(
    path: Option<&Path>,
    overrides: &[String],
    output: Option<&Path>,
    env: impl Fn(&str) -> Option<String>,
) -> Result<(ExperimentConfig, PathBuf)> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    let mut file: WorkloadFile = parse_with_overrides(&text, overrides)?;
    apply_env(&mut file, env)?;
    let out = output
        .map(Path::to_path_buf)
        .or(file.output_dir)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    Ok((file.config, out))
}

pub fn mode_dir(output_root: &Path, mode: Mode) -> PathBuf {
    output_root.join(mode.as_str())
}

pub fn dump_root(output_root: &Path) -> PathBuf {
    mode_dir(output_root, Mode::MainRun).join(DUMPS)
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub dump_dir: PathBuf,
    pub record_count: u64,
    pub volume: u64,
    pub checksum: u64,
}

/// Loads the initial table into a fresh store and writes its dump as
/// epoch 0 of trial 0.
pub fn cmd_load(config: &ExperimentConfig, output_root: &Path) -> Result<LoadOutcome> {
    config.validate()?;
    let scratch = output_root.join(SCRATCH);
    create_dir(&scratch)?;
    let factory = DriverFactory::new(BackendKind::from_config(config)?, &scratch);
    let driver = factory.create()?;
    let ledger = load_initial(driver.as_ref(), config, StreamSeed::for_trial(config.seed, 0))?;
    let dir = trial_dump_dir(&dump_root(output_root), 0);
    let m = dump(
        driver.as_ref(),
        &dir,
        0,
        config.experiment_hash(),
        config.schema.field_count,
    )?;
    drop(driver);
    let _ = fs::remove_dir(&scratch);
    Ok(LoadOutcome {
        dump_dir: dir,
        record_count: ledger.len() as u64,
        volume: m.volume,
        checksum: m.checksum,
    })
}

#[derive(Debug)]
pub struct RunOutcome {
    pub mode_dir: PathBuf,
    pub reports: Vec<Vec<EpochReport>>,
    pub aggregate: TrialAggregate,
}

/// Target volumes for a baseline: the volumes trial 0 of a matching main
/// run reached, else the analytic law.
fn targets_for(config: &ExperimentConfig, output_root: &Path) -> Result<Vec<(u32, u64)>> {
    let main = trial_report_path(&mode_dir(output_root, Mode::MainRun), 0);
    if main.is_file() {
        let reports = read_jsonl(&main)?;
        let matches = reports.len() == config.epochs as usize
            && reports.iter().all(|r| r.config_hash == config.experiment_hash());
        if matches {
            log::info!("baseline volumes taken from {}", main.display());
            return Ok(baseline_targets(config, Some(&reports)));
        }
        log::warn!(
            "{} is from a different experiment; using analytic volumes",
            main.display()
        );
    }
    Ok(baseline_targets(config, None))
}

/// Runs `config.mode` for every trial, writing `trial-NNN.jsonl`,
/// `aggregate.csv` and `config.json` under `<output>/<mode>/`. Main runs
/// also write dumps under `<output>/main-run/dumps/trial-NNN/`, which clean
/// runs consume. A failed run leaves its partial reports and a `FAILED`
/// file holding the error.
pub fn cmd_run(config: &ExperimentConfig, output_root: &Path, options: RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let kind = BackendKind::from_config(config)?;
    let dir = mode_dir(output_root, config.mode);
    create_dir(&dir)?;
    let _ = fs::remove_file(dir.join(FAILED_MARKER));
    write_config_echo(config, &dir.join(CONFIG_ECHO))?;
    let scratch = output_root.join(SCRATCH);
    create_dir(&scratch)?;
    let factory = DriverFactory::new(kind, &scratch);
    let targets = if config.mode.is_baseline() {
        Some(targets_for(config, output_root)?)
    } else {
        None
    };

    let mut writer: Option<(u32, JsonlWriter)> = None;
    let result = run_experiment(
        config,
        &factory,
        &dump_root(output_root),
        targets.as_deref(),
        options,
        &mut |trial, report| {
            if writer.as_ref().map(|w| w.0) != Some(trial) {
                writer = Some((trial, JsonlWriter::create(&trial_report_path(&dir, trial))?));
            }
            writer.as_mut().unwrap().1.write(report)
        },
    );
    drop(writer);
    let _ = fs::remove_dir(&scratch);
    let reports = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = fs::write(dir.join(FAILED_MARKER), format!("{e}\n"));
            return Err(e);
        }
    };
    let aggregate = aggregate_trials(&reports)?;
    write_aggregate_file(&aggregate, &dir.join(AGGREGATE_CSV))?;
    Ok(RunOutcome {
        mode_dir: dir,
        reports,
        aggregate,
    })
}

/// Metrics charted against epoch when present.
const EPOCH_METRICS: &[&str] = &[
    "throughput",
    "read_mean_us",
    "read_p99_us",
    "update_mean_us",
    "update_p99_us",
    "bytes_read_physical",
    "max_field_length",
];
const VOLUME_METRICS: &[&str] = &["throughput", "read_mean_us", "read_p99_us"];

/// Renders charts for report sets (mode directories holding
/// `trial-NNN.jsonl`) into `out_dir`. All sets must come from the same
/// experiment.
pub fn cmd_report(set_dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if set_dirs.is_empty() {
        return Err(Error::InvalidArgument("no report sets given".into()));
    }
    let mut sets: Vec<(Mode, Vec<Vec<EpochReport>>)> = Vec::new();
    for d in set_dirs {
        let reports = read_report_set(d)?;
        let first = reports
            .iter()
            .flatten()
            .next()
            .ok_or_else(|| Error::InvalidArgument(format!("{} holds no reports", d.display())))?;
        sets.push((first.mode, reports));
    }
    let hashes: BTreeSet<u64> = sets
        .iter()
        .flat_map(|(_, r)| r.iter().flatten().map(|r| r.config_hash))
        .collect();
    if hashes.len() > 1 {
        return Err(Error::InvalidArgument(format!(
            "incompatible report sets: {} different experiment configurations",
            hashes.len()
        )));
    }
    create_dir(out_dir)?;
    let aggregates: Vec<(String, TrialAggregate)> = sets
        .iter()
        .map(|(m, r)| Ok((m.as_str().to_string(), aggregate_trials(r)?)))
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };

    let epoch_sets: Vec<(String, &TrialAggregate)> = aggregates
        .iter()
        .filter(|(l, _)| l != Mode::SpreadBaseline.as_str())
        .map(|(l, a)| (l.clone(), a))
        .collect();
    if !epoch_sets.is_empty() {
        for metric in EPOCH_METRICS {
            if epoch_sets.iter().any(|(_, a)| a.has_metric(metric)) {
                emit(format!("epoch-{metric}.svg"), epoch_chart(metric, &epoch_sets)?)?;
            }
        }
    }
    if let Some((_, reports)) = sets.iter().find(|(m, _)| *m == Mode::MainRun) {
        emit("size-distribution.svg".into(), size_distribution_chart(&reports[0])?)?;
    }
    let baseline_sets: Vec<(String, &TrialAggregate)> = aggregates
        .iter()
        .filter(|(l, _)| l.ends_with("baseline"))
        .map(|(l, a)| (l.clone(), a))
        .collect();
    if !baseline_sets.is_empty() {
        for metric in VOLUME_METRICS {
            if baseline_sets.iter().any(|(_, a)| a.has_metric(metric)) {
                emit(format!("volume-{metric}.svg"), volume_chart(metric, &baseline_sets)?)?;
            }
        }
    }
    Ok(written)
}

#[derive(Debug, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub epochs: Vec<u32>,
    pub records: u64,
}

/// Checks dumps in `dump_dir`: checksum, ledger sidecar against the dumped
/// values, manifest volume, and a restore whose logical scan equals the
/// dump. Checks one epoch or every epoch present.
pub fn cmd_verify(dump_dir: &Path, epoch: Option<u32>) -> Result<VerifyOutcome> {
    let epochs: Vec<u32> = match epoch {
        Some(e) => vec![e],
        None => {
            let mut found: Vec<u32> = fs::read_dir(dump_dir)
                .map_err(|e| Error::io(dump_dir, e))?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let name = e.file_name().into_string().ok()?;
                    name.strip_prefix("dump-epoch-")?
                        .strip_suffix(".manifest")?
                        .parse()
                        .ok()
                })
                .collect();
            found.sort_unstable();
            found
        }
    };
    if epochs.is_empty() {
        return Err(Error::InvalidArgument(format!("no dumps in {}", dump_dir.display())));
    }
    let mut records = 0;
    for &e in &epochs {
        let paths = DumpPaths::new(dump_dir, e);
        if !paths.exists() {
            return Err(Error::MissingDump {
                epoch: e,
                dir: dump_dir.to_path_buf(),
            });
        }
        verify_one(&paths).map_err(|err| err.at_epoch(e))?;
        records += paths.read_manifest()?.record_count;
    }
    Ok(VerifyOutcome { epochs, records })
}

fn verify_one(paths: &DumpPaths) -> Result<()> {
    let (manifest, dumped) = load_dump(paths)?;
    let ledger = paths.read_ledger(100)?;
    if ledger.len() != dumped.len() {
        return Err(Error::Verification(format!(
            "ledger has {} records, dump has {}",
            ledger.len(),
            dumped.len()
        )));
    }
    for ((key, lengths), (dkey, record)) in ledger.iter().zip(&dumped) {
        let actual: Vec<u32> = record.iter().map(|v| v.len() as u32).collect();
        if key.render() != *dkey || actual != lengths {
            return Err(Error::Verification(format!(
                "ledger entry {key} {lengths:?} does not match dumped {dkey} {actual:?}"
            )));
        }
    }
    if ledger.total_volume() != manifest.volume {
        return Err(Error::Verification(format!(
            "ledger volume {} differs from manifest volume {}",
            ledger.total_volume(),
            manifest.volume
        )));
    }
    let store = MemStore::new();
    restore(paths, &store)?;
    check_consistency(&store, &ledger, usize::MAX, 0)?;
    if logical_scan(&store)? != dumped {
        return Err(Error::Verification("restored scan differs from the dump".into()));
    }
    debug_assert_eq!(store.record_count(), dumped.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config { line: 1, message: String::new() }), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::InvalidConfig(String::new())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Verification(String::new()).at_epoch(3)), EXIT_VERIFY);
        assert_eq!(exit_code(&Error::NotEmpty(1)), EXIT_RUNTIME);
    }

    #[test]
    fn workload_precedence() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("w.properties");
        fs::write(&p, "seed=1\noutputdir=/from-file\nepochs=2\n").unwrap();
        let env = |k: &str| (k == "IVS_SEED").then(|| "5".to_string());
        let (c, out) = resolve_workload(Some(&p), &["epochs=4".into()], None, env).unwrap();
        assert_eq!((c.seed, c.epochs), (5, 4));
        assert_eq!(out, Path::new("/from-file"));
        let (_, out) = resolve_workload(Some(&p), &[], Some(Path::new("/cli")), |_| None).unwrap();
        assert_eq!(out, Path::new("/cli"));
        let (c, out) = resolve_workload(None, &[], None, |_| None).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(out, Path::new(DEFAULT_OUTPUT_DIR));
    }
}
