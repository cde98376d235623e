use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{AggregateRow, MetricStats, TrialAggregate};
use crate::model::ExperimentConfig;
use crate::runner::EpochReport;
use crate::{Error, Result};

pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const CONFIG_ECHO: &str = "config.json";
pub const FAILED_MARKER: &str = "FAILED";

pub fn trial_report_path(mode_dir: &Path, trial: u32) -> PathBuf {
    mode_dir.join(format!("trial-{trial:03}.jsonl"))
}

/// Appends reports to a JSONL file, one object per line, flushing after
/// each so partial results survive a failed trial.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(JsonlWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        })
    }

    pub fn write(&mut self, report: &EpochReport) -> Result<()> {
        serde_json::to_writer(&mut self.out, report)?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EpochReport>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Every `trial-NNN.jsonl` in a mode directory, in trial order.
pub fn read_report_set(mode_dir: &Path) -> Result<Vec<Vec<EpochReport>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(mode_dir)
        .map_err(|e| Error::io(mode_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trial-") && n.ends_with(".jsonl"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no trial-NNN.jsonl reports in {}",
            mode_dir.display()
        )));
    }
    paths.iter().map(|p| read_jsonl(p)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    epoch: u32,
    metric: String,
    trials: usize,
    mean: f64,
    stderr: Option<f64>,
    band_lo: Option<f64>,
    band_hi: Option<f64>,
}

/// Writes `epoch,metric,trials,mean,stderr,band_lo,band_hi`. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_aggregate_csv<W: Write>(agg: &TrialAggregate, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in &agg.rows {
        let band = r.stats.band();
        csv.serialize(CsvRow {
            epoch: r.epoch,
            metric: r.metric.clone(),
            trials: r.stats.trials,
            mean: r.stats.mean,
            stderr: r.stats.stderr,
            band_lo: band.map(|b| b.0),
            band_hi: band.map(|b| b.1),
        })?;
    }
    csv.flush().map_err(|e| Error::io("<aggregate csv>", e))?;
    Ok(())
}

pub fn read_aggregate_csv<R: std::io::Read>(r: R) -> Result<TrialAggregate> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: CsvRow = row?;
        rows.push(AggregateRow {
            epoch: row.epoch,
            metric: row.metric,
            stats: MetricStats {
                trials: row.trials,
                mean: row.mean,
                stderr: row.stderr,
            },
        });
    }
    Ok(TrialAggregate { rows })
}

pub fn write_aggregate_file(agg: &TrialAggregate, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_aggregate_csv(agg, BufWriter::new(f))
}

/// Machine-readable echo of the resolved configuration.
pub fn write_config_echo(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_config_echo(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::aggregate_series;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn agg_of(values: &[Vec<f64>]) -> TrialAggregate {
        let trials: Vec<Vec<(u32, BTreeMap<String, f64>)>> = values
            .iter()
            .map(|t| {
                t.iter()
                    .enumerate()
                    .map(|(e, &v)| {
                        (e as u32 + 1, BTreeMap::from([("throughput".to_string(), v), ("x".to_string(), v / 3.0)]))
                    })
                    .collect()
            })
            .collect();
        aggregate_series(&trials).unwrap()
    }

    #[test]
    fn csv_header_and_single_trial() {
        let agg = agg_of(&[vec![10.0, 11.0]]);
        let mut buf = Vec::new();
        write_aggregate_csv(&agg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,metric,trials,mean,stderr,band_lo,band_hi\n"));
        assert!(text.contains("1,throughput,1,10.0,,,\n"), "{text}");
        assert_eq!(read_aggregate_csv(text.as_bytes()).unwrap(), agg);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            values in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 1..5)
        ) {
            let agg = agg_of(&values);
            let mut buf = Vec::new();
            write_aggregate_csv(&agg, &mut buf).unwrap();
            prop_assert_eq!(read_aggregate_csv(&buf[..]).unwrap(), agg);
        }
    }

    #[test]
    fn config_echo_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join(CONFIG_ECHO);
        let mut c = ExperimentConfig::lightweight();
        c.compaction_threshold = Some(0.25);
        write_config_echo(&c, &p).unwrap();
        assert_eq!(read_config_echo(&p).unwrap(), c);
    }

    #[test]
    fn report_set_requires_reports() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(read_report_set(tmp.path()).is_err());
        fs::write(tmp.path().join("trial-000.jsonl"), "{not json}\n").unwrap();
        assert!(matches!(read_report_set(tmp.path()), Err(Error::Corrupt { .. })));
    }
}
