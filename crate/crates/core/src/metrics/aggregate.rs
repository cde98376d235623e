use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Two-sided 95% normal quantile used for confidence bands.
pub const Z_95: f64 = 1.96;

/// Operations per second over the phase wall-clock time.
pub fn throughput(op_count: u64, wall_time: Duration) -> Result<f64> {
    if wall_time.is_zero() {
        return Err(Error::InvalidArgument("throughput over zero wall time".into()));
    }
    Ok(op_count as f64 / wall_time.as_secs_f64())
}

/// Mean and standard error of one metric across trials. A single trial has
/// no standard error and therefore no band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub trials: usize,
    pub mean: f64,
    pub stderr: Option<f64>,
}

impl MetricStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no samples to aggregate".into()));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = (n > 1).then(|| {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt() / (n as f64).sqrt()
        });
        Ok(MetricStats { trials: n, mean, stderr })
    }

    pub fn half_width(&self) -> Option<f64> {
        self.stderr.map(|s| Z_95 * s)
    }

    /// `mean ± 1.96 × stderr`.
    pub fn band(&self) -> Option<(f64, f64)> {
        self.half_width().map(|h| (self.mean - h, self.mean + h))
    }

    pub fn overlaps(&self, other: &MetricStats) -> bool {
        let (a_lo, a_hi) = self.band().unwrap_or((self.mean, self.mean));
        let (b_lo, b_hi) = other.band().unwrap_or((other.mean, other.mean));
        a_lo <= b_hi && b_lo <= a_hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub epoch: u32,
    pub metric: String,
    pub stats: MetricStats,
}

/// Per-epoch, per-metric statistics across trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub rows: Vec<AggregateRow>,
}

impl TrialAggregate {
    pub fn get(&self, epoch: u32, metric: &str) -> Option<&MetricStats> {
        self.rows
            .iter()
            .find(|r| r.epoch == epoch && r.metric == metric)
            .map(|r| &r.stats)
    }

    pub fn has_metric(&self, metric: &str) -> bool {
        self.rows.iter().any(|r| r.metric == metric)
    }

    pub fn metrics(&self) -> Vec<&str> {
        let mut m: Vec<&str> = self.rows.iter().map(|r| r.metric.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    /// `(epoch, stats)` for one metric in epoch order.
    pub fn series(&self, metric: &str) -> Vec<(u32, MetricStats)> {
        let mut s: Vec<(u32, MetricStats)> = self
            .rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.epoch, r.stats))
            .collect();
        s.sort_by_key(|(e, _)| *e);
        s
    }
}

/// Aggregates `trials[t][i] = (epoch, metrics)`. Every trial must cover the
/// same epochs; a metric missing from some trials is aggregated over the
/// trials that have it.
pub fn aggregate_series(trials: &[Vec<(u32, BTreeMap<String, f64>)>]) -> Result<TrialAggregate> {
    let Some(first) = trials.first() else {
        return Err(Error::InvalidArgument("no trials to aggregate".into()));
    };
    for (t, trial) in trials.iter().enumerate() {
        if trial.len() != first.len() {
            return Err(Error::RaggedTrials {
                trial: t,
                expected: first.len(),
                found: trial.len(),
            });
        }
        for (a, b) in trial.iter().zip(first) {
            if a.0 != b.0 {
                return Err(Error::InvalidArgument(format!(
                    "trial {t} has epoch {} where trial 0 has {}",
                    a.0, b.0
                )));
            }
        }
    }
    let mut rows = Vec::new();
    for (i, (epoch, _)) in first.iter().enumerate() {
        let mut by_metric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for trial in trials {
            for (name, &v) in &trial[i].1 {
                by_metric.entry(name).or_default().push(v);
            }
        }
        for (metric, samples) in by_metric {
            rows.push(AggregateRow {
                epoch: *epoch,
                metric: metric.to_string(),
                stats: MetricStats::from_samples(&samples)?,
            });
        }
    }
    Ok(TrialAggregate { rows })
}

/// Ordinary least squares `y = intercept + slope·x` with the slope's
/// standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

impl LinearFit {
    pub fn slope_band(&self) -> (f64, f64) {
        let h = Z_95 * self.slope_stderr;
        (self.slope - h, self.slope + h)
    }
}

pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidArgument("linear fit needs at least 3 points".into()));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("linear fit with constant x".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> Vec<Vec<(u32, BTreeMap<String, f64>)>> {
        values
            .iter()
            .map(|&v| vec![(1, BTreeMap::from([("throughput".to_string(), v)]))])
            .collect()
    }

    #[test]
    fn throughput_cases() {
        assert_eq!(throughput(100_000, Duration::from_secs(10)).unwrap(), 10_000.0);
        assert_eq!(throughput(0, Duration::from_secs(1)).unwrap(), 0.0);
        assert!(throughput(5, Duration::ZERO).is_err());
    }

    #[test]
    fn hand_computed_band() {
        let agg = aggregate_series(&series(&[10.0, 12.0, 14.0])).unwrap();
        let s = agg.get(1, "throughput").unwrap();
        assert_eq!(s.mean, 12.0);
        assert!((s.stderr.unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        let (lo, hi) = s.band().unwrap();
        assert!((12.0 - lo - 2.263).abs() < 5e-4);
        assert!((hi - 12.0 - 2.263).abs() < 5e-4);
        assert!((hi - s.mean - (s.mean - lo)).abs() < 1e-12);
    }

    #[test]
    fn single_trial_has_no_band() {
        let agg = aggregate_series(&series(&[10.0])).unwrap();
        let s = agg.get(1, "throughput").unwrap();
        assert_eq!(s.stderr, None);
        assert_eq!(s.band(), None);
    }

    #[test]
    fn identical_trials_zero_width() {
        let agg = aggregate_series(&series(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(agg.get(1, "throughput").unwrap().band(), Some((5.0, 5.0)));
    }

    #[test]
    fn ragged_trials_rejected() {
        let mut t = series(&[1.0, 2.0]);
        t[1].push((2, BTreeMap::new()));
        assert!(matches!(aggregate_series(&t), Err(Error::RaggedTrials { trial: 1, .. })));
        assert!(aggregate_series(&[]).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|x| (x as f64, 3.0 + 2.0 * x as f64)).collect();
        let f = linear_fit(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-9);
        let noisy = [(0.0, 1.0), (1.0, -1.0), (2.0, 1.0), (3.0, -1.0)];
        let f = linear_fit(&noisy).unwrap();
        let (lo, hi) = f.slope_band();
        assert!(lo < 0.0 && hi > 0.0);
    }
}
