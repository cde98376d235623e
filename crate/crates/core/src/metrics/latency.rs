use std::time::Duration;

use base64::Engine as _;
use hdrhistogram::Histogram;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest recordable latency; longer samples are clamped and counted.
pub const MAX_LATENCY_NS: u64 = 100_000_000_000;
const SIGNIFICANT_DIGITS: u8 = 3;

/// Log-bucketed latency recorder (HDR layout, 3 significant digits) over
/// nanoseconds in `[1 ns, 100 s]`.
///
/// Count, sum, min and max are exact; quantiles are accurate to one bucket
/// and clamped to the observed `[min, max]`.
#[derive(Clone, Debug)]
pub struct LatencyHistogram {
    hist: Histogram<u64>,
    sum_ns: u128,
    min_ns: u64,
    max_ns: u64,
    saturated: u64,
}

/// Six-number summary in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_us: f64,
    pub min_us: f64,
    pub max_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl LatencyHistogram {
    pub fn new() -> Self {
        LatencyHistogram {
            hist: Histogram::new_with_bounds(1, MAX_LATENCY_NS, SIGNIFICANT_DIGITS)
                .expect("static histogram bounds"),
            sum_ns: 0,
            min_ns: u64::MAX,
            max_ns: 0,
            saturated: 0,
        }
    }

    pub fn record(&mut self, d: Duration) {
        self.record_nanos(u64::try_from(d.as_nanos()).unwrap_or(u64::MAX));
    }

    pub fn record_nanos(&mut self, ns: u64) {
        let v = if ns > MAX_LATENCY_NS {
            self.saturated += 1;
            MAX_LATENCY_NS
        } else {
            ns
        };
        self.hist.record(v).expect("value within bounds");
        self.sum_ns += v as u128;
        self.min_ns = self.min_ns.min(v);
        self.max_ns = self.max_ns.max(v);
    }

    pub fn count(&self) -> u64 {
        self.hist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Samples clamped to the maximum.
    pub fn saturated(&self) -> u64 {
        self.saturated
    }

    pub fn sum_nanos(&self) -> u128 {
        self.sum_ns
    }

    pub fn mean_nanos(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.sum_ns as f64 / self.count() as f64)
    }

    pub fn min_nanos(&self) -> Option<u64> {
        (!self.is_empty()).then_some(self.min_ns)
    }

    pub fn max_nanos(&self) -> Option<u64> {
        (!self.is_empty()).then_some(self.max_ns)
    }

    /// Value at quantile `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> Result<u64> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("quantile of an empty histogram".into()));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
        }
        Ok(self
            .hist
            .value_at_quantile(q)
            .clamp(self.min_ns, self.max_ns))
    }

    /// Width of the bucket holding `ns`.
    pub fn bucket_width(&self, ns: u64) -> u64 {
        self.hist.equivalent_range(ns)
    }

    pub fn summary(&self) -> Result<LatencySummary> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("summary of an empty histogram".into()));
        }
        let us = |ns: u64| ns as f64 / 1000.0;
        Ok(LatencySummary {
            count: self.count(),
            mean_us: self.mean_nanos().unwrap() / 1000.0,
            min_us: us(self.min_ns),
            max_us: us(self.max_ns),
            p95_us: us(self.quantile(0.95)?),
            p99_us: us(self.quantile(0.99)?),
        })
    }

    pub fn merge(&mut self, other: &LatencyHistogram) {
        if other.is_empty() {
            return;
        }
        self.hist.add(&other.hist).expect("identical bounds");
        self.sum_ns += other.sum_ns;
        self.min_ns = self.min_ns.min(other.min_ns);
        self.max_ns = self.max_ns.max(other.max_ns);
        self.saturated += other.saturated;
    }

    /// Exports the occupied buckets for re-analysis.
    pub fn export(&self) -> HistogramExport {
        let mut raw = Vec::new();
        for v in self.hist.iter_recorded() {
            raw.extend_from_slice(&v.value_iterated_to().to_le_bytes());
            raw.extend_from_slice(&v.count_at_value().to_le_bytes());
        }
        HistogramExport {
            count: self.count(),
            sum_ns: self.sum_ns.to_string(),
            min_ns: self.min_nanos().unwrap_or(0),
            max_ns: self.max_nanos().unwrap_or(0),
            saturated: self.saturated,
            buckets: base64::engine::general_purpose::STANDARD.encode(raw),
        }
    }

    pub fn import(export: &HistogramExport) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("histogram export: {m}"));
        let raw = base64::engine::general_purpose::STANDARD
            .decode(&export.buckets)
            .map_err(|e| bad(&e.to_string()))?;
        if raw.len() % 16 != 0 {
            return Err(bad("bucket array length is not a multiple of 16"));
        }
        let mut h = Self::new();
        for pair in raw.chunks_exact(16) {
            let value = u64::from_le_bytes(pair[..8].try_into().unwrap());
            let count = u64::from_le_bytes(pair[8..].try_into().unwrap());
            h.hist
                .record_n(value.min(MAX_LATENCY_NS), count)
                .map_err(|e| bad(&format!("{e:?}")))?;
        }
        if h.count() != export.count {
            return Err(bad("bucket counts do not add up"));
        }
        h.sum_ns = export.sum_ns.parse().map_err(|_| bad("sum is not an integer"))?;
        if h.count() > 0 {
            h.min_ns = export.min_ns;
            h.max_ns = export.max_ns;
        }
        h.saturated = export.saturated;
        Ok(h)
    }
}

/// Portable form of a [`LatencyHistogram`]. `buckets` is standard base64 of
/// consecutive `(u64 value, u64 count)` little-endian pairs, one per
/// occupied bucket, where `value` is the bucket's highest equivalent value
/// in nanoseconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramExport {
    pub count: u64,
    pub sum_ns: String,
    pub min_ns: u64,
    pub max_ns: u64,
    pub saturated: u64,
    pub buckets: String,
}
