//! Latency recording, throughput and cross-trial aggregation.

mod aggregate;
mod latency;

pub use aggregate::{
    aggregate_series, linear_fit, throughput, AggregateRow, LinearFit, MetricStats,
    TrialAggregate, Z_95,
};
pub use latency::{HistogramExport, LatencyHistogram, LatencySummary};
