//! Domain model shared by every other module.

mod config;
mod histogram;
mod key;
mod ledger;

pub use config::{
    ExperimentConfig, FieldLengthDistribution, KeyDistribution, Mode, OpType, RecordSchema,
    WorkloadMix, DEFAULT_ZIPFIAN_THETA,
};
pub use histogram::ValueSizeHistogram;
pub use key::RecordKey;
pub use ledger::{ExtendOutcome, LengthLedger};
