//! Benchmark harness for key-value stores whose record values keep growing.
//!
//! An experiment loads a YCSB-style table, then runs a sequence of epochs. Each
//! epoch first grows selected fields through *extend* operations and then
//! measures an ordinary operation mix against the grown state. Four modes
//! separate the effect of total volume, size skew and update history:
//!
//! * **main-run**: one store instance persists across epochs, history accumulates.
//! * **clean-run**: every epoch's logical dump is restored into a fresh store.
//! * **spread-baseline**: the same volume as many records of the initial size.
//! * **average-baseline**: the same volume spread evenly over the original records.
//!
//! Module map:
//!
//! * [`model`]: record keys, schema, configuration, the length ledger, size histograms.
//! * [`genkit`]: deterministic key choosers, value payloads, op-mix and length samplers.
//! * [`backend`]: the storage driver contract, `MemStore`, `LogStore`, dump/restore.
//! * [`metrics`]: latency histograms, throughput, cross-trial aggregation.
//! * [`runner`]: load, extend and run phases, and the four experiment modes.
//! * [`cli`]: workload files, result export, charts and the `ivs` subcommands.

pub mod backend;
pub mod cli;
pub mod error;
pub mod genkit;
mod hash;
pub mod metrics;
pub mod model;
pub mod runner;

pub use error::{Error, Result};
