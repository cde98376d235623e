//! Experiment orchestration: the initial load, the epoch loop of extend
//! phase, dump and run phase, and the four modes.
//!
//! Every trial is a pure function of the configuration and `seed + trial`
//! apart from measured timings.

mod modes;
mod phase;
mod report;

pub use modes::{
    aggregate_trials, baseline_targets, run_baseline_trial, run_clean_trial, run_experiment,
    run_main_trial, trial_dump_dir, BaselineSpec, EpochPlan, RunOptions, TrialContext,
};
pub use phase::{
    check_consistency, load_initial, load_uniform, logical_digest, logical_scan,
    run_extend_phase, run_run_phase, value_generator, ExtendPhaseStats, RunPhaseStats,
};
pub use report::{DumpInfo, EpochReport, ExtendSummary, RunSummary, SizeSnapshot};
