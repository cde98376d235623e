//! Workload files, result export, charts and the `ivs` subcommands.
//!
//! Results live under an output root:
//!
//! ```text
//! <output>/<mode>/trial-NNN.jsonl      one EpochReport per line
//! <output>/<mode>/aggregate.csv        epoch,metric,trials,mean,stderr,band_lo,band_hi
//! <output>/<mode>/config.json          resolved configuration
//! <output>/main-run/dumps/trial-NNN/   dump-epoch-NNN.{bin,ledger,manifest}
//! ```

mod charts;
mod commands;
mod config;
mod export;

pub use charts::{epoch_chart, line_chart, size_distribution_chart, volume_chart, Series};
pub use commands::{
    cmd_load, cmd_report, cmd_run, cmd_verify, dump_root, exit_code, mode_dir, resolve_workload,
    LoadOutcome, RunOutcome, VerifyOutcome, DEFAULT_OUTPUT_DIR, EXIT_CONFIG, EXIT_OK,
    EXIT_RUNTIME, EXIT_VERIFY,
};
pub use config::{apply_env, parse_config, parse_config_str, parse_with_overrides, WorkloadFile, WORKLOAD_KEYS};
pub use export::{
    read_aggregate_csv, read_config_echo, read_jsonl, read_report_set, trial_report_path,
    write_aggregate_csv, write_aggregate_file, write_config_echo, JsonlWriter, AGGREGATE_CSV,
    CONFIG_ECHO, FAILED_MARKER,
};
