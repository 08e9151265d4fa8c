//! Command-line front end for the multi-particle localization laboratory:
//! TOML run configs, probe orchestration, and reproducible artifact
//! directories (config snapshot, trial logs, CSV summaries, plot tables).

pub mod config;
pub mod run;

pub use config::{validation_report, ProbeKind, RunConfig, ValidationReport, SCHEMA_VERSION};
pub use run::{
    effective_dim_cap, read_assertions, read_config, read_ledger, read_meta, read_summary,
    read_trials, run_to_dir, HardAssertion, LedgerCsvRow, RunOutcome, DIM_CAP_ENV,
};
