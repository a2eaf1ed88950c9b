//! Experiment orchestration: configuration, replicated risk simulation,
//! score-attack runs, log-log rate fits and the empirical privacy auditor.

mod attack_run;
mod audit;
mod config;
mod experiment;

pub use attack_run::{attack_truth, run_attack, AttackKind, AttackOutcome};
pub use audit::{privacy_audit, AuditConfig, AuditReport, CountMechanism};
pub use config::{Cell, DeltaSpec, ExperimentConfig, FamilyChoice, ModelKind};
pub use experiment::{
    attack_model, fit_estimate, fit_loglog_slope, read_rows_csv, run_experiment, run_replicate, series_length,
    summarize_cells, truth_for, write_rows_csv, CellSummary, ExperimentOutput, RateAxis, RateCell, RateFit, ResultRow,
};
