//! Experiment runner: run specs, grid execution, artifacts, figure data and
//! property audits.

pub mod audit;
pub mod config;
pub mod figures;
pub mod output;
pub mod run;

pub use audit::{audit, audit_with_map, gradcheck, AuditOptions, AuditReport, GradcheckReport, Probe};
pub use config::{parse_config, schema, GridSpec, ModelSpec, ReferenceSpec, RunSpec, TuningSpec};
pub use figures::{cost_ratios, CostRatio, FigureId, Marginal, StageHistogram};
pub use run::{
    expand_grid, run_grid, run_grid_with_model, write_figures, Cell, CellFailure, CellOutcome, ChainRecord, GridOutcome,
    MomentReport, References, RunOptions, Tuning,
};
