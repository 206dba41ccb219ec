//! Experiment configs, centralized reference solutions, trace files and comparison tables.

mod compare;
mod config;
mod experiment;
mod reference;

pub use compare::{compare_tables, parse_summary, Comparison, ComparisonRow, SummaryTable};
pub use config::{
    parse_d_source, parse_tau, DSource, DataSpec, ExperimentConfig, GraphSpec, RawConfig, RegKind, RegSpec, StepSpec,
    TauSpec, OUTPUT_ROOT_ENV,
};
pub use experiment::{
    build_setup, random_gaussian_matrix, read_matrix_csv, resolve_stepsizes, run_config, run_experiment,
    schedule_label, strip_columns, trace_csv, validate_config, ExperimentOutput, Setup, SummaryRow, SUMMARY_COLUMNS,
    TRACE_COLUMNS,
};
pub use reference::{
    condat_vu, fista, reference_solution, ReferenceMethod, ReferenceSolution, DEFAULT_REFERENCE_MAX_ITERS,
    DEFAULT_REFERENCE_TOL,
};
