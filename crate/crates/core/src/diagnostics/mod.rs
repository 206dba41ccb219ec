//! Metric norms, optimality residuals, descent checks and rate fits over traces.

mod checks;
mod metric;
mod rates;
mod reference;

pub use checks::{
    consensus_error, consensus_error_v, fejer_check, inexactness_ratio, kkt_residual, monotone_residual_check,
    monotone_series_check, quasi_fejer_check, relative_error, ErgodicAverager, InexactnessSeries, KktInputs,
    SlackReport,
};
pub use metric::{
    build_from_v, build_metric_matrices, dense_metric, g_norm_sq, h1_norm_sq, h2_norm_sq, h_distance, h_norm_sq,
    DenseMetric, MetricMatrices,
};
pub use rates::{rate_fit, running_best_scaled, RateFit, RateModel, MIN_FIT_LEN};
pub use reference::{long_run_reference, ReferencePoint};
