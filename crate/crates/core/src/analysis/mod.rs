//! Metrics, predictor-norm profiles, feature sampling and report export.

mod export;
mod features;
mod metrics;
mod norms;

pub use export::{
    read_results_csv, render_norms_svg, summarize, write_norms_csv, write_norms_svg, write_results_csv, write_slopes_csv,
    write_summary_csv, SlopeRow, SummaryRow,
};
pub use features::{feature_distribution, FeatureDistribution, DEFAULT_FEATURE_COUNT};
pub use metrics::{confusion_matrix, evaluate, evaluate_predictions, macro_f1, per_class_f1, EvalReport};
pub use norms::{average_ranks, norm_profile, norm_slope, pearson, NormEntry, NormProfile, NormSlope, FLAT_TOLERANCE};
