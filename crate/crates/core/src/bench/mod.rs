//! Boundary benchmark: per-threshold correspondence matching, precision,
//! recall and F, and ODS/OIS/AP aggregation.

mod baseline;
mod eval;
mod matching;

pub use eval::{
    aggregate, average_precision, binarize, binarize_and_thin, default_d_max, default_thresholds, evaluate_image,
    f_measure, uniform_thresholds, BenchmarkSummary, Counts, PRPoint, AP_RECALL_SAMPLES, DEFAULT_DMAX_FRACTION,
};
pub use baseline::{benchmark, benchmark_default, sobel_baseline};
pub use matching::{correspond, MatchResult};
