//! Trial scoring and metrics (DET, EER, minDCF) and clustering agreement
//! (k-means, NMI).

mod det;
mod kmeans;
mod nmi;
mod trials;

pub use det::{
    compute_det, eer, min_dcf, probit_of, DetCurve, DetPoint, DEFAULT_P_TARGET,
};
pub use kmeans::{kmeans, kmeans_matrix, KmeansResult, DEFAULT_RESTARTS, MAX_LLOYD_ITERS};
pub use nmi::{nmi, nmi_with, NmiNorm};
pub use trials::{score_trials, ScoreSet, Trial, TrialList};

/// Metrics report: `key<TAB>value` lines.
pub fn format_metrics(pairs: &[(&str, f64)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
}
