//! Evaluation statistics for the benchmark: ROC AUC, one-sided tests against
//! the attention baseline, and cross-fold comparison reports.
//!
//! Everything in this crate is a pure function of its inputs; the same result
//! set always renders to identical report bytes.

mod auc;
mod report;
mod ttest;

pub use auc::auc;
pub use report::{summarize, ComparisonReport, MethodSummary, SummarizeOptions};
pub use ttest::{compare_to_baseline, compare_to_baseline_unpaired, TestOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    /// AUC needs at least one score from each class.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;
