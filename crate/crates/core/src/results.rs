//! Per-cell training results. One record per (method, fold, seed) benchmark
//! cell; shared between the trainer (producer) and the report generator
//! (consumer).

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Validation-AUC trajectory and metadata for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub embedding_tag: String,
    pub fold_index: usize,
    pub run_seed: u64,
    pub val_auc_per_epoch: Vec<f64>,
    pub final_auc: f64,
    pub wall_time_s: f64,
}

impl RunResult {
    /// Builds a record; `final_auc` is pinned to the last trajectory entry.
    pub fn new(
        method: impl Into<String>,
        embedding_tag: impl Into<String>,
        fold_index: usize,
        run_seed: u64,
        val_auc_per_epoch: Vec<f64>,
        wall_time_s: f64,
    ) -> Result<Self> {
        let final_auc = *val_auc_per_epoch.last().ok_or_else(|| {
            CoreError::Validation("trajectory must contain at least one epoch".into())
        })?;
        Ok(Self {
            method: method.into(),
            embedding_tag: embedding_tag.into(),
            fold_index,
            run_seed,
            val_auc_per_epoch,
            final_auc,
            wall_time_s,
        })
    }

    /// Checks the trajectory/final consistency invariant; used when loading
    /// records persisted by an earlier run.
    pub fn validate(&self) -> Result<()> {
        match self.val_auc_per_epoch.last() {
            Some(&last) if last == self.final_auc => Ok(()),
            Some(&last) => Err(CoreError::Validation(format!(
                "final_auc {} does not match last epoch {}",
                self.final_auc, last
            ))),
            None => Err(CoreError::Validation("empty trajectory".into())),
        }
    }
}
