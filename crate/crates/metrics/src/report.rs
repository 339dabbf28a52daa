//! Cross-method comparison reports: seed-averaged per-fold AUCs, distribution
//! summaries, and one-sided significance against a baseline method.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use sabench_core::RunResult;

use crate::ttest::{compare_to_baseline, compare_to_baseline_unpaired};
use crate::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    Paired,
    UnpairedWelch,
}

#[derive(Debug, Clone)]
pub struct SummarizeOptions {
    pub baseline: String,
    /// Paired by default; methods share identical MCCV splits, so fold-paired
    /// differences are the meaningful comparison. Unpaired is available for
    /// sensitivity analysis.
    pub test: TestKind,
}

impl Default for SummarizeOptions {
    fn default() -> Self {
        Self {
            baseline: "abmil".into(),
            test: TestKind::Paired,
        }
    }
}

/// Five-number summary with quartiles by linear interpolation between order
/// statistics (position `(n-1)*q`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub t: f64,
    pub p: f64,
    pub significant: bool,
    /// Folds actually used for the pairing (present in both methods).
    pub n_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// One entry per fold (ascending fold index), each the mean of that
    /// fold's seed runs.
    pub fold_aucs: Vec<(usize, f64)>,
    pub mean: f64,
    pub sd: f64,
    pub summary: FiveNumber,
    /// Folds with fewer seed runs than the full grid expects.
    pub partial_folds: Vec<usize>,
    /// Folds with no completed run at all.
    pub missing_folds: Vec<usize>,
    /// None for the baseline itself.
    pub vs_baseline: Option<BaselineComparison>,
}

/// Comparison of every benchmarked method against the baseline on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub task: String,
    pub embedding_tag: String,
    pub baseline: String,
    pub baseline_mean: f64,
    pub test: TestKind,
    pub expected_seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
}

/// Aggregates per-cell results into a [`ComparisonReport`].
///
/// Seed averaging happens first (each fold contributes the mean of its seed
/// runs), then fold-level statistics. Missing cells are reported as explicit
/// gaps, never imputed.
pub fn summarize(
    task: &str,
    results: &[RunResult],
    options: &SummarizeOptions,
) -> Result<ComparisonReport> {
    if results.is_empty() {
        return Err(MetricsError::InvalidInput("no results to summarize".into()));
    }
    let embedding_tag = results[0].embedding_tag.clone();
    let expected_seeds: BTreeSet<u64> = results.iter().map(|r| r.run_seed).collect();
    let all_folds: BTreeSet<usize> = results.iter().map(|r| r.fold_index).collect();

    // method -> fold -> seed -> final AUC; BTreeMaps keep output deterministic.
    let mut cells: BTreeMap<&str, BTreeMap<usize, BTreeMap<u64, f64>>> = BTreeMap::new();
    for r in results {
        cells
            .entry(r.method.as_str())
            .or_default()
            .entry(r.fold_index)
            .or_default()
            .insert(r.run_seed, r.final_auc);
    }

    if !cells.contains_key(options.baseline.as_str()) {
        return Err(MetricsError::InvalidInput(format!(
            "baseline method '{}' has no results",
            options.baseline
        )));
    }

    let mut summaries = Vec::new();
    for (method, folds) in &cells {
        let mut fold_aucs = Vec::new();
        let mut partial = Vec::new();
        let mut missing = Vec::new();
        for &fold in &all_folds {
            match folds.get(&fold) {
                Some(seed_runs) => {
                    let mean: f64 =
                        seed_runs.values().sum::<f64>() / seed_runs.len() as f64;
                    if seed_runs.len() < expected_seeds.len() {
                        partial.push(fold);
                    }
                    fold_aucs.push((fold, mean));
                }
                None => missing.push(fold),
            }
        }
        if fold_aucs.is_empty() {
            return Err(MetricsError::InvalidInput(format!(
                "method '{method}' has no completed folds"
            )));
        }
        let values: Vec<f64> = fold_aucs.iter().map(|&(_, v)| v).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (values.len() as f64 - 1.0))
                .sqrt()
        } else {
            0.0
        };
        summaries.push(MethodSummary {
            method: method.to_string(),
            fold_aucs,
            mean,
            sd,
            summary: five_number(&values),
            partial_folds: partial,
            missing_folds: missing,
            vs_baseline: None,
        });
    }

    // Baseline comparisons, pairing by fold index on folds present in both.
    let baseline_folds: BTreeMap<usize, f64> = summaries
        .iter()
        .find(|s| s.method == options.baseline)
        .map(|s| s.fold_aucs.iter().copied().collect())
        .unwrap();
    let baseline_mean = summaries
        .iter()
        .find(|s| s.method == options.baseline)
        .map(|s| s.mean)
        .unwrap();

    for s in &mut summaries {
        if s.method == options.baseline {
            continue;
        }
        let mut method_vals = Vec::new();
        let mut base_vals = Vec::new();
        for &(fold, v) in &s.fold_aucs {
            if let Some(&b) = baseline_folds.get(&fold) {
                method_vals.push(v);
                base_vals.push(b);
            }
        }
        if method_vals.len() >= 2 {
            let out = match options.test {
                TestKind::Paired => compare_to_baseline(&method_vals, &base_vals)?,
                TestKind::UnpairedWelch => {
                    compare_to_baseline_unpaired(&method_vals, &base_vals)?
                }
            };
            s.vs_baseline = Some(BaselineComparison {
                t: out.t,
                p: out.p,
                significant: out.significant,
                n_folds: method_vals.len(),
            });
        }
    }

    Ok(ComparisonReport {
        task: task.to_string(),
        embedding_tag,
        baseline: options.baseline.clone(),
        baseline_mean,
        test: options.test,
        expected_seeds: expected_seeds.into_iter().collect(),
        methods: summaries,
    })
}

/// Quartiles with linear interpolation at position `(n-1)*q` over the sorted
/// values.
pub fn five_number(values: &[f64]) -> FiveNumber {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    FiveNumber {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

impl ComparisonReport {
    /// Deterministic JSON rendering (stable key order, stable float text).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    /// Flat one-row-per-(method, statistic) table for external plotting
    /// tools. Tab-separated: method, statistic, value.
    pub fn to_flat_table(&self) -> String {
        let mut out = String::from("method\tstatistic\tvalue\n");
        use std::fmt::Write as _;
        for m in &self.methods {
            let mut push = |stat: &str, v: f64| {
                let _ = writeln!(out, "{}\t{}\t{}", m.method, stat, v);
            };
            push("mean", m.mean);
            push("sd", m.sd);
            push("min", m.summary.min);
            push("q1", m.summary.q1);
            push("median", m.summary.median);
            push("q3", m.summary.q3);
            push("max", m.summary.max);
            if let Some(c) = &m.vs_baseline {
                push("t_vs_baseline", c.t);
                push("p_vs_baseline", c.p);
                push("significant", if c.significant { 1.0 } else { 0.0 });
            }
            for &(fold, v) in &m.fold_aucs {
                let _ = writeln!(out, "{}\tfold{:02}\t{}", m.method, fold, v);
            }
        }
        let _ = writeln!(out, "baseline\tmean\t{}", self.baseline_mean);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(method: &str, fold: usize, seed: u64, auc: f64) -> RunResult {
        RunResult::new(method, "synth", fold, seed, vec![auc], 1.0).unwrap()
    }

    #[test]
    fn identical_folds_collapse_summary() {
        let results: Vec<RunResult> = (1..=5)
            .flat_map(|f| {
                vec![
                    result("abmil", f, 0, 0.8),
                    result("abmil", f, 2024, 0.8),
                    result("varmil", f, 0, 0.8),
                    result("varmil", f, 2024, 0.8),
                ]
            })
            .collect();
        let report = summarize("t", &results, &SummarizeOptions::default()).unwrap();
        let var = report.methods.iter().find(|m| m.method == "varmil").unwrap();
        assert_eq!(var.summary.min, 0.8);
        assert_eq!(var.summary.max, 0.8);
        assert_eq!(var.summary.median, 0.8);
        // identical to the baseline on every fold -> p = 0.5 convention
        assert_eq!(var.vs_baseline.as_ref().unwrap().p, 0.5);
        // baseline carries no self-comparison
        let base = report.methods.iter().find(|m| m.method == "abmil").unwrap();
        assert!(base.vs_baseline.is_none());
    }

    #[test]
    fn missing_seed_flags_fold_and_uses_single_run() {
        let mut results = vec![
            result("abmil", 1, 0, 0.7),
            result("abmil", 1, 2024, 0.9),
            result("abmil", 2, 0, 0.6),
            result("abmil", 2, 2024, 0.6),
        ];
        results.push(result("dsmil", 1, 0, 0.75));
        results.push(result("dsmil", 1, 2024, 0.85));
        results.push(result("dsmil", 2, 0, 0.65)); // seed 2024 missing
        let report = summarize("t", &results, &SummarizeOptions::default()).unwrap();
        let ds = report.methods.iter().find(|m| m.method == "dsmil").unwrap();
        assert_eq!(ds.partial_folds, vec![2]);
        assert_eq!(ds.fold_aucs, vec![(1, 0.8), (2, 0.65)]);
        let ab = report.methods.iter().find(|m| m.method == "abmil").unwrap();
        assert_eq!(ab.fold_aucs, vec![(1, 0.8), (2, 0.6)]);
    }

    #[test]
    fn report_bytes_are_reproducible() {
        let results = vec![
            result("abmil", 1, 0, 0.7),
            result("abmil", 2, 0, 0.75),
            result("transmil", 1, 0, 0.72),
            result("transmil", 2, 0, 0.8),
        ];
        let a = summarize("t", &results, &SummarizeOptions::default()).unwrap();
        let b = summarize("t", &results, &SummarizeOptions::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_flat_table(), b.to_flat_table());
    }
}
