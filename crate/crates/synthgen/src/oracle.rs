//! Brute-force estimate of the best achievable AUC under the generative
//! model.
//!
//! The generator plants exactly `w = max(1, round(rate * N))` witnesses at
//! uniformly random positions of a positive bag, so the bag-level likelihood
//! ratio is
//!
//! ```text
//! LR(bag) = e_w(r_1, ..., r_N) / C(N, w)
//! r_i     = exp(shift * <x_i, u> - shift^2 / 2)
//! ```
//!
//! where `e_w` is the elementary symmetric polynomial of degree `w` (the sum
//! over all witness placements). Only the projection `<x_i, u>` enters the
//! per-instance ratio, so simulation never materializes D-dimensional
//! embeddings; `e_w` is evaluated by a log-space dynamic program in O(N*w).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::{witness_count, Result, SynthError, SynthSpec};

/// Oracle AUC estimate with its standard error (Hanley-McNeil approximation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub auc: f64,
    pub se: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Keeps the oracle's random stream distinct from the generator's.
const ORACLE_SALT: u64 = 0x6f72_6163_6c65_3031;

/// Simulates `n_sim` bags from `spec`'s generative model, scores each with
/// the closed-form bag likelihood ratio, and returns the Mann-Whitney AUC of
/// those scores. Deterministic given the spec seed.
pub fn oracle_auc(spec: &SynthSpec, n_sim: usize) -> Result<OracleEstimate> {
    spec.validate()?;
    if n_sim < 100 {
        return Err(SynthError::Validation(format!(
            "n_sim must be >= 100, got {n_sim}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ ORACLE_SALT);
    let (lo, hi) = spec.bag_size_range;
    let shift = spec.signal_shift;

    let mut scores = Vec::with_capacity(n_sim);
    let mut labels = Vec::with_capacity(n_sim);
    let mut log_ratios = Vec::new();

    for _ in 0..n_sim {
        let label = u8::from(rng.random_bool(spec.positive_fraction));
        let n = rng.random_range(lo..=hi);
        let w_true = if label == 1 {
            witness_count(n, spec.witness_rate)
        } else {
            0
        };
        // The scorer does not see the label; it assumes the positive
        // hypothesis' witness count for this bag size.
        let w_score = witness_count(n, spec.witness_rate);

        log_ratios.clear();
        for i in 0..n {
            let mut t: f64 = rng.sample(StandardNormal);
            if i < w_true {
                t += shift;
            }
            log_ratios.push(shift * t - shift * shift / 2.0);
        }
        // Witness placement is exchangeable, so simulating them in the first
        // w_true slots is distribution-equivalent and e_w is symmetric anyway.
        let score = log_elementary_symmetric(&log_ratios, w_score) - ln_choose(n, w_score);
        scores.push(score);
        labels.push(label);
    }

    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SynthError::Validation(
            "simulation produced a single class; raise n_sim".into(),
        ));
    }
    let auc = sabench_metrics::auc(&scores, &labels)
        .map_err(|e| SynthError::Validation(e.to_string()))?;
    Ok(OracleEstimate {
        auc,
        se: hanley_mcneil_se(auc, n_pos, n_neg),
        n_pos,
        n_neg,
    })
}

/// log e_k(exp(log_r)) via the standard DP, entirely in log space.
fn log_elementary_symmetric(log_r: &[f64], k: usize) -> f64 {
    let mut e = vec![f64::NEG_INFINITY; k + 1];
    e[0] = 0.0;
    for (i, &lr) in log_r.iter().enumerate() {
        let top = k.min(i + 1);
        for j in (1..=top).rev() {
            e[j] = log_add_exp(e[j], e[j - 1] + lr);
        }
    }
    e[k]
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 0.0;
    for j in 1..=k {
        acc += ((n - k + j) as f64).ln() - (j as f64).ln();
    }
    acc
}

fn hanley_mcneil_se(auc: f64, n_pos: usize, n_neg: usize) -> f64 {
    let a = auc;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let np = n_pos as f64;
    let nn = n_neg as f64;
    let var = (a * (1.0 - a) + (np - 1.0) * (q1 - a * a) + (nn - 1.0) * (q2 - a * a)) / (np * nn);
    var.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elementary_symmetric_matches_direct_expansion() {
        // r = [2, 3, 5]: e1 = 10, e2 = 31, e3 = 30
        let lr: Vec<f64> = [2.0f64, 3.0, 5.0].iter().map(|v| v.ln()).collect();
        assert!((log_elementary_symmetric(&lr, 1).exp() - 10.0).abs() < 1e-9);
        assert!((log_elementary_symmetric(&lr, 2).exp() - 31.0).abs() < 1e-9);
        assert!((log_elementary_symmetric(&lr, 3).exp() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn ln_choose_small_values() {
        assert!((ln_choose(5, 2).exp() - 10.0).abs() < 1e-9);
        assert!((ln_choose(10, 3).exp() - 120.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_tiny_simulation() {
        let spec = crate::reference_spec();
        assert!(matches!(
            oracle_auc(&spec, 50),
            Err(SynthError::Validation(_))
        ));
    }
}
