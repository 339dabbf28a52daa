//! Independent oracles for the statistics: a brute-force pair-counting AUC, a
//! continued-fraction incomplete-beta t CDF, and a sort-based quantile check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use sabench_core::RunResult;
use sabench_metrics::{auc, compare_to_baseline, summarize, SummarizeOptions};

/// O(P*N) pair-counting AUC: ties count half.
fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .collect();
    let mut num = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                num += 1.0;
            } else if p == n {
                num += 0.5;
            }
        }
    }
    num / (pos.len() as f64 * neg.len() as f64)
}

#[test]
fn auc_matches_pairwise_oracle_exactly() {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    for case in 0..200 {
        let n = rng.random_range(4..60);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        // force both classes
        labels[0] = 0;
        labels[1] = 1;
        // quantized scores so ties actually occur
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..20) as f64) / 10.0)
            .collect();
        let fast = auc(&scores, &labels).unwrap();
        let slow = pairwise_auc(&scores, &labels);
        assert_eq!(fast, slow, "case {case}: rank form must equal pair counting");
    }
}

#[test]
fn auc_invariant_under_monotone_transform() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.random_range(6..40);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mapped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
        let a = auc(&scores, &labels).unwrap();
        let b = auc(&mapped, &labels).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}

// ---------------------------------------------------------------------------
// Continued-fraction regularized incomplete beta, coded independently of the
// implementation path (which goes through statrs).
// ---------------------------------------------------------------------------

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9 coefficients.
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = COEF[0];
        let t = x + 7.5;
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

fn betacf(a: f64, b: f64, x: f64) -> f64 {
    // Lentz's algorithm for the incomplete beta continued fraction.
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

fn inc_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

fn reference_one_sided_p(diffs: &[f64]) -> f64 {
    let n = diffs.len() as f64;
    let m = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1.0);
    let t = m / (var / n).sqrt();
    let df = n - 1.0;
    let x = df / (df + t * t);
    let tail = 0.5 * inc_beta_reg(df / 2.0, 0.5, x);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

#[test]
fn paired_t_matches_continued_fraction_reference() {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let noise = Normal::new(0.02, 0.01).unwrap();
    for case in 0..100 {
        let n = 20;
        let baseline: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..0.9)).collect();
        let method: Vec<f64> = baseline
            .iter()
            .map(|b| b + noise.sample(&mut rng))
            .collect();
        let diffs: Vec<f64> = method.iter().zip(&baseline).map(|(m, b)| m - b).collect();
        let out = compare_to_baseline(&method, &baseline).unwrap();
        let p_ref = reference_one_sided_p(&diffs);
        assert!(
            (out.p - p_ref).abs() <= 1e-9,
            "case {case}: p = {} vs reference {}",
            out.p,
            p_ref
        );
    }
}

#[test]
fn quartiles_match_independent_sort_based_computation() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let methods = ["abmil", "transmil", "patchgcn"];
    let mut results = Vec::new();
    for m in methods {
        for fold in 1..=20 {
            for seed in [0u64, 2024] {
                results.push(
                    RunResult::new(m, "synth", fold, seed, vec![rng.random_range(0.5..1.0)], 0.1)
                        .unwrap(),
                );
            }
        }
    }
    let report = summarize("t", &results, &SummarizeOptions::default()).unwrap();
    for m in &report.methods {
        let mut vals: Vec<f64> = m.fold_aucs.iter().map(|&(_, v)| v).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // independent linear-interpolation quantile
        let q = |p: f64| -> f64 {
            let pos = (vals.len() - 1) as f64 * p;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo + 1 < vals.len() {
                vals[lo] * (1.0 - frac) + vals[lo + 1] * frac
            } else {
                vals[lo]
            }
        };
        assert_eq!(m.summary.min, vals[0]);
        assert_eq!(m.summary.max, vals[vals.len() - 1]);
        assert!((m.summary.q1 - q(0.25)).abs() < 1e-12);
        assert!((m.summary.median - q(0.5)).abs() < 1e-12);
        assert!((m.summary.q3 - q(0.75)).abs() < 1e-12);
    }
}
