use statrs::function::beta::beta_reg;

use crate::{MetricsError, Result};

/// Outcome of a one-sided comparison against the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub t: f64,
    pub p: f64,
    /// `p < 0.05`
    pub significant: bool,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Paired one-sided t-test on per-fold differences, alternative
/// "method > baseline". Values are paired by index (fold order).
///
/// Zero-variance differences use a documented convention: all-zero
/// differences give p = 0.5; a constant positive difference gives p = 0 and a
/// constant negative one p = 1.
pub fn compare_to_baseline(method_aucs: &[f64], baseline_aucs: &[f64]) -> Result<TestOutcome> {
    if method_aucs.len() != baseline_aucs.len() {
        return Err(MetricsError::InvalidInput(format!(
            "paired test needs equal lengths, got {} vs {}",
            method_aucs.len(),
            baseline_aucs.len()
        )));
    }
    if method_aucs.len() < 2 {
        return Err(MetricsError::InvalidInput(
            "paired test needs at least 2 folds".into(),
        ));
    }
    let diffs: Vec<f64> = method_aucs
        .iter()
        .zip(baseline_aucs)
        .map(|(m, b)| m - b)
        .collect();
    one_sample_one_sided(&diffs)
}

/// Unpaired (Welch) variant, kept behind an explicit call for sensitivity
/// analysis; alternative "method > baseline".
pub fn compare_to_baseline_unpaired(method_aucs: &[f64], baseline_aucs: &[f64]) -> Result<TestOutcome> {
    if method_aucs.len() < 2 || baseline_aucs.len() < 2 {
        return Err(MetricsError::InvalidInput(
            "unpaired test needs at least 2 values per group".into(),
        ));
    }
    let (n1, n2) = (method_aucs.len() as f64, baseline_aucs.len() as f64);
    let (m1, m2) = (mean(method_aucs), mean(baseline_aucs));
    let (v1, v2) = (sample_var(method_aucs, m1), sample_var(baseline_aucs, m2));
    let se2 = v1 / n1 + v2 / n2;
    if se2 == 0.0 {
        let p = degenerate_p(m1 - m2);
        return Ok(outcome((m1 - m2).signum() * f64::INFINITY, p));
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2 / ((v1 / n1).powi(2) / (n1 - 1.0) + (v2 / n2).powi(2) / (n2 - 1.0));
    Ok(outcome(t, student_t_survival(t, df)))
}

fn one_sample_one_sided(diffs: &[f64]) -> Result<TestOutcome> {
    let n = diffs.len() as f64;
    let m = mean(diffs);
    let var = sample_var(diffs, m);
    if var == 0.0 {
        let p = degenerate_p(m);
        let t = if m == 0.0 {
            0.0
        } else {
            m.signum() * f64::INFINITY
        };
        return Ok(outcome(t, p));
    }
    let t = m / (var / n).sqrt();
    Ok(outcome(t, student_t_survival(t, n - 1.0)))
}

fn degenerate_p(mean_diff: f64) -> f64 {
    if mean_diff > 0.0 {
        0.0
    } else if mean_diff < 0.0 {
        1.0
    } else {
        0.5
    }
}

fn outcome(t: f64, p: f64) -> TestOutcome {
    TestOutcome {
        t,
        p,
        significant: p < SIGNIFICANCE_LEVEL,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// P(T >= t) for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function.
pub fn student_t_survival(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_give_half() {
        let x = [0.8, 0.82, 0.79, 0.91];
        let out = compare_to_baseline(&x, &x).unwrap();
        assert_eq!(out.p, 0.5);
        assert!(!out.significant);
    }

    #[test]
    fn constant_positive_difference_saturates() {
        let base = [0.8; 20];
        let method: Vec<f64> = base.iter().map(|b| b + 0.01).collect();
        let out = compare_to_baseline(&method, &base).unwrap();
        assert_eq!(out.p, 0.0);
        assert!(out.significant);

        let worse: Vec<f64> = base.iter().map(|b| b - 0.01).collect();
        let out = compare_to_baseline(&worse, &base).unwrap();
        assert_eq!(out.p, 1.0);
    }

    #[test]
    fn known_t_quantile() {
        // t = 1.725 at df = 20 is the one-sided 5% critical value.
        let p = student_t_survival(1.725, 20.0);
        assert!((p - 0.05).abs() < 2e-4, "p = {p}");
    }

    #[test]
    fn needs_two_folds() {
        assert!(compare_to_baseline(&[0.5], &[0.4]).is_err());
    }
}
