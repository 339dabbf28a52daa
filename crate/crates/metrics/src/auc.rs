use crate::{MetricsError, Result};

/// Area under the ROC curve in its rank (Mann-Whitney) form: the fraction of
/// (positive, negative) pairs where the positive scores strictly higher, with
/// ties counted half.
///
/// Computed from tie-averaged ranks in O(n log n); rank sums are integer
/// halves, so the result is exactly the pair-counting value.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MetricsError::InvalidInput(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(MetricsError::UndefinedMetric("empty input".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(MetricsError::InvalidInput(format!(
            "labels must be 0 or 1, got {bad}"
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricsError::InvalidInput("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::UndefinedMetric(
            "both classes must be present".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Tie-averaged ranks (1-based), accumulated as the positive-class rank sum.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the average rank
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let a = auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn all_ties_give_half() {
        let a = auc(&[0.3; 6], &[1, 0, 1, 0, 1, 0]).unwrap();
        assert_eq!(a, 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[1, 1]),
            Err(MetricsError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn inverted_scores_complement_without_ties() {
        let scores = [0.11, 0.92, 0.33, 0.78, 0.05, 0.64];
        let labels = [0, 1, 0, 1, 0, 1];
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = auc(&scores, &labels).unwrap();
        let b = auc(&neg, &labels).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }
}
