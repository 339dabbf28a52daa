use std::collections::BTreeMap;
use std::collections::HashSet;

use ndarray::Array2;

use crate::{CoreError, Result};

/// One slide: a bag of tile embeddings, optional tile-grid coordinates, and a
/// binary label.
///
/// Coordinates are integer tile-grid positions (column, row) at a fixed
/// magnification, not physical units. They are optional because only
/// spatially aware aggregators consume them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBag {
    slide_id: String,
    embeddings: Array2<f32>,
    coords: Option<Array2<i32>>,
    label: u8,
}

impl EmbeddingBag {
    /// Builds a bag, checking every invariant: `N >= 1`, `D >= 1`, finite
    /// embeddings, coords (when present) with exactly `N` distinct rows.
    pub fn new(
        slide_id: impl Into<String>,
        embeddings: Array2<f32>,
        coords: Option<Array2<i32>>,
        label: u8,
    ) -> Result<Self> {
        let slide_id = slide_id.into();
        if slide_id.is_empty() {
            return Err(CoreError::Validation("slide_id must be non-empty".into()));
        }
        let (n, d) = embeddings.dim();
        if n == 0 || d == 0 {
            return Err(CoreError::Validation(format!(
                "bag '{slide_id}': embeddings must be at least 1x1, got {n}x{d}"
            )));
        }
        if label > 1 {
            return Err(CoreError::Validation(format!(
                "bag '{slide_id}': label must be 0 or 1, got {label}"
            )));
        }
        if !embeddings.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Validation(format!(
                "bag '{slide_id}': embeddings contain non-finite values"
            )));
        }
        if let Some(c) = &coords {
            if c.nrows() != n || c.ncols() != 2 {
                return Err(CoreError::Validation(format!(
                    "bag '{slide_id}': coords must be {n}x2, got {}x{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            let mut seen = HashSet::with_capacity(n);
            for row in c.rows() {
                if !seen.insert((row[0], row[1])) {
                    return Err(CoreError::Validation(format!(
                        "bag '{slide_id}': duplicate coordinate ({}, {})",
                        row[0], row[1]
                    )));
                }
            }
        }
        Ok(Self {
            slide_id,
            embeddings,
            coords,
            label,
        })
    }

    pub fn slide_id(&self) -> &str {
        &self.slide_id
    }

    /// N x D embedding matrix.
    pub fn embeddings(&self) -> &Array2<f32> {
        &self.embeddings
    }

    /// Optional N x 2 (column, row) tile-grid coordinates.
    pub fn coords(&self) -> Option<&Array2<i32>> {
        self.coords.as_ref()
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    /// Number of instances in the bag.
    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    /// Embedding dimension D.
    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }
}

/// Result of one aggregator forward pass on one bag.
///
/// `vector` is the slide-level representation (width depends on the method),
/// `logit` the pre-threshold prediction, `attention` the per-instance weights
/// for attention-bearing methods, and `aux` carries named method-specific
/// scalars (auxiliary losses, stream logits, skip markers).
#[derive(Debug, Clone, PartialEq)]
pub struct BagRepresentation {
    pub vector: Vec<f64>,
    pub logit: f64,
    pub attention: Option<Vec<f64>>,
    pub aux: BTreeMap<String, f64>,
}

impl BagRepresentation {
    /// Tolerance on the attention normalization invariant.
    pub const ATTENTION_SUM_TOL: f64 = 1e-5;

    /// Builds a representation, enforcing that attention (when present) is
    /// non-negative and sums to one within `ATTENTION_SUM_TOL`.
    pub fn new(
        vector: Vec<f64>,
        logit: f64,
        attention: Option<Vec<f64>>,
        aux: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if let Some(a) = &attention {
            if a.is_empty() {
                return Err(CoreError::Validation("attention must be non-empty".into()));
            }
            if a.iter().any(|&w| !w.is_finite() || w < 0.0) {
                return Err(CoreError::Validation(
                    "attention weights must be finite and non-negative".into(),
                ));
            }
            let sum: f64 = a.iter().sum();
            if (sum - 1.0).abs() > Self::ATTENTION_SUM_TOL {
                return Err(CoreError::Validation(format!(
                    "attention must sum to 1 +/- {}, got {sum}",
                    Self::ATTENTION_SUM_TOL
                )));
            }
        }
        Ok(Self {
            vector,
            logit,
            attention,
            aux,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_empty_bag() {
        let e = Array2::<f32>::zeros((0, 4));
        assert!(matches!(
            EmbeddingBag::new("s", e, None, 0),
            Err(CoreError::Validation(_))
        ));
    }

    #[test]
    fn rejects_coord_row_mismatch() {
        let e = Array2::<f32>::zeros((3, 4));
        let c = array![[0, 0], [1, 0]];
        assert!(matches!(
            EmbeddingBag::new("s", e, Some(c), 0),
            Err(CoreError::Validation(_))
        ));
    }

    #[test]
    fn rejects_duplicate_coords() {
        let e = Array2::<f32>::zeros((2, 4));
        let c = array![[3, 1], [3, 1]];
        assert!(matches!(
            EmbeddingBag::new("s", e, Some(c), 1),
            Err(CoreError::Validation(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let e = array![[1.0f32, f32::NAN]];
        assert!(matches!(
            EmbeddingBag::new("s", e, None, 0),
            Err(CoreError::Validation(_))
        ));
    }

    #[test]
    fn attention_must_normalize() {
        let r = BagRepresentation::new(vec![0.0], 0.0, Some(vec![0.5, 0.4]), BTreeMap::new());
        assert!(r.is_err());
        let r = BagRepresentation::new(vec![0.0], 0.0, Some(vec![0.5, 0.5]), BTreeMap::new());
        assert!(r.is_ok());
    }
}
