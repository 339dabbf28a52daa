//! Synthetic embedding-bag datasets with a planted, tunable witness signal.
//!
//! Background instances are i.i.d. standard normal in `dim` dimensions; each
//! positive bag carries `round(witness_rate * N)` (at least one) witness
//! instances whose mean is shifted by `signal_shift` along a fixed random
//! unit direction. Because the generative model is fully known, the Bayes
//! score of a bag has closed form and [`oracle_auc`] can estimate the best
//! achievable AUC by brute-force simulation; trained aggregators are measured
//! against that ceiling.

mod generate;
mod oracle;
mod spec_file;

pub use generate::{generate, GeneratedDataset};
pub use oracle::{oracle_auc, OracleEstimate};
pub use spec_file::{load_spec, parse_spec, render_spec, save_spec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] sabench_core::CoreError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Coordinate layout of witness instances in positive bags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialMode {
    /// Instances occupy a contiguous grid regardless of identity.
    None,
    /// Witness instances occupy cells near a random center; the marginal
    /// embedding distribution is identical to `None`, only coordinates move.
    Clustered,
}

impl SpatialMode {
    pub fn name(&self) -> &'static str {
        match self {
            SpatialMode::None => "none",
            SpatialMode::Clustered => "clustered",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SpatialMode::None),
            "clustered" => Ok(SpatialMode::Clustered),
            other => Err(SynthError::Validation(format!(
                "spatial_mode must be 'none' or 'clustered', got '{other}'"
            ))),
        }
    }
}

/// Full description of a synthetic dataset; generation is a pure function of
/// this value.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_bags: usize,
    pub dim: usize,
    pub bag_size_range: (usize, usize),
    pub witness_rate: f64,
    /// Mean shift of witness instances, in units of the feature standard
    /// deviation.
    pub signal_shift: f64,
    pub spatial_mode: SpatialMode,
    /// Target spatial scale of the witness cluster, in grid units.
    pub cluster_radius: u32,
    pub positive_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bag_size_range;
        let fail = |msg: String| Err(SynthError::Validation(msg));
        if self.n_bags < 4 {
            return fail(format!("n_bags must be >= 4, got {}", self.n_bags));
        }
        if self.dim == 0 {
            return fail("dim must be >= 1".into());
        }
        if lo < 1 || hi < lo {
            return fail(format!("bag_size_range must satisfy 1 <= min <= max, got [{lo}, {hi}]"));
        }
        if !(self.witness_rate > 0.0 && self.witness_rate <= 1.0) {
            return fail(format!("witness_rate must be in (0, 1], got {}", self.witness_rate));
        }
        if !(self.signal_shift >= 0.0 && self.signal_shift.is_finite()) {
            return fail(format!("signal_shift must be finite and >= 0, got {}", self.signal_shift));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return fail(format!(
                "positive_fraction must be in (0, 1), got {}",
                self.positive_fraction
            ));
        }
        let n_pos = self.n_positive();
        if n_pos < 2 || self.n_bags - n_pos < 2 {
            return fail(format!(
                "need at least 2 bags per class, would get {} positive / {} negative",
                n_pos,
                self.n_bags - n_pos
            ));
        }
        if self.spatial_mode == SpatialMode::Clustered {
            if self.cluster_radius == 0 {
                return fail("cluster_radius must be >= 1 in clustered mode".into());
            }
            let max_witnesses = witness_count(hi, self.witness_rate);
            let capacity = (2 * self.cluster_radius as usize + 1).pow(2);
            if capacity < max_witnesses {
                return fail(format!(
                    "cluster_radius {} cannot hold up to {max_witnesses} witnesses",
                    self.cluster_radius
                ));
            }
        }
        Ok(())
    }

    pub fn n_positive(&self) -> usize {
        (self.positive_fraction * self.n_bags as f64).round() as usize
    }

    /// FNV-1a hash of the canonical spec rendering; used as the provenance
    /// tag on generated manifests.
    pub fn content_hash(&self) -> u64 {
        let text = render_spec(self);
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Witness count for a positive bag of `n` instances: `round(rate * n)`,
/// floored at one so every positive bag carries evidence.
pub fn witness_count(n: usize, rate: f64) -> usize {
    ((rate * n as f64).round() as usize).max(1)
}

/// The frozen desk-scale reference spec used by the acceptance suite.
pub fn reference_spec() -> SynthSpec {
    SynthSpec {
        n_bags: 200,
        dim: 32,
        bag_size_range: (50, 200),
        witness_rate: 0.1,
        signal_shift: 2.0,
        spatial_mode: SpatialMode::None,
        cluster_radius: 4,
        positive_fraction: 0.5,
        seed: 7,
    }
}

/// Oracle AUC of [`reference_spec`] at `n_sim = 100_000`, frozen from the
/// deterministic simulation itself (see `tests/oracle_props.rs`). Artifact
/// constant: nothing outside this repository pins it.
pub const REFERENCE_ORACLE_AUC: f64 = 0.9922521969133442;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witness_count_floors_at_one() {
        assert_eq!(witness_count(5, 0.01), 1);
        assert_eq!(witness_count(100, 0.1), 10);
        assert_eq!(witness_count(15, 0.1), 2); // round(1.5) = 2
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut s = reference_spec();
        s.witness_rate = 0.0;
        assert!(s.validate().is_err());
        let mut s = reference_spec();
        s.bag_size_range = (10, 5);
        assert!(s.validate().is_err());
        let mut s = reference_spec();
        s.spatial_mode = SpatialMode::Clustered;
        s.cluster_radius = 1;
        // up to 20 witnesses cannot fit a radius-1 box
        assert!(s.validate().is_err());
        s.cluster_radius = 3;
        assert!(s.validate().is_ok());
    }
}
