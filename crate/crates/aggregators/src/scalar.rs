//! Element type abstraction so every model runs in either f32 (fast, lean —
//! used for benchmarking and the large-bag regime) or f64 (used by the
//! finite-difference gradient checks).

use ndarray::NdFloat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub trait Scalar: NdFloat + Send + Sync + 'static {
    fn fl(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Uniform draw from `(-bound, bound)`.
    fn sample_uniform_sym<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn fl(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn sample_uniform_sym<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Self {
        let b = bound as f32;
        Uniform::new(-b, b).unwrap().sample(rng)
    }
}

impl Scalar for f64 {
    #[inline]
    fn fl(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn sample_uniform_sym<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Self {
        Uniform::new(-bound, bound).unwrap().sample(rng)
    }
}
