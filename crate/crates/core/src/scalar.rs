//! Floating point scalar abstraction shared by every tensor in the crate.
//!
//! Storage is generic; reductions (distances, Gram products, centroid sums)
//! always run in `f64` through [`Scalar::as_f64`].

use std::fmt::Debug;

use num_traits::Float;

/// Element type of feature tensors: `f32` (the default) or `f64`.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    fn as_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;

    fn as_f32(self) -> f32 {
        self.as_f64() as f32
    }

    fn from_f32(v: f32) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f32(self) -> f32 {
        self
    }
    #[inline(always)]
    fn from_f32(v: f32) -> Self {
        v
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Squared L2 distance accumulated in `f64`.
#[inline]
pub fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// Inner product accumulated in `f64`.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.as_f64() * y.as_f64())
        .sum()
}

#[inline]
pub fn sq_norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter()
        .map(|&x| {
            let v = x.as_f64();
            v * v
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions_agree_across_precisions() {
        let a32 = [1.0f32, 2.0, 3.0];
        let b32 = [0.5f32, -1.0, 4.0];
        let a64 = a32.map(f64::from);
        let b64 = b32.map(f64::from);
        assert_eq!(sq_dist(&a32, &b32), sq_dist(&a64, &b64));
        assert_eq!(dot(&a32, &b32), dot(&a64, &b64));
        assert_eq!(sq_norm(&a32), 14.0);
    }
}
