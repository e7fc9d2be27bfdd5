use num_traits::{Float, NumAssign};

/// Scalar element type for all numeric kernels: f32 or f64.
///
/// Training and gradient checking always run with `f64` (see the crate-root
/// aliases); `f32` instantiations exist for storage-width interop and for
/// callers that want a narrower index.
pub trait Scalar:
    Float
    + NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}
