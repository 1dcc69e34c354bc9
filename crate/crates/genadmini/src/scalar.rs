//! Floating-point abstraction for all numerical code in this crate.
//!
//! Every tensor kernel, model, and training loop is generic over [`Scalar`]
//! so the same code runs in `f32` for throughput and in `f64` for
//! finite-difference oracles in the test suite. Concrete aliases live at the
//! crate root ([`crate::Real`]).

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Scalar type accepted by the tensor engine and the models built on it.
///
/// `NdFloat` brings the float arithmetic plus the `ndarray` linear-algebra
/// bounds, so `f32`/`f64` matrix products dispatch to the fast gemm path.
pub trait Scalar: NdFloat + FromPrimitive + std::iter::Sum + Default {
    /// Lossless-enough conversion used at I/O and RNG boundaries.
    fn of_f64(v: f64) -> Self;
    /// Widening conversion; exact for both supported types.
    fn into_f64(self) -> f64;
    /// Tag stored in checkpoint headers.
    fn dtype_name() -> &'static str;
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
    fn dtype_name() -> &'static str {
        "f32"
    }
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn into_f64(self) -> f64 {
        self
    }
    fn dtype_name() -> &'static str {
        "f64"
    }
}
