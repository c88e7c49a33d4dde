//! Scalar abstraction so the numeric core works at either precision.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar the whole library is generic over.
///
/// Implemented for `f32` and `f64`. The file formats, the CLI, and every
/// stated tolerance use `f64`; see the type aliases at the crate root.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + Display
    + LowerExp
    + Debug
    + FftNum
    + ScalarOperand
{
    /// Largest imaginary magnitude tolerated when the inverse DFT of
    /// real-valued data is collapsed back to a real matrix.
    fn imag_residue_tol() -> Self;

    /// Converts an `f64` literal; panics only on values a float cannot hold.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }
}

impl Scalar for f64 {
    fn imag_residue_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    // The f64 bound scaled to single-precision roundoff.
    fn imag_residue_tol() -> Self {
        1e-3
    }
}
