//! Scalar abstractions shared by the exact and floating-point code paths.
//!
//! [`Field`] covers everything the coefficient algebra needs (Vandermonde
//! solves, cumulative sums, Chebyshev recurrences) and is implemented for
//! `f32`, `f64`, [`BigRational`] and the quadratic extension
//! [`QuadExt`](crate::quadext::QuadExt). [`Real`] is the floating-point
//! subset used by routines that need roots, square roots or eigenvalues.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// An ordered field, exact or approximate.
pub trait Field:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Embeds an integer.
    fn from_int(v: i64) -> Self;

    /// Embeds a ratio of integers.
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    /// Nearest `f64`, used for pivoting and reporting.
    fn approx(&self) -> f64;

    /// Absolute value.
    fn magnitude(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl Field for f64 {
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn approx(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn from_int(v: i64) -> Self {
        v as f32
    }
    fn approx(&self) -> f64 {
        *self as f64
    }
}

impl Field for BigRational {
    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn magnitude(&self) -> Self {
        self.abs()
    }
}

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float + FromPrimitive + Field + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }
}

impl Real for f64 {}
impl Real for f32 {}
