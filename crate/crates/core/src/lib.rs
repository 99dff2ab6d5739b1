//! Energy-dissipative IMEX linear multistep methods for gradient flows.
//!
//! The algebraic layer (scheme coefficients, Chebyshev series, the Gram
//! recovery of a dissipation certificate) is generic over [`scalar::Field`]
//! so it runs in exact rationals as well as `f32`/`f64`. Eigenvalue work,
//! stability scans and the spectral PDE solver are `f64`.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod certify;
pub mod chebpoly;
pub mod linalg;
pub mod pde;
pub mod poly;
pub mod quadext;
pub mod scalar;
pub mod schemes;
pub mod stability;

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;
/// Scheme with exact rational coefficients.
pub type Scheme = schemes::SchemeCoefficients<Rational>;
/// Scheme with double-precision coefficients.
pub type SchemeF64 = schemes::SchemeCoefficients<f64>;
/// Chebyshev series in double precision.
pub type ChebSeriesF64 = chebpoly::ChebSeries<f64>;
/// Chebyshev series with exact rational coefficients.
pub type ExactChebSeries = chebpoly::ChebSeries<Rational>;

pub use quadext::QuadExt;
pub use scalar::{Field, Real};
