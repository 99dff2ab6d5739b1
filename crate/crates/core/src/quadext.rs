//! Exact arithmetic in the real quadratic field Q(sqrt(3)).

use crate::scalar::Field;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// `rational + irrational * sqrt(3)` with both parts in Q.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadExt {
    pub rational: BigRational,
    pub irrational: BigRational,
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl QuadExt {
    pub fn new(rational: BigRational, irrational: BigRational) -> Self {
        Self {
            rational,
            irrational,
        }
    }

    /// `(a + b sqrt(3)) / d` from integers.
    pub fn from_ints(a: i64, b: i64, d: i64) -> Self {
        Self::new(rat(a, d), rat(b, d))
    }

    pub fn sqrt3() -> Self {
        Self::new(BigRational::zero(), BigRational::one())
    }

    pub fn from_rational(r: BigRational) -> Self {
        Self::new(r, BigRational::zero())
    }

    /// Galois conjugate `a - b sqrt(3)`.
    pub fn conjugate(&self) -> Self {
        Self::new(self.rational.clone(), -self.irrational.clone())
    }

    /// Field norm `a^2 - 3 b^2`.
    pub fn norm(&self) -> BigRational {
        &self.rational * &self.rational
            - BigRational::from_integer(BigInt::from(3)) * &self.irrational * &self.irrational
    }

    /// Exact sign of `a + b sqrt(3)`.
    pub fn signum(&self) -> Ordering {
        let a = &self.rational;
        let b = &self.irrational;
        let sa = a.cmp(&BigRational::zero());
        let sb = b.cmp(&BigRational::zero());
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (x, y) if x == y => x,
            // Opposite signs: the term with the larger square wins.
            (sa, _) => {
                let a2 = a * a;
                let b2 = BigRational::from_integer(BigInt::from(3)) * b * b;
                match a2.cmp(&b2) {
                    Ordering::Greater => sa,
                    Ordering::Less => sa.reverse(),
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }

    pub fn is_positive(&self) -> bool {
        self.signum() == Ordering::Greater
    }

    pub fn is_negative(&self) -> bool {
        self.signum() == Ordering::Less
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.norm();
        if n.is_zero() {
            return None;
        }
        Some(Self::new(
            &self.rational / &n,
            -(&self.irrational / &n),
        ))
    }

    pub fn to_f64(&self) -> f64 {
        self.rational.to_f64().unwrap_or(f64::NAN)
            + self.irrational.to_f64().unwrap_or(f64::NAN) * 3f64.sqrt()
    }
}

impl fmt::Display for QuadExt {
    /// Formats as `p/q + r/s·sqrt(3)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}·sqrt(3)", self.rational, self.irrational)
    }
}

impl Add for QuadExt {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.rational + o.rational, self.irrational + o.irrational)
    }
}

impl Sub for QuadExt {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.rational - o.rational, self.irrational - o.irrational)
    }
}

impl Mul for QuadExt {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let three = BigRational::from_integer(BigInt::from(3));
        let r = &self.rational * &o.rational + three * &self.irrational * &o.irrational;
        let i = &self.rational * &o.irrational + &self.irrational * &o.rational;
        Self::new(r, i)
    }
}

impl Div for QuadExt {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.inverse().expect("division by zero in Q(sqrt 3)")
    }
}

impl Neg for QuadExt {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.rational, -self.irrational)
    }
}

impl Zero for QuadExt {
    fn zero() -> Self {
        Self::new(BigRational::zero(), BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.irrational.is_zero()
    }
}

impl One for QuadExt {
    fn one() -> Self {
        Self::new(BigRational::one(), BigRational::zero())
    }
}

impl PartialOrd for QuadExt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some((self.clone() - other.clone()).signum())
    }
}

impl FromPrimitive for QuadExt {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Self::from_rational(BigRational::from_integer(BigInt::from(n))))
    }
    fn from_u64(n: u64) -> Option<Self> {
        Some(Self::from_rational(BigRational::from_integer(BigInt::from(n))))
    }
}

impl Field for QuadExt {
    fn from_int(v: i64) -> Self {
        Self::from_rational(BigRational::from_integer(BigInt::from(v)))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(rat(num, den))
    }
    fn approx(&self) -> f64 {
        self.to_f64()
    }
    fn magnitude(&self) -> Self {
        if self.is_negative() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl From<BigRational> for QuadExt {
    fn from(r: BigRational) -> Self {
        Self::from_rational(r)
    }
}
