//! IMEX linear multistep coefficient tables.
//!
//! A k-step scheme advances `sum_i A_i u^{n+1-i} = tau M [sum_i B_i L u^{n+1-i}
//! + sum_{i>=1} Bhat_i f(u^{n+1-i})]`. Tables are built and checked in exact
//! rational arithmetic; every routine is generic over [`Field`] so the same
//! code runs in `f64` inside the feasibility search.

use crate::linalg::{self, SingularMatrix};
use crate::scalar::Field;
use crate::Rational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("BDF order {0} is outside 1..=6")]
    BdfOrder(usize),
    #[error("scheme needs at least one step")]
    EmptyParameters,
    #[error("coefficient vector {name} has length {got}, expected {expected}")]
    Length {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("implicit coefficient {0} is zero")]
    DegenerateImplicit(&'static str),
    #[error(transparent)]
    Singular(#[from] SingularMatrix),
    #[error("invalid fraction {0:?}")]
    Fraction(String),
    #[error("malformed scheme JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// The coefficient table `(k, A, B, Bhat)` of a k-step IMEX-LMM.
///
/// `alpha` holds `A_0..A_k`, `beta` holds `B_0..B_k` and `beta_hat` holds
/// `Bhat_1..Bhat_k` (there is no explicit weight on the new level).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCoefficients<T> {
    pub k: usize,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub beta_hat: Vec<T>,
}

/// Cumulative-sum form used by the energy analysis.
///
/// `b_hat` has length k with a trailing zero; `c_hat` has length k-1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReformedCoefficients<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub b_hat: Vec<T>,
    pub c_hat: Vec<T>,
}

/// Free parameters `w_1..w_k` of a k-step scheme; `w_0 = 1` is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T> {
    pub w: Vec<T>,
}

impl<T: Field> ParameterVector<T> {
    pub fn new(w: Vec<T>) -> Self {
        Self { w }
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    /// `[w_0, w_1, ..., w_{k-1}]`.
    fn moments(&self) -> Vec<T> {
        let mut m = Vec::with_capacity(self.k());
        m.push(T::one());
        m.extend(self.w[..self.k() - 1].iter().cloned());
        m
    }
}

impl<T: Field> SchemeCoefficients<T> {
    pub fn new(k: usize, alpha: Vec<T>, beta: Vec<T>, beta_hat: Vec<T>) -> Result<Self, SchemeError> {
        if k == 0 {
            return Err(SchemeError::EmptyParameters);
        }
        for (name, v, expected) in [
            ("A", &alpha, k + 1),
            ("B", &beta, k + 1),
            ("Bhat", &beta_hat, k),
        ] {
            if v.len() != expected {
                return Err(SchemeError::Length {
                    name,
                    got: v.len(),
                    expected,
                });
            }
        }
        if alpha[0].is_zero() {
            return Err(SchemeError::DegenerateImplicit("A_0"));
        }
        if beta[0].is_zero() {
            return Err(SchemeError::DegenerateImplicit("B_0"));
        }
        Ok(Self {
            k,
            alpha,
            beta,
            beta_hat,
        })
    }

    /// Maps every coefficient through `f`.
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> SchemeCoefficients<U> {
        SchemeCoefficients {
            k: self.k,
            alpha: self.alpha.iter().map(&f).collect(),
            beta: self.beta.iter().map(&f).collect(),
            beta_hat: self.beta_hat.iter().map(&f).collect(),
        }
    }

    pub fn to_f64(&self) -> SchemeCoefficients<f64> {
        self.map(|x| x.approx())
    }

    /// Recovers the parameter vector from the moment sums:
    /// `w_m = sum_i A_i (-i)^{m+1}` for `1 <= m < k` and `w_k = B_k`.
    pub fn parameters(&self) -> ParameterVector<T> {
        let k = self.k;
        let mut w = Vec::with_capacity(k);
        for m in 1..k {
            w.push(moment(&self.alpha, 0, m + 1));
        }
        w.push(self.beta[k].clone());
        ParameterVector { w }
    }
}

/// `sum_i c_i (-(i + offset))^power`.
fn moment<T: Field>(c: &[T], offset: usize, power: usize) -> T {
    c.iter().enumerate().fold(T::zero(), |acc, (i, ci)| {
        let node = T::from_int(-((i + offset) as i64));
        acc + ci.clone() * pow(&node, power)
    })
}

fn pow<T: Field>(x: &T, e: usize) -> T {
    (0..e).fold(T::one(), |acc, _| acc * x.clone())
}

/// IMEX-BDFk: `B = e_0`, with `A` and `Bhat` fixed by the order conditions.
pub fn bdf_coefficients(k: usize) -> Result<SchemeCoefficients<Rational>, SchemeError> {
    if !(1..=6).contains(&k) {
        return Err(SchemeError::BdfOrder(k));
    }
    let mut beta = vec![Rational::zero(); k + 1];
    beta[0] = Rational::one();

    // sum A_i = 0, sum A_i (-i)^{m+1} = (m+1) * delta_{m,0}.
    let w1 = linalg::vandermonde_transposed(&nodes::<Rational>(0, k));
    let mut rhs = vec![Rational::zero(); k + 1];
    rhs[1] = Rational::one();
    let alpha = linalg::solve(&w1, &rhs)?;

    // sum Bhat_i (-i)^m = delta_{m,0}.
    let w3 = linalg::vandermonde_transposed(&nodes::<Rational>(1, k));
    let mut rhs = vec![Rational::zero(); k];
    rhs[0] = Rational::one();
    let beta_hat = linalg::solve(&w3, &rhs)?;

    SchemeCoefficients::new(k, alpha, beta, beta_hat)
}

/// Nodes `-from, -(from+1), ..., -to`.
fn nodes<T: Field>(from: usize, to: usize) -> Vec<T> {
    (from..=to).map(|i| T::from_int(-(i as i64))).collect()
}

/// Builds the scheme whose moment sums equal the given parameters.
///
/// Solves `W_1 A = [0; w~]`, `W_2 B = D_k w~ - w_k z` (with `B_k = w_k`) and
/// `W_3 Bhat = D_k w~`, where `W_1`, `W_2`, `W_3` are transposed Vandermonde
/// matrices at `(0..-k)`, `(0..-k+1)` and `(-1..-k)`.
pub fn lmm_from_parameters<T: Field>(
    w: &ParameterVector<T>,
) -> Result<SchemeCoefficients<T>, SchemeError> {
    let k = w.k();
    if k == 0 {
        return Err(SchemeError::EmptyParameters);
    }
    let moments = w.moments();
    let wk = w.w[k - 1].clone();

    let w1 = linalg::vandermonde_transposed(&nodes::<T>(0, k));
    let mut rhs = vec![T::zero()];
    rhs.extend(moments.iter().cloned());
    let alpha = linalg::solve(&w1, &rhs)?;

    let scaled: Vec<T> = moments
        .iter()
        .enumerate()
        .map(|(m, wm)| wm.clone() / T::from_int(m as i64 + 1))
        .collect();

    let w2 = linalg::vandermonde_transposed(&nodes::<T>(0, k - 1));
    let neg_k = T::from_int(-(k as i64));
    let rhs: Vec<T> = scaled
        .iter()
        .enumerate()
        .map(|(m, d)| d.clone() - wk.clone() * pow(&neg_k, m))
        .collect();
    let mut beta = linalg::solve(&w2, &rhs)?;
    beta.push(wk);

    let w3 = linalg::vandermonde_transposed(&nodes::<T>(1, k));
    let beta_hat = linalg::solve(&w3, &scaled)?;

    SchemeCoefficients::new(k, alpha, beta, beta_hat)
}

/// Cumulative sums `a`, `b`, `b_hat` and the tail sums `c_hat`.
pub fn reform<T: Field>(s: &SchemeCoefficients<T>) -> ReformedCoefficients<T> {
    let k = s.k;
    let half = T::from_ratio(1, 2);

    let mut a = Vec::with_capacity(k);
    let mut acc = T::zero();
    for ai in &s.alpha[..k] {
        acc = acc + ai.clone();
        a.push(acc.clone());
    }

    let mut b = Vec::with_capacity(k);
    let mut acc = T::zero();
    for (i, bi) in s.beta[..k].iter().enumerate() {
        acc = acc + bi.clone();
        let mut v = acc.clone() - T::one();
        if i == 0 {
            v = v + half.clone();
        }
        b.push(v);
    }

    let mut b_hat = Vec::with_capacity(k);
    let mut acc = T::zero();
    for bh in &s.beta_hat[..k - 1] {
        acc = acc + bh.clone();
        b_hat.push(acc.clone() - T::one());
    }
    b_hat.push(T::zero());

    let mut c_hat = vec![T::zero(); k - 1];
    let mut tail = T::zero();
    for i in (0..k - 1).rev() {
        tail = tail + b_hat[i].magnitude();
        c_hat[i] = tail.clone() * half.clone();
    }

    ReformedCoefficients { a, b, b_hat, c_hat }
}

/// Residuals of the order conditions at one moment index `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderResidual<T> {
    pub m: usize,
    /// `sum A_i (-i)^{m+1} - (m+1) sum B_i (-i)^m`
    pub implicit: T,
    /// `sum A_i (-i)^{m+1} - (m+1) sum Bhat_i (-i)^m`
    pub explicit: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport<T> {
    /// Largest `p` such that consistency and all conditions `m < p` hold.
    pub order: usize,
    /// `sum A_i`
    pub consistency: T,
    pub residuals: Vec<OrderResidual<T>>,
    /// `sum A_i (-i) - 1`, `sum B_i - 1`, `sum Bhat_i - 1`.
    pub normalization: [T; 3],
}

impl<T: Field> OrderReport<T> {
    pub fn is_normalized(&self) -> bool {
        self.normalization.iter().all(|r| r.is_zero())
    }
}

/// Evaluates the order conditions for `m = 0..=k` exactly.
pub fn verify_order_conditions<T: Field>(s: &SchemeCoefficients<T>) -> OrderReport<T> {
    let k = s.k;
    let consistency = s.alpha.iter().cloned().fold(T::zero(), |a, b| a + b);
    let mut residuals = Vec::with_capacity(k + 1);
    for m in 0..=k {
        let lhs = moment(&s.alpha, 0, m + 1);
        let scale = T::from_int(m as i64 + 1);
        let implicit = lhs.clone() - scale.clone() * moment(&s.beta, 0, m);
        let explicit = lhs - scale * moment(&s.beta_hat, 1, m);
        residuals.push(OrderResidual {
            m,
            implicit,
            explicit,
        });
    }
    let order = if consistency.is_zero() {
        residuals
            .iter()
            .take_while(|r| r.implicit.is_zero() && r.explicit.is_zero())
            .count()
    } else {
        0
    };
    let sum = |v: &[T]| v.iter().cloned().fold(T::zero(), |a, b| a + b);
    let normalization = [
        moment(&s.alpha, 0, 1) - T::one(),
        sum(&s.beta) - T::one(),
        sum(&s.beta_hat) - T::one(),
    ];
    OrderReport {
        order,
        consistency,
        residuals,
        normalization,
    }
}

/// Parameters of the sixth-order energy-dissipative scheme.
pub fn lmm6_parameters() -> ParameterVector<Rational> {
    ParameterVector::new(vec![
        Rational::from_ratio(64, 5),
        Rational::from_ratio(-141, 5),
        Rational::from_int(111),
        Rational::from_int(-1034),
        Rational::from_int(9886),
        Rational::from_ratio(-23, 100),
    ])
}

/// The sixth-order energy-dissipative IMEX-LMM.
pub fn lmm6() -> SchemeCoefficients<Rational> {
    lmm_from_parameters(&lmm6_parameters()).expect("Vandermonde systems are nonsingular")
}

#[derive(Serialize, Deserialize)]
struct SchemeJson {
    k: usize,
    #[serde(rename = "A")]
    alpha: Vec<String>,
    #[serde(rename = "B")]
    beta: Vec<String>,
    #[serde(rename = "Bhat")]
    beta_hat: Vec<String>,
}

pub fn parse_fraction(s: &str) -> Result<Rational, SchemeError> {
    Rational::from_str(s.trim()).map_err(|_| SchemeError::Fraction(s.to_string()))
}

impl SchemeCoefficients<Rational> {
    /// `{"k": .., "A": ["2617/200", ..], "B": [..], "Bhat": [..]}`
    pub fn to_json(&self) -> String {
        let doc = SchemeJson {
            k: self.k,
            alpha: self.alpha.iter().map(|x| x.to_string()).collect(),
            beta: self.beta.iter().map(|x| x.to_string()).collect(),
            beta_hat: self.beta_hat.iter().map(|x| x.to_string()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plain strings serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, SchemeError> {
        let doc: SchemeJson = serde_json::from_str(text)?;
        let parse = |v: &[String]| v.iter().map(|s| parse_fraction(s)).collect::<Result<Vec<_>, _>>();
        Self::new(doc.k, parse(&doc.alpha)?, parse(&doc.beta)?, parse(&doc.beta_hat)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn qs(v: &[(i64, i64)]) -> Vec<Rational> {
        v.iter().map(|&(n, d)| q(n, d)).collect()
    }

    #[test]
    fn bdf_out_of_range() {
        assert!(matches!(bdf_coefficients(0), Err(SchemeError::BdfOrder(0))));
        assert!(matches!(bdf_coefficients(7), Err(SchemeError::BdfOrder(7))));
    }

    #[test]
    fn bdf1_and_bdf2_reformed() {
        let r1 = reform(&bdf_coefficients(1).unwrap());
        assert_eq!(r1.a, qs(&[(1, 1)]));
        assert_eq!(r1.b, qs(&[(1, 2)]));
        assert_eq!(r1.b_hat, qs(&[(0, 1)]));
        assert!(r1.c_hat.is_empty());

        let r2 = reform(&bdf_coefficients(2).unwrap());
        assert_eq!(r2.a, qs(&[(3, 2), (-1, 2)]));
        assert_eq!(r2.b_hat[..1], qs(&[(1, 1)])[..]);
    }

    #[test]
    fn bdf3_reformed_with_c_hat() {
        let r = reform(&bdf_coefficients(3).unwrap());
        assert_eq!(r.a, qs(&[(11, 6), (-7, 6), (1, 3)]));
        assert_eq!(r.b_hat, qs(&[(2, 1), (-1, 1), (0, 1)]));
        assert_eq!(r.c_hat, qs(&[(3, 2), (1, 2)]));
    }

    #[test]
    fn one_step_parameters_give_euler_splitting() {
        let s = lmm_from_parameters(&ParameterVector::new(vec![q(0, 1)])).unwrap();
        assert_eq!(s.alpha, qs(&[(1, 1), (-1, 1)]));
        assert_eq!(s.beta, qs(&[(1, 1), (0, 1)]));
        assert_eq!(s.beta_hat, qs(&[(1, 1)]));
    }

    #[test]
    fn zero_parameters_reproduce_bdf2() {
        // Hand solution of the three Vandermonde systems at k = 2, w = 0.
        let s = lmm_from_parameters(&ParameterVector::new(vec![q(0, 1), q(0, 1)])).unwrap();
        assert_eq!(s.alpha, qs(&[(3, 2), (-2, 1), (1, 2)]));
        assert_eq!(s.beta, qs(&[(1, 1), (0, 1), (0, 1)]));
        assert_eq!(s.beta_hat, qs(&[(2, 1), (-1, 1)]));
    }

    #[test]
    fn lmm6_table() {
        let s = lmm6();
        assert_eq!(
            s.alpha,
            qs(&[(2617, 200), (-6897, 200), (4481, 120), (-319, 12), (647, 40), (-4231, 600), (911, 600)])
        );
        assert_eq!(
            s.beta,
            qs(&[(1525, 288), (-2999, 7200), (-4001, 720), (79, 144), (557, 288), (-827, 1440), (-23, 100)])
        );
        assert_eq!(
            s.beta_hat,
            qs(&[(225751, 7200), (-122377, 1440), (15329, 144), (-11159, 144), (44923, 1440), (-39781, 7200)])
        );
        let r = reform(&s);
        assert_eq!(r.a, qs(&[(2617, 200), (-107, 5), (1913, 120), (-1277, 120), (83, 15), (-911, 600)]));
        assert_eq!(
            r.b,
            qs(&[(1381, 288), (13963, 3600), (-1007, 600), (-4067, 3600), (5791, 7200), (23, 100)])
        );
        assert_eq!(
            r.b_hat,
            qs(&[(218551, 7200), (-196667, 3600), (31093, 600), (-92417, 3600), (39781, 7200), (0, 1)])
        );
    }

    #[test]
    fn order_reports() {
        let r = verify_order_conditions(&lmm6());
        assert_eq!(r.order, 6);
        assert!(r.is_normalized());
        assert!(r.residuals[..6].iter().all(|x| x.implicit.is_zero() && x.explicit.is_zero()));

        assert_eq!(verify_order_conditions(&bdf_coefficients(6).unwrap()).order, 6);

        let mut broken = bdf_coefficients(2).unwrap();
        broken.alpha[0] += q(1, 1);
        let r = verify_order_conditions(&broken);
        assert_eq!(r.order, 0);
        assert_eq!(r.consistency, q(1, 1));
    }

    #[test]
    fn json_round_trip() {
        let s = lmm6();
        let text = s.to_json();
        assert!(text.contains("\"2617/200\""));
        assert_eq!(SchemeCoefficients::from_json(&text).unwrap(), s);
    }

    #[test]
    fn json_rejects_bad_fraction() {
        let text = r#"{"k":1,"A":["1","x"],"B":["1","0"],"Bhat":["1"]}"#;
        assert!(matches!(
            SchemeCoefficients::from_json(text),
            Err(SchemeError::Fraction(_))
        ));
    }

    #[test]
    fn degenerate_implicit_rejected() {
        let r = SchemeCoefficients::new(1, qs(&[(0, 1), (0, 1)]), qs(&[(1, 1), (0, 1)]), qs(&[(1, 1)]));
        assert!(matches!(r, Err(SchemeError::DegenerateImplicit("A_0"))));
    }

    fn arb_params() -> impl Strategy<Value = ParameterVector<Rational>> {
        (1usize..=7).prop_flat_map(|k| {
            prop::collection::vec((-200i64..200, 1i64..30), k)
                .prop_map(|v| ParameterVector::new(v.into_iter().map(|(n, d)| q(n, d)).collect()))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn parameters_round_trip(w in arb_params()) {
            let s = lmm_from_parameters(&w).unwrap();
            let report = verify_order_conditions(&s);
            prop_assert!(report.order >= s.k);
            prop_assert!(report.is_normalized());
            prop_assert_eq!(s.parameters(), w);
        }

        #[test]
        fn last_explicit_difference_is_minus_last_weight(w in arb_params()) {
            let s = lmm_from_parameters(&w).unwrap();
            let k = s.k;
            let partial = s.beta_hat[..k - 1].iter().cloned().fold(q(0, 1), |a, b| a + b) - q(1, 1);
            prop_assert_eq!(partial, -s.beta_hat[k - 1].clone());
            let r = reform(&s);
            prop_assert!(r.c_hat.windows(2).all(|p| p[0] >= p[1]));
            prop_assert!(r.c_hat.iter().all(|c| *c >= q(0, 1)));
        }
    }
}
