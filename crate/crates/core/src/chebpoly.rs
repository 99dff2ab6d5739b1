//! Chebyshev series `T(x; s) = sum_m s_m T_m(x)` and their global minimum on
//! `[-1, 1]` via colleague-matrix eigenvalues.

use crate::scalar::{Field, Real};
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChebError {
    #[error("evaluation point {0} lies outside [-1, 1]")]
    Domain(f64),
    #[error("eigenvalue iteration for the colleague matrix did not converge")]
    Eigen,
}

/// Real-root acceptance: `|Im| <= IMAG_TOL * max(1, |Re|)`.
pub const IMAG_TOL: f64 = 1e-8;
/// Roots up to this far outside `[-1, 1]` are clamped onto the interval.
pub const INTERVAL_TOL: f64 = 1e-10;
/// Critical points closer than this are merged.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Nearly-real eigenvalues (a split repeated root of `T'`) whose real part is
/// still worth evaluating.
const NEAR_REAL_TOL: f64 = 1e-4;

/// Coefficients `s_0..s_{k-1}` in the Chebyshev basis of the first kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebSeries<T> {
    pub coeffs: Vec<T>,
}

impl<T: Field> ChebSeries<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Index of the last nonzero coefficient (0 for the zero series).
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| !c.is_zero())
            .unwrap_or(0)
    }

    /// Series truncated to its true degree.
    pub fn trimmed(&self) -> Self {
        let n = self.degree();
        Self::new(self.coeffs.iter().take(n + 1).cloned().collect())
    }

    /// Evaluates at `x in [-1, 1]`.
    pub fn eval(&self, x: &T) -> Result<T, ChebError> {
        if *x > T::one() || *x < -T::one() {
            return Err(ChebError::Domain(x.approx()));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Clenshaw recurrence; valid for any `x`.
    pub fn eval_unchecked(&self, x: &T) -> T {
        let two_x = x.clone() + x.clone();
        let mut b1 = T::zero();
        let mut b2 = T::zero();
        for c in self.coeffs.iter().skip(1).rev() {
            let b0 = c.clone() + two_x.clone() * b1.clone() - b2;
            b2 = b1;
            b1 = b0;
        }
        match self.coeffs.first() {
            Some(c0) => c0.clone() + x.clone() * b1 - b2,
            None => T::zero(),
        }
    }

    /// Chebyshev coefficients of `T'(x)`, same length as `self`.
    pub fn derivative(&self) -> Self {
        let k = self.coeffs.len();
        let mut d = vec![T::zero(); k.max(1)];
        if k < 2 {
            return Self::new(d);
        }
        // d_{m-1} = (2 m s_m + d_{m+1}) / c_{m-1}, c_0 = 2, c_j = 1.
        let mut next = T::zero();
        for m in (1..k).rev() {
            let mut v = T::from_int(2 * m as i64) * self.coeffs[m].clone() + next.clone();
            if m == 1 {
                v = v / T::from_int(2);
            }
            next = d[m].clone();
            d[m - 1] = v;
        }
        Self::new(d)
    }
}

/// Free-function form of [`ChebSeries::eval`].
pub fn eval<T: Field>(series: &ChebSeries<T>, x: &T) -> Result<T, ChebError> {
    series.eval(x)
}

/// Free-function form of [`ChebSeries::derivative`].
pub fn derivative_coeffs<T: Field>(series: &ChebSeries<T>) -> ChebSeries<T> {
    series.derivative()
}

/// Colleague matrix of `sum_{j<=n} c_j T_j` (n >= 2, `c_n != 0`).
pub fn colleague_matrix(c: &[f64]) -> DMatrix<f64> {
    let n = c.len() - 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    m[(0, 1)] = 1.0;
    for i in 1..n {
        m[(i, i - 1)] = 0.5;
        if i + 1 < n {
            m[(i, i + 1)] = 0.5;
        }
    }
    let lead = c[n];
    for j in 0..n {
        m[(n - 1, j)] -= c[j] / (2.0 * lead);
    }
    m
}

/// Complex eigenvalues `(re, im)` of a real square matrix.
pub(crate) fn real_matrix_eigenvalues(m: DMatrix<f64>) -> Option<Vec<(f64, f64)>> {
    let n = m.nrows();
    let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 10_000 * n.max(1))?;
    Some(
        schur
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect(),
    )
}

/// Global minimum of a Chebyshev series on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinResult<T> {
    pub min_value: T,
    pub argmin: T,
    /// Candidate extrema including both endpoints, ascending.
    pub critical_points: Vec<T>,
}

/// Minimizes `T(x; s)` over `[-1, 1]`.
///
/// The roots of `T'` come from the colleague matrix (computed in double
/// precision); real roots inside the interval are Newton-polished,
/// merged, joined with `±1`, and the smallest value wins.
pub fn global_min<T: Real>(series: &ChebSeries<T>) -> Result<MinResult<T>, ChebError> {
    let s = series.trimmed();
    let n = s.degree();
    let mut candidates: Vec<f64> = vec![-1.0, 1.0];

    if n >= 1 {
        let d = s.derivative().trimmed();
        let dc: Vec<f64> = d.coeffs.iter().map(|c| c.approx()).collect();
        let dd = d.derivative();
        let dn = dc.len() - 1;
        let roots: Vec<(f64, f64)> = match dn {
            0 => Vec::new(),
            1 => vec![(-dc[0] / dc[1], 0.0)],
            _ => real_matrix_eigenvalues(colleague_matrix(&dc)).ok_or(ChebError::Eigen)?,
        };
        for (re, im) in roots {
            let scale = re.abs().max(1.0);
            let near_real = im.abs() <= NEAR_REAL_TOL * scale;
            if !near_real || re.abs() > 1.0 + NEAR_REAL_TOL {
                continue;
            }
            let accepted = im.abs() <= IMAG_TOL * scale && re.abs() <= 1.0 + INTERVAL_TOL;
            let x0 = re.clamp(-1.0, 1.0);
            let x = polish(&d, &dd, x0);
            if accepted || x != x0 {
                candidates.push(x);
            }
            candidates.push(x0);
        }
    }

    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite critical points"));
    let mut merged: Vec<f64> = Vec::with_capacity(candidates.len());
    for x in candidates {
        match merged.last() {
            Some(&last) if (x - last).abs() <= CLUSTER_TOL => {}
            _ => merged.push(x),
        }
    }
    if merged.last() != Some(&1.0) {
        // keep the right endpoint exact after merging
        if let Some(last) = merged.last_mut() {
            if (*last - 1.0).abs() <= CLUSTER_TOL {
                *last = 1.0;
            }
        }
    }

    let points: Vec<T> = merged.iter().map(|&x| T::lit(x)).collect();
    let mut best = 0;
    let mut best_val = s.eval_unchecked(&points[0]);
    for (i, x) in points.iter().enumerate().skip(1) {
        let v = s.eval_unchecked(x);
        if v < best_val {
            best = i;
            best_val = v;
        }
    }
    Ok(MinResult {
        min_value: best_val,
        argmin: points[best],
        critical_points: points,
    })
}

/// A few Newton steps on `T'`; keeps the start point unless the residual
/// strictly decreases and the iterate stays in `[-1, 1]`.
fn polish<T: Real>(d: &ChebSeries<T>, dd: &ChebSeries<T>, x0: f64) -> f64 {
    let dv = |x: f64| d.eval_unchecked(&T::lit(x)).approx();
    let ddv = |x: f64| dd.eval_unchecked(&T::lit(x)).approx();
    let mut x = x0;
    let mut r = dv(x).abs();
    for _ in 0..8 {
        let slope = ddv(x);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = x - dv(x) / slope;
        if !(-1.0..=1.0).contains(&next) {
            break;
        }
        let rn = dv(next).abs();
        if rn >= r {
            break;
        }
        x = next;
        r = rn;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{bdf_coefficients, reform};
    use crate::Rational;
    use num_traits::{ToPrimitive, Zero};

    fn bdf_a(k: usize) -> ChebSeries<Rational> {
        ChebSeries::new(reform(&bdf_coefficients(k).unwrap()).a)
    }

    fn to_f64(s: &ChebSeries<Rational>) -> ChebSeries<f64> {
        ChebSeries::new(s.coeffs.iter().map(|c| c.to_f64().unwrap()).collect())
    }

    #[test]
    fn bdf6_at_zero_is_exactly_minus_seven_fifteenths() {
        let v = bdf_a(6).eval(&Rational::zero()).unwrap();
        assert_eq!(v, Rational::from_ratio(-7, 15));
    }

    #[test]
    fn constant_series_is_constant() {
        let s = ChebSeries::new(vec![2.5, 0.0, 0.0, 0.0]);
        for x in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(s.eval(&x).unwrap(), 2.5);
        }
        let m = global_min(&s).unwrap();
        assert_eq!(m.min_value, 2.5);
        assert_eq!(m.argmin, -1.0);
    }

    #[test]
    fn domain_error_outside_interval() {
        let s = ChebSeries::new(vec![1.0, 1.0]);
        assert_eq!(s.eval(&1.5), Err(ChebError::Domain(1.5)));
    }

    #[test]
    fn bdf3_matches_monomial_form_exactly() {
        let x = Rational::from_ratio(7, 8);
        let expected = Rational::from_ratio(3, 2) - Rational::from_ratio(7, 6) * x.clone()
            + Rational::from_ratio(2, 3) * x.clone() * x.clone();
        assert_eq!(bdf_a(3).eval(&x).unwrap(), expected);
    }

    #[test]
    fn derivative_examples() {
        let d = ChebSeries::new(vec![0.0, 1.0]).derivative();
        assert_eq!(d.coeffs, vec![1.0, 0.0]);
        let d = ChebSeries::new(vec![0.0, 0.0, 1.0]).derivative();
        assert_eq!(d.coeffs, vec![0.0, 4.0, 0.0]);
        let d = bdf_a(3).derivative();
        assert_eq!(
            d.coeffs,
            vec![Rational::from_ratio(-7, 6), Rational::from_ratio(4, 3), Rational::zero()]
        );
    }

    #[test]
    fn bdf_minima() {
        let m2 = global_min(&to_f64(&bdf_a(2))).unwrap();
        assert!((m2.min_value - 1.0).abs() < 1e-14);
        assert_eq!(m2.argmin, 1.0);
        let m3 = global_min(&to_f64(&bdf_a(3))).unwrap();
        assert!((m3.min_value - 95.0 / 96.0).abs() < 1e-14);
        assert!((m3.argmin - 7.0 / 8.0).abs() < 1e-12);
        let m4 = global_min(&to_f64(&bdf_a(4))).unwrap();
        let exact4 = 664.0 / 729.0 - 43.0 * 43f64.sqrt() / 2916.0;
        assert!((m4.min_value - exact4).abs() < 1e-13);
        let m5 = global_min(&to_f64(&bdf_a(5))).unwrap();
        assert!((m5.min_value - 0.185546).abs() < 1e-6);
    }

    #[test]
    fn single_precision_path() {
        let s = ChebSeries::new(vec![11.0f32 / 6.0, -7.0 / 6.0, 1.0 / 3.0]);
        let m = global_min(&s).unwrap();
        assert!((m.min_value - 95.0 / 96.0).abs() < 1e-6);
    }

    #[test]
    fn min_result_invariants() {
        let s = ChebSeries::new(vec![0.3, -0.8, 0.5, 0.9, -0.2]);
        let m = global_min(&s).unwrap();
        assert!(m.critical_points.contains(&m.argmin));
        assert!(m.critical_points.contains(&-1.0) && m.critical_points.contains(&1.0));
        for x in &m.critical_points {
            assert!(s.eval(x).unwrap() >= m.min_value);
        }
    }

    #[test]
    fn quartic_flat_minimum() {
        // T_4 has minima -1 at x = ±1/sqrt(2); (T_4+1)^2-like flatness is
        // mimicked by x^4 = (3 T_0 + 4 T_2 + T_4) / 8, minimum 0 at x = 0.
        let s = ChebSeries::new(vec![3.0f64 / 8.0, 0.0, 0.5, 0.0, 1.0 / 8.0]);
        let m = global_min(&s).unwrap();
        assert!(m.min_value.abs() < 1e-12, "{}", m.min_value);
    }

    mod properties {
        use super::super::*;
        use proptest::prelude::*;

        fn dense_min(s: &ChebSeries<f64>, samples: usize) -> f64 {
            (0..=samples)
                .map(|i| s.eval_unchecked(&(-1.0 + 2.0 * i as f64 / samples as f64)))
                .fold(f64::INFINITY, f64::min)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn matches_dense_sampling(coeffs in prop::collection::vec(-1.0f64..1.0, 1..9)) {
                let s = ChebSeries::new(coeffs);
                let m = global_min(&s).unwrap();
                let dense = dense_min(&s, 1_000_000);
                prop_assert!((m.min_value - dense).abs() < 1e-9, "{} vs {dense}", m.min_value);
                prop_assert!((s.eval(&m.argmin).unwrap() - m.min_value).abs() < 1e-15);
            }

            #[test]
            fn cosine_identity(
                coeffs in prop::collection::vec(-1.0f64..1.0, 1..9),
                theta in 0.0f64..std::f64::consts::PI,
            ) {
                let s = ChebSeries::new(coeffs.clone());
                let direct: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, c)| c * (m as f64 * theta).cos())
                    .sum();
                prop_assert!((s.eval(&theta.cos()).unwrap() - direct).abs() < 1e-12);
            }

            #[test]
            fn derivative_matches_finite_differences(
                coeffs in prop::collection::vec(-1.0f64..1.0, 1..9),
                x in -0.99f64..0.99,
            ) {
                let s = ChebSeries::new(coeffs);
                let h = 1e-5;
                let fd = (s.eval_unchecked(&(x + h)) - s.eval_unchecked(&(x - h))) / (2.0 * h);
                let d = s.derivative().eval_unchecked(&x);
                prop_assert!((fd - d).abs() < 1e-6 * d.abs().max(1.0), "{fd} vs {d}");
            }

            #[test]
            fn exact_and_float_evaluation_agree(
                num in prop::collection::vec(-50i64..50, 1..8),
                xn in -16i64..=16,
            ) {
                let exact = ChebSeries::new(
                    num.iter().map(|&v| crate::Rational::from_ratio(v, 7)).collect::<Vec<_>>(),
                );
                let float = ChebSeries::new(num.iter().map(|&v| v as f64 / 7.0).collect::<Vec<_>>());
                let x = crate::Rational::from_ratio(xn, 16);
                let e = exact.eval(&x).unwrap().approx();
                let f = float.eval(&(xn as f64 / 16.0)).unwrap();
                prop_assert!((e - f).abs() < 1e-12);
            }
        }
    }
}
