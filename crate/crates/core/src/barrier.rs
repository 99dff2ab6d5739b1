//! Feasibility of energy-dissipative schemes in parameter space: evaluation
//! and search for a given step count, and the exact Farkas certificate that
//! rules out seventh order.

use crate::chebpoly::{global_min, ChebError, ChebSeries};
use crate::linalg::{self, Matrix, SingularMatrix};
use crate::quadext::QuadExt;
use crate::scalar::Field;
use crate::schemes::{lmm_from_parameters, lmm6_parameters, reform, ParameterVector, SchemeError};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Cheb(#[from] ChebError),
    #[error(transparent)]
    Singular(#[from] SingularMatrix),
    #[error("Chebyshev nodes cos(j pi / {0}) are not all in Q(sqrt(3)); supported k are 2, 3, 4, 7")]
    UnsupportedK(usize),
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub min_a: f64,
    pub min_b: f64,
    pub feasible: bool,
}

/// Minima of `T(x; a)` and `T(x; b)` for the scheme with parameters `w`.
pub fn evaluate_feasibility<T: Field>(w: &ParameterVector<T>) -> Result<Feasibility, BarrierError> {
    let r = reform(&lmm_from_parameters(w)?);
    let a = ChebSeries::new(r.a.iter().map(Field::approx).collect());
    let b = ChebSeries::new(r.b.iter().map(Field::approx).collect());
    let min_a = global_min(&a)?.min_value;
    let min_b = global_min(&b)?.min_value;
    Ok(Feasibility {
        min_a,
        min_b,
        feasible: min_a > 0.0 && min_b > 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub k: usize,
    pub w: Vec<f64>,
    pub min_a: f64,
    pub min_b: f64,
    pub feasible: bool,
    pub objective: f64,
    pub evaluations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub restarts: usize,
    /// Objective is `min(min_a, min_b / kappa)`.
    pub kappa: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            kappa: 1.0,
        }
    }
}

fn objective(w: &[f64], kappa: f64) -> (f64, Option<Feasibility>) {
    match evaluate_feasibility(&ParameterVector::new(w.to_vec())) {
        Ok(f) if f.min_a.is_finite() && f.min_b.is_finite() => (f.min_a.min(f.min_b / kappa), Some(f)),
        _ => (f64::NEG_INFINITY, None),
    }
}

/// Multi-start compass search maximizing `min(min_a, min_b / kappa)`, using
/// at most `budget` objective evaluations (the start point always counts).
pub fn search_feasible(k: usize, budget: usize, seed: u64) -> SearchResult {
    search_feasible_with(k, budget, seed, SearchOptions::default())
}

pub fn search_feasible_with(k: usize, budget: usize, seed: u64, opts: SearchOptions) -> SearchResult {
    assert!(k >= 1, "k must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = if k == 6 {
        lmm6_parameters().w.iter().map(Field::approx).collect()
    } else {
        vec![0.0; k]
    };
    let scales: Vec<f64> = start.iter().map(|v| v.abs().max(1.0)).collect();

    let (f0, feas0) = objective(&start, opts.kappa);
    let mut best = (start.clone(), f0, feas0);
    let mut evaluations = 1usize;
    let restarts = opts.restarts.max(1);
    let per_restart = (budget.saturating_sub(1) / restarts).max(1);

    for r in 0..restarts {
        if evaluations >= budget {
            break;
        }
        let mut x: Vec<f64> = if r == 0 {
            best.0.clone()
        } else {
            // Perturb the incumbent; later restarts reach further out.
            let spread = 0.05 * (1.0 + r as f64);
            best.0
                .iter()
                .zip(&scales)
                .map(|(v, s)| v + spread * s * rng.gen_range(-1.0..1.0))
                .collect()
        };
        let (mut fx, mut feas) = objective(&x, opts.kappa);
        evaluations += 1;
        let mut step: Vec<f64> = scales.iter().map(|s| 0.1 * s).collect();
        let mut used = 1usize;
        while used < per_restart && evaluations < budget {
            let polls: Vec<Vec<f64>> = (0..(2 * k).min(budget - evaluations))
                .map(|d| {
                    let mut y = x.clone();
                    let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
                    y[d / 2] += sign * step[d / 2];
                    y
                })
                .collect();
            let values: Vec<(f64, Option<Feasibility>)> =
                polls.par_iter().map(|y| objective(y, opts.kappa)).collect();
            used += polls.len();
            evaluations += polls.len();
            let winner = values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.0 > fx)
                .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                .map(|(i, _)| i);
            match winner {
                Some(i) => {
                    x = polls[i].clone();
                    fx = values[i].0;
                    feas = values[i].1;
                }
                None => {
                    step.iter_mut().for_each(|s| *s *= 0.5);
                    if step.iter().zip(&scales).all(|(s, sc)| *s < 1e-12 * sc) {
                        break;
                    }
                }
            }
        }
        if fx > best.1 {
            best = (x, fx, feas);
        }
    }

    let (w, obj, feas) = best;
    let f = feas.unwrap_or(Feasibility {
        min_a: f64::NEG_INFINITY,
        min_b: f64::NEG_INFINITY,
        feasible: false,
    });
    SearchResult {
        k,
        w,
        min_a: f.min_a,
        min_b: f.min_b,
        feasible: f.feasible,
        objective: obj,
        evaluations,
        seed,
    }
}

/// `Q w <= q` encodes nonnegativity of `T(.; a)` and `T(.; b)` at the `k`
/// Chebyshev extreme points.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasSystem {
    pub k: usize,
    /// `2k x k`: rows `0..k` from `a`, rows `k..2k` from `b`.
    pub q_matrix: Matrix<QuadExt>,
    pub q_vector: Vec<QuadExt>,
}

impl FarkasSystem {
    pub fn q1(&self) -> &[Vec<QuadExt>] {
        &self.q_matrix[..self.k]
    }

    pub fn q2(&self) -> &[Vec<QuadExt>] {
        &self.q_matrix[self.k..]
    }

    /// `q - Q w` (nonnegative entrywise iff `w` passes every node test).
    pub fn slack(&self, w: &[QuadExt]) -> Vec<QuadExt> {
        let qw = linalg::mat_vec(&self.q_matrix, w);
        self.q_vector
            .iter()
            .zip(qw)
            .map(|(q, v)| q.clone() - v)
            .collect()
    }
}

/// `cos(d degrees)` for `d` a multiple of 30 or 45 that lands in Q(sqrt(3)).
fn cos_degrees(d: i64) -> Option<QuadExt> {
    let d = d.rem_euclid(360);
    let v = match d {
        0 => QuadExt::from_ints(1, 0, 1),
        30 | 330 => QuadExt::from_ints(0, 1, 2),
        60 | 300 => QuadExt::from_ints(1, 0, 2),
        90 | 270 => QuadExt::from_ints(0, 0, 1),
        120 | 240 => QuadExt::from_ints(-1, 0, 2),
        150 | 210 => QuadExt::from_ints(0, -1, 2),
        180 => QuadExt::from_ints(-1, 0, 1),
        _ => return None,
    };
    Some(v)
}

/// `Z_{j,m} = T_m(cos(j pi / (k-1)))`.
fn chebyshev_node_matrix(k: usize) -> Result<Matrix<QuadExt>, BarrierError> {
    if k < 2 || 180 % (k - 1) != 0 {
        return Err(BarrierError::UnsupportedK(k));
    }
    let unit = 180 / (k as i64 - 1);
    (0..k)
        .map(|j| {
            (0..k)
                .map(|m| cos_degrees(unit * (j * m) as i64).ok_or(BarrierError::UnsupportedK(k)))
                .collect()
        })
        .collect()
}

fn q_int(n: i64) -> QuadExt {
    QuadExt::from_ints(n, 0, 1)
}

/// Assembles `Q` and `q` exactly; supported for `k` in {2, 3, 4, 7}.
pub fn build_farkas_system(k: usize) -> Result<FarkasSystem, BarrierError> {
    let z = chebyshev_node_matrix(k)?;
    let zero = QuadExt::zero;
    let nodes = |from: i64, to: i64| -> Vec<QuadExt> { (from..=to).map(|i| q_int(-i)).collect() };
    let e_k: Matrix<QuadExt> = linalg::lower_ones(k);

    // Rows of a: [E_k, 0] W1^{-1}, a k x (k+1) map applied to [0; w~].
    let w1_inv = linalg::inverse(&linalg::vandermonde_transposed(&nodes(0, k as i64)))?;
    let e_pad: Matrix<QuadExt> = e_k
        .iter()
        .map(|row| row.iter().cloned().chain(std::iter::once(zero())).collect())
        .collect();
    let za = linalg::mat_mul(&z, &linalg::mat_mul(&e_pad, &w1_inv));
    // [0; w~] = [0; 1; w_1..w_{k-1}], so w_m hits column m + 1.
    let mut q_matrix = Vec::with_capacity(2 * k);
    let mut q_vector = Vec::with_capacity(2 * k);
    for row in &za {
        let mut r: Vec<QuadExt> = (0..k - 1).map(|m| -row[m + 2].clone()).collect();
        r.push(zero());
        q_matrix.push(r);
        q_vector.push(row[1].clone());
    }

    // Rows of b: Z E_k W2^{-1} (D_k w~ - w_k z) - Z [1/2, 1, ..].
    let w2_inv = linalg::inverse(&linalg::vandermonde_transposed(&nodes(0, k as i64 - 1)))?;
    let zb = linalg::mat_mul(&z, &linalg::mat_mul(&e_k, &w2_inv));
    let mut offset = vec![q_int(1); k];
    offset[0] = QuadExt::from_ints(1, 0, 2);
    let z_offset = linalg::mat_vec(&z, &offset);
    let zpow: Vec<QuadExt> = {
        let mut v = Vec::with_capacity(k);
        let mut acc = q_int(1);
        for _ in 0..k {
            v.push(acc.clone());
            acc = acc * q_int(-(k as i64));
        }
        v
    };
    for (row, off) in zb.iter().zip(z_offset) {
        // coefficient of w_m (m < k) is row[m] / (m + 1); of w_k is -row . z
        let mut r: Vec<QuadExt> = (1..k)
            .map(|m| -(row[m].clone() / q_int(m as i64 + 1)))
            .collect();
        let dot = row
            .iter()
            .zip(&zpow)
            .fold(zero(), |acc, (a, b)| acc + a.clone() * b.clone());
        r.push(dot);
        q_matrix.push(r);
        q_vector.push(row[0].clone() - off);
    }
    Ok(FarkasSystem {
        k,
        q_matrix,
        q_vector,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarkasReport {
    pub kernel_vectors: Vec<Vec<QuadExt>>,
    pub lambda: Vec<QuadExt>,
    /// 1-based positions of the nonzero entries of `lambda`.
    pub support: Vec<usize>,
    pub q_dot_lambda: QuadExt,
}

fn sparse(entries: &[(usize, QuadExt)]) -> Vec<QuadExt> {
    let mut v = vec![QuadExt::zero(); 14];
    for (i, x) in entries {
        v[i - 1] = x.clone();
    }
    v
}

/// The three kernel vectors of `Q^T` (k = 7) from which `lambda` is built.
pub fn kernel_vectors() -> [Vec<QuadExt>; 3] {
    let f = QuadExt::from_ints;
    [
        sparse(&[(3, f(-7, 6, 20)), (5, f(37, 94, 540)), (7, f(-13, 24, 640)), (13, f(1, 0, 1))]),
        sparse(&[(3, f(2, 0, 5)), (5, f(-62, 0, 135)), (7, f(-11, 0, 80)), (11, f(1, 0, 1))]),
        sparse(&[(3, f(-7, -6, 20)), (5, f(37, -94, 540)), (7, f(-13, -24, 640)), (9, f(1, 0, 1))]),
    ]
}

/// Checks `Q^T r = 0` for each kernel vector, `lambda >= 0` with the expected
/// four-entry support, and `q^T lambda < 0`, all in exact arithmetic.
pub fn verify_farkas_certificate() -> Result<FarkasReport, BarrierError> {
    let sys = build_farkas_system(7)?;
    let qt = linalg::transpose(&sys.q_matrix);
    let r = kernel_vectors();
    for (l, v) in r.iter().enumerate() {
        let prod = linalg::mat_vec(&qt, v);
        if let Some(i) = prod.iter().position(|x| !x.is_zero()) {
            return Err(BarrierError::CertificateInvalid(format!(
                "Q^T r({}) has nonzero entry {} at position {}",
                l + 1,
                prod[i],
                i + 1
            )));
        }
    }
    let c2 = QuadExt::from_ints(3, -1, 8);
    let c3 = QuadExt::from_ints(2, -1, 1);
    let lambda: Vec<QuadExt> = (0..14)
        .map(|i| r[0][i].clone() + c2.clone() * r[1][i].clone() + c3.clone() * r[2][i].clone())
        .collect();
    if let Some(i) = lambda.iter().position(|x| x.is_negative()) {
        return Err(BarrierError::CertificateInvalid(format!(
            "lambda has negative entry {} at position {}",
            lambda[i],
            i + 1
        )));
    }
    let support: Vec<usize> = (0..14).filter(|&i| !lambda[i].is_zero()).map(|i| i + 1).collect();
    let expected = [
        (5, QuadExt::from_ints(15, -5, 27)),
        (9, QuadExt::from_ints(2, -1, 1)),
        (11, QuadExt::from_ints(3, -1, 8)),
        (13, QuadExt::from_ints(1, 0, 1)),
    ];
    if support != [5, 9, 11, 13] || expected.iter().any(|(i, v)| lambda[i - 1] != *v) {
        return Err(BarrierError::CertificateInvalid(format!(
            "lambda support {support:?} differs from the expected four entries"
        )));
    }
    let q_dot_lambda = sys
        .q_vector
        .iter()
        .zip(&lambda)
        .fold(QuadExt::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
    if !q_dot_lambda.is_negative() {
        return Err(BarrierError::CertificateInvalid(format!(
            "q^T lambda = {q_dot_lambda} is not negative"
        )));
    }
    Ok(FarkasReport {
        kernel_vectors: r.to_vec(),
        lambda,
        support,
        q_dot_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::bdf_coefficients;
    use crate::Rational;
    use proptest::prelude::*;
    use rand::Rng;

    fn f(a: i64, b: i64, d: i64) -> QuadExt {
        QuadExt::from_ints(a, b, d)
    }

    /// `coef * (a + b sqrt3) / d`.
    fn c(coef: i64, ab: (i64, i64), d: i64) -> QuadExt {
        f(coef * ab.0, coef * ab.1, d)
    }

    const C1: (i64, i64) = (-3734, 2183);
    const C2: (i64, i64) = (-41, 24);
    const C3: (i64, i64) = (-233, 134);
    const C4: (i64, i64) = (-7, 4);
    const C5: (i64, i64) = (-67, 29);

    fn bar(x: (i64, i64)) -> (i64, i64) {
        (x.0, -x.1)
    }

    fn r(n: i64, d: i64) -> QuadExt {
        f(n, 0, d)
    }

    fn golden_q1() -> Vec<Vec<QuadExt>> {
        let row_c = |k: fn((i64, i64)) -> (i64, i64)| {
            vec![
                c(1, k(C1), 720),
                c(7, k(C2), 96),
                c(1, k(C3), 288),
                c(7, k(C4), 480),
                c(1, k(C4), 1440),
                r(0, 1),
                r(0, 1),
            ]
        };
        vec![
            vec![r(0, 1); 7],
            row_c(|x| x),
            vec![r(91, 720), r(1, 1440), r(-35, 288), r(-59, 1440), r(-7, 1440), r(-1, 5040), r(0, 1)],
            vec![r(649, 180), r(35, 12), r(8, 9), r(7, 60), r(1, 180), r(0, 1), r(0, 1)],
            vec![r(1197, 80), r(2237, 160), r(189, 32), r(201, 160), r(21, 160), r(3, 560), r(0, 1)],
            row_c(bar),
            vec![r(-2156, 45), r(-1708, 45), r(-133, 9), r(-136, 45), r(-14, 45), r(-4, 315), r(0, 1)],
        ]
    }

    fn golden_q1_vec() -> Vec<QuadExt> {
        vec![
            r(1, 1),
            c(-7, C5, 120),
            r(403, 420),
            r(-7, 15),
            r(-333, 70),
            c(-7, bar(C5), 120),
            r(2416, 105),
        ]
    }

    fn golden_q2() -> Vec<Vec<QuadExt>> {
        let row_c = |k: fn((i64, i64)) -> (i64, i64)| {
            vec![
                c(7, k(C5), 240),
                c(1, k(C1), 2160),
                c(7, k(C2), 384),
                c(1, k(C3), 1440),
                c(7, k(C4), 2880),
                c(1, k(C4), 10080),
                r(0, 1),
            ]
        };
        vec![
            vec![r(-1, 2), r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(0, 1)],
            row_c(|x| x),
            vec![r(-49, 120), r(343, 2160), r(31, 384), r(7, 1440), r(-1, 960), r(-1, 10080), r(1, 1)],
            vec![r(7, 30), r(649, 540), r(35, 48), r(8, 45), r(7, 360), r(1, 1260), r(0, 1)],
            vec![r(9, 20), r(147, 80), r(169, 128), r(63, 160), r(17, 320), r(3, 1120), r(-27, 1)],
            row_c(bar),
            vec![r(-104, 15), r(-1148, 135), r(-13, 3), r(-49, 45), r(-2, 15), r(-2, 315), r(64, 1)],
        ]
    }

    #[test]
    fn assembly_matches_golden_matrices() {
        let sys = build_farkas_system(7).unwrap();
        assert_eq!(sys.q1(), golden_q1().as_slice());
        assert_eq!(sys.q2(), golden_q2().as_slice());
        assert_eq!(&sys.q_vector[..7], golden_q1_vec().as_slice());
        assert!(sys.q_vector[7..].iter().all(|v| *v == r(1, 2)));
        assert_eq!(sys.q_vector[6], r(2416, 105));
        assert_eq!(sys.q_matrix[7][0], r(-1, 2));
        assert_eq!(sys.q_matrix[11][6], r(-27, 1));
    }

    #[test]
    fn farkas_certificate_verifies() {
        let rep = verify_farkas_certificate().unwrap();
        assert_eq!(rep.support, vec![5, 9, 11, 13]);
        assert_eq!(rep.lambda[8], f(2, -1, 1));
        assert!(rep.lambda[8].is_positive());
        assert!(rep.q_dot_lambda.is_negative());
        let sys = build_farkas_system(7).unwrap();
        let qt = linalg::transpose(&sys.q_matrix);
        assert!(linalg::mat_vec(&qt, &rep.lambda).iter().all(Zero::is_zero));
    }

    #[test]
    fn unsupported_k_rejected() {
        assert!(matches!(build_farkas_system(5), Err(BarrierError::UnsupportedK(5))));
        assert!(build_farkas_system(4).is_ok());
    }

    /// `Q w <= q` must agree with direct evaluation of the node values.
    #[test]
    fn node_rows_agree_with_series_values_for_small_k() {
        for k in [2usize, 3, 4, 7] {
            let sys = build_farkas_system(k).unwrap();
            let w: Vec<Rational> = (0..k).map(|i| Rational::from_ratio(3 * i as i64 - 2, 5)).collect();
            let scheme = lmm_from_parameters(&ParameterVector::new(w.clone())).unwrap();
            let re = reform(&scheme);
            let wq: Vec<QuadExt> = w.into_iter().map(QuadExt::from_rational).collect();
            let slack = sys.slack(&wq);
            for j in 0..k {
                let x = (std::f64::consts::PI * j as f64 / (k as f64 - 1.0)).cos();
                let ta = ChebSeries::new(re.a.iter().map(Field::approx).collect()).eval_unchecked(&x);
                let tb = ChebSeries::new(re.b.iter().map(Field::approx).collect()).eval_unchecked(&x);
                assert!((slack[j].to_f64() - ta).abs() < 1e-9 * ta.abs().max(1.0), "k={k} a node {j}");
                assert!((slack[k + j].to_f64() - tb).abs() < 1e-9 * tb.abs().max(1.0), "k={k} b node {j}");
            }
        }
    }

    #[test]
    fn feasibility_of_known_points() {
        let f6 = evaluate_feasibility(&lmm6_parameters()).unwrap();
        assert!((f6.min_a - 1.0).abs() < 1e-9);
        assert!((f6.min_b - 0.363757).abs() < 1e-5);
        assert!(f6.feasible);

        let bdf6 = bdf_coefficients(6).unwrap().parameters();
        let fb = evaluate_feasibility(&bdf6).unwrap();
        assert!(fb.min_a < 0.0 && (fb.min_b - 0.5).abs() < 1e-12 && !fb.feasible);

        let bdf2 = ParameterVector::new(vec![0.0f64, 0.0]);
        let f2 = evaluate_feasibility(&bdf2).unwrap();
        assert!((f2.min_a - 1.0).abs() < 1e-12 && (f2.min_b - 0.5).abs() < 1e-12 && f2.feasible);
    }

    #[test]
    fn search_behaviour() {
        let s6 = search_feasible(6, 400, 7);
        assert!(s6.feasible && s6.objective >= 0.363757 - 1e-5);
        let s2 = search_feasible(2, 200, 1);
        assert!(s2.feasible);
        let s7 = search_feasible(7, 2000, 3);
        assert!(!s7.feasible);
        let again = search_feasible(7, 2000, 3);
        assert_eq!(s7, again);
        for budget in [1, 7, 50, 2000] {
            assert!(search_feasible(3, budget, 1).evaluations <= budget);
        }
        assert!(s7.evaluations <= 2000);
    }

    #[test]
    fn random_rational_points_violate_some_row() {
        let sys = build_farkas_system(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..10_000 {
            let w: Vec<QuadExt> = (0..7)
                .map(|_| {
                    let n = rng.gen_range(-100_000i64..=100_000);
                    let d = rng.gen_range(1i64..=100);
                    QuadExt::from_ints(n, 0, d)
                })
                .collect();
            assert!(sys.slack(&w).iter().any(QuadExt::is_negative));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn minima_bounded_by_node_values(w in prop::collection::vec(-5.0f64..5.0, 6)) {
            let pv = ParameterVector::new(w.clone());
            let Ok(feas) = evaluate_feasibility(&pv) else { return Ok(()); };
            let re = reform(&lmm_from_parameters(&pv).unwrap());
            let a = ChebSeries::new(re.a.clone());
            let b = ChebSeries::new(re.b.clone());
            for j in 0..6 {
                let x = (std::f64::consts::PI * j as f64 / 5.0).cos();
                prop_assert!(feas.min_a <= a.eval_unchecked(&x) + 1e-12);
                prop_assert!(feas.min_b <= b.eval_unchecked(&x) + 1e-12);
            }
        }
    }
}
