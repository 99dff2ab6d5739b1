//! Existence and construction of the quadratic energy modification: the
//! largest admissible `gamma`, the Fejér–Riesz factor `p`, the matrices `U`
//! and `G`, and the resulting time-step bound.

use crate::chebpoly::{global_min, ChebError, ChebSeries};
use crate::linalg::Matrix;
use crate::poly::{self, C64};
use crate::scalar::{Field, Real};
use crate::schemes::{reform, SchemeCoefficients};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Symmetric-part eigenvalues above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;
/// Laurent roots within this distance of the unit circle are treated as
/// (split) double roots on the circle.
pub const CIRCLE_TOL: f64 = 1e-6;
/// Slack allowed when `gamma` is requested at (or rounded just above) the maximum.
pub const GAMMA_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("gamma = {gamma} exceeds the largest admissible value {gamma_max}")]
    Infeasible { gamma: f64, gamma_max: f64 },
    #[error("gamma must be nonnegative, got {0}")]
    NegativeGamma(f64),
    #[error("gamma fraction must lie in (0, 1], got {0}")]
    GammaFraction(f64),
    #[error("invalid model constants: {0}")]
    Model(String),
    #[error("root finding failed: {0}")]
    Roots(String),
    #[error(transparent)]
    Cheb(#[from] ChebError),
}

/// Largest `gamma` with `T(x; s) >= gamma` on `[-1, 1]`.
pub fn gamma_max<T: Real>(s: &ChebSeries<T>) -> Result<T, ChebError> {
    Ok(global_min(s)?.min_value)
}

/// Which member of each reciprocal root pair goes into `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Roots with `|z| <= 1` (the default).
    Inside,
    /// Roots with `|z| >= 1`.
    Outside,
}

/// Real `p` (length `s.len()`) with `|P(e^{i theta})|^2 = M(theta; s) - gamma`,
/// `P(z) = p_1 + p_2 z + ...`. The first nonzero entry is made positive.
pub fn spectral_factorize(s: &ChebSeries<f64>, gamma: f64) -> Result<Vec<f64>, CertifyError> {
    spectral_factorize_branch(s, gamma, Branch::Inside)
}

pub fn spectral_factorize_branch(
    s: &ChebSeries<f64>,
    gamma: f64,
    branch: Branch,
) -> Result<Vec<f64>, CertifyError> {
    let k = s.len().max(1);
    if gamma < 0.0 {
        return Err(CertifyError::NegativeGamma(gamma));
    }
    let gmax = gamma_max(s)?;
    if gamma > gmax + GAMMA_SLACK * gmax.abs().max(1.0) {
        return Err(CertifyError::Infeasible {
            gamma,
            gamma_max: gmax,
        });
    }

    let st = s.trimmed();
    let n = st.degree();
    let c0 = st.coeffs.first().copied().unwrap_or(0.0) - gamma;
    let mut p = vec![0.0; k];
    if n == 0 {
        p[0] = c0.max(0.0).sqrt();
        return Ok(p);
    }

    // z^n L(z): coefficient n is s_0 - gamma, coefficients n +- m are s_m / 2.
    let mut laurent = vec![C64::new(0.0, 0.0); 2 * n + 1];
    laurent[n] = C64::new(c0, 0.0);
    for m in 1..=n {
        laurent[n + m] = C64::new(st.coeffs[m] / 2.0, 0.0);
        laurent[n - m] = C64::new(st.coeffs[m] / 2.0, 0.0);
    }
    let roots = poly::roots(&laurent)
        .ok_or_else(|| CertifyError::Roots("companion eigenvalues did not converge".into()))?;

    let mut chosen = Vec::with_capacity(n);
    let mut circle = Vec::new();
    for z in roots {
        let r = z.norm();
        if (r - 1.0).abs() <= CIRCLE_TOL {
            circle.push(z);
        } else if (r < 1.0) == (branch == Branch::Inside) {
            chosen.push(z);
        }
    }
    chosen.extend(pair_on_circle(circle)?);
    if chosen.len() != n {
        return Err(CertifyError::Roots(format!(
            "selected {} roots, expected {n}",
            chosen.len()
        )));
    }

    let prod = chosen.iter().fold(C64::new(1.0, 0.0), |acc, z| acc * (-z));
    let a0_sq = (st.coeffs[n] / (2.0 * prod)).re;
    if !(a0_sq > 0.0) {
        return Err(CertifyError::Roots(format!(
            "leading scale squared is {a0_sq}"
        )));
    }
    let coeffs = poly::from_roots(C64::new(a0_sq.sqrt(), 0.0), &chosen);
    for (pi, c) in p.iter_mut().zip(coeffs.iter()) {
        *pi = c.re;
    }
    let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = p.iter().find(|v| v.abs() > 1e-14 * scale) {
        if *first < 0.0 {
            p.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(p)
}

/// Each double root on the circle arrives as two nearby simple roots; keep one
/// representative per pair, projected back onto `|z| = 1`.
fn pair_on_circle(mut rest: Vec<C64>) -> Result<Vec<C64>, CertifyError> {
    let mut out = Vec::with_capacity(rest.len() / 2);
    while let Some(z) = rest.pop() {
        let (idx, _) = rest
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| CertifyError::Roots("unpaired root on the unit circle".into()))?;
        let w = rest.swap_remove(idx);
        let mean = (z + w) / 2.0;
        out.push(mean / mean.norm());
    }
    Ok(out)
}

/// `U_ii = p_i^2 + gamma [i = 1]`, `U_ij = 2 p_i p_j` for `i < j`.
pub fn build_u<T: Field>(p: &[T], gamma: &T) -> Matrix<T> {
    let k = p.len();
    let two = T::from_int(2);
    let mut u = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        u[i][i] = p[i].clone() * p[i].clone();
        for j in i + 1..k {
            u[i][j] = two.clone() * p[i].clone() * p[j].clone();
        }
    }
    if k > 0 {
        u[0][0] = u[0][0].clone() + gamma.clone();
    }
    u
}

/// The unique upper-triangular `G` with `G - J^T G J = U~`, where `U~` drops
/// the first row and column of `U`: `G_ij = sum_m U~_{i+m, j+m}`.
pub fn recover_g<T: Field>(u: &Matrix<T>) -> Matrix<T> {
    let n = u.len().saturating_sub(1);
    let mut g = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            let mut m = 0;
            while i + m < n && j + m < n {
                acc = acc + u[i + m + 1][j + m + 1].clone();
                m += 1;
            }
            g[i][j] = acc;
        }
    }
    g
}

/// Diagonal sums `sum_i U_{i, i+m}`, i.e. the series a certificate encodes.
pub fn diagonal_sums<T: Field>(u: &Matrix<T>) -> Vec<T> {
    let k = u.len();
    (0..k)
        .map(|m| {
            (0..k - m).fold(T::zero(), |acc, i| acc + u[i][i + m].clone())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCertificate {
    pub gamma: f64,
    pub p: Vec<f64>,
    #[serde(rename = "U")]
    pub u: Matrix<f64>,
    #[serde(rename = "G")]
    pub g: Matrix<f64>,
}

impl EnergyCertificate {
    /// Factorizes `s - gamma` and assembles `U` and `G`.
    pub fn build(s: &ChebSeries<f64>, gamma: f64, branch: Branch) -> Result<Self, CertifyError> {
        let p = spectral_factorize_branch(s, gamma, branch)?;
        let u = build_u(&p, &gamma);
        let g = recover_g(&u);
        Ok(Self { gamma, p, u, g })
    }

    /// Minimum eigenvalue of `G + G^T`.
    pub fn g_sym_min_eigenvalue(&self) -> f64 {
        2.0 * poly::min_symmetric_eigenvalue(&self.g)
    }

    pub fn g_is_psd(&self) -> bool {
        poly::min_symmetric_eigenvalue(&self.g) >= -PSD_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub ell_f: f64,
    pub zeta: f64,
    pub eta: f64,
}

impl ModelConstants {
    pub fn validate(&self) -> Result<(), CertifyError> {
        if !(self.ell_f > 0.0) {
            return Err(CertifyError::Model(format!("ell_f must be positive, got {}", self.ell_f)));
        }
        if !(self.zeta > 0.0) {
            return Err(CertifyError::Model(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(CertifyError::Model(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }
}

/// Time-step bound
/// `alpha beta^e / (|l/2 + 2 l c1|^{1+e} eta (1-eta)^e zeta^{2+2e})`, `e = (1-eta)/eta`,
/// with `0^0 = 1`.
pub fn tau_max(alpha: f64, beta: f64, chat1: f64, model: &ModelConstants) -> f64 {
    let eta = model.eta;
    let e = (1.0 - eta) / eta;
    let pow = |x: f64, y: f64| if y == 0.0 { 1.0 } else { x.powf(y) };
    let lip = (model.ell_f / 2.0 + 2.0 * model.ell_f * chat1).abs();
    alpha * pow(beta, e)
        / (lip.powf(1.0 + e) * eta * pow(1.0 - eta, e) * model.zeta.powf(2.0 + 2.0 * e))
}

/// Why a scheme could not be certified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refusal {
    /// `"a"` or `"b"`.
    pub vector: String,
    pub minimum: f64,
    pub argmin: f64,
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bound = if self.vector == "b" { "is negative" } else { "is not positive" };
        write!(
            f,
            "minimum of T(x; {}) on [-1, 1] {bound}: {:.12e} at x = {:.12}",
            self.vector, self.minimum, self.argmin
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub alpha_max: f64,
    pub beta_max: f64,
    pub alpha_argmin: f64,
    pub beta_argmin: f64,
    pub cert_a: Option<EnergyCertificate>,
    pub cert_b: Option<EnergyCertificate>,
    pub c_hat: Vec<f64>,
    pub chat1: f64,
    pub model: ModelConstants,
    pub tau_max: Option<f64>,
    pub refusal: Option<Refusal>,
}

impl DissipationReport {
    pub fn is_certified(&self) -> bool {
        self.refusal.is_none()
    }

    pub fn g_a(&self) -> Option<&Matrix<f64>> {
        self.cert_a.as_ref().map(|c| &c.g)
    }

    pub fn g_b(&self) -> Option<&Matrix<f64>> {
        self.cert_b.as_ref().map(|c| &c.g)
    }

    /// Flat JSON view with row-major `G_a`, `G_b`.
    pub fn to_json_value(&self) -> serde_json::Value {
        let flat = |c: &Option<EnergyCertificate>| -> serde_json::Value {
            match c {
                Some(c) => c.g.iter().flatten().copied().collect::<Vec<f64>>().into(),
                None => serde_json::Value::Null,
            }
        };
        let k = self.c_hat.len() + 1;
        serde_json::json!({
            "alpha_max": self.alpha_max,
            "beta_max": self.beta_max,
            "G_a": flat(&self.cert_a),
            "G_b": flat(&self.cert_b),
            "G_dim": k - 1,
            "tau_max": self.tau_max,
            "refused": self.refusal.is_some(),
            "refusal_reason": self.refusal.as_ref().map(|r| r.to_string()),
            "gamma_a": self.cert_a.as_ref().map(|c| c.gamma),
            "gamma_b": self.cert_b.as_ref().map(|c| c.gamma),
            "p_a": self.cert_a.as_ref().map(|c| c.p.clone()),
            "p_b": self.cert_b.as_ref().map(|c| c.p.clone()),
            "c_hat": self.c_hat,
            "ell_f": self.model.ell_f,
            "zeta": self.model.zeta,
            "eta": self.model.eta,
            "chat1": self.chat1,
        })
    }
}

/// Certifies at `gamma = gamma_max` for both polynomials.
pub fn certify_scheme<T: Field>(
    s: &SchemeCoefficients<T>,
    model: &ModelConstants,
) -> Result<DissipationReport, CertifyError> {
    certify_scheme_with(s, model, 1.0, Branch::Inside)
}

/// Certifies at `gamma = fraction * gamma_max` using the given root branch.
pub fn certify_scheme_with<T: Field>(
    s: &SchemeCoefficients<T>,
    model: &ModelConstants,
    fraction: f64,
    branch: Branch,
) -> Result<DissipationReport, CertifyError> {
    model.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CertifyError::GammaFraction(fraction));
    }
    let r = reform(s);
    let a = ChebSeries::new(r.a.iter().map(Field::approx).collect());
    let b = ChebSeries::new(r.b.iter().map(Field::approx).collect());
    let c_hat: Vec<f64> = r.c_hat.iter().map(Field::approx).collect();
    let chat1 = c_hat.first().copied().unwrap_or(0.0);
    let ma = global_min(&a)?;
    let mb = global_min(&b)?;

    let mut report = DissipationReport {
        alpha_max: ma.min_value,
        beta_max: mb.min_value,
        alpha_argmin: ma.argmin,
        beta_argmin: mb.argmin,
        cert_a: None,
        cert_b: None,
        c_hat,
        chat1,
        model: *model,
        tau_max: None,
        refusal: None,
    };
    let beta_ok = if model.eta == 1.0 {
        mb.min_value >= 0.0
    } else {
        mb.min_value > 0.0
    };
    if !(ma.min_value > 0.0) {
        report.refusal = Some(Refusal {
            vector: "a".into(),
            minimum: ma.min_value,
            argmin: ma.argmin,
        });
        return Ok(report);
    }
    if !beta_ok {
        report.refusal = Some(Refusal {
            vector: "b".into(),
            minimum: mb.min_value,
            argmin: mb.argmin,
        });
        return Ok(report);
    }
    let ga = fraction * ma.min_value;
    let gb = fraction * mb.min_value.max(0.0);
    report.cert_a = Some(EnergyCertificate::build(&a, ga, branch)?);
    report.cert_b = Some(EnergyCertificate::build(&b, gb, branch)?);
    report.tau_max = Some(tau_max(ga, gb, chat1, model));
    Ok(report)
}
