//! Linear stability of IMEX schemes applied to `u' = lambda_I u + lambda_E u`:
//! characteristic polynomials, the root condition, region slices and the
//! A(theta) angle of the implicit part.

use crate::poly::{self, C64};
use crate::scalar::Field;
use crate::schemes::SchemeCoefficients;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Roots with `|xi| <= 1 + ROOT_TOL` are inside; `|xi| >= 1 - ROOT_TOL` is the boundary band.
pub const ROOT_TOL: f64 = 1e-7;
/// Two roots closer than this count as one repeated root.
pub const CLUSTER_RADIUS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("rho violates the root condition: {0}")]
    NotZeroStable(String),
    #[error("grid needs at least 2 points per axis")]
    Grid,
}

/// `rho(xi) = sum A_i xi^{k-i}`, `sigma(xi) = sum B_i xi^{k-i}`,
/// `sigma_hat(xi) = sum_{i>=1} Bhat_i xi^{k-i}`; each stored by descending
/// power (index `i` holds the coefficient of `xi^{k-i}`).
#[derive(Debug, Clone, PartialEq)]
pub struct CharPolys<T> {
    pub rho: Vec<T>,
    pub sigma: Vec<T>,
    pub sigma_hat: Vec<T>,
}

pub fn char_polys<T: Field>(s: &SchemeCoefficients<T>) -> CharPolys<T> {
    let mut sigma_hat = vec![T::zero()];
    sigma_hat.extend(s.beta_hat.iter().cloned());
    CharPolys {
        rho: s.alpha.clone(),
        sigma: s.beta.clone(),
        sigma_hat,
    }
}

/// Evaluates a descending-power polynomial.
pub fn eval_desc<T: Field>(c: &[T], x: &T) -> T {
    c.iter()
        .fold(T::zero(), |acc, a| acc * x.clone() + a.clone())
}

/// Derivative of a descending-power polynomial, also descending.
pub fn derivative_desc<T: Field>(c: &[T]) -> Vec<T> {
    let n = c.len().saturating_sub(1);
    c.iter()
        .take(n)
        .enumerate()
        .map(|(i, a)| a.clone() * T::from_int((n - i) as i64))
        .collect()
}

impl<T: Field> CharPolys<T> {
    /// Coefficients of `rho - z_i sigma - z_e sigma_hat`, descending.
    pub fn combined(&self, zi: C64, ze: C64) -> Vec<C64> {
        (0..self.rho.len())
            .map(|i| {
                C64::new(self.rho[i].approx(), 0.0)
                    - zi * self.sigma[i].approx()
                    - ze * self.sigma_hat[i].approx()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootCondition {
    pub zero_stable: bool,
    pub roots: Vec<C64>,
    pub violations: Vec<String>,
}

impl RootCondition {
    pub fn spectral_radius(&self) -> f64 {
        self.roots.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Root condition for a polynomial given by descending powers. Leading zeros
/// are dropped; a constant polynomial is vacuously stable.
pub fn root_condition(poly_desc: &[C64], tol: f64) -> RootCondition {
    let asc: Vec<C64> = poly_desc.iter().rev().copied().collect();
    let roots = match poly::roots_polished(&asc) {
        Some(r) => r,
        None => {
            return RootCondition {
                zero_stable: false,
                roots: Vec::new(),
                violations: vec!["root finder did not converge".into()],
            }
        }
    };
    let mut violations = Vec::new();
    for (i, z) in roots.iter().enumerate() {
        let r = z.norm();
        if r > 1.0 + tol {
            violations.push(format!("root {z} has modulus {r:.12} > 1"));
        } else if r >= 1.0 - tol
            && roots
                .iter()
                .enumerate()
                .any(|(j, w)| j != i && (w - z).norm() < CLUSTER_RADIUS)
        {
            violations.push(format!("repeated root {z} on the unit circle"));
        }
    }
    RootCondition {
        zero_stable: violations.is_empty(),
        roots,
        violations,
    }
}

/// Stability of the characteristic equation at `(z_I, z_E)`. A vanishing
/// leading coefficient (a root escaping to infinity) counts as unstable.
pub fn is_stable_at<T: Field>(polys: &CharPolys<T>, zi: C64, ze: C64) -> bool {
    let c = polys.combined(zi, ze);
    let scale = c.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if c[0].norm() <= 1e-14 * scale {
        return false;
    }
    root_condition(&c, ROOT_TOL).zero_stable
}

fn spectral_radius_at<T: Field>(polys: &CharPolys<T>, zi: C64) -> f64 {
    let c = polys.combined(zi, C64::new(0.0, 0.0));
    let asc: Vec<C64> = c.iter().rev().copied().collect();
    poly::roots_polished(&asc)
        .map(|r| r.iter().map(|z| z.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    /// Scan `z_I`, `z_E = 0`.
    Implicit,
    /// Scan `z_E`, `z_I = 0`.
    Explicit,
    /// Scan `z_E` with `z_I` fixed.
    Imex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SliceGrid {
    /// Default window for each plane at 400 x 400.
    pub fn default_for(plane: Plane) -> Self {
        let (re_min, re_max, im_min, im_max) = match plane {
            Plane::Implicit => (-10.0, 30.0, -20.0, 20.0),
            Plane::Explicit | Plane::Imex => (-1.5, 0.5, -1.0, 1.0),
        };
        Self {
            re_min,
            re_max,
            im_min,
            im_max,
            nx: 400,
            ny: 400,
        }
    }

    pub fn point(&self, i: usize, j: usize) -> C64 {
        let x = self.re_min + (self.re_max - self.re_min) * i as f64 / (self.nx - 1) as f64;
        let y = self.im_min + (self.im_max - self.im_min) * j as f64 / (self.ny - 1) as f64;
        C64::new(x, y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSlice {
    pub plane: Plane,
    pub fixed_value: C64,
    pub grid: SliceGrid,
    /// `mask[j][i]`: row `j` is the imaginary index, column `i` the real index.
    pub mask: Vec<Vec<bool>>,
}

impl RegionSlice {
    /// `(x, y, stable)` rows, real index fastest.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, bool)> + '_ {
        (0..self.grid.ny).flat_map(move |j| {
            (0..self.grid.nx).map(move |i| {
                let z = self.grid.point(i, j);
                (z.re, z.im, self.mask[j][i])
            })
        })
    }
}

pub fn region_slice<T: Field + Sync>(
    s: &SchemeCoefficients<T>,
    plane: Plane,
    fixed_value: C64,
    grid: SliceGrid,
) -> Result<RegionSlice, StabilityError> {
    if grid.nx < 2 || grid.ny < 2 {
        return Err(StabilityError::Grid);
    }
    let polys = char_polys(s);
    let zero = C64::new(0.0, 0.0);
    let mask = (0..grid.ny)
        .into_par_iter()
        .map(|j| {
            (0..grid.nx)
                .map(|i| {
                    let z = grid.point(i, j);
                    let (zi, ze) = match plane {
                        Plane::Implicit => (z, zero),
                        Plane::Explicit => (zero, z),
                        Plane::Imex => (fixed_value, z),
                    };
                    is_stable_at(&polys, zi, ze)
                })
                .collect()
        })
        .collect();
    Ok(RegionSlice {
        plane,
        fixed_value,
        grid,
        mask,
    })
}

/// Sampling used by [`stability_angle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleOptions {
    pub ray_samples: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Coarse scan step in degrees before bisection.
    pub scan_step: f64,
    /// Bisection stops at this width in degrees.
    pub resolution: f64,
}

impl Default for AngleOptions {
    fn default() -> Self {
        Self {
            ray_samples: 200,
            r_min: 1e-3,
            r_max: 1e6,
            scan_step: 0.25,
            resolution: 1e-4,
        }
    }
}

fn ray_point(r: f64, phi_deg: f64) -> C64 {
    let phi = phi_deg.to_radians();
    -C64::new(r * phi.cos(), r * phi.sin())
}

/// Whether every sampled point of the ray `z_I = -r e^{i phi}` is stable.
/// Local maxima of the spectral radius between samples are refined by
/// golden-section search in `log r`.
fn ray_is_stable<T: Field>(polys: &CharPolys<T>, phi_deg: f64, opts: &AngleOptions) -> bool {
    let n = opts.ray_samples;
    let (l0, l1) = (opts.r_min.ln(), opts.r_max.ln());
    let logs: Vec<f64> = (0..n).map(|i| l0 + (l1 - l0) * i as f64 / (n - 1) as f64).collect();
    let zero = C64::new(0.0, 0.0);
    let mut radius = Vec::with_capacity(n);
    for &l in &logs {
        let z = ray_point(l.exp(), phi_deg);
        if !is_stable_at(polys, z, zero) {
            return false;
        }
        radius.push(spectral_radius_at(polys, z));
    }
    let f = |l: f64| spectral_radius_at(polys, ray_point(l.exp(), phi_deg));
    for i in 0..n {
        let left = if i > 0 { radius[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { radius[i + 1] } else { f64::NEG_INFINITY };
        if radius[i] < left || radius[i] < right || radius[i] < 1.0 - 1e-2 {
            continue;
        }
        let a = logs[i.saturating_sub(1)];
        let b = logs[(i + 1).min(n - 1)];
        let (lmax, rmax) = golden_max(&f, a, b, 60);
        if rmax > 1.0 + ROOT_TOL || !is_stable_at(polys, ray_point(lmax.exp(), phi_deg), zero) {
            return false;
        }
    }
    true
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Largest `theta <= 90` degrees such that the sector `|phi| <= theta` of
/// `z_I = -r e^{i phi}` (with `z_E = 0`) is stable. Returns 0 when the
/// roots of `sigma` (the `r -> infinity` limit) violate the root condition.
pub fn stability_angle<T: Field>(s: &SchemeCoefficients<T>) -> Result<f64, StabilityError> {
    stability_angle_with(s, &AngleOptions::default())
}

pub fn stability_angle_with<T: Field>(
    s: &SchemeCoefficients<T>,
    opts: &AngleOptions,
) -> Result<f64, StabilityError> {
    let polys = char_polys(s);
    let rho: Vec<C64> = polys.rho.iter().map(|a| C64::new(a.approx(), 0.0)).collect();
    let rc = root_condition(&rho, ROOT_TOL);
    if !rc.zero_stable {
        return Err(StabilityError::NotZeroStable(rc.violations.join("; ")));
    }
    let sigma: Vec<C64> = polys.sigma.iter().map(|a| C64::new(a.approx(), 0.0)).collect();
    if !root_condition(&sigma, ROOT_TOL).zero_stable {
        return Ok(0.0);
    }
    if !ray_is_stable(&polys, 0.0, opts) {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = None;
    let mut phi = opts.scan_step;
    while phi <= 90.0 + 1e-12 {
        if ray_is_stable(&polys, phi, opts) {
            lo = phi;
        } else {
            hi = Some(phi);
            break;
        }
        phi += opts.scan_step;
    }
    let Some(mut hi) = hi else {
        return Ok(90.0);
    };
    while hi - lo > opts.resolution {
        let mid = 0.5 * (lo + hi);
        if ray_is_stable(&polys, mid, opts) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.min(90.0))
}
