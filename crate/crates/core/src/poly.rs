//! Roots of dense polynomials with complex coefficients via companion-matrix
//! eigenvalues, plus a couple of small helpers shared by `certify` and
//! `stability`.

use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;

/// Evaluates `sum c_i z^i` (ascending coefficients) by Horner.
pub fn horner(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// Expands `lead * prod (z - r_j)` into ascending coefficients.
pub fn from_roots(lead: C64, roots: &[C64]) -> Vec<C64> {
    let mut c = vec![lead];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (i, &a) in c.iter().enumerate() {
            next[i + 1] += a;
            next[i] -= a * r;
        }
        c = next;
    }
    c
}

/// All roots of `sum c_i z^i`, coefficients ascending. Trailing (leading-power)
/// zeros are dropped first, so the result has `degree` entries. Returns `None`
/// if the eigenvalue iteration fails.
pub fn roots(c: &[C64]) -> Option<Vec<C64>> {
    let n = match c.iter().rposition(|a| a.norm() != 0.0) {
        Some(n) => n,
        None => return Some(Vec::new()),
    };
    if n == 0 {
        return Some(Vec::new());
    }
    let lead = c[n];
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 10_000 * n)?;
    let (_, t) = schur.unpack();
    Some((0..n).map(|i| t[(i, i)]).collect())
}

/// [`roots`] followed by a few guarded Newton steps per root. Not suitable
/// when a multiple root is later recovered by averaging its split copies:
/// Newton moves the copies asymmetrically.
pub fn roots_polished(c: &[C64]) -> Option<Vec<C64>> {
    let mut out = roots(c)?;
    let n = out.len();
    let dc: Vec<C64> = (1..=n).map(|i| c[i] * i as f64).collect();
    for z in out.iter_mut() {
        *z = polish(&c[..=n], &dc, *z);
    }
    Some(out)
}

/// Newton refinement that only accepts steps reducing the residual.
fn polish(c: &[C64], dc: &[C64], z0: C64) -> C64 {
    let mut z = z0;
    let mut r = horner(c, z).norm();
    for _ in 0..4 {
        let d = horner(dc, z);
        if d.norm() == 0.0 {
            break;
        }
        let next = z - horner(c, z) / d;
        let rn = horner(c, next).norm();
        if !(rn < r) {
            break;
        }
        z = next;
        r = rn;
    }
    z
}

/// Smallest eigenvalue of the symmetric part `(A + A^T)/2`.
pub fn min_symmetric_eigenvalue(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i][j] + a[j][i]));
    m.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
