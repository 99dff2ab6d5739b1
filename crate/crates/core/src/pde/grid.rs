use super::PdeError;
use crate::poly::C64;
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;

/// Periodic box `prod [0, L_i)` with `n_i` points per axis, row-major with
/// the last axis contiguous. Transforms are unnormalized forward and
/// `1/N`-normalized inverse.
#[derive(Clone)]
pub struct Grid {
    pub n: Vec<usize>,
    pub lengths: Vec<f64>,
    k2: Vec<f64>,
    /// Mode index magnitudes per axis, for the 2/3 filter.
    dealias: Vec<bool>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("lengths", &self.lengths)
            .finish()
    }
}

/// Imaginary parts up to this (relative to `max(1, max |Re|)`) are rounding.
pub const HERMITIAN_TOL: f64 = 1e-12;

impl Grid {
    pub fn new(n: &[usize], lengths: &[f64]) -> Result<Self, PdeError> {
        if n.is_empty() || n.len() > 3 || n.len() != lengths.len() {
            return Err(PdeError::Grid(format!(
                "need 1 to 3 axes with matching lengths, got n = {n:?}, lengths = {lengths:?}"
            )));
        }
        if let Some(bad) = n.iter().find(|&&m| m < 2 || m % 2 != 0) {
            return Err(PdeError::Grid(format!("points per axis must be even and >= 2, got {bad}")));
        }
        if lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(PdeError::Grid("side lengths must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        let forward = n.iter().map(|&m| planner.plan_fft_forward(m)).collect();
        let inverse = n.iter().map(|&m| planner.plan_fft_inverse(m)).collect();
        let total: usize = n.iter().product();
        let mut k2 = vec![0.0; total];
        let mut dealias = vec![true; total];
        for (idx, (k2v, keep)) in k2.iter_mut().zip(dealias.iter_mut()).enumerate() {
            let mut rem = idx;
            for axis in (0..n.len()).rev() {
                let m = n[axis];
                let j = rem % m;
                rem /= m;
                let signed = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
                let k = 2.0 * std::f64::consts::PI / lengths[axis] * signed;
                *k2v += k * k;
                if signed.abs() * 3.0 > m as f64 {
                    *keep = false;
                }
            }
        }
        Ok(Self {
            n: n.to_vec(),
            lengths: lengths.to_vec(),
            k2,
            dealias,
            forward,
            inverse,
        })
    }

    /// `n x n` grid on `[0, length)^2`.
    pub fn square(n: usize, length: f64) -> Result<Self, PdeError> {
        Self::new(&[n, n], &[length, length])
    }

    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.lengths
            .iter()
            .zip(&self.n)
            .map(|(l, &m)| l / m as f64)
            .product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// `|xi|^2` per mode, in storage order.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// Physical coordinates of grid point `idx`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        let mut rem = idx;
        for axis in (0..self.dim()).rev() {
            let m = self.n[axis];
            x[axis] = (rem % m) as f64 * self.lengths[axis] / m as f64;
            rem /= m;
        }
        x
    }

    fn transform(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>]) {
        let total = data.len();
        let mut stride = 1;
        for axis in (0..self.dim()).rev() {
            let m = self.n[axis];
            let plan = &plans[axis];
            if stride == 1 {
                plan.process(data);
            } else {
                let mut line = vec![C64::new(0.0, 0.0); m];
                let block = m * stride;
                for base in (0..total).step_by(block) {
                    for offset in 0..stride {
                        for (j, v) in line.iter_mut().enumerate() {
                            *v = data[base + offset + j * stride];
                        }
                        plan.process(&mut line);
                        for (j, v) in line.iter().enumerate() {
                            data[base + offset + j * stride] = *v;
                        }
                    }
                }
            }
            stride *= m;
        }
    }

    pub fn forward(&self, u: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform of a (Hermitian) spectrum to a real field.
    pub fn inverse(&self, uh: &[C64]) -> Result<Vec<f64>, PdeError> {
        let mut data = uh.to_vec();
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        let mut max_re: f64 = 1.0;
        let mut max_im: f64 = 0.0;
        for v in &data {
            max_re = max_re.max((v.re * scale).abs());
            max_im = max_im.max((v.im * scale).abs());
        }
        if max_im > HERMITIAN_TOL * max_re {
            return Err(PdeError::Hermitian { residue: max_im });
        }
        Ok(data.iter().map(|v| v.re * scale).collect())
    }

    /// Cell-volume weighted `(f, g)` from spectra: `cell / N * Re sum f g*`.
    pub fn inner(&self, a: &[C64], b: &[C64]) -> f64 {
        self.inner_weighted(a, b, |_| 1.0)
    }

    /// `cell / N * Re sum w(|xi|^2) a b*`.
    pub fn inner_weighted(&self, a: &[C64], b: &[C64], w: impl Fn(f64) -> f64) -> f64 {
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(&self.k2)
            .map(|((x, y), &k2)| w(k2) * (x.re * y.re + x.im * y.im))
            .sum();
        s * self.cell_volume() / self.len() as f64
    }

    /// Cell-volume weighted `(f, g)` of physical fields.
    pub fn inner_physical(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.cell_volume()
    }

    /// Zeroes modes outside the 2/3 band on any axis.
    pub fn dealias(&self, uh: &mut [C64]) {
        for (v, &keep) in uh.iter_mut().zip(&self.dealias) {
            if !keep {
                *v = C64::new(0.0, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: &Grid, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn round_trip_and_parseval() {
        for g in [
            Grid::new(&[16], &[3.0]).unwrap(),
            Grid::new(&[8, 12], &[1.0, 2.0]).unwrap(),
            Grid::new(&[4, 6, 8], &[1.0, 1.5, 2.0]).unwrap(),
        ] {
            let u = random_field(&g, 1);
            let v = random_field(&g, 2);
            let back = g.inverse(&g.forward(&u)).unwrap();
            assert!(u.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-14));
            let phys = g.inner_physical(&u, &v);
            let spec = g.inner(&g.forward(&u), &g.forward(&v));
            assert!((phys - spec).abs() < 1e-12 * phys.abs().max(1.0));
        }
    }

    #[test]
    fn laplacian_symbol_matches_analytic_derivative() {
        let l = 2.0 * std::f64::consts::PI;
        let g = Grid::square(16, l).unwrap();
        let u: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.coords(i);
                (2.0 * x[0]).sin() * (3.0 * x[1]).cos()
            })
            .collect();
        let uh = g.forward(&u);
        let lap: Vec<C64> = uh.iter().zip(g.k2()).map(|(v, &k2)| -v * k2).collect();
        let back = g.inverse(&lap).unwrap();
        for (a, b) in back.iter().zip(&u) {
            assert!((a + 13.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let g = Grid::new(&[8], &[1.0]).unwrap();
        let mut uh = vec![C64::new(0.0, 0.0); 8];
        uh[1] = C64::new(1.0, 0.0);
        assert!(matches!(g.inverse(&uh), Err(PdeError::Hermitian { .. })));
    }

    #[test]
    fn invalid_grids() {
        assert!(Grid::new(&[7], &[1.0]).is_err());
        assert!(Grid::new(&[8, 8], &[1.0]).is_err());
        assert!(Grid::new(&[2, 2, 2, 2], &[1.0; 4]).is_err());
        assert!(Grid::new(&[8], &[0.0]).is_err());
    }
}
