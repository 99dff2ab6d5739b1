use super::{Grid, History, ModelSpec, PdeError, Simulator};
use crate::certify::DissipationReport;
use crate::poly::C64;

/// `E[u] = cell * (1/2 sum u L u + sum F(u))`, with `L u` applied spectrally.
pub fn energy(grid: &Grid, model: &ModelSpec, u: &[f64]) -> f64 {
    let uh = grid.forward(u);
    let quad = 0.5 * grid.inner_weighted(&uh, &uh, |k2| model.l_symbol(k2));
    let pot: f64 = u.iter().map(|&v| model.potential(v)).sum::<f64>() * grid.cell_volume();
    quad + pot
}

/// Largest tolerated mean of an increment under a mass-conserving model.
pub const MEAN_TOL: f64 = 1e-10;

/// Modified energy
/// `E[u^n] - (1/tau) (v, M^{-1} v)_{G_a} + (v, L v)_{G_b} + ell_f sum c_i |delta u^{n+1-i}|^2`
/// with `v = [delta u^n, .., delta u^{n+2-k}]`.
pub fn modified_energy(
    sim: &Simulator,
    history: &History,
    report: &DissipationReport,
) -> Result<f64, PdeError> {
    let grid = &sim.grid;
    let model = &sim.model;
    let base = energy(grid, model, history.current());
    let k = history.k;
    if k == 1 {
        return Ok(base);
    }
    let (Some(ga), Some(gb)) = (report.g_a(), report.g_b()) else {
        return Err(PdeError::Invariant(
            "modified energy needs a certified dissipation report".into(),
        ));
    };
    if ga.len() != k - 1 || gb.len() != k - 1 || report.c_hat.len() != k - 1 {
        return Err(PdeError::Invariant(format!(
            "report is for {} steps, history for {k}",
            ga.len() + 1
        )));
    }
    let deltas: Vec<Vec<C64>> = (0..k - 1).map(|i| history.delta(i)).collect();
    if model.mass_conserving() {
        let n = grid.len() as f64;
        for (i, d) in deltas.iter().enumerate() {
            let mean = d[0].norm() / n;
            if mean > MEAN_TOL {
                return Err(PdeError::Invariant(format!(
                    "increment {i} has mean {mean:e} under a mass-conserving model"
                )));
            }
        }
    }
    let m_inv = |k2: f64| {
        let m = model.m_symbol(k2);
        if m == 0.0 {
            0.0
        } else {
            1.0 / m
        }
    };
    let mut total = base;
    for i in 0..k - 1 {
        for j in 0..k - 1 {
            if ga[i][j] != 0.0 {
                total -= ga[i][j] / sim.tau * grid.inner_weighted(&deltas[i], &deltas[j], m_inv);
            }
            if gb[i][j] != 0.0 {
                total += gb[i][j]
                    * grid.inner_weighted(&deltas[i], &deltas[j], |k2| model.l_symbol(k2));
            }
        }
        total += report.model.ell_f * report.c_hat[i] * grid.inner(&deltas[i], &deltas[i]);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::certify_scheme;
    use crate::schemes::{bdf_coefficients, lmm6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn energy_of_constants() {
        let g = Grid::square(16, 128.0).unwrap();
        let pfc = ModelSpec::pfc(0.25);
        let e = energy(&g, &pfc, &vec![0.0; g.len()]);
        assert!((e - 128.0 * 128.0 * 1.25f64.powi(2) / 4.0).abs() < 1e-9);
        let ac = ModelSpec::allen_cahn(0.1);
        assert_eq!(energy(&g, &ac, &vec![1.0; g.len()]), 0.0);
    }

    /// Naive separable DFT along both axes of an `n x n` row-major array.
    fn dft2(a: &[C64], n: usize, sign: f64) -> Vec<C64> {
        let w: Vec<C64> = (0..n)
            .map(|m| C64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * m as f64 / n as f64))
            .collect();
        let mut rows = vec![C64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for k in 0..n {
                rows[r * n + k] = (0..n).map(|j| a[r * n + j] * w[(j * k) % n]).sum();
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for c in 0..n {
            for k in 0..n {
                out[k * n + c] = (0..n).map(|j| rows[j * n + c] * w[(j * k) % n]).sum();
            }
        }
        out
    }

    #[test]
    fn pfc_initial_energy_matches_independent_oracle() {
        let cfg = crate::pde::PfcConfig::desk_scale();
        let g = Grid::square(cfg.n, cfg.length).unwrap();
        let pfc = ModelSpec::pfc(cfg.epsilon);
        let u = cfg.initial_datum(&g);
        let n = cfg.n;
        let uc: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut uh = dft2(&uc, n, -1.0);
        let wave = |m: usize| {
            let s = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
            2.0 * std::f64::consts::PI * s / cfg.length
        };
        for r in 0..n {
            for c in 0..n {
                let k2 = wave(r).powi(2) + wave(c).powi(2);
                uh[r * n + c] *= pfc.l_symbol(k2);
            }
        }
        let lu = dft2(&uh, n, 1.0);
        let h2 = (cfg.length / n as f64).powi(2);
        let mut oracle = 0.0;
        for i in 0..n * n {
            let lu_i = lu[i].re / (n * n) as f64;
            oracle += (0.5 * u[i] * lu_i + pfc.potential(u[i])) * h2;
        }
        let e = energy(&g, &pfc, &u);
        assert!((e - oracle).abs() < 1e-10 * oracle.abs(), "{e} vs {oracle}");
    }

    #[test]
    fn energy_matches_direct_quadrature() {
        // Oracle: L applied analytically to a two-mode field, then a plain cell sum.
        let l = 2.0 * std::f64::consts::PI;
        let g = Grid::square(32, l).unwrap();
        let pfc = ModelSpec::pfc(0.25);
        let u: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.coords(i);
                0.4 * x[0].sin() * x[1].sin() + 0.1 * (3.0 * x[0]).cos()
            })
            .collect();
        let lu: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.coords(i);
                pfc.l_symbol(2.0) * 0.4 * x[0].sin() * x[1].sin()
                    + pfc.l_symbol(9.0) * 0.1 * (3.0 * x[0]).cos()
            })
            .collect();
        let direct = g.cell_volume()
            * u.iter()
                .zip(&lu)
                .map(|(a, b)| 0.5 * a * b + pfc.potential(*a))
                .sum::<f64>();
        let e = energy(&g, &pfc, &u);
        assert!((e - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn modified_energy_degenerate_cases() {
        let g = Grid::square(8, 6.0).unwrap();
        let ac = ModelSpec::allen_cahn(0.1);
        let u: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin() * 0.5).collect();
        let e = energy(&g, &ac, &u);

        let s1 = bdf_coefficients(1).unwrap();
        let sim1 = Simulator::new(g.clone(), ac, &s1, 0.1).unwrap();
        let r1 = certify_scheme(&s1, &ac.constants()).unwrap();
        let h1 = sim1.history(0.0, std::slice::from_ref(&u)).unwrap();
        assert_eq!(modified_energy(&sim1, &h1, &r1).unwrap(), e);

        let s6 = lmm6();
        let sim6 = Simulator::new(g.clone(), ac, &s6, 0.1).unwrap();
        let r6 = certify_scheme(&s6, &ac.constants()).unwrap();
        let h6 = sim6.history(0.0, &vec![u.clone(); 6]).unwrap();
        assert!((modified_energy(&sim6, &h6, &r6).unwrap() - e).abs() < 1e-14 * e.abs().max(1.0));
    }

    #[test]
    fn modified_energy_dominates_energy() {
        let g = Grid::square(16, 32.0).unwrap();
        let pfc = ModelSpec::pfc(0.25);
        let s = lmm6();
        let sim = Simulator::new(g.clone(), pfc, &s, 0.01).unwrap();
        let report = certify_scheme(&s, &pfc.constants()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mean = base.iter().sum::<f64>() / base.len() as f64;
        let states: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                let mut v: Vec<f64> = base.iter().map(|b| b + 0.05 * rng.gen_range(-1.0..1.0)).collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter_mut().for_each(|x| *x += mean - m);
                v
            })
            .collect();
        let h = sim.history(0.0, &states).unwrap();
        let eg = modified_energy(&sim, &h, &report).unwrap();
        let e = energy(&g, &pfc, h.current());
        assert!(eg >= e - 1e-10 * e.abs().max(1.0));
    }

    #[test]
    fn nonzero_mean_increment_is_rejected() {
        let g = Grid::square(8, 8.0).unwrap();
        let pfc = ModelSpec::pfc(0.25);
        let s = bdf_coefficients(2).unwrap();
        let sim = Simulator::new(g.clone(), pfc, &s, 0.01).unwrap();
        let report = certify_scheme(&s, &pfc.constants()).unwrap();
        let h = sim
            .history(0.0, &[vec![0.1; g.len()], vec![0.2; g.len()]])
            .unwrap();
        assert!(matches!(modified_energy(&sim, &h, &report), Err(PdeError::Invariant(_))));
    }

    #[test]
    fn spectral_norm_identity_and_interpolation_bound() {
        let g = Grid::square(32, 32.0).unwrap();
        let pfc = ModelSpec::pfc(0.25);
        let (zeta, eta) = pfc.zeta_eta();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
            let vh = g.forward(&v);
            let neg_m_inv = |k2: f64| if k2 == 0.0 { 0.0 } else { -1.0 / pfc.m_symbol(k2) };
            // |(-M)^{-1/2} v|^2 via symbols vs (v, -M^{-1} v) after a solve.
            let sym = g.inner_weighted(&vh, &vh, neg_m_inv);
            let solved: Vec<C64> = vh.iter().zip(g.k2()).map(|(x, &k2)| x * neg_m_inv(k2)).collect();
            let via_solve = g.inner_physical(&v, &g.inverse(&solved).unwrap());
            assert!((sym - via_solve).abs() < 1e-12 * sym.abs());
            let l_norm = g.inner_weighted(&vh, &vh, |k2| pfc.l_symbol(k2)).sqrt();
            let norm = g.inner(&vh, &vh).sqrt();
            assert!(norm <= zeta * sym.sqrt().powf(eta) * l_norm.powf(1.0 - eta) * (1.0 + 1e-12));
        }
    }
}
