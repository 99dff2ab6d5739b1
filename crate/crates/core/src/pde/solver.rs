use super::{Grid, ModelSpec, PdeError};
use crate::poly::C64;
use crate::scalar::Field;
use crate::schemes::{reform, SchemeCoefficients};
use nalgebra::Matrix3;
use std::collections::VecDeque;
use std::sync::Arc;

/// Source term `g(t, x)`.
pub type Source = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Everything fixed during a run: grid, model, scheme and step size.
#[derive(Clone)]
pub struct Simulator {
    pub grid: Grid,
    pub model: ModelSpec,
    pub tau: f64,
    pub k: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    beta_hat: Vec<f64>,
    a: Vec<f64>,
    m: Vec<f64>,
    l: Vec<f64>,
    /// `1 / (a_0 - tau m B_0 l)` per mode.
    pivot_inv: Vec<f64>,
    source: Option<Arc<Source>>,
    coords: Vec<Vec<f64>>,
    /// Apply the 2/3 filter to nonlinear terms.
    pub dealias: bool,
}

impl Simulator {
    pub fn new<T: Field>(
        grid: Grid,
        model: ModelSpec,
        scheme: &SchemeCoefficients<T>,
        tau: f64,
    ) -> Result<Self, PdeError> {
        let s = scheme.to_f64();
        let a: Vec<f64> = reform(scheme).a.iter().map(Field::approx).collect();
        let m: Vec<f64> = grid.k2().iter().map(|&k2| model.m_symbol(k2)).collect();
        let l: Vec<f64> = grid.k2().iter().map(|&k2| model.l_symbol(k2)).collect();
        let mut pivot_inv = Vec::with_capacity(m.len());
        for (mode, (mi, li)) in m.iter().zip(&l).enumerate() {
            let p = a[0] - tau * mi * s.beta[0] * li;
            if p == 0.0 || !p.is_finite() {
                return Err(PdeError::IllPosed { mode });
            }
            pivot_inv.push(1.0 / p);
        }
        Ok(Self {
            grid,
            model,
            tau,
            k: s.k,
            alpha: s.alpha,
            beta: s.beta,
            beta_hat: s.beta_hat,
            a,
            m,
            l,
            pivot_inv,
            source: None,
            coords: Vec::new(),
            dealias: false,
        })
    }

    pub fn with_source(mut self, g: Arc<Source>) -> Self {
        self.coords = (0..self.grid.len()).map(|i| self.grid.coords(i)).collect();
        self.source = Some(g);
        self
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    /// Reformed coefficients `a_0..a_{k-1}` used in the increment form.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn m_symbols(&self) -> &[f64] {
        &self.m
    }

    pub fn l_symbols(&self) -> &[f64] {
        &self.l
    }

    /// Spectrum of `f(u)`.
    pub fn nonlinear_hat(&self, u: &[f64]) -> Vec<C64> {
        let fu: Vec<f64> = u.iter().map(|&v| self.model.f(v)).collect();
        let mut fh = self.grid.forward(&fu);
        if self.dealias {
            self.grid.dealias(&mut fh);
        }
        fh
    }

    /// Spectrum of `g(t, .)`, or `None` without a source.
    pub fn source_hat(&self, t: f64) -> Option<Vec<C64>> {
        let g = self.source.as_ref()?;
        let vals: Vec<f64> = self.coords.iter().map(|x| g(t, x)).collect();
        Some(self.grid.forward(&vals))
    }

    /// Builds the history from the `k` starting states `u^0..u^{k-1}`.
    pub fn history(&self, t0: f64, start: &[Vec<f64>]) -> Result<History, PdeError> {
        if start.len() != self.k {
            return Err(PdeError::History { got: start.len(), need: self.k });
        }
        let mut h = History {
            k: self.k,
            n: self.k - 1,
            t0,
            tau: self.tau,
            states: VecDeque::with_capacity(self.k),
            nonlin: VecDeque::with_capacity(self.k),
            sources: VecDeque::with_capacity(self.k),
            current: start[self.k - 1].clone(),
        };
        // A mass-conserving flow keeps the zero mode fixed, and the starter
        // does so up to an ulp per state. Those ulps would otherwise feed a
        // rounding limit cycle in the increment recurrence (a_0 > 1 turns a
        // one-ulp difference into a steady one-ulp drift per step), so
        // rounding-level differences are snapped back. Larger ones are kept.
        let pin_mean = self.model.mass_conserving() && self.source.is_none();
        let mean0 = self.grid.forward(&start[0])[0];
        let snap = MEAN_SNAP * mean0.norm().max(self.grid.len() as f64);
        for (j, u) in start.iter().enumerate() {
            let mut uh = self.grid.forward(u);
            if pin_mean && (uh[0] - mean0).norm() <= snap {
                uh[0] = mean0;
            }
            h.states.push_front(uh);
            h.nonlin.push_front(self.nonlinear_hat(u));
            h.sources
                .push_front(self.source_hat(t0 + j as f64 * self.tau).unwrap_or_default());
        }
        Ok(h)
    }

    /// Advances the history by one step of the multistep scheme, solving
    /// for the increment `u^{n+1} - u^n` mode by mode.
    pub fn step(&self, h: &mut History) -> Result<(), PdeError> {
        let k = self.k;
        if h.states.len() != k {
            return Err(PdeError::History { got: h.states.len(), need: k });
        }
        let tau = self.tau;
        let nm = self.grid.len();
        let mut next = vec![C64::new(0.0, 0.0); nm];
        let has_source = self.source.is_some();
        for (mode, out) in next.iter_mut().enumerate() {
            let mut rhs = C64::new(0.0, 0.0);
            for i in 1..k {
                let d = h.states[i - 1][mode] - h.states[i][mode];
                rhs -= d * self.a[i];
            }
            let un = h.states[0][mode];
            let mut lin = un * self.beta[0];
            let mut nl = C64::new(0.0, 0.0);
            let mut src = C64::new(0.0, 0.0);
            for i in 1..=k {
                lin += h.states[i - 1][mode] * self.beta[i];
                nl += h.nonlin[i - 1][mode] * self.beta_hat[i - 1];
                if has_source {
                    src += h.sources[i - 1][mode] * self.beta_hat[i - 1];
                }
            }
            rhs += (lin * self.l[mode] + nl) * (tau * self.m[mode]) + src * tau;
            *out = un + rhs * self.pivot_inv[mode];
        }
        let u = self.grid.inverse(&next)?;
        let t_next = h.time() + tau;
        h.states.pop_back();
        h.nonlin.pop_back();
        h.sources.pop_back();
        h.nonlin.push_front(self.nonlinear_hat(&u));
        h.sources
            .push_front(self.source_hat(t_next).unwrap_or_default());
        h.states.push_front(next);
        h.current = u;
        h.n += 1;
        Ok(())
    }
}

/// Relative size below which zero-mode differences count as rounding.
const MEAN_SNAP: f64 = 1e-12;

/// The last `k` states `u^n, u^{n-1}, .., u^{n+1-k}` (spectral, newest first)
/// with cached nonlinear and source spectra, plus `u^n` in physical space.
#[derive(Debug, Clone)]
pub struct History {
    pub k: usize,
    /// Index of the newest state.
    pub n: usize,
    pub t0: f64,
    pub tau: f64,
    states: VecDeque<Vec<C64>>,
    nonlin: VecDeque<Vec<C64>>,
    sources: VecDeque<Vec<C64>>,
    current: Vec<f64>,
}

impl History {
    pub fn time(&self) -> f64 {
        self.t0 + self.n as f64 * self.tau
    }

    /// Physical `u^n`.
    pub fn current(&self) -> &[f64] {
        &self.current
    }

    /// Spectrum of `u^{n-i}`.
    pub fn spectrum(&self, i: usize) -> &[C64] {
        &self.states[i]
    }

    /// Spectrum of `delta u^{n-i} = u^{n-i} - u^{n-i-1}`, `i < k - 1`.
    pub fn delta(&self, i: usize) -> Vec<C64> {
        self.states[i]
            .iter()
            .zip(&self.states[i + 1])
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// One step of the multistep scheme; see [`Simulator::step`].
pub fn step(history: &mut History, sim: &Simulator) -> Result<(), PdeError> {
    sim.step(history)
}

const GAUSS_SQRT15: f64 = 3.872_983_346_207_417;

fn gauss_tableau() -> ([[f64; 3]; 3], [f64; 3], [f64; 3]) {
    let s = GAUSS_SQRT15;
    let a = [
        [5.0 / 36.0, 2.0 / 9.0 - s / 15.0, 5.0 / 36.0 - s / 30.0],
        [5.0 / 36.0 + s / 24.0, 2.0 / 9.0, 5.0 / 36.0 - s / 24.0],
        [5.0 / 36.0 + s / 30.0, 2.0 / 9.0 + s / 15.0, 5.0 / 36.0],
    ];
    let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
    let c = [0.5 - s / 10.0, 0.5, 0.5 + s / 10.0];
    (a, b, c)
}

/// Fixed-point residual target for the collocation stages (max norm, scaled
/// by `max(1, |U|)`).
pub const STARTER_TOL: f64 = 1e-14;
const STARTER_MAX_ITER: usize = 200;
const STARTER_MAX_HALVINGS: u32 = 6;

/// `u^0..u^{k-1}` from `u0` by the 3-stage Gauss collocation method (order
/// 6). Stage equations are solved by fixed-point iteration on the nonlinear
/// and source terms with the stiff linear part inverted exactly per mode;
/// if the iteration stalls, the substep is halved, down to `tau / 64`.
pub fn gauss_rk6_start(sim: &Simulator, u0: &[f64], t0: f64) -> Result<Vec<Vec<f64>>, PdeError> {
    let mut out = vec![u0.to_vec()];
    let mut u = u0.to_vec();
    let mut t = t0;
    for _ in 1..sim.k {
        let mut done = false;
        for halvings in 0..=STARTER_MAX_HALVINGS {
            let sub = 1usize << halvings;
            let h = sim.tau / sub as f64;
            let mut v = u.clone();
            let mut ok = true;
            for j in 0..sub {
                match gauss_step(sim, &v, t + j as f64 * h, h) {
                    Some(w) => v = w,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                u = v;
                done = true;
                break;
            }
        }
        if !done {
            return Err(PdeError::StarterFailure);
        }
        t += sim.tau;
        out.push(u.clone());
    }
    Ok(out)
}

fn gauss_step(sim: &Simulator, u: &[f64], t: f64, h: f64) -> Option<Vec<f64>> {
    let (a, b, c) = gauss_tableau();
    let grid = &sim.grid;
    let nm = grid.len();
    let am = Matrix3::from_fn(|i, j| a[i][j]);
    let mut inv = Vec::with_capacity(nm);
    let mut lambda = Vec::with_capacity(nm);
    for mode in 0..nm {
        let lam = sim.m[mode] * sim.l[mode];
        let mtx = Matrix3::identity() - am * (h * lam);
        inv.push(mtx.try_inverse()?);
        lambda.push(lam);
    }
    let uh = grid.forward(u);
    let explicit = |v: &[f64], ts: f64| -> Vec<C64> {
        let mut n = sim.nonlinear_hat(v);
        for (x, m) in n.iter_mut().zip(&sim.m) {
            *x *= *m;
        }
        if let Some(g) = sim.source_hat(ts) {
            for (x, y) in n.iter_mut().zip(g) {
                *x += y;
            }
        }
        n
    };
    let n0 = explicit(u, t);
    let mut nonlin: Vec<Vec<C64>> = (0..3)
        .map(|s| if c[s] == 0.0 { n0.clone() } else { explicit(u, t + c[s] * h) })
        .collect();
    let mut stages: Vec<Vec<f64>> = vec![u.to_vec(); 3];
    let mut stage_hat: Vec<Vec<C64>> = vec![uh.clone(); 3];
    let mut converged = false;
    for _ in 0..STARTER_MAX_ITER {
        for mode in 0..nm {
            let mut rhs = [uh[mode]; 3];
            for (i, r) in rhs.iter_mut().enumerate() {
                for j in 0..3 {
                    *r += nonlin[j][mode] * (h * a[i][j]);
                }
            }
            let mi = &inv[mode];
            for (i, sh) in stage_hat.iter_mut().enumerate() {
                sh[mode] = rhs[0] * mi[(i, 0)] + rhs[1] * mi[(i, 1)] + rhs[2] * mi[(i, 2)];
            }
        }
        let mut change: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for s in 0..3 {
            let new = grid.inverse(&stage_hat[s]).ok()?;
            for (x, y) in new.iter().zip(&stages[s]) {
                change = change.max((x - y).abs());
                scale = scale.max(x.abs());
            }
            stages[s] = new;
        }
        if !change.is_finite() {
            return None;
        }
        for s in 0..3 {
            nonlin[s] = explicit(&stages[s], t + c[s] * h);
        }
        if change <= STARTER_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let mut next = uh;
    for mode in 0..nm {
        for s in 0..3 {
            let k_s = stage_hat[s][mode] * lambda[mode] + nonlin[s][mode];
            next[mode] += k_s * (h * b[s]);
        }
    }
    grid.inverse(&next).ok()
}
