use super::{energy, gauss_rk6_start, modified_energy, Grid, ModelSpec, PdeError, Simulator};
use crate::certify::{certify_scheme, DissipationReport};
use crate::scalar::Field;
use crate::schemes::{lmm6, SchemeCoefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// An exact solution together with the source that makes it one.
pub trait Manufactured: Send + Sync {
    fn model(&self) -> ModelSpec;
    fn exact(&self, t: f64, x: &[f64]) -> f64;
    fn source(&self, t: f64, x: &[f64]) -> f64;
}

/// `u = cos t sin x sin y` for `u_t = eps^2 Lap u + u - u^3 + g`.
#[derive(Debug, Clone, Copy)]
pub struct AllenCahnExact {
    pub epsilon: f64,
}

impl Manufactured for AllenCahnExact {
    fn model(&self) -> ModelSpec {
        ModelSpec::allen_cahn(self.epsilon)
    }

    fn exact(&self, t: f64, x: &[f64]) -> f64 {
        t.cos() * x[0].sin() * x[1].sin()
    }

    fn source(&self, t: f64, x: &[f64]) -> f64 {
        let s = x[0].sin() * x[1].sin();
        let c = t.cos();
        -t.sin() * s + 2.0 * self.epsilon * self.epsilon * c * s + c.powi(3) * s.powi(3) - c * s
    }
}

/// `u = cos t sin x sin y` for `u_t = Lap[(1 + Lap)^2 u + u^3 - eps u] + g`.
#[derive(Debug, Clone, Copy)]
pub struct PfcExact {
    pub epsilon: f64,
}

impl Manufactured for PfcExact {
    fn model(&self) -> ModelSpec {
        ModelSpec::pfc(self.epsilon)
    }

    fn exact(&self, t: f64, x: &[f64]) -> f64 {
        t.cos() * x[0].sin() * x[1].sin()
    }

    fn source(&self, t: f64, x: &[f64]) -> f64 {
        let (sx, sy) = (x[0].sin(), x[1].sin());
        let s = sx * sy;
        let c = t.cos();
        // Lap(sx^3 sy^3) = 6 sx sy^3 + 6 sx^3 sy - 18 sx^3 sy^3
        let lap_cube = 6.0 * sx * sy.powi(3) + 6.0 * sx.powi(3) * sy - 18.0 * (sx * sy).powi(3);
        -t.sin() * s + 2.0 * (1.0 - self.epsilon) * c * s - c.powi(3) * lap_cube
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub tau: f64,
    pub e_inf: f64,
    pub rate_inf: Option<f64>,
    pub e_2: f64,
    pub rate_2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,tau,e_inf,rate_inf,e_2,rate_2\n");
        let rate = |r: Option<f64>| r.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{},{:.16e},{}",
                r.n,
                r.tau,
                r.e_inf,
                rate(r.rate_inf),
                r.e_2,
                rate(r.rate_2)
            );
        }
        out
    }
}

/// Errors `max_{k-1 <= n <= N} |u^n - u(t_n)|` in the max norm and the
/// cell-weighted L2 norm for `tau = t_final / N`, with rates between
/// consecutive entries of `n_list`. Runs for different `N` execute in parallel.
pub fn convergence_study<T: Field + Sync>(
    problem: Arc<dyn Manufactured>,
    scheme: &SchemeCoefficients<T>,
    grid: &Grid,
    n_list: &[usize],
    t_final: f64,
) -> Result<ConvergenceTable, PdeError> {
    let errors: Result<Vec<(f64, f64)>, PdeError> = n_list
        .par_iter()
        .map(|&n| run_manufactured(problem.clone(), scheme, grid, n, t_final))
        .collect();
    let errors = errors?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(n_list.len());
    for (i, (&n, &(e_inf, e_2))) in n_list.iter().zip(&errors).enumerate() {
        let rate = |prev: f64, cur: f64| {
            let ratio = n as f64 / n_list[i - 1] as f64;
            (prev / cur).ln() / ratio.ln()
        };
        rows.push(ConvergenceRow {
            n,
            tau: t_final / n as f64,
            e_inf,
            rate_inf: (i > 0).then(|| rate(errors[i - 1].0, e_inf)),
            e_2,
            rate_2: (i > 0).then(|| rate(errors[i - 1].1, e_2)),
        });
    }
    Ok(ConvergenceTable { rows })
}

fn run_manufactured<T: Field>(
    problem: Arc<dyn Manufactured>,
    scheme: &SchemeCoefficients<T>,
    grid: &Grid,
    n_steps: usize,
    t_final: f64,
) -> Result<(f64, f64), PdeError> {
    let tau = t_final / n_steps as f64;
    let p = problem.clone();
    let source = Arc::new(move |t: f64, x: &[f64]| p.source(t, x));
    let sim = Simulator::new(grid.clone(), problem.model(), scheme, tau)?.with_source(source);
    let coords: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.coords(i)).collect();
    let exact_at = |t: f64| -> Vec<f64> { coords.iter().map(|x| problem.exact(t, x)).collect() };
    let err = |u: &[f64], t: f64| -> (f64, f64) {
        let ex = exact_at(t);
        let mut inf: f64 = 0.0;
        let mut sq = 0.0;
        for (a, b) in u.iter().zip(&ex) {
            let d = a - b;
            inf = inf.max(d.abs());
            sq += d * d;
        }
        (inf, (sq * grid.cell_volume()).sqrt())
    };
    let start = gauss_rk6_start(&sim, &exact_at(0.0), 0.0)?;
    let k = sim.k;
    let (mut e_inf, mut e_2) = err(&start[k - 1], (k - 1) as f64 * tau);
    let mut h = sim.history(0.0, &start)?;
    while h.n < n_steps {
        sim.step(&mut h)?;
        let (a, b) = err(h.current(), h.n as f64 * tau);
        e_inf = e_inf.max(a);
        e_2 = e_2.max(b);
    }
    Ok((e_inf, e_2))
}

/// Square perturbation patch of the grain-growth initial datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfcConfig {
    pub n: usize,
    pub length: f64,
    pub tau: f64,
    pub t_final: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub mean: f64,
    pub patches: Vec<Patch>,
    /// Write a snapshot every this many steps (and at the end).
    pub snapshot_every: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub dealias: bool,
}

impl PfcConfig {
    /// Full-size setup: `(0, 256)^2`, 512 points per axis, `T = 3000`.
    pub fn paper_scale() -> Self {
        Self::scaled(512, 256.0, 3000.0)
    }

    /// Desk-size setup: `(0, 128)^2`, 128 points per axis, `T = 200`.
    pub fn desk_scale() -> Self {
        Self::scaled(128, 128.0, 200.0)
    }

    /// Patch centres scale with the domain; the patch side stays 10.
    pub fn scaled(n: usize, length: f64, t_final: f64) -> Self {
        let s = length / 256.0;
        let patch = |cx: f64, cy: f64, amplitude: f64| Patch {
            cx: cx * s,
            cy: cy * s,
            side: 10.0,
            amplitude,
        };
        Self {
            n,
            length,
            tau: 0.01,
            t_final,
            seed: 1,
            epsilon: 0.25,
            mean: 0.285,
            patches: vec![
                patch(64.0, 196.0, 0.25),
                patch(128.0, 64.0, 0.3),
                patch(196.0, 196.0, 0.35),
            ],
            snapshot_every: None,
            out_dir: None,
            dealias: false,
        }
    }

    /// `mean + A(x, y) * rand(x, y)`, noise uniform on `(-1, 1)` drawn for
    /// every grid point in storage order.
    pub fn initial_datum(&self, grid: &Grid) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..grid.len())
            .map(|i| {
                let noise: f64 = rng.gen_range(-1.0..1.0);
                let x = grid.coords(i);
                let amp = self
                    .patches
                    .iter()
                    .find(|p| {
                        (x[0] - p.cx).abs() <= p.side / 2.0 && (x[1] - p.cy).abs() <= p.side / 2.0
                    })
                    .map_or(0.0, |p| p.amplitude);
                self.mean + amp * noise
            })
            .collect()
    }
}

/// `mean + amplitude * rand`, uniform noise on `(-1, 1)` in storage order.
pub fn random_datum(grid: &Grid, mean: f64, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len())
        .map(|_| mean + amplitude * rng.gen_range(-1.0..1.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    /// Defined once `k` states exist.
    pub modified_energy: Option<f64>,
    pub mass: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub trace: Vec<TraceRow>,
    pub report: DissipationReport,
    /// Energy of the constant state `u = 0`; for PFC this is
    /// `(1 + eps)^2 |Omega| / 4`.
    pub c0: f64,
    pub max_abs: f64,
    /// `max_n |mean(u^n) - mean(u^0)| / |mean(u^0)|` (absolute if the mean is 0).
    pub mass_drift: f64,
    /// Steps with `E_G^{n+1} > E_G^n + 1e-9 max(1, |E_G^n|)`.
    pub energy_violations: usize,
    /// Largest `E_G^{n+1} - E_G^n` seen.
    pub max_energy_increase: f64,
    pub warnings: Vec<String>,
}

/// Relative slack in the discrete dissipation check.
pub const DISSIPATION_SLACK: f64 = 1e-9;

/// Everything about a source-free run except the scheme and the initial datum.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub grid: Grid,
    pub model: ModelSpec,
    pub tau: f64,
    pub t_final: f64,
    /// Write a snapshot every this many steps (and at the end) into `out_dir`.
    pub snapshot_every: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub dealias: bool,
}

/// Runs the scheme from `u0` to `t_final`, tracing `E`, `E_G`, mass and the
/// max norm. A refused certificate leaves `E_G` empty and adds a warning.
pub fn run_gradient_flow<T: Field>(
    spec: &RunSpec,
    scheme: &SchemeCoefficients<T>,
    u0: &[f64],
) -> Result<RunOutcome, PdeError> {
    let grid = &spec.grid;
    let model = spec.model;
    if u0.len() != grid.len() {
        return Err(PdeError::Grid(format!(
            "initial datum has {} values, grid has {}",
            u0.len(),
            grid.len()
        )));
    }
    let report = certify_scheme(scheme, &model.constants())
        .map_err(|e| PdeError::Invariant(e.to_string()))?;
    let mut warnings = Vec::new();
    if let Some(r) = &report.refusal {
        warnings.push(format!("scheme not certified ({r}); E_G is not traced"));
    }
    if let Some(tm) = report.tau_max {
        if spec.tau > tm {
            warnings.push(format!(
                "tau = {} exceeds the certified bound tau_max = {tm:.6e}; dissipation is checked empirically",
                spec.tau
            ));
        }
    }
    let sim = Simulator::new(grid.clone(), model, scheme, spec.tau)?.with_dealias(spec.dealias);
    let n_steps = (spec.t_final / spec.tau).round() as usize;
    let mean = |u: &[f64]| compensated_sum(u) / u.len() as f64;
    let max_abs = |u: &[f64]| u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mass0 = mean(u0);
    let certified = report.is_certified();
    let snap_every = spec.snapshot_every.filter(|&e| e > 0);
    let snap_dir = spec.out_dir.as_deref();

    let start = gauss_rk6_start(&sim, u0, 0.0)?;
    let mut trace = Vec::with_capacity(n_steps + 1);
    for (j, u) in start.iter().enumerate().take(n_steps + 1) {
        trace.push(TraceRow {
            step: j,
            t: j as f64 * spec.tau,
            energy: energy(grid, &model, u),
            modified_energy: None,
            mass: mean(u),
            max_abs: max_abs(u),
        });
    }
    if let (Some(every), Some(dir)) = (snap_every, snap_dir) {
        for (j, u) in start.iter().enumerate().take(n_steps + 1) {
            if j % every == 0 || j == n_steps {
                write_snapshot(dir, j, grid, j as f64 * spec.tau, u)?;
            }
        }
    }

    let mut violations = 0;
    let mut max_increase = f64::NEG_INFINITY;
    if n_steps + 1 >= start.len() {
        let mut h = sim.history(0.0, &start)?;
        let mut prev = None;
        if certified {
            let eg = modified_energy(&sim, &h, &report)?;
            trace.last_mut().expect("k >= 1 states").modified_energy = Some(eg);
            prev = Some(eg);
        }
        while h.n < n_steps {
            sim.step(&mut h)?;
            let u = h.current();
            let eg = if certified {
                Some(modified_energy(&sim, &h, &report)?)
            } else {
                None
            };
            if let (Some(e), Some(p)) = (eg, prev) {
                let inc = e - p;
                max_increase = max_increase.max(inc);
                if inc > DISSIPATION_SLACK * p.abs().max(1.0) {
                    violations += 1;
                }
            }
            prev = eg;
            trace.push(TraceRow {
                step: h.n,
                t: h.time(),
                energy: energy(grid, &model, u),
                modified_energy: eg,
                mass: mean(u),
                max_abs: max_abs(u),
            });
            if let (Some(every), Some(dir)) = (snap_every, snap_dir) {
                if h.n % every == 0 || h.n == n_steps {
                    write_snapshot(dir, h.n, grid, h.time(), u)?;
                }
            }
        }
    }

    let overall_max = trace.iter().map(|r| r.max_abs).fold(0.0, f64::max);
    if overall_max >= model.radius {
        warnings.push(format!(
            "max |u| = {overall_max} reached the truncation radius {}; the certificate does not apply",
            model.radius
        ));
    }
    let scale = if mass0 == 0.0 { 1.0 } else { mass0.abs() };
    let mass_drift = trace
        .iter()
        .map(|r| (r.mass - mass0).abs() / scale)
        .fold(0.0, f64::max);
    Ok(RunOutcome {
        trace,
        c0: energy(grid, &model, &vec![0.0; grid.len()]),
        report,
        max_abs: overall_max,
        mass_drift,
        energy_violations: violations,
        max_energy_increase: max_increase,
        warnings,
    })
}

/// Grain growth from three noisy patches with the sixth-order scheme.
pub fn pfc_experiment(cfg: &PfcConfig) -> Result<RunOutcome, PdeError> {
    let grid = Grid::square(cfg.n, cfg.length)?;
    let u0 = cfg.initial_datum(&grid);
    let spec = RunSpec {
        grid,
        model: ModelSpec::pfc(cfg.epsilon),
        tau: cfg.tau,
        t_final: cfg.t_final,
        snapshot_every: cfg.snapshot_every,
        out_dir: cfg.out_dir.clone(),
        dealias: cfg.dealias,
    };
    run_gradient_flow(&spec, &lmm6(), &u0)
}

/// Neumaier summation; a plain sum of 10^4 similar values carries a bias
/// near 1e-13 relative, which would swamp the mass check.
fn compensated_sum(v: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in v {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Writes `step,t,E,E_G,mass,max_abs` rows after optional `# ` header lines.
pub fn write_trace_csv(path: &Path, header: &[String], rows: &[TraceRow]) -> Result<(), PdeError> {
    let mut out = String::new();
    for line in header {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("step,t,E,E_G,mass,max_abs\n");
    for r in rows {
        let eg = r
            .modified_energy
            .map(|v| format!("{v:.16e}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            r.step, r.t, r.energy, eg, r.mass, r.max_abs
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub grid: Vec<usize>,
    pub domain: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

/// `snapshot_<step>.bin` (row-major little-endian f64) plus a JSON sidecar.
pub fn write_snapshot(dir: &Path, step: usize, grid: &Grid, t: f64, u: &[f64]) -> Result<PathBuf, PdeError> {
    std::fs::create_dir_all(dir)?;
    let bin = dir.join(format!("snapshot_{step:08}.bin"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&bin)?);
    for v in u {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    let meta = SnapshotMeta {
        grid: grid.n.clone(),
        domain: grid.lengths.clone(),
        t,
        step,
    };
    std::fs::write(bin.with_extension("json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(bin)
}

pub fn read_snapshot(bin: &Path) -> Result<(SnapshotMeta, Vec<f64>), PdeError> {
    let meta: SnapshotMeta = serde_json::from_str(&std::fs::read_to_string(bin.with_extension("json"))?)?;
    let bytes = std::fs::read(bin)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((meta, data))
}
