mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edlmm::barrier::{search_feasible, verify_farkas_certificate};
use edlmm::certify::{certify_scheme_with, Branch, CertifyError, ModelConstants};
use edlmm::pde::{
    convergence_study, random_datum, run_gradient_flow, write_trace_csv, AllenCahnExact, Grid,
    Manufactured, ModelSpec, PdeError, PfcConfig, PfcExact, RunSpec,
};
use edlmm::poly::C64;
use edlmm::schemes::{
    bdf_coefficients, lmm6, lmm_from_parameters, parse_fraction, reform, ParameterVector,
    SchemeError,
};
use edlmm::stability::{char_polys, region_slice, root_condition, stability_angle, Plane, SliceGrid};
use edlmm::Scheme;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

/// Energy-dissipative IMEX multistep schemes: construction, certification,
/// stability analysis and spectral simulation of gradient flows.
///
/// Exit status: 0 success, 1 certification refused, 2 usage error,
/// 3 internal invariant violated. Relative output paths are placed under
/// $EDLMM_OUT_DIR when it is set.
#[derive(Debug, Parser)]
#[command(name = "edlmm", version, args_override_self = true)]
struct Cli {
    /// File of `key = value` lines used as default flags; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Build a coefficient table and write it as JSON.
    Scheme {
        #[command(subcommand)]
        #[serde(flatten)]
        action: SchemeCmd,
    },
    /// Check the energy-dissipation conditions and report G matrices and tau_max.
    Certify(CertifyArgs),
    /// Exact order barrier tools.
    Barrier {
        #[command(subcommand)]
        #[serde(flatten)]
        action: BarrierCmd,
    },
    /// Linear stability of a scheme.
    Stability {
        #[command(subcommand)]
        #[serde(flatten)]
        action: StabilityCmd,
    },
    /// Run a gradient-flow simulation and trace energies.
    Simulate(SimulateArgs),
    /// Temporal convergence study against a manufactured solution.
    Converge(ConvergeArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
enum SchemeCmd {
    /// IMEX-BDFk.
    Bdf {
        /// Number of steps, 1 to 6.
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutArg,
    },
    /// Scheme from its free parameters w_1..w_k.
    FromParams {
        /// Comma-separated fractions, e.g. `64/5,-141/5,111`.
        #[arg(long, allow_hyphen_values = true)]
        w: String,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutArg,
    },
    /// The sixth-order six-step scheme with a 26 degree stability angle.
    Lmm6Paper {
        #[command(flatten)]
        #[serde(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Args, Serialize)]
struct OutArg {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BranchArg {
    Inside,
    Outside,
}

#[derive(Debug, Args, Serialize)]
struct CertifyArgs {
    /// Scheme JSON as written by `scheme`.
    #[arg(long)]
    scheme: PathBuf,
    /// Lipschitz constant of the nonlinearity.
    #[arg(long)]
    ell_f: f64,
    /// Interpolation constant zeta.
    #[arg(long)]
    zeta: f64,
    /// Interpolation exponent eta in (0, 1].
    #[arg(long)]
    eta: f64,
    /// Certify at this fraction of the largest admissible gamma.
    #[arg(long, default_value_t = 1.0)]
    gamma_fraction: f64,
    /// Which root of each on-circle or reciprocal pair goes into the factor.
    #[arg(long, value_enum, default_value_t = BranchArg::Inside)]
    branch: BranchArg,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
enum BarrierCmd {
    /// Check the exact Farkas certificate that rules out seven steps.
    Verify {
        #[command(flatten)]
        #[serde(flatten)]
        out: OutArg,
    },
    /// Search parameter space for a scheme satisfying both positivity conditions.
    Search {
        #[arg(long)]
        k: usize,
        /// Maximum number of objective evaluations.
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PlaneArg {
    Implicit,
    Explicit,
    Imex,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
enum StabilityCmd {
    /// Stable/unstable mask on a rectangle of one plane, as CSV `re,im,stable`.
    Slice {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long, value_enum)]
        plane: PlaneArg,
        /// Fixed implicit value `re,im` for the imex plane.
        #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
        zi: String,
        /// `re_min,re_max,im_min,im_max`; a per-plane default otherwise.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long, default_value_t = 400)]
        nx: usize,
        #[arg(long, default_value_t = 400)]
        ny: usize,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutArg,
    },
    /// A(theta) stability angle in degrees and the root condition.
    Angle {
        #[arg(long)]
        scheme: PathBuf,
        #[command(flatten)]
        #[serde(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    /// Allen-Cahn.
    Ac,
    /// Cahn-Hilliard.
    Ch,
    /// Phase-field crystal.
    Pfc,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Scheme JSON; the sixth-order scheme when omitted.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Model parameter; 0.25 for pfc, 0.1 otherwise.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Grid points per axis (even).
    #[arg(long, default_value_t = 128)]
    grid: usize,
    /// Side length of the square periodic domain.
    #[arg(long, default_value_t = 128.0)]
    domain: f64,
    #[arg(long, default_value_t = 0.01)]
    tau: f64,
    /// Final time.
    #[arg(long = "T", default_value_t = 200.0)]
    t_final: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Mean of the initial datum for ac/ch (pfc uses 0.285).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mean: f64,
    /// Noise amplitude of the initial datum for ac/ch (pfc uses its three patches).
    #[arg(long, default_value_t = 0.05)]
    amplitude: f64,
    /// Energy trace CSV.
    #[arg(long, default_value = "trace.csv")]
    trace: PathBuf,
    /// `every:N` writes a snapshot every N steps.
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long, default_value = "snapshots")]
    snapshot_dir: PathBuf,
    /// Apply the 2/3-rule filter to the nonlinear term.
    #[arg(long)]
    dealias: bool,
    /// Run summary JSON; standard output when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ExampleArg {
    Ac,
    Pfc,
}

#[derive(Debug, Args, Serialize)]
struct ConvergeArgs {
    #[arg(long, value_enum)]
    example: ExampleArg,
    /// Scheme JSON; the sixth-order scheme when omitted.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Comma-separated step counts.
    #[arg(long = "N", default_value = "25,40,50,64,80")]
    n_list: String,
    /// Grid points per axis on (0, 2 pi)^2.
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    t_final: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// CSV table; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Refused(String),
    Usage(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Refused(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<CertifyError> for Failure {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Model(_) | CertifyError::GammaFraction(_) => Failure::Usage(e.to_string()),
            other => Failure::Invariant(other.to_string()),
        }
    }
}

impl From<PdeError> for Failure {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Grid(_) | PdeError::Io(_) => Failure::Usage(e.to_string()),
            other => Failure::Invariant(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn load_scheme(path: &Path) -> Result<Scheme, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(Scheme::from_json(&text)?)
}

fn scheme_or_default(path: &Option<PathBuf>) -> Result<Scheme, Failure> {
    path.as_deref().map_or_else(|| Ok(lmm6()), load_scheme)
}

fn parse_list<T>(s: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|p| f(p.trim()).ok_or_else(|| Failure::Usage(format!("invalid {what} entry {p:?} in {s:?}"))))
        .collect()
}

/// Writes `text` to `--out` (reporting where) or prints it.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => {
            let written = output::write(p, text).map_err(|e| io_failure(p, e))?;
            println!("wrote {}", written.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn with_config(mut v: Value, config: &Value) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("config".into(), config.clone());
    }
    v
}

fn scheme_doc(s: &Scheme, config: &Value) -> Value {
    let mut v: Value = serde_json::from_str(&s.to_json()).expect("scheme JSON is valid");
    let r = reform(s);
    let strs = |x: &[edlmm::Rational]| x.iter().map(|q| q.to_string()).collect::<Vec<_>>();
    v["reformed"] = json!({
        "a": strs(&r.a),
        "b": strs(&r.b),
        "bhat": strs(&r.b_hat),
        "chat": strs(&r.c_hat),
    });
    with_config(v, config)
}

fn run_scheme(action: &SchemeCmd, config: &Value) -> Result<(), Failure> {
    let (s, out) = match action {
        SchemeCmd::Bdf { k, out } => (bdf_coefficients(*k)?, out),
        SchemeCmd::FromParams { w, out } => {
            let w = w
                .split(',')
                .map(parse_fraction)
                .collect::<Result<Vec<_>, _>>()?;
            (lmm_from_parameters(&ParameterVector::new(w))?, out)
        }
        SchemeCmd::Lmm6Paper { out } => (lmm6(), out),
    };
    emit(&out.out, &output::to_json(&scheme_doc(&s, config)))
}

fn run_certify(a: &CertifyArgs, config: &Value) -> Result<(), Failure> {
    let s = load_scheme(&a.scheme)?;
    let model = ModelConstants { ell_f: a.ell_f, zeta: a.zeta, eta: a.eta };
    let branch = match a.branch {
        BranchArg::Inside => Branch::Inside,
        BranchArg::Outside => Branch::Outside,
    };
    let report = certify_scheme_with(&s, &model, a.gamma_fraction, branch)?;
    let doc = with_config(report.to_json_value(), config);
    emit(&a.out.out, &output::to_json(&doc))?;
    match &report.refusal {
        Some(r) => Err(Failure::Refused(format!("certification refused: {r}"))),
        None => Ok(()),
    }
}

fn run_barrier(action: &BarrierCmd, config: &Value) -> Result<(), Failure> {
    match action {
        BarrierCmd::Verify { out } => {
            let r = verify_farkas_certificate().map_err(|e| Failure::Invariant(format!("FAIL: {e}")))?;
            let strs = |v: &[edlmm::QuadExt]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
            let summary = format!(
                "PASS: Q^T r = 0 for all three kernel vectors; lambda >= 0 with support {:?}; q^T lambda = {} ~ {:.16e} < 0",
                r.support,
                r.q_dot_lambda,
                r.q_dot_lambda.to_f64()
            );
            match &out.out {
                Some(_) => {
                    let doc = json!({
                        "pass": true,
                        "support": r.support,
                        "lambda": strs(&r.lambda),
                        "q_dot_lambda": r.q_dot_lambda.to_string(),
                        "q_dot_lambda_f64": r.q_dot_lambda.to_f64(),
                        "kernel_vectors": r.kernel_vectors.iter().map(|v| strs(v)).collect::<Vec<_>>(),
                    });
                    emit(&out.out, &output::to_json(&with_config(doc, config)))?;
                    println!("{summary}");
                }
                None => println!("{summary}"),
            }
            Ok(())
        }
        BarrierCmd::Search { k, budget, seed, out } => {
            if *k == 0 {
                return Err(Failure::Usage("--k must be positive".into()));
            }
            let r = search_feasible(*k, *budget, *seed);
            let doc = serde_json::to_value(&r).expect("search result serializes");
            emit(&out.out, &output::to_json(&with_config(doc, config)))
        }
    }
}

fn parse_complex(s: &str) -> Result<C64, Failure> {
    let v = parse_list(s, "complex", |p| p.parse::<f64>().ok())?;
    match v[..] {
        [re] => Ok(C64::new(re, 0.0)),
        [re, im] => Ok(C64::new(re, im)),
        _ => Err(Failure::Usage(format!("expected re,im, got {s:?}"))),
    }
}

fn run_stability(action: &StabilityCmd, config: &Value) -> Result<(), Failure> {
    match action {
        StabilityCmd::Slice { scheme, plane, zi, window, nx, ny, out } => {
            let s = load_scheme(scheme)?;
            let plane = match plane {
                PlaneArg::Implicit => Plane::Implicit,
                PlaneArg::Explicit => Plane::Explicit,
                PlaneArg::Imex => Plane::Imex,
            };
            let mut grid = SliceGrid::default_for(plane);
            if let Some(w) = window {
                let v = parse_list(w, "window", |p| p.parse::<f64>().ok())?;
                let [re_min, re_max, im_min, im_max] = v[..] else {
                    return Err(Failure::Usage(format!("--window needs four numbers, got {w:?}")));
                };
                grid = SliceGrid { re_min, re_max, im_min, im_max, ..grid };
            }
            grid.nx = *nx;
            grid.ny = *ny;
            let slice = region_slice(&s, plane, parse_complex(zi)?, grid)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let mut csv = String::new();
            for line in output::header_lines(config) {
                let _ = writeln!(csv, "# {line}");
            }
            csv.push_str("re,im,stable\n");
            for (x, y, st) in slice.rows() {
                let _ = writeln!(csv, "{x:.16e},{y:.16e},{}", u8::from(st));
            }
            emit(&out.out, &csv)
        }
        StabilityCmd::Angle { scheme, out } => {
            let s = load_scheme(scheme)?;
            let rho: Vec<C64> = char_polys(&s.to_f64()).rho.iter().map(|c| C64::new(*c, 0.0)).collect();
            let rc = root_condition(&rho, 1e-7);
            let angle = if rc.zero_stable {
                Some(stability_angle(&s).map_err(|e| Failure::Invariant(e.to_string()))?)
            } else {
                None
            };
            let doc = json!({
                "zero_stable": rc.zero_stable,
                "spectral_radius": rc.spectral_radius(),
                "angle_deg": angle,
            });
            emit(&out.out, &output::to_json(&with_config(doc, config)))?;
            if rc.zero_stable {
                Ok(())
            } else {
                Err(Failure::Refused("scheme is not zero-stable".into()))
            }
        }
    }
}

fn parse_every(s: &str) -> Result<usize, Failure> {
    s.strip_prefix("every:")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("--snapshots expects every:N with N > 0, got {s:?}")))
}

fn run_simulate(a: &SimulateArgs, config: &Value) -> Result<(), Failure> {
    let scheme = scheme_or_default(&a.scheme)?;
    let grid = Grid::square(a.grid, a.domain)?;
    let model = match a.model {
        ModelArg::Ac => ModelSpec::allen_cahn(a.epsilon.unwrap_or(0.1)),
        ModelArg::Ch => ModelSpec::cahn_hilliard(a.epsilon.unwrap_or(0.1)),
        ModelArg::Pfc => ModelSpec::pfc(a.epsilon.unwrap_or(0.25)),
    };
    if !(a.tau > 0.0 && a.t_final >= 0.0) {
        return Err(Failure::Usage("--tau must be positive and --T nonnegative".into()));
    }
    let u0 = match a.model {
        ModelArg::Pfc => {
            let mut cfg = PfcConfig::scaled(a.grid, a.domain, a.t_final);
            cfg.seed = a.seed;
            cfg.initial_datum(&grid)
        }
        _ => random_datum(&grid, a.mean, a.amplitude, a.seed),
    };
    let snapshot_every = a.snapshots.as_deref().map(parse_every).transpose()?;
    let spec = RunSpec {
        grid,
        model,
        tau: a.tau,
        t_final: a.t_final,
        snapshot_every,
        out_dir: snapshot_every.map(|_| output::resolve(&a.snapshot_dir)),
        dealias: a.dealias,
    };
    let out = run_gradient_flow(&spec, &scheme, &u0)?;
    let trace_path = output::resolve(&a.trace);
    if let Some(parent) = trace_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    let mut header = output::header_lines(config);
    header.push(format!("C0={:.16e}", out.c0));
    write_trace_csv(&trace_path, &header, &out.trace)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let last = out.trace.last();
    let summary = json!({
        "steps": last.map(|r| r.step),
        "t_final": last.map(|r| r.t),
        "energy_final": last.map(|r| r.energy),
        "modified_energy_final": last.and_then(|r| r.modified_energy),
        "C0": out.c0,
        "max_abs": out.max_abs,
        "mass_drift": out.mass_drift,
        "energy_violations": out.energy_violations,
        "certified": out.report.is_certified(),
        "tau_max": out.report.tau_max,
        "warnings": out.warnings,
        "trace": trace_path.display().to_string(),
    });
    emit(&a.summary, &output::to_json(&with_config(summary, config)))?;
    // Dissipation is only guaranteed under the certified step bound inside the truncation radius.
    let hypotheses = out.report.tau_max.is_some_and(|t| a.tau <= t) && out.max_abs < model.radius;
    if hypotheses && out.energy_violations > 0 {
        return Err(Failure::Invariant(format!(
            "modified energy increased at {} steps despite tau <= tau_max",
            out.energy_violations
        )));
    }
    Ok(())
}

fn run_converge(a: &ConvergeArgs, config: &Value) -> Result<(), Failure> {
    let scheme = scheme_or_default(&a.scheme)?;
    let n_list = parse_list(&a.n_list, "N", |p| p.parse::<usize>().ok().filter(|&n| n > 0))?;
    let grid = Grid::square(a.grid, 2.0 * std::f64::consts::PI)?;
    let problem: Arc<dyn Manufactured> = match a.example {
        ExampleArg::Ac => Arc::new(AllenCahnExact { epsilon: a.epsilon }),
        ExampleArg::Pfc => Arc::new(PfcExact { epsilon: a.epsilon }),
    };
    let table = convergence_study(problem, &scheme, &grid, &n_list, a.t_final)?;
    let mut csv = String::new();
    for line in output::header_lines(config) {
        let _ = writeln!(csv, "# {line}");
    }
    csv.push_str(&table.to_csv());
    emit(&a.out, &csv)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = serde_json::to_value(&cli.command).expect("arguments serialize");
    match &cli.command {
        Command::Scheme { action } => run_scheme(action, &config),
        Command::Certify(a) => run_certify(a, &config),
        Command::Barrier { action } => run_barrier(action, &config),
        Command::Stability { action } => run_stability(action, &config),
        Command::Simulate(a) => run_simulate(a, &config),
        Command::Converge(a) => run_converge(a, &config),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(config::ConfigError(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Refused(m) | Failure::Usage(m) | Failure::Invariant(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
