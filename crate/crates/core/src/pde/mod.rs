//! Fourier pseudo-spectral solver for periodic gradient flows
//! `u_t = M (L u + f(u)) + g` with `M`, `L` diagonal in Fourier space.

mod energy;
mod experiments;
mod grid;
mod solver;

pub use energy::{energy, modified_energy};
pub use experiments::{
    convergence_study, pfc_experiment, random_datum, read_snapshot, run_gradient_flow, write_snapshot,
    write_trace_csv, AllenCahnExact, ConvergenceRow, ConvergenceTable, Manufactured, Patch,
    PfcConfig, PfcExact, RunOutcome, RunSpec, SnapshotMeta, TraceRow, DISSIPATION_SLACK,
};
pub use grid::Grid;
pub use solver::{gauss_rk6_start, step, History, Simulator, Source};

use crate::certify::ModelConstants;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("zero pivot in the implicit solve at mode {mode}")]
    IllPosed { mode: usize },
    #[error("inverse transform left an imaginary residue of {residue:e}")]
    Hermitian { residue: f64 },
    #[error("Gauss starter did not converge even with substep tau/64")]
    StarterFailure,
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("history holds {got} states, the scheme needs {need}")]
    History { got: usize, need: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AllenCahn,
    CahnHilliard,
    Pfc,
    /// `M = -1`, `L = -eps^2 Laplacian`, `f = 0`: a diagonal linear test flow.
    Linear,
}

/// Model symbols and pointwise nonlinearity. `radius` is the truncation
/// radius `R` behind the Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub epsilon: f64,
    pub radius: f64,
}

impl ModelSpec {
    pub fn allen_cahn(epsilon: f64) -> Self {
        Self { kind: ModelKind::AllenCahn, epsilon, radius: 1.0 }
    }

    pub fn cahn_hilliard(epsilon: f64) -> Self {
        Self { kind: ModelKind::CahnHilliard, epsilon, radius: 1.0 }
    }

    pub fn pfc(epsilon: f64) -> Self {
        Self { kind: ModelKind::Pfc, epsilon, radius: 2.0 }
    }

    pub fn linear(epsilon: f64) -> Self {
        Self { kind: ModelKind::Linear, epsilon, radius: 1.0 }
    }

    pub fn with_radius(self, radius: f64) -> Self {
        Self { radius, ..self }
    }

    /// Fourier symbol of `M` at `|xi|^2 = k2`.
    pub fn m_symbol(&self, k2: f64) -> f64 {
        match self.kind {
            ModelKind::AllenCahn | ModelKind::Linear => -1.0,
            ModelKind::CahnHilliard | ModelKind::Pfc => -k2,
        }
    }

    /// Fourier symbol of `L` at `|xi|^2 = k2`.
    pub fn l_symbol(&self, k2: f64) -> f64 {
        match self.kind {
            ModelKind::AllenCahn | ModelKind::CahnHilliard | ModelKind::Linear => {
                self.epsilon * self.epsilon * k2
            }
            ModelKind::Pfc => (1.0 - k2).powi(2) + 1.0,
        }
    }

    /// Linear coefficient `c` in `f(u) = u^3 - c u`.
    fn shift(&self) -> f64 {
        match self.kind {
            ModelKind::Pfc => 1.0 + self.epsilon,
            _ => 1.0,
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::Linear => 0.0,
            _ => u * u * u - self.shift() * u,
        }
    }

    /// Potential `F` with `F' = f`, shifted to be nonnegative.
    pub fn potential(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::Linear => 0.0,
            _ => 0.25 * (u * u - self.shift()).powi(2),
        }
    }

    pub fn mass_conserving(&self) -> bool {
        matches!(self.kind, ModelKind::CahnHilliard | ModelKind::Pfc)
    }

    /// `max_{|s| <= R} |f'(s)| = max(|3R^2 - c|, c)`.
    pub fn ell_f(&self) -> f64 {
        match self.kind {
            ModelKind::Linear => 0.0,
            _ => {
                let c = self.shift();
                (3.0 * self.radius * self.radius - c).abs().max(c)
            }
        }
    }

    /// `(zeta, eta)` of the interpolation bound
    /// `|v| <= zeta |(-M)^{-1/2} v|^eta |L^{1/2} v|^{1-eta}`.
    pub fn zeta_eta(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::AllenCahn | ModelKind::Linear => (1.0, 1.0),
            ModelKind::CahnHilliard => (self.epsilon.powf(-0.5), 0.5),
            ModelKind::Pfc => ((2.0 * 2f64.sqrt() - 2.0).powf(-0.25), 0.5),
        }
    }

    /// Constants for [`crate::certify::certify_scheme`]. The linear model has
    /// `ell_f = 0`, which certification rejects.
    pub fn constants(&self) -> ModelConstants {
        let (zeta, eta) = self.zeta_eta();
        ModelConstants { ell_f: self.ell_f(), zeta, eta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lipschitz_constants() {
        assert_eq!(ModelSpec::pfc(0.25).ell_f(), 10.75);
        assert_eq!(ModelSpec::allen_cahn(0.01).ell_f(), 2.0);
        assert_eq!(ModelSpec::pfc(0.25).with_radius(0.5).ell_f(), 1.25);
    }

    #[test]
    fn potentials_and_symbols() {
        let ac = ModelSpec::allen_cahn(0.1);
        assert_eq!(ac.potential(1.0), 0.0);
        assert_eq!(ac.potential(-1.0), 0.0);
        assert_eq!(ac.m_symbol(4.0), -1.0);
        assert!((ac.l_symbol(4.0) - 0.04).abs() < 1e-15);
        let pfc = ModelSpec::pfc(0.25);
        assert!((pfc.potential(0.0) - 1.25f64.powi(2) / 4.0).abs() < 1e-15);
        assert_eq!(pfc.l_symbol(1.0), 1.0);
        assert_eq!(pfc.m_symbol(0.0), 0.0);
        assert!(pfc.mass_conserving() && !ac.mass_conserving());
        let (z, e) = ModelSpec::cahn_hilliard(0.04).zeta_eta();
        assert!((z - 5.0).abs() < 1e-12 && e == 0.5);
    }

    #[test]
    fn f_is_derivative_of_potential() {
        for m in [ModelSpec::allen_cahn(0.1), ModelSpec::pfc(0.25)] {
            for u in [-1.3, -0.2, 0.4, 1.7] {
                let h = 1e-6;
                let fd = (m.potential(u + h) - m.potential(u - h)) / (2.0 * h);
                assert!((fd - m.f(u)).abs() < 1e-8);
            }
        }
    }
}
