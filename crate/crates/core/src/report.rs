//! Solver output shared by the torus solvers.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::torus_field::Field;
use crate::vortex_background::TorusBackground;

/// Outcome of the topological/non-topological dichotomy test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Topological,
    NonTopologicalSuspect,
    NotConverged,
}

/// Converged torus solution in the smooth variable v = u - u0.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// ln(e^{u0} e^v); at grid-point vortices the band-limited u0 stands in for -∞.
    pub u: Field,
    pub v: Field,
    /// d = ∫u = mean of v, since u0 has zero mean.
    pub mean_d: f64,
    /// Residual norm per iteration (sup-norm for the monotone scheme, L² for Newton).
    pub residual_history: Vec<f64>,
    /// Sup-norm of each update.
    pub increment_history: Vec<f64>,
    pub classification: Classification,
    pub diagnostics: BTreeMap<String, f64>,
}

impl SolveReport {
    pub(crate) fn new(bg: &TorusBackground, v: Field) -> Self {
        let u = reconstruct_u(bg, &v);
        let mean_d = v.mean();
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("epsilon".into(), bg.epsilon());
        diagnostics.insert("grid_resolved".into(), if bg.resolved() { 1.0 } else { 0.0 });
        Self {
            u,
            v,
            mean_d,
            residual_history: Vec::new(),
            increment_history: Vec::new(),
            classification: Classification::NotConverged,
            diagnostics,
        }
    }

    /// Report for a smooth variable obtained elsewhere, e.g. read back from a dump.
    pub fn from_smooth(bg: &TorusBackground, v: Field) -> crate::error::Result<Self> {
        v.same_grid(bg.u0())?;
        let mut report = Self::new(bg, v);
        report.classification = crate::monotone_solver::classify_dichotomy(&mut report, bg);
        Ok(report)
    }

    /// e^u = e^{u0} e^v, finite everywhere.
    pub fn exp_u(&self, bg: &TorusBackground) -> Field {
        bg.exp_u0().zip_map(&self.v, |e, v| e * v.exp()).expect("report and background share a grid")
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }
}

/// u = ln e^{u0} + v.
pub fn reconstruct_u(bg: &TorusBackground, v: &Field) -> Field {
    bg.log_exp_u0().zip_map(v, |a, b| a + b).expect("background and field share a grid")
}
