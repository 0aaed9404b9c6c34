//! Experiment configuration: TOML schema and validation.

use std::path::{Path, PathBuf};

use csvortex::monotone_solver::MonotoneSettings;
use csvortex::newton_solver::{Damping, NewtonSettings};
use csvortex::perturbative::PerturbSettings;
use csvortex::radial_planar::PlanarVortex;
use csvortex::torus_field::Grid;
use csvortex::vortex_background::{torus_delta, torus_distance, VortexConfiguration};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub solver: SolverKind,
    pub epsilon: EpsilonSpec,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: Vec<CheckName>,
    pub grid: GridSection,
    #[serde(default)]
    pub vortices: Vec<VortexEntry>,
    #[serde(default)]
    pub monotone: MonotoneSection,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub perturbative: PerturbSection,
    #[serde(default)]
    pub checks: CheckSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Monotone,
    Newton,
    Perturbative,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Single(f64),
    Sweep(Vec<f64>),
}

impl EpsilonSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Single(e) => vec![*e],
            Self::Sweep(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Classification,
    Flux,
    LocalizedFlux,
    ExteriorMass,
    ExteriorDecay,
    Pohozaev,
    Subsolution,
    Spectrum,
    Uniqueness,
}

impl CheckName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classification => "classification",
            Self::Flux => "flux",
            Self::LocalizedFlux => "localized_flux",
            Self::ExteriorMass => "exterior_mass",
            Self::ExteriorDecay => "exterior_decay",
            Self::Pohozaev => "pohozaev",
            Self::Subsolution => "subsolution",
            Self::Spectrum => "spectrum",
            Self::Uniqueness => "uniqueness",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

/// Torus point for the torus solvers; planar position relative to the centre for the perturbative one.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexEntry {
    pub x: f64,
    pub y: f64,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonotoneSection {
    pub kappa: Option<f64>,
    pub tol_sup: f64,
    pub max_iter: usize,
    pub start_level: f64,
}

impl Default for MonotoneSection {
    fn default() -> Self {
        let d = MonotoneSettings::default();
        Self { kappa: d.kappa, tol_sup: d.tol_sup, max_iter: d.max_iter, start_level: d.start_level }
    }
}

impl MonotoneSection {
    pub fn settings(&self) -> MonotoneSettings {
        MonotoneSettings {
            kappa: self.kappa,
            tol_sup: self.tol_sup,
            max_iter: self.max_iter,
            start_level: self.start_level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonStart {
    /// v = 0, i.e. u = u0.
    Zero,
    /// The converged maximal solution.
    Monotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingKind {
    None,
    LineSearch,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSection {
    pub tol_res: f64,
    pub max_newton: usize,
    pub krylov_tol: f64,
    pub krylov_max_iter: usize,
    pub damping: DampingKind,
    pub start: NewtonStart,
}

impl Default for NewtonSection {
    fn default() -> Self {
        let d = NewtonSettings::default();
        Self {
            tol_res: d.tol_res,
            max_newton: d.max_newton,
            krylov_tol: d.krylov_tol,
            krylov_max_iter: d.krylov_max_iter,
            damping: DampingKind::LineSearch,
            start: NewtonStart::Zero,
        }
    }
}

impl NewtonSection {
    pub fn settings(&self) -> NewtonSettings {
        NewtonSettings {
            tol_res: self.tol_res,
            max_newton: self.max_newton,
            krylov_tol: self.krylov_tol,
            krylov_max_iter: self.krylov_max_iter,
            damping: match self.damping {
                DampingKind::None => Damping::None,
                DampingKind::LineSearch => Damping::LineSearchHalving,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSection {
    /// Torus point the planar solution is glued at.
    pub center: [f64; 2],
    pub delta: f64,
    pub power: i32,
    pub tol: f64,
    pub max_iter: usize,
    /// Half-width R of the planar box [-R, R]².
    pub half_width: f64,
    /// Interior points per axis of the planar grid.
    pub planar_n: usize,
    /// Radius d of the ball where the rescaled solution is compared with ψ.
    pub compare_radius: f64,
    /// Also run Newton from the constructed solution and report the sup difference.
    pub newton_compare: bool,
}

impl Default for PerturbSection {
    fn default() -> Self {
        let d = PerturbSettings::default();
        Self {
            center: [0.5, 0.5],
            delta: d.delta,
            power: d.power,
            tol: d.tol,
            max_iter: d.max_iter,
            half_width: 30.0,
            planar_n: 383,
            compare_radius: 0.1,
            newton_compare: true,
        }
    }
}

impl PerturbSection {
    pub fn settings(&self) -> PerturbSettings {
        PerturbSettings { delta: self.delta, power: self.power, tol: self.tol, max_iter: self.max_iter }
    }
}

/// Tolerances and parameters of the diagnostics.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    pub flux_rel_tol: f64,
    pub localized_radius: f64,
    pub localized_min_fraction: f64,
    pub mass_radii: Vec<f64>,
    pub decay_radii: Vec<f64>,
    pub pohozaev_radius: f64,
    pub pohozaev_rel_tol: f64,
    /// Vortex indices of the Pohozaev cluster; all vortices when absent.
    pub pohozaev_cluster: Option<Vec<usize>>,
    pub subsolution_slack: f64,
    pub uniqueness_trials: usize,
    pub eigen_tol: Option<f64>,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            flux_rel_tol: 1e-3,
            localized_radius: 10.0,
            localized_min_fraction: 0.99,
            mass_radii: vec![5.0, 10.0, 20.0],
            decay_radii: vec![3.0, 5.0, 7.0, 10.0, 14.0],
            pohozaev_radius: 20.0,
            pohozaev_rel_tol: 0.05,
            pohozaev_cluster: None,
            subsolution_slack: 1e-8,
            uniqueness_trials: 5,
            eigen_tol: None,
        }
    }
}

/// Rejected configuration, reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Configuration text with its source path, parsed and validated.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: ExperimentConfig,
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(LoadedConfig { path: path.to_path_buf(), text, config })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        Grid::new(self.grid.n).map_err(|e| invalid(e.to_string()))?;
        let eps = self.epsilon.values();
        if eps.is_empty() {
            return Err(invalid("epsilon list is empty"));
        }
        if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(invalid(format!("epsilon values must be positive, got {e}")));
        }
        if self.vortices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite()) || v.multiplicity == 0) {
            return Err(invalid("vortices need finite coordinates and multiplicity >= 1"));
        }
        for &e in &eps {
            self.torus_config(e)?;
            self.monotone.settings().resolved_kappa(e).map_err(|e| invalid(e.to_string()))?;
        }
        let n = &self.newton;
        if !(n.tol_res > 0.0 && n.krylov_tol > 0.0) || n.max_newton == 0 || n.krylov_max_iter == 0 {
            return Err(invalid("newton tolerances and iteration caps must be positive"));
        }
        let c = &self.checks;
        let positive = |xs: &[f64]| xs.iter().all(|r| r.is_finite() && *r > 0.0);
        if !(c.flux_rel_tol > 0.0 && c.localized_radius > 0.0 && c.pohozaev_radius > 0.0 && c.pohozaev_rel_tol > 0.0)
            || !(0.0..=1.0).contains(&c.localized_min_fraction)
            || !positive(&c.mass_radii)
            || !positive(&c.decay_radii)
            || c.subsolution_slack < 0.0
        {
            return Err(invalid("check tolerances and radii must be positive"));
        }
        if self.diagnostics.contains(&CheckName::Uniqueness) && c.uniqueness_trials < 2 {
            return Err(invalid("uniqueness_trials must be at least 2"));
        }
        if let Some(cluster) = &c.pohozaev_cluster {
            if cluster.is_empty() || cluster.iter().any(|&i| i >= self.vortices.len()) {
                return Err(invalid("pohozaev_cluster must list existing vortex indices"));
            }
        }
        if self.solver == SolverKind::Perturbative {
            self.validate_perturbative()?;
        }
        Ok(())
    }

    pub fn validate_perturbative(&self) -> Result<(), ConfigError> {
        let p = &self.perturbative;
        if self.vortices.is_empty() {
            return Err(invalid("the perturbative constructor needs at least one vortex"));
        }
        if !(p.delta > 0.0 && p.delta < 0.25) {
            return Err(invalid("perturbative.delta must lie in (0, 0.25)"));
        }
        if p.half_width < 20.0 || p.planar_n < 31 {
            return Err(invalid("perturbative.half_width must be >= 20 and planar_n >= 31"));
        }
        if !(p.tol > 0.0) || p.max_iter == 0 || !(p.compare_radius > 0.0) {
            return Err(invalid("perturbative tolerances must be positive"));
        }
        let limit = p.half_width / 2.0;
        if self.vortices.iter().any(|v| v.x.abs() > limit || v.y.abs() > limit) {
            return Err(invalid(format!("planar vortex positions must lie in [-{limit}, {limit}]^2")));
        }
        for e in self.epsilon.values() {
            if 2.0 * p.delta / e > p.half_width {
                return Err(invalid(format!(
                    "epsilon {e}: the cutoff needs planar radius {} > half_width",
                    2.0 * p.delta / e
                )));
            }
            if self.vortices.iter().any(|v| e * v.x.hypot(v.y) >= p.delta) {
                return Err(invalid(format!("epsilon {e}: rescaled vortices leave the cutoff plateau")));
            }
        }
        Ok(())
    }

    /// Vortex configuration on the torus at coupling `eps`.
    pub fn torus_config(&self, eps: f64) -> Result<VortexConfiguration, ConfigError> {
        let (points, mults): (Vec<[f64; 2]>, Vec<u32>) = if self.solver == SolverKind::Perturbative {
            let c = self.perturbative.center;
            self.vortices.iter().map(|v| ([c[0] + eps * v.x, c[1] + eps * v.y], v.multiplicity)).unzip()
        } else {
            self.vortices.iter().map(|v| ([v.x, v.y], v.multiplicity)).unzip()
        };
        let cfg = VortexConfiguration::new(points, mults, eps).map_err(|e| invalid(e.to_string()))?;
        let p = cfg.points();
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                if torus_distance(p[i], p[j]) < 1e-12 {
                    return Err(invalid(format!(
                        "vortices {i} and {j} coincide; give one entry with the summed multiplicity"
                    )));
                }
            }
        }
        Ok(cfg)
    }

    pub fn planar_vortices(&self) -> Vec<PlanarVortex> {
        self.vortices.iter().map(|v| PlanarVortex { position: [v.x, v.y], multiplicity: v.multiplicity }).collect()
    }

    /// Copy with the two vortices moved to torus distance `separation` about their midpoint.
    pub fn with_separation(&self, separation: f64) -> Result<Self, ConfigError> {
        if self.vortices.len() != 2 {
            return Err(invalid("a separation sweep needs exactly two vortices"));
        }
        if !(separation.is_finite() && separation > 0.0 && separation < 0.5) {
            return Err(invalid(format!("separation must lie in (0, 0.5), got {separation}")));
        }
        let (a, b) = (&self.vortices[0], &self.vortices[1]);
        let d = torus_delta([b.x, b.y], [a.x, a.y]);
        let len = d[0].hypot(d[1]);
        let dir = if len > 0.0 { [d[0] / len, d[1] / len] } else { [1.0, 0.0] };
        let mid = [a.x + d[0] / 2.0, a.y + d[1] / 2.0];
        let half = separation / 2.0;
        let mut out = self.clone();
        out.vortices[0].x = mid[0] - half * dir[0];
        out.vortices[0].y = mid[1] - half * dir[1];
        out.vortices[1].x = mid[0] + half * dir[0];
        out.vortices[1].y = mid[1] + half * dir[1];
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    const BASE: &str = "epsilon = 0.02\noutput_dir = \"out\"\n[grid]\nn = 64\n";

    #[test]
    fn minimal_config_parses() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.solver, SolverKind::Monotone);
        assert_eq!(c.epsilon.values(), vec![0.02]);
        assert!(c.vortices.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(&format!("bogus = 1\n{BASE}")).is_err());
        assert!(parse(&format!("{BASE}[monotone]\ntolerance = 1e-9\n")).is_err());
    }

    #[test]
    fn sweep_lists_must_be_positive_and_nonempty() {
        let with = |eps: &str| format!("epsilon = {eps}\noutput_dir = \"out\"\n[grid]\nn = 64\n");
        assert!(parse(&with("[]")).is_err());
        assert!(parse(&with("[0.02, -0.01]")).is_err());
        assert_eq!(parse(&with("[0.04, 0.02]")).unwrap().epsilon.values(), vec![0.04, 0.02]);
    }

    #[test]
    fn coincident_vortices_are_rejected() {
        let text = format!("{BASE}[[vortices]]\nx = 0.5\ny = 0.5\n[[vortices]]\nx = 0.5\ny = 0.5\n");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn separation_keeps_the_midpoint() {
        let text = format!("{BASE}[[vortices]]\nx = 0.4\ny = 0.5\n[[vortices]]\nx = 0.6\ny = 0.5\n");
        let c = parse(&text).unwrap().with_separation(0.1).unwrap();
        assert!((c.vortices[0].x - 0.45).abs() < 1e-15 && (c.vortices[1].x - 0.55).abs() < 1e-15);
        assert_eq!(c.vortices[0].y, 0.5);
    }
}
