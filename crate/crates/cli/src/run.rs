//! Solve, check and sweep pipelines behind the subcommands.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use csvortex::diagnostics::{
    exterior_decay, exterior_mass, flux, localized_flux_fraction, pohozaev, uniqueness_probe, PohozaevCheck, Verdict,
};
use csvortex::monotone_solver::{build_subsolution, maximal_solve};
use csvortex::newton_solver::{newton_solve, smallest_eigenvalue, LinearizedOperator};
use csvortex::perturbative::{contraction_solve, rescaled_compare, PerturbProblem};
use csvortex::radial_planar::{planar_multivortex_solve, PlanarSolution};
use csvortex::report::{Classification, SolveReport};
use csvortex::torus_field::{read_dump, write_dump, Field, Grid};
use csvortex::vortex_background::{build_background, torus_distance, TorusBackground};
use serde::Serialize;

use crate::config::{CheckName, ExperimentConfig, NewtonStart, SolverKind};

/// How a pipeline ended; maps onto the exit status.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Status {
    pub solve_failed: bool,
    pub checks_failed: bool,
}

/// One row of the run-level diagnostics CSV.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRow {
    pub epsilon: f64,
    pub check: &'static str,
    pub quantity: String,
    pub value: f64,
    pub limit: Option<f64>,
    /// pass, fail or info.
    pub outcome: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct PohozaevRow {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub eps: f64,
    pub l: u32,
    pub separation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbativeSummary {
    pub iterations: usize,
    pub f0_norm: f64,
    pub residual_norm: f64,
    pub contraction_ratio: Option<f64>,
    pub v_h2_norm: f64,
    pub rescaled_sup_diff: f64,
    pub newton_sup_diff: Option<f64>,
}

/// Outcome at one coupling, as written to the summary JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub epsilon: f64,
    pub status: &'static str,
    pub error: Option<String>,
    pub classification: Option<Classification>,
    pub flux: Option<f64>,
    pub flux_target: f64,
    pub u_sup_norm: Option<f64>,
    pub lambda_min: Option<f64>,
    pub pohozaev_gaps: Vec<f64>,
    pub checks: BTreeMap<&'static str, bool>,
    pub diagnostics: BTreeMap<String, f64>,
    pub perturbative: Option<PerturbativeSummary>,
}

impl RunRecord {
    fn new(epsilon: f64, total: u32) -> Self {
        Self {
            epsilon,
            status: "ok",
            error: None,
            classification: None,
            flux: None,
            flux_target: 4.0 * PI * total as f64,
            u_sup_norm: None,
            lambda_min: None,
            pohozaev_gaps: Vec::new(),
            checks: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            perturbative: None,
        }
    }

    fn fail(&mut self, msg: String) {
        self.status = "failed";
        self.error = Some(msg);
    }
}

/// Everything one pipeline produced.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub rows: Vec<DiagnosticRow>,
    pub pohozaev: Vec<PohozaevRow>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

impl RunOutput {
    pub fn status(&self) -> Status {
        Status {
            solve_failed: self.records.iter().any(|r| r.status != "ok"),
            checks_failed: self.records.iter().any(|r| r.checks.values().any(|ok| !ok)),
        }
    }
}

pub type RunResult<T> = Result<T, String>;

fn io<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> RunResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    if rows.is_empty() {
        w.write_record(header).map_err(io)?;
    }
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn stem(dir: &Path, name: &str, k: usize) -> (PathBuf, String) {
    let file = format!("{name}_{k:03}");
    (dir.join(&file), file)
}

/// Torus solution at one coupling plus solver-specific extras.
struct Solved {
    bg: TorusBackground,
    report: SolveReport,
    perturbative: Option<PerturbativeSummary>,
    /// (iteration, residual, increment).
    history: Vec<(usize, f64, f64)>,
}

fn solve_at(cfg: &ExperimentConfig, eps: f64, solver: SolverKind, psi: Option<&PlanarSolution>) -> RunResult<Solved> {
    let grid = Grid::new(cfg.grid.n).map_err(io)?;
    let torus = cfg.torus_config(eps).map_err(|e| e.0)?;
    let history_of = |r: &SolveReport| {
        r.residual_history
            .iter()
            .zip(r.increment_history.iter().chain(std::iter::repeat(&f64::NAN)))
            .enumerate()
            .map(|(i, (&res, &inc))| (i + 1, res, inc))
            .collect()
    };
    match solver {
        SolverKind::Monotone => {
            let bg = build_background(&torus, grid).map_err(io)?;
            let report = maximal_solve(&bg, &cfg.monotone.settings()).map_err(io)?;
            Ok(Solved { history: history_of(&report), bg, report, perturbative: None })
        }
        SolverKind::Newton => {
            let bg = build_background(&torus, grid).map_err(io)?;
            let start = match cfg.newton.start {
                NewtonStart::Zero => Field::zeros(grid),
                NewtonStart::Monotone => maximal_solve(&bg, &cfg.monotone.settings()).map_err(io)?.v,
            };
            let report = newton_solve(&start, &bg, &cfg.newton.settings()).map_err(io)?;
            Ok(Solved { history: history_of(&report), bg, report, perturbative: None })
        }
        SolverKind::Perturbative => {
            let psi = psi.expect("planar solution computed for the perturbative solver");
            let p = &cfg.perturbative;
            let problem = PerturbProblem::new(psi, grid, eps, p.center, &p.settings()).map_err(io)?;
            let state = contraction_solve(&problem, &p.settings()).map_err(io)?;
            let bg = build_background(problem.config(), grid).map_err(io)?;
            let report = SolveReport::from_smooth(&bg, state.smooth.clone()).map_err(io)?;
            let newton_sup_diff = if p.newton_compare {
                let direct = newton_solve(&state.smooth, &bg, &cfg.newton.settings()).map_err(io)?;
                Some(direct.v.zip_map(&state.smooth, |a, b| a - b).map_err(io)?.sup_norm())
            } else {
                None
            };
            let history = state
                .residuals
                .iter()
                .enumerate()
                .map(|(i, &r)| (i, r, if i == 0 { f64::NAN } else { state.increments[i - 1] }))
                .collect();
            let summary = PerturbativeSummary {
                iterations: state.iterations,
                f0_norm: state.f0_norm,
                residual_norm: state.residual_norm,
                contraction_ratio: state.contraction_ratio,
                v_h2_norm: state.v_h2_norm,
                rescaled_sup_diff: rescaled_compare(&state.u, psi, eps, p.compare_radius, p.center),
                newton_sup_diff,
            };
            Ok(Solved { bg, report, perturbative: Some(summary), history })
        }
    }
}

struct Checker<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    eps: f64,
    record: &'a mut RunRecord,
    rows: &'a mut Vec<DiagnosticRow>,
    pohozaev_rows: &'a mut Vec<PohozaevRow>,
}

impl Checker<'_> {
    fn row(&mut self, check: CheckName, quantity: &str, value: f64, limit: Option<f64>, outcome: &'static str) {
        self.rows.push(DiagnosticRow {
            epsilon: self.eps,
            check: check.as_str(),
            quantity: quantity.into(),
            value,
            limit,
            outcome,
        });
    }

    fn verdict(&mut self, check: CheckName, passed: bool) {
        let entry = self.record.checks.entry(check.as_str()).or_insert(true);
        *entry &= passed;
    }

    fn judged(&mut self, check: CheckName, quantity: &str, value: f64, limit: Option<f64>, passed: bool) {
        self.row(check, quantity, value, limit, if passed { "pass" } else { "fail" });
        self.verdict(check, passed);
    }

    fn error(&mut self, check: CheckName, msg: String) {
        self.record.diagnostics.insert(format!("{}_error", check.as_str()), 1.0);
        eprintln!("check {} at epsilon {}: {msg}", check.as_str(), self.eps);
        self.judged(check, "error", f64::NAN, None, false);
    }

    fn run(&mut self, check: CheckName, report: &SolveReport, bg: &TorusBackground) {
        let c = &self.cfg.checks;
        let total = bg.config().total_multiplicity();
        let vortices = bg.config().len();
        match check {
            CheckName::Classification => {
                let ok = report.classification == Classification::Topological;
                self.judged(check, "topological", if ok { 1.0 } else { 0.0 }, None, ok);
            }
            CheckName::Flux => {
                let f = flux(report, bg);
                let target = 4.0 * PI * total as f64;
                self.record.flux = Some(f);
                self.row(check, "flux", f, Some(target), "info");
                if total == 0 {
                    self.judged(check, "abs_error", f.abs(), Some(1e-10), f.abs() <= 1e-10);
                } else {
                    let rel = (f / target - 1.0).abs();
                    self.judged(check, "rel_error", rel, Some(c.flux_rel_tol), rel <= c.flux_rel_tol);
                }
            }
            CheckName::LocalizedFlux if vortices > 0 => {
                let frac = localized_flux_fraction(report, bg, c.localized_radius);
                self.judged(check, "fraction", frac, Some(c.localized_min_fraction), frac >= c.localized_min_fraction);
            }
            CheckName::ExteriorMass if vortices > 0 => {
                let mut radii = c.mass_radii.clone();
                radii.sort_by(f64::total_cmp);
                let masses: Vec<f64> = radii.iter().map(|&r| exterior_mass(report, bg, r)).collect();
                for (r, m) in radii.iter().zip(&masses) {
                    self.row(check, &format!("mass_r{r}"), *m, None, "info");
                }
                let monotone = masses.windows(2).all(|w| w[1] <= w[0]);
                self.judged(check, "non_increasing", if monotone { 1.0 } else { 0.0 }, None, monotone);
            }
            CheckName::ExteriorDecay if vortices > 0 => {
                let d = exterior_decay(report, bg, &c.decay_radii);
                for (r, s) in &d.rows {
                    self.row(check, &format!("sup_r{r}"), *s, None, "info");
                }
                self.judged(check, "rate", d.rate, Some(0.0), d.rate > 0.0);
                let cd = d.concave_decreasing;
                self.judged(check, "concave_decreasing", if cd { 1.0 } else { 0.0 }, None, cd);
            }
            CheckName::Pohozaev if vortices > 0 => {
                let cluster: Vec<usize> = c.pohozaev_cluster.clone().unwrap_or_else(|| (0..vortices).collect());
                match pohozaev(report, bg, &cluster, c.pohozaev_radius) {
                    Ok(p) => self.pohozaev_result(p),
                    Err(e) => self.error(check, e.to_string()),
                }
            }
            CheckName::Subsolution if vortices > 0 => match build_subsolution(bg, None) {
                Ok(sub) => {
                    self.row(check, "worst_margin", sub.worst_margin, Some(0.0), "info");
                    let gap = report.v.zip_map(&sub.w0, |a, b| a - b).map(|d| d.min()).unwrap_or(f64::NAN);
                    self.judged(check, "min_v_minus_w0", gap, Some(-c.subsolution_slack), gap >= -c.subsolution_slack);
                }
                Err(e) => self.error(check, e.to_string()),
            },
            CheckName::Spectrum => {
                match LinearizedOperator::at(&report.v, bg).and_then(|op| smallest_eigenvalue(&op, c.eigen_tol)) {
                    Ok(e) => {
                        self.record.lambda_min = Some(e.lambda_min);
                        self.row(check, "eigen_residual", e.residual, None, "info");
                        self.judged(check, "lambda_min", e.lambda_min, Some(0.0), e.lambda_min > 0.0);
                    }
                    Err(e) => self.error(check, e.to_string()),
                }
            }
            CheckName::Uniqueness => {
                match uniqueness_probe(report, bg, c.uniqueness_trials, self.seed, &self.cfg.newton.settings()) {
                    Ok(u) => {
                        for o in &u.outcomes {
                            let name = o.trial.map_or("start_maximal".to_string(), |t| format!("trial_{t}"));
                            self.row(
                                check,
                                &name,
                                o.sup_diff.unwrap_or(f64::NAN),
                                Some(csvortex::diagnostics::UNIQUENESS_TOLERANCE),
                                "info",
                            );
                        }
                        if let Some(l) = u.lambda_min {
                            self.record.lambda_min.get_or_insert(l);
                        }
                        let unique = u.verdict == Verdict::Unique;
                        self.judged(check, "unique", if unique { 1.0 } else { 0.0 }, None, unique);
                        let positive = u.lambda_min.is_some_and(|l| l > 0.0);
                        self.judged(check, "lambda_min", u.lambda_min.unwrap_or(f64::NAN), Some(0.0), positive);
                    }
                    Err(e) => self.error(check, e.to_string()),
                }
            }
            // Vortex-free runs have nothing to localize.
            _ => self.row(check, "skipped", f64::NAN, None, "info"),
        }
    }

    fn pohozaev_result(&mut self, p: PohozaevCheck) {
        let tol = self.cfg.checks.pohozaev_rel_tol;
        self.row(CheckName::Pohozaev, "lhs", p.lhs, None, "info");
        self.row(CheckName::Pohozaev, "rhs", p.rhs, None, "info");
        self.judged(CheckName::Pohozaev, "gap", p.gap, Some(tol), p.gap <= tol);
        self.record.pohozaev_gaps.push(p.gap);
        self.pohozaev_rows.push(PohozaevRow {
            lhs: p.lhs,
            rhs: p.rhs,
            gap: p.gap,
            eps: p.epsilon,
            l: p.l,
            separation: p.separation,
        });
    }
}

fn evaluate(
    cfg: &ExperimentConfig,
    seed: u64,
    report: &SolveReport,
    bg: &TorusBackground,
    record: &mut RunRecord,
    out: &mut RunOutput,
) {
    record.classification = Some(report.classification);
    record.u_sup_norm = Some(report.u.sup_norm());
    record.diagnostics.extend(report.diagnostics.clone());
    let mut checks = cfg.diagnostics.clone();
    checks.sort();
    checks.dedup();
    let mut checker =
        Checker { cfg, seed, eps: bg.epsilon(), record, rows: &mut out.rows, pohozaev_rows: &mut out.pohozaev };
    for check in checks {
        checker.run(check, report, bg);
    }
}

/// Solves at every configured coupling, runs the requested checks and writes all artifacts into `dir`.
pub fn solve_pipeline(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> RunResult<RunOutput> {
    let solver = cfg.solver;
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let mut out = RunOutput::default();
    let total: u32 = cfg.vortices.iter().map(|v| v.multiplicity).sum();
    let psi = if solver == SolverKind::Perturbative {
        let p = &cfg.perturbative;
        match planar_multivortex_solve(&cfg.planar_vortices(), p.half_width, p.planar_n) {
            Ok(psi) => {
                psi.write_csv(&dir.join("planar.csv")).map_err(io)?;
                out.files.push("planar.csv".into());
                Some(psi)
            }
            Err(e) => {
                for eps in cfg.epsilon.values() {
                    let mut rec = RunRecord::new(eps, total);
                    rec.fail(format!("planar solve failed: {e}"));
                    out.records.push(rec);
                }
                return Ok(out);
            }
        }
    } else {
        None
    };
    for (k, eps) in cfg.epsilon.values().into_iter().enumerate() {
        let mut record = RunRecord::new(eps, total);
        match solve_at(cfg, eps, solver, psi.as_ref()) {
            Ok(solved) => {
                for (name, field) in [("v", &solved.report.v), ("u", &solved.report.u)] {
                    let (path, file) = stem(dir, name, k);
                    write_dump(field, &path, name, eps).map_err(io)?;
                    out.files.push(format!("{file}.json"));
                    out.files.push(format!("{file}.bin"));
                }
                let (path, file) = stem(dir, "history", k);
                let rows: Vec<_> = solved
                    .history
                    .iter()
                    .map(|&(i, r, d)| HistoryRow { iteration: i, residual: r, increment: d })
                    .collect();
                write_csv(&path.with_extension("csv"), &rows, &["iteration", "residual", "increment"])?;
                out.files.push(format!("{file}.csv"));
                record.perturbative = solved.perturbative;
                evaluate(cfg, seed, &solved.report, &solved.bg, &mut record, &mut out);
            }
            Err(msg) => {
                eprintln!("solve failed at epsilon {eps}: {msg}");
                record.fail(msg);
            }
        }
        out.records.push(record);
    }
    write_tables(&mut out, dir, "")?;
    Ok(out)
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    residual: f64,
    increment: f64,
}

fn write_tables(out: &mut RunOutput, dir: &Path, prefix: &str) -> RunResult<()> {
    let diag = format!("{prefix}diagnostics.csv");
    write_csv(&dir.join(&diag), &out.rows, &["epsilon", "check", "quantity", "value", "limit", "outcome"])?;
    let poho = format!("{prefix}pohozaev.csv");
    write_csv(&dir.join(&poho), &out.pohozaev, &["lhs", "rhs", "gap", "eps", "l", "separation"])?;
    out.files.push(diag);
    out.files.push(poho);
    Ok(())
}

/// Re-runs the diagnostics on the `v` dumps a previous solve left in `dir`.
pub fn check_pipeline(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> RunResult<RunOutput> {
    let mut out = RunOutput::default();
    let total: u32 = cfg.vortices.iter().map(|v| v.multiplicity).sum();
    let grid = Grid::new(cfg.grid.n).map_err(io)?;
    for (k, eps) in cfg.epsilon.values().into_iter().enumerate() {
        let mut record = RunRecord::new(eps, total);
        let loaded = read_dump(&stem(dir, "v", k).0).map_err(io).and_then(|(v, header)| {
            if header.n != grid.n() || header.epsilon != eps {
                return Err(format!("dump v_{k:03} holds n = {}, epsilon = {}", header.n, header.epsilon));
            }
            let torus = cfg.torus_config(eps).map_err(|e| e.0)?;
            let bg = build_background(&torus, grid).map_err(io)?;
            let report = SolveReport::from_smooth(&bg, v).map_err(io)?;
            Ok((bg, report))
        });
        match loaded {
            Ok((bg, report)) => evaluate(cfg, seed, &report, &bg, &mut record, &mut out),
            Err(msg) => {
                eprintln!("cannot load the saved solution at epsilon {eps}: {msg}");
                record.fail(msg);
            }
        }
        out.records.push(record);
    }
    write_tables(&mut out, dir, "check_")?;
    Ok(out)
}

#[derive(Serialize)]
struct SpectrumRow {
    epsilon: f64,
    separation_over_eps: Option<f64>,
    lambda_min: Option<f64>,
    lambda_min_times_eps2: Option<f64>,
    residual: Option<f64>,
    iterations: Option<usize>,
    converged: bool,
}

/// |p₁ - p₂|/ε for two-vortex configurations.
fn separation_over_eps(cfg: &ExperimentConfig, eps: f64) -> Option<f64> {
    let torus = cfg.torus_config(eps).ok()?;
    let p = torus.points();
    (p.len() == 2).then(|| torus_distance(p[0], p[1]) / eps)
}

/// Solves, then writes λ_min of -L and its eigenvector at every coupling.
pub fn spectrum_pipeline(cfg: &ExperimentConfig, dir: &Path) -> RunResult<RunOutput> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let mut out = RunOutput::default();
    let total: u32 = cfg.vortices.iter().map(|v| v.multiplicity).sum();
    let mut rows = Vec::new();
    let solver = if cfg.solver == SolverKind::Perturbative { SolverKind::Monotone } else { cfg.solver };
    for (k, eps) in cfg.epsilon.values().into_iter().enumerate() {
        let mut record = RunRecord::new(eps, total);
        let result = solve_at(cfg, eps, solver, None).and_then(|s| {
            let op = LinearizedOperator::at(&s.report.v, &s.bg).map_err(io)?;
            let e = smallest_eigenvalue(&op, cfg.checks.eigen_tol).map_err(io)?;
            Ok((s, e))
        });
        match result {
            Ok((s, e)) => {
                record.classification = Some(s.report.classification);
                record.lambda_min = Some(e.lambda_min);
                record.checks.insert("spectrum", e.lambda_min > 0.0);
                let (path, file) = stem(dir, "eigenvector", k);
                write_dump(&e.eigenvector, &path, "eigenvector", eps).map_err(io)?;
                out.files.push(format!("{file}.json"));
                out.files.push(format!("{file}.bin"));
                rows.push(SpectrumRow {
                    epsilon: eps,
                    separation_over_eps: separation_over_eps(cfg, eps),
                    lambda_min: Some(e.lambda_min),
                    lambda_min_times_eps2: Some(e.lambda_min * eps * eps),
                    residual: Some(e.residual),
                    iterations: Some(e.iterations),
                    converged: true,
                });
            }
            Err(msg) => {
                eprintln!("spectrum failed at epsilon {eps}: {msg}");
                rows.push(SpectrumRow {
                    epsilon: eps,
                    separation_over_eps: separation_over_eps(cfg, eps),
                    lambda_min: None,
                    lambda_min_times_eps2: None,
                    residual: None,
                    iterations: None,
                    converged: false,
                });
                record.fail(msg);
            }
        }
        out.records.push(record);
    }
    write_csv(
        &dir.join("spectrum.csv"),
        &rows,
        &[
            "epsilon",
            "separation_over_eps",
            "lambda_min",
            "lambda_min_times_eps2",
            "residual",
            "iterations",
            "converged",
        ],
    )?;
    out.files.push("spectrum.csv".into());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Epsilon,
    Separation,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Epsilon => "epsilon",
            Self::Separation => "separation",
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    point: usize,
    param: &'static str,
    value: f64,
    epsilon: f64,
    separation_over_eps: Option<f64>,
    status: &'static str,
    classification: String,
    flux: Option<f64>,
    lambda_min: Option<f64>,
    lambda_min_times_eps2: Option<f64>,
    converged: bool,
    pohozaev_gap: Option<f64>,
    checks_passed: bool,
}

/// Runs the solve pipeline once per sweep value, each into `point_XXX`, and merges the rows in value order.
pub fn sweep_pipeline(
    cfg: &ExperimentConfig,
    seed: u64,
    param: SweepParam,
    values: &[f64],
    dir: &Path,
) -> RunResult<RunOutput> {
    use rayon::prelude::*;
    let points: Vec<ExperimentConfig> = values
        .iter()
        .map(|&x| match param {
            SweepParam::Epsilon => {
                let mut c = cfg.clone();
                c.epsilon = crate::config::EpsilonSpec::Single(x);
                c.validate().map(|_| c)
            }
            SweepParam::Separation => cfg.with_separation(x),
        })
        .collect::<Result<_, _>>()
        .map_err(|e| format!("invalid sweep value: {e}"))?;
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let results: Vec<RunResult<RunOutput>> = points
        .par_iter()
        .enumerate()
        .map(|(k, c)| solve_pipeline(c, seed, &dir.join(format!("point_{k:03}"))))
        .collect();
    let mut merged = RunOutput::default();
    let mut rows = Vec::new();
    for (k, result) in results.into_iter().enumerate() {
        let point = result?;
        for rec in &point.records {
            rows.push(SweepRow {
                point: k,
                param: param.as_str(),
                value: values[k],
                epsilon: rec.epsilon,
                separation_over_eps: separation_over_eps(&points[k], rec.epsilon),
                status: rec.status,
                classification: rec.classification.map_or("none".into(), |c| format!("{c:?}")),
                flux: rec.flux,
                lambda_min: rec.lambda_min,
                lambda_min_times_eps2: rec.lambda_min.map(|l| l * rec.epsilon * rec.epsilon),
                converged: rec.status == "ok",
                pohozaev_gap: rec.pohozaev_gaps.first().copied(),
                checks_passed: rec.checks.values().all(|&ok| ok),
            });
        }
        merged.files.extend(point.files.iter().map(|f| format!("point_{k:03}/{f}")));
        merged.records.extend(point.records);
        merged.rows.extend(point.rows);
        merged.pohozaev.extend(point.pohozaev);
    }
    write_csv(
        &dir.join("sweep.csv"),
        &rows,
        &[
            "point",
            "param",
            "value",
            "epsilon",
            "separation_over_eps",
            "status",
            "classification",
            "flux",
            "lambda_min",
            "lambda_min_times_eps2",
            "converged",
            "pohozaev_gap",
            "checks_passed",
        ],
    )?;
    merged.files.push("sweep.csv".into());
    Ok(merged)
}
