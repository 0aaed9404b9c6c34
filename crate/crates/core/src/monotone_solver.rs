//! Monotone iteration for the maximal solution, the explicit subsolution, and the dichotomy test.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::report::{Classification, SolveReport};
use crate::special::radial_plateau;
use crate::torus_field::{laplacian, solve_helmholtz, Field, Grid};
use crate::vortex_background::{torus_delta, TorusBackground};

/// Parameters of the monotone scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneSettings {
    /// Linearization constant K; `None` means 4/ε².
    pub kappa: Option<f64>,
    pub tol_sup: f64,
    pub max_iter: usize,
    /// Level c of the constant supersolution u ≡ c the scheme starts from (c ≥ 0).
    pub start_level: f64,
}

impl Default for MonotoneSettings {
    fn default() -> Self {
        Self { kappa: None, tol_sup: 1e-10, max_iter: 10_000, start_level: 0.2 }
    }
}

impl MonotoneSettings {
    /// K actually used at coupling `eps`, after validation.
    pub fn resolved_kappa(&self, eps: f64) -> Result<f64> {
        let inv = 1.0 / (eps * eps);
        let k = self.kappa.unwrap_or(4.0 * inv);
        let c = self.start_level;
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("start_level must be >= 0, got {c}")));
        }
        let needed = (2.0 * inv).max(inv * c.exp() * (2.0 * c.exp() - 1.0));
        if !(k >= needed) {
            return Err(Error::InvalidParameter(format!("kappa = {k} is below the order-preserving bound {needed}")));
        }
        if !(self.tol_sup > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("tol_sup and max_iter must be positive".into()));
        }
        Ok(k)
    }
}

/// Iterations the minimum of v may stay below this level while still moving before non-existence is declared.
const DIVE_LEVEL: f64 = -50.0;
const DIVE_PATIENCE: usize = 500;
const MONOTONE_SLACK: f64 = 1e-12;

/// Computes the maximal solution by v_{m+1} = v_m + (K - Δ)⁻¹ R(v_m) from u ≡ c.
pub fn maximal_solve(bg: &TorusBackground, s: &MonotoneSettings) -> Result<SolveReport> {
    let cfg = bg.config();
    let eps = cfg.epsilon();
    let kappa = s.resolved_kappa(eps)?;
    let grid = bg.grid();
    let n = grid.n();
    let nn = grid.len();
    let inv_eps2 = 1.0 / (eps * eps);
    let total = cfg.total_multiplicity() as f64;
    let flux_target = 4.0 * PI * total;
    // Without vortices u ≡ 0 is exact and the lift is pointless.
    let c = if cfg.is_empty() { 0.0 } else { s.start_level };

    let k2 = grid.symbol_table(|k2| k2);
    let scale = 1.0 / nn as f64;

    // First step from u ≡ c in closed form: v̂₁(k) = 4πS(k)K/(|k|²(K + |k|²)), with |k|² meaning 4π²|k|².
    let mut coeffs = vec![Complex64::new(0.0, 0.0); nn];
    for i in 0..n {
        let kx = grid.wavenumber(i) as f64;
        for j in 0..n {
            let ky = grid.wavenumber(j) as f64;
            let q = k2[i * n + j];
            if q == 0.0 {
                let lifted = c + inv_eps2 * c.exp() * (1.0 - c.exp()) / kappa;
                coeffs[0] = Complex64::new(lifted - flux_target / kappa, 0.0);
                continue;
            }
            let mut sk = Complex64::new(0.0, 0.0);
            for (&p, &a) in cfg.points().iter().zip(cfg.multiplicities()) {
                sk += Complex64::from_polar(a as f64, -2.0 * PI * (kx * p[0] + ky * p[1]));
            }
            coeffs[i * n + j] = sk * (4.0 * PI * kappa / (q * (kappa + q)));
        }
    }
    fft::inverse_2d(&mut coeffs, n);
    let mut v: Vec<f64> = coeffs.iter().map(|z| z.re).collect();
    let mut v_hat: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft::forward_2d(&mut v_hat, n);
    v_hat.iter_mut().for_each(|z| *z *= scale);

    let exp_u0 = bg.exp_u0().values();
    let mut residual_history = Vec::new();
    let mut increment_history = Vec::new();
    let mut dive_count = 0usize;
    let mut work = vec![Complex64::new(0.0, 0.0); nn];
    let mut converged = false;
    let mut last_increment = f64::INFINITY;
    let mut iterations = 1;
    let mut max_increase = f64::NEG_INFINITY;

    for m in 1..=s.max_iter {
        iterations = m;
        for i in 0..nn {
            let e = exp_u0[i] * v[i].exp();
            work[i] = Complex64::new(inv_eps2 * e * (1.0 - e) - flux_target, 0.0);
        }
        fft::forward_2d(&mut work, n);
        for i in 0..nn {
            let r_hat = work[i] * scale - v_hat[i] * k2[i];
            let d_hat = r_hat / (kappa + k2[i]);
            v_hat[i] += d_hat;
            // Pack increment and residual into one inverse transform.
            work[i] = d_hat + Complex64::new(0.0, 1.0) * r_hat;
        }
        fft::inverse_2d(&mut work, n);
        let mut inc_sup = 0.0f64;
        let mut inc_max = f64::NEG_INFINITY;
        let mut res_sup = 0.0f64;
        let mut v_min = f64::INFINITY;
        for i in 0..nn {
            let d = work[i].re;
            inc_sup = inc_sup.max(d.abs());
            inc_max = inc_max.max(d);
            res_sup = res_sup.max(work[i].im.abs());
            v[i] += d;
            v_min = v_min.min(v[i]);
        }
        residual_history.push(res_sup);
        increment_history.push(inc_sup);
        last_increment = inc_sup;
        max_increase = max_increase.max(inc_max);
        if inc_max > MONOTONE_SLACK {
            return Err(Error::NonMonotoneStep { iteration: m, amount: inc_max });
        }
        if inc_sup <= s.tol_sup && res_sup <= 10.0 * s.tol_sup * inv_eps2 {
            converged = true;
            break;
        }
        if v_min < DIVE_LEVEL && inc_sup > s.tol_sup {
            dive_count += 1;
            if dive_count >= DIVE_PATIENCE {
                return Err(Error::NonExistence { iterations: m, min_v: v_min });
            }
        } else {
            dive_count = 0;
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations, increment: last_increment });
    }

    let v = Field::from_raw(grid, v);
    let mut report = SolveReport::new(bg, v);
    report.residual_history = residual_history;
    report.increment_history = increment_history;
    report.diagnostics.insert("iterations".into(), iterations as f64);
    report.diagnostics.insert("kappa".into(), kappa);
    report.diagnostics.insert("start_level".into(), c);
    report.diagnostics.insert("max_increase".into(), max_increase);
    report.classification = classify_dichotomy(&mut report, bg);
    Ok(report)
}

/// Radius factor of the cores excluded by the dichotomy test.
pub const CORE_RADIUS_FACTOR: f64 = 10.0;
/// Largest |u| allowed outside the cores for a topological verdict.
pub const OUTSIDE_SUP_THRESHOLD: f64 = 0.1;

/// Topological when sup |u| outside ∪B_{10ε}(p_i) ≤ 0.1 and e^d/ε² ≥ 1.
pub fn classify_dichotomy(report: &mut SolveReport, bg: &TorusBackground) -> Classification {
    let eps = bg.epsilon();
    let outside = sup_outside_cores(&report.u, bg, CORE_RADIUS_FACTOR * eps);
    let ratio = report.mean_d.exp() / (eps * eps);
    report.diagnostics.insert("dichotomy_sup_outside".into(), outside);
    report.diagnostics.insert("dichotomy_exp_d_over_eps2".into(), ratio);
    report.diagnostics.insert("dichotomy_sup_threshold".into(), OUTSIDE_SUP_THRESHOLD);
    if outside <= OUTSIDE_SUP_THRESHOLD && ratio >= 1.0 {
        Classification::Topological
    } else {
        Classification::NonTopologicalSuspect
    }
}

/// sup |f| over grid points at torus distance > `radius` from every vortex.
pub fn sup_outside_cores(f: &Field, bg: &TorusBackground, radius: f64) -> f64 {
    let grid = f.grid();
    let n = grid.n();
    let points = bg.config().points();
    let mut sup = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let x = [grid.coord(i), grid.coord(j)];
            let inside = points.iter().any(|&p| {
                let d = torus_delta(x, p);
                d[0] * d[0] + d[1] * d[1] <= radius * radius
            });
            if !inside {
                sup = sup.max(f.at(i, j).abs());
            }
        }
    }
    sup
}

/// Verified lower barrier w₀ with u0 + w₀ ≤ ln(1/2).
#[derive(Debug, Clone)]
pub struct Subsolution {
    pub w0: Field,
    /// Plateau radius actually used.
    pub delta: f64,
    /// Whether the requested plateau radius was reduced to fit the torus.
    pub delta_clamped: bool,
    /// Mean of w before the shift.
    pub mean_before_shift: f64,
    /// The shift C₁ in w₀ = w - C₁.
    pub shift: f64,
    /// min over the grid of Δw₀ + ε⁻²E₀(1 - E₀) - 4πN.
    pub worst_margin: f64,
}

/// Plateau bump: 1 on ∪B_δ(p_i), 0 outside ∪B_{2δ}(p_i).
fn plateau_field(grid: Grid, points: &[[f64; 2]], delta: f64) -> Field {
    Field::from_fn(grid, |x, y| {
        let mut miss = 1.0;
        for &p in points {
            let d = torus_delta([x, y], p);
            miss *= 1.0 - radial_plateau(d[0].hypot(d[1]), delta, 2.0 * delta).0;
        }
        1.0 - miss
    })
}

/// Builds w₀ = w - C₁ with Δw = 8πN f_δ - C(δ), ∫w = 0, and checks the subsolution inequality pointwise.
pub fn build_subsolution(bg: &TorusBackground, delta: Option<f64>) -> Result<Subsolution> {
    let cfg = bg.config();
    let total = cfg.total_multiplicity() as f64;
    if total < 1.0 {
        return Err(Error::InvalidParameter("the subsolution needs at least one vortex".into()));
    }
    let eps = cfg.epsilon();
    let grid = bg.grid();
    let requested = delta.unwrap_or(1.0 / (8.0 * PI * total).sqrt());
    if !(requested > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    let max_delta = 0.249;
    let delta = requested.min(max_delta);

    let f = plateau_field(grid, cfg.points(), delta);
    let c_delta = 8.0 * PI * total * f.mean();
    let g = f.map(|v| 8.0 * PI * total * v - c_delta);
    let w = solve_helmholtz(&g, 0.0)?;
    let mean_before_shift = w.mean();

    let log_e0 = bg.log_exp_u0();
    let exp_u0 = bg.exp_u0().values();
    let top = w
        .values()
        .iter()
        .zip(log_e0.values())
        .zip(exp_u0)
        .filter(|(_, &e)| e > 0.0)
        .map(|((&wv, &l), _)| wv + l)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = top - 0.5f64.ln();
    let w0 = w.map(|v| v - shift);

    let lap = laplacian(&w0);
    let inv_eps2 = 1.0 / (eps * eps);
    let tol = 1e-8 * (1.0 + 4.0 * PI * total);
    let mut worst = f64::INFINITY;
    let mut worst_index = 0;
    for (i, ((&e0, &w), &l)) in exp_u0.iter().zip(w0.values()).zip(lap.values()).enumerate() {
        let e = e0 * w.exp();
        let margin = l + inv_eps2 * e * (1.0 - e) - 4.0 * PI * total;
        if margin < worst {
            worst = margin;
            worst_index = i;
        }
    }
    if worst < -tol {
        return Err(Error::SubsolutionFailed { worst, index: worst_index });
    }
    Ok(Subsolution { w0, delta, delta_clamped: delta < requested, mean_before_shift, shift, worst_margin: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vortex_background::{build_background, VortexConfiguration};

    fn background(points: Vec<[f64; 2]>, eps: f64, n: usize) -> TorusBackground {
        let cfg = VortexConfiguration::simple(points, eps).unwrap();
        build_background(&cfg, Grid::new(n).unwrap()).unwrap()
    }

    #[test]
    fn vacuum_converges_in_one_iteration() {
        let bg = background(vec![], 0.3, 32);
        let rep = maximal_solve(&bg, &MonotoneSettings::default()).unwrap();
        assert_eq!(rep.diagnostic("iterations"), Some(1.0));
        assert_eq!(rep.u.sup_norm(), 0.0);
        assert_eq!(rep.classification, Classification::Topological);
    }

    #[test]
    fn above_critical_coupling_reports_non_existence() {
        let bg = background(vec![[0.5, 0.5]], 0.2, 64);
        let err = maximal_solve(&bg, &MonotoneSettings::default()).unwrap_err();
        assert!(matches!(err, Error::NonExistence { .. }), "{err}");
    }

    #[test]
    fn small_kappa_is_rejected() {
        let s = MonotoneSettings { kappa: Some(1.0), ..Default::default() };
        assert!(s.resolved_kappa(0.1).is_err());
        assert!(MonotoneSettings { start_level: -1.0, ..Default::default() }.resolved_kappa(0.1).is_err());
        assert!((MonotoneSettings::default().resolved_kappa(0.1).unwrap() - 400.0).abs() < 1e-9);
    }

    #[test]
    fn converged_solution_is_negative_and_dominates_the_subsolution() {
        let bg = background(vec![[0.5, 0.5]], 0.05, 128);
        let rep = maximal_solve(&bg, &MonotoneSettings::default()).unwrap();
        assert!(rep.u.max() < 1e-6);
        assert!(rep.diagnostic("max_increase").unwrap() <= MONOTONE_SLACK);
        let sub = build_subsolution(&bg, None).unwrap();
        assert!(sub.mean_before_shift.abs() < 1e-10);
        let top = bg.log_exp_u0().zip_map(&sub.w0, |a, b| a + b).unwrap().max();
        assert!(top <= 0.5f64.ln() + 1e-12);
        assert!(rep.v.zip_map(&sub.w0, |a, b| a - b).unwrap().min() >= -1e-8);
    }

    #[test]
    fn dichotomy_examples() {
        let bg = background(vec![[0.5, 0.5]], 0.05, 64);
        let zero_u = SolveReport::from_smooth(&bg, bg.u0().map(|x| -x)).unwrap();
        assert_eq!(zero_u.classification, Classification::Topological);
        let low = SolveReport::from_smooth(&bg, Field::constant(bg.grid(), -10.0)).unwrap();
        assert_eq!(low.classification, Classification::NonTopologicalSuspect);
    }

    #[test]
    fn subsolution_needs_a_vortex() {
        let bg = background(vec![], 0.05, 32);
        assert!(build_subsolution(&bg, None).is_err());
    }
}
