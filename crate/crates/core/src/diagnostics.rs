//! Integral identities and asymptotic checks on converged torus solutions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::monotone_solver::sup_outside_cores;
use crate::newton_solver::{newton_solve, smallest_eigenvalue, LinearizedOperator, NewtonSettings};
use crate::report::SolveReport;
use crate::torus_field::{Field, SpectralField};
use crate::vortex_background::{torus_delta, TorusBackground};

fn exp_u(report: &SolveReport, bg: &TorusBackground) -> Field {
    report.exp_u(bg)
}

/// ∫ ε⁻² eᵘ(1 - eᵘ) over the torus.
pub fn flux(report: &SolveReport, bg: &TorusBackground) -> f64 {
    let inv = bg.epsilon().powi(-2);
    exp_u(report, bg).map(|e| inv * e * (1.0 - e)).mean()
}

fn inside_any(x: [f64; 2], points: &[[f64; 2]], radius: f64) -> bool {
    points.iter().any(|&p| {
        let d = torus_delta(x, p);
        d[0] * d[0] + d[1] * d[1] <= radius * radius
    })
}

/// Share of the flux carried by ∪B_{rε}(p_i).
pub fn localized_flux_fraction(report: &SolveReport, bg: &TorusBackground, radius_factor: f64) -> f64 {
    let e = exp_u(report, bg);
    let grid = e.grid();
    let radius = radius_factor * bg.epsilon();
    let (mut inside, mut total) = (0.0, 0.0);
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            let v = e.at(i, j);
            let g = v * (1.0 - v);
            total += g;
            if inside_any([grid.coord(i), grid.coord(j)], bg.config().points(), radius) {
                inside += g;
            }
        }
    }
    if total == 0.0 {
        1.0
    } else {
        inside / total
    }
}

/// ε⁻² ∫ (1 - eᵘ)² outside ∪B_{r̃ε}(p_i).
pub fn exterior_mass(report: &SolveReport, bg: &TorusBackground, radius_factor: f64) -> f64 {
    let e = exp_u(report, bg);
    let grid = e.grid();
    let radius = radius_factor * bg.epsilon();
    let inv = bg.epsilon().powi(-2);
    let mut sum = 0.0;
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            if !inside_any([grid.coord(i), grid.coord(j)], bg.config().points(), radius) {
                let v = e.at(i, j);
                sum += (1.0 - v) * (1.0 - v);
            }
        }
    }
    inv * sum / grid.len() as f64
}

/// Both sides of the local Pohozaev identity for one vortex cluster.
#[derive(Debug, Clone, Serialize)]
pub struct PohozaevCheck {
    /// ε⁻² ∫_B (1 - eᵘ)².
    pub lhs: f64,
    /// 4πl² + 4πΣ α_i (p_i - q)·∇v(p_i).
    pub rhs: f64,
    /// |lhs - rhs| / |rhs|.
    pub gap: f64,
    /// Total multiplicity l of the cluster.
    pub l: u32,
    /// The gradient sum 4πΣ α_i (p_i - q)·∇v(p_i).
    pub gradient_term: f64,
    /// Multiplicity-weighted centre q.
    pub center: [f64; 2],
    pub radius: f64,
    /// Largest pairwise distance inside the cluster.
    pub separation: f64,
    pub epsilon: f64,
}

const BOUNDARY_SUBSAMPLES: usize = 8;

/// Pohozaev check on B_{r̃ε}(q) for the vortices with indices `cluster`.
///
/// v = u - 2Σ_cluster α_j ln|x - p_j| is differentiated as regular-part gradients of u0
/// with the cluster logs removed analytically, plus the spectral gradient of the smooth variable.
pub fn pohozaev(
    report: &SolveReport,
    bg: &TorusBackground,
    cluster: &[usize],
    ball_radius_factor: f64,
) -> Result<PohozaevCheck> {
    let cfg = bg.config();
    if cluster.is_empty() || cluster.iter().any(|&i| i >= cfg.len()) {
        return Err(Error::InvalidParameter("cluster indices must name existing vortices".into()));
    }
    if !(ball_radius_factor > 0.0) {
        return Err(Error::InvalidParameter("ball radius factor must be positive".into()));
    }
    let eps = bg.epsilon();
    let radius = ball_radius_factor * eps;
    let pts = cfg.points();
    let mults = cfg.multiplicities();
    let base = pts[cluster[0]];
    let l: u32 = cluster.iter().map(|&i| mults[i]).sum();
    let mut center = [0.0; 2];
    for &i in cluster {
        let d = torus_delta(pts[i], base);
        center[0] += mults[i] as f64 * d[0] / l as f64;
        center[1] += mults[i] as f64 * d[1] / l as f64;
    }
    let center = [(base[0] + center[0]).rem_euclid(1.0), (base[1] + center[1]).rem_euclid(1.0)];
    for (j, &p) in pts.iter().enumerate() {
        if cluster.contains(&j) {
            continue;
        }
        let d = torus_delta(p, center);
        let dist = d[0].hypot(d[1]);
        if dist < radius {
            return Err(Error::ClusterNotIsolated { index: j, distance: dist, radius });
        }
    }
    if radius >= 0.5 {
        return Err(Error::InvalidParameter("ball must fit inside half the torus".into()));
    }

    let e = exp_u(report, bg);
    let grid = e.grid();
    let h = grid.h();
    let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
    let mut integral = 0.0;
    for i in 0..grid.n() {
        let dx = torus_delta([grid.coord(i), 0.0], [center[0], 0.0])[0];
        if dx.abs() > radius + h {
            continue;
        }
        for j in 0..grid.n() {
            let dy = torus_delta([0.0, grid.coord(j)], [0.0, center[1]])[1];
            let r = dx.hypot(dy);
            let weight = if r <= radius - half_diag {
                1.0
            } else if r >= radius + half_diag {
                0.0
            } else {
                let k = BOUNDARY_SUBSAMPLES;
                let mut hits = 0;
                for a in 0..k {
                    for b in 0..k {
                        let sx = dx + h * ((a as f64 + 0.5) / k as f64 - 0.5);
                        let sy = dy + h * ((b as f64 + 0.5) / k as f64 - 0.5);
                        if sx.hypot(sy) <= radius {
                            hits += 1;
                        }
                    }
                }
                hits as f64 / (k * k) as f64
            };
            if weight > 0.0 {
                let v = e.at(i, j);
                integral += weight * (1.0 - v) * (1.0 - v);
            }
        }
    }
    let lhs = integral * h * h / (eps * eps);

    let spectral = report.v.to_spectral();
    let mut gradient_term = 0.0;
    let mut separation = 0.0f64;
    for &i in cluster {
        let mut g = bg.regular_gradients()[i];
        for &j in cluster {
            if j == i {
                continue;
            }
            let d = torus_delta(pts[i], pts[j]);
            let r2 = d[0] * d[0] + d[1] * d[1];
            separation = separation.max(r2.sqrt());
            g[0] -= 2.0 * mults[j] as f64 * d[0] / r2;
            g[1] -= 2.0 * mults[j] as f64 * d[1] / r2;
        }
        let gv = spectral.eval_gradient(pts[i][0], pts[i][1]);
        let rel = torus_delta(pts[i], center);
        gradient_term += 4.0 * PI * mults[i] as f64 * (rel[0] * (g[0] + gv[0]) + rel[1] * (g[1] + gv[1]));
    }
    let rhs = 4.0 * PI * (l as f64).powi(2) + gradient_term;
    Ok(PohozaevCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs() / rhs.abs(),
        l,
        gradient_term,
        center,
        radius,
        separation,
        epsilon: eps,
    })
}

/// sup |u| outside ∪B_{Rε}(p_i) over a list of radius factors R.
#[derive(Debug, Clone, Serialize)]
pub struct ExteriorDecay {
    /// (R, sup |u| outside ∪B_{Rε}).
    pub rows: Vec<(f64, f64)>,
    /// Least-squares c in sup ≈ A e^{-cR}.
    pub rate: f64,
    /// ln sup is decreasing and concave as a function of ln R, i.e. faster than any power.
    pub concave_decreasing: bool,
}

pub fn exterior_decay(report: &SolveReport, bg: &TorusBackground, radii: &[f64]) -> ExteriorDecay {
    let eps = bg.epsilon();
    let rows: Vec<(f64, f64)> = radii.iter().map(|&r| (r, sup_outside_cores(&report.u, bg, r * eps))).collect();
    let logs: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).map(|&(r, s)| (r, s.ln())).collect();
    let rate = if logs.len() >= 2 {
        let k = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    } else {
        0.0
    };
    let slopes: Vec<f64> = logs.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 / w[0].0).ln()).collect();
    let concave_decreasing =
        logs.len() == rows.len() && slopes.iter().all(|&s| s < 0.0) && slopes.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    ExteriorDecay { rows, rate, concave_decreasing }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Every converged run matched the maximal solution.
    Unique,
    /// Some converged run ended at a different solution.
    Distinct,
    /// No run converged.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    /// None for the unperturbed start.
    pub trial: Option<usize>,
    pub converged: bool,
    /// sup |v - v_max| at convergence.
    pub sup_diff: Option<f64>,
    pub newton_steps: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub verdict: Verdict,
    pub outcomes: Vec<TrialOutcome>,
    /// Smallest-magnitude eigenvalue of -L at the maximal solution, when the probe converged.
    pub lambda_min: Option<f64>,
    pub seed: u64,
}

/// Agreement required between a Newton run and the maximal solution.
pub const UNIQUENESS_TOLERANCE: f64 = 1e-6;
/// Sup-norm of the random start perturbations.
pub const PERTURBATION_AMPLITUDE: f64 = 0.5;
/// Largest wavenumber |k| in the start perturbations.
pub const PERTURBATION_BAND: i64 = 8;

/// Band-limited random field with sup-norm `amplitude`, deterministic in `seed`.
pub fn random_perturbation(grid: crate::torus_field::Grid, seed: u64, amplitude: f64) -> Field {
    let n = grid.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
    let band = PERTURBATION_BAND;
    for kx in -band..=band {
        for ky in -band..=band {
            if kx * kx + ky * ky > band * band {
                continue;
            }
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let idx = (kx.rem_euclid(n as i64) as usize) * n + ky.rem_euclid(n as i64) as usize;
            coeffs[idx] = z;
        }
    }
    let f = SpectralField::from_coefficients(grid, coeffs).expect("coefficient count matches the grid").to_field();
    let s = f.sup_norm();
    if s == 0.0 {
        f
    } else {
        f.map(|x| amplitude * x / s)
    }
}

/// Newton restarts from the maximal solution and from `trials` seeded perturbations of it.
pub fn uniqueness_probe(
    maximal: &SolveReport,
    bg: &TorusBackground,
    trials: usize,
    seed: u64,
    settings: &NewtonSettings,
) -> Result<UniquenessReport> {
    if trials < 2 {
        return Err(Error::InvalidParameter("uniqueness probe needs at least two trials".into()));
    }
    let grid = bg.grid();
    let run = |trial: Option<usize>| -> Result<TrialOutcome> {
        let start = match trial {
            None => maximal.v.clone(),
            Some(t) => {
                let p = random_perturbation(grid, seed.wrapping_add(t as u64), PERTURBATION_AMPLITUDE);
                maximal.v.zip_map(&p, |a, b| a + b)?
            }
        };
        Ok(match newton_solve(&start, bg, settings) {
            Ok(r) => {
                let diff = r.v.zip_map(&maximal.v, |a, b| a - b)?.sup_norm();
                TrialOutcome {
                    trial,
                    converged: true,
                    sup_diff: Some(diff),
                    newton_steps: r.diagnostic("newton_steps").map(|s| s as usize),
                    error: None,
                }
            }
            Err(e) => {
                TrialOutcome { trial, converged: false, sup_diff: None, newton_steps: None, error: Some(e.to_string()) }
            }
        })
    };
    let starts: Vec<Option<usize>> = std::iter::once(None).chain((0..trials).map(Some)).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(starts.len());
    let mut slots: Vec<Option<Result<TrialOutcome>>> = (0..starts.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let starts = &starts;
                let run = &run;
                scope.spawn(move || (w..starts.len()).step_by(workers).map(|k| (k, run(starts[k]))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (k, outcome) in h.join().expect("probe worker panicked") {
                slots[k] = Some(outcome);
            }
        }
    });
    let outcomes = slots.into_iter().map(|s| s.expect("every trial ran")).collect::<Result<Vec<_>>>()?;
    let converged: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.converged).collect();
    let verdict = if converged.is_empty() {
        Verdict::Inconclusive
    } else if converged.iter().all(|o| o.sup_diff.unwrap() <= UNIQUENESS_TOLERANCE) {
        Verdict::Unique
    } else {
        Verdict::Distinct
    };
    let lambda_min =
        LinearizedOperator::at(&maximal.v, bg).and_then(|op| smallest_eigenvalue(&op, None)).ok().map(|e| e.lambda_min);
    Ok(UniquenessReport { verdict, outcomes, lambda_min, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone_solver::{maximal_solve, MonotoneSettings};
    use crate::torus_field::Grid;
    use crate::vortex_background::{build_background, VortexConfiguration};

    fn solved(points: Vec<[f64; 2]>, eps: f64, n: usize) -> (TorusBackground, SolveReport) {
        let cfg = VortexConfiguration::simple(points, eps).unwrap();
        let bg = build_background(&cfg, Grid::new(n).unwrap()).unwrap();
        let rep = maximal_solve(&bg, &MonotoneSettings::default()).unwrap();
        (bg, rep)
    }

    #[test]
    fn vacuum_carries_no_flux() {
        let (bg, rep) = solved(vec![], 0.1, 32);
        assert_eq!(flux(&rep, &bg), 0.0);
        assert_eq!(exterior_mass(&rep, &bg, 5.0), 0.0);
    }

    #[test]
    fn perturbations_are_seeded() {
        let g = Grid::new(32).unwrap();
        let a = random_perturbation(g, 9, 0.5);
        assert_eq!(a, random_perturbation(g, 9, 0.5));
        assert_ne!(a, random_perturbation(g, 10, 0.5));
        assert!((a.sup_norm() - 0.5).abs() < 1e-15);
        assert!(a.mean().abs() < 0.5);
    }

    #[test]
    fn exterior_mass_shrinks_with_the_radius() {
        let (bg, rep) = solved(vec![[0.5, 0.5]], 0.05, 128);
        let m: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|&r| exterior_mass(&rep, &bg, r)).collect();
        assert!(m[0] >= m[1] && m[1] >= m[2]);
        let f = localized_flux_fraction(&rep, &bg, 10.0);
        assert!(f > 0.9 && f <= 1.0);
    }

    #[test]
    fn probe_needs_two_trials() {
        let (bg, rep) = solved(vec![], 0.1, 16);
        assert!(uniqueness_probe(&rep, &bg, 1, 0, &NewtonSettings::default()).is_err());
    }

    #[test]
    fn crowded_cluster_is_rejected() {
        let (bg, rep) = solved(vec![[0.45, 0.5], [0.55, 0.5]], 0.05, 64);
        let err = pohozaev(&rep, &bg, &[0], 4.0).unwrap_err();
        assert!(matches!(err, Error::ClusterNotIsolated { .. }), "{err}");
        assert!(pohozaev(&rep, &bg, &[2], 1.0).is_err());
    }
}
