//! Newton–Krylov solves of the smooth-variable equation, the linearized operator and its eigen probe.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::krylov::{dot, norm, solve_symmetric, KrylovMethod};
use crate::monotone_solver::classify_dichotomy;
use crate::report::{reconstruct_u, SolveReport};
use crate::torus_field::{apply_table, laplacian, Field, Grid};
use crate::vortex_background::TorusBackground;

/// Step control of the outer Newton loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    None,
    LineSearchHalving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Converged when ‖R‖₂ ≤ tol_res·ε⁻².
    pub tol_res: f64,
    pub max_newton: usize,
    /// Upper bound on the relative tolerance of each inner solve.
    pub krylov_tol: f64,
    pub krylov_max_iter: usize,
    pub damping: Damping,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol_res: 1e-10,
            max_newton: 50,
            krylov_tol: 1e-4,
            krylov_max_iter: 500,
            damping: Damping::LineSearchHalving,
        }
    }
}

const MAX_HALVINGS: usize = 20;

/// Spectral tables shared by operator applications at one grid and coupling.
pub(crate) struct SpectralOps {
    n: usize,
    neg_lap: Vec<f64>,
    shifted_inverse: Vec<f64>,
}

impl SpectralOps {
    /// Tables for -Δ and (-Δ + shift)⁻¹.
    pub(crate) fn new(grid: Grid, shift: f64) -> Self {
        Self {
            n: grid.n(),
            neg_lap: grid.symbol_table(|k2| k2),
            shifted_inverse: grid.symbol_table(|k2| 1.0 / (k2 + shift)),
        }
    }

    pub(crate) fn neg_laplacian(&self, x: &[f64]) -> Vec<f64> {
        apply_table(x, &self.neg_lap, self.n)
    }

    pub(crate) fn precondition(&self, x: &[f64]) -> Vec<f64> {
        apply_table(x, &self.shifted_inverse, self.n)
    }

    /// (-Δ - potential) x.
    pub(crate) fn neg_operator(&self, potential: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = self.neg_laplacian(x);
        for i in 0..y.len() {
            y[i] -= potential[i] * x[i];
        }
        y
    }
}

/// R(v) = Δv + ε⁻²E(1 - E) - 4πN with E = e^{u0} e^v.
pub fn residual(v: &Field, bg: &TorusBackground) -> Result<Field> {
    v.same_grid(bg.exp_u0())?;
    let eps = bg.epsilon();
    let inv = 1.0 / (eps * eps);
    let flux = 4.0 * PI * bg.config().total_multiplicity() as f64;
    let lap = laplacian(v);
    let vals = lap
        .values()
        .iter()
        .zip(v.values())
        .zip(bg.exp_u0().values())
        .map(|((&l, &w), &e0)| {
            let e = e0 * w.exp();
            l + inv * e * (1.0 - e) - flux
        })
        .collect();
    Ok(Field::from_raw(v.grid(), vals))
}

fn jacobian_potential(v: &[f64], exp_u0: &[f64], inv_eps2: f64) -> Vec<f64> {
    v.iter()
        .zip(exp_u0)
        .map(|(&w, &e0)| {
            let e = e0 * w.exp();
            inv_eps2 * e * (1.0 - 2.0 * e)
        })
        .collect()
}

/// Newton's method on R(v) = 0 with CG/MINRES inner solves and a halving line search.
pub fn newton_solve(v0: &Field, bg: &TorusBackground, s: &NewtonSettings) -> Result<SolveReport> {
    if !(s.tol_res > 0.0) || !(s.krylov_tol > 0.0) || s.max_newton == 0 {
        return Err(Error::InvalidParameter("Newton tolerances and iteration cap must be positive".into()));
    }
    if v0.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let eps = bg.epsilon();
    let inv = 1.0 / (eps * eps);
    let target = s.tol_res * inv;
    let ops = SpectralOps::new(bg.grid(), inv);
    let exp_u0 = bg.exp_u0().values();

    let mut v = v0.clone();
    let mut r_field = residual(&v, bg)?;
    let mut r = r_field.l2_norm();
    let r0 = r.max(f64::MIN_POSITIVE);
    let mut history = vec![r];
    let mut increments = Vec::new();
    let mut krylov_iterations = 0usize;
    let mut minres_used = 0usize;
    let mut steps = 0usize;

    while r > target {
        if steps == s.max_newton {
            return Err(Error::NotConverged { iterations: steps, increment: r });
        }
        steps += 1;
        let potential = jacobian_potential(v.values(), exp_u0, inv);
        let forcing = s.krylov_tol.min(r / r0).max(1e-12);
        let (delta, stats) = solve_symmetric(
            &mut |x| ops.neg_operator(&potential, x),
            &mut |x| ops.precondition(x),
            r_field.values(),
            forcing,
            s.krylov_max_iter,
        )?;
        krylov_iterations += stats.iterations;
        if stats.method == KrylovMethod::Minres {
            minres_used += 1;
        }

        let mut t = 1.0;
        let mut halvings = 0;
        loop {
            let trial = Field::from_raw(v.grid(), v.values().iter().zip(&delta).map(|(a, d)| a + t * d).collect());
            let rt = residual(&trial, bg)?;
            let nr = rt.l2_norm();
            let accept = match s.damping {
                Damping::None => nr.is_finite(),
                Damping::LineSearchHalving => nr.is_finite() && nr < (1.0 - 1e-4 * t) * r,
            };
            if accept {
                increments.push(t * delta.iter().fold(0.0f64, |m, d| m.max(d.abs())));
                v = trial;
                r_field = rt;
                r = nr;
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS || s.damping == Damping::None {
                return Err(Error::NewtonDiverged { iteration: steps, residual: r });
            }
            t *= 0.5;
        }
        history.push(r);
    }

    let mut report = SolveReport::new(bg, v);
    report.residual_history = history;
    report.increment_history = increments;
    report.diagnostics.insert("newton_steps".into(), steps as f64);
    report.diagnostics.insert("krylov_iterations".into(), krylov_iterations as f64);
    report.diagnostics.insert("minres_fallbacks".into(), minres_used as f64);
    report.diagnostics.insert("final_residual_l2".into(), r);
    if let Some(c) = quadratic_constant(&report.residual_history) {
        report.diagnostics.insert("quadratic_constant".into(), c);
    }
    report.classification = classify_dichotomy(&mut report, bg);
    Ok(report)
}

/// max r_{k+1}/r_k² over the last two steps of a residual history.
pub fn quadratic_constant(history: &[f64]) -> Option<f64> {
    if history.len() < 3 {
        return None;
    }
    let tail = &history[history.len() - 3..];
    Some((tail[1] / (tail[0] * tail[0])).max(tail[2] / (tail[1] * tail[1])))
}

/// L h = Δh + ε⁻² e^u (1 - 2e^u) h at a fixed base state.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    base_u: Field,
    epsilon: f64,
    potential: Field,
}

impl LinearizedOperator {
    /// Linearization at the smooth variable `v` over a background.
    pub fn at(v: &Field, bg: &TorusBackground) -> Result<Self> {
        v.same_grid(bg.exp_u0())?;
        let eps = bg.epsilon();
        let potential = jacobian_potential(v.values(), bg.exp_u0().values(), 1.0 / (eps * eps));
        Ok(Self { base_u: reconstruct_u(bg, v), epsilon: eps, potential: Field::from_raw(v.grid(), potential) })
    }

    /// Linearization at an everywhere-finite u.
    pub fn from_u(base_u: Field, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        let inv = 1.0 / (epsilon * epsilon);
        let potential = base_u.map(|u| {
            let e = u.exp();
            inv * e * (1.0 - 2.0 * e)
        });
        Ok(Self { base_u, epsilon, potential })
    }

    pub fn base_u(&self) -> &Field {
        &self.base_u
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    pub fn apply(&self, h: &Field) -> Result<Field> {
        h.same_grid(&self.potential)?;
        let lap = laplacian(h);
        let vals =
            lap.values().iter().zip(h.values()).zip(self.potential.values()).map(|((l, x), p)| l + p * x).collect();
        Ok(Field::from_raw(h.grid(), vals))
    }
}

/// Eigenpair of -L with the smallest |λ|.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda_min: f64,
    pub eigenvector: Field,
    /// ‖L e + λ e‖₂ / ‖e‖₂.
    pub residual: f64,
    pub iterations: usize,
}

const BLOCK: usize = 4;
const MAX_OUTER: usize = 200;

/// Default residual tolerance of the eigen probe: 1e-8 relative to the operator scale ε⁻².
pub fn default_eigen_tolerance(epsilon: f64) -> f64 {
    1e-8 * (1.0 / (epsilon * epsilon)).max(1.0)
}

fn orthonormalize(block: &mut [Vec<f64>]) -> usize {
    let mut kept = 0;
    for j in 0..block.len() {
        for _ in 0..2 {
            for i in 0..kept {
                let c = dot(&block[i], &block[j]);
                let (head, tail) = block.split_at_mut(j);
                for (t, s) in tail[0].iter_mut().zip(&head[i]) {
                    *t -= c * s;
                }
            }
        }
        let nrm = norm(&block[j]);
        if nrm > 1e-10 {
            block[j].iter_mut().for_each(|x| *x /= nrm);
            block.swap(kept, j);
            kept += 1;
        }
    }
    kept
}

/// Smallest-magnitude eigenvalue of -L by block shift-invert subspace iteration with Rayleigh–Ritz.
pub fn smallest_eigenvalue(op: &LinearizedOperator, tol: Option<f64>) -> Result<EigenPair> {
    let tol = tol.unwrap_or_else(|| default_eigen_tolerance(op.epsilon));
    let grid = op.potential.grid();
    let inv = 1.0 / (op.epsilon * op.epsilon);
    let ops = SpectralOps::new(grid, inv);
    let pot = op.potential.values();
    let apply = |x: &[f64]| ops.neg_operator(pot, x);

    let core = op.base_u.map(|u| 1.0 - u.exp().min(1.0));
    let mut block: Vec<Vec<f64>> = vec![
        vec![1.0; grid.len()],
        core.values().to_vec(),
        Field::from_fn(grid, |x, _| (2.0 * PI * x).cos())
            .values()
            .iter()
            .zip(core.values())
            .map(|(a, b)| a * b)
            .collect(),
        Field::from_fn(grid, |_, y| (2.0 * PI * y).sin())
            .values()
            .iter()
            .zip(core.values())
            .map(|(a, b)| a * b)
            .collect(),
    ];
    block.truncate(BLOCK);
    let mut size = orthonormalize(&mut block);
    block.truncate(size);

    let mut last_residual = f64::INFINITY;
    for outer in 1..=MAX_OUTER {
        let mut next = Vec::with_capacity(size);
        for x in &block {
            let (y, _) = solve_symmetric(&mut |z| apply(z), &mut |z| ops.precondition(z), x, 1e-11, 2000)?;
            next.push(y);
        }
        size = orthonormalize(&mut next);
        next.truncate(size);
        if size == 0 {
            return Err(Error::IterationStalled { residual: f64::INFINITY });
        }
        let images: Vec<Vec<f64>> = next.iter().map(|y| apply(y)).collect();
        let h = DMatrix::from_fn(size, size, |i, j| 0.5 * (dot(&next[i], &images[j]) + dot(&next[j], &images[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
        let combine = |vecs: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut out = vec![0.0; grid.len()];
            for (k, v) in vecs.iter().enumerate() {
                let c = eig.eigenvectors[(k, col)];
                for (o, x) in out.iter_mut().zip(v) {
                    *o += c * x;
                }
            }
            out
        };
        let ritz: Vec<Vec<f64>> = order.iter().map(|&c| combine(&next, c)).collect();
        let best = order[0];
        let theta = eig.eigenvalues[best];
        let image = combine(&images, best);
        let r: Vec<f64> = image.iter().zip(&ritz[0]).map(|(a, x)| a - theta * x).collect();
        // Discrete L² norms share the factor h, so the ratio is grid independent.
        last_residual = norm(&r) / norm(&ritz[0]);
        block = ritz;
        if last_residual <= tol {
            let mut e = block.swap_remove(0);
            let s = (e.len() as f64).sqrt();
            e.iter_mut().for_each(|x| *x *= s);
            return Ok(EigenPair {
                lambda_min: theta,
                eigenvector: Field::from_raw(grid, e),
                residual: last_residual,
                iterations: outer,
            });
        }
    }
    Err(Error::IterationStalled { residual: last_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::random_perturbation;
    use crate::monotone_solver::{maximal_solve, MonotoneSettings};
    use crate::vortex_background::{build_background, VortexConfiguration};

    fn background(points: Vec<[f64; 2]>, eps: f64, n: usize) -> TorusBackground {
        let cfg = VortexConfiguration::simple(points, eps).unwrap();
        build_background(&cfg, Grid::new(n).unwrap()).unwrap()
    }

    #[test]
    fn vacuum_residual_vanishes_at_zero() {
        let bg = background(vec![], 0.1, 32);
        assert_eq!(residual(&Field::zeros(bg.grid()), &bg).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn vacuum_newton_returns_to_zero() {
        let bg = background(vec![], 0.1, 32);
        let start = random_perturbation(bg.grid(), 3, 0.1);
        let rep = newton_solve(&start, &bg, &NewtonSettings::default()).unwrap();
        assert!(rep.v.sup_norm() < 1e-9);
    }

    #[test]
    fn polishing_the_maximal_solution_takes_few_steps() {
        let bg = background(vec![[0.5, 0.5]], 0.05, 128);
        let max = maximal_solve(&bg, &MonotoneSettings::default()).unwrap();
        let rep = newton_solve(&max.v, &bg, &NewtonSettings::default()).unwrap();
        assert!(rep.diagnostic("newton_steps").unwrap() <= 3.0);
        assert!(rep.v.zip_map(&max.v, |a, b| a - b).unwrap().sup_norm() <= 1e-8);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let bg = background(vec![[0.3, 0.6]], 0.1, 64);
        let v = random_perturbation(bg.grid(), 11, 0.3);
        let h = random_perturbation(bg.grid(), 12, 1.0);
        let op = LinearizedOperator::at(&v, &bg).unwrap();
        let jh = op.apply(&h).unwrap();
        let r0 = residual(&v, &bg).unwrap();
        let err = |t: f64| {
            let vt = v.zip_map(&h, |a, b| a + t * b).unwrap();
            let rt = residual(&vt, &bg).unwrap();
            let vals: Vec<f64> =
                (0..rt.values().len()).map(|i| rt.values()[i] - r0.values()[i] - t * jh.values()[i]).collect();
            Field::from_raw(bg.grid(), vals).l2_norm()
        };
        let ratio = err(1e-4) / err(1e-5);
        assert!((ratio - 100.0).abs() < 5.0, "ratio {ratio}");
    }

    #[test]
    fn vacuum_spectrum_is_the_coupling() {
        let op = LinearizedOperator::from_u(Field::zeros(Grid::new(32).unwrap()), 0.1).unwrap();
        let pair = smallest_eigenvalue(&op, None).unwrap();
        assert!((pair.lambda_min - 100.0).abs() < 1e-6, "{}", pair.lambda_min);
        assert!(pair.residual <= default_eigen_tolerance(0.1));
    }

    #[test]
    fn quadratic_constant_of_a_squaring_history() {
        assert_eq!(quadratic_constant(&[1.0, 0.5]), None);
        let c = quadratic_constant(&[1e-1, 2e-2, 8e-4]).unwrap();
        assert!((c - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let bg = background(vec![], 0.1, 16);
        let s = NewtonSettings { tol_res: 0.0, ..Default::default() };
        assert!(newton_solve(&Field::zeros(bg.grid()), &bg, &s).is_err());
        let bad = Field::constant(bg.grid(), f64::NAN);
        assert!(matches!(newton_solve(&bad, &bg, &NewtonSettings::default()), Err(Error::NonFinite)));
    }
}
