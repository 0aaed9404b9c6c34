//! Torus solutions built from a planar profile: u = ηψ_ε + ε^p v with ψ_ε(x) = ψ((x - c)/ε),
//! where v is the fixed point of v ↦ v - DF_ε(0)⁻¹F_ε(v).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::krylov::solve_symmetric;
use crate::newton_solver::SpectralOps;
use crate::radial_planar::PlanarSolution;
use crate::special::radial_plateau;
use crate::torus_field::{laplacian, Field, Grid};
use crate::vortex_background::{
    build_background, green, green_regular, torus_delta, TorusBackground, VortexConfiguration,
};

/// Radial cutoff η with η = 1 on |x| ≤ δ and η = 0 on |x| ≥ 2δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    delta: f64,
}

impl Cutoff {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.25) {
            return Err(Error::InvalidParameter("cutoff radius must lie in (0, 0.25)".into()));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// (η, ∇η, Δη) at displacement d from the centre.
    pub fn at(&self, d: [f64; 2]) -> (f64, [f64; 2], f64) {
        let r = d[0].hypot(d[1]);
        let (v, d1, d2) = radial_plateau(r, self.delta, 2.0 * self.delta);
        if d1 == 0.0 && d2 == 0.0 {
            return (v, [0.0; 2], 0.0);
        }
        (v, [d1 * d[0] / r, d1 * d[1] / r], d2 + d1 / r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSettings {
    pub delta: f64,
    /// Exponent p in u = ηψ_ε + ε^p v.
    pub power: i32,
    /// Stop when ε^p ‖F_ε(v)‖₂ ≤ tol.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PerturbSettings {
    fn default() -> Self {
        Self { delta: 0.1, power: 3, tol: 1e-10, max_iter: 200 }
    }
}

/// Sampled ingredients of F_ε on a torus grid.
#[derive(Debug, Clone)]
pub struct PerturbProblem {
    grid: Grid,
    epsilon: f64,
    center: [f64; 2],
    cutoff: Cutoff,
    power: i32,
    config: VortexConfiguration,
    /// e^{ηψ_ε}.
    exp_eta_psi: Vec<f64>,
    /// η e^{ψ_ε}(1 - e^{ψ_ε}).
    planar_source: Vec<f64>,
    /// 2∇η·∇ψ_ε + ψ_εΔη.
    cutoff_source: Vec<f64>,
    /// Limits of ψ_ε(x) - 2α_i ln|x - q_i| at the torus vortices q_i.
    vortex_regular: Vec<f64>,
}

impl PerturbProblem {
    /// Samples ψ_ε around `center` for the planar solution `psi`.
    pub fn new(psi: &PlanarSolution, grid: Grid, epsilon: f64, center: [f64; 2], s: &PerturbSettings) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        let cutoff = Cutoff::new(s.delta)?;
        let needed = 2.0 * cutoff.delta / epsilon;
        if needed > psi.half_width() {
            return Err(Error::PlanarDomainTooSmall { needed, available: psi.half_width() });
        }
        for v in psi.vortices() {
            if epsilon * v.position[0].hypot(v.position[1]) >= cutoff.delta {
                return Err(Error::InvalidParameter("rescaled vortices must lie inside the cutoff plateau".into()));
            }
        }
        let points = psi
            .vortices()
            .iter()
            .map(|v| [center[0] + epsilon * v.position[0], center[1] + epsilon * v.position[1]])
            .collect();
        let mults = psi.vortices().iter().map(|v| v.multiplicity).collect();
        let config = VortexConfiguration::new(points, mults, epsilon)?;

        let n = grid.n();
        let offsets: Vec<f64> = (0..n).map(|i| torus_delta([grid.coord(i), 0.0], [center[0], 0.0])[0]).collect();
        let offsets_y: Vec<f64> = (0..n).map(|j| torus_delta([0.0, grid.coord(j)], [0.0, center[1]])[1]).collect();
        let reach = 2.0 * cutoff.delta;
        let near_x: Vec<usize> = (0..n).filter(|&i| offsets[i].abs() < reach).collect();
        let near_y: Vec<usize> = (0..n).filter(|&j| offsets_y[j].abs() < reach).collect();
        let xs: Vec<f64> = near_x.iter().map(|&i| offsets[i] / epsilon).collect();
        let ys: Vec<f64> = near_y.iter().map(|&j| offsets_y[j] / epsilon).collect();
        let sample = psi.eval_grid(&xs, &ys);

        let mut exp_eta_psi = vec![1.0; n * n];
        let mut planar_source = vec![0.0; n * n];
        let mut cutoff_source = vec![0.0; n * n];
        for (a, &i) in near_x.iter().enumerate() {
            for (b, &j) in near_y.iter().enumerate() {
                let d = [offsets[i], offsets_y[j]];
                let (eta, grad_eta, lap_eta) = cutoff.at(d);
                if eta == 0.0 && lap_eta == 0.0 {
                    continue;
                }
                let k = a * ys.len() + b;
                let e = sample.exp_psi[k];
                let idx = i * n + j;
                exp_eta_psi[idx] = e.powf(eta);
                planar_source[idx] = eta * e * (1.0 - e);
                if grad_eta != [0.0; 2] || lap_eta != 0.0 {
                    let gpsi = [sample.psi_x[k] / epsilon, sample.psi_y[k] / epsilon];
                    cutoff_source[idx] =
                        2.0 * (grad_eta[0] * gpsi[0] + grad_eta[1] * gpsi[1]) + sample.psi[k] * lap_eta;
                }
            }
        }
        let vortex_regular = psi
            .vortices()
            .iter()
            .enumerate()
            .map(|(i, v)| psi.regular_at_vortex(i) - 2.0 * v.multiplicity as f64 * epsilon.ln())
            .collect();
        Ok(Self {
            grid,
            epsilon,
            center,
            cutoff,
            power: s.power,
            config,
            exp_eta_psi,
            planar_source,
            cutoff_source,
            vortex_regular,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    pub fn power(&self) -> i32 {
        self.power
    }

    /// Torus vortices c + εp_i.
    pub fn config(&self) -> &VortexConfiguration {
        &self.config
    }

    /// e^{ηψ_ε} on the grid.
    pub fn exp_eta_psi(&self) -> Field {
        Field::from_raw(self.grid, self.exp_eta_psi.clone())
    }

    /// F_ε(v) = Δv + ε^{-2-p}[Ee^{ε^p v}(1 - Ee^{ε^p v}) - ηe^ψ(1 - e^ψ)] + ε^{-p}(2∇η·∇ψ_ε + ψ_εΔη),
    /// with E = e^{ηψ_ε}.
    pub fn f_eps(&self, v: &Field) -> Result<Field> {
        if v.grid() != self.grid {
            return Err(Error::GridMismatch(v.grid().n(), self.grid.n()));
        }
        let eps = self.epsilon;
        let ep = eps.powi(self.power);
        let big = eps.powi(-2 - self.power);
        let small = eps.powi(-self.power);
        let lap = laplacian(v);
        let vals = (0..v.values().len())
            .map(|i| {
                let e = self.exp_eta_psi[i] * (ep * v.values()[i]).exp();
                lap.values()[i] + big * (e * (1.0 - e) - self.planar_source[i]) + small * self.cutoff_source[i]
            })
            .collect();
        Ok(Field::from_raw(self.grid, vals))
    }

    fn linear_potential(&self) -> Vec<f64> {
        let inv = 1.0 / (self.epsilon * self.epsilon);
        self.exp_eta_psi.iter().map(|&e| inv * e * (1.0 - 2.0 * e)).collect()
    }

    /// DF_ε(0)h = Δh + ε⁻²e^{ηψ_ε}(1 - 2e^{ηψ_ε})h.
    pub fn linearized_at_zero(&self, h: &Field) -> Result<Field> {
        if h.grid() != self.grid {
            return Err(Error::GridMismatch(h.grid().n(), self.grid.n()));
        }
        let pot = self.linear_potential();
        let lap = laplacian(h);
        let vals = lap.values().iter().zip(h.values()).zip(&pot).map(|((l, x), p)| l + p * x).collect();
        Ok(Field::from_raw(self.grid, vals))
    }

    /// u - u0 for u = ηψ_ε + ε^p v, finite at the vortices.
    pub fn smooth_variable(&self, v: &Field, bg: &TorusBackground) -> Field {
        let ep = self.epsilon.powi(self.power);
        let n = self.grid.n();
        let exp_u0 = bg.exp_u0().values();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let e0 = exp_u0[idx];
                let val = if e0 > 0.0 && self.exp_eta_psi[idx] > 0.0 {
                    (self.exp_eta_psi[idx] / e0).ln()
                } else {
                    self.vortex_limit([self.grid.coord(i), self.grid.coord(j)])
                };
                out.push(val + ep * v.values()[idx]);
            }
        }
        Field::from_raw(self.grid, out)
    }

    /// ψ_ε - u0 at a grid point carrying a vortex, from the two regular parts.
    fn vortex_limit(&self, x: [f64; 2]) -> f64 {
        let pts = self.config.points();
        let mults = self.config.multiplicities();
        let i = (0..pts.len())
            .min_by(|&a, &b| {
                let da = torus_delta(x, pts[a]);
                let db = torus_delta(x, pts[b]);
                da[0].hypot(da[1]).total_cmp(&db[0].hypot(db[1]))
            })
            .expect("a vortex sits at a zero of e^{u0}");
        let mut u0_regular = -4.0 * PI * mults[i] as f64 * green_regular([0.0, 0.0]);
        for j in 0..pts.len() {
            if j != i {
                u0_regular -= 4.0 * PI * mults[j] as f64 * green(pts[i], pts[j]).unwrap_or(0.0);
            }
        }
        self.vortex_regular[i] - u0_regular
    }
}

/// Converged fixed point of the contraction.
#[derive(Debug, Clone)]
pub struct PerturbState {
    pub v: Field,
    pub epsilon: f64,
    /// u on the grid, with the band-limited u0 standing in at grid-point vortices.
    pub u: Field,
    /// u - u0.
    pub smooth: Field,
    /// ε^p ‖F_ε(v)‖₂ at exit.
    pub residual_norm: f64,
    /// ‖F_ε(0)‖₂, unscaled.
    pub f0_norm: f64,
    pub iterations: usize,
    /// Sup-norm of each update.
    pub increments: Vec<f64>,
    /// ε^p ‖F_ε(v_k)‖₂ per iterate, starting at v₀.
    pub residuals: Vec<f64>,
    /// increments[1] / increments[0], when two updates were taken.
    pub contraction_ratio: Option<f64>,
    /// (‖v‖₂² + ‖Δv‖₂²)^{1/2}.
    pub v_h2_norm: f64,
}

const STALL_WINDOW: usize = 10;

/// Iterates v ← v - DF_ε(0)⁻¹F_ε(v) from v = 0 until ε^p‖F_ε(v)‖₂ ≤ tol.
pub fn contraction_solve(problem: &PerturbProblem, s: &PerturbSettings) -> Result<PerturbState> {
    if !(s.tol > 0.0) || s.max_iter == 0 {
        return Err(Error::InvalidParameter("tolerance and iteration cap must be positive".into()));
    }
    let eps = problem.epsilon;
    let ep = eps.powi(problem.power);
    let ops = SpectralOps::new(problem.grid, 1.0 / (eps * eps));
    let pot = problem.linear_potential();
    let mut v = Field::zeros(problem.grid);
    let mut f = problem.f_eps(&v)?;
    let f0_norm = f.l2_norm();
    let mut residuals = vec![ep * f0_norm];
    let mut increments: Vec<f64> = Vec::new();
    let mut stalled = 0;
    while *residuals.last().unwrap() > s.tol {
        if increments.len() == s.max_iter || stalled >= STALL_WINDOW {
            return Err(Error::ContractionFailed { iterations: increments.len() });
        }
        let (d, _) =
            solve_symmetric(&mut |x| ops.neg_operator(&pot, x), &mut |x| ops.precondition(x), f.values(), 1e-11, 2000)?;
        let inc = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(&prev) = increments.last() {
            stalled = if inc >= prev { stalled + 1 } else { 0 };
        }
        increments.push(inc);
        v = Field::from_raw(problem.grid, v.values().iter().zip(&d).map(|(a, b)| a + b).collect());
        f = problem.f_eps(&v)?;
        residuals.push(ep * f.l2_norm());
    }
    let bg = build_background(&problem.config, problem.grid)?;
    let smooth = problem.smooth_variable(&v, &bg);
    let u = bg.log_exp_u0().zip_map(&smooth, |a, b| a + b)?;
    let lap = laplacian(&v);
    let v_h2_norm = (v.l2_norm().powi(2) + lap.l2_norm().powi(2)).sqrt();
    Ok(PerturbState {
        epsilon: eps,
        u,
        smooth,
        residual_norm: *residuals.last().unwrap(),
        f0_norm,
        iterations: increments.len(),
        contraction_ratio: (increments.len() >= 2).then(|| increments[1] / increments[0]),
        increments,
        residuals,
        v_h2_norm,
        v,
    })
}

/// sup |u(c + εy) - ψ(y)| over torus grid points with |x - c| ≤ d, skipping grid points on a vortex.
pub fn rescaled_compare(u_torus: &Field, psi: &PlanarSolution, eps: f64, d: f64, center: [f64; 2]) -> f64 {
    let grid = u_torus.grid();
    let n = grid.n();
    let near = |axis: usize| -> Vec<(usize, f64)> {
        (0..n)
            .map(|i| {
                let mut x = [0.0; 2];
                x[axis] = grid.coord(i);
                let mut c = [0.0; 2];
                c[axis] = center[axis];
                (i, torus_delta(x, c)[axis])
            })
            .filter(|&(_, o)| o.abs() <= d)
            .collect()
    };
    let (rows, cols) = (near(0), near(1));
    let xs: Vec<f64> = rows.iter().map(|&(_, o)| o / eps).collect();
    let ys: Vec<f64> = cols.iter().map(|&(_, o)| o / eps).collect();
    let sample = psi.eval_grid(&xs, &ys);
    let mut worst = 0.0f64;
    for (a, &(i, dx)) in rows.iter().enumerate() {
        for (b, &(j, dy)) in cols.iter().enumerate() {
            let k = a * cols.len() + b;
            if dx.hypot(dy) <= d && sample.psi[k].is_finite() && sample.exp_psi[k] > 0.0 {
                worst = worst.max((u_torus.at(i, j) - sample.psi[k]).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::random_perturbation;
    use crate::newton_solver::residual;
    use crate::radial_planar::{planar_multivortex_solve, PlanarVortex};

    fn single() -> PlanarSolution {
        planar_multivortex_solve(&[PlanarVortex { position: [0.0, 0.0], multiplicity: 1 }], 20.0, 127).unwrap()
    }

    fn problem(psi: &PlanarSolution, eps: f64) -> PerturbProblem {
        PerturbProblem::new(psi, Grid::new(128).unwrap(), eps, [0.5, 0.5], &PerturbSettings::default()).unwrap()
    }

    #[test]
    fn cutoff_plateau_and_support() {
        let c = Cutoff::new(0.1).unwrap();
        assert_eq!(c.at([0.05, 0.0]), (1.0, [0.0; 2], 0.0));
        assert_eq!(c.at([0.0, 0.25]).0, 0.0);
        let (mid, grad, _) = c.at([0.15, 0.0]);
        assert!(mid > 0.0 && mid < 1.0 && grad[0] < 0.0 && grad[1] == 0.0);
        assert!(Cutoff::new(0.25).is_err());
    }

    #[test]
    fn small_planar_domain_is_rejected() {
        let psi = single();
        let err = PerturbProblem::new(&psi, Grid::new(64).unwrap(), 0.005, [0.5, 0.5], &PerturbSettings::default())
            .unwrap_err();
        assert!(matches!(err, Error::PlanarDomainTooSmall { .. }));
    }

    /// R(u - u0) - ε^p F_ε(v) does not depend on v.
    #[test]
    fn torus_residual_matches_scaled_map() {
        let psi = single();
        let eps = 0.05;
        let p = problem(&psi, eps);
        let bg = build_background(p.config(), p.grid()).unwrap();
        let ep = eps.powi(p.power());
        let defect = |v: &Field| {
            let r = residual(&p.smooth_variable(v, &bg), &bg).unwrap();
            let f = p.f_eps(v).unwrap();
            r.zip_map(&f, |a, b| a - ep * b).unwrap()
        };
        let d1 = defect(&random_perturbation(p.grid(), 1, 1.0));
        let d2 = defect(&random_perturbation(p.grid(), 2, 1.0));
        let gap = d1.zip_map(&d2, |a, b| a - b).unwrap().sup_norm();
        assert!(gap * ep < 1e-9, "gap {gap}");
    }

    #[test]
    fn linearization_is_self_adjoint() {
        let psi = single();
        let p = problem(&psi, 0.05);
        let a = random_perturbation(p.grid(), 5, 1.0);
        let b = random_perturbation(p.grid(), 6, 1.0);
        let lhs = p.linearized_at_zero(&a).unwrap().dot(&b).unwrap();
        let rhs = a.dot(&p.linearized_at_zero(&b).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn contraction_converges() {
        let psi = single();
        let p = problem(&psi, 0.05);
        let s = PerturbSettings::default();
        let state = contraction_solve(&p, &s).unwrap();
        assert!(state.residual_norm <= s.tol);
        assert!(state.contraction_ratio.map_or(true, |r| r < 1.0));
        assert!(state.u.max() < 1e-6);
    }
}
