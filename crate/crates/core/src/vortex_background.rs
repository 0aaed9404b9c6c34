//! Vortex configurations, their ε-clusters, the torus Green function and the singular background.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{e1, ein, ein_prime, EULER_GAMMA};
use crate::torus_field::{Field, Grid, SpectralField};

/// Ewald splitting time for the Green function.
const TAU: f64 = 0.01;
/// Image and mode cutoffs keep every dropped term below e^{-45}.
const CUTOFF_EXPONENT: f64 = 45.0;
const K_MAX: i64 = 11;

/// Vortex positions on the unit torus with multiplicities and the coupling ε.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexConfiguration {
    points: Vec<[f64; 2]>,
    multiplicities: Vec<u32>,
    epsilon: f64,
}

impl VortexConfiguration {
    pub fn new(points: Vec<[f64; 2]>, multiplicities: Vec<u32>, epsilon: f64) -> Result<Self> {
        if points.len() != multiplicities.len() {
            return Err(Error::InvalidParameter("one multiplicity per point is required".into()));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidParameter("multiplicities must be positive".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("vortex coordinates must be finite".into()));
        }
        let points = points.into_iter().map(|[x, y]| [wrap(x), wrap(y)]).collect();
        Ok(Self { points, multiplicities, epsilon })
    }

    /// All multiplicities equal to one.
    pub fn simple(points: Vec<[f64; 2]>, epsilon: f64) -> Result<Self> {
        let m = vec![1; points.len()];
        Self::new(points, m, epsilon)
    }

    pub fn vacuum(epsilon: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), epsilon)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// N, the sum of multiplicities.
    pub fn total_multiplicity(&self) -> u32 {
        self.multiplicities.iter().sum()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.points.clone(), self.multiplicities.clone(), epsilon)
    }

    /// Merges points closer than 1e-12 into one point carrying the summed multiplicity.
    pub fn merged(&self) -> Self {
        let mut points: Vec<[f64; 2]> = Vec::new();
        let mut mult: Vec<u32> = Vec::new();
        for (p, &m) in self.points.iter().zip(&self.multiplicities) {
            match points.iter().position(|q| torus_distance(*p, *q) < 1e-12) {
                Some(k) => mult[k] += m,
                None => {
                    points.push(*p);
                    mult.push(m);
                }
            }
        }
        Self { points, multiplicities: mult, epsilon: self.epsilon }
    }
}

fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn wrap_centered(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// Minimal-image displacement a - b, each component in [-1/2, 1/2).
pub fn torus_delta(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [wrap_centered(a[0] - b[0]), wrap_centered(a[1] - b[1])]
}

pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = torus_delta(a, b);
    d[0].hypot(d[1])
}

fn fourier_weight(k2: i64) -> f64 {
    let k2 = k2 as f64 * 4.0 * PI * PI;
    (-k2 * TAU).exp() / k2
}

fn fourier_modes() -> impl Iterator<Item = (i64, i64, f64)> {
    let kmax2 = K_MAX * K_MAX;
    (-K_MAX..=K_MAX).flat_map(move |kx| {
        (-K_MAX..=K_MAX).filter_map(move |ky| {
            let k2 = kx * kx + ky * ky;
            (k2 != 0 && k2 <= kmax2).then(|| (kx, ky, fourier_weight(k2)))
        })
    })
}

/// Smooth image sum: Σ_{m≠0} E₁(|d+m|²/4τ)/4π plus the regularized m = 0 term.
fn real_space_regular(d: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for mx in -1..=1 {
        for my in -1..=1 {
            let (x, y) = (d[0] + mx as f64, d[1] + my as f64);
            let z = (x * x + y * y) / (4.0 * TAU);
            if mx == 0 && my == 0 {
                // E₁(z) + ln|d|·2 = Ein(z) - γ_E + ln(4τ).
                s += ein(z) - EULER_GAMMA + (4.0 * TAU).ln();
            } else if z < CUTOFF_EXPONENT {
                s += e1(z);
            }
        }
    }
    s / (4.0 * PI)
}

fn real_space_regular_gradient(d: [f64; 2]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for mx in -1..=1 {
        for my in -1..=1 {
            let (x, y) = (d[0] + mx as f64, d[1] + my as f64);
            let z = (x * x + y * y) / (4.0 * TAU);
            let dz = 1.0 / (2.0 * TAU); // dz/dx = x/(2τ)
            let f = if mx == 0 && my == 0 {
                ein_prime(z)
            } else if z < CUTOFF_EXPONENT {
                -(-z).exp() / z
            } else {
                continue;
            };
            g[0] += f * dz * x;
            g[1] += f * dz * y;
        }
    }
    [g[0] / (4.0 * PI), g[1] / (4.0 * PI)]
}

/// Regular part γ(d) = G(d) + ln|d|/2π at a minimal-image displacement d.
pub fn green_regular(d: [f64; 2]) -> f64 {
    let fourier: f64 =
        fourier_modes().map(|(kx, ky, w)| w * (2.0 * PI * (kx as f64 * d[0] + ky as f64 * d[1])).cos()).sum();
    fourier + real_space_regular(d) - TAU
}

/// Gradient of [`green_regular`] with respect to d.
pub fn green_regular_gradient(d: [f64; 2]) -> [f64; 2] {
    let mut g = real_space_regular_gradient(d);
    for (kx, ky, w) in fourier_modes() {
        let s = (2.0 * PI * (kx as f64 * d[0] + ky as f64 * d[1])).sin();
        g[0] -= w * 2.0 * PI * kx as f64 * s;
        g[1] -= w * 2.0 * PI * ky as f64 * s;
    }
    g
}

/// Torus Green function: -Δ_x G = δ_y - 1, ∫ G(·, y) = 0.
pub fn green(x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    let d = torus_delta(x, y);
    let r = d[0].hypot(d[1]);
    if r < 1e-12 {
        return Err(Error::DiagonalPoint);
    }
    Ok(-r.ln() / (2.0 * PI) + green_regular(d))
}

/// ∇_x G(x, y).
pub fn green_gradient(x: [f64; 2], y: [f64; 2]) -> Result<[f64; 2]> {
    let d = torus_delta(x, y);
    let r2 = d[0] * d[0] + d[1] * d[1];
    if r2 < 1e-24 {
        return Err(Error::DiagonalPoint);
    }
    let g = green_regular_gradient(d);
    Ok([g[0] - d[0] / (2.0 * PI * r2), g[1] - d[1] / (2.0 * PI * r2)])
}

/// Bound on the terms dropped by the Ewald truncation.
pub fn green_tail_bound() -> f64 {
    let kmax2 = K_MAX * K_MAX;
    let mut fourier = 0.0;
    for kx in -4 * K_MAX..=4 * K_MAX {
        for ky in -4 * K_MAX..=4 * K_MAX {
            let k2 = kx * kx + ky * ky;
            if k2 > kmax2 {
                fourier += fourier_weight(k2);
            }
        }
    }
    // Every image beyond the cutoff contributes at most E₁(45)/4π; at most 25 of them matter.
    fourier + 25.0 * e1(CUTOFF_EXPONENT) / (4.0 * PI)
}

/// Index sets of ε-clusters with the pairwise distance ratios inside each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub clusters: Vec<Vec<usize>>,
    pub velocities: Vec<PairRatio>,
    pub threshold: f64,
}

/// |p_i - p_j|/ε for a pair inside one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRatio {
    pub i: usize,
    pub j: usize,
    pub ratio: f64,
}

impl ClusterPartition {
    /// Cluster containing vortex `i`.
    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&i))
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Transitive closure of |p_i - p_j|/ε ≤ threshold.
pub fn classify_clusters(cfg: &VortexConfiguration, threshold: f64) -> ClusterPartition {
    let n = cfg.len();
    let eps = cfg.epsilon();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if torus_distance(cfg.points[i], cfg.points[j]) / eps <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match roots.iter().position(|&q| q == r) {
            Some(k) => clusters[k].push(i),
            None => {
                roots.push(r);
                clusters.push(vec![i]);
            }
        }
    }
    let mut velocities = Vec::new();
    for c in &clusters {
        for (a, &i) in c.iter().enumerate() {
            for &j in &c[a + 1..] {
                velocities.push(PairRatio { i, j, ratio: torus_distance(cfg.points[i], cfg.points[j]) / eps });
            }
        }
    }
    ClusterPartition { clusters, velocities, threshold }
}

/// Singular background u0 = -4π Σ α_i G(·, p_i) sampled on a grid.
#[derive(Debug, Clone)]
pub struct TorusBackground {
    config: VortexConfiguration,
    grid: Grid,
    u0: Field,
    exp_u0: Field,
    regular_gradients: Vec<[f64; 2]>,
}

impl TorusBackground {
    pub fn config(&self) -> &VortexConfiguration {
        &self.config
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    /// Band-limited u0: exact zero mean, Δu0 + 4πN equals the band-limited delta comb.
    pub fn u0(&self) -> &Field {
        &self.u0
    }

    /// e^{u0} from the analytic formula; zero at vortices lying on grid points.
    pub fn exp_u0(&self) -> &Field {
        &self.exp_u0
    }

    /// Gradient of u0 - 2α_i ln|x - p_i| at each p_i.
    pub fn regular_gradients(&self) -> &[[f64; 2]] {
        &self.regular_gradients
    }

    /// Whether the grid puts eight cells across a core.
    pub fn resolved(&self) -> bool {
        self.grid.resolves(self.config.epsilon)
    }

    /// Analytic u0 at a point; -∞ at a vortex.
    pub fn u0_at(&self, x: [f64; 2]) -> f64 {
        self.config
            .points
            .iter()
            .zip(&self.config.multiplicities)
            .map(|(&p, &a)| match green(x, p) {
                Ok(g) => -4.0 * PI * a as f64 * g,
                Err(_) => f64::NEG_INFINITY,
            })
            .sum()
    }

    /// ln e^{u0} with the band-limited u0 standing in at grid-point vortices.
    pub fn log_exp_u0(&self) -> Field {
        let vals = self
            .exp_u0
            .values()
            .iter()
            .zip(self.u0.values())
            .map(|(&e, &s)| if e > 0.0 { e.ln() } else { s })
            .collect();
        Field::from_raw(self.grid, vals)
    }
}

/// γ(x - p) on every grid point, with the Fourier part summed separably.
fn regular_part_grid(grid: Grid, p: [f64; 2]) -> Vec<f64> {
    let n = grid.n();
    let axis = |c: f64| -> Vec<Vec<Complex64>> {
        (-K_MAX..=K_MAX)
            .map(|k| (0..n).map(|i| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * (grid.coord(i) - c))).collect())
            .collect()
    };
    let ex = axis(p[0]);
    let ey = axis(p[1]);
    let nk = (2 * K_MAX + 1) as usize;
    let kmax2 = K_MAX * K_MAX;
    // partial[kx][j] = Σ_ky w(kx, ky) e^{2πi ky (y_j - p_y)}
    let mut partial = vec![Complex64::new(0.0, 0.0); nk * n];
    for (a, kx) in (-K_MAX..=K_MAX).enumerate() {
        for (b, ky) in (-K_MAX..=K_MAX).enumerate() {
            let k2 = kx * kx + ky * ky;
            if k2 == 0 || k2 > kmax2 {
                continue;
            }
            let w = fourier_weight(k2);
            for j in 0..n {
                partial[a * n + j] += ey[b][j] * w;
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let x = grid.coord(i);
        for j in 0..n {
            let mut f = 0.0;
            for a in 0..nk {
                let z = ex[a][i] * partial[a * n + j];
                f += z.re;
            }
            let d = torus_delta([x, grid.coord(j)], p);
            out[i * n + j] = f + real_space_regular(d) - TAU;
        }
    }
    out
}

/// Builds u0, e^{u0} and the regular-part gradients for a configuration.
pub fn build_background(cfg: &VortexConfiguration, grid: Grid) -> Result<TorusBackground> {
    for i in 0..cfg.len() {
        for j in (i + 1)..cfg.len() {
            if torus_distance(cfg.points[i], cfg.points[j]) < 1e-12 {
                return Err(Error::VortexOnVortex(i, j));
            }
        }
    }
    let n = grid.n();
    let mut exp_u0 = vec![1.0; n * n];
    for (&p, &a) in cfg.points.iter().zip(&cfg.multiplicities) {
        let gamma = regular_part_grid(grid, p);
        let a = a as f64;
        for i in 0..n {
            let x = grid.coord(i);
            for j in 0..n {
                let d = torus_delta([x, grid.coord(j)], p);
                let r2 = d[0] * d[0] + d[1] * d[1];
                exp_u0[i * n + j] *= r2.powf(a) * (-4.0 * PI * a * gamma[i * n + j]).exp();
            }
        }
    }

    let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let kx = grid.wavenumber(i) as f64;
        for j in 0..n {
            let ky = grid.wavenumber(j) as f64;
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let mut s = Complex64::new(0.0, 0.0);
            for (&p, &a) in cfg.points.iter().zip(&cfg.multiplicities) {
                s += Complex64::from_polar(a as f64, -2.0 * PI * (kx * p[0] + ky * p[1]));
            }
            coeffs[i * n + j] = s * (-4.0 * PI / (4.0 * PI * PI * k2));
        }
    }
    let u0 = SpectralField::from_coefficients(grid, coeffs)?.to_field();

    let regular_gradients = (0..cfg.len())
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..cfg.len() {
                let a = cfg.multiplicities[j] as f64;
                let gj = if i == j {
                    green_regular_gradient([0.0, 0.0])
                } else {
                    green_gradient(cfg.points[i], cfg.points[j])?
                };
                g[0] -= 4.0 * PI * a * gj[0];
                g[1] -= 4.0 * PI * a * gj[1];
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TorusBackground { config: cfg.clone(), grid, u0, exp_u0: Field::from_raw(grid, exp_u0), regular_gradients })
}
