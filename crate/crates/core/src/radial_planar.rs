//! Radial shooting for planar profiles and a Dirichlet-box planar multivortex solver.
//!
//! Radial profiles are integrated in t = ln r with state (u, r u′) plus running quadratures,
//! which keeps the regular singular point at the origin and the long bubble tails cheap.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fft::dst1_2d;
use crate::krylov::{norm, solve_symmetric};
use crate::ode::Stepper;
use crate::special::{bessel_i_scaled, bessel_k_scaled, radial_plateau};

/// How a shooting trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TerminalTag {
    /// Joined the decaying linear tail a·K₀(r).
    Decayed,
    /// u < -60 while decreasing.
    BlewDown,
    /// u > 0.
    Overshot,
    ReachedRmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSample {
    pub r: f64,
    pub u: f64,
    pub du: f64,
}

/// Solution of u″ + u′/r + eᵘ(1 − eᵘ) = 0 on r > 0 with u ~ 2α ln r + s at the origin.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub alpha: f64,
    pub s: f64,
    pub r_max: f64,
    pub samples: Vec<RadialSample>,
    pub tag: TerminalTag,
    /// Radius where integration stopped (or the tail was attached).
    pub terminal_radius: f64,
    /// 4πα − 2π lim r u′, including the analytic tail past the terminal radius.
    pub flux_limit: f64,
    /// ∫ eᵘ(1 − eᵘ) 2πr dr by running quadrature, with the same tail.
    pub flux_quadrature: f64,
    /// ∫ (1 − eᵘ)² 2πr dr.
    pub defect_integral: f64,
    /// Amplitude a of the attached tail u ≈ a K₀(r) for decayed profiles.
    pub tail_amplitude: Option<f64>,
    /// Coefficient b of the growing mode I₀ at the matching radius, when matched.
    growth_coefficient: Option<f64>,
}

const R0: f64 = 1e-6;
const BLOW_DOWN: f64 = 60.0;
const MATCH_LEVEL: f64 = 1e-4;
const DECAY_RATIO: f64 = 1e-2;
const MAX_DT: f64 = 0.02;
const MAX_DR: f64 = 0.05;
const DENSE_UNTIL: f64 = 64.0;
const UNBOUNDED: f64 = 1e40;

fn nonlinearity(u: f64) -> f64 {
    let e = u.exp();
    e * (1.0 - e)
}

fn k0(x: f64) -> f64 {
    bessel_k_scaled(0, x) * (-x).exp()
}

fn k1(x: f64) -> f64 {
    bessel_k_scaled(1, x) * (-x).exp()
}

fn i0(x: f64) -> f64 {
    bessel_i_scaled(0, x) * x.exp()
}

fn i1(x: f64) -> f64 {
    bessel_i_scaled(1, x) * x.exp()
}

fn rhs(t: f64, y: &[f64]) -> Vec<f64> {
    let r2 = (2.0 * t).exp();
    let e = y[0].exp();
    let g = e * (1.0 - e);
    vec![y[1], -r2 * g, 2.0 * PI * r2 * g, 2.0 * PI * r2 * (1.0 - e) * (1.0 - e)]
}

/// Series data at r₀: (u, r u′, flux quadrature, defect quadrature).
fn series_start(alpha: f64, s: f64) -> [f64; 4] {
    if alpha == 0.0 {
        let g = nonlinearity(s);
        let r2 = R0 * R0;
        [s - 0.25 * g * r2, -0.5 * g * r2, PI * r2 * g, PI * r2 * (1.0 - s.exp()).powi(2)]
    } else {
        let m = 2.0 * alpha + 2.0;
        let lead = s.exp() * R0.powf(m);
        let u = 2.0 * alpha * R0.ln() + s - lead / (m * m);
        [u, 2.0 * alpha - lead / m, 2.0 * PI * lead / m, PI * R0 * R0]
    }
}

fn validate(alpha: f64, s: f64, r_max: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter("alpha must be a nonnegative number".into()));
    }
    if !s.is_finite() || (alpha == 0.0 && !(s < 0.0)) {
        return Err(Error::InvalidParameter("s must be finite, and negative when alpha = 0".into()));
    }
    if !(r_max > R0) {
        return Err(Error::InvalidParameter(format!("r_max must exceed {R0}")));
    }
    Ok(())
}

fn integrate(alpha: f64, s: f64, r_max: f64, record: bool) -> Result<RadialProfile> {
    validate(alpha, s, r_max)?;
    let mut y = series_start(alpha, s).to_vec();
    let mut t = R0.ln();
    let t_end = r_max.ln();
    let mut stepper = Stepper { rtol: 1e-11, atol: 1e-13, h: 1e-3, h_max: 0.5, error_components: 2 };
    let mut samples = Vec::new();
    let push = |samples: &mut Vec<RadialSample>, t: f64, y: &[f64]| {
        let r = t.exp();
        samples.push(RadialSample { r, u: y[0], du: y[1] / r });
    };
    if record {
        push(&mut samples, t, &y);
    }
    let flux_from_p = |p: f64| 4.0 * PI * alpha - 2.0 * PI * p;
    let mut profile = RadialProfile {
        alpha,
        s,
        r_max,
        samples: Vec::new(),
        tag: TerminalTag::ReachedRmax,
        terminal_radius: r_max,
        flux_limit: 0.0,
        flux_quadrature: 0.0,
        defect_integral: 0.0,
        tail_amplitude: None,
        growth_coefficient: None,
    };

    loop {
        let r = t.exp();
        let cap = if r < DENSE_UNTIL { MAX_DT.min(MAX_DR / r) } else { MAX_DT };
        let (tn, yn) = stepper.step(&rhs, t, &y, t_end, cap, f64::exp)?;
        t = tn;
        y = yn;
        if record {
            push(&mut samples, t, &y);
        }
        let (u, p) = (y[0], y[1]);
        let r = t.exp();
        if u > 0.0 {
            profile.tag = TerminalTag::Overshot;
        } else if p < 0.0 && u < -BLOW_DOWN {
            profile.tag = TerminalTag::BlewDown;
            // Past the cutoff e^u(1 - e^u) ≈ e^{u_c}(r/r_c)^{p_c}; its flux is finite when p_c < -2.
            let tail = if p < -2.0 { 2.0 * PI * r * r * u.exp() / (-p - 2.0) } else { 0.0 };
            profile.terminal_radius = r;
            profile.flux_limit = flux_from_p(p) + tail;
            profile.flux_quadrature = y[2] + tail;
            profile.defect_integral = y[3];
            break;
        } else if alpha > 0.0 && p > 0.0 && u >= -MATCH_LEVEL {
            // Match (u, u′) to a K₀ + b I₀ using the Wronskian r(I₀K₀′ - I₀′K₀) = -1.
            let du = p / r;
            let (kk0, kk1, ii0, ii1) = (k0(r), k1(r), i0(r), i1(r));
            let a = r * (u * ii1 - du * ii0);
            let b = r * (kk0 * du + kk1 * u);
            profile.terminal_radius = r;
            profile.growth_coefficient = Some(b);
            profile.tail_amplitude = Some(a);
            if (b * ii0).abs() <= DECAY_RATIO * (a * kk0).abs() {
                profile.tag = TerminalTag::Decayed;
                let flux_tail = -2.0 * PI * a * r * kk1;
                let defect_tail = 2.0 * PI * a * a * 0.5 * r * r * (kk1 * kk1 - kk0 * kk0);
                profile.flux_limit = 4.0 * PI * alpha;
                profile.flux_quadrature = y[2] + flux_tail;
                profile.defect_integral = y[3] + defect_tail;
                if record {
                    let mut rr = r + MAX_DR;
                    while rr <= r_max {
                        samples.push(RadialSample { r: rr, u: a * k0(rr), du: -a * k1(rr) });
                        rr += MAX_DR;
                    }
                }
            } else {
                profile.tag = if b > 0.0 { TerminalTag::Overshot } else { TerminalTag::BlewDown };
                profile.flux_limit = flux_from_p(p);
                profile.flux_quadrature = y[2];
                profile.defect_integral = y[3];
            }
            break;
        }
        if profile.tag == TerminalTag::Overshot || t >= t_end {
            profile.terminal_radius = r;
            profile.flux_limit = flux_from_p(p);
            profile.flux_quadrature = y[2];
            profile.defect_integral = y[3];
            break;
        }
    }
    profile.samples = samples;
    Ok(profile)
}

/// Shoots the radial profile from the series start near the origin out to `r_max`.
pub fn shoot(alpha: f64, s: f64, r_max: f64) -> Result<RadialProfile> {
    integrate(alpha, s, r_max, true)
}

impl RadialProfile {
    /// Cubic Hermite interpolation of u between samples; the series form below the first sample
    /// and the K₀ tail past the matching radius.
    pub fn value_at(&self, r: f64) -> Option<f64> {
        if !(r > 0.0) {
            return None;
        }
        let first = self.samples.first()?;
        if r < first.r {
            return Some(2.0 * self.alpha * r.ln() + self.s);
        }
        if self.tag == TerminalTag::Decayed && r >= self.terminal_radius {
            return (r <= self.r_max).then(|| self.tail_amplitude.unwrap() * k0(r));
        }
        let last = self.samples.last()?;
        if r > last.r {
            return None;
        }
        let i = self.samples.partition_point(|s| s.r <= r).clamp(1, self.samples.len() - 1);
        let (a, b) = (self.samples[i - 1], self.samples[i]);
        let h = b.r - a.r;
        if h == 0.0 {
            return Some(a.u);
        }
        let x = (r - a.r) / h;
        let (x2, x3) = (x * x, x * x * x);
        Some(
            (2.0 * x3 - 3.0 * x2 + 1.0) * a.u
                + (x3 - 2.0 * x2 + x) * h * a.du
                + (-2.0 * x3 + 3.0 * x2) * b.u
                + (x3 - x2) * h * b.du,
        )
    }

    /// u - 2α ln r, bounded at the origin.
    pub fn regular_value_at(&self, r: f64) -> Option<f64> {
        self.value_at(r).map(|u| u - 2.0 * self.alpha * r.ln())
    }

    /// Writes `r,u,du` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "r,u,du")?;
        for s in &self.samples {
            writeln!(f, "{:.17e},{:.17e},{:.17e}", s.r, s.u, s.du)?;
        }
        Ok(())
    }
}

/// Flux β(s) of the radial bubble with center value s, as (limit of -2π r u′, quadrature).
pub fn beta_pair(s: f64) -> Result<(f64, f64)> {
    let p = integrate(0.0, s, UNBOUNDED, false)?;
    if p.tag != TerminalTag::BlewDown {
        return Err(Error::StepFailure { r: p.terminal_radius });
    }
    Ok((p.flux_limit, p.flux_quadrature))
}

/// β(s); fails when the two evaluations differ by more than 0.1%.
pub fn beta(s: f64) -> Result<f64> {
    let (limit, quadrature) = beta_pair(s)?;
    if (limit - quadrature).abs() > 1e-3 * limit.abs() {
        return Err(Error::FluxMismatch { limit, quadrature });
    }
    Ok(limit)
}

/// (s, β(s)) on `count` evenly spaced centre values in [smin, smax].
pub fn beta_table(smin: f64, smax: f64, count: usize) -> Result<Vec<(f64, f64)>> {
    if !(smin < smax) || !(smax < 0.0) || count < 2 {
        return Err(Error::InvalidParameter("need smin < smax < 0 and count ≥ 2".into()));
    }
    (0..count)
        .map(|i| {
            let s = smin + (smax - smin) * i as f64 / (count - 1) as f64;
            beta(s).map(|b| (s, b))
        })
        .collect()
}

/// Outcome used for bisection: the sign of the growing mode when matched, otherwise the tag.
fn bisection_side(alpha: f64, s: f64) -> Result<TerminalTag> {
    let p = integrate(alpha, s, UNBOUNDED, false)?;
    Ok(match p.growth_coefficient {
        Some(b) if b > 0.0 => TerminalTag::Overshot,
        Some(_) => TerminalTag::BlewDown,
        None => p.tag,
    })
}

/// Threshold value s* separating blow-down from overshoot, and its profile.
#[derive(Debug, Clone)]
pub struct Threshold {
    pub s_star: f64,
    pub profile: RadialProfile,
    pub bisection_steps: usize,
}

/// Bisection for the topological threshold inside the bracket [low, high].
pub fn find_topological_threshold_in(alpha: f64, low: f64, high: f64, r_max: f64) -> Result<Threshold> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("threshold shooting needs alpha > 0".into()));
    }
    let (mut lo, mut hi) = (low.min(high), low.max(high));
    let tag_lo = bisection_side(alpha, lo)?;
    let tag_hi = bisection_side(alpha, hi)?;
    if tag_lo != TerminalTag::BlewDown || tag_hi != TerminalTag::Overshot {
        return Err(Error::NoBracket { low: tag_lo, high: tag_hi });
    }
    let mut steps = 0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match bisection_side(alpha, mid)? {
            TerminalTag::Overshot => hi = mid,
            _ => lo = mid,
        }
        steps += 1;
    }
    let s_star = 0.5 * (lo + hi);
    Ok(Threshold { s_star, profile: shoot(alpha, s_star, r_max)?, bisection_steps: steps })
}

/// Bisection for the topological threshold from the bracket [-20, 20].
pub fn find_topological_threshold(alpha: f64, r_max: f64) -> Result<Threshold> {
    find_topological_threshold_in(alpha, -20.0, 20.0, r_max)
}

/// Vortex of the planar problem.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlanarVortex {
    pub position: [f64; 2],
    pub multiplicity: u32,
}

/// Envelope |ψ(x)| ≤ c₁ e^{-c₂|x - centre|}.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    /// Radial window used for the fit.
    pub r_from: f64,
    pub r_to: f64,
}

/// Values and gradient of ψ and the smooth factor e^ψ at a tensor-product point set.
#[derive(Debug, Clone)]
pub struct PlanarSample {
    pub psi: Vec<f64>,
    pub psi_x: Vec<f64>,
    pub psi_y: Vec<f64>,
    pub exp_psi: Vec<f64>,
}

/// Planar solution ψ = χh + w on [-R, R]² with ψ = 0 on the edge.
///
/// h = Σ α ln(ρ²/(1+ρ²)) carries the vortex logarithms, χ is a radial plateau switching
/// from 1 to 0 between 0.75R and 0.95R, and w is a sine series.
#[derive(Debug, Clone)]
pub struct PlanarSolution {
    half_width: f64,
    n: usize,
    vortices: Vec<PlanarVortex>,
    /// Sine coefficients of w, row-major (x mode, y mode).
    coefficients: Vec<f64>,
    psi: Vec<f64>,
    decay_fit: DecayFit,
    newton_steps: usize,
    residual: f64,
}

struct Background {
    value: f64,
    grad: [f64; 2],
    exp_part: f64,
    source: f64,
}

const CUT_INNER: f64 = 0.75;
const CUT_OUTER: f64 = 0.95;

/// χh, ∇(χh), e^{χh} and the source g = -χΣ4α/(1+ρ²)² + 2∇χ·∇h + hΔχ at one point.
fn background_at(vortices: &[PlanarVortex], half_width: f64, x: f64, y: f64) -> Background {
    let rr = x.hypot(y);
    let (chi, dchi, d2chi) = radial_plateau(rr, CUT_INNER * half_width, CUT_OUTER * half_width);
    if chi == 0.0 {
        return Background { value: 0.0, grad: [0.0; 2], exp_part: 1.0, source: 0.0 };
    }
    let mut h = 0.0;
    let mut gh = [0.0; 2];
    let mut exp_part = 1.0;
    let mut lap_smooth = 0.0;
    for v in vortices {
        let a = v.multiplicity as f64;
        let (dx, dy) = (x - v.position[0], y - v.position[1]);
        let rho2 = dx * dx + dy * dy;
        let q = rho2 / (1.0 + rho2);
        exp_part *= q.powf(a * chi);
        if rho2 > 0.0 {
            h += a * q.ln();
            let c = 2.0 * a / (rho2 * (1.0 + rho2));
            gh[0] += c * dx;
            gh[1] += c * dy;
        } else {
            h = f64::NEG_INFINITY;
        }
        lap_smooth -= 4.0 * a / ((1.0 + rho2) * (1.0 + rho2));
    }
    let (mut gchi, mut lap_chi) = ([0.0; 2], 0.0);
    if dchi != 0.0 || d2chi != 0.0 {
        gchi = [dchi * x / rr, dchi * y / rr];
        lap_chi = d2chi + dchi / rr;
    }
    let mut source = chi * lap_smooth;
    if dchi != 0.0 || d2chi != 0.0 {
        source += 2.0 * (gchi[0] * gh[0] + gchi[1] * gh[1]) + h * lap_chi;
    }
    Background { value: chi * h, grad: [chi * gh[0] + h * gchi[0], chi * gh[1] + h * gchi[1]], exp_part, source }
}

struct SineOps {
    m: usize,
    neg_lap: Vec<f64>,
    shifted_inverse: Vec<f64>,
    scale: f64,
}

impl SineOps {
    fn new(m: usize, half_width: f64) -> Self {
        let mut neg_lap = vec![0.0; m * m];
        for j in 0..m {
            for k in 0..m {
                let kx = PI * (j + 1) as f64 / (2.0 * half_width);
                let ky = PI * (k + 1) as f64 / (2.0 * half_width);
                neg_lap[j * m + k] = kx * kx + ky * ky;
            }
        }
        let shifted_inverse = neg_lap.iter().map(|l| 1.0 / (l + 1.0)).collect();
        let c = 2.0 / (m + 1) as f64;
        Self { m, neg_lap, shifted_inverse, scale: c * c }
    }

    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let mut c = x.to_vec();
        dst1_2d(&mut c, self.m);
        c.iter_mut().for_each(|v| *v *= self.scale);
        c
    }

    fn synthesize(&self, mut c: Vec<f64>) -> Vec<f64> {
        dst1_2d(&mut c, self.m);
        c
    }

    fn apply_table(&self, x: &[f64], table: &[f64]) -> Vec<f64> {
        let mut c = self.coefficients(x);
        c.iter_mut().zip(table).for_each(|(v, t)| *v *= t);
        self.synthesize(c)
    }
}

impl PlanarSolution {
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Interior grid points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n + 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i + 1) as f64 * self.spacing()
    }

    pub fn vortices(&self) -> &[PlanarVortex] {
        &self.vortices
    }

    /// ψ at the interior grid, row-major with x as the slow index.
    pub fn psi_values(&self) -> &[f64] {
        &self.psi
    }

    pub fn decay_fit(&self) -> DecayFit {
        self.decay_fit
    }

    pub fn newton_steps(&self) -> usize {
        self.newton_steps
    }

    /// Discrete L² norm of the final residual.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    fn basis(&self, pts: &[f64], derivative: bool) -> DMatrix<f64> {
        let (m, r) = (self.n, self.half_width);
        DMatrix::from_fn(pts.len(), m, |i, j| {
            let x = pts[i];
            if x.abs() >= r {
                return 0.0;
            }
            let k = PI * (j + 1) as f64 / (2.0 * r);
            if derivative {
                k * (k * (x + r)).cos()
            } else {
                (k * (x + r)).sin()
            }
        })
    }

    /// Evaluates ψ, ∇ψ and e^ψ at all points (xs[i], ys[j]); outputs are row-major in i.
    /// Outside the box ψ is extended by zero.
    pub fn eval_grid(&self, xs: &[f64], ys: &[f64]) -> PlanarSample {
        let m = self.n;
        let c = DMatrix::from_row_slice(m, m, &self.coefficients);
        let (bx, by) = (self.basis(xs, false), self.basis(ys, false));
        let (dx, dy) = (self.basis(xs, true), self.basis(ys, true));
        let cy = &c * by.transpose();
        let cdy = &c * dy.transpose();
        let w = &bx * &cy;
        let wx = &dx * &cy;
        let wy = &bx * &cdy;
        let len = xs.len() * ys.len();
        let mut out = PlanarSample {
            psi: Vec::with_capacity(len),
            psi_x: Vec::with_capacity(len),
            psi_y: Vec::with_capacity(len),
            exp_psi: Vec::with_capacity(len),
        };
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                let b = background_at(&self.vortices, self.half_width, x, y);
                let smooth = w[(i, j)];
                out.psi.push(b.value + smooth);
                out.psi_x.push(b.grad[0] + wx[(i, j)]);
                out.psi_y.push(b.grad[1] + wy[(i, j)]);
                out.exp_psi.push(b.exp_part * smooth.exp());
            }
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_grid(&[x], &[y]).psi[0]
    }

    /// lim ψ(x) - 2α_i ln|x - p_i| as x → p_i.
    pub fn regular_at_vortex(&self, i: usize) -> f64 {
        let p = self.vortices[i].position;
        let m = self.n;
        let c = DMatrix::from_row_slice(m, m, &self.coefficients);
        let w = (self.basis(&[p[0]], false) * c * self.basis(&[p[1]], false).transpose())[(0, 0)];
        let others: f64 = self
            .vortices
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| {
                let rho2 = (p[0] - v.position[0]).powi(2) + (p[1] - v.position[1]).powi(2);
                v.multiplicity as f64 * (rho2 / (1.0 + rho2)).ln()
            })
            .sum();
        w + others
    }

    /// Writes ψ on the interior grid: `x,y,psi` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,y,psi")?;
        for i in 0..self.n {
            for j in 0..self.n {
                writeln!(f, "{:.10e},{:.10e},{:.17e}", self.coord(i), self.coord(j), self.psi[i * self.n + j])?;
            }
        }
        Ok(())
    }
}

/// Newton solve of Δψ + e^ψ(1 - e^ψ) = 4πΣα δ_p on [-R, R]² with ψ = 0 on the edge,
/// using `n` interior points per axis.
pub fn planar_multivortex_solve(vortices: &[PlanarVortex], half_width: f64, n: usize) -> Result<PlanarSolution> {
    if !(half_width >= 20.0) {
        return Err(Error::InvalidParameter("box half-width must be at least 20".into()));
    }
    if n < 31 {
        return Err(Error::InvalidParameter("need at least 31 interior points per axis".into()));
    }
    for v in vortices {
        if v.position.iter().any(|c| !(c.abs() <= 0.5 * half_width)) {
            return Err(Error::InvalidParameter("vortices must lie in [-R/2, R/2]²".into()));
        }
        if v.multiplicity == 0 {
            return Err(Error::InvalidParameter("multiplicities must be positive".into()));
        }
    }
    let m = n;
    let hx = 2.0 * half_width / (m + 1) as f64;
    let coord = |i: usize| -half_width + (i + 1) as f64 * hx;
    let mut exp_part = vec![0.0; m * m];
    let mut source = vec![0.0; m * m];
    let mut value = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let b = background_at(vortices, half_width, coord(i), coord(j));
            exp_part[i * m + j] = b.exp_part;
            source[i * m + j] = b.source;
            value[i * m + j] = b.value;
        }
    }
    let ops = SineOps::new(m, half_width);
    let residual = |w: &[f64]| -> Vec<f64> {
        let lap = ops.apply_table(w, &ops.neg_lap);
        (0..w.len())
            .map(|i| {
                let e = exp_part[i] * w[i].exp();
                -lap[i] + e * (1.0 - e) + source[i]
            })
            .collect()
    };
    let l2 = |r: &[f64]| norm(r) * hx;

    let mut w = vec![0.0; m * m];
    let mut r = residual(&w);
    let mut rn = l2(&r);
    let mut steps = 0;
    let tol = 1e-10;
    while rn > tol {
        if steps == 50 {
            return Err(Error::NotConverged { iterations: steps, increment: rn });
        }
        steps += 1;
        let potential: Vec<f64> = (0..w.len())
            .map(|i| {
                let e = exp_part[i] * w[i].exp();
                e * (1.0 - 2.0 * e)
            })
            .collect();
        let (delta, _) = solve_symmetric(
            &mut |x| {
                let mut y = ops.apply_table(x, &ops.neg_lap);
                y.iter_mut().zip(x).zip(&potential).for_each(|((y, x), p)| *y -= p * x);
                y
            },
            &mut |x| ops.apply_table(x, &ops.shifted_inverse),
            &r,
            1e-4f64.min(rn).max(1e-12),
            1000,
        )?;
        let mut t = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let rt = residual(&trial);
            let nt = l2(&rt);
            if nt.is_finite() && nt < (1.0 - 1e-4 * t) * rn {
                w = trial;
                r = rt;
                rn = nt;
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::NewtonDiverged { iteration: steps, residual: rn });
            }
            t *= 0.5;
        }
    }
    let coefficients = ops.coefficients(&w);
    let psi: Vec<f64> = value.iter().zip(&w).map(|(a, b)| a + b).collect();
    let decay_fit = fit_decay(vortices, half_width, m, &psi);
    Ok(PlanarSolution {
        half_width,
        n: m,
        vortices: vortices.to_vec(),
        coefficients,
        psi,
        decay_fit,
        newton_steps: steps,
        residual: rn,
    })
}

const MAX_HALVINGS: usize = 20;

/// Least-squares fit of log max|ψ| over radial shells about the vortex centroid.
fn fit_decay(vortices: &[PlanarVortex], half_width: f64, m: usize, psi: &[f64]) -> DecayFit {
    let total: f64 = vortices.iter().map(|v| v.multiplicity as f64).sum::<f64>().max(1.0);
    let mut centre = [0.0; 2];
    for v in vortices {
        centre[0] += v.multiplicity as f64 * v.position[0] / total;
        centre[1] += v.multiplicity as f64 * v.position[1] / total;
    }
    let spread =
        vortices.iter().map(|v| (v.position[0] - centre[0]).hypot(v.position[1] - centre[1])).fold(0.0, f64::max);
    let width = 0.5;
    let r_from = spread + 4.0;
    let r_cap = 0.6 * half_width;
    let bins = (r_cap / width).ceil() as usize + 1;
    let mut envelope = vec![0.0f64; bins];
    let hx = 2.0 * half_width / (m + 1) as f64;
    for i in 0..m {
        for j in 0..m {
            let x = -half_width + (i + 1) as f64 * hx - centre[0];
            let y = -half_width + (j + 1) as f64 * hx - centre[1];
            let b = (x.hypot(y) / width) as usize;
            if b < bins {
                envelope[b] = envelope[b].max(psi[i * m + j].abs());
            }
        }
    }
    let window: Vec<(f64, f64)> = envelope
        .iter()
        .enumerate()
        .map(|(b, &e)| ((b as f64 + 0.5) * width, e))
        .filter(|&(r, e)| r >= r_from && r <= r_cap && e.is_finite())
        .collect();
    let peak = window.iter().map(|p| p.1).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = window.into_iter().filter(|&(_, e)| e > 1e-11 * peak && e > 0.0).collect();
    if pts.len() < 3 {
        return DecayFit { c1: peak, c2: 0.0, r_from, r_to: r_from };
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(r, e)| (a + r, b + e.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (sxx, sxy) =
        pts.iter().fold((0.0, 0.0), |(a, b), &(r, e)| (a + (r - mx) * (r - mx), b + (r - mx) * (e.ln() - my)));
    let c2 = -sxy / sxx;
    let c1 = pts.iter().map(|&(r, e)| e * (c2 * r).exp()).fold(0.0, f64::max);
    DecayFit { c1, c2, r_from, r_to: pts.last().unwrap().0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_vacuum_stays_near_zero() {
        let p = shoot(0.0, -1e-8, 1.0).unwrap();
        assert!(p.samples.iter().all(|s| s.u <= 0.0 && s.u >= -1e-8 - 1e-6));
    }

    #[test]
    fn bubble_blows_down_with_finite_flux() {
        let p = shoot(0.0, -1.0, UNBOUNDED).unwrap();
        assert_eq!(p.tag, TerminalTag::BlewDown);
        assert!(p.flux_limit.is_finite() && p.flux_limit > 8.0 * PI);
    }

    #[test]
    fn series_start_matches_regular_part() {
        let p = shoot(1.0, 0.3, 1.0).unwrap();
        let v = p.regular_value_at(1e-5).unwrap();
        assert!((v - 0.3).abs() < 1e-8);
        let first = p.samples[0];
        assert!((first.r * first.du - 2.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(shoot(0.0, 0.5, 1.0).is_err());
        assert!(shoot(-1.0, -1.0, 1.0).is_err());
        assert!(shoot(0.0, -1.0, 0.0).is_err());
        assert!(find_topological_threshold(0.0, 30.0).is_err());
    }

    #[test]
    fn flux_limit_and_quadrature_agree() {
        let (a, b) = beta_pair(-3.0).unwrap();
        assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn same_tag_bracket_is_rejected() {
        let r = find_topological_threshold_in(1.0, 10.0, 20.0, 30.0);
        assert!(matches!(r, Err(Error::NoBracket { .. })));
    }
}
