//! Periodic scalar fields on the unit torus with spectral operators.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

const TWO_PI: f64 = 2.0 * PI;

/// Uniform n×n sampling of the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of samples, n².
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of grid line `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// Signed wave number of FFT index `i`, in [-n/2, n/2).
    pub fn wavenumber(&self, i: usize) -> i64 {
        let half = self.n / 2;
        if i < half {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Whether cells are fine enough to put eight of them across a core of size `eps`.
    pub fn resolves(&self, eps: f64) -> bool {
        self.h() <= eps / 8.0 + 1e-15
    }

    fn k_squared_table(&self) -> Vec<f64> {
        let n = self.n;
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            let kx = self.wavenumber(i) as f64;
            for j in 0..n {
                let ky = self.wavenumber(j) as f64;
                t[i * n + j] = 4.0 * PI * PI * (kx * kx + ky * ky);
            }
        }
        t
    }

    /// Table of `symbol(4π²|k|²)` over all wave vectors, row-major.
    pub(crate) fn symbol_table(&self, symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        self.k_squared_table().into_iter().map(symbol).collect()
    }
}

/// Real samples on a [`Grid`]; entry (i, j) is the value at (i·h, j·h).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            let x = grid.coord(i);
            for j in 0..n {
                values.push(f(x, grid.coord(j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n() + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.same_grid(other)?;
        Ok(Field { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid.n(), other.grid.n()));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L² norm, (h² Σ f²)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    /// Discrete inner product h² Σ f g.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() / self.values.len() as f64)
    }

    pub fn to_spectral(&self) -> SpectralField {
        let n = self.grid.n();
        let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward_2d(&mut data, n);
        let scale = 1.0 / (n * n) as f64;
        data.iter_mut().for_each(|z| *z *= scale);
        SpectralField { grid: self.grid, coefficients: data }
    }
}

/// Fourier coefficients `c_k` with `f(x) = Σ c_k e^{2πi k·x}`; `c_0` is the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    /// Coefficients in FFT order; index (i, j) holds wave vector
    /// (grid.wavenumber(i), grid.wavenumber(j)).
    pub fn from_coefficients(grid: Grid, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.len() {
            return Err(Error::InvalidParameter("coefficient count does not match grid".into()));
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Coefficient of wave vector (kx, ky), both in [-n/2, n/2).
    pub fn coefficient(&self, kx: i64, ky: i64) -> Complex64 {
        let n = self.grid.n() as i64;
        let i = kx.rem_euclid(n) as usize;
        let j = ky.rem_euclid(n) as usize;
        self.coefficients[i * self.grid.n() + j]
    }

    /// Samples of the real part of the trigonometric sum.
    pub fn to_field(&self) -> Field {
        let n = self.grid.n();
        let mut data = self.coefficients.clone();
        fft::inverse_2d(&mut data, n);
        Field::from_raw(self.grid, data.iter().map(|z| z.re).collect())
    }

    fn axis_basis(&self, x: f64, derivative: bool) -> Vec<Complex64> {
        let n = self.grid.n();
        (0..n)
            .map(|i| {
                if i == n / 2 {
                    // Nyquist mode read as cos(π n x) so the interpolant is real.
                    let a = PI * n as f64 * x;
                    if derivative {
                        Complex64::new(-PI * n as f64 * a.sin(), 0.0)
                    } else {
                        Complex64::new(a.cos(), 0.0)
                    }
                } else {
                    let k = self.grid.wavenumber(i) as f64;
                    let e = Complex64::from_polar(1.0, TWO_PI * k * x);
                    if derivative {
                        e * Complex64::new(0.0, TWO_PI * k)
                    } else {
                        e
                    }
                }
            })
            .collect()
    }

    fn contract(&self, bx: &[Complex64], by: &[Complex64]) -> f64 {
        let n = self.grid.n();
        let mut total = Complex64::new(0.0, 0.0);
        for (row, &x) in self.coefficients.chunks_exact(n).zip(bx) {
            let s: Complex64 = row.iter().zip(by).map(|(a, b)| a * b).sum();
            total += s * x;
        }
        total.re
    }

    /// Trigonometric interpolant at an arbitrary point.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.contract(&self.axis_basis(x, false), &self.axis_basis(y, false))
    }

    /// Gradient of the trigonometric interpolant at an arbitrary point.
    pub fn eval_gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let (bx, by) = (self.axis_basis(x, false), self.axis_basis(y, false));
        let (dx, dy) = (self.axis_basis(x, true), self.axis_basis(y, true));
        [self.contract(&dx, &by), self.contract(&bx, &dy)]
    }
}

/// Multiplies the spectrum of `values` by a real table and returns the real result.
pub(crate) fn apply_table(values: &[f64], table: &[f64], n: usize) -> Vec<f64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::forward_2d(&mut data, n);
    let scale = 1.0 / (n * n) as f64;
    for (z, t) in data.iter_mut().zip(table) {
        *z *= t * scale;
    }
    fft::inverse_2d(&mut data, n);
    data.into_iter().map(|z| z.re).collect()
}

/// Spectral Laplacian, symbol -4π²|k|².
pub fn laplacian(f: &Field) -> Field {
    let table = f.grid.symbol_table(|k2| -k2);
    Field::from_raw(f.grid, apply_table(&f.values, &table, f.grid.n()))
}

/// Solves (Δ - κ)v = rhs spectrally. For κ = 0 the mean of v is pinned to zero.
pub fn solve_helmholtz(rhs: &Field, kappa: f64) -> Result<Field> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        let mean = rhs.mean();
        if mean.abs() > 1e-10 {
            return Err(Error::MeanNotZero { mean });
        }
    }
    Ok(solve_helmholtz_unchecked(rhs, kappa))
}

/// (Δ - κ)⁻¹ without the solvability check; for κ = 0 the mean of rhs is discarded.
pub(crate) fn solve_helmholtz_unchecked(rhs: &Field, kappa: f64) -> Field {
    let table = rhs.grid.symbol_table(|k2| {
        let d = -k2 - kappa;
        if d == 0.0 {
            0.0
        } else {
            1.0 / d
        }
    });
    Field::from_raw(rhs.grid, apply_table(&rhs.values, &table, rhs.grid.n()))
}

/// h² Σ f.
pub fn integrate(f: &Field) -> f64 {
    f.mean()
}

/// Spectral gradient (∂₁f, ∂₂f); the Nyquist mode is dropped.
pub fn gradient(f: &Field) -> (Field, Field) {
    let grid = f.grid;
    let n = grid.n();
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::forward_2d(&mut data, n);
    let scale = 1.0 / (n * n) as f64;
    for i in 0..n {
        let kx = if i == n / 2 { 0.0 } else { grid.wavenumber(i) as f64 };
        for j in 0..n {
            let ky = if j == n / 2 { 0.0 } else { grid.wavenumber(j) as f64 };
            let z = data[i * n + j] * scale;
            // Pack ∂₁f + i ∂₂f into one inverse transform.
            let dx = z * Complex64::new(0.0, TWO_PI * kx);
            let dy = z * Complex64::new(0.0, TWO_PI * ky);
            data[i * n + j] = dx + Complex64::new(0.0, 1.0) * dy;
        }
    }
    fft::inverse_2d(&mut data, n);
    let gx = data.iter().map(|z| z.re).collect();
    let gy = data.iter().map(|z| z.im).collect();
    (Field::from_raw(grid, gx), Field::from_raw(grid, gy))
}

/// Metadata sidecar of a field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub n: usize,
    pub label: String,
    pub epsilon: f64,
}

fn dump_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `<stem>.json` and `<stem>.bin` (n×n little-endian f64, row-major).
pub fn write_dump(field: &Field, stem: &Path, label: &str, epsilon: f64) -> Result<()> {
    let (meta, raw) = dump_paths(stem);
    let header = DumpHeader { n: field.grid.n(), label: label.to_string(), epsilon };
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(meta, text + "\n")?;
    let mut bytes = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(raw)?.write_all(&bytes)?;
    Ok(())
}

/// Reads a dump written by [`write_dump`].
pub fn read_dump(stem: &Path) -> Result<(Field, DumpHeader)> {
    let (meta, raw) = dump_paths(stem);
    let header: DumpHeader =
        serde_json::from_str(&fs::read_to_string(meta)?).map_err(|e| Error::Format(e.to_string()))?;
    let grid = Grid::new(header.n)?;
    let mut bytes = Vec::new();
    fs::File::open(raw)?.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Format(format!("expected {} bytes, found {}", grid.len() * 8, bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok((Field::from_values(grid, values)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn grid_rejects_odd_and_small() {
        assert!(Grid::new(15).is_err());
        assert!(Grid::new(17).is_err());
        assert!(Grid::new(8).is_err());
        assert!(Grid::new(16).is_ok());
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let f = Field::constant(grid(32), 2.5);
        assert!(laplacian(&f).sup_norm() < 1e-12);
    }

    #[test]
    fn laplacian_of_cosine() {
        let g = grid(64);
        let f = Field::from_fn(g, |x, _| (TWO_PI * x).cos());
        let expect = f.map(|v| -4.0 * PI * PI * v);
        let err = laplacian(&f).zip_map(&expect, |a, b| a - b).unwrap().sup_norm();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn helmholtz_examples() {
        let g = grid(32);
        let zero = solve_helmholtz(&Field::zeros(g), 1.0).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        let rhs = Field::from_fn(g, |x, _| (TWO_PI * x).cos());
        let v = solve_helmholtz(&rhs, 0.0).unwrap();
        let expect = rhs.map(|c| -c / (4.0 * PI * PI));
        assert!(v.zip_map(&expect, |a, b| a - b).unwrap().sup_norm() < 1e-14);
        let bad = Field::constant(g, 1.0);
        assert!(matches!(solve_helmholtz(&bad, 0.0), Err(Error::MeanNotZero { .. })));
        assert!(solve_helmholtz(&bad, -1.0).is_err());
    }

    #[test]
    fn integrate_examples() {
        let g = grid(64);
        assert!((integrate(&Field::constant(g, 3.0)) - 3.0).abs() < 1e-15);
        assert!(integrate(&Field::from_fn(g, |x, _| (TWO_PI * x).cos())).abs() < 1e-14);
    }

    #[test]
    fn spectral_point_evaluation_interpolates() {
        let g = grid(16);
        let f = Field::from_fn(g, |x, y| (TWO_PI * x).sin() * (TWO_PI * 2.0 * y).cos() + 0.3);
        let s = f.to_spectral();
        let (x, y) = (0.123, 0.777);
        let exact = (TWO_PI * x).sin() * (TWO_PI * 2.0 * y).cos() + 0.3;
        assert!((s.eval(x, y) - exact).abs() < 1e-13);
        let gr = s.eval_gradient(x, y);
        let gx = TWO_PI * (TWO_PI * x).cos() * (TWO_PI * 2.0 * y).cos();
        let gy = -(TWO_PI * x).sin() * 2.0 * TWO_PI * (TWO_PI * 2.0 * y).sin();
        assert!((gr[0] - gx).abs() < 1e-12 && (gr[1] - gy).abs() < 1e-12);
        assert!((s.eval(g.coord(3), g.coord(5)) - f.at(3, 5)).abs() < 1e-13);
    }

    #[test]
    fn gradient_of_trig_product() {
        let g = grid(32);
        let f = Field::from_fn(g, |x, y| (TWO_PI * x).sin() * (TWO_PI * 3.0 * y).sin());
        let (gx, gy) = gradient(&f);
        let ex = Field::from_fn(g, |x, y| TWO_PI * (TWO_PI * x).cos() * (TWO_PI * 3.0 * y).sin());
        let ey = Field::from_fn(g, |x, y| 3.0 * TWO_PI * (TWO_PI * x).sin() * (TWO_PI * 3.0 * y).cos());
        assert!(gx.zip_map(&ex, |a, b| a - b).unwrap().sup_norm() < 1e-11);
        assert!(gy.zip_map(&ey, |a, b| a - b).unwrap().sup_norm() < 1e-11);
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid(16);
        let f = Field::from_fn(g, |x, y| x * 3.0 - y * y);
        let stem = dir.path().join("u");
        write_dump(&f, &stem, "u", 0.02).unwrap();
        let (back, header) = read_dump(&stem).unwrap();
        assert_eq!(back, f);
        assert_eq!(header, DumpHeader { n: 16, label: "u".into(), epsilon: 0.02 });
        fs::write(stem.with_extension("bin"), [0u8; 10]).unwrap();
        assert!(matches!(read_dump(&stem), Err(Error::Format(_))));
    }

    #[test]
    fn resolution_rule() {
        let g = grid(512);
        assert!(g.resolves(0.02));
        assert!(!g.resolves(0.01));
    }
}
