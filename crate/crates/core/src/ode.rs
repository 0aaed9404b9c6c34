//! Adaptive Dormand–Prince 5(4) stepping.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Step-size controller state for one trajectory.
pub(crate) struct Stepper {
    pub rtol: f64,
    pub atol: f64,
    pub h: f64,
    pub h_max: f64,
    /// Components excluded from the error norm (e.g. running quadratures).
    pub error_components: usize,
}

impl Stepper {
    /// Takes one accepted step from (t, y), never past `t_end`.
    /// `report` maps a time to a radius for the failure message.
    pub(crate) fn step(
        &mut self,
        f: &dyn Fn(f64, &[f64]) -> Vec<f64>,
        t: f64,
        y: &[f64],
        t_end: f64,
        h_cap: f64,
        report: impl Fn(f64) -> f64,
    ) -> Result<(f64, Vec<f64>)> {
        let dim = y.len();
        loop {
            let h = self.h.min(self.h_max).min(h_cap).min(t_end - t);
            if !(h > 1e-14 * t.abs().max(1.0)) {
                return Err(Error::StepFailure { r: report(t) });
            }
            let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
            for s in 0..7 {
                let mut ys = y.to_vec();
                for (j, kj) in k.iter().enumerate() {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..dim {
                            ys[i] += h * a * kj[i];
                        }
                    }
                }
                k.push(f(t + C[s] * h, &ys));
            }
            let mut y5 = y.to_vec();
            let mut err = 0.0f64;
            for i in 0..dim {
                let mut d5 = 0.0;
                let mut d4 = 0.0;
                for s in 0..7 {
                    d5 += B5[s] * k[s][i];
                    d4 += B4[s] * k[s][i];
                }
                y5[i] += h * d5;
                if i < self.error_components {
                    let scale = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
                    err = err.max((h * (d5 - d4)).abs() / scale);
                }
            }
            if !err.is_finite() || y5.iter().any(|v| !v.is_finite()) {
                self.h = 0.25 * h;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.h = h * factor;
                return Ok((t + h, y5));
            }
            self.h = h * factor.min(1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_harmonic_oscillator() {
        let f = |_t: f64, y: &[f64]| vec![y[1], -y[0]];
        let mut s = Stepper { rtol: 1e-11, atol: 1e-13, h: 1e-3, h_max: 1.0, error_components: 2 };
        let (mut t, mut y) = (0.0, vec![0.0, 1.0]);
        while t < 10.0 {
            (t, y) = s.step(&f, t, &y, 10.0, f64::INFINITY, |t| t).unwrap();
        }
        assert!((y[0] - 10f64.sin()).abs() < 1e-9);
        assert!((y[1] - 10f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn exponential_growth_relative_accuracy() {
        let f = |_t: f64, y: &[f64]| vec![y[0]];
        let mut s = Stepper { rtol: 1e-11, atol: 1e-13, h: 1e-3, h_max: 1.0, error_components: 1 };
        let (mut t, mut y) = (0.0, vec![1.0]);
        while t < 20.0 {
            (t, y) = s.step(&f, t, &y, 20.0, f64::INFINITY, |t| t).unwrap();
        }
        assert!((y[0] / 20f64.exp() - 1.0).abs() < 1e-9);
    }
}
