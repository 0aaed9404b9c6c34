//! Cached FFT plans, square 2-D transforms and the type-I sine transform.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(len: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    guard
        .entry(len)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans { forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) })
        })
        .clone()
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn run_2d(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(data, &mut scratch);
    transpose(data, n);
    fft.process_with_scratch(data, &mut scratch);
    transpose(data, n);
}

/// Unnormalized forward 2-D DFT of a row-major n×n array.
pub(crate) fn forward_2d(data: &mut [Complex64], n: usize) {
    run_2d(data, n, false);
}

/// Unnormalized inverse 2-D DFT (sum over modes with positive exponent).
pub(crate) fn inverse_2d(data: &mut [Complex64], n: usize) {
    run_2d(data, n, true);
}

/// Type-I sine transform applied to every length-`m` row of `rows`:
/// `X_k = Σ_j x_j sin(π j k / (m+1))`, j, k = 1..m. Two rows share one complex FFT.
pub(crate) fn dst1_rows(rows: &mut [f64], m: usize) {
    let count = rows.len() / m;
    let len = 2 * (m + 1);
    let p = plans(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); p.forward.get_inplace_scratch_len()];
    let mut r = 0;
    while r < count {
        let pair = r + 1 < count;
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for j in 0..m {
            let a = rows[r * m + j];
            let b = if pair { rows[(r + 1) * m + j] } else { 0.0 };
            buf[j + 1] = Complex64::new(a, b);
            buf[len - 1 - j] = Complex64::new(-a, -b);
        }
        p.forward.process_with_scratch(&mut buf, &mut scratch);
        // FFT(y1 + i y2)_k = -2i X1_k + 2 X2_k
        for k in 0..m {
            let z = buf[k + 1];
            rows[r * m + k] = -0.5 * z.im;
            if pair {
                rows[(r + 1) * m + k] = 0.5 * z.re;
            }
        }
        r += if pair { 2 } else { 1 };
    }
}

/// Type-I sine transform along both axes of a row-major m×m array.
pub(crate) fn dst1_2d(data: &mut [f64], m: usize) {
    dst1_rows(data, m);
    transpose_real(data, m);
    dst1_rows(data, m);
    transpose_real(data, m);
}

fn transpose_real(data: &mut [f64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}
