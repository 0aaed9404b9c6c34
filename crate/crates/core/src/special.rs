//! Special functions: exponential integrals, modified Bessel functions and a smooth step.

use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Entire part of the exponential integral, Ein(z) = ∫₀ᶻ (1 - e^{-t})/t dt.
pub fn ein(z: f64) -> f64 {
    if z <= 5.0 {
        let mut term = z;
        let mut sum = z;
        let mut j = 1.0;
        loop {
            term *= -z / (j + 1.0);
            j += 1.0;
            let add = term / j;
            sum += add;
            if add.abs() <= 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        e1(z) + z.ln() + EULER_GAMMA
    }
}

/// Derivative of [`ein`], (1 - e^{-z})/z.
pub fn ein_prime(z: f64) -> f64 {
    if z < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// Exponential integral E₁(z) for z > 0.
pub fn e1(z: f64) -> f64 {
    assert!(z > 0.0, "E1 needs a positive argument");
    if z <= 1.0 {
        return -EULER_GAMMA - z.ln() + ein(z);
    }
    if z > 740.0 {
        return 0.0;
    }
    // Continued fraction, modified Lentz.
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// e^x K_ν(x) for x > 0 and ν ∈ {0, 1}, by the trapezoid rule on ∫₀^∞ e^{-x(cosh t - 1)} cosh(νt) dt.
pub fn bessel_k_scaled(nu: u32, x: f64) -> f64 {
    assert!(x > 0.0, "K needs a positive argument");
    // The integrand has width about 1/√x near t = 0.
    let step = 0.1f64.min(0.5 / x.sqrt());
    let t_max = (1.0 + 60.0 / x).acosh() + 1.0;
    let count = (t_max / step).ceil() as usize;
    let f = |t: f64| (-x * (t.cosh() - 1.0)).exp() * (nu as f64 * t).cosh();
    let mut sum = 0.5 * f(0.0);
    for k in 1..=count {
        sum += f(k as f64 * step);
    }
    sum * step
}

/// e^{-x} I_ν(x) for x ≥ 0 and ν ∈ {0, 1}, by the trapezoid rule on the periodic integral.
pub fn bessel_i_scaled(nu: u32, x: f64) -> f64 {
    let m = (2.0 * x + 60.0).ceil() as usize;
    let step = PI / m as f64;
    let f = |th: f64| (x * (th.cos() - 1.0)).exp() * (nu as f64 * th).cos();
    let mut sum = 0.5 * (f(0.0) + f(PI));
    for k in 1..m {
        sum += f(k as f64 * step);
    }
    sum * step / PI
}

fn phi(t: f64) -> (f64, f64, f64) {
    if t < 1e-3 {
        return (0.0, 0.0, 0.0);
    }
    let p = (-1.0 / t).exp();
    let t2 = t * t;
    (p, p / t2, p * (1.0 / (t2 * t2) - 2.0 / (t2 * t)))
}

/// Smooth step equal to 1 for t ≤ 0 and 0 for t ≥ 1, with its first two derivatives.
pub fn smooth_step(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let (a, a1, a2) = phi(t);
    let (b, pb1, pb2) = phi(1.0 - t);
    let (b1, b2) = (-pb1, pb2);
    let d = a + b;
    let d1 = a1 + b1;
    let num = b1 * a - b * a1;
    let num1 = b2 * a - b * a2;
    let s = b / d;
    let s1 = num / (d * d);
    let s2 = num1 / (d * d) - 2.0 * num * d1 / (d * d * d);
    (s, s1, s2)
}

/// Radial plateau: 1 on r ≤ inner, 0 on r ≥ outer, with d/dr and d²/dr².
pub fn radial_plateau(r: f64, inner: f64, outer: f64) -> (f64, f64, f64) {
    let w = outer - inner;
    let (s, s1, s2) = smooth_step((r - inner) / w);
    (s, s1 / w, s2 / (w * w))
}
