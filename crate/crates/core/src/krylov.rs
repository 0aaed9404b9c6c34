//! Preconditioned Krylov solvers for symmetric operators on flat vectors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    Cg,
    Minres,
}

/// Outcome of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub method: KrylovMethod,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

enum CgStop {
    Converged(usize),
    Indefinite,
    Exhausted,
}

fn pcg(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> CgStop {
    let bnorm = norm(b);
    x.iter_mut().for_each(|v| *v = 0.0);
    if bnorm == 0.0 {
        return CgStop::Converged(0);
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let q = apply(&p);
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !(rz > 0.0) {
            return CgStop::Indefinite;
        }
        let alpha = rz / pq;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm(&r) <= rtol * bnorm {
            return CgStop::Converged(it);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgStop::Exhausted
}

/// Preconditioned MINRES; the preconditioner must be symmetric positive definite.
fn pminres(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> usize {
    let len = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();
    if beta1 == 0.0 {
        return 0;
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; len];
    let mut w2 = vec![0.0; len];
    for it in 1..=max_iter {
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|t| t * s).collect();
        y = apply(&v);
        if it >= 2 {
            let f = beta / oldb;
            for i in 0..len {
                y[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for i in 0..len {
            y[i] -= f * r2[i];
        }
        r1 = std::mem::replace(&mut r2, y);
        y = precond(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..len {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= rtol * beta1 || beta == 0.0 {
            return it;
        }
    }
    max_iter
}

/// Solves A x = b for symmetric A: preconditioned CG first, MINRES when CG meets
/// non-positive curvature or runs out of iterations.
pub(crate) fn solve_symmetric(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovStats)> {
    let bnorm = norm(b);
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok((x, KrylovStats { iterations: 0, relative_residual: 0.0, method: KrylovMethod::Cg }));
    }
    let true_residual = |apply: &mut dyn FnMut(&[f64]) -> Vec<f64>, x: &[f64]| {
        let ax = apply(x);
        norm(&ax.iter().zip(b).map(|(a, c)| c - a).collect::<Vec<_>>()) / bnorm
    };
    if let CgStop::Converged(it) = pcg(apply, precond, b, &mut x, rtol, max_iter) {
        let rel = true_residual(apply, &x);
        return Ok((x, KrylovStats { iterations: it, relative_residual: rel, method: KrylovMethod::Cg }));
    }
    let it = pminres(apply, precond, b, &mut x, rtol, 2 * max_iter);
    let rel = true_residual(apply, &x);
    if rel <= 10.0 * rtol {
        Ok((x, KrylovStats { iterations: it, relative_residual: rel, method: KrylovMethod::Minres }))
    } else {
        Err(Error::LinearSolveStalled { relative_residual: rel, iterations: it })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(diag: Vec<f64>) -> impl FnMut(&[f64]) -> Vec<f64> {
        move |x: &[f64]| {
            let n = x.len();
            (0..n)
                .map(|i| {
                    let mut s = diag[i] * x[i];
                    if i > 0 {
                        s -= x[i - 1];
                    }
                    if i + 1 < n {
                        s -= x[i + 1];
                    }
                    s
                })
                .collect()
        }
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let diag = vec![3.0; n];
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut a = tridiag(diag.clone());
        let mut m = |r: &[f64]| r.iter().map(|v| v / 3.0).collect::<Vec<_>>();
        let (x, stats) = solve_symmetric(&mut a, &mut m, &b, 1e-12, 200).unwrap();
        assert_eq!(stats.method, KrylovMethod::Cg);
        let mut a = tridiag(diag);
        let ax = a(&x);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn minres_handles_indefinite_system() {
        let n = 60;
        let diag: Vec<f64> = (0..n).map(|i| if i < 5 { -3.5 } else { 3.5 }).collect();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let mut a = tridiag(diag.clone());
        let mut m = |r: &[f64]| r.iter().map(|v| v / 3.5).collect::<Vec<_>>();
        let (x, stats) = solve_symmetric(&mut a, &mut m, &b, 1e-11, 400).unwrap();
        assert_eq!(stats.method, KrylovMethod::Minres);
        let mut a = tridiag(diag);
        let ax = a(&x);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn singular_inconsistent_system_stalls() {
        let mut a = |x: &[f64]| vec![x[0], 0.0];
        let mut m = |r: &[f64]| r.to_vec();
        let r = solve_symmetric(&mut a, &mut m, &[1.0, 1.0], 1e-10, 20);
        assert!(matches!(r, Err(Error::LinearSolveStalled { .. })));
    }
}
