//! Preconditioned MINRES for symmetric, possibly indefinite systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinresReport {
    pub iterations: usize,
    /// `‖b - A x‖₂ / ‖b‖₂` recomputed at exit.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` with `A` symmetric and `M` a symmetric positive definite preconditioner
/// (applied as `M^{-1}`). Restarts from the current iterate until the true relative residual
/// drops below `tol`.
pub fn minres(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, MinresReport)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, MinresReport { iterations: 0, residual: 0.0 }));
    }
    let mut total = 0;
    let mut scratch = vec![0.0; n];
    let mut residual = 1.0;
    for _restart in 0..8 {
        apply(&x, &mut scratch);
        let r0: Vec<f64> = b.iter().zip(&scratch).map(|(b, a)| b - a).collect();
        residual = norm(&r0) / bnorm;
        if residual < tol {
            return Ok((x, MinresReport { iterations: total, residual }));
        }
        total += cycle(apply, precond, &r0, &mut x, tol * bnorm / norm(&r0), max_iter - total.min(max_iter));
        if total >= max_iter {
            break;
        }
    }
    apply(&x, &mut scratch);
    let final_res = b.iter().zip(&scratch).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / bnorm;
    if final_res < tol {
        return Ok((x, MinresReport { iterations: total, residual: final_res }));
    }
    Err(Error::NoConvergence { what: "MINRES".into(), iters: total, residual: final_res.min(residual.max(final_res)) })
}

/// One Paige–Saunders MINRES run on `A dx = r`, accumulating into `x`. Returns iterations used.
fn cycle(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Fn(&[f64], &mut [f64]),
    r: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> usize {
    let n = r.len();
    let mut r1 = r.to_vec();
    let mut r2 = r.to_vec();
    let mut y = vec![0.0; n];
    precond(r, &mut y);
    let beta1 = dot(r, &y).sqrt();
    if !(beta1 > 0.0) {
        return 0;
    }
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        apply(&v, &mut av);
        if itn >= 2 {
            let c = beta / oldb;
            for (a, r) in av.iter_mut().zip(&r1) {
                *a -= c * r;
            }
        }
        let alfa = dot(&v, &av);
        let c = alfa / beta;
        for (a, r) in av.iter_mut().zip(&r2) {
            *a -= c * r;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&av);
        precond(&r2, &mut y);
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
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for k in 0..n {
            w[k] = (v[k] - oldeps * w1[k] - delta * w2[k]) * denom;
            x[k] += phi * w[k];
        }
        if phibar / beta1 < 0.01 * rtol || beta == 0.0 {
            return itn;
        }
    }
    max_iter
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_indefinite_tridiagonal_system() {
        let n = 200;
        // symmetric, indefinite: diag shifted into the spectrum
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut s = (2.0 - 1.3) * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                y[i] = s;
            }
        };
        let ident = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let b: Vec<f64> = (0..n).map(|i| ((i * 31) % 7) as f64 - 3.0).collect();
        let (x, rep) = minres(&apply, &ident, &b, 1e-10, 5000).unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-9 * norm(&b), "{err} {rep:?}");
    }

    #[test]
    fn diagonal_preconditioner_speeds_up() {
        let n = 300;
        let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = d[i] * x[i];
            }
        };
        let pre = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = x[i] / d[i];
            }
        };
        let b = vec![1.0; n];
        let (_, rep) = minres(&apply, &pre, &b, 1e-12, 100).unwrap();
        assert!(rep.iterations <= 3);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let apply = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let (x, rep) = minres(&apply, &apply, &[0.0; 4], 1e-10, 10).unwrap();
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let n = 400;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = (i as f64 + 1.0) * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 };
            }
        };
        let ident = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let b = vec![1.0; n];
        assert!(matches!(minres(&apply, &ident, &b, 1e-14, 3), Err(Error::NoConvergence { .. })));
    }
}
