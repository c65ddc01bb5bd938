//! Krylov solvers in a diagonal-weighted inner product.
//!
//! Both solvers work with `⟨x, y⟩_w = Σ w_i x_i y_i`. The operator must be
//! self-adjoint in that inner product; the diagonal preconditioner commutes
//! with the weights and so keeps that property. Residuals are measured in
//! the same weighted norm.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// `‖b - A x‖_w / ‖b‖_w` at exit.
    pub relative_residual: f64,
}

pub(crate) fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

pub(crate) fn wnorm(w: &[f64], a: &[f64]) -> f64 {
    wdot(w, a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

fn true_residual(op: &impl Fn(&[f64], &mut [f64]), b: &[f64], x: &[f64], r: &mut [f64]) {
    op(x, r);
    for (r, b) in r.iter_mut().zip(b) {
        *r = b - *r;
    }
}

/// Preconditioned conjugate gradients for a `w`-self-adjoint positive
/// definite operator. `x` holds the initial guess and receives the solution.
pub fn conjugate_gradient(
    op: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    weights: &[f64],
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = wnorm(weights, b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut it = 0;
    // The recursive residual can drift below the true one; restart from the
    // true residual a few times before giving up.
    for _restart in 0..6 {
        true_residual(&op, b, x, &mut r);
        let mut rel = wnorm(weights, &r) / bnorm;
        if rel <= tol || it >= max_iter {
            break;
        }
        for ((z, r), d) in z.iter_mut().zip(&r).zip(inv_diag) {
            *z = r * d;
        }
        p.copy_from_slice(&z);
        let mut rz = wdot(weights, &r, &z);
        while rel > tol && it < max_iter {
            op(&p, &mut ap);
            let pap = wdot(weights, &p, &ap);
            if !(pap > 0.0) {
                return Err(Error::NonConvergence {
                    method: "conjugate gradient (operator not positive definite)",
                    iterations: it,
                    residual: rel,
                });
            }
            let alpha = rz / pap;
            axpy(alpha, &p, x);
            axpy(-alpha, &ap, &mut r);
            it += 1;
            rel = wnorm(weights, &r) / bnorm;
            for ((z, r), d) in z.iter_mut().zip(&r).zip(inv_diag) {
                *z = r * d;
            }
            let rz_new = wdot(weights, &r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (p, z) in p.iter_mut().zip(&z) {
                *p = z + beta * *p;
            }
        }
    }
    true_residual(&op, b, x, &mut r);
    let rel = wnorm(weights, &r) / bnorm;
    if rel > tol {
        return Err(Error::NonConvergence {
            method: "conjugate gradient",
            iterations: it,
            residual: rel,
        });
    }
    Ok(KrylovStats {
        iterations: it,
        relative_residual: rel,
    })
}

/// Preconditioned MINRES for a `w`-self-adjoint, possibly indefinite
/// operator. The preconditioner `inv_diag` must be positive.
pub fn minres(
    op: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    weights: &[f64],
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = wnorm(weights, b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut total = 0;
    let mut r = vec![0.0; n];
    // The short recurrences lose accuracy on hard problems; restart from the
    // current iterate until the true residual meets the tolerance.
    for _restart in 0..8 {
        true_residual(&op, b, x, &mut r);
        let rel = wnorm(weights, &r) / bnorm;
        if rel <= tol {
            return Ok(KrylovStats {
                iterations: total,
                relative_residual: rel,
            });
        }
        if total >= max_iter {
            break;
        }
        let budget = max_iter - total;
        total += minres_cycle(&op, &r, x, weights, inv_diag, tol * bnorm, budget);
    }
    true_residual(&op, b, x, &mut r);
    let rel = wnorm(weights, &r) / bnorm;
    if rel <= tol {
        Ok(KrylovStats {
            iterations: total,
            relative_residual: rel,
        })
    } else {
        Err(Error::NonConvergence {
            method: "minres",
            iterations: total,
            residual: rel,
        })
    }
}

/// One MINRES run on `A dx = r0`, accumulating into `x`. Returns the number
/// of iterations spent.
fn minres_cycle(
    op: &impl Fn(&[f64], &mut [f64]),
    r0: &[f64],
    x: &mut [f64],
    weights: &[f64],
    inv_diag: &[f64],
    abs_tol: f64,
    max_iter: usize,
) -> usize {
    let n = r0.len();
    let precond = |v: &[f64], out: &mut [f64]| {
        for ((o, v), d) in out.iter_mut().zip(v).zip(inv_diag) {
            *o = v * d;
        }
    };
    let mut r1 = r0.to_vec();
    let mut r2 = r0.to_vec();
    let mut y = vec![0.0; n];
    precond(&r1, &mut y);
    let beta1 = wdot(weights, &r1, &y).sqrt();
    if beta1 == 0.0 {
        return 0;
    }
    // Convert the absolute weighted tolerance into the preconditioned norm
    // estimate tracked by `phibar`, with a margin; the caller re-checks.
    let unprec = wnorm(weights, r0);
    let target = 0.5 * abs_tol * beta1 / unprec;

    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let s = 1.0 / beta;
        for (v, y) in v.iter_mut().zip(&y) {
            *v = s * y;
        }
        op(&v, &mut y);
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = wdot(weights, &v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond(&r2, &mut y);
        oldb = beta;
        beta = wdot(weights, &r2, &y).max(0.0).sqrt();

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
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= target || beta == 0.0 {
            break;
        }
    }
    it
}

#[cfg(test)]
mod tests {
    use super::*;

    // 1-D periodic Laplacian plus a diagonal shift, self-adjoint in the
    // weighted product when divided by w.
    fn operator(w: Vec<f64>, shift: f64) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], out: &mut [f64]| {
            let n = x.len();
            for i in 0..n {
                let l = x[(i + n - 1) % n] - 2.0 * x[i] + x[(i + 1) % n];
                out[i] = l / w[i] + shift * x[i];
            }
        }
    }

    fn weights(n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 + 0.5 * (i as f64 * 0.3).sin()).collect()
    }

    #[test]
    fn cg_solves_definite_system() {
        let n = 64;
        let w = weights(n);
        // Negated so the operator is positive definite.
        let a = operator(w.clone(), -0.7);
        let neg = |x: &[f64], o: &mut [f64]| {
            a(x, o);
            o.iter_mut().for_each(|v| *v = -*v);
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let inv: Vec<f64> = w.iter().map(|w| 1.0 / (2.0 / w + 0.7)).collect();
        let st = conjugate_gradient(neg, &b, &mut x, &w, &inv, 1e-12, 1000).unwrap();
        assert!(st.relative_residual <= 1e-12);
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let n = 64;
        let w = weights(n);
        let a = operator(w.clone(), 0.9);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.2).sin()).collect();
        let mut x = vec![0.0; n];
        let inv: Vec<f64> = w
            .iter()
            .map(|w| 1.0 / (2.0 / w - 0.9).abs().max(0.1))
            .collect();
        let st = minres(&a, &b, &mut x, &w, &inv, 1e-11, 5000).unwrap();
        let mut r = vec![0.0; n];
        a(&x, &mut r);
        let res: f64 = r
            .iter()
            .zip(&b)
            .map(|(r, b)| (r - b).abs())
            .fold(0.0, f64::max);
        assert!(res < 1e-8, "res {res} after {}", st.iterations);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let w = vec![1.0; 8];
        let mut x = vec![1.0; 8];
        let st = minres(
            operator(w.clone(), 1.0),
            &[0.0; 8],
            &mut x,
            &w,
            &[1.0; 8],
            1e-10,
            10,
        )
        .unwrap();
        assert_eq!(st.iterations, 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }
}
