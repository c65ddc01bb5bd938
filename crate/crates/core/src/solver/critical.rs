use serde::Serialize;

use super::assembly::{check_g_newton, OperatorAssembly};
use super::spectrum::{principal_eigenpair, RESONANCE_TOL};
use crate::error::{Error, Result};
use crate::fields::SourceBundle;
use crate::geometry::{ManifoldGrid, ScalarField};
use crate::krylov::{conjugate_gradient, minres, KrylovStats};

pub const SOLVE_TOL: f64 = 1e-10;
pub const SOLVE_MAX_ITER: usize = 50_000;
/// Undershoots of `min u` above `-UNDERSHOOT_TOL` count as positive.
pub const UNDERSHOOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Positivity {
    StrictlyPositive,
    NonpositiveSomewhere,
}

/// Solution of `P_g u = -1` with the constrained warp factor.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub u: ScalarField,
    /// `v = -(α/6) u`, normalized so that `∫ v dV_g = 1/G_N`.
    pub v: ScalarField,
    pub alpha: f64,
    /// `𝔉 = α / (4 G_N)`.
    pub potential: f64,
    /// `-6 / (4 G_N² ∫ e^{nφ} u dV_{g0})`; only evaluated when `α < 0`.
    pub potential_crosscheck: Option<f64>,
    pub positivity: Positivity,
    pub min_u: f64,
    /// Set when `min u` was a tiny negative undershoot attributed to quadrature.
    pub undershoot: Option<f64>,
    pub lambda0: f64,
    pub resonance_margin: f64,
    /// `‖P_g u + 1‖_g / ‖1‖_g`.
    pub residual: f64,
    pub g_newton: f64,
    pub stats: KrylovStats,
}

impl CriticalPoint {
    pub fn is_positive(&self) -> bool {
        self.positivity == Positivity::StrictlyPositive
    }

    /// `∫ u dV_g`.
    pub fn u_integral(&self, asm: &OperatorAssembly<'_>) -> f64 {
        asm.integral(self.u.values())
    }
}

/// Solves `P_g u = -1` after checking `λ₀` for resonance.
pub fn solve_critical_point(asm: &OperatorAssembly<'_>, g_n: f64) -> Result<CriticalPoint> {
    check_g_newton(g_n)?;
    let (lambda0, psi0) = principal_eigenpair(asm, None)?;
    solve_critical_point_given(asm, g_n, lambda0, &psi0)
}

/// As [`solve_critical_point`] with a precomputed principal pair.
pub fn solve_critical_point_given(
    asm: &OperatorAssembly<'_>,
    g_n: f64,
    lambda0: f64,
    psi0: &ScalarField,
) -> Result<CriticalPoint> {
    solve_inner(asm, g_n, lambda0, psi0, None)
}

/// As [`solve_critical_point_given`], starting the Krylov solve from `init`.
pub fn solve_critical_point_from(
    asm: &OperatorAssembly<'_>,
    g_n: f64,
    lambda0: f64,
    psi0: &ScalarField,
    init: &ScalarField,
) -> Result<CriticalPoint> {
    asm.grid().check(init)?;
    solve_inner(asm, g_n, lambda0, psi0, Some(init.values()))
}

fn solve_inner(
    asm: &OperatorAssembly<'_>,
    g_n: f64,
    lambda0: f64,
    psi0: &ScalarField,
    init: Option<&[f64]>,
) -> Result<CriticalPoint> {
    check_g_newton(g_n)?;
    if lambda0.abs() < RESONANCE_TOL {
        let nrm = asm.inner(psi0.values(), psi0.values()).sqrt();
        return Err(Error::Resonance {
            lambda0,
            obstruction: -asm.integral(psi0.values()) / nrm,
        });
    }
    let n = asm.len();
    let w = asm.weights();
    let diag = asm.diagonal();
    let mut u = init.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let stats = if lambda0 < 0.0 {
        // -P is positive definite: solve -P u = 1.
        let inv: Vec<f64> = diag.iter().map(|d| 1.0 / (-d).max(1e-300)).collect();
        let neg = |x: &[f64], out: &mut [f64]| {
            asm.apply(x, out);
            out.iter_mut().for_each(|o| *o = -*o);
        };
        // Constant-coefficient start is exact when c is constant.
        let c = asm.integral(asm.coefficient().values()) / asm.integral(&vec![1.0; n]);
        if c < 0.0 && init.is_none() {
            u.iter_mut().for_each(|v| *v = -1.0 / c);
        }
        let r = conjugate_gradient(
            neg,
            &vec![1.0; n],
            &mut u,
            w,
            &inv,
            SOLVE_TOL,
            SOLVE_MAX_ITER,
        );
        accept_floor(asm, &u, r)?
    } else {
        let scale = diag.iter().map(|d| d.abs()).sum::<f64>() / n as f64;
        let inv: Vec<f64> = diag
            .iter()
            .map(|d| 1.0 / d.abs().max(1e-3 * scale))
            .collect();
        let r = minres(
            |x: &[f64], o: &mut [f64]| asm.apply(x, o),
            &vec![-1.0; n],
            &mut u,
            w,
            &inv,
            SOLVE_TOL,
            SOLVE_MAX_ITER,
        );
        accept_floor(asm, &u, r)?
    };
    finish(asm, g_n, lambda0, ScalarField::from_vec_unchecked(u), stats)
}

/// Close to resonance `‖u‖` is large and rounding in `P u` alone exceeds
/// the relative tolerance. Accept a residual at that floor.
fn accept_floor(
    asm: &OperatorAssembly<'_>,
    u: &[f64],
    r: Result<KrylovStats>,
) -> Result<KrylovStats> {
    match r {
        Err(Error::NonConvergence {
            iterations,
            residual,
            ..
        }) => {
            let dmax = asm.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let unorm = (asm.inner(u, u) / asm.integral(&vec![1.0; u.len()])).sqrt();
            let floor = 256.0 * f64::EPSILON * dmax * unorm;
            if residual <= floor {
                Ok(KrylovStats {
                    iterations,
                    relative_residual: residual,
                })
            } else {
                r
            }
        }
        other => other,
    }
}

fn finish(
    asm: &OperatorAssembly<'_>,
    g_n: f64,
    lambda0: f64,
    u: ScalarField,
    stats: KrylovStats,
) -> Result<CriticalPoint> {
    let n = asm.len();
    let mut pu = vec![0.0; n];
    asm.apply(u.values(), &mut pu);
    pu.iter_mut().for_each(|v| *v += 1.0);
    let residual = (asm.inner(&pu, &pu) / asm.integral(&vec![1.0; n])).sqrt();

    let iu = asm.integral(u.values());
    if iu == 0.0 || !iu.is_finite() {
        return Err(Error::Indeterminate(iu));
    }
    let alpha = -6.0 / (g_n * iu);
    let v = u.scaled(-alpha / 6.0);
    let potential = alpha / (4.0 * g_n);
    let potential_crosscheck = (alpha < 0.0).then(|| -6.0 / (4.0 * g_n * g_n * iu));

    let min_u = u.min();
    let (positivity, undershoot) = if min_u > 0.0 {
        (Positivity::StrictlyPositive, None)
    } else if min_u > -UNDERSHOOT_TOL {
        (Positivity::StrictlyPositive, Some(min_u))
    } else {
        (Positivity::NonpositiveSomewhere, None)
    };
    Ok(CriticalPoint {
        u,
        v,
        alpha,
        potential,
        potential_crosscheck,
        positivity,
        min_u,
        undershoot,
        lambda0,
        resonance_margin: lambda0.abs(),
        residual,
        g_newton: g_n,
        stats,
    })
}

/// Solves the background-frame equation `M_{g0} u = -e^{2φ}`.
///
/// `M_{g0}` is self-adjoint for the weight `e^{(n-2)φ} dV_{g0}`, so the same
/// Krylov methods apply without going through the `g`-frame.
pub fn solve_background_form(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    sources: &SourceBundle,
    definite: bool,
) -> Result<ScalarField> {
    let asm = OperatorAssembly::assemble(grid, phi, sources)?;
    let n = grid.dim() as f64;
    let e2: Vec<f64> = phi.values().iter().map(|p| (2.0 * p).exp()).collect();
    let w0: Vec<f64> = phi
        .values()
        .iter()
        .zip(grid.weights())
        .map(|(p, w)| ((n - 2.0) * p).exp() * w)
        .collect();
    let m_op = |x: &[f64], out: &mut [f64]| {
        asm.apply(x, out);
        for (o, e) in out.iter_mut().zip(&e2) {
            *o *= e;
        }
    };
    let diag: Vec<f64> = asm.diagonal().iter().zip(&e2).map(|(d, e)| d * e).collect();
    let mut u = vec![0.0; grid.len()];
    if definite {
        let neg = |x: &[f64], out: &mut [f64]| {
            m_op(x, out);
            out.iter_mut().for_each(|o| *o = -*o);
        };
        let inv: Vec<f64> = diag.iter().map(|d| 1.0 / (-d).max(1e-300)).collect();
        conjugate_gradient(neg, &e2, &mut u, &w0, &inv, SOLVE_TOL, SOLVE_MAX_ITER)?;
    } else {
        let rhs: Vec<f64> = e2.iter().map(|e| -e).collect();
        let scale = diag.iter().map(|d| d.abs()).sum::<f64>() / diag.len() as f64;
        let inv: Vec<f64> = diag
            .iter()
            .map(|d| 1.0 / d.abs().max(1e-3 * scale))
            .collect();
        minres(m_op, &rhs, &mut u, &w0, &inv, SOLVE_TOL, SOLVE_MAX_ITER)?;
    }
    ScalarField::new(grid, u)
}
