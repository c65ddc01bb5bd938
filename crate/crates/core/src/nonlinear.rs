//! Warp-factor equation in `d > 4` external dimensions:
//! `Δ_g v + f_g v = K v^q` with `q = 1 - 4/d`.
//!
//! Solutions are computed by monotone iteration downward from the constant
//! super-solution, which converges to the largest solution below it.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fields::{transform_source, SourceBundle};
use crate::geometry::{curvature_expression, ManifoldGrid, ScalarField};
use crate::krylov::conjugate_gradient;
use crate::solver::{check_g_newton, principal_eigenpair, OperatorAssembly};

const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveSettings {
    /// Stop once `‖v_{k+1} - v_k‖_∞ ≤ update_tol ‖v_{k+1}‖_∞`.
    pub update_tol: f64,
    /// Required relative residual of the converged solution.
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            update_tol: 1e-10,
            residual_tol: 1e-8,
            max_iter: 20_000,
        }
    }
}

/// `Δ_g v + f_g v = K v^{1-4/d}` on a fixed conformal metric.
#[derive(Debug, Clone)]
pub struct NonlinearProblem<'g> {
    d: usize,
    k: f64,
    /// `L_g = Δ_g + f_g`.
    op: OperatorAssembly<'g>,
    /// `T^{(d)} = -(d/2) F_g + T^g`, zero when built from `f` directly.
    t_d: ScalarField,
}

impl<'g> NonlinearProblem<'g> {
    /// Problem with a prescribed `f_g`.
    pub fn from_f(
        grid: &'g ManifoldGrid,
        phi: &ScalarField,
        f: ScalarField,
        d: usize,
        k: f64,
    ) -> Result<Self> {
        check_d(d)?;
        if k == 0.0 || !k.is_finite() {
            return Err(invalid("K", format!("must be nonzero and finite, got {k}")));
        }
        let op = OperatorAssembly::from_coefficient(grid, phi, f)?;
        Ok(NonlinearProblem {
            d,
            k,
            op,
            t_d: ScalarField::zeros(grid),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `q = 1 - 4/d`.
    pub fn exponent(&self) -> f64 {
        1.0 - 4.0 / self.d as f64
    }

    pub fn f(&self) -> &ScalarField {
        self.op.coefficient()
    }

    pub fn t_d(&self) -> &ScalarField {
        &self.t_d
    }

    pub fn operator(&self) -> &OperatorAssembly<'g> {
        &self.op
    }

    pub fn grid(&self) -> &'g ManifoldGrid {
        self.op.grid()
    }

    /// The constant super-solution: `(K/‖f‖)^{d/4}` for `K > 0`,
    /// `(|K|/min|f|)^{d/4}` for `K < 0`.
    pub fn super_solution(&self) -> Result<f64> {
        let e = self.d as f64 / 4.0;
        let f = self.f();
        if self.k > 0.0 {
            let nf = f.max_abs();
            if nf == 0.0 {
                return Err(invalid(
                    "f_g",
                    "vanishes identically; no finite constant super-solution",
                ));
            }
            Ok((self.k / nf).powf(e))
        } else {
            let fmax = f.max();
            if fmax >= 0.0 {
                return Err(Error::SignCondition(format!(
                    "K < 0 needs f_g < 0 everywhere, but max f_g = {fmax:.3e}"
                )));
            }
            let min_abs = f.values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            Ok((-self.k / min_abs).powf(e))
        }
    }

    /// Relative residual `‖L_g v - K v^q‖_g / ‖K v^q‖_g`.
    pub fn residual(&self, v: &ScalarField) -> Result<f64> {
        self.grid().check(v)?;
        let q = self.exponent();
        let mut lv = vec![0.0; v.len()];
        self.op.apply(v.values(), &mut lv);
        let src: Vec<f64> = v
            .values()
            .iter()
            .map(|x| self.k * x.max(0.0).powf(q))
            .collect();
        let r: Vec<f64> = lv.iter().zip(&src).map(|(a, b)| a - b).collect();
        let scale = self.op.inner(&src, &src).sqrt();
        let rn = self.op.inner(&r, &r).sqrt();
        Ok(if scale == 0.0 { rn } else { rn / scale })
    }

    /// `a` with `∫ (a v)^{2-4/d} dV_g = 1/G_N`; the rescaled field solves the
    /// equation with `K a^{4/d}`.
    pub fn rescale(&self, v: &ScalarField, g_n: f64) -> Result<Rescaled> {
        check_g_newton(g_n)?;
        let d = self.d as f64;
        let i = self
            .op
            .integral(&v.map(|x| x.max(0.0).powf(2.0 - 4.0 / d)).into_values());
        if !(i > 0.0) {
            return Err(invalid(
                "v",
                "needs a positive constraint integral to rescale",
            ));
        }
        let a = (1.0 / (g_n * i)).powf(d / (2.0 * d - 4.0));
        Ok(Rescaled {
            a,
            v: v.scaled(a),
            k: self.k * a.powf(4.0 / d),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Rescaled {
    pub a: f64,
    pub v: ScalarField,
    pub k: f64,
}

fn check_d(d: usize) -> Result<()> {
    if d <= 4 {
        return Err(invalid(
            "d",
            format!(
                "needs d > 4 (d = 4 is the linear problem, d < 4 has a negative exponent), got {d}"
            ),
        ));
    }
    Ok(())
}

/// Assembles `f_g = -(d R_g / 2 + T^{(d)}) / (2(d-1))` from the geometry and
/// sources.
pub fn build_problem<'g>(
    grid: &'g ManifoldGrid,
    phi: &ScalarField,
    sources: &SourceBundle,
    d: usize,
    k: f64,
) -> Result<NonlinearProblem<'g>> {
    check_d(d)?;
    let df = d as f64;
    let r_g = curvature_expression(grid, phi, grid.r_g0())?;
    let f_g = sources.flux.norm_in_metric(grid, phi)?;
    let t_g = transform_source(grid, &sources.string, phi)?;
    let t_d = f_g.zip_map(&t_g, |f, t| -df / 2.0 * f + t);
    let f = r_g.zip_map(&t_d, |r, t| -(df / 2.0 * r + t) / (2.0 * (df - 1.0)));
    let mut p = NonlinearProblem::from_f(grid, phi, f, d, k)?;
    p.t_d = t_d;
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    /// `‖v_k‖_∞` for every iterate, starting with the super-solution.
    pub sup_norms: Vec<f64>,
    /// Relative sup-norm update per iteration.
    pub updates: Vec<f64>,
    /// Largest pointwise increase `max(v_{k+1} - v_k)` seen; at most the
    /// monotonicity slack for a descending run.
    pub max_increase: f64,
    pub monotone: bool,
    pub shift: f64,
    pub iterations: usize,
    pub residual: f64,
    pub super_solution: f64,
    /// The iteration collapsed to `v ≡ 0`.
    pub trivial: bool,
}

/// Monotone iteration `(Δ_g - m) v_{k+1} = K v_k^q - (f_g + m) v_k` from the
/// constant super-solution.
pub fn monotone_solve(prob: &NonlinearProblem<'_>) -> Result<(ScalarField, IterationTrace)> {
    monotone_solve_with(prob, &SolveSettings::default())
}

pub fn monotone_solve_with(
    prob: &NonlinearProblem<'_>,
    set: &SolveSettings,
) -> Result<(ScalarField, IterationTrace)> {
    let vplus = prob.super_solution()?;
    let n = prob.op.len();
    let q = prob.exponent();
    let k = prob.k;
    let f = prob.f().values().to_vec();
    let w = prob.op.weights();
    // Diagonal of -Δ_g, for the Jacobi preconditioner.
    let neg_lap_diag: Vec<f64> = prob
        .op
        .diagonal()
        .iter()
        .zip(&f)
        .map(|(d, f)| f - d)
        .collect();

    let mut v = vec![vplus; n];
    let mut trace = IterationTrace {
        sup_norms: vec![vplus],
        updates: Vec::new(),
        max_increase: 0.0,
        monotone: true,
        shift: 0.0,
        iterations: 0,
        residual: f64::NAN,
        super_solution: vplus,
        trivial: false,
    };
    // Right-hand side G(v) = K v^q - (f + m) v must be non-increasing in v on
    // the range of the iterates; m is raised as the minimum of v drops.
    let shift_for = |vmin: f64| -> f64 {
        let fmax_neg = f.iter().fold(0.0f64, |m, f| m.max(-f));
        let kterm = if k > 0.0 {
            k * q * vmin.max(1e-300).powf(q - 1.0)
        } else {
            0.0
        };
        kterm + fmax_neg + 1.0
    };
    let mut m = shift_for(vplus);
    let mut next = v.clone();
    let mut rhs = vec![0.0; n];
    for it in 0..set.max_iter {
        let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
        m = m.max(shift_for(vmin));
        for i in 0..n {
            rhs[i] = (f[i] + m) * v[i] - k * v[i].max(0.0).powf(q);
        }
        let inv: Vec<f64> = neg_lap_diag.iter().map(|d| 1.0 / (d + m)).collect();
        let op = |x: &[f64], out: &mut [f64]| {
            prob.op.apply_laplacian(x, out);
            for (o, x) in out.iter_mut().zip(x) {
                *o = m * x - *o;
            }
        };
        next.copy_from_slice(&v);
        conjugate_gradient(op, &rhs, &mut next, w, &inv, 1e-13, 50_000).or_else(|e| match e {
            Error::NonConvergence { residual, .. } if residual < 1e-11 => Ok(Default::default()),
            e => Err(e),
        })?;
        // v ≡ 0 is a sub-solution; project onto it when K > 0, where the
        // shift cannot keep G monotone all the way down to zero.
        next.iter_mut().for_each(|x| *x = x.max(0.0));
        let mut inc: f64 = 0.0;
        let mut diff: f64 = 0.0;
        let mut sup: f64 = 0.0;
        for i in 0..n {
            inc = inc.max(next[i] - v[i]);
            diff = diff.max((next[i] - v[i]).abs());
            sup = sup.max(next[i].abs());
        }
        std::mem::swap(&mut v, &mut next);
        trace.iterations = it + 1;
        trace.max_increase = trace.max_increase.max(inc);
        if inc > MONOTONE_SLACK * vplus {
            trace.monotone = false;
        }
        trace.sup_norms.push(sup);
        if sup <= 1e-14 * vplus {
            trace.trivial = true;
            v.iter_mut().for_each(|x| *x = 0.0);
            break;
        }
        let upd = diff / sup;
        trace.updates.push(upd);
        if upd < set.update_tol {
            break;
        }
    }
    trace.shift = m;
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let v = ScalarField::from_vec_unchecked(v);
    trace.residual = prob.residual(&v)?;
    let converged = trace.trivial
        || trace.updates.last().is_some_and(|u| *u < set.update_tol)
        || trace.iterations == 0;
    if !converged || trace.residual > set.residual_tol {
        return Err(Error::NonConvergence {
            method: "monotone iteration",
            iterations: trace.iterations,
            residual: trace.residual,
        });
    }
    Ok((v, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KSignReport {
    /// `λ₁` with `L_g φ₁ = -λ₁ φ₁`, `φ₁ > 0`.
    pub lambda1: f64,
    pub k: f64,
    /// `sign(K) = -sign(λ₁)`.
    pub consistent: bool,
    /// `∫ φ₁ L_g v dV_g`.
    pub lhs: f64,
    /// `-λ₁ ∫ φ₁ v dV_g`.
    pub spectral: f64,
    /// `K ∫ φ₁ v^q dV_g`.
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs|, |rhs|)`.
    pub relative_gap: f64,
}

pub fn k_sign_identity(prob: &NonlinearProblem<'_>, v: &ScalarField) -> Result<KSignReport> {
    prob.grid().check(v)?;
    if !(v.min() >= 0.0 && v.max() > 0.0) {
        return Err(Error::NotPositive(v.min()));
    }
    let (top, phi1) = principal_eigenpair(&prob.op, None)?;
    let lambda1 = -top;
    if lambda1.abs() < 1e-8 {
        return Err(Error::Indeterminate(lambda1));
    }
    let q = prob.exponent();
    let mut lv = vec![0.0; v.len()];
    prob.op.apply(v.values(), &mut lv);
    let p = phi1.values();
    let lhs = prob.op.inner(p, &lv);
    let spectral = -lambda1 * prob.op.inner(p, v.values());
    let rhs = prob.k * prob.op.inner(p, &v.map(|x| x.powf(q)).into_values());
    let scale = lhs.abs().max(rhs.abs());
    Ok(KSignReport {
        lambda1,
        k: prob.k,
        consistent: prob.k.signum() == -lambda1.signum(),
        lhs,
        spectral,
        rhs,
        relative_gap: if scale == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / scale
        },
    })
}

/// General-`d` potential at a critical point on the negative-`α` branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialD {
    /// `-C / (∫ w^{d/2-1} dV_g)^{2/(d-2)}` with `w = u^{4/d}`.
    pub potential: f64,
    /// The same magnitude with the positive prefactor as displayed in the
    /// closed form; reported next to the proof's sign.
    pub displayed: f64,
    pub constant: f64,
    /// `-C V^{1-1/p} / ∫ w dV_g` with `p = d/2 - 1`.
    pub mean_bound: f64,
    /// `-C V^{-1-1/p} ∫ 1/w dV_g`.
    pub jensen_bound: f64,
    /// `-C ∫ 1/w dV_g`; a lower bound when `vol_g ≥ 1`.
    pub literal_bound: f64,
    pub volume: f64,
    /// `∫ T^{(d)} dV_g`.
    pub t_d_integral: f64,
    pub two_dimensional: bool,
}

impl PotentialD {
    pub fn chain_holds(&self) -> bool {
        let slack = 1e-12 * self.potential.abs();
        self.potential >= self.mean_bound - slack && self.mean_bound >= self.jensen_bound - slack
    }
}

pub fn effective_potential_d(
    prob: &NonlinearProblem<'_>,
    u: &ScalarField,
    g_n: f64,
) -> Result<PotentialD> {
    check_g_newton(g_n)?;
    prob.grid().check(u)?;
    let m = u.min();
    if !(m > 0.0) {
        return Err(Error::NotPositive(m));
    }
    let d = prob.d as f64;
    let asm = &prob.op;
    let w = u.map(|x| x.powf(4.0 / d));
    let p = d / 2.0 - 1.0;
    let ip = asm.integral(&w.map(|x| x.powf(p)).into_values());
    if !(ip > 0.0) {
        return Err(invalid("u", "nonpositive constraint integral"));
    }
    let c = (d - 2.0) / (2.0 * d * g_n) * g_n.powf(-2.0 / (d - 2.0));
    let vol = asm.integral(&vec![1.0; asm.len()]);
    let potential = -c / ip.powf(2.0 / (d - 2.0));
    let iw = asm.integral(w.values());
    let iinv = asm.integral(&w.map(|x| 1.0 / x).into_values());
    Ok(PotentialD {
        potential,
        displayed: -potential,
        constant: c,
        mean_bound: -c * vol.powf(1.0 - 1.0 / p) / iw,
        jensen_bound: -c * vol.powf(-1.0 - 1.0 / p) * iinv,
        literal_bound: -c * iinv,
        volume: vol,
        t_d_integral: asm.integral(prob.t_d.values()),
        two_dimensional: prob.grid().dim() == 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldStrengthSet;
    use std::f64::consts::PI;

    fn sphere() -> ManifoldGrid {
        ManifoldGrid::sphere(1.0, 8, 16).unwrap()
    }

    fn constant_problem(g: &ManifoldGrid, f: f64, d: usize, k: f64) -> NonlinearProblem<'_> {
        NonlinearProblem::from_f(g, &ScalarField::zeros(g), ScalarField::constant(g, f), d, k)
            .unwrap()
    }

    #[test]
    fn rejects_low_dimension() {
        let g = sphere();
        let z = ScalarField::zeros(&g);
        for d in [2, 3, 4] {
            assert!(build_problem(&g, &z, &SourceBundle::none(&g), d, 1.0).is_err());
        }
        assert!(NonlinearProblem::from_f(&g, &z, z.clone(), 6, 0.0).is_err());
    }

    #[test]
    fn f_from_sources() {
        let g = ManifoldGrid::torus(&[1.0, 1.0], 4).unwrap();
        let z = ScalarField::zeros(&g);
        let src = SourceBundle::new(
            FieldStrengthSet::empty(),
            crate::fields::StringSource::smooth(&g, ScalarField::constant(&g, 10.0), 1.0).unwrap(),
        );
        let p = build_problem(&g, &z, &src, 6, 1.0).unwrap();
        assert!(p.f().values().iter().all(|f| (f + 1.0).abs() < 1e-15));
        let src = SourceBundle::with_flux(&g, FieldStrengthSet::constant(&g, 1, 2.0).unwrap());
        let p = build_problem(&g, &z, &src, 8, 1.0).unwrap();
        assert!(p.f().values().iter().all(|f| (f - 4.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn constant_oracles() {
        let g = sphere();
        for (f, d, k, want) in [
            (1.0, 8, 1.0, 1.0),
            (2.0, 8, 1.0, 0.25),
            (-1.0, 6, -1.0, 1.0),
        ] {
            let p = constant_problem(&g, f, d, k);
            let (v, tr) = monotone_solve(&p).unwrap();
            assert!(
                v.values().iter().all(|x| (x - want).abs() < 1e-8),
                "{f} {d} {k}"
            );
            assert!(tr.monotone);
            assert!(v.max() <= tr.super_solution * (1.0 + 1e-12));
            let ks = k_sign_identity(&p, &v).unwrap();
            assert!(ks.consistent);
            assert!((ks.lambda1 + f).abs() < 1e-10);
            assert!(ks.relative_gap < 1e-10);
        }
    }

    #[test]
    fn sign_condition_guard() {
        let g = sphere();
        let f = ScalarField::from_fn(&g, |x| -1.0 + 1.5 * x[0].cos().powi(2));
        let p = NonlinearProblem::from_f(&g, &ScalarField::zeros(&g), f, 6, -1.0).unwrap();
        assert!(matches!(monotone_solve(&p), Err(Error::SignCondition(_))));
    }

    #[test]
    fn zero_solution_when_f_nonpositive() {
        let g = sphere();
        let p = constant_problem(&g, -1.0, 8, 1.0);
        let (v, tr) = monotone_solve(&p).unwrap();
        assert!(tr.trivial && v.max() == 0.0);
    }

    #[test]
    fn variable_f_descends_monotonically() {
        let g = ManifoldGrid::sphere(1.0, 12, 24).unwrap();
        let f = ScalarField::from_fn(&g, |x| {
            -1.0 - 0.5 * x[0].cos() + 0.2 * x[0].sin() * x[1].cos()
        });
        let p = NonlinearProblem::from_f(&g, &ScalarField::zeros(&g), f, 6, -1.0).unwrap();
        let (v, tr) = monotone_solve(&p).unwrap();
        assert!(tr.monotone);
        assert!(tr.residual < 1e-8);
        assert!(v.min() > 0.0 && v.max() <= tr.super_solution);
        let ks = k_sign_identity(&p, &v).unwrap();
        assert!(ks.consistent && ks.relative_gap < 1e-8);
        let r = p.rescale(&v, 1.0).unwrap();
        let d = 6.0;
        let i = p
            .operator()
            .integral(&r.v.map(|x| x.powf(2.0 - 4.0 / d)).into_values());
        assert!((i - 1.0).abs() < 1e-12);
        let rp =
            NonlinearProblem::from_f(&g, &ScalarField::zeros(&g), p.f().clone(), 6, r.k).unwrap();
        assert!(rp.residual(&r.v).unwrap() < 1e-8);
    }

    #[test]
    fn rescale_on_unit_sphere() {
        let g = sphere();
        let p = constant_problem(&g, 1.0, 8, 1.0);
        let r = p.rescale(&ScalarField::constant(&g, 1.0), 1.0).unwrap();
        assert!((r.a - (0.25 / PI).powf(8.0 / 12.0)).abs() < 1e-12);
    }

    #[test]
    fn potential_d_examples() {
        let g = sphere();
        let p = constant_problem(&g, -1.0, 6, -1.0);
        let e = effective_potential_d(&p, &ScalarField::constant(&g, 1.0), 1.0).unwrap();
        let c = 4.0 / 12.0;
        assert!((e.potential + c / (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!(e.chain_holds());
        assert!(e.potential >= e.literal_bound);
        assert_eq!(e.t_d_integral, 0.0);
    }
}
