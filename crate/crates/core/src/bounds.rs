//! Checks of the integral identity, Jensen's inequality, class membership,
//! the existence ledgers for positive and non-positive Yamabe type, and the
//! concentration and curvature diagnostics.
//!
//! Every check produces a [`BoundReport`]: named `lhs ⋈ rhs` entries with a
//! signed margin that is nonnegative exactly when the entry passes.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fields::{flux_energy, transform_source, SourceBundle};
use crate::geometry::{total_scalar_curvature, ManifoldGrid, ScalarField};
use crate::solver::{CriticalPoint, OperatorAssembly};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Ge,
    Lt,
    Gt,
    /// Equality up to an absolute tolerance.
    Eq {
        tol: f64,
    },
}

impl Relation {
    pub fn symbol(&self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Lt => "<",
            Relation::Gt => ">",
            Relation::Eq { .. } => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub margin: f64,
    pub pass: bool,
}

impl BoundEntry {
    pub fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        Self::with_slack(name, lhs, relation, rhs, 0.0)
    }

    /// Non-strict relations accept violations up to `slack`.
    pub fn with_slack(
        name: impl Into<String>,
        lhs: f64,
        relation: Relation,
        rhs: f64,
        slack: f64,
    ) -> Self {
        let (margin, pass) = match relation {
            Relation::Le => (rhs - lhs, rhs - lhs >= -slack),
            Relation::Ge => (lhs - rhs, lhs - rhs >= -slack),
            Relation::Lt => (rhs - lhs, rhs - lhs > 0.0),
            Relation::Gt => (lhs - rhs, lhs - rhs > 0.0),
            Relation::Eq { tol } => (tol - (lhs - rhs).abs(), (lhs - rhs).abs() <= tol),
        };
        BoundEntry {
            name: name.into(),
            lhs,
            rhs,
            relation,
            margin,
            pass: pass && lhs.is_finite() && rhs.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    /// Free-form remarks, e.g. cases flagged for inspection.
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn push(&mut self, e: BoundEntry) {
        self.entries.push(e);
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn min_margin(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn extend(&mut self, other: BoundReport) {
        self.entries.extend(other.entries);
        self.notes.extend(other.notes);
    }
}

fn require_positive(cp: &CriticalPoint) -> Result<()> {
    if cp.is_positive() {
        Ok(())
    } else {
        Err(Error::NotPositive(cp.min_u))
    }
}

fn sources_of<'a>(asm: &'a OperatorAssembly<'_>) -> Result<&'a SourceBundle> {
    asm.sources().ok_or_else(|| {
        invalid(
            "assembly",
            "built from a bare coefficient; sources are needed here",
        )
    })
}

/// The individual terms of the integrated identity obtained by dividing the
/// background equation by `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityTerms {
    pub grad_log_u: f64,
    pub grad_phi: f64,
    pub cross: f64,
    pub inverse_u: f64,
    pub flux: f64,
    pub string: f64,
    /// `(1/3) R_{g0} vol_{g0}`.
    pub rhs: f64,
}

impl IdentityTerms {
    pub fn lhs(&self) -> f64 {
        self.grad_log_u + self.grad_phi + self.cross + self.inverse_u + self.flux + self.string
    }

    pub fn residual(&self) -> f64 {
        (self.lhs() - self.rhs).abs()
    }
}

pub fn identity_terms(cp: &CriticalPoint, asm: &OperatorAssembly<'_>) -> Result<IdentityTerms> {
    require_positive(cp)?;
    let src = sources_of(asm)?;
    let grid = asm.grid();
    let phi = asm.phi();
    let n = grid.dim() as f64;
    // Clamp recorded undershoots so 1/u stays finite.
    let u = cp.u.map(|v| v.max(f64::MIN_POSITIVE));
    let gu = grid.grad_norm_sq(&u)?;
    let gp = grid.grad_norm_sq(phi)?;
    let gpu = grid.grad_inner(phi, &u)?;
    let integ = |f: ScalarField| grid.integrate(&f, None);
    let grad_log_u = integ(gu.zip_map(&u, |g, u| g / (u * u)))?;
    let grad_phi = (n - 1.0) * (n - 2.0) / 3.0 * integ(gp.clone())?;
    let cross = (n - 2.0) * integ(gpu.zip_map(&u, |g, u| g / u))?;
    let inverse_u = integ(u.zip_map(phi, |u, p| (2.0 * p).exp() / u))?;
    let flux = integ(flux_energy(grid, &src.flux, phi)?)?;
    let beta = src.string.beta;
    let string = -integ(
        src.string
            .t_g0
            .zip_map(phi, |t, p| (2.0 * (1.0 - beta) * p).exp() * t),
    )? / 6.0;
    Ok(IdentityTerms {
        grad_log_u,
        grad_phi,
        cross,
        inverse_u,
        flux,
        string,
        rhs: grid.r_g0() * grid.volume() / 3.0,
    })
}

/// The Cauchy-with-ε constants `(c₁, c₂)` at the midpoint of the admissible
/// interval `(n-2)/2 < ε < 2(n-1)/3`.
pub fn cauchy_constants(n: usize) -> (f64, f64) {
    let n = n as f64;
    let eps = 0.5 * (n - 2.0) / 2.0 + 0.5 * 2.0 * (n - 1.0) / 3.0;
    (
        1.0 - (n - 2.0) / (2.0 * eps),
        (n - 2.0) * ((n - 1.0) / 3.0 - eps / 2.0),
    )
}

/// Evaluates the identity term by term and reports `|LHS - RHS|`, together
/// with the inequality that follows from it after the Cauchy step.
///
/// The identity holds exactly in the continuum; on a grid the residual is a
/// discretization error. `tol` sets the pass threshold for the equality.
pub fn identity_residual(
    cp: &CriticalPoint,
    asm: &OperatorAssembly<'_>,
    tol: f64,
) -> Result<BoundReport> {
    let t = identity_terms(cp, asm)?;
    let grid = asm.grid();
    let (c1, c2) = cauchy_constants(grid.dim());
    let gp = grid.integrate(&grid.grad_norm_sq(asm.phi())?, None)?;
    let mut rep = BoundReport::default();
    rep.push(BoundEntry::new(
        "identity",
        t.lhs(),
        Relation::Eq { tol },
        t.rhs,
    ));
    let chain = c1 * t.grad_log_u + c2 * gp + t.inverse_u + t.flux + t.string;
    let slack = tol.max(1e-12 * t.rhs.abs());
    rep.push(BoundEntry::with_slack(
        "basic_inequality",
        t.rhs,
        Relation::Ge,
        chain,
        slack,
    ));
    Ok(rep)
}

/// Observed order `log2(e_coarse / e_fine)` of a two-grid study.
pub fn convergence_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// `∫ e^{nφ}/u dV_{g0} ≥ A² / ∫ e^{nφ} u dV_{g0}` for a positive field.
pub fn jensen_for_field(asm: &OperatorAssembly<'_>, u: &ScalarField) -> Result<BoundReport> {
    asm.grid().check(u)?;
    let m = u.min();
    if !(m > 0.0) {
        return Err(Error::NotPositive(m));
    }
    let a = asm.integral(&vec![1.0; asm.len()]);
    let lhs = asm.integral(&u.map(|u| 1.0 / u).into_values());
    let rhs = a * a / asm.integral(u.values());
    let mut rep = BoundReport::default();
    rep.push(BoundEntry::with_slack(
        "jensen",
        lhs,
        Relation::Ge,
        rhs,
        1e-12 * rhs.abs(),
    ));
    Ok(rep)
}

pub fn jensen_check(cp: &CriticalPoint, asm: &OperatorAssembly<'_>) -> Result<BoundReport> {
    require_positive(cp)?;
    jensen_for_field(asm, &cp.u.map(|v| v.max(f64::MIN_POSITIVE)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub eta: f64,
    /// `∫ R_g dV_g`; `None` on synthetic grids.
    pub total_curvature: Option<f64>,
    pub in_s_eta: Option<bool>,
    /// `∫ (F_g - T^g) dV_g`.
    pub flux_minus_string: f64,
    pub in_s_tilde_eta: Option<bool>,
    /// `‖φ‖_{L¹(g0)}`.
    pub l1_norm: f64,
    pub in_ball: bool,
}

impl MembershipReport {
    /// Recomputes the flags from the stored values.
    pub fn recompute(&self) -> (Option<bool>, Option<bool>, bool) {
        let s = self.total_curvature.map(|r| r <= self.eta);
        let st = s.map(|s| s && self.flux_minus_string >= -self.eta);
        (s, st, self.l1_norm <= self.eta)
    }
}

pub fn membership(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    sources: &SourceBundle,
    eta: f64,
) -> Result<MembershipReport> {
    if !eta.is_finite() {
        return Err(invalid("eta", "must be finite"));
    }
    let total_curvature = match total_scalar_curvature(grid, phi) {
        Ok(v) => Some(v),
        Err(Error::SyntheticRefused(_)) => None,
        Err(e) => return Err(e),
    };
    let fg = sources.flux.norm_in_metric(grid, phi)?;
    let tg = transform_source(grid, &sources.string, phi)?;
    let flux_minus_string = grid.integrate(&fg.zip_map(&tg, |f, t| f - t), Some(phi))?;
    let l1_norm = grid.integrate(&phi.map(f64::abs), None)?;
    let mut rep = MembershipReport {
        eta,
        total_curvature,
        in_s_eta: None,
        flux_minus_string,
        in_s_tilde_eta: None,
        l1_norm,
        in_ball: false,
    };
    let (a, b, c) = rep.recompute();
    rep.in_s_eta = a;
    rep.in_s_tilde_eta = b;
    rep.in_ball = c;
    Ok(rep)
}

fn check_integer_beta(beta: f64) -> Result<()> {
    if beta.fract() != 0.0 {
        return Err(invalid(
            "beta",
            format!("the existence ledgers assume an integer beta, got {beta}"),
        ));
    }
    Ok(())
}

/// Hypothesis ledger of one of the two existence propositions, with the
/// constant `K` it was evaluated against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceLedger {
    pub k: f64,
    pub conditions: BoundReport,
    eps: f64,
    n: usize,
    beta: f64,
    /// Sup norm entering the lower bound on `𝔉` for the non-positive case.
    source_sup: Option<f64>,
    r_g0: f64,
    volume: f64,
}

impl ExistenceLedger {
    pub fn hypotheses_hold(&self) -> bool {
        self.conditions.all_pass()
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// A-priori estimates for a solve on the same data.
    pub fn check_solution(&self, cp: &CriticalPoint) -> BoundReport {
        let n = self.n as f64;
        let g = cp.g_newton;
        let a = self.volume;
        let sup_u = cp.u.max_abs();
        let mut rep = BoundReport::default();
        rep.push(BoundEntry::new("u_positive", cp.min_u, Relation::Gt, 0.0));
        match self.source_sup {
            None => {
                if self.eps > 0.0 {
                    rep.push(BoundEntry::new(
                        "u_sup_bound",
                        sup_u,
                        Relation::Le,
                        n.powf(n) / self.eps,
                    ));
                }
                let lb = -3.0 * n * (n + 3.0) * self.r_g0 / (2.0 * a * g * g);
                rep.push(BoundEntry::new(
                    "potential_lower_bound",
                    cp.potential,
                    Relation::Gt,
                    lb,
                ));
            }
            Some(sup) => {
                rep.push(BoundEntry::new(
                    "u_sup_bound",
                    sup_u,
                    Relation::Le,
                    n / self.eps,
                ));
                let e = (1.0 - self.beta).abs();
                let lb = -n.powf(1.0 + e) * sup / (2.0 * g * g * a);
                rep.push(BoundEntry::new(
                    "potential_lower_bound",
                    cp.potential,
                    Relation::Gt,
                    lb,
                ));
            }
        }
        if !self.hypotheses_hold() {
            rep.notes.push(
                "hypotheses not met; the estimates are not implied and are reported only".into(),
            );
        }
        rep
    }
}

/// `K = (R_{g0} - 3ε) / (3 nⁿ)`.
pub fn positive_k(n: usize, r_g0: f64, eps: f64) -> f64 {
    let n = n as f64;
    (r_g0 - 3.0 * eps) / (3.0 * n.powf(n))
}

/// `K = n²Γ/3 + |R_{g0}|/3 + ε`.
pub fn nonpositive_k(n: usize, r_g0: f64, eps: f64, gamma: f64) -> f64 {
    let n = n as f64;
    n * n * gamma / 3.0 + r_g0.abs() / 3.0 + eps
}

/// Hypotheses of the positive-curvature existence result.
pub fn existence_checker_positive(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    sources: &SourceBundle,
    eps: f64,
) -> Result<ExistenceLedger> {
    let r = grid.r_g0();
    if !(r > 0.0) {
        return Err(invalid(
            "R_g0",
            format!("positive case needs R_g0 > 0, got {r}"),
        ));
    }
    if !(eps >= 0.0 && eps < r / 3.0) {
        return Err(invalid(
            "epsilon",
            format!("need 0 <= epsilon < R_g0/3 = {}, got {eps}", r / 3.0),
        ));
    }
    check_integer_beta(sources.string.beta)?;
    let n = grid.dim();
    let k = positive_k(n, r, eps);
    let mut c = BoundReport::default();
    c.push(BoundEntry::new(
        "T_sup",
        sources.string.t_g0.max_abs(),
        Relation::Lt,
        k,
    ));
    for (p, s) in sources.flux.sup_norms() {
        c.push(BoundEntry::new(format!("F{p}_sup"), s, Relation::Lt, k));
    }
    c.push(BoundEntry::new(
        "laplacian_phi_sup",
        grid.laplacian(phi)?.max_abs(),
        Relation::Lt,
        k,
    ));
    c.push(BoundEntry::new(
        "grad_phi_sq_sup",
        grid.grad_norm_sq(phi)?.max_abs(),
        Relation::Le,
        k,
    ));
    let nf = n as f64;
    c.push(BoundEntry::new(
        "e2phi_min",
        (2.0 * phi.min()).exp(),
        Relation::Ge,
        1.0 / nf,
    ));
    c.push(BoundEntry::new(
        "e2phi_max",
        (2.0 * phi.max()).exp(),
        Relation::Le,
        nf.powf(nf),
    ));
    Ok(ExistenceLedger {
        k,
        conditions: c,
        eps,
        n,
        beta: sources.string.beta,
        source_sup: None,
        r_g0: r,
        volume: grid.integrate(&ScalarField::constant(grid, 1.0), Some(phi))?,
    })
}

/// Hypotheses of the non-positive-curvature existence result.
pub fn existence_checker_nonpositive(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    sources: &SourceBundle,
    eps: f64,
    gamma: f64,
) -> Result<ExistenceLedger> {
    let r = grid.r_g0();
    if r > 0.0 {
        return Err(invalid(
            "R_g0",
            format!("non-positive case needs R_g0 <= 0, got {r}"),
        ));
    }
    if !(gamma > 1.0) {
        return Err(invalid("Gamma", format!("must exceed 1, got {gamma}")));
    }
    if !(eps > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {eps}")));
    }
    let beta = sources.string.beta;
    check_integer_beta(beta)?;
    let n = grid.dim();
    let nf = n as f64;
    let k = nonpositive_k(n, r, eps, gamma);
    let f_total = sources.flux.total_g0(grid);
    let pref = 1.0 / (6.0 * nf.powf((1.0 - beta).abs()));
    let h = sources
        .string
        .t_g0
        .zip_map(&f_total, |t, f| pref * (t - nf.powf(nf) * f));
    let source_sup = sources
        .string
        .t_g0
        .zip_map(&f_total, |t, f| t - f / nf.powf(nf))
        .max_abs();
    let mut c = BoundReport::default();
    c.push(BoundEntry::new(
        "laplacian_phi_sup",
        grid.laplacian(phi)?.max_abs(),
        Relation::Lt,
        gamma,
    ));
    c.push(BoundEntry::new(
        "grad_phi_sq_sup",
        grid.grad_norm_sq(phi)?.max_abs(),
        Relation::Lt,
        gamma,
    ));
    c.push(BoundEntry::new(
        "e2phi_min",
        (2.0 * phi.min()).exp(),
        Relation::Ge,
        1.0 / nf,
    ));
    c.push(BoundEntry::new(
        "e2phi_max",
        (2.0 * phi.max()).exp(),
        Relation::Le,
        nf,
    ));
    c.push(BoundEntry::new("H_min", h.min(), Relation::Gt, k));
    Ok(ExistenceLedger {
        k,
        conditions: c,
        eps,
        n,
        beta,
        source_sup: Some(source_sup),
        r_g0: r,
        volume: grid.integrate(&ScalarField::constant(grid, 1.0), Some(phi))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationVerdict {
    None,
    DeltaLike,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    /// `(s, ∫ e^{sφ} dV_{g0})`.
    pub integrals: Vec<(f64, f64)>,
    /// `vol_{g0}`, the value at `φ = 0`.
    pub baseline: f64,
    pub verdict: ConcentrationVerdict,
}

pub const CONCENTRATION_LOW: f64 = 0.1;
pub const CONCENTRATION_HIGH: f64 = 10.0;

/// Integrals `∫ e^{sφ}` below and above `s = n` against the `φ = 0` baseline.
pub fn concentration_diagnostic(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    s_list: &[f64],
) -> Result<ConcentrationReport> {
    let n = grid.dim() as f64;
    if !(s_list.iter().any(|s| *s < n) && s_list.iter().any(|s| *s > n)) {
        return Err(invalid(
            "s",
            format!("need exponents on both sides of n = {n}"),
        ));
    }
    let baseline = grid.volume();
    let integrals = s_list
        .iter()
        .map(|&s| Ok((s, grid.integrate(&phi.map(|p| (s * p).exp()), None)?)))
        .collect::<Result<Vec<_>>>()?;
    let low = integrals
        .iter()
        .filter(|(s, _)| *s < n)
        .all(|(_, v)| *v < CONCENTRATION_LOW * baseline);
    let high = integrals
        .iter()
        .filter(|(s, _)| *s > n)
        .all(|(_, v)| *v > CONCENTRATION_HIGH * baseline);
    Ok(ConcentrationReport {
        integrals,
        baseline,
        verdict: if low && high {
            ConcentrationVerdict::DeltaLike
        } else {
            ConcentrationVerdict::None
        },
    })
}

/// `R_{g0} ≥ -∫ e^{2(1-β)φ} T dV_{g0} / (2 vol_{g0})`, a consequence of the
/// identity whenever a positive solution exists.
pub fn negative_curvature_bound(
    cp: &CriticalPoint,
    asm: &OperatorAssembly<'_>,
) -> Result<BoundReport> {
    let src = sources_of(asm)?;
    let grid = asm.grid();
    let beta = src.string.beta;
    let integral = grid.integrate(
        &src.string
            .t_g0
            .zip_map(asm.phi(), |t, p| (2.0 * (1.0 - beta) * p).exp() * t),
        None,
    )?;
    let rhs = -integral / (2.0 * grid.volume());
    let mut rep = BoundReport::default();
    rep.push(BoundEntry::new(
        "negative_curvature",
        grid.r_g0(),
        Relation::Ge,
        rhs,
    ));
    if !cp.is_positive() {
        rep.notes.push(format!(
            "no positive solution (min u = {:.3e}); the bound is not implied here, flagged for inspection",
            cp.min_u
        ));
    }
    Ok(rep)
}

/// Running minimum of a stream of potential values.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunningMinimum {
    pub history: Vec<f64>,
}

impl RunningMinimum {
    pub fn push(&mut self, value: f64) {
        let m = self.history.last().map_or(value, |m| m.min(value));
        self.history.push(m);
    }

    pub fn current(&self) -> Option<f64> {
        self.history.last().copied()
    }

    /// Relative change of the minimum over the last `window` samples.
    pub fn relative_change(&self, window: usize) -> Option<f64> {
        if self.history.len() <= window {
            return None;
        }
        let before = self.history[self.history.len() - 1 - window];
        let now = *self.history.last()?;
        Some(((now - before) / before).abs())
    }
}
