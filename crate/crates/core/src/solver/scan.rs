use serde::Serialize;

use super::assembly::OperatorAssembly;
use super::critical::solve_critical_point_given;
use super::spectrum::{principal_eigenpair, RESONANCE_TOL};
use crate::error::{invalid, Result};
use crate::geometry::ScalarField;

pub const LAMBDA_BRACKET_TOL: f64 = 1e-6;
pub const ALPHA_BRACKET_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub t: f64,
    pub lambda0: f64,
    /// `None` at resonant points, which are reported but not solved.
    pub alpha: Option<f64>,
    pub potential: Option<f64>,
    pub resonant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub lo: f64,
    pub hi: f64,
}

impl Crossing {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanTrace {
    pub flux_rate: f64,
    pub points: Vec<ScanPoint>,
    pub lambda_crossings: Vec<Crossing>,
    pub alpha_crossings: Vec<Crossing>,
    /// Largest `|λ₀(t) - λ₀(t₀) - C(t - t₀)/6|` over the schedule.
    pub shift_defect: f64,
}

struct Scanner<'a, 'g> {
    asm: &'a OperatorAssembly<'g>,
    rate: f64,
    g_n: f64,
    warm: Option<ScalarField>,
}

impl Scanner<'_, '_> {
    fn eval(&mut self, t: f64) -> Result<ScanPoint> {
        let shifted = self.asm.with_shift(self.rate * t / 6.0);
        let (lambda0, psi0) = principal_eigenpair(&shifted, self.warm.as_ref())?;
        let resonant = lambda0.abs() < RESONANCE_TOL;
        let (alpha, potential) = if resonant {
            (None, None)
        } else {
            let cp = solve_critical_point_given(&shifted, self.g_n, lambda0, &psi0)?;
            (Some(cp.alpha), Some(cp.potential))
        };
        self.warm = Some(psi0);
        Ok(ScanPoint {
            t,
            lambda0,
            alpha,
            potential,
            resonant,
        })
    }

    fn bisect(
        &mut self,
        mut lo: f64,
        mut hi: f64,
        tol: f64,
        key: impl Fn(&ScanPoint) -> Option<f64>,
    ) -> Result<Crossing> {
        let s_lo = self.eval(lo).map(|p| key(&p))?;
        let s_lo = s_lo.map_or(0.0, f64::signum);
        while hi - lo > tol {
            let width = hi - lo;
            let mut mid = 0.5 * (lo + hi);
            let mut p = self.eval(mid)?;
            if key(&p).is_none() {
                // Resonant midpoint: step off it.
                mid += 1e-3 * width;
                p = self.eval(mid)?;
            }
            match key(&p) {
                Some(v) if v.signum() == s_lo => lo = mid,
                Some(_) => hi = mid,
                None => break,
            }
        }
        Ok(Crossing { lo, hi })
    }
}

/// Ramps a constant flux term: `ℱ → ℱ + C t`, i.e. `c → c + C t / 6`.
///
/// Sign changes of `λ₀` are bracketed to `1e-6` in `t` and sign changes of
/// `α` to `1e-4`. Resonant schedule points are flagged, never solved.
pub fn family_scan(
    asm: &OperatorAssembly<'_>,
    schedule: &[f64],
    rate: f64,
    g_n: f64,
) -> Result<ScanTrace> {
    if !(rate >= 0.0) {
        return Err(invalid(
            "C",
            format!("flux ramp rate must be nonnegative, got {rate}"),
        ));
    }
    if schedule.is_empty() {
        return Err(invalid("schedule", "empty"));
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("schedule", "must be strictly increasing"));
    }
    let mut sc = Scanner {
        asm,
        rate,
        g_n,
        warm: None,
    };
    let mut points = Vec::with_capacity(schedule.len());
    for &t in schedule {
        points.push(sc.eval(t)?);
    }
    let l0 = points[0].lambda0;
    let t0 = points[0].t;
    let shift_defect = points
        .iter()
        .map(|p| (p.lambda0 - l0 - rate * (p.t - t0) / 6.0).abs())
        .fold(0.0, f64::max);

    let mut lambda_crossings = Vec::new();
    let mut alpha_crossings = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let sign = |x: f64| {
            if x.abs() < RESONANCE_TOL {
                0.0
            } else {
                x.signum()
            }
        };
        if sign(a.lambda0) * sign(b.lambda0) < 0.0
            || (sign(a.lambda0) != 0.0 && sign(b.lambda0) == 0.0)
        {
            lambda_crossings.push(sc.bisect(a.t, b.t, LAMBDA_BRACKET_TOL, |p| Some(p.lambda0))?);
        }
        let alpha_flip = match (a.alpha, b.alpha) {
            (Some(x), Some(y)) => x.signum() != y.signum(),
            (Some(_), None) | (None, Some(_)) => true,
            (None, None) => false,
        };
        if alpha_flip {
            alpha_crossings.push(sc.bisect(a.t, b.t, ALPHA_BRACKET_TOL, |p| p.alpha)?);
        }
    }
    // A resonant schedule point sits between the two brackets found on
    // either side; keep one entry per distinct crossing.
    dedup(&mut lambda_crossings, LAMBDA_BRACKET_TOL);
    dedup(&mut alpha_crossings, ALPHA_BRACKET_TOL);
    Ok(ScanTrace {
        flux_rate: rate,
        points,
        lambda_crossings,
        alpha_crossings,
        shift_defect,
    })
}

fn dedup(c: &mut Vec<Crossing>, tol: f64) {
    c.dedup_by(|b, a| (b.mid() - a.mid()).abs() <= 2.0 * tol);
}
