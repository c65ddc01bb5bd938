use serde::Serialize;

use super::assembly::{check_g_newton, OperatorAssembly};
use super::critical::solve_critical_point_given;
use super::spectrum::{spectrum_with, SpectrumOptions, SpectrumReport, RESONANCE_TOL};
use crate::error::{Error, Result};
use crate::geometry::ScalarField;

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionTerm {
    pub lambda: f64,
    /// `∫ ψ_i dV_g`.
    pub mean: f64,
    /// `1/𝒱` summed over modes `0..=i`.
    pub partial_inverse: f64,
    /// Relative distance of the partial `𝒱` to the direct solve.
    pub relative_error: f64,
}

/// Truncated eigenfunction expansion of the potential and the warp factor.
#[derive(Debug, Clone)]
pub struct ExpansionReport {
    pub terms: Vec<ExpansionTerm>,
    /// `𝒱` from all retained modes.
    pub potential: f64,
    /// Direct-solve `𝔉` used as the reference.
    pub direct_potential: f64,
    pub alpha: f64,
    /// `(α/6) Σ (1/λ_i)(∫ψ_i) ψ_i`.
    pub v: ScalarField,
    pub v_max_error: f64,
}

impl ExpansionReport {
    pub fn relative_error(&self) -> f64 {
        self.terms.last().map_or(f64::NAN, |t| t.relative_error)
    }
}

/// Expands with the top `k` modes of `P_g` and compares with a direct solve.
pub fn expansion_potential(
    asm: &OperatorAssembly<'_>,
    g_n: f64,
    k: usize,
) -> Result<ExpansionReport> {
    let spec = spectrum_with(asm, k, &SpectrumOptions::default(), None)?;
    expansion_from_spectrum(asm, g_n, &spec)
}

pub fn expansion_from_spectrum(
    asm: &OperatorAssembly<'_>,
    g_n: f64,
    spec: &SpectrumReport,
) -> Result<ExpansionReport> {
    check_g_newton(g_n)?;
    if let Some(i) = spec
        .eigenvalues
        .iter()
        .position(|l| l.abs() < RESONANCE_TOL)
    {
        let psi = &spec.eigenfields[i];
        return Err(Error::Resonance {
            lambda0: spec.eigenvalues[i],
            obstruction: -asm.integral(psi.values()),
        });
    }
    let direct = solve_critical_point_given(asm, g_n, spec.eigenvalues[0], &spec.eigenfields[0])?;
    let mut sum = 0.0;
    let mut terms = Vec::with_capacity(spec.eigenvalues.len());
    for (l, psi) in spec.eigenvalues.iter().zip(&spec.eigenfields) {
        let m = asm.integral(psi.values());
        sum += 2.0 / 3.0 * g_n * g_n * m * m / l;
        let pot = 1.0 / sum;
        terms.push(ExpansionTerm {
            lambda: *l,
            mean: m,
            partial_inverse: sum,
            relative_error: ((pot - direct.potential) / direct.potential).abs(),
        });
    }
    let potential = 1.0 / sum;
    let alpha = 4.0 * g_n * potential;
    let mut v = vec![0.0; asm.len()];
    for (t, psi) in terms.iter().zip(&spec.eigenfields) {
        let c = alpha / 6.0 * t.mean / t.lambda;
        for (v, p) in v.iter_mut().zip(psi.values()) {
            *v += c * p;
        }
    }
    let v_max_error = v
        .iter()
        .zip(direct.v.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / direct.v.max_abs();
    Ok(ExpansionReport {
        terms,
        potential,
        direct_potential: direct.potential,
        alpha,
        v: ScalarField::from_vec_unchecked(v),
        v_max_error,
    })
}
