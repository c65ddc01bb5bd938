//! Field-strength norms, the flux energy and the string source.
//!
//! Only the scalar norms `|F^(p)|^2_{g0}` of the form fields enter the
//! equations, so a [`FieldStrengthSet`] is a list of `(degree, norm)` pairs.
//! Under `g = e^{2φ} g0` a `p`-form norm picks up `e^{-2pφ}`; the string
//! source scales as `T^g = e^{-2βφ} T^{g0}`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{ManifoldGrid, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldStrength {
    pub degree: usize,
    /// `|F^(p)|^2_{g0}`, nonnegative.
    pub norm_sq: ScalarField,
}

/// Field strengths with distinct degrees `1 <= p <= n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldStrengthSet {
    entries: Vec<FieldStrength>,
}

impl FieldStrengthSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(grid: &ManifoldGrid, entries: Vec<FieldStrength>) -> Result<Self> {
        let mut seen = Vec::new();
        for e in &entries {
            grid.check(&e.norm_sq)?;
            if e.degree == 0 || e.degree > grid.dim() {
                return Err(invalid(
                    "degree",
                    format!(
                        "form degree must be in [1, {}], got {}",
                        grid.dim(),
                        e.degree
                    ),
                ));
            }
            if seen.contains(&e.degree) {
                return Err(invalid(
                    "degree",
                    format!("degree {} listed twice", e.degree),
                ));
            }
            if let Some(v) = e.norm_sq.values().iter().find(|v| **v < 0.0) {
                return Err(invalid(
                    "norm_sq",
                    format!("|F|^2 must be nonnegative, got {v}"),
                ));
            }
            seen.push(e.degree);
        }
        Ok(FieldStrengthSet { entries })
    }

    /// Single entry with a constant norm.
    pub fn constant(grid: &ManifoldGrid, degree: usize, norm_sq: f64) -> Result<Self> {
        Self::new(
            grid,
            vec![FieldStrength {
                degree,
                norm_sq: ScalarField::constant(grid, norm_sq),
            }],
        )
    }

    pub fn entries(&self) -> &[FieldStrength] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `F_g = Σ_p e^{-2pφ}|F^(p)|^2_{g0}`.
    pub fn norm_in_metric(&self, grid: &ManifoldGrid, phi: &ScalarField) -> Result<ScalarField> {
        grid.check(phi)?;
        let mut out = vec![0.0; grid.len()];
        for e in &self.entries {
            let p = e.degree as f64;
            for ((o, f), ph) in out.iter_mut().zip(e.norm_sq.values()).zip(phi.values()) {
                *o += (-2.0 * p * ph).exp() * f;
            }
        }
        ScalarField::new(grid, out)
    }

    /// `Σ_p ‖|F^(p)|^2_{g0}‖_{C^0}` entries, one per degree.
    pub fn sup_norms(&self) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .map(|e| (e.degree, e.norm_sq.max_abs()))
            .collect()
    }

    /// Pointwise `Σ_p |F^(p)|^2_{g0}`.
    pub fn total_g0(&self, grid: &ManifoldGrid) -> ScalarField {
        let mut out = ScalarField::zeros(grid);
        for e in &self.entries {
            out = out.zip_map(&e.norm_sq, |a, b| a + b);
        }
        out
    }
}

/// `ℱ(φ) = (1/6) Σ_p e^{2(1-p)φ} |F^(p)|^2_{g0}`, pointwise nonnegative.
pub fn flux_energy(
    grid: &ManifoldGrid,
    set: &FieldStrengthSet,
    phi: &ScalarField,
) -> Result<ScalarField> {
    grid.check(phi)?;
    let mut out = vec![0.0; grid.len()];
    for e in set.entries() {
        grid.check(&e.norm_sq)?;
        if e.degree > grid.dim() {
            return Err(invalid(
                "degree",
                format!("degree {} exceeds dimension {}", e.degree, grid.dim()),
            ));
        }
        let p = e.degree as f64;
        for ((o, f), ph) in out.iter_mut().zip(e.norm_sq.values()).zip(phi.values()) {
            *o += (2.0 * (1.0 - p) * ph).exp() * f / 6.0;
        }
    }
    ScalarField::new(grid, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SourceKind {
    Smooth,
    Gaussian {
        center: Vec<f64>,
        sigma: f64,
    },
    /// Smoothed indicator of a geodesic ball.
    Indicator {
        center: Vec<f64>,
        radius: f64,
        width: f64,
    },
}

/// `T_st^{g0}` with its conformal weight `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct StringSource {
    pub t_g0: ScalarField,
    pub beta: f64,
    pub kind: SourceKind,
}

impl StringSource {
    pub fn none(grid: &ManifoldGrid) -> Self {
        StringSource {
            t_g0: ScalarField::zeros(grid),
            beta: 0.0,
            kind: SourceKind::Smooth,
        }
    }

    pub fn smooth(grid: &ManifoldGrid, t_g0: ScalarField, beta: f64) -> Result<Self> {
        grid.check(&t_g0)?;
        check_beta(beta)?;
        Ok(StringSource {
            t_g0,
            beta,
            kind: SourceKind::Smooth,
        })
    }

    /// Normalized Gaussian `(2πσ^2)^{-n/2} exp(-r^2/(2σ^2))` in the
    /// background distance, scaled by `strength`.
    pub fn gaussian(
        grid: &ManifoldGrid,
        center: &[f64],
        sigma: f64,
        strength: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid(
                "sigma",
                format!("width must be positive, got {sigma}"),
            ));
        }
        check_beta(beta)?;
        let n = grid.dim() as f64;
        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-n / 2.0);
        let vals = (0..grid.len())
            .map(|x| {
                let r = grid.distance_to(x, center);
                strength * norm * (-r * r / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Ok(StringSource {
            t_g0: ScalarField::new(grid, vals)?,
            beta,
            kind: SourceKind::Gaussian {
                center: center.to_vec(),
                sigma,
            },
        })
    }

    /// `strength * (1 - tanh((r - radius)/width))/2`.
    pub fn indicator(
        grid: &ManifoldGrid,
        center: &[f64],
        radius: f64,
        width: f64,
        strength: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(radius > 0.0 && width > 0.0) {
            return Err(invalid(
                "radius",
                "indicator radius and width must be positive",
            ));
        }
        check_beta(beta)?;
        let vals = (0..grid.len())
            .map(|x| {
                let r = grid.distance_to(x, center);
                strength * 0.5 * (1.0 - ((r - radius) / width).tanh())
            })
            .collect();
        Ok(StringSource {
            t_g0: ScalarField::new(grid, vals)?,
            beta,
            kind: SourceKind::Indicator {
                center: center.to_vec(),
                radius,
                width,
            },
        })
    }

    /// True when `∫T^g dV_g` cannot depend on `φ`: `β = n/2`.
    pub fn is_integral_invariant(&self, n: usize) -> bool {
        (self.beta - n as f64 / 2.0).abs() < 1e-14
    }

    /// Whether `β` lies in the range the bounds are stated for.
    pub fn beta_in_standard_range(&self, n: usize) -> bool {
        (0.0..=n as f64 / 2.0).contains(&self.beta)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(invalid(
            "beta",
            format!("conformal weight must be >= 0, got {beta}"),
        ));
    }
    Ok(())
}

/// `T^g = e^{-2βφ} T^{g0}`.
pub fn transform_source(
    grid: &ManifoldGrid,
    src: &StringSource,
    phi: &ScalarField,
) -> Result<ScalarField> {
    grid.check(phi)?;
    grid.check(&src.t_g0)?;
    Ok(src
        .t_g0
        .zip_map(phi, |t, p| (-2.0 * src.beta * p).exp() * t))
}

/// Flux fields and the string source, bundled for assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBundle {
    pub flux: FieldStrengthSet,
    pub string: StringSource,
}

impl SourceBundle {
    pub fn none(grid: &ManifoldGrid) -> Self {
        SourceBundle {
            flux: FieldStrengthSet::empty(),
            string: StringSource::none(grid),
        }
    }

    pub fn new(flux: FieldStrengthSet, string: StringSource) -> Self {
        SourceBundle { flux, string }
    }

    pub fn with_flux(grid: &ManifoldGrid, flux: FieldStrengthSet) -> Self {
        SourceBundle {
            flux,
            string: StringSource::none(grid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceIntegralReport {
    /// `∫ T^g dV_g`.
    pub lhs: f64,
    /// `∫ T^{g0} dV_{g0}`.
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Compares `∫T^g dV_g` with `∫T^{g0} dV_{g0}` at relative tolerance `1e-8`.
pub fn source_integral_check(
    grid: &ManifoldGrid,
    src: &StringSource,
    phi: &ScalarField,
) -> Result<SourceIntegralReport> {
    let tg = transform_source(grid, src, phi)?;
    let lhs = grid.integrate(&tg, Some(phi))?;
    let rhs = grid.integrate(&src.t_g0, None)?;
    let scale = lhs.abs().max(rhs.abs());
    let pass = scale == 0.0 || (lhs - rhs).abs() <= 1e-8 * scale;
    Ok(SourceIntegralReport {
        lhs,
        rhs,
        ratio: if rhs != 0.0 { lhs / rhs } else { f64::NAN },
        pass,
    })
}
