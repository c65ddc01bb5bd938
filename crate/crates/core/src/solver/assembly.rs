use crate::error::{invalid, Result};
use crate::fields::{transform_source, SourceBundle};
use crate::geometry::{curvature_expression, ManifoldGrid, ScalarField};
use crate::krylov::wdot;

/// The operator `P_g u = Δ_g u + c u` for `g = e^{2φ} g0`, in flux form.
///
/// `Δ_g u = e^{-nφ} w^{-1} Σ_y e^{(n-2)φ_xy} κ_xy (u_y - u_x)` where `φ_xy`
/// is the face average, so `P_g` is exactly symmetric in the `dV_g`
/// inner product `Σ f h e^{nφ} w`.
#[derive(Debug, Clone)]
pub struct OperatorAssembly<'g> {
    grid: &'g ManifoldGrid,
    phi: ScalarField,
    coeff: ScalarField,
    weights: Vec<f64>,
    couplings: Vec<f64>,
    flux_diag: Vec<f64>,
    sources: Option<SourceBundle>,
}

impl<'g> OperatorAssembly<'g> {
    /// Assembles `P_g` with `c = -R_g/3 + F_g/6 - T^g/6`.
    ///
    /// On a synthetic grid the curvature term is the transformation law
    /// evaluated with the prescribed `R_{g0}`, i.e. `c = e^{-2φ} U`.
    pub fn assemble(
        grid: &'g ManifoldGrid,
        phi: &ScalarField,
        sources: &SourceBundle,
    ) -> Result<Self> {
        grid.check(phi)?;
        let r_g = curvature_expression(grid, phi, grid.r_g0())?;
        let f_g = sources.flux.norm_in_metric(grid, phi)?;
        let t_g = transform_source(grid, &sources.string, phi)?;
        let coeff: Vec<f64> = r_g
            .values()
            .iter()
            .zip(f_g.values())
            .zip(t_g.values())
            .map(|((r, f), t)| -r / 3.0 + f / 6.0 - t / 6.0)
            .collect();
        let mut asm = Self::from_coefficient(grid, phi, ScalarField::new(grid, coeff)?)?;
        asm.sources = Some(sources.clone());
        Ok(asm)
    }

    /// `Δ_g + c` for an arbitrary coefficient field.
    pub fn from_coefficient(
        grid: &'g ManifoldGrid,
        phi: &ScalarField,
        coeff: ScalarField,
    ) -> Result<Self> {
        grid.check(phi)?;
        grid.check(&coeff)?;
        let m = phi.max_abs();
        if m > crate::geometry::MAX_ABS_PHI {
            return Err(crate::error::Error::Overflow(m));
        }
        let n = grid.dim() as f64;
        let p = phi.values();
        let weights: Vec<f64> = p
            .iter()
            .zip(grid.weights())
            .map(|(p, w)| (n * p).exp() * w)
            .collect();
        let mut couplings = Vec::new();
        let mut flux_diag = vec![0.0; grid.len()];
        for x in 0..grid.len() {
            for (y, c) in grid.neighbors(x) {
                let k = ((n - 2.0) * 0.5 * (p[x] + p[y])).exp() * c;
                couplings.push(k);
                flux_diag[x] += k;
            }
        }
        Ok(OperatorAssembly {
            grid,
            phi: phi.clone(),
            coeff,
            weights,
            couplings,
            flux_diag,
            sources: None,
        })
    }

    /// Same operator with `c + delta`.
    pub fn with_shift(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.coeff = self.coeff.shifted(delta);
        out
    }

    pub fn grid(&self) -> &'g ManifoldGrid {
        self.grid
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    /// The sources used by [`assemble`](Self::assemble); `None` for a bare coefficient.
    pub fn sources(&self) -> Option<&SourceBundle> {
        self.sources.as_ref()
    }

    /// Zeroth-order coefficient `c`.
    pub fn coefficient(&self) -> &ScalarField {
        &self.coeff
    }

    /// `dV_g` quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `out = P_g u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        self.apply_laplacian(u, out);
        for ((o, c), u) in out.iter_mut().zip(self.coeff.values()).zip(u) {
            *o += c * u;
        }
    }

    /// `out = Δ_g u`.
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let mut idx = 0;
        for x in 0..self.len() {
            let mut acc = 0.0;
            for (y, _) in self.grid.neighbors(x) {
                acc += self.couplings[idx] * u[y];
                idx += 1;
            }
            out[x] = (acc - self.flux_diag[x] * u[x]) / self.weights[x];
        }
    }

    pub fn apply_field(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check(u)?;
        let mut out = vec![0.0; self.len()];
        self.apply(u.values(), &mut out);
        Ok(ScalarField::from_vec_unchecked(out))
    }

    pub fn laplacian_field(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check(u)?;
        let mut out = vec![0.0; self.len()];
        self.apply_laplacian(u.values(), &mut out);
        Ok(ScalarField::from_vec_unchecked(out))
    }

    /// Diagonal entries of `P_g`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.flux_diag
            .iter()
            .zip(&self.weights)
            .zip(self.coeff.values())
            .map(|((d, w), c)| -d / w + c)
            .collect()
    }

    /// `⟨f, h⟩_g = ∫ f h dV_g`.
    pub fn inner(&self, f: &[f64], h: &[f64]) -> f64 {
        wdot(&self.weights, f, h)
    }

    /// `∫ f dV_g`.
    pub fn integral(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// Relative asymmetry `|⟨f, Ph⟩ - ⟨Pf, h⟩| / (‖f‖‖Ph‖ + ‖Pf‖‖h‖)`.
    pub fn symmetry_defect(&self, f: &[f64], h: &[f64]) -> f64 {
        let mut pf = vec![0.0; self.len()];
        let mut ph = vec![0.0; self.len()];
        self.apply(f, &mut pf);
        self.apply(h, &mut ph);
        let a = self.inner(f, &ph);
        let b = self.inner(&pf, h);
        let nrm = |v: &[f64]| self.inner(v, v).sqrt();
        let scale = nrm(f) * nrm(&ph) + nrm(&pf) * nrm(h);
        if scale == 0.0 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    }

    /// `e^{2φ} P_g u`, the background-frame operator `M_{g0} u`.
    pub fn apply_background(&self, u: &ScalarField) -> Result<ScalarField> {
        let pu = self.apply_field(u)?;
        Ok(pu.zip_map(&self.phi, |v, p| (2.0 * p).exp() * v))
    }
}

/// `U = (2/3)(n-1)Δφ + (1/3)(n-1)(n-2)|∇φ|^2 - R_{g0}/3 + ℱ(φ) - (1/6)e^{2(1-β)φ}T`,
/// evaluated directly from its definition.
pub fn background_potential(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    sources: &SourceBundle,
) -> Result<ScalarField> {
    let n = grid.dim() as f64;
    let lap = grid.laplacian(phi)?;
    let g2 = grid.grad_norm_sq(phi)?;
    let flux = crate::fields::flux_energy(grid, &sources.flux, phi)?;
    let beta = sources.string.beta;
    grid.check(&sources.string.t_g0)?;
    let out = (0..grid.len())
        .map(|x| {
            let p = phi.values()[x];
            2.0 / 3.0 * (n - 1.0) * lap.values()[x] + (n - 1.0) * (n - 2.0) / 3.0 * g2.values()[x]
                - grid.r_g0() / 3.0
                + flux.values()[x]
                - (2.0 * (1.0 - beta) * p).exp() * sources.string.t_g0.values()[x] / 6.0
        })
        .collect();
    ScalarField::new(grid, out)
}

/// `M_{g0} u = Δ_{g0} u + (n-2)⟨∇φ, ∇u⟩ + U u` from the stencil operators.
pub fn background_operator(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    sources: &SourceBundle,
    u: &ScalarField,
) -> Result<ScalarField> {
    let n = grid.dim() as f64;
    let lap = grid.laplacian(u)?;
    let gi = grid.grad_inner(phi, u)?;
    let pot = background_potential(grid, phi, sources)?;
    let out = (0..grid.len())
        .map(|x| lap.values()[x] + (n - 2.0) * gi.values()[x] + pot.values()[x] * u.values()[x])
        .collect();
    ScalarField::new(grid, out)
}

pub(crate) fn check_g_newton(g_n: f64) -> Result<()> {
    if !(g_n > 0.0) || !g_n.is_finite() {
        return Err(invalid("G_N", format!("must be positive, got {g_n}")));
    }
    Ok(())
}
