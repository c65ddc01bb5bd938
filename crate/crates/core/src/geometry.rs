//! Discretized compact backgrounds and conformal calculus on them.
//!
//! Two backgrounds are provided: the flat torus `T^n` (periodic Cartesian
//! grid, `2 <= n <= 6`) and the round two-sphere of radius `a` on a
//! staggered latitude-longitude grid whose first latitude sits at half a
//! cell from the pole.
//!
//! Every grid stores the same three pieces of data:
//!
//! * quadrature weights `w_x` approximating `sqrt|g0| dx`,
//! * a symmetric list of face conductances, so that the discrete Laplacian
//!   is `(Δf)_x = w_x^{-1} Σ_y κ_xy (f_y - f_x)`,
//! * a central-difference gradient stencil per axis.
//!
//! The flux form makes `Δ` exactly symmetric under `⟨f, h⟩ = Σ f h w` and
//! exactly annihilates constants. Both stencils are second order.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest `|φ|` accepted before exponentials `e^{nφ}` are considered unsafe.
pub const MAX_ABS_PHI: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Torus,
    Sphere2,
}

/// Whether `R_{g0}` is the true curvature of the grid or a prescribed
/// coefficient used only inside the operator's zeroth-order term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum CurvatureMode {
    Geometric,
    Synthetic { r_g0: f64 },
}

/// Construction parameters accepted by [`build_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: ManifoldKind,
    pub n: usize,
    /// Nodes per axis (torus) or `[n_theta, n_phi]` (sphere).
    pub resolution: Vec<usize>,
    /// Period lengths (torus only).
    pub lengths: Vec<f64>,
    /// Radius (sphere only).
    pub radius: f64,
    pub mode: CurvatureMode,
}

impl GridSpec {
    pub fn torus(lengths: &[f64], resolution: usize) -> Self {
        GridSpec {
            kind: ManifoldKind::Torus,
            n: lengths.len(),
            resolution: vec![resolution; lengths.len()],
            lengths: lengths.to_vec(),
            radius: 0.0,
            mode: CurvatureMode::Geometric,
        }
    }

    pub fn sphere(radius: f64, n_theta: usize, n_phi: usize) -> Self {
        GridSpec {
            kind: ManifoldKind::Sphere2,
            n: 2,
            resolution: vec![n_theta, n_phi],
            lengths: Vec::new(),
            radius,
            mode: CurvatureMode::Geometric,
        }
    }

    pub fn synthetic(mut self, r_g0: f64) -> Self {
        self.mode = CurvatureMode::Synthetic { r_g0 };
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    Torus {
        lengths: Vec<f64>,
        shape: Vec<usize>,
        strides: Vec<usize>,
    },
    Sphere {
        radius: f64,
        n_theta: usize,
        n_phi: usize,
    },
}

/// One directional derivative: `(f[plus] - f[minus]) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DiffStencil {
    pub minus: usize,
    pub plus: usize,
    pub scale: f64,
}

/// A discretized background `(M, g0)`. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldGrid {
    kind: ManifoldKind,
    n: usize,
    layout: Layout,
    mode: CurvatureMode,
    coords: Vec<f64>,
    weights: Vec<f64>,
    // Compressed adjacency: neighbors of node x are nbr[offsets[x]..offsets[x+1]].
    offsets: Vec<usize>,
    nbr: Vec<usize>,
    cond: Vec<f64>,
    grad: Vec<DiffStencil>,
}

/// Builds a grid from a [`GridSpec`].
pub fn build_grid(spec: &GridSpec) -> Result<ManifoldGrid> {
    match spec.kind {
        ManifoldKind::Torus => {
            if spec.resolution.len() != spec.n && spec.resolution.len() != 1 {
                return Err(invalid(
                    "resolution",
                    format!(
                        "expected 1 or {} entries, got {}",
                        spec.n,
                        spec.resolution.len()
                    ),
                ));
            }
            let res: Vec<usize> = if spec.resolution.len() == 1 {
                vec![spec.resolution[0]; spec.n]
            } else {
                spec.resolution.clone()
            };
            if spec.lengths.len() != spec.n {
                return Err(invalid(
                    "lengths",
                    format!(
                        "expected {} period lengths, got {}",
                        spec.n,
                        spec.lengths.len()
                    ),
                ));
            }
            ManifoldGrid::torus_with_mode(&spec.lengths, &res, spec.mode)
        }
        ManifoldKind::Sphere2 => {
            if spec.n != 2 {
                return Err(Error::UnsupportedGrid(format!(
                    "sphere2 requires n = 2, got n = {}",
                    spec.n
                )));
            }
            if spec.resolution.len() != 2 {
                return Err(invalid("resolution", "sphere2 needs [n_theta, n_phi]"));
            }
            if let CurvatureMode::Synthetic { .. } = spec.mode {
                return Err(Error::UnsupportedGrid(
                    "synthetic mode is only available on the torus".into(),
                ));
            }
            ManifoldGrid::sphere(spec.radius, spec.resolution[0], spec.resolution[1])
        }
    }
}

impl ManifoldGrid {
    /// Flat torus with the given period lengths and nodes per axis.
    pub fn torus(lengths: &[f64], resolution: usize) -> Result<Self> {
        Self::torus_with_mode(
            lengths,
            &vec![resolution; lengths.len()],
            CurvatureMode::Geometric,
        )
    }

    /// Flat torus carrying a prescribed constant `R_{g0}` for the
    /// zeroth-order coefficient only.
    pub fn synthetic_torus(lengths: &[f64], resolution: usize, r_g0: f64) -> Result<Self> {
        Self::torus_with_mode(
            lengths,
            &vec![resolution; lengths.len()],
            CurvatureMode::Synthetic { r_g0 },
        )
    }

    fn torus_with_mode(lengths: &[f64], res: &[usize], mode: CurvatureMode) -> Result<Self> {
        let n = lengths.len();
        if !(2..=6).contains(&n) {
            return Err(Error::UnsupportedGrid(format!(
                "torus dimension must be in [2, 6], got {n}"
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(invalid(
                "lengths",
                format!("period lengths must be positive, got {l}"),
            ));
        }
        if let Some(r) = res.iter().find(|r| **r < 4) {
            return Err(invalid(
                "resolution",
                format!("need at least 4 nodes per axis, got {r}"),
            ));
        }
        if n >= 5 && res.iter().any(|&r| r > 8) {
            return Err(invalid(
                "resolution",
                format!("torus with n = {n} is limited to 8 nodes per axis"),
            ));
        }
        if let CurvatureMode::Synthetic { r_g0 } = mode {
            if !r_g0.is_finite() {
                return Err(invalid("r_g0", "synthetic curvature must be finite"));
            }
        }

        let mut strides = vec![1usize; n];
        for a in 1..n {
            strides[a] = strides[a - 1] * res[a - 1];
        }
        let total: usize = res.iter().product();
        let h: Vec<f64> = lengths
            .iter()
            .zip(res)
            .map(|(l, r)| l / *r as f64)
            .collect();
        let cell: f64 = h.iter().product();

        let mut coords = Vec::with_capacity(total * n);
        let mut offsets = Vec::with_capacity(total + 1);
        let mut nbr = Vec::with_capacity(total * 2 * n);
        let mut cond = Vec::with_capacity(total * 2 * n);
        let mut grad = Vec::with_capacity(total * n);
        offsets.push(0);
        let mut idx = vec![0usize; n];
        for node in 0..total {
            let mut rem = node;
            for a in 0..n {
                idx[a] = rem % res[a];
                rem /= res[a];
                coords.push(idx[a] as f64 * h[a]);
            }
            for a in 0..n {
                let up = (idx[a] + 1) % res[a];
                let down = (idx[a] + res[a] - 1) % res[a];
                let plus = node - idx[a] * strides[a] + up * strides[a];
                let minus = node - idx[a] * strides[a] + down * strides[a];
                let c = cell / (h[a] * h[a]);
                nbr.push(plus);
                cond.push(c);
                nbr.push(minus);
                cond.push(c);
                grad.push(DiffStencil {
                    minus,
                    plus,
                    scale: 0.5 / h[a],
                });
            }
            offsets.push(nbr.len());
        }

        Ok(ManifoldGrid {
            kind: ManifoldKind::Torus,
            n,
            layout: Layout::Torus {
                lengths: lengths.to_vec(),
                shape: res.to_vec(),
                strides,
            },
            mode,
            coords,
            weights: vec![cell; total],
            offsets,
            nbr,
            cond,
            grad,
        })
    }

    /// Round sphere of radius `a` on an `n_theta x n_phi` staggered grid.
    /// `n_phi` must be even so that every pole row has an antipodal partner.
    pub fn sphere(radius: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        if n_theta < 4 || n_phi < 4 {
            return Err(invalid(
                "resolution",
                format!("need at least 4 nodes per axis, got ({n_theta}, {n_phi})"),
            ));
        }
        if !n_phi.is_multiple_of(2) {
            return Err(invalid(
                "resolution",
                format!("n_phi must be even, got {n_phi}"),
            ));
        }
        let dt = PI / n_theta as f64;
        let dp = 2.0 * PI / n_phi as f64;
        let total = n_theta * n_phi;
        let at = |j: usize, k: usize| j * n_phi + k;
        let half = n_phi / 2;

        let mut coords = Vec::with_capacity(2 * total);
        let mut weights = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(total + 1);
        let mut nbr = Vec::with_capacity(4 * total);
        let mut cond = Vec::with_capacity(4 * total);
        let mut grad = Vec::with_capacity(2 * total);
        offsets.push(0);
        for j in 0..n_theta {
            let theta = (j as f64 + 0.5) * dt;
            let (s, lo, hi) = (theta.sin(), theta - 0.5 * dt, theta + 0.5 * dt);
            // Exact spherical-band cell area.
            let area = radius * radius * (lo.cos() - hi.cos()) * dp;
            for k in 0..n_phi {
                coords.push(theta);
                coords.push(k as f64 * dp);
                weights.push(area);
                let east = at(j, (k + 1) % n_phi);
                let west = at(j, (k + n_phi - 1) % n_phi);
                let c_lon = dt / (s * dp);
                nbr.push(east);
                cond.push(c_lon);
                nbr.push(west);
                cond.push(c_lon);
                if j + 1 < n_theta {
                    nbr.push(at(j + 1, k));
                    cond.push(hi.sin() * dp / dt);
                }
                if j > 0 {
                    nbr.push(at(j - 1, k));
                    cond.push(lo.sin() * dp / dt);
                }
                offsets.push(nbr.len());

                // Central theta difference; across a pole the ghost value is
                // the antipodal node of the same latitude row.
                let north = if j == 0 {
                    at(0, (k + half) % n_phi)
                } else {
                    at(j - 1, k)
                };
                let south = if j + 1 == n_theta {
                    at(j, (k + half) % n_phi)
                } else {
                    at(j + 1, k)
                };
                grad.push(DiffStencil {
                    minus: north,
                    plus: south,
                    scale: 0.5 / (dt * radius),
                });
                grad.push(DiffStencil {
                    minus: west,
                    plus: east,
                    scale: 0.5 / (dp * radius * s),
                });
            }
        }

        Ok(ManifoldGrid {
            kind: ManifoldKind::Sphere2,
            n: 2,
            layout: Layout::Sphere {
                radius,
                n_theta,
                n_phi,
            },
            mode: CurvatureMode::Geometric,
            coords,
            weights,
            offsets,
            nbr,
            cond,
            grad,
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    /// Manifold dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mode(&self) -> CurvatureMode {
        self.mode
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.mode, CurvatureMode::Synthetic { .. })
    }

    /// Constant background scalar curvature: 0 on the torus, `2/a^2` on the
    /// sphere, or the prescribed value in synthetic mode.
    pub fn r_g0(&self) -> f64 {
        match (self.mode, &self.layout) {
            (CurvatureMode::Synthetic { r_g0 }, _) => r_g0,
            (_, Layout::Torus { .. }) => 0.0,
            (_, Layout::Sphere { radius, .. }) => 2.0 / (radius * radius),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ w_x`, the discrete `vol_{g0}(M)`.
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Closed-form `vol_{g0}(M)`.
    pub fn exact_volume(&self) -> f64 {
        match &self.layout {
            Layout::Torus { lengths, .. } => lengths.iter().product(),
            Layout::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        }
    }

    /// Coordinates of a node: `x_1..x_n` on the torus, `(θ, ϕ)` on the sphere.
    pub fn coords(&self, node: usize) -> &[f64] {
        &self.coords[node * self.n..(node + 1) * self.n]
    }

    /// Period lengths (torus) or `None`.
    pub fn lengths(&self) -> Option<&[f64]> {
        match &self.layout {
            Layout::Torus { lengths, .. } => Some(lengths),
            Layout::Sphere { .. } => None,
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match &self.layout {
            Layout::Sphere { radius, .. } => Some(*radius),
            Layout::Torus { .. } => None,
        }
    }

    /// Nodes per axis.
    pub fn shape(&self) -> Vec<usize> {
        match &self.layout {
            Layout::Torus { shape, .. } => shape.clone(),
            Layout::Sphere { n_theta, n_phi, .. } => vec![*n_theta, *n_phi],
        }
    }

    /// Smallest grid spacing in coordinate units.
    pub fn spacing(&self) -> f64 {
        match &self.layout {
            Layout::Torus { lengths, shape, .. } => lengths
                .iter()
                .zip(shape)
                .map(|(l, s)| l / *s as f64)
                .fold(f64::INFINITY, f64::min),
            Layout::Sphere {
                radius, n_theta, ..
            } => radius * PI / *n_theta as f64,
        }
    }

    /// Embedding of a sphere node in `R^3`, or `None` on the torus.
    pub fn embedding(&self, node: usize) -> Option<[f64; 3]> {
        let Layout::Sphere { radius, .. } = &self.layout else {
            return None;
        };
        let c = self.coords(node);
        let (st, ct) = c[0].sin_cos();
        let (sp, cp) = c[1].sin_cos();
        Some([radius * st * cp, radius * st * sp, radius * ct])
    }

    /// Geodesic (sphere) or periodic Euclidean (torus) distance between a
    /// node and a point given in grid coordinates.
    pub fn distance_to(&self, node: usize, center: &[f64]) -> f64 {
        match &self.layout {
            Layout::Torus { lengths, .. } => {
                let c = self.coords(node);
                c.iter()
                    .zip(center)
                    .zip(lengths)
                    .map(|((x, y), l)| {
                        let d = (x - y).rem_euclid(*l);
                        let d = d.min(l - d);
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            Layout::Sphere { radius, .. } => {
                let c = self.coords(node);
                let (t0, p0) = (center[0], center[1]);
                let cosd = c[0].cos() * t0.cos() + c[0].sin() * t0.sin() * (c[1] - p0).cos();
                radius * cosd.clamp(-1.0, 1.0).acos()
            }
        }
    }

    pub(crate) fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[node]..self.offsets[node + 1];
        self.nbr[r.clone()]
            .iter()
            .copied()
            .zip(self.cond[r].iter().copied())
    }

    pub(crate) fn grad_stencils(&self, node: usize) -> &[DiffStencil] {
        &self.grad[node * self.n..(node + 1) * self.n]
    }

    pub(crate) fn check(&self, f: &ScalarField) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Note attached to high-dimensional tori, `None` otherwise.
    pub fn memory_warning(&self) -> Option<String> {
        (self.n >= 5).then(|| {
            format!(
                "torus n = {} uses {} nodes; solves scale with this count",
                self.n,
                self.len()
            )
        })
    }

    /// Discrete `Δ_{g0} f` (non-positive spectrum).
    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        let v = f.values();
        let out = (0..self.len())
            .map(|x| {
                let flux: f64 = self.neighbors(x).map(|(y, c)| c * (v[y] - v[x])).sum();
                flux / self.weights[x]
            })
            .collect();
        Ok(ScalarField::from_vec_unchecked(out))
    }

    /// Pointwise `⟨∇f, ∇h⟩_{g0}`.
    pub fn grad_inner(&self, f: &ScalarField, h: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        self.check(h)?;
        let (a, b) = (f.values(), h.values());
        let out = (0..self.len())
            .map(|x| {
                self.grad_stencils(x)
                    .iter()
                    .map(|s| {
                        (a[s.plus] - a[s.minus]) * (b[s.plus] - b[s.minus]) * s.scale * s.scale
                    })
                    .sum()
            })
            .collect();
        Ok(ScalarField::from_vec_unchecked(out))
    }

    /// Pointwise `|∇f|^2_{g0}`.
    pub fn grad_norm_sq(&self, f: &ScalarField) -> Result<ScalarField> {
        self.grad_inner(f, f)
    }

    /// `∫ f dV_{g0}`, or `∫ f dV_g = ∫ f e^{nφ} dV_{g0}` when `phi` is given.
    pub fn integrate(&self, f: &ScalarField, phi: Option<&ScalarField>) -> Result<f64> {
        self.check(f)?;
        match phi {
            None => Ok(f
                .values()
                .iter()
                .zip(&self.weights)
                .map(|(v, w)| v * w)
                .sum()),
            Some(phi) => {
                self.check(phi)?;
                let n = self.n as f64;
                Ok(f.values()
                    .iter()
                    .zip(phi.values())
                    .zip(&self.weights)
                    .map(|((v, p), w)| v * (n * p).exp() * w)
                    .sum())
            }
        }
    }

    /// `⟨f, h⟩ = Σ f h w`.
    pub fn inner(&self, f: &ScalarField, h: &ScalarField) -> Result<f64> {
        self.check(f)?;
        self.check(h)?;
        Ok(f.values()
            .iter()
            .zip(h.values())
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum())
    }
}

/// Per-node real values over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps values after checking node count and finiteness.
    pub fn new(grid: &ManifoldGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ScalarField { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ScalarField { values }
    }

    pub fn constant(grid: &ManifoldGrid, c: f64) -> Self {
        ScalarField {
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: &ManifoldGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every node; the closure receives the node coordinates.
    pub fn from_fn(grid: &ManifoldGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        ScalarField {
            values: (0..grid.len()).map(|x| f(grid.coords(x))).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid-max norm `‖f‖_{C^0}`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(
            self.len(),
            other.len(),
            "zip_map on fields of different length"
        );
        ScalarField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn shifted(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| v * s)
    }
}

/// A conformal factor normalized to a fixed warped volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    pub phi: ScalarField,
    /// Target `∫ e^{nφ} dV_{g0}`.
    pub volume: f64,
    /// Constant that was added to the input factor.
    pub shift: f64,
}

/// Shifts `φ` by the constant `c = ln(A / ∫e^{nφ}) / n` so that
/// `∫ e^{n(φ+c)} dV_{g0} = A`.
pub fn normalize_volume(grid: &ManifoldGrid, phi: &ScalarField, a: f64) -> Result<ConformalMetric> {
    grid.check(phi)?;
    if !(a > 0.0) || !a.is_finite() {
        return Err(invalid(
            "A",
            format!("target volume must be positive, got {a}"),
        ));
    }
    let m = phi.max_abs();
    if m > MAX_ABS_PHI {
        return Err(Error::Overflow(m));
    }
    let n = grid.dim() as f64;
    // Factor out the maximum so the sum cannot overflow.
    let top = phi.max();
    let scaled: f64 = phi
        .values()
        .iter()
        .zip(grid.weights())
        .map(|(p, w)| (n * (p - top)).exp() * w)
        .sum();
    let shift = ((a / scaled).ln()) / n - top;
    Ok(ConformalMetric {
        phi: phi.shifted(shift),
        volume: a,
        shift,
    })
}

/// `R_g = e^{-2φ}(-2(n-1)Δφ - (n-1)(n-2)|∇φ|^2 + R_{g0})`.
pub fn conformal_scalar_curvature(grid: &ManifoldGrid, phi: &ScalarField) -> Result<ScalarField> {
    if grid.is_synthetic() {
        return Err(Error::SyntheticRefused("conformal_scalar_curvature"));
    }
    curvature_expression(grid, phi, grid.r_g0())
}

/// The scalar-curvature transformation law with an arbitrary constant
/// `R_{g0}`; shared by the geometric evaluation and the synthetic coefficient.
pub(crate) fn curvature_expression(
    grid: &ManifoldGrid,
    phi: &ScalarField,
    r_g0: f64,
) -> Result<ScalarField> {
    let n = grid.dim() as f64;
    let lap = grid.laplacian(phi)?;
    let g2 = grid.grad_norm_sq(phi)?;
    let out = phi
        .values()
        .iter()
        .zip(lap.values())
        .zip(g2.values())
        .map(|((p, l), g)| {
            (-2.0 * p).exp() * (-2.0 * (n - 1.0) * l - (n - 1.0) * (n - 2.0) * g + r_g0)
        })
        .collect();
    Ok(ScalarField::from_vec_unchecked(out))
}

/// `∫ R_g dV_g` through the integrated-by-parts form
/// `(n-1)(n-2)∫e^{(n-2)φ}|∇φ|^2 dV_{g0} + R_{g0}∫e^{(n-2)φ} dV_{g0}`.
pub fn total_scalar_curvature(grid: &ManifoldGrid, phi: &ScalarField) -> Result<f64> {
    if grid.is_synthetic() {
        return Err(Error::SyntheticRefused("total_scalar_curvature"));
    }
    let n = grid.dim() as f64;
    let g2 = grid.grad_norm_sq(phi)?;
    let e = phi.map(|p| ((n - 2.0) * p).exp());
    let grad_term = grid.integrate(&e.zip_map(&g2, |a, b| a * b), None)?;
    let base = grid.integrate(&e, None)?;
    Ok((n - 1.0) * (n - 2.0) * grad_term + grid.r_g0() * base)
}

/// `∫ R_g dV_g` by direct quadrature of [`conformal_scalar_curvature`].
pub fn total_scalar_curvature_direct(grid: &ManifoldGrid, phi: &ScalarField) -> Result<f64> {
    let r = conformal_scalar_curvature(grid, phi)?;
    grid.integrate(&r, Some(phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus2(res: usize) -> ManifoldGrid {
        ManifoldGrid::torus(&[2.0 * PI, 2.0 * PI], res).unwrap()
    }

    #[test]
    fn torus_counts_and_weights() {
        let g = torus2(32);
        assert_eq!(g.len(), 1024);
        let h = 2.0 * PI / 32.0;
        assert!(g.weights().iter().all(|w| (w - h * h).abs() < 1e-15));
        let g4 = ManifoldGrid::torus(&[1.0; 4], 8).unwrap();
        assert_eq!(g4.len(), 4096);
    }

    #[test]
    fn sphere_area() {
        let g = ManifoldGrid::sphere(1.0, 32, 64).unwrap();
        assert!((g.volume() - 4.0 * PI).abs() / (4.0 * PI) < 1e-3);
        assert!(g.weights().iter().all(|w| *w > 0.0));
        assert_eq!(g.r_g0(), 2.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ManifoldGrid::torus(&[1.0], 8).is_err());
        assert!(ManifoldGrid::torus(&[1.0; 7], 4).is_err());
        assert!(ManifoldGrid::torus(&[1.0, -1.0], 8).is_err());
        assert!(ManifoldGrid::torus(&[1.0, 1.0], 3).is_err());
        assert!(ManifoldGrid::torus(&[1.0; 5], 16).is_err());
        assert!(ManifoldGrid::sphere(0.0, 8, 16).is_err());
        assert!(ManifoldGrid::sphere(1.0, 8, 15).is_err());
        let mut spec = GridSpec::sphere(1.0, 8, 16);
        spec.n = 3;
        assert!(matches!(build_grid(&spec), Err(Error::UnsupportedGrid(_))));
    }

    #[test]
    fn laplacian_annihilates_constants_exactly() {
        for g in [torus2(16), ManifoldGrid::sphere(1.3, 12, 24).unwrap()] {
            let l = g.laplacian(&ScalarField::constant(&g, 3.7)).unwrap();
            assert!(l.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn torus_cosine_is_eigenfunction() {
        let g = torus2(32);
        let f = ScalarField::from_fn(&g, |x| x[0].cos());
        let l = g.laplacian(&f).unwrap();
        let h = 2.0 * PI / 32.0;
        let err = l.zip_map(&f, |a, b| a + b).max_abs();
        assert!(err < h * h, "err {err}");
    }

    #[test]
    fn sphere_l1_harmonic() {
        let g = ManifoldGrid::sphere(1.0, 32, 64).unwrap();
        let f = ScalarField::from_fn(&g, |c| c[0].cos());
        let l = g.laplacian(&f).unwrap();
        let err = l.zip_map(&f, |a, b| a + 2.0 * b).max_abs();
        let h = PI / 32.0;
        assert!(err < h * h, "err {err}");
    }

    #[test]
    fn grad_inner_examples() {
        let g = torus2(32);
        let c1 = ScalarField::from_fn(&g, |x| x[0].cos());
        let c2 = ScalarField::from_fn(&g, |x| x[1].cos());
        let h = 2.0 * PI / 32.0;
        let s = g.grad_inner(&c1, &c1).unwrap();
        let exact = ScalarField::from_fn(&g, |x| x[0].sin().powi(2));
        assert!(s.zip_map(&exact, |a, b| a - b).max_abs() < h * h);
        assert!(g.grad_inner(&c1, &c2).unwrap().max_abs() < 1e-14);
        let k = ScalarField::constant(&g, 2.0);
        assert!(g
            .grad_inner(&k, &c1)
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn integrate_constants() {
        let g = torus2(16);
        let one = ScalarField::constant(&g, 1.0);
        assert!((g.integrate(&one, None).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
        let s = ManifoldGrid::sphere(1.0, 16, 32).unwrap();
        let one = ScalarField::constant(&s, 1.0);
        assert!((s.integrate(&one, None).unwrap() - 4.0 * PI).abs() < 4.0 * PI * 1e-3);
    }

    #[test]
    fn normalize_volume_examples() {
        let g = torus2(16);
        let zero = ScalarField::zeros(&g);
        let m = normalize_volume(&g, &zero, 4.0 * PI * PI).unwrap();
        assert!(m.shift.abs() < 1e-14);
        let m = normalize_volume(&g, &zero, 8.0 * PI * PI).unwrap();
        assert!((m.shift - 2f64.ln() / 2.0).abs() < 1e-14);
        assert!((m.shift - 0.34657).abs() < 1e-5);
        let big = ScalarField::constant(&g, 301.0);
        assert!(matches!(
            normalize_volume(&g, &big, 1.0),
            Err(Error::Overflow(_))
        ));
        assert!(normalize_volume(&g, &zero, 0.0).is_err());
    }

    #[test]
    fn curvature_of_flat_and_round_backgrounds() {
        let s = ManifoldGrid::sphere(1.0, 16, 32).unwrap();
        let r = conformal_scalar_curvature(&s, &ScalarField::zeros(&s)).unwrap();
        assert!(r.values().iter().all(|v| *v == 2.0));
        let t = torus2(16);
        let r = conformal_scalar_curvature(&t, &ScalarField::zeros(&t)).unwrap();
        assert!(r.values().iter().all(|v| *v == 0.0));
        assert!(
            (total_scalar_curvature(&s, &ScalarField::zeros(&s)).unwrap() - 8.0 * PI).abs() < 1e-12
        );
        assert_eq!(
            total_scalar_curvature(&t, &ScalarField::zeros(&t)).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_factor_rescales_curvature() {
        let s = ManifoldGrid::sphere(2.0, 12, 24).unwrap();
        let c = 0.3;
        let r = conformal_scalar_curvature(&s, &ScalarField::constant(&s, c)).unwrap();
        let expect = (-2.0 * c).exp() * s.r_g0();
        assert!(r.values().iter().all(|v| *v == expect));
    }

    #[test]
    fn synthetic_refuses_curvature() {
        let g = ManifoldGrid::synthetic_torus(&[1.0, 1.0], 8, 2.0).unwrap();
        assert_eq!(g.r_g0(), 2.0);
        let z = ScalarField::zeros(&g);
        assert!(matches!(
            conformal_scalar_curvature(&g, &z),
            Err(Error::SyntheticRefused(_))
        ));
        assert!(total_scalar_curvature(&g, &z).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = torus2(8);
        let f = ScalarField::from_vec_unchecked(vec![0.0; 3]);
        assert_eq!(
            g.laplacian(&f).unwrap_err(),
            Error::ShapeMismatch {
                expected: 64,
                got: 3
            }
        );
        assert!(ScalarField::new(&g, vec![f64::NAN; 64]).is_err());
    }
}
