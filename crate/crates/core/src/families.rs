//! Worked families on `R^n`: the γ-family of conformally flat metrics, the
//! standard bubble and Gaussian string sources, evaluated with 1-D radial
//! quadrature. Also a seeded sampler of smooth random conformal factors.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::geometry::{normalize_volume, ManifoldGrid, ManifoldKind, ScalarField};
use crate::quadrature::{interval, tanh_sinh};

/// Relative tolerance handed to the radial quadrature.
pub const QUAD_TOL: f64 = 1e-13;
/// Default outer radius for sampled profiles.
pub const DEFAULT_R_MAX: f64 = 50.0;
/// Cutoffs start at this fraction of `r_max`.
pub const CUTOFF_FRACTION: f64 = 0.8;

/// `vol(S^k)`, by the two-step recursion from `S^0` and `S^1`.
pub fn sphere_volume(k: usize) -> f64 {
    use std::f64::consts::PI;
    let (mut v, mut d) = if k.is_multiple_of(2) { (2.0, 0) } else { (2.0 * PI, 1) };
    while d < k {
        v *= 2.0 * PI / (d as f64 + 1.0);
        d += 2;
    }
    v
}

/// Scalar curvature of `e^{2φ}δ` for radial `φ`, from `φ'`, `φ''` and `e^{-2φ}`.
pub fn radial_scalar_curvature(n: usize, r: f64, dphi: f64, ddphi: f64, exp_m2phi: f64) -> f64 {
    let nf = n as f64;
    // At the origin φ'/r → φ''(0).
    let lap = if r == 0.0 {
        nf * ddphi
    } else {
        ddphi + (nf - 1.0) * dphi / r
    };
    exp_m2phi * (-2.0 * (nf - 1.0) * lap - (nf - 1.0) * (nf - 2.0) * dphi * dphi)
}

/// Sampled radial function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub n: usize,
    pub r: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn sample(n: usize, r_max: f64, samples: usize, f: impl Fn(f64) -> f64) -> Self {
        let m = samples.max(2);
        let r: Vec<f64> = (0..m).map(|j| r_max * j as f64 / (m - 1) as f64).collect();
        let values = r.iter().map(|&x| f(x)).collect();
        RadialProfile { n, r, values }
    }

    /// Writes an `r,value` table.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "r,value")?;
        for (r, v) in self.r.iter().zip(&self.values) {
            writeln!(w, "{r:.17e},{v:.17e}")?;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `g = (a^2 + r^2)^{-γ} δ` on `R^n`, with `a` fixed by the total volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaFamily {
    pub n: usize,
    pub gamma: f64,
    /// Target volume `A`.
    pub volume: f64,
    pub a: f64,
    /// `∫_0^∞ s^{n-1} (1+s^2)^{-nγ/2} ds`.
    pub radial_integral: f64,
    pub quadrature_error: f64,
}

fn check_dim(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(invalid("n", format!("need n >= {min}, got {n}")));
    }
    Ok(())
}

/// Solves for `a(γ)` from the volume constraint.
pub fn gamma_family(n: usize, gamma: f64, volume: f64) -> Result<GammaFamily> {
    check_dim(n, 2)?;
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(invalid(
            "gamma",
            format!("the normalization diverges unless gamma > 1, got {gamma}"),
        ));
    }
    if !(volume > 0.0) || !volume.is_finite() {
        return Err(invalid(
            "A",
            format!("volume must be positive, got {volume}"),
        ));
    }
    let nf = n as f64;
    let p = nf * gamma;
    // s = t/c turns the slowly decaying tail into an integrable endpoint
    // singularity c^{nγ-n-1}.
    let q = tanh_sinh(
        |t, c| t.powi(n as i32 - 1) * c.powf(p - nf - 1.0) / (c * c + t * t).powf(p / 2.0),
        QUAD_TOL,
    );
    let a = (sphere_volume(n - 1) * q.value / volume).powf(1.0 / (nf * (gamma - 1.0)));
    Ok(GammaFamily {
        n,
        gamma,
        volume,
        a,
        radial_integral: q.value,
        quadrature_error: q.error_estimate,
    })
}

/// Contributions to `∫ (a^2+r^2)^{-nγ/2} dx` on a ball with a smooth cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffSplit {
    pub r_max: f64,
    pub r_cut: f64,
    pub with_cutoff: f64,
    pub full: f64,
    /// `full - with_cutoff`.
    pub cutoff_contribution: f64,
}

impl GammaFamily {
    /// `R_g(r)` in closed form.
    pub fn curvature(&self, r: f64) -> f64 {
        let (n, g) = (self.n as f64, self.gamma);
        let s = self.a * self.a + r * r;
        s.powf(g)
            * (2.0 * (n - 1.0) * g * (n / s - 2.0 * r * r / (s * s))
                - g * g * (n - 2.0) * (n - 1.0) * r * r / (s * s))
    }

    /// `R_g(0) = 2(n-1)nγ a^{2(γ-1)}`.
    pub fn curvature_origin(&self) -> f64 {
        let n = self.n as f64;
        2.0 * (n - 1.0) * n * self.gamma * self.a.powf(2.0 * (self.gamma - 1.0))
    }

    pub fn phi(&self, r: f64) -> f64 {
        -0.5 * self.gamma * (self.a * self.a + r * r).ln()
    }

    /// `sup_{r ≤ ρ} |R_g|`, sampled.
    pub fn sup_curvature(&self, rho: f64) -> f64 {
        RadialProfile::sample(self.n, rho, 4001, |r| self.curvature(r)).max_abs()
    }

    pub fn curvature_profile(&self, r_max: f64, samples: usize) -> RadialProfile {
        RadialProfile::sample(self.n, r_max, samples, |r| self.curvature(r))
    }

    /// The volume integral recomputed along a different path: `[0, a]`
    /// directly and `[a, ∞)` through `r = a/t`.
    pub fn volume_check(&self) -> f64 {
        let (n, a, p) = (self.n as i32, self.a, self.n as f64 * self.gamma);
        let inner = interval(
            |r| r.powi(n - 1) * (a * a + r * r).powf(-p / 2.0),
            0.0,
            a,
            QUAD_TOL,
        );
        let outer = tanh_sinh(
            |t, _| {
                a.powf(self.n as f64 - p)
                    * t.powf(p - self.n as f64 - 1.0)
                    * (1.0 + t * t).powf(-p / 2.0)
            },
            QUAD_TOL,
        );
        sphere_volume(self.n - 1) * (inner.value + outer.value)
    }

    /// Volume of the ball of radius `r_max` with a smooth cutoff starting at
    /// `0.8 r_max`, against the full volume.
    pub fn cutoff_split(&self, r_max: f64) -> CutoffSplit {
        let (n, a, p) = (self.n as i32, self.a, self.n as f64 * self.gamma);
        let r_cut = CUTOFF_FRACTION * r_max;
        let dens = |r: f64| r.powi(n - 1) * (a * a + r * r).powf(-p / 2.0);
        let ball = interval(dens, 0.0, r_cut, QUAD_TOL).value
            + interval(
                |r| dens(r) * smooth_cutoff(r, r_cut, r_max),
                r_cut,
                r_max,
                QUAD_TOL,
            )
            .value;
        let with_cutoff = sphere_volume(self.n - 1) * ball;
        CutoffSplit {
            r_max,
            r_cut,
            with_cutoff,
            full: self.volume,
            cutoff_contribution: self.volume - with_cutoff,
        }
    }

    /// Max difference between the closed-form curvature and the curvature
    /// of `φ` sampled on `[0, r_max]` with `m` intervals, using second-order
    /// differences.
    pub fn finite_difference_error(&self, r_max: f64, m: usize) -> f64 {
        let h = r_max / m as f64;
        let phi: Vec<f64> = (0..=m + 1).map(|j| self.phi(j as f64 * h)).collect();
        let mut err: f64 = 0.0;
        for j in 0..=m {
            let r = j as f64 * h;
            // Even extension across the origin.
            let left = if j == 0 { phi[1] } else { phi[j - 1] };
            let d1 = (phi[j + 1] - left) / (2.0 * h);
            let d2 = (phi[j + 1] - 2.0 * phi[j] + left) / (h * h);
            let num = radial_scalar_curvature(self.n, r, d1, d2, (-2.0 * phi[j]).exp());
            err = err.max((num - self.curvature(r)).abs());
        }
        err
    }
}

/// `C^∞` step from 1 at `r0` down to 0 at `r1`.
pub fn smooth_cutoff(r: f64, r0: f64, r1: f64) -> f64 {
    if r <= r0 {
        return 1.0;
    }
    if r >= r1 {
        return 0.0;
    }
    let s = (r - r0) / (r1 - r0);
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    f(1.0 - s) / (f(1.0 - s) + f(s))
}

/// `u_ε = ε^{(n-2)/2} (ε^2 + r^2)^{(2-n)/2}`, metric `4 u_ε^{4/(n-2)} δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleFamily {
    pub n: usize,
    pub epsilon: f64,
    pub profile: RadialProfile,
    /// Max `|R - n(n-1)|` over the profile nodes.
    pub curvature_error: f64,
    pub volume: f64,
    /// `vol(S^n)` of the unit round sphere.
    pub sphere_volume: f64,
}

impl BubbleFamily {
    pub fn u(n: usize, eps: f64, r: f64) -> f64 {
        let k = (n as f64 - 2.0) / 2.0;
        eps.powf(k) * (eps * eps + r * r).powf(-k)
    }

    pub fn volume_relative_error(&self) -> f64 {
        (self.volume - self.sphere_volume).abs() / self.sphere_volume
    }
}

pub fn bubble_family(n: usize, eps: f64) -> Result<BubbleFamily> {
    check_dim(n, 3)?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid("epsilon", format!("must be positive, got {eps}")));
    }
    let profile = RadialProfile::sample(n, DEFAULT_R_MAX, 2001, |r| BubbleFamily::u(n, eps, r));
    let target = (n * (n - 1)) as f64;
    // e^φ = 2u^{2/(n-2)} = 2ε/(ε^2+r^2).
    let curvature_error = profile
        .r
        .iter()
        .map(|&r| {
            let s = eps * eps + r * r;
            let dphi = -2.0 * r / s;
            let ddphi = -2.0 * (eps * eps - r * r) / (s * s);
            let e = s / (2.0 * eps);
            (radial_scalar_curvature(n, r, dphi, ddphi, e * e) - target).abs()
        })
        .fold(0.0, f64::max);
    let nf = n as i32;
    let q = tanh_sinh(
        |t, c| {
            let s = eps * eps * c * c + t * t;
            t.powi(nf - 1) * c.powi(nf - 1) * (2.0 * eps).powi(nf) / s.powi(nf)
        },
        QUAD_TOL,
    );
    Ok(BubbleFamily {
        n,
        epsilon: eps,
        profile,
        curvature_error,
        volume: sphere_volume(n - 1) * q.value,
        sphere_volume: sphere_volume(n),
    })
}

/// Largest relative spread of bubble volumes over `eps`.
pub fn bubble_volume_spread(n: usize, eps: &[f64]) -> Result<f64> {
    let vols = eps
        .iter()
        .map(|&e| bubble_family(n, e).map(|b| b.volume))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = vols
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    Ok((hi - lo) / hi.abs())
}

/// `T = σ^{-n} exp(-r^2 / 2σ^2)` around `center`, cut off smoothly between
/// `8σ` and `10σ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianSource {
    pub n: usize,
    pub center: Vec<f64>,
    pub sigma: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaleReport {
    pub lambda: f64,
    pub integral_g0: f64,
    pub integral_g: f64,
    pub difference: f64,
    /// `(2π)^{n/2}`, the integral without cutoff.
    pub uncut: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionEntry {
    pub sigma: f64,
    pub grid_integral: f64,
    pub radial_integral: f64,
    pub relative_error: f64,
    pub under_resolved: bool,
}

pub fn gaussian_source(n: usize, center: &[f64], sigma: f64) -> Result<GaussianSource> {
    check_dim(n, 1)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    Ok(GaussianSource {
        n,
        center: center.to_vec(),
        sigma,
        r_max: 10.0 * sigma,
    })
}

impl GaussianSource {
    pub fn density(&self, r: f64) -> f64 {
        density(self.n, self.sigma, self.r_max, r)
    }

    /// `∫ T dV` by radial quadrature, in the frame where the width is `sigma`.
    pub fn radial_integral(&self) -> f64 {
        radial_integral(self.n, self.sigma, self.r_max)
    }

    /// Compares `∫ T^g dV_g` under `g = λ^2 g0`, `σ_g = λσ`, with the
    /// background integral. The `g` frame is integrated in its own radial
    /// coordinate `r_g = λ r`.
    pub fn rescale_check(&self, lambda: f64) -> Result<RescaleReport> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        let integral_g0 = self.radial_integral();
        let integral_g = radial_integral(self.n, lambda * self.sigma, lambda * self.r_max);
        Ok(RescaleReport {
            lambda,
            integral_g0,
            integral_g,
            difference: (integral_g - integral_g0).abs(),
            uncut: (2.0 * std::f64::consts::PI).powf(self.n as f64 / 2.0),
        })
    }

    /// Samples the source on `grid` (background metric) for each width and
    /// compares the grid integral with the radial value. Entries whose error
    /// exceeds `tol` are flagged.
    pub fn resolution_probe(
        &self,
        grid: &ManifoldGrid,
        sigmas: &[f64],
        tol: f64,
    ) -> Vec<ResolutionEntry> {
        sigmas
            .iter()
            .map(|&sigma| {
                let r_max = 10.0 * sigma;
                let grid_integral: f64 = (0..grid.len())
                    .map(|i| {
                        grid.weights()[i]
                            * density(self.n, sigma, r_max, grid.distance_to(i, &self.center))
                    })
                    .sum();
                let radial = radial_integral(self.n, sigma, r_max);
                let relative_error = (grid_integral - radial).abs() / radial;
                ResolutionEntry {
                    sigma,
                    grid_integral,
                    radial_integral: radial,
                    relative_error,
                    under_resolved: !(relative_error <= tol),
                }
            })
            .collect()
    }

    pub fn profile(&self, samples: usize) -> RadialProfile {
        RadialProfile::sample(self.n, self.r_max, samples, |r| self.density(r))
    }
}

fn density(n: usize, sigma: f64, r_max: f64, r: f64) -> f64 {
    sigma.powi(-(n as i32))
        * (-r * r / (2.0 * sigma * sigma)).exp()
        * smooth_cutoff(r, CUTOFF_FRACTION * r_max, r_max)
}

fn radial_integral(n: usize, sigma: f64, r_max: f64) -> f64 {
    let f = |r: f64| r.powi(n as i32 - 1) * density(n, sigma, r_max, r);
    let r_cut = CUTOFF_FRACTION * r_max;
    let mid = 4.0 * sigma;
    let total = interval(f, 0.0, mid, QUAD_TOL).value
        + interval(f, mid, r_cut, QUAD_TOL).value
        + interval(f, r_cut, r_max, QUAD_TOL).value;
    sphere_volume(n - 1) * total
}

/// A band-limited random conformal factor: Fourier modes with
/// `1 ≤ |k|_1 ≤ smoothness` on the torus, non-constant monomials of degree
/// `≤ smoothness` in the embedding coordinates on the sphere. The field is
/// scaled to `‖φ‖_∞ = amplitude` and then shifted so the warped volume equals
/// the background volume.
pub fn random_phi(
    grid: &ManifoldGrid,
    amplitude: f64,
    smoothness: usize,
    seed: u64,
) -> Result<ScalarField> {
    random_phi_with_volume(grid, amplitude, smoothness, seed, grid.volume())
}

pub fn random_phi_with_volume(
    grid: &ManifoldGrid,
    amplitude: f64,
    smoothness: usize,
    seed: u64,
    volume: f64,
) -> Result<ScalarField> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(invalid(
            "amplitude",
            format!("must be non-negative, got {amplitude}"),
        ));
    }
    let raw = random_field(grid, smoothness, seed);
    let m = raw.max_abs();
    let phi = if m > 0.0 {
        raw.scaled(amplitude / m)
    } else {
        raw
    };
    Ok(normalize_volume(grid, &phi, volume)?.phi)
}

/// The unscaled band-limited field behind [`random_phi`].
pub fn random_field(grid: &ManifoldGrid, smoothness: usize, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals = vec![0.0; grid.len()];
    match grid.kind() {
        ManifoldKind::Torus => {
            let lengths = grid.lengths().expect("torus has lengths").to_vec();
            for k in multi_indices(grid.dim(), smoothness, true) {
                if k.iter().all(|&x| x == 0) {
                    continue;
                }
                // Keep one of each ±k pair.
                if k.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
                    continue;
                }
                let k2: f64 = k.iter().map(|&x| (x * x) as f64).sum();
                let (a, b) = (rng.gen_range(-1.0..1.0) / k2, rng.gen_range(-1.0..1.0) / k2);
                for (i, v) in vals.iter_mut().enumerate() {
                    let x = grid.coords(i);
                    let arg: f64 = k
                        .iter()
                        .zip(x)
                        .zip(&lengths)
                        .map(|((&kk, &xx), &l)| 2.0 * std::f64::consts::PI * kk as f64 * xx / l)
                        .sum();
                    *v += a * arg.cos() + b * arg.sin();
                }
            }
        }
        ManifoldKind::Sphere2 => {
            let radius = grid.radius().expect("sphere has a radius");
            for k in multi_indices(3, smoothness, false) {
                let deg: usize = k.iter().map(|&x| x as usize).sum();
                if deg == 0 {
                    continue;
                }
                let a = rng.gen_range(-1.0..1.0) / deg as f64;
                for (i, v) in vals.iter_mut().enumerate() {
                    let e = grid.embedding(i).expect("sphere node");
                    *v += a
                        * (0..3)
                            .map(|j| (e[j] / radius).powi(k[j] as i32))
                            .product::<f64>();
                }
            }
        }
    }
    ScalarField::from_vec_unchecked(vals)
}

/// Integer vectors of length `dim` with `|k|_1 ≤ max`, signed or not.
fn multi_indices(dim: usize, max: usize, signed: bool) -> Vec<Vec<i64>> {
    let lo = if signed { -(max as i64) } else { 0 };
    let mut out = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::new();
        for k in &out {
            let used: i64 = k.iter().map(|x: &i64| x.abs()).sum();
            for x in lo..=max as i64 {
                if used + x.abs() <= max as i64 {
                    let mut k2 = k.clone();
                    k2.push(x);
                    next.push(k2);
                }
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_volumes() {
        assert!((sphere_volume(1) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_volume(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn gamma_two_in_the_plane() {
        let f = gamma_family(2, 2.0, PI).unwrap();
        assert!((f.radial_integral - 0.5).abs() < 1e-12);
        assert!((f.a - 1.0).abs() < 1e-10);
        assert!((f.curvature_origin() - 8.0).abs() < 1e-9);
        assert!((f.curvature(0.0) - 8.0).abs() < 1e-9);
        assert!((f.volume_check() - PI).abs() < 1e-9);
    }

    #[test]
    fn gamma_two_in_four_dimensions() {
        let f = gamma_family(4, 2.0, 1.0).unwrap();
        assert!((f.radial_integral - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn curvature_blows_up_as_gamma_decreases() {
        let a2 = gamma_family(2, 2.0, PI).unwrap();
        let a11 = gamma_family(2, 1.1, PI).unwrap();
        assert!(a11.a > a2.a);
        let r0: Vec<f64> = [1.1, 1.05, 1.02]
            .iter()
            .map(|&g| gamma_family(2, g, PI).unwrap().curvature_origin())
            .collect();
        assert!(r0[0] < r0[1] && r0[1] < r0[2], "{r0:?}");
        for g in [1.1, 1.02] {
            let f = gamma_family(2, g, PI).unwrap();
            assert!((f.volume_check() - PI).abs() / PI < 1e-8, "{g}");
        }
    }

    #[test]
    fn gamma_at_most_one_is_rejected() {
        assert!(gamma_family(2, 1.0, PI).is_err());
        assert!(gamma_family(3, 0.5, 1.0).is_err());
    }

    #[test]
    fn finite_differences_converge_at_second_order() {
        let f = gamma_family(3, 1.5, 2.0).unwrap();
        let e1 = f.finite_difference_error(4.0, 200);
        let e2 = f.finite_difference_error(4.0, 400);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn cutoff_split_is_small_for_fast_decay() {
        let f = gamma_family(2, 3.0, PI).unwrap();
        let s = f.cutoff_split(DEFAULT_R_MAX);
        assert!(s.cutoff_contribution > 0.0 && s.cutoff_contribution < 1e-6);
    }

    #[test]
    fn bubble_is_round() {
        let b = bubble_family(3, 1.0).unwrap();
        assert!(b.curvature_error < 1e-6);
        let b = bubble_family(3, 0.25).unwrap();
        assert!((b.profile.values[0] - 2.0).abs() < 1e-12);
        assert!(b.volume_relative_error() < 1e-9);
        assert!(bubble_volume_spread(3, &[1.0, 0.5, 0.25]).unwrap() < 1e-6);
        assert!(bubble_volume_spread(5, &[1.0, 0.5, 0.25]).unwrap() < 1e-6);
        assert!(bubble_family(2, 1.0).is_err());
    }

    #[test]
    fn gaussian_rescale() {
        let g = gaussian_source(2, &[0.5, 0.5], 0.1).unwrap();
        let r = g.rescale_check(2.0).unwrap();
        assert!(r.difference < 1e-8, "{r:?}");
        assert!((r.integral_g0 - r.uncut).abs() < 1e-10);
        let r = g.rescale_check(1.0).unwrap();
        assert_eq!(r.integral_g0, r.integral_g);
    }

    #[test]
    fn gaussian_resolution_probe() {
        let grid = ManifoldGrid::torus(&[1.0, 1.0], 64).unwrap();
        let g = gaussian_source(2, &[0.5, 0.5], 0.1).unwrap();
        let probe = g.resolution_probe(&grid, &[0.2, 0.1, 0.05], 0.01);
        // At σ = 0.2 the support wraps around the unit torus.
        for e in &probe[1..] {
            assert!(!e.under_resolved, "{e:?}");
        }
        let coarse = ManifoldGrid::torus(&[1.0, 1.0], 8).unwrap();
        let probe = g.resolution_probe(&coarse, &[0.05], 0.01);
        assert!(probe[0].under_resolved);
    }

    #[test]
    fn random_phi_properties() {
        let grid = ManifoldGrid::torus(&[1.0, 1.0], 16).unwrap();
        let z = random_phi(&grid, 0.0, 3, 1).unwrap();
        assert!(z.max_abs() < 1e-14);
        let a = random_phi(&grid, 0.5, 3, 7).unwrap();
        let b = random_phi(&grid, 0.5, 3, 7).unwrap();
        assert_eq!(a, b);
        let c = random_phi(&grid, 0.5, 3, 8).unwrap();
        assert_ne!(a, c);
        let s = ManifoldGrid::sphere(1.0, 12, 24).unwrap();
        let p = random_phi(&s, 0.5, 2, 3).unwrap();
        let vol: f64 = p
            .values()
            .iter()
            .zip(s.weights())
            .map(|(v, w)| (2.0 * v).exp() * w)
            .sum();
        assert!((vol - s.volume()).abs() / s.volume() < 1e-12);
    }
}
