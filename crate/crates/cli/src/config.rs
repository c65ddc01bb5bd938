//! Scenario files.
//!
//! Keys that carry a dimension end in a unit suffix: `_len` for lengths in
//! coordinate units, `_len_n` for `n`-volumes and `_per_len2` for curvatures
//! and energy densities.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax(String),
    UnknownKeys(Vec<String>),
    Range { path: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax(e) => write!(f, "malformed scenario: {e}"),
            ConfigError::UnknownKeys(keys) => write!(f, "unknown keys: {}", keys.join(", ")),
            ConfigError::Range { path, reason } => write!(f, "{path}: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn range(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Torus,
    #[default]
    Sphere2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureMode {
    #[default]
    Geometric,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifoldConfig {
    pub kind: ManifoldKind,
    /// Torus dimension; the sphere is always 2.
    pub n: usize,
    /// Nodes per side on the torus, latitude rows on the sphere (twice as
    /// many longitudes).
    pub resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengths_len: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_len: Option<f64>,
    pub mode: CurvatureMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_g0_per_len2: Option<f64>,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig {
            kind: ManifoldKind::Sphere2,
            n: 2,
            resolution: 32,
            lengths_len: None,
            radius_len: None,
            mode: CurvatureMode::Geometric,
            r_g0_per_len2: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhiSource {
    #[default]
    Zero,
    Constant,
    Random,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ConformalConfig {
    pub source: PhiSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// One value per node, whitespace or comma separated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Warped volume `A`; defaults to the background volume.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_len_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxConfig {
    pub degree: usize,
    pub norm_sq_per_len2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StringKind {
    #[default]
    None,
    Smooth,
    Gaussian,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct StringConfig {
    pub kind: StringKind,
    pub beta: f64,
    /// Constant value for `smooth`, peak scale otherwise.
    pub strength_per_len2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_len: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_len: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_len: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SourcesConfig {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flux: Vec<FluxConfig>,
    pub string: StringConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    pub g_newton: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig { g_newton: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumConfig {
    pub modes: usize,
    /// Also evaluate the eigen-expansion of the potential with these modes.
    pub expansion: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            modes: 6,
            expansion: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub samples: usize,
    pub amplitude: f64,
    pub smoothness: usize,
    pub seed: u64,
    /// String-source weights cycled over the samples; empty keeps the
    /// configured source.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub betas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Window for the running-minimum stability check.
    pub window: usize,
    /// Allowed relative change of the running minimum over the window.
    pub stability_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            samples: 100,
            amplitude: 0.5,
            smoothness: 3,
            seed: 0,
            betas: Vec::new(),
            eta: None,
            window: 50,
            stability_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyConfig {
    /// Constant flux ramp `C`.
    pub flux_rate_per_len2: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub t_points: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            flux_rate_per_len2: 1.0,
            t_start: 0.0,
            t_end: 8.0,
            t_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Runs the existence ledger matching the sign of `R_{g0}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// `Γ` for the non-positive ledger.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_cap: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub s_list: Vec<f64>,
    /// Marks a resonance refusal as the expected outcome.
    pub expect_resonance: bool,
    /// Allowed `|LHS - RHS|` of the integrated identity, relative to the
    /// largest term.
    pub identity_rel_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            eta: None,
            epsilon: None,
            gamma_cap: None,
            s_list: Vec::new(),
            expect_resonance: false,
            identity_rel_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearConfig {
    pub d: usize,
    pub k: f64,
    /// Constant `f_g`; when absent `f_g` is built from the geometry and
    /// sources.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_const: Option<f64>,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        NonlinearConfig {
            d: 8,
            k: 1.0,
            f_const: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExampleKind {
    #[default]
    Gamma,
    Bubble,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExampleConfig {
    pub kind: ExampleKind,
    pub n: usize,
    pub gamma: f64,
    pub volume_len_n: f64,
    /// Radius for `sup |R_g|` and the profile.
    pub rho_len: f64,
    pub epsilons: Vec<f64>,
    pub sigma_len: f64,
    pub lambda: f64,
    pub samples: usize,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        ExampleConfig {
            kind: ExampleKind::Gamma,
            n: 2,
            gamma: 2.0,
            volume_len_n: PI,
            rho_len: 5.0,
            epsilons: vec![1.0, 0.5, 0.25],
            sigma_len: 0.1,
            lambda: 2.0,
            samples: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub id: String,
    pub manifold: ManifoldConfig,
    pub conformal: ConformalConfig,
    pub sources: SourcesConfig,
    pub physics: PhysicsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<NonlinearConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<ExampleConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            id: "scenario".into(),
            manifold: ManifoldConfig::default(),
            conformal: ConformalConfig::default(),
            sources: SourcesConfig::default(),
            physics: PhysicsConfig::default(),
            spectrum: None,
            sweep: None,
            family: None,
            verify: None,
            nonlinear: None,
            example: None,
        }
    }
}

/// Parses and validates a scenario. All unknown keys are reported together.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    let mut unknown = Vec::new();
    let cfg: ScenarioConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| ConfigError::Syntax(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a scenario back to TOML.
pub fn emit_config(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("scenario configs always serialize")
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(range(path, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.id.is_empty() {
            return Err(range("id", "must not be empty"));
        }
        let m = &self.manifold;
        match m.kind {
            ManifoldKind::Torus => {
                if !(1..=6).contains(&m.n) {
                    return Err(range(
                        "manifold.n",
                        format!("torus dimension must be in 1..=6, got {}", m.n),
                    ));
                }
                if m.n >= 5 && m.resolution > 8 {
                    return Err(range(
                        "manifold.resolution",
                        "tori of dimension 5 or 6 are limited to resolution 8",
                    ));
                }
                if m.resolution < 4 {
                    return Err(range(
                        "manifold.resolution",
                        format!("need at least 4, got {}", m.resolution),
                    ));
                }
                if let Some(l) = &m.lengths_len {
                    if l.len() != m.n {
                        return Err(range(
                            "manifold.lengths_len",
                            format!("need {} lengths, got {}", m.n, l.len()),
                        ));
                    }
                    for v in l {
                        positive("manifold.lengths_len", *v)?;
                    }
                }
                if m.radius_len.is_some() {
                    return Err(range("manifold.radius_len", "only applies to sphere2"));
                }
            }
            ManifoldKind::Sphere2 => {
                if m.n != 2 {
                    return Err(range(
                        "manifold.n",
                        format!("sphere2 is two-dimensional, got {}", m.n),
                    ));
                }
                if m.resolution < 4 {
                    return Err(range(
                        "manifold.resolution",
                        format!("need at least 4, got {}", m.resolution),
                    ));
                }
                if let Some(r) = m.radius_len {
                    positive("manifold.radius_len", r)?;
                }
                if m.lengths_len.is_some() {
                    return Err(range("manifold.lengths_len", "only applies to torus"));
                }
            }
        }
        match (m.mode, m.r_g0_per_len2) {
            (CurvatureMode::Synthetic, None) => {
                return Err(range(
                    "manifold.r_g0_per_len2",
                    "required in synthetic mode",
                ));
            }
            (CurvatureMode::Synthetic, Some(r)) if !r.is_finite() => {
                return Err(range("manifold.r_g0_per_len2", "must be finite"));
            }
            (CurvatureMode::Geometric, Some(_)) => {
                return Err(range(
                    "manifold.r_g0_per_len2",
                    "only allowed in synthetic mode",
                ));
            }
            _ => {}
        }

        let c = &self.conformal;
        match c.source {
            PhiSource::Zero => {}
            PhiSource::Constant => {
                let v = c
                    .value
                    .ok_or_else(|| range("conformal.value", "required for a constant source"))?;
                if !v.is_finite() {
                    return Err(range("conformal.value", "must be finite"));
                }
            }
            PhiSource::Random => {
                let a = c.amplitude.unwrap_or(0.5);
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(range(
                        "conformal.amplitude",
                        format!("must be >= 0, got {a}"),
                    ));
                }
            }
            PhiSource::File => {
                let p = c
                    .path
                    .as_ref()
                    .ok_or_else(|| range("conformal.path", "required for a file source"))?;
                if !p.exists() {
                    return Err(range(
                        "conformal.path",
                        format!("{} does not exist", p.display()),
                    ));
                }
            }
        }
        if let Some(v) = c.volume_len_n {
            positive("conformal.volume_len_n", v)?;
        }

        let dim = m.n;
        for (i, f) in self.sources.flux.iter().enumerate() {
            if f.degree == 0 || f.degree > dim {
                return Err(range(
                    &format!("sources.flux[{i}].degree"),
                    format!("must be in 1..={dim}, got {}", f.degree),
                ));
            }
            if !(f.norm_sq_per_len2 >= 0.0 && f.norm_sq_per_len2.is_finite()) {
                return Err(range(
                    &format!("sources.flux[{i}].norm_sq_per_len2"),
                    "must be >= 0",
                ));
            }
        }
        let s = &self.sources.string;
        if !(s.beta >= 0.0 && s.beta.is_finite()) {
            return Err(range(
                "sources.string.beta",
                format!("must be >= 0, got {}", s.beta),
            ));
        }
        if !s.strength_per_len2.is_finite() {
            return Err(range("sources.string.strength_per_len2", "must be finite"));
        }
        match s.kind {
            StringKind::Gaussian => {
                positive("sources.string.sigma_len", s.sigma_len.unwrap_or(f64::NAN))?;
            }
            StringKind::Indicator => {
                positive(
                    "sources.string.radius_len",
                    s.radius_len.unwrap_or(f64::NAN),
                )?;
                positive("sources.string.width_len", s.width_len.unwrap_or(f64::NAN))?;
            }
            _ => {}
        }
        if let Some(center) = &s.center {
            if center.len() != dim {
                return Err(range(
                    "sources.string.center",
                    format!("need {dim} coordinates, got {}", center.len()),
                ));
            }
        }

        positive("physics.g_newton", self.physics.g_newton)?;

        if let Some(sp) = &self.spectrum {
            if sp.modes == 0 {
                return Err(range("spectrum.modes", "must be at least 1"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.samples == 0 {
                return Err(range("sweep.samples", "must be at least 1"));
            }
            if !(sw.amplitude >= 0.0 && sw.amplitude.is_finite()) {
                return Err(range(
                    "sweep.amplitude",
                    format!("must be >= 0, got {}", sw.amplitude),
                ));
            }
            for b in &sw.betas {
                if !(*b >= 0.0) {
                    return Err(range(
                        "sweep.betas",
                        format!("weights must be >= 0, got {b}"),
                    ));
                }
            }
            positive("sweep.stability_tol", sw.stability_tol)?;
        }
        if let Some(f) = &self.family {
            if f.t_points < 2 {
                return Err(range("family.t_points", "need at least 2 points"));
            }
            if !(f.t_end > f.t_start) {
                return Err(range("family.t_end", "must exceed t_start"));
            }
            if !f.flux_rate_per_len2.is_finite() {
                return Err(range("family.flux_rate_per_len2", "must be finite"));
            }
        }
        if let Some(v) = &self.verify {
            if let Some(e) = v.epsilon {
                if !(e >= 0.0) {
                    return Err(range("verify.epsilon", format!("must be >= 0, got {e}")));
                }
            }
            if let Some(g) = v.gamma_cap {
                if !(g > 1.0) {
                    return Err(range("verify.gamma_cap", format!("must exceed 1, got {g}")));
                }
            }
            for s in &v.s_list {
                if !(*s > 0.0) {
                    return Err(range(
                        "verify.s_list",
                        format!("exponents must be positive, got {s}"),
                    ));
                }
            }
            positive("verify.identity_rel_tol", v.identity_rel_tol)?;
        }
        if let Some(nl) = &self.nonlinear {
            if nl.d <= 4 {
                return Err(range("nonlinear.d", format!("must be > 4, got {}", nl.d)));
            }
            if nl.k == 0.0 || !nl.k.is_finite() {
                return Err(range("nonlinear.k", "must be nonzero and finite"));
            }
        }
        if let Some(ex) = &self.example {
            match ex.kind {
                ExampleKind::Gamma => {
                    if ex.n < 2 {
                        return Err(range("example.n", "need n >= 2"));
                    }
                    if !(ex.gamma > 1.0) {
                        return Err(range(
                            "example.gamma",
                            format!("must exceed 1, got {}", ex.gamma),
                        ));
                    }
                    positive("example.volume_len_n", ex.volume_len_n)?;
                    positive("example.rho_len", ex.rho_len)?;
                }
                ExampleKind::Bubble => {
                    if ex.n < 3 {
                        return Err(range(
                            "example.n",
                            format!("bubbles need n >= 3, got {}", ex.n),
                        ));
                    }
                    if ex.epsilons.is_empty() {
                        return Err(range("example.epsilons", "need at least one value"));
                    }
                    for e in &ex.epsilons {
                        positive("example.epsilons", *e)?;
                    }
                }
                ExampleKind::Gaussian => {
                    if ex.n < 1 {
                        return Err(range("example.n", "need n >= 1"));
                    }
                    positive("example.sigma_len", ex.sigma_len)?;
                    positive("example.lambda", ex.lambda)?;
                }
            }
            if ex.samples < 2 {
                return Err(range("example.samples", "need at least 2"));
            }
        }
        Ok(())
    }

    /// Applies a `--seed` override to every seeded block.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if self.conformal.source == PhiSource::Random {
            self.conformal.seed = Some(seed);
        }
        if let Some(sw) = &mut self.sweep {
            sw.seed = seed;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_sphere_gets_defaults() {
        let cfg = parse_scenario("[manifold]\nkind = \"sphere2\"\n").unwrap();
        assert_eq!(cfg.physics.g_newton, 1.0);
        assert_eq!(cfg.manifold.resolution, 32);
        assert_eq!(cfg.conformal.source, PhiSource::Zero);
        assert!(cfg.conformal.volume_len_n.is_none());
    }

    #[test]
    fn nonlinear_d_three_is_rejected() {
        let err = parse_scenario("[nonlinear]\nd = 3\nk = 1.0\n").unwrap_err();
        assert!(
            matches!(&err, ConfigError::Range { path, .. } if path == "nonlinear.d"),
            "{err}"
        );
    }

    #[test]
    fn negative_beta_is_rejected() {
        let err = parse_scenario("[sources.string]\nkind = \"smooth\"\nbeta = -1.0\n").unwrap_err();
        assert!(
            matches!(&err, ConfigError::Range { path, .. } if path == "sources.string.beta"),
            "{err}"
        );
    }

    #[test]
    fn all_unknown_keys_are_listed() {
        let err =
            parse_scenario("colour = 1\n[manifold]\nkind = \"torus\"\nradius = 2.0\n").unwrap_err();
        let ConfigError::UnknownKeys(keys) = err else {
            panic!("{err}")
        };
        assert_eq!(
            keys,
            vec!["colour".to_string(), "manifold.radius".to_string()]
        );
    }

    #[test]
    fn emitted_config_parses_back() {
        let text = "id = \"t\"\n[manifold]\nkind = \"torus\"\nn = 3\nresolution = 8\nlengths_len = [1.0, 2.0, 3.0]\n[sweep]\nbetas = [0.0, 1.5]\n";
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(parse_scenario(&emit_config(&cfg)).unwrap(), cfg);
    }
}
