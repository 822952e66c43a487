//! Scenario configuration in lab units.
//!
//! A config file is a flat TOML document (`key = value`) or, for a `.json`
//! extension, a flat JSON object. Every key is optional and falls back to the
//! 3° clock-state scenario; unknown keys are rejected.

use std::fmt;
use std::path::Path;

use coldmem_core::analytic::DetectionModel;
use coldmem_core::ensemble::Ballistics;
use coldmem_core::photon::{GammaEngine, Scenario};
use coldmem_core::physics::{BeamGeometry, EnsembleParams, GeometryMode, SpeciesConstants};
use coldmem_core::zeeman::{Sublevel, ZeemanConfig};
use serde::{Deserialize, Serialize};

/// Environment variable overriding the default seed when a config omits `seed`.
pub const SEED_ENV: &str = "COLDMEM_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Offending key, or the file path for syntax errors.
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Analytic,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryModeName {
    #[default]
    Exact,
    SmallAngle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "temperature_uK")]
    pub temperature_uk: f64,
    pub theta_deg: f64,
    pub write_wavelength_nm: f64,
    pub waist_um: f64,
    pub atom_count: usize,
    pub density_per_cm3: f64,
    /// `"F,m/F,m"` for `(|g>, |s>)`
    pub state_pair: String,
    #[serde(rename = "bias_field_G")]
    pub bias_field_g: f64,
    #[serde(rename = "gradient_G_per_cm")]
    pub gradient_g_per_cm: f64,
    pub chi: f64,
    pub eta_s: f64,
    pub eta_as: f64,
    #[serde(rename = "background_B")]
    pub background_b: f64,
    pub delays_us: Vec<f64>,
    pub trials_per_point: u64,
    pub seed: Option<u64>,
    pub engine: Engine,
    pub geometry_mode: GeometryModeName,
    pub pencil_length_mm: f64,
    pub gravity: bool,
    /// Angles at or above this are fitted with the Gaussian law.
    pub gaussian_min_theta_deg: f64,
    /// Hold `A` fixed in combined fits; otherwise it comes from a collinear companion fit.
    #[serde(rename = "fixed_A_per_s2")]
    pub fixed_a_per_s2: Option<f64>,
    pub exclude_first_point: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            temperature_uk: 100.0,
            theta_deg: 3.0,
            write_wavelength_nm: 795.0,
            waist_um: 100.0,
            atom_count: 100_000,
            density_per_cm3: 1e10,
            state_pair: "1,0/2,0".to_owned(),
            bias_field_g: 3.2,
            gradient_g_per_cm: 0.0,
            chi: 0.001,
            eta_s: 0.3,
            eta_as: 0.3,
            background_b: 0.1,
            delays_us: vec![0.5, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 50.0, 60.0, 75.0],
            trials_per_point: 10_000_000,
            seed: None,
            engine: Engine::Analytic,
            geometry_mode: GeometryModeName::Exact,
            pencil_length_mm: 3.0,
            gravity: false,
            gaussian_min_theta_deg: 0.6,
            fixed_a_per_s2: None,
            exclude_first_point: false,
        }
    }
}

/// Decay law a scenario's curve is fitted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitPlan {
    Gaussian,
    Combined,
    Lorentzian,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::new(&path.display().to_string(), e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
        .map_err(|mut e| {
            e.field = format!("{}: {}", path.display(), e.field);
            e
        })?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start].matches('\n').count() + 1)
                .unwrap_or(0);
            ConfigError::new(&format!("line {line}"), e.message().to_owned())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::new(&format!("line {}", e.line()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Seed from the config, else `COLDMEM_SEED`, else [`DEFAULT_SEED`].
    pub fn resolved_seed(&self) -> Result<u64, ConfigError> {
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| ConfigError::new(SEED_ENV, format!("not an unsigned integer: {v:?}"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("temperature_uK", self.temperature_uk)?;
        if !(0.0..90.0).contains(&self.theta_deg) {
            return Err(ConfigError::new("theta_deg", "must lie in [0, 90)"));
        }
        positive("write_wavelength_nm", self.write_wavelength_nm)?;
        positive("waist_um", self.waist_um)?;
        if self.atom_count == 0 {
            return Err(ConfigError::new("atom_count", "must be at least 1"));
        }
        if !(self.density_per_cm3 >= 0.0 && self.density_per_cm3.is_finite()) {
            return Err(ConfigError::new("density_per_cm3", "must be non-negative"));
        }
        parse_state_pair(&self.state_pair)?;
        finite("bias_field_G", self.bias_field_g)?;
        finite("gradient_G_per_cm", self.gradient_g_per_cm)?;
        for (name, v) in [
            ("chi", self.chi),
            ("eta_s", self.eta_s),
            ("eta_as", self.eta_as),
            ("background_B", self.background_b),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::new(name, "must lie in [0, 1]"));
            }
        }
        if self.delays_us.is_empty() {
            return Err(ConfigError::new("delays_us", "must list at least one delay"));
        }
        if self.delays_us.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(ConfigError::new("delays_us", "delays must be non-negative"));
        }
        if self.delays_us.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::new("delays_us", "delays must be strictly increasing"));
        }
        if self.trials_per_point == 0 {
            return Err(ConfigError::new("trials_per_point", "must be at least 1"));
        }
        if self.geometry_mode == GeometryModeName::SmallAngle && self.theta_deg == 0.0 {
            return Err(ConfigError::new(
                "geometry_mode",
                "small-angle geometry is undefined at theta_deg = 0; use exact",
            ));
        }
        positive("pencil_length_mm", self.pencil_length_mm)?;
        if !(self.gaussian_min_theta_deg >= 0.0) {
            return Err(ConfigError::new("gaussian_min_theta_deg", "must be non-negative"));
        }
        if let Some(a) = self.fixed_a_per_s2 {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(ConfigError::new("fixed_A_per_s2", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn fit_plan(&self) -> FitPlan {
        if self.theta_deg == 0.0 {
            FitPlan::Lorentzian
        } else if self.theta_deg >= self.gaussian_min_theta_deg {
            FitPlan::Gaussian
        } else {
            FitPlan::Combined
        }
    }

    pub fn delays_s(&self) -> Vec<f64> {
        self.delays_us.iter().map(|d| d * 1e-6).collect()
    }

    /// Convert to SI.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        self.validate()?;
        let (ground, storage) = parse_state_pair(&self.state_pair)?;
        Ok(Scenario {
            ensemble: EnsembleParams {
                temperature: self.temperature_uk * 1e-6,
                density: self.density_per_cm3 * 1e6,
                cloud_radius: self.waist_um * 1e-6,
                atom_count: self.atom_count,
                species: SpeciesConstants::RB87,
            },
            geometry: BeamGeometry::new(
                self.write_wavelength_nm * 1e-9,
                self.theta_deg.to_radians(),
                match self.geometry_mode {
                    GeometryModeName::Exact => GeometryMode::Exact,
                    GeometryModeName::SmallAngle => GeometryMode::SmallAngle,
                },
            ),
            // 1 G = 1e-4 T; 1 G/cm = 1e-2 T/m.
            zeeman: ZeemanConfig::new(ground, storage, self.bias_field_g * 1e-4, self.gradient_g_per_cm * 1e-2),
            detection: DetectionModel {
                chi: self.chi,
                eta_s: self.eta_s,
                eta_as: self.eta_as,
                background: self.background_b,
            },
            pencil_length: self.pencil_length_mm * 1e-3,
            ballistics: Ballistics { gravity: self.gravity },
            engine: match self.engine {
                Engine::Analytic => GammaEngine::Analytic,
                Engine::Mc => GammaEngine::MonteCarlo,
            },
        })
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be positive"))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be finite"))
    }
}

/// Parse `"1,0/2,0"` into `(|1,0>, |2,0>)`.
pub fn parse_state_pair(text: &str) -> Result<(Sublevel, Sublevel), ConfigError> {
    let bad = || ConfigError::new("state_pair", format!("expected \"F,m/F,m\", got {text:?}"));
    let level = |s: &str| -> Result<Sublevel, ConfigError> {
        let (f, m) = s.trim().split_once(',').ok_or_else(bad)?;
        let f: u8 = f.trim().parse().map_err(|_| bad())?;
        let m: i8 = m.trim().parse().map_err(|_| bad())?;
        if !(f == 1 || f == 2) || m.unsigned_abs() > f {
            return Err(ConfigError::new(
                "state_pair",
                format!("no sublevel |{f},{m}> in F = 1, 2"),
            ));
        }
        Ok(Sublevel::new(f, m))
    };
    let (g, s) = text.split_once('/').ok_or_else(bad)?;
    Ok((level(g)?, level(s)?))
}

/// Named scenarios mirroring the measured curves.
pub mod presets {
    use super::ScenarioConfig;

    fn grid(step_us: f64, n: usize, first_us: f64) -> Vec<f64> {
        std::iter::once(first_us)
            .chain((1..n).map(|i| step_us * i as f64))
            .collect()
    }

    /// 3°, `(|1,0>, |2,0>)`.
    pub fn fig2() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    /// 1.5°, `(|1,0>, |2,0>)`.
    pub fn fig3a() -> ScenarioConfig {
        ScenarioConfig {
            theta_deg: 1.5,
            delays_us: grid(10.0, 13, 1.0),
            ..ScenarioConfig::default()
        }
    }

    /// 0.6°, `(|1,0>, |2,0>)`.
    pub fn fig3b() -> ScenarioConfig {
        ScenarioConfig {
            theta_deg: 0.6,
            delays_us: grid(25.0, 13, 2.0),
            ..ScenarioConfig::default()
        }
    }

    /// 0.2°, `(|1,1>, |2,-1>)`, fitted with the combined law.
    pub fn fig3c() -> ScenarioConfig {
        ScenarioConfig {
            theta_deg: 0.2,
            state_pair: "1,1/2,-1".to_owned(),
            delays_us: grid(60.0, 15, 5.0),
            ..ScenarioConfig::default()
        }
    }

    /// Collinear, `(|1,1>, |2,-1>)`, loss limited.
    pub fn fig4() -> ScenarioConfig {
        ScenarioConfig {
            theta_deg: 0.0,
            state_pair: "1,1/2,-1".to_owned(),
            delays_us: grid(200.0, 16, 10.0),
            ..ScenarioConfig::default()
        }
    }

    pub fn by_name(name: &str) -> Option<ScenarioConfig> {
        match name {
            "fig2" => Some(fig2()),
            "fig3a" => Some(fig3a()),
            "fig3b" => Some(fig3b()),
            "fig3c" => Some(fig3c()),
            "fig4" => Some(fig4()),
            _ => None,
        }
    }

    pub const NAMES: [&str; 5] = ["fig2", "fig3a", "fig3b", "fig3c", "fig4"];
}
