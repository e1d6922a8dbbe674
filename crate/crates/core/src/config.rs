//! Declarative pipeline configuration (TOML).
//!
//! Every section is optional; missing keys take the published experiment
//! values. A single top-level `seed` drives all randomness through
//! [`crate::seed::derive_seed`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyWeights;
use crate::geo::{GeoPoint, GridSpec};
use crate::sbd::{BirthLaw, SbdParams, Schedule};
use crate::seed::derive_seed;
use crate::simulator::{LayoutParams, NoiseProfile, DEFAULT_CONFIDENCE_RATE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key `{key}`: {constraint}")]
    Invalid { key: String, constraint: String },
}

fn invalid(key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub height: u32,
    pub width: u32,
    /// Metres per pixel.
    pub resolution: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            origin_lat: 53.3438,
            origin_lon: -6.2546,
            height: 2000,
            width: 2000,
            resolution: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbdConfig {
    pub n0: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub t_wait: u64,
    pub schedule: Schedule,
    pub max_iterations: u64,
    pub birth_law: BirthLaw,
    pub fixed_radius: Option<u32>,
}

impl Default for SbdConfig {
    fn default() -> Self {
        let p = SbdParams::default();
        Self {
            n0: p.n0,
            epsilon: p.epsilon,
            beta: p.beta,
            t_wait: p.t_wait,
            schedule: p.schedule,
            max_iterations: p.max_iterations,
            birth_law: p.birth_law,
            fixed_radius: p.fixed_radius,
        }
    }
}

impl SbdConfig {
    pub fn params(&self, seed: u64) -> SbdParams {
        SbdParams {
            n0: self.n0,
            epsilon: self.epsilon,
            beta: self.beta,
            t_wait: self.t_wait,
            schedule: self.schedule,
            seed,
            max_iterations: self.max_iterations,
            birth_law: self.birth_law,
            fixed_radius: self.fixed_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Noise level 0..=3.
    pub noise_level: u8,
    /// Rate of the exponential behind detection confidences.
    pub confidence_rate: f64,
    pub n_objects: usize,
    pub n_cameras: usize,
    /// Overrides of the selected level's distance SD (m), bearing SD (deg)
    /// and contamination fraction.
    pub sigma_distance: Option<f64>,
    pub sigma_bearing: Option<f64>,
    pub contamination: Option<f64>,
    pub layout: LayoutParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            noise_level: 1,
            confidence_rate: DEFAULT_CONFIDENCE_RATE,
            n_objects: 600,
            n_cameras: 800,
            sigma_distance: None,
            sigma_bearing: None,
            contamination: None,
            layout: LayoutParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub thresholds_m: Vec<f64>,
    pub cluster_radius_m: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds_m: crate::eval::EVAL_THRESHOLDS_M.to_vec(),
            cluster_radius_m: crate::eval::DEFAULT_CLUSTER_RADIUS_M,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// GeoJSON footprint file or GIS raster sidecar.
    pub gis: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub weights: EnergyWeights,
    pub sbd: SbdConfig,
    pub simulation: SimulationConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            grid: GridConfig::default(),
            weights: EnergyWeights::default(),
            sbd: SbdConfig::default(),
            simulation: SimulationConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML text; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(gis) = cfg.paths.gis.take() {
            cfg.paths.gis = Some(if gis.is_relative() { base_dir.join(gis) } else { gis });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        GeoPoint::new(g.origin_lat, g.origin_lon)
            .map_err(|e| invalid("grid.origin_lat/grid.origin_lon", e.to_string()))?;
        if g.height == 0 {
            return Err(invalid("grid.height", "must be >= 1"));
        }
        if g.width == 0 {
            return Err(invalid("grid.width", "must be >= 1"));
        }
        if !(g.resolution.is_finite() && g.resolution > 0.0) {
            return Err(invalid("grid.resolution", "must be > 0"));
        }
        self.grid_spec().map_err(|e| invalid("grid", e.to_string()))?;

        let w = &self.weights;
        for (key, v) in [("weights.w1", w.w1), ("weights.w2", w.w2), ("weights.w3", w.w3)] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if !(w.alpha.is_finite() && w.alpha >= 0.0) {
            return Err(invalid("weights.alpha", "must be >= 0"));
        }
        if !(w.c_sigma.is_finite() && w.c_sigma > 0.0) {
            return Err(invalid("weights.c_sigma", "must be > 0"));
        }

        let s = &self.sbd;
        if !(s.n0.is_finite() && s.n0 > 0.0) {
            return Err(invalid("sbd.n0", "must be > 0"));
        }
        if !(s.epsilon > 0.0 && s.epsilon < 1.0) {
            return Err(invalid("sbd.epsilon", "must lie in (0, 1)"));
        }
        if !(s.beta.is_finite() && s.beta > 0.0) {
            return Err(invalid("sbd.beta", "must be > 0"));
        }
        if s.t_wait == 0 {
            return Err(invalid("sbd.t_wait", "must be >= 1"));
        }
        if s.max_iterations == 0 {
            return Err(invalid("sbd.max_iterations", "must be >= 1"));
        }
        if let Some(r) = s.fixed_radius {
            if !(crate::sbd::RADIUS_MIN..=crate::sbd::RADIUS_MAX).contains(&r) {
                return Err(invalid("sbd.fixed_radius", "must lie in 2..=10"));
            }
        }

        let sim = &self.simulation;
        if sim.noise_level > 3 {
            return Err(invalid("simulation.noise_level", "must lie in 0..=3"));
        }
        if !(sim.confidence_rate.is_finite() && sim.confidence_rate > 0.0) {
            return Err(invalid("simulation.confidence_rate", "must be > 0"));
        }
        if sim.n_objects == 0 {
            return Err(invalid("simulation.n_objects", "must be >= 1"));
        }
        if sim.n_cameras == 0 {
            return Err(invalid("simulation.n_cameras", "must be >= 1"));
        }
        if let Some(v) = sim.sigma_distance {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid("simulation.sigma_distance", "must be >= 0"));
            }
        }
        if let Some(v) = sim.sigma_bearing {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid("simulation.sigma_bearing", "must be >= 0"));
            }
        }
        if let Some(v) = sim.contamination {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid("simulation.contamination", "must lie in [0, 1)"));
            }
        }
        sim.layout
            .validate()
            .map_err(|e| invalid("simulation.layout", e.to_string()))?;

        let e = &self.eval;
        if e.thresholds_m.is_empty() || e.thresholds_m.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(invalid("eval.thresholds_m", "must be a non-empty list of positive distances"));
        }
        if !(e.cluster_radius_m.is_finite() && e.cluster_radius_m > 0.0) {
            return Err(invalid("eval.cluster_radius_m", "must be > 0"));
        }

        if let Some(p) = &self.paths.gis {
            if !p.is_file() {
                return Err(invalid("paths.gis", format!("file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, crate::geo::GeoError> {
        let g = &self.grid;
        GridSpec::new(GeoPoint::new(g.origin_lat, g.origin_lon)?, g.height, g.width, g.resolution)
    }

    /// Noise of the selected level with any per-key overrides applied.
    pub fn noise_profile(&self) -> NoiseProfile {
        let sim = &self.simulation;
        let mut p = NoiseProfile::level(sim.noise_level).expect("validated noise level");
        p.sigma_distance = sim.sigma_distance.unwrap_or(p.sigma_distance);
        p.sigma_bearing = sim.sigma_bearing.unwrap_or(p.sigma_bearing);
        p.contamination = sim.contamination.unwrap_or(p.contamination);
        p
    }

    /// SBD parameters for the `index`-th run derived from the master seed.
    pub fn sbd_params(&self, index: u64) -> SbdParams {
        self.sbd.params(derive_seed(self.seed, &format!("sbd/{index}")))
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::io::sha256_hex(json.as_bytes())
    }
}
