use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::ConstraintConfig;
use crate::geometry::CameraParams;
use crate::lupp::{BeliefMode, MotionModel};
use crate::optimize::{DeParams, SearchBounds};
use crate::sdsmm::{NoiseModel, ReflectiveParams};
use crate::world::{MapSpec, DEFAULT_GLARE_EXPONENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Numeval,
    Sim,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Differential evolution on the full cost (DyFOS).
    #[default]
    De,
    Brute,
    Random,
    Center,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::De, Strategy::Brute, Strategy::Random, Strategy::Center];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::De => "de",
            Strategy::Brute => "brute",
            Strategy::Random => "random",
            Strategy::Center => "center",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "de" | "dyfos" | "differential_evolution" => Ok(Strategy::De),
            "brute" | "brute_force" => Ok(Strategy::Brute),
            "random" | "random_view" => Ok(Strategy::Random),
            "center" | "center_view" => Ok(Strategy::Center),
            other => Err(ConfigError(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Odometry noise: standard deviation accumulated per square-root meter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionNoise {
    pub position_sigma: f64,
    pub heading_sigma: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            position_sigma: 0.02,
            heading_sigma: 0.01,
        }
    }
}

impl MotionNoise {
    pub fn model(&self, mode: BeliefMode) -> MotionModel<f64> {
        let p = self.position_sigma.powi(2);
        let d = match mode {
            BeliefMode::Position => vec![p, p],
            BeliefMode::Full => vec![p, p, self.heading_sigma.powi(2)],
        };
        MotionModel {
            q_rate: nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)),
        }
    }
}

/// Serpentine course: 10 legs of 2.2 m (22 m total) through the middle of
/// the default workspace.
pub fn default_waypoints() -> Vec<[f64; 2]> {
    vec![
        [7.2, 5.0],
        [9.4, 5.0],
        [11.6, 5.0],
        [13.8, 5.0],
        [13.8, 7.2],
        [13.8, 9.4],
        [11.6, 9.4],
        [9.4, 9.4],
        [7.2, 9.4],
        [7.2, 11.6],
    ]
}

/// Everything one run needs. Every field has a default, so a config file
/// only lists what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Map seeds for `numeval`; `sim` runs one trajectory per seed.
    pub seeds: Vec<u64>,
    pub map: MapSpec<f64>,
    pub camera: CameraParams<f64>,
    pub constraints: ConstraintConfig<f64>,
    pub noise_model: NoiseModel<f64>,
    pub glare_exponent: f64,
    pub belief_mode: BeliefMode,
    pub motion_noise: MotionNoise,
    /// Strategy used by `sim`.
    pub strategy: Strategy,
    pub de: DeParams,
    /// Brute-force grid sizes for `(rho, psi, phi, azimuth, elevation)`.
    pub brute_grid: [usize; 5],
    pub random_max_attempts: usize,
    /// Viewer elevation band above the rover's reference point, radians.
    pub elevation_bounds: [f64; 2],
    /// Range kept clear of both camera range limits when planning, meters.
    /// An optimum on `rho_min` leaves the view no room for odometry drift.
    pub range_margin: f64,
    pub start: [f64; 2],
    pub waypoints: Vec<[f64; 2]>,
    /// Standard deviation of the initial position belief in `sim`.
    pub initial_sigma: f64,
    /// Added to the diagonal of random numerical-experiment priors.
    pub prior_regularization: f64,
    /// Write measured wall times. Off by default so outputs are byte-reproducible.
    pub record_timing: bool,
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            seeds: (0..20).collect(),
            map: MapSpec::default(),
            camera: CameraParams::default(),
            constraints: ConstraintConfig::default(),
            noise_model: NoiseModel::ReflectiveLinear(ReflectiveParams::default()),
            glare_exponent: DEFAULT_GLARE_EXPONENT,
            belief_mode: BeliefMode::Position,
            motion_noise: MotionNoise::default(),
            strategy: Strategy::De,
            de: DeParams::default(),
            brute_grid: [8, 7, 5, 16, 3],
            random_max_attempts: 10_000,
            elevation_bounds: [10f64.to_radians(), 70f64.to_radians()],
            range_margin: 0.25,
            start: [5.0, 5.0],
            waypoints: default_waypoints(),
            initial_sigma: 0.05,
            prior_regularization: 1e-6,
            record_timing: false,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn search_bounds(&self) -> SearchBounds<f64> {
        let mut b = SearchBounds::for_camera(&self.camera, self.elevation_bounds);
        b.rho = [b.rho[0] + self.range_margin, b.rho[1] - self.range_margin];
        b
    }

    pub fn motion_model(&self) -> MotionModel<f64> {
        self.motion_noise.model(self.belief_mode)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError(msg.to_string()));
        if self.seeds.is_empty() {
            return fail("seeds must not be empty");
        }
        if !self.camera.is_valid() {
            return fail("camera needs 0 < rho_min < rho_max and fields of view in (0, pi)");
        }
        if !self.constraints.is_valid() {
            return fail("constraint ray counts must be >= 1 and lengths positive");
        }
        let [lo, hi] = self.elevation_bounds;
        let limit = std::f64::consts::FRAC_PI_2;
        if !(lo <= hi && lo > -limit && hi < limit) {
            return fail("elevation_bounds must be ordered and inside (-pi/2, pi/2)");
        }
        if !(self.range_margin >= 0.0 && 2.0 * self.range_margin < self.camera.rho_max - self.camera.rho_min) {
            return fail("range_margin must be non-negative and leave a range to search");
        }
        if !self.search_bounds().fits_camera(&self.camera) {
            return fail("search bounds exceed the camera range or field of view");
        }
        let m = &self.map;
        let ws = &m.workspace;
        if !(ws.xmin < ws.xmax && ws.ymin < ws.ymax) {
            return fail("workspace must have positive extent");
        }
        if !(m.resolution > 0.0 && m.diameter_min > 0.0 && m.diameter_min <= m.diameter_max && m.obstacle_height > 0.0) {
            return fail("map resolution, diameters and height must be positive and ordered");
        }
        if !(m.sun_elevation_min > 0.0 && m.sun_elevation_min <= m.sun_elevation_max && m.sun_elevation_max < limit) {
            return fail("sun elevation band must lie inside (0, pi/2)");
        }
        if !(self.glare_exponent > 0.0) {
            return fail("glare_exponent must be positive");
        }
        let mn = &self.motion_noise;
        if !(mn.position_sigma >= 0.0 && mn.heading_sigma >= 0.0) {
            return fail("motion noise must be non-negative");
        }
        let de = &self.de;
        if de.pop_size < 4 || !(de.scale > 0.0 && de.scale <= 2.0) || !(0.0..=1.0).contains(&de.crossover) {
            return fail("de needs pop_size >= 4, 0 < scale <= 2, 0 <= crossover <= 1");
        }
        if self.brute_grid.contains(&0) || self.random_max_attempts == 0 {
            return fail("brute_grid sizes and random_max_attempts must be >= 1");
        }
        if self.mode == Mode::Sim && self.waypoints.is_empty() {
            return fail("sim needs at least one waypoint");
        }
        let inside = |p: &[f64; 2]| p[0] >= ws.xmin && p[0] <= ws.xmax && p[1] >= ws.ymin && p[1] <= ws.ymax;
        if !inside(&self.start) || !self.waypoints.iter().all(inside) {
            return fail("start and waypoints must lie inside the workspace");
        }
        if !(self.initial_sigma >= 0.0 && self.prior_regularization >= 0.0) {
            return fail("initial_sigma and prior_regularization must be non-negative");
        }
        Ok(())
    }
}
