//! Run configuration and its flat `key = value` text form.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::PlaneSpec;
use crate::objectives::LossWeights;

/// Camera sampling ranges. Angles in degrees, distance in model units from
/// the look-at point.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRanges {
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
    pub distance: (f64, f64),
    pub fov_deg: f64,
}

impl Default for CameraRanges {
    fn default() -> Self {
        Self {
            azimuth: (-180.0, 180.0),
            elevation: (-30.0, 30.0),
            distance: (2.5, 3.5),
            fov_deg: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub iterations: usize,
    pub lr_jacobian: f64,
    pub lr_weight: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
    pub width: usize,
    pub height: usize,
    /// Rasterizer sharpness in pixels.
    pub sigma: f64,
    pub cameras: CameraRanges,
    pub seed: u64,
    /// Steps between run checkpoints; 0 writes only the final one.
    pub checkpoint_interval: usize,
    /// Steps between diagnostic renders; 0 disables them.
    pub diagnostic_interval: usize,
    /// Mirror-average the field across this plane every step.
    pub symmetry: Option<PlaneSpec>,
    pub symmetry_tolerance: f64,
    pub prompt: String,
    /// Faces allowed to change; `None` frees every face. Not part of the
    /// text form.
    pub face_mask: Option<Vec<bool>>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            lr_jacobian: 5e-3,
            lr_weight: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: LossWeights::default(),
            width: 256,
            height: 256,
            sigma: crate::raster::DEFAULT_SIGMA,
            cameras: CameraRanges::default(),
            seed: 0,
            checkpoint_interval: 100,
            diagnostic_interval: 100,
            symmetry: None,
            symmetry_tolerance: 1e-6,
            prompt: String::new(),
            face_mask: None,
        }
    }
}

/// Documented keys of the text form, in output order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("iterations", "number of optimizer steps (>= 1)"),
    ("lr_jacobian", "Adam learning rate for Jacobian entries"),
    ("lr_weight", "Adam learning rate for per-face weights"),
    ("beta1", "Adam first-moment decay in [0, 1)"),
    ("beta2", "Adam second-moment decay in [0, 1)"),
    ("epsilon", "Adam denominator offset"),
    ("lambda_guidance", "weight of the guidance term"),
    ("lambda_landmark", "weight of the landmark term"),
    ("lambda_opacity", "weight of the opacity term"),
    ("width", "render width in pixels"),
    ("height", "render height in pixels"),
    ("sigma", "rasterizer sharpness in pixels"),
    ("azimuth_min", "camera azimuth lower bound, degrees"),
    ("azimuth_max", "camera azimuth upper bound, degrees"),
    ("elevation_min", "camera elevation lower bound, degrees"),
    ("elevation_max", "camera elevation upper bound, degrees"),
    ("distance_min", "camera distance lower bound"),
    ("distance_max", "camera distance upper bound"),
    ("fov_deg", "vertical field of view, degrees"),
    ("seed", "random seed"),
    ("checkpoint_interval", "steps between checkpoints, 0 for final only"),
    ("diagnostic_interval", "steps between diagnostic renders, 0 to disable"),
    ("symmetry", "off, or x / y / z for a plane through the centroid"),
    ("symmetry_tolerance", "vertex matching tolerance for the symmetry map"),
    ("prompt", "text passed to remote guidance"),
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn symmetry_text(s: &Option<PlaneSpec>) -> Result<String> {
    match s {
        None => Ok("off".into()),
        Some(PlaneSpec::AxisThroughCentroid(a)) if *a < 3 => Ok(["x", "y", "z"][*a].into()),
        Some(other) => Err(Error::Config(format!(
            "symmetry plane {other:?} has no text form"
        ))),
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        for (k, v) in [("lr_jacobian", self.lr_jacobian), ("lr_weight", self.lr_weight)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{k} must be in [0, 1), got {v}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        self.weights.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.width == 0 || self.height == 0 {
            return bad("render resolution must be at least 1x1".into());
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        let c = &self.cameras;
        for (k, (lo, hi)) in [("azimuth", c.azimuth), ("elevation", c.elevation), ("distance", c.distance)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{k} range [{lo}, {hi}] is empty"));
            }
        }
        if c.elevation.0 <= -90.0 || c.elevation.1 >= 90.0 {
            return bad("elevation must stay strictly inside (-90, 90)".into());
        }
        if c.distance.0 <= 0.0 {
            return bad("camera distance must be positive".into());
        }
        if !(c.fov_deg > 0.0 && c.fov_deg < 180.0) {
            return bad(format!("fov_deg must be in (0, 180), got {}", c.fov_deg));
        }
        if !(self.symmetry_tolerance.is_finite() && self.symmetry_tolerance >= 0.0) {
            return bad("symmetry_tolerance must be non-negative".into());
        }
        Ok(())
    }

    /// Text form with every documented key.
    pub fn to_kv_string(&self) -> Result<String> {
        let c = &self.cameras;
        let values: Vec<String> = vec![
            self.iterations.to_string(),
            self.lr_jacobian.to_string(),
            self.lr_weight.to_string(),
            self.beta1.to_string(),
            self.beta2.to_string(),
            self.epsilon.to_string(),
            self.weights.guidance.to_string(),
            self.weights.landmark.to_string(),
            self.weights.opacity.to_string(),
            self.width.to_string(),
            self.height.to_string(),
            self.sigma.to_string(),
            c.azimuth.0.to_string(),
            c.azimuth.1.to_string(),
            c.elevation.0.to_string(),
            c.elevation.1.to_string(),
            c.distance.0.to_string(),
            c.distance.1.to_string(),
            c.fov_deg.to_string(),
            self.seed.to_string(),
            self.checkpoint_interval.to_string(),
            self.diagnostic_interval.to_string(),
            symmetry_text(&self.symmetry)?,
            self.symmetry_tolerance.to_string(),
            self.prompt.clone(),
        ];
        let mut out = String::new();
        for ((key, doc), value) in CONFIG_KEYS.iter().zip(values) {
            out.push_str(&format!("# {doc}\n{key} = {value}\n"));
        }
        Ok(out)
    }

    /// Overrides fields from `key = value` lines; `#` starts a comment line.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let c = &mut self.cameras;
        match key {
            "iterations" => self.iterations = parse_num(key, value)?,
            "lr_jacobian" => self.lr_jacobian = parse_num(key, value)?,
            "lr_weight" => self.lr_weight = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "lambda_guidance" => self.weights.guidance = parse_num(key, value)?,
            "lambda_landmark" => self.weights.landmark = parse_num(key, value)?,
            "lambda_opacity" => self.weights.opacity = parse_num(key, value)?,
            "width" => self.width = parse_num(key, value)?,
            "height" => self.height = parse_num(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "azimuth_min" => c.azimuth.0 = parse_num(key, value)?,
            "azimuth_max" => c.azimuth.1 = parse_num(key, value)?,
            "elevation_min" => c.elevation.0 = parse_num(key, value)?,
            "elevation_max" => c.elevation.1 = parse_num(key, value)?,
            "distance_min" => c.distance.0 = parse_num(key, value)?,
            "distance_max" => c.distance.1 = parse_num(key, value)?,
            "fov_deg" => c.fov_deg = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_num(key, value)?,
            "diagnostic_interval" => self.diagnostic_interval = parse_num(key, value)?,
            "symmetry" => {
                self.symmetry = match value {
                    "off" | "none" => None,
                    "x" => Some(PlaneSpec::AxisThroughCentroid(0)),
                    "y" => Some(PlaneSpec::AxisThroughCentroid(1)),
                    "z" => Some(PlaneSpec::AxisThroughCentroid(2)),
                    other => return Err(Error::Config(format!("unknown symmetry '{other}'"))),
                }
            }
            "symmetry_tolerance" => self.symmetry_tolerance = parse_num(key, value)?,
            "prompt" => self.prompt = value.to_string(),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over everything that affects the per-step numerics. The
    /// iteration count and output cadences are left out so a run can be
    /// resumed with a longer schedule.
    pub fn hash(&self) -> [u8; 32] {
        let mut probe = self.clone();
        probe.iterations = 1;
        probe.checkpoint_interval = 0;
        probe.diagnostic_interval = 0;
        let mut h = Sha256::new();
        match probe.to_kv_string() {
            Ok(text) => h.update(text.as_bytes()),
            Err(_) => h.update(format!("{:?}", probe.symmetry).as_bytes()),
        }
        if let Some(mask) = &self.face_mask {
            h.update(b"mask");
            h.update(mask.iter().map(|&b| b as u8).collect::<Vec<_>>());
        }
        h.finalize().into()
    }
}
