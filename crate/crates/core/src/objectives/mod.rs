//! Regularizers, their combination, and the guidance interface.

mod guidance;

pub use guidance::{
    Guidance, GuidanceContext, GuidanceResult, OpacityGradient, RegionScaleGuidance,
    TargetLandmarkGuidance, TargetSilhouetteGuidance,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SymmetryMap, TriMesh, Vec3};
use crate::raster::OpacityMap;

/// Weights of the guidance, landmark and opacity terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub guidance: f64,
    pub landmark: f64,
    pub opacity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            guidance: 1.0,
            landmark: 200.0,
            opacity: 250.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_guidance", self.guidance),
            ("lambda_landmark", self.landmark),
            ("lambda_opacity", self.opacity),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Mean squared 3D distance between the source landmarks and the same
/// vertices after deformation, with its vertex gradient.
pub fn landmark_loss(source: &TriMesh, deformed: &[Vec3]) -> Result<(f64, Vec<Vec3>)> {
    let lm = source.landmarks();
    if lm.is_empty() {
        return Err(Error::Invalid("landmark loss needs at least one landmark".into()));
    }
    if deformed.len() != source.vertex_count() {
        return Err(Error::LengthMismatch {
            what: "deformed vertices",
            expected: source.vertex_count(),
            actual: deformed.len(),
        });
    }
    let n = lm.len() as f64;
    let mut grad = vec![Vec3::zeros(); deformed.len()];
    let mut loss = 0.0;
    for &v in lm {
        let d = deformed[v] - source.vertices()[v];
        loss += d.norm_squared();
        grad[v] += d * (2.0 / n);
    }
    Ok((loss / n, grad))
}

/// Mean squared pixel difference and its gradient with respect to `deformed`.
pub fn opacity_loss(source: &OpacityMap, deformed: &OpacityMap) -> Result<(f64, Vec<f64>)> {
    if !source.same_shape(deformed) {
        return Err(Error::Invalid(format!(
            "opacity maps differ in size: {}x{} vs {}x{}",
            source.width, source.height, deformed.width, deformed.height
        )));
    }
    let hw = source.values.len() as f64;
    let mut loss = 0.0;
    let grad = source
        .values
        .iter()
        .zip(&deformed.values)
        .map(|(o, op)| {
            let d = op - o;
            loss += d * d;
            2.0 * d / hw
        })
        .collect();
    Ok((loss / hw, grad))
}

/// Makes `vertices` exactly mirror-symmetric: each pair is replaced by the
/// average of one side and the reflection of the other, on-plane vertices are
/// projected onto the plane. Applying it twice changes nothing.
pub fn symmetry_project(vertices: &[Vec3], map: &SymmetryMap) -> Vec<Vec3> {
    let plane = &map.plane;
    let mut out = vertices.to_vec();
    for &(a, b) in &map.pairs {
        if plane.reflect(&out[a]) == out[b] {
            continue;
        }
        let m = (out[a] + plane.reflect(&out[b])) * 0.5;
        out[a] = m;
        out[b] = plane.reflect(&m);
    }
    for &v in &map.fixed {
        // settle on a floating-point fixed point of the projection
        for _ in 0..4 {
            let q = plane.project(&out[v]);
            if q == out[v] {
                break;
            }
            out[v] = q;
        }
    }
    out
}

/// `λ₁·guidance + λ₂·landmark + λ₃·opacity`.
pub fn total_loss(weights: &LossWeights, guidance: &GuidanceResult, landmark: f64, opacity: f64) -> f64 {
    weights.guidance * guidance.loss + weights.landmark * landmark + weights.opacity * opacity
}
