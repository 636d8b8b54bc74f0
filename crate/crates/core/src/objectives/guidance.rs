use crate::error::{Error, Result};
use crate::mesh::{centroid, TriMesh, Vec3};
use crate::raster::{render_opacity, Camera, OpacityMap};

/// What a guidance sees at one optimizer step.
#[derive(Debug, Clone, Copy)]
pub struct GuidanceContext<'a> {
    pub vertices: &'a [Vec3],
    pub source: &'a TriMesh,
    /// Camera sampled for this step.
    pub camera: &'a Camera,
    /// Soft silhouette under `camera`, present when the guidance asked for it.
    pub opacity: Option<&'a OpacityMap>,
    pub sigma: f64,
    pub iteration: usize,
    pub prompt: &'a str,
}

/// Gradient with respect to a soft silhouette, to be pulled back through the
/// rasterizer under `camera`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpacityGradient {
    pub camera: Camera,
    pub sigma: f64,
    /// The silhouette the gradient refers to.
    pub opacity: OpacityMap,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceResult {
    pub loss: f64,
    pub vertex_gradient: Option<Vec<Vec3>>,
    pub opacity_gradient: Option<OpacityGradient>,
}

impl GuidanceResult {
    /// Loss value without any gradient signal.
    pub fn loss_only(loss: f64) -> Self {
        Self {
            loss,
            vertex_gradient: None,
            opacity_gradient: None,
        }
    }

    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        if !self.loss.is_finite() {
            return Err(Error::NonFinite("guidance loss".into()));
        }
        if let Some(g) = &self.vertex_gradient {
            if g.len() != vertex_count {
                return Err(Error::LengthMismatch {
                    what: "guidance vertex gradient",
                    expected: vertex_count,
                    actual: g.len(),
                });
            }
            if g.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
                return Err(Error::NonFinite("guidance vertex gradient".into()));
            }
        }
        if let Some(g) = &self.opacity_gradient {
            if g.values.len() != g.opacity.values.len() {
                return Err(Error::LengthMismatch {
                    what: "guidance opacity gradient",
                    expected: g.opacity.values.len(),
                    actual: g.values.len(),
                });
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("guidance opacity gradient".into()));
            }
        }
        Ok(())
    }
}

/// Source of the guidance term. Implementations return a gradient signal;
/// the loss value is reported for logging.
pub trait Guidance {
    fn evaluate(&mut self, ctx: &GuidanceContext<'_>) -> Result<GuidanceResult>;

    /// Whether the optimizer should render the step camera's silhouette into
    /// the context.
    fn needs_opacity(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

/// Pulls listed vertices toward fixed 3D targets.
#[derive(Debug, Clone)]
pub struct TargetLandmarkGuidance {
    targets: Vec<(usize, Vec3)>,
}

impl TargetLandmarkGuidance {
    pub fn new(targets: Vec<(usize, Vec3)>, mesh: &TriMesh) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Invalid("landmark guidance needs at least one target".into()));
        }
        if let Some((v, _)) = targets.iter().find(|(v, _)| *v >= mesh.vertex_count()) {
            return Err(Error::Invalid(format!(
                "target vertex {v} out of range ({} vertices)",
                mesh.vertex_count()
            )));
        }
        if targets.iter().any(|(_, t)| !t.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("landmark target".into()));
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[(usize, Vec3)] {
        &self.targets
    }

    pub fn loss_and_gradient(&self, vertices: &[Vec3]) -> (f64, Vec<Vec3>) {
        let n = self.targets.len() as f64;
        let mut grad = vec![Vec3::zeros(); vertices.len()];
        let mut loss = 0.0;
        for (v, t) in &self.targets {
            let d = vertices[*v] - t;
            loss += d.norm_squared();
            grad[*v] += d * (2.0 / n);
        }
        (loss / n, grad)
    }
}

impl Guidance for TargetLandmarkGuidance {
    fn evaluate(&mut self, ctx: &GuidanceContext<'_>) -> Result<GuidanceResult> {
        let (loss, grad) = self.loss_and_gradient(ctx.vertices);
        Ok(GuidanceResult {
            loss,
            vertex_gradient: Some(grad),
            opacity_gradient: None,
        })
    }

    fn name(&self) -> &str {
        "target-landmarks"
    }
}

/// Matches the soft silhouette to a target under a fixed set of views,
/// cycling through them one per step.
#[derive(Debug, Clone)]
pub struct TargetSilhouetteGuidance {
    views: Vec<(Camera, OpacityMap)>,
    sigma: f64,
}

impl TargetSilhouetteGuidance {
    pub fn new(views: Vec<(Camera, OpacityMap)>, sigma: f64) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Invalid("silhouette guidance needs at least one view".into()));
        }
        for (cam, target) in &views {
            cam.validate()?;
            if cam.width != target.width || cam.height != target.height {
                return Err(Error::Invalid(format!(
                    "target silhouette is {}x{} but the camera renders {}x{}",
                    target.width, target.height, cam.width, cam.height
                )));
            }
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Invalid(format!("rasterizer sigma must be positive, got {sigma}")));
        }
        Ok(Self { views, sigma })
    }

    /// Renders `target_mesh` under each camera to build the targets.
    pub fn from_mesh(target_mesh: &TriMesh, cameras: Vec<Camera>, sigma: f64) -> Result<Self> {
        let views = cameras
            .into_iter()
            .map(|cam| {
                let o = render_opacity(target_mesh.vertices(), target_mesh.faces(), &cam, sigma)?;
                Ok((cam, o))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(views, sigma)
    }

    pub fn views(&self) -> &[(Camera, OpacityMap)] {
        &self.views
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Loss against view `index` and the gradient with respect to the
    /// rendered silhouette.
    pub fn evaluate_view(&self, vertices: &[Vec3], faces: &[[usize; 3]], index: usize) -> Result<GuidanceResult> {
        let (cam, target) = &self.views[index % self.views.len()];
        let rendered = render_opacity(vertices, faces, cam, self.sigma)?;
        let (loss, grad) = super::opacity_loss(target, &rendered)?;
        Ok(GuidanceResult {
            loss,
            vertex_gradient: None,
            opacity_gradient: Some(OpacityGradient {
                camera: cam.clone(),
                sigma: self.sigma,
                opacity: rendered,
                values: grad,
            }),
        })
    }
}

impl Guidance for TargetSilhouetteGuidance {
    fn evaluate(&mut self, ctx: &GuidanceContext<'_>) -> Result<GuidanceResult> {
        self.evaluate_view(ctx.vertices, ctx.source.faces(), ctx.iteration)
    }

    fn name(&self) -> &str {
        "target-silhouette"
    }
}

/// Drives the RMS radius of a labeled region, relative to its source value,
/// toward `scale_target`.
#[derive(Debug, Clone)]
pub struct RegionScaleGuidance {
    label: i64,
    vertices: Vec<usize>,
    source_radius: f64,
    scale_target: f64,
}

fn rms_radius(points: &[Vec3], idx: &[usize]) -> (Vec3, f64) {
    let sel: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
    let c = centroid(&sel);
    let ms = sel.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / sel.len() as f64;
    (c, ms.sqrt())
}

impl RegionScaleGuidance {
    pub fn new(mesh: &TriMesh, label: i64, scale_target: f64) -> Result<Self> {
        if mesh.region_labels().is_none() {
            return Err(Error::Invalid("mesh has no region labels".into()));
        }
        let vertices = mesh.region_vertices(label);
        if vertices.is_empty() {
            return Err(Error::Invalid(format!("unknown region id {label}")));
        }
        let (_, source_radius) = rms_radius(mesh.vertices(), &vertices);
        if !(source_radius > 0.0) {
            return Err(Error::Invalid(format!("region {label} has zero extent")));
        }
        if !scale_target.is_finite() {
            return Err(Error::NonFinite("region scale target".into()));
        }
        Ok(Self {
            label,
            vertices,
            source_radius,
            scale_target,
        })
    }

    pub fn label(&self) -> i64 {
        self.label
    }

    pub fn region_vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Current radius over source radius.
    pub fn ratio(&self, vertices: &[Vec3]) -> f64 {
        rms_radius(vertices, &self.vertices).1 / self.source_radius
    }

    pub fn loss_and_gradient(&self, vertices: &[Vec3]) -> (f64, Vec<Vec3>) {
        let (c, r) = rms_radius(vertices, &self.vertices);
        let ratio = r / self.source_radius;
        let residual = ratio - self.scale_target;
        let mut grad = vec![Vec3::zeros(); vertices.len()];
        if r > 0.0 {
            // the centroid term drops out because Σ (p_i - c) = 0
            let k = 2.0 * residual / (self.source_radius * r * self.vertices.len() as f64);
            for &i in &self.vertices {
                grad[i] = (vertices[i] - c) * k;
            }
        }
        (residual * residual, grad)
    }
}

impl Guidance for RegionScaleGuidance {
    fn evaluate(&mut self, ctx: &GuidanceContext<'_>) -> Result<GuidanceResult> {
        let (loss, grad) = self.loss_and_gradient(ctx.vertices);
        Ok(GuidanceResult {
            loss,
            vertex_gradient: Some(grad),
            opacity_gradient: None,
        })
    }

    fn name(&self) -> &str {
        "region-scale"
    }
}
