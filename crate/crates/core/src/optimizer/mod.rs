//! The optimization loop over a weighted Jacobian field.

mod adam;
mod checkpoint;
mod config;

pub use adam::{adam_update, AdamParams};
pub use checkpoint::{load_run, read_run, save_run, write_run, RUN_MAGIC, RUN_VERSION};
pub use config::{CameraRanges, OptimConfig, CONFIG_KEYS};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{apply_mask, FieldGradient, JacobianField, Pinning, PoissonSystem};
use crate::mesh::{build_symmetry_map, Mat3, TriMesh, Vec3};
use crate::objectives::{landmark_loss, opacity_loss, total_loss, Guidance, GuidanceContext};
use crate::raster::{backward_opacity_from, render_opacity, Camera};

/// Per-step loss terms before weighting, plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub guidance: f64,
    pub landmark: f64,
    pub opacity: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub field: JacobianField,
    /// Adam moments in [`JacobianField::to_flat`] layout.
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// Completed steps.
    pub iteration: usize,
    pub history: Vec<LossRecord>,
    pub rng: ChaCha8Rng,
}

impl RunState {
    pub fn new(field: JacobianField, seed: u64) -> Self {
        let n = 10 * field.len();
        Self {
            field,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            iteration: 0,
            history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Camera on a sphere around `look_at`: azimuth about +y measured from +z,
/// elevation toward +y, each drawn uniformly from its configured range.
pub fn sample_camera(config: &OptimConfig, rng: &mut ChaCha8Rng, look_at: Vec3) -> Result<Camera> {
    let c = &config.cameras;
    let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.gen::<f64>();
    let az = draw(c.azimuth).to_radians();
    let el = draw(c.elevation).to_radians();
    let dist = draw(c.distance);
    camera_at(look_at, az, el, dist, c.fov_deg.to_radians(), config.width, config.height)
}

/// Camera at spherical coordinates (radians) around `look_at`, +y up.
pub fn camera_at(
    look_at: Vec3,
    azimuth: f64,
    elevation: f64,
    distance: f64,
    fov_y: f64,
    width: usize,
    height: usize,
) -> Result<Camera> {
    let dir = Vec3::new(
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
        elevation.cos() * azimuth.cos(),
    );
    Camera::look_at(look_at + dir * distance, look_at, Vec3::y(), fov_y, width, height)
}

/// Loop driver for one source mesh. Owns the factored Poisson system.
pub struct Optimizer<'a> {
    source: &'a TriMesh,
    system: PoissonSystem,
    config: OptimConfig,
    base: JacobianField,
    /// Mirror face per face and the reflection's linear part.
    symmetry: Option<(Vec<Option<usize>>, Mat3)>,
}

impl<'a> Optimizer<'a> {
    pub fn new(source: &'a TriMesh, config: OptimConfig) -> Result<Self> {
        config.validate()?;
        if let Some(mask) = &config.face_mask {
            if mask.len() != source.face_count() {
                return Err(Error::LengthMismatch {
                    what: "face mask",
                    expected: source.face_count(),
                    actual: mask.len(),
                });
            }
        }
        let system = PoissonSystem::assemble(source, Pinning::default())?;
        let symmetry = match &config.symmetry {
            None => None,
            Some(spec) => {
                let map = build_symmetry_map(source, spec, config.symmetry_tolerance)?;
                Some((map.mirror_faces(source.faces()), map.plane.reflection_matrix()))
            }
        };
        Ok(Self {
            source,
            system,
            base: JacobianField::identity(source.face_count()),
            config,
            symmetry,
        })
    }

    /// Starts from `base` instead of the identity field; frozen faces keep
    /// their values from it.
    pub fn with_base(mut self, base: JacobianField) -> Result<Self> {
        if base.len() != self.source.face_count() {
            return Err(Error::LengthMismatch {
                what: "base field",
                expected: self.source.face_count(),
                actual: base.len(),
            });
        }
        base.validate()?;
        self.base = base;
        Ok(self)
    }

    pub fn system(&self) -> &PoissonSystem {
        &self.system
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    pub fn source(&self) -> &TriMesh {
        self.source
    }

    pub fn initial_state(&self) -> RunState {
        RunState::new(self.base.clone(), self.config.seed)
    }

    /// Solved vertices for the state's current field.
    pub fn vertices(&self, state: &RunState) -> Result<Vec<Vec3>> {
        self.system.forward_solve(&state.field)
    }

    /// Mesh with the source's connectivity, UVs, landmarks and labels.
    pub fn deformed_mesh(&self, state: &RunState) -> Result<TriMesh> {
        Ok(self.source.with_vertices(self.vertices(state)?)?)
    }

    /// Gradient of the weighted objective with respect to the field, without
    /// updating anything. Also returns the step's loss record and camera.
    pub fn gradient(
        &self,
        state: &RunState,
        rng: &mut ChaCha8Rng,
        guidance: &mut dyn Guidance,
    ) -> Result<(FieldGradient, LossRecord)> {
        let cfg = &self.config;
        let lambda = cfg.weights;
        let iteration = state.iteration;
        let abort = |detail: String| Error::NumericalAbort { iteration, detail };
        let verts = self.system.forward_solve(&state.field)?;
        let faces = self.source.faces();
        let camera = sample_camera(cfg, rng, self.system.source_centroid())?;
        let use_opacity = lambda.opacity > 0.0;
        let rendered = if use_opacity || guidance.needs_opacity() {
            Some(render_opacity(&verts, faces, &camera, cfg.sigma)?)
        } else {
            None
        };

        let ctx = GuidanceContext {
            vertices: &verts,
            source: self.source,
            camera: &camera,
            opacity: rendered.as_ref(),
            sigma: cfg.sigma,
            iteration,
            prompt: &cfg.prompt,
        };
        let guided = guidance.evaluate(&ctx)?;
        guided
            .validate(verts.len())
            .map_err(|e| abort(format!("guidance {}: {e}", guidance.name())))?;

        let mut d_vertices = vec![Vec3::zeros(); verts.len()];
        if let Some(g) = &guided.vertex_gradient {
            for (d, g) in d_vertices.iter_mut().zip(g) {
                *d += g * lambda.guidance;
            }
        }

        let mut landmark = 0.0;
        if lambda.landmark > 0.0 && !self.source.landmarks().is_empty() {
            let (l, g) = landmark_loss(self.source, &verts)?;
            landmark = l;
            for (d, g) in d_vertices.iter_mut().zip(&g) {
                *d += g * lambda.landmark;
            }
        }

        // opacity-space gradients under the step camera are summed before
        // one pullback
        let mut step_image: Option<Vec<f64>> = None;
        let mut opacity = 0.0;
        if use_opacity {
            let template = render_opacity(self.source.vertices(), faces, &camera, cfg.sigma)?;
            let (l, g) = opacity_loss(&template, rendered.as_ref().expect("rendered above"))?;
            opacity = l;
            step_image = Some(g.iter().map(|v| v * lambda.opacity).collect());
        }
        if let Some(og) = &guided.opacity_gradient {
            let scaled = og.values.iter().map(|v| v * lambda.guidance);
            let same_view = og.camera == camera && og.sigma == cfg.sigma && Some(&og.opacity) == rendered.as_ref();
            if same_view {
                let acc = step_image.get_or_insert_with(|| vec![0.0; og.values.len()]);
                for (a, s) in acc.iter_mut().zip(scaled) {
                    *a += s;
                }
            } else {
                let values: Vec<f64> = scaled.collect();
                let g = backward_opacity_from(&verts, faces, &og.camera, og.sigma, &og.opacity, &values)?;
                for (d, g) in d_vertices.iter_mut().zip(&g) {
                    *d += g;
                }
            }
        }
        if let Some(img) = &step_image {
            let g = backward_opacity_from(
                &verts,
                faces,
                &camera,
                cfg.sigma,
                rendered.as_ref().expect("rendered above"),
                img,
            )?;
            for (d, g) in d_vertices.iter_mut().zip(&g) {
                *d += g;
            }
        }

        let total = total_loss(&lambda, &guided, landmark, opacity);
        if !total.is_finite() {
            return Err(abort(format!(
                "non-finite loss (guidance {}, landmark {landmark}, opacity {opacity})",
                guided.loss
            )));
        }
        if d_vertices.iter().any(|g| !g.iter().all(|c| c.is_finite())) {
            return Err(abort("non-finite vertex gradient".into()));
        }
        let mut grad = self.system.backward(&state.field, &d_vertices)?;
        if let Some(mask) = &cfg.face_mask {
            grad.mask(mask);
        }
        let record = LossRecord {
            iteration,
            guidance: guided.loss,
            landmark,
            opacity,
            total,
        };
        Ok((grad, record))
    }

    /// One iteration. On error the state is left untouched.
    pub fn step(&self, state: &mut RunState, guidance: &mut dyn Guidance) -> Result<LossRecord> {
        let mut rng = state.rng.clone();
        let (grad, record) = self.gradient(state, &mut rng, guidance)?;
        let cfg = &self.config;
        let m = state.field.len();
        let mut params = state.field.to_flat();
        let mut first = state.first_moment.clone();
        let mut second = state.second_moment.clone();
        let flat = grad.to_flat();
        let t = state.iteration as u64 + 1;
        let hp = |lr| AdamParams {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        };
        let (pj, pw) = params.split_at_mut(9 * m);
        let (fj, fw) = first.split_at_mut(9 * m);
        let (sj, sw) = second.split_at_mut(9 * m);
        adam_update(pj, &flat[..9 * m], fj, sj, hp(cfg.lr_jacobian), t)?;
        adam_update(pw, &flat[9 * m..], fw, sw, hp(cfg.lr_weight), t)?;
        let mut field = JacobianField::from_flat(&params)?;
        if let Some((mirror, r)) = &self.symmetry {
            field = mirror_average(&field, mirror, r);
        }
        if let Some(mask) = &cfg.face_mask {
            field = apply_mask(&field, &self.base, mask)?;
        }
        if field.validate().is_err() {
            return Err(Error::NumericalAbort {
                iteration: state.iteration,
                detail: "field became non-finite after the update".into(),
            });
        }
        state.field = field;
        state.first_moment = first;
        state.second_moment = second;
        state.rng = rng;
        state.iteration += 1;
        state.history.push(record);
        Ok(record)
    }

    /// Runs until `config.iterations` steps are complete, writing a run
    /// checkpoint to `checkpoint` every `checkpoint_interval` steps and at the
    /// end. `on_step` sees the state after every step.
    pub fn run(
        &self,
        state: &mut RunState,
        guidance: &mut dyn Guidance,
        checkpoint: Option<&Path>,
        mut on_step: impl FnMut(&RunState) -> Result<()>,
    ) -> Result<()> {
        let interval = self.config.checkpoint_interval;
        while state.iteration < self.config.iterations {
            self.step(state, guidance)?;
            if let Some(path) = checkpoint {
                if interval > 0 && state.iteration.is_multiple_of(interval) {
                    save_run(path, &self.config, state)?;
                }
            }
            on_step(state)?;
        }
        if let Some(path) = checkpoint {
            save_run(path, &self.config, state)?;
        }
        Ok(())
    }
}

/// Replaces each face's `(J, w)` with the average of itself and its mirror
/// face's reflected parameters `(R J' R, w')`.
pub fn mirror_average(field: &JacobianField, mirror: &[Option<usize>], r: &Mat3) -> JacobianField {
    let mut out = field.clone();
    for (f, m) in mirror.iter().enumerate() {
        if let Some(g) = *m {
            out.jacobians[f] = (field.jacobians[f] + r * field.jacobians[g] * r) * 0.5;
            out.weights[f] = 0.5 * (field.weights[f] + field.weights[g]);
        }
    }
    out
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mesh: TriMesh,
    pub field: JacobianField,
    pub history: Vec<LossRecord>,
}

/// Runs the whole schedule from the identity field.
pub fn run(source: &TriMesh, guidance: &mut dyn Guidance, config: &OptimConfig) -> Result<RunOutput> {
    let opt = Optimizer::new(source, config.clone())?;
    let mut state = opt.initial_state();
    opt.run(&mut state, guidance, None, |_| Ok(()))?;
    Ok(RunOutput {
        mesh: opt.deformed_mesh(&state)?,
        field: state.field,
        history: state.history,
    })
}

/// `iteration,guidance,landmark,opacity,total` with shortest round-trip
/// floats.
pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("iteration,guidance,landmark,opacity,total\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.guidance, r.landmark, r.opacity, r.total
        ));
    }
    out
}

pub fn save_loss_csv(path: impl AsRef<Path>, history: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, loss_csv(history)).map_err(|e| Error::io(PathBuf::from(path), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{primitives, PlaneSpec};
    use crate::objectives::{GuidanceResult, TargetLandmarkGuidance};

    struct Silent;

    impl Guidance for Silent {
        fn evaluate(&mut self, ctx: &GuidanceContext<'_>) -> Result<GuidanceResult> {
            Ok(GuidanceResult {
                loss: 0.0,
                vertex_gradient: Some(vec![Vec3::zeros(); ctx.vertices.len()]),
                opacity_gradient: None,
            })
        }

        fn name(&self) -> &str {
            "silent"
        }
    }

    fn small_config() -> OptimConfig {
        OptimConfig {
            iterations: 5,
            width: 32,
            height: 32,
            checkpoint_interval: 0,
            ..OptimConfig::default()
        }
    }

    #[test]
    fn degenerate_range_is_exact() {
        let mut cfg = small_config();
        cfg.cameras.azimuth = (30.0, 30.0);
        cfg.cameras.elevation = (0.0, 0.0);
        cfg.cameras.distance = (3.0, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cam = sample_camera(&cfg, &mut rng, Vec3::zeros()).unwrap();
        let az = cam.position[0].atan2(cam.position[2]).to_degrees();
        assert!((az - 30.0).abs() < 1e-12);
        assert!((cam.position().norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn camera_sequence_is_seeded() {
        let cfg = small_config();
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| sample_camera(&cfg, &mut rng, Vec3::zeros()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(3), seq(3));
        assert_ne!(seq(3), seq(4));
    }

    #[test]
    fn azimuth_histogram_is_uniform() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bins = 12;
        let mut counts = vec![0usize; bins];
        let n = 10_000;
        for _ in 0..n {
            let cam = sample_camera(&cfg, &mut rng, Vec3::zeros()).unwrap();
            let az = cam.position[0].atan2(cam.position[2]).to_degrees();
            let b = (((az + 180.0) / 360.0 * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let p = 1.0 / bins as f64;
        let expect = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() <= 3.0 * sd, "{c} vs {expect}");
        }
    }

    #[test]
    fn no_signal_leaves_field_unchanged() {
        let mesh = primitives::icosphere(1.0, 1);
        let mut cfg = small_config();
        cfg.weights.landmark = 0.0;
        cfg.weights.opacity = 0.0;
        let out = run(&mesh, &mut Silent, &cfg).unwrap();
        assert_eq!(out.field, JacobianField::identity(mesh.face_count()));
        assert_eq!(out.history.len(), 5);
    }

    #[test]
    fn landmark_guidance_decreases_loss() {
        let mesh = primitives::icosphere(1.0, 3);
        // stretch along x: far enough that 50 steps stay in the descent phase
        let targets: Vec<(usize, Vec3)> = [0, 57, 100, 211, 300, 480]
            .iter()
            .map(|&v| (v, mesh.vertices()[v].component_mul(&Vec3::new(3.0, 1.0, 1.0))))
            .collect();
        let mut g = TargetLandmarkGuidance::new(targets, &mesh).unwrap();
        let cfg = OptimConfig {
            iterations: 50,
            lr_jacobian: 1e-2,
            lr_weight: 1e-2,
            weights: crate::objectives::LossWeights {
                guidance: 1.0,
                landmark: 0.0,
                opacity: 0.0,
            },
            ..small_config()
        };
        let out = run(&mesh, &mut g, &cfg).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1].total < w[0].total, "{} -> {}", w[0].total, w[1].total);
        }
    }

    #[test]
    fn masked_faces_get_zero_gradient_and_stay_frozen() {
        let mesh = primitives::icosphere(1.0, 2);
        let mask: Vec<bool> = (0..mesh.face_count()).map(|f| mesh.face_corners(f)[0].x > 0.3).collect();
        let mut g = TargetLandmarkGuidance::new(vec![(0, Vec3::new(2.0, 2.0, 2.0))], &mesh).unwrap();
        let cfg = OptimConfig {
            face_mask: Some(mask.clone()),
            ..small_config()
        };
        let opt = Optimizer::new(&mesh, cfg).unwrap();
        let mut state = opt.initial_state();
        for _ in 0..5 {
            let mut rng = state.rng.clone();
            let (grad, _) = opt.gradient(&state, &mut rng, &mut g).unwrap();
            for (f, keep) in mask.iter().enumerate() {
                if !keep {
                    assert_eq!(grad.d_jacobians[f], Mat3::zeros());
                    assert_eq!(grad.d_weights[f], 0.0);
                }
            }
            opt.step(&mut state, &mut g).unwrap();
        }
        for (f, keep) in mask.iter().enumerate() {
            if !keep {
                assert_eq!(state.field.jacobians[f], Mat3::identity());
                assert_eq!(state.field.weights[f], 1.0);
            }
        }
    }

    #[test]
    fn symmetric_setup_stays_symmetric() {
        let mesh = primitives::icosphere(1.0, 2);
        let map = build_symmetry_map(&mesh, &PlaneSpec::AxisThroughCentroid(0), 1e-6).unwrap();
        // symmetric guidance: a pair of mirrored vertices pulled to mirrored targets
        let (a, b) = map.pairs[10];
        let ta = mesh.vertices()[a] * 1.4;
        let tb = map.plane.reflect(&ta);
        let mut g = TargetLandmarkGuidance::new(vec![(a, ta), (b, tb)], &mesh).unwrap();
        let cfg = OptimConfig {
            iterations: 20,
            symmetry: Some(PlaneSpec::AxisThroughCentroid(0)),
            ..small_config()
        };
        let out = run(&mesh, &mut g, &cfg).unwrap();
        let v = out.mesh.vertices();
        let mut worst = 0.0f64;
        for &(p, q) in &map.pairs {
            worst = worst.max((map.plane.reflect(&v[p]) - v[q]).amax());
        }
        assert!(worst <= 1e-6, "{worst}");
        assert!(out.history.last().unwrap().guidance < out.history[0].guidance);
    }

    #[test]
    fn csv_layout() {
        let h = [LossRecord {
            iteration: 0,
            guidance: 0.5,
            landmark: 0.0,
            opacity: 0.25,
            total: 63.0,
        }];
        assert_eq!(loss_csv(&h), "iteration,guidance,landmark,opacity,total\n0,0.5,0,0.25,63\n");
    }
}
