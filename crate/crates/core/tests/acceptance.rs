//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use jacdeform::field::{interpolate, Pinning, PoissonSystem};
use jacdeform::mesh::{build_symmetry_map, parse_obj, primitives, write_obj, PlaneSpec};
use jacdeform::metrics::{self_intersection_ratio, IntersectionMode};
use jacdeform::objectives::{landmark_loss, opacity_loss, symmetry_project, total_loss, Guidance, GuidanceResult, LossWeights, TargetSilhouetteGuidance};
use jacdeform::optimizer::{loss_csv, save_run, OptimConfig, Optimizer};
use jacdeform::raster::{backward_opacity, render_opacity, Camera, OpacityMap};
use jacdeform::{JacobianField, Mat3, TriMesh, Vec3};
use rand::Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn identity_reproduction() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for mesh in corpus() {
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        let v = sys.forward_solve(&JacobianField::identity(mesh.face_count())).unwrap();
        worst = worst.max(max_abs_diff(&v, mesh.vertices()));
    }
    let t = start.elapsed();
    outcome(worst <= 1e-8 && within(t, 5.0), format!("max |dV| = {worst:.2e} over 4 meshes, {t:.2?}"))
}

fn linear_reproduction() -> Outcome {
    let start = Instant::now();
    let mesh = primitives::icosphere(1.0, 3);
    let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
    let mut rng = rng(20);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = random_matrix(&mut rng, 0.8);
        let v = sys.forward_solve(&JacobianField::constant(mesh.face_count(), a, 1.0)).unwrap();
        let mapped: Vec<Vec3> = mesh.vertices().iter().map(|p| a * p).collect();
        let shift = jacdeform::mesh::centroid(&v) - jacdeform::mesh::centroid(&mapped);
        let aligned: Vec<Vec3> = mapped.iter().map(|p| p + shift).collect();
        worst = worst.max(max_abs_diff(&v, &aligned));
    }
    let t = start.elapsed();
    outcome(worst <= 1e-6 && within(t, 10.0), format!("max error {worst:.2e} over 20 maps, {t:.2?}"))
}

/// Loss `Σ c_i |v_i - t_i|²` with random `c` and `t`.
struct Quadratic {
    c: Vec<f64>,
    t: Vec<Vec3>,
}

impl Quadratic {
    fn new(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        Self {
            c: (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
            t: (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect(),
        }
    }

    fn value(&self, v: &[Vec3]) -> f64 {
        v.iter().zip(&self.t).zip(&self.c).map(|((p, t), c)| c * (p - t).norm_squared()).sum()
    }

    fn gradient(&self, v: &[Vec3]) -> Vec<Vec3> {
        v.iter().zip(&self.t).zip(&self.c).map(|((p, t), c)| (p - t) * (2.0 * c)).collect()
    }
}

fn adjoint_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(50);
    let mut worst: f64 = 0.0;
    let meshes = [primitives::icosphere(1.0, 3), primitives::crumpled(2, 0.3, 11)];
    for mesh in &meshes {
        let sys = PoissonSystem::assemble(mesh, Pinning::default()).unwrap();
        let field = random_field(&mut rng, mesh.face_count());
        let loss = Quadratic::new(mesh.vertex_count(), &mut rng);
        let v = sys.forward_solve(&field).unwrap();
        let grad = sys.backward(&field, &loss.gradient(&v)).unwrap().to_flat();
        let base = field.to_flat();
        let eval = |flat: &[f64]| loss.value(&sys.forward_solve(&JacobianField::from_flat(flat).unwrap()).unwrap());
        for _ in 0..25 {
            let k = rng.gen_range(0..base.len());
            let h = 1e-5;
            let mut p = base.clone();
            p[k] += h;
            let lp = eval(&p);
            p[k] -= 2.0 * h;
            let lm = eval(&p);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    let t = start.elapsed();
    outcome(worst <= 1e-4 && within(t, 60.0), format!("worst relative error {worst:.2e} over 50 parameters, {t:.2?}"))
}

fn scale_about(points: &[Vec3], center: Vec3, s: f64) -> Vec<Vec3> {
    points.iter().map(|p| center + (p - center) * s).collect()
}

fn linearity_and_scaling() -> Outcome {
    let mesh = primitives::icosphere(1.0, 3);
    let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
    let c = sys.source_centroid();
    let mut rng = rng(7);
    let field = random_field(&mut rng, mesh.face_count());
    let v1 = sys.forward_solve(&field).unwrap();
    let mut scaling: f64 = 0.0;
    for s in [0.5, 2.0, 3.7] {
        let mut scaled = field.clone();
        scaled.weights.iter_mut().for_each(|w| *w *= s);
        let vs = sys.forward_solve(&scaled).unwrap();
        scaling = scaling.max(max_abs_diff(&vs, &scale_about(&v1, c, s)));
    }
    let m = mesh.face_count();
    let identity = JacobianField::identity(m);
    let mut midpoint: f64 = 0.0;
    for doubled in [JacobianField::constant(m, Mat3::identity() * 2.0, 1.0), JacobianField::constant(m, Mat3::identity(), 2.0)] {
        let mid = interpolate(&identity, &doubled, 0.5).unwrap();
        let v = sys.forward_solve(&mid).unwrap();
        midpoint = midpoint.max(max_abs_diff(&v, &scale_about(mesh.vertices(), c, 1.5)));
    }
    outcome(
        scaling <= 1e-8 && midpoint <= 1e-6,
        format!("weight scaling error {scaling:.2e}, midpoint scale-1.5 error {midpoint:.2e}"),
    )
}

fn random_scene(rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let faces = rng.gen_range(5..=20);
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for f in 0..faces {
        let c = Vec3::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7), rng.gen_range(-0.5..0.5));
        for _ in 0..3 {
            verts.push(c + Vec3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.2..0.2)));
        }
        // alternate windings so both culled and visible faces occur
        tris.push(if f % 4 == 3 { [3 * f, 3 * f + 2, 3 * f + 1] } else { [3 * f, 3 * f + 1, 3 * f + 2] });
    }
    (verts, tris)
}

fn raster_gradient_check() -> Outcome {
    let start = Instant::now();
    let cam = Camera::look_at(Vec3::new(0.3, 0.2, 3.0), Vec3::zeros(), Vec3::y(), 45f64.to_radians(), 64, 64).unwrap();
    let sigma = 3.0;
    let mut rng = rng(64);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..5 {
        let (verts, faces) = random_scene(&mut rng);
        let weights: Vec<f64> = (0..64 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |v: &[Vec3]| -> f64 {
            let o = render_opacity(v, &faces, &cam, sigma).unwrap();
            o.values.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let grad = backward_opacity(&verts, &faces, &cam, sigma, &weights).unwrap();
        let scale = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);
        for i in 0..verts.len() {
            for c in 0..3 {
                let h = 1e-6;
                let mut v = verts.clone();
                v[i][c] += h;
                let lp = loss(&v);
                v[i][c] -= 2.0 * h;
                let lm = loss(&v);
                let fd = (lp - lm) / (2.0 * h);
                let g = grad[i][c];
                // culled faces have exactly zero gradient on both sides
                let denom = fd.abs().max(g.abs());
                if denom == 0.0 {
                    continue;
                }
                let rel = (fd - g).abs() / denom.max(1e-6 * scale);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-4 && within(t, 30.0),
        format!("worst relative error {worst:.2e} over {checked} coordinates in 5 scenes, {t:.2?}"),
    )
}

fn regularizers() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // dyadic coordinates keep every difference exact
    let mesh = TriMesh::new(
        "dyadic",
        vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.5)],
        vec![[0, 1, 2]],
    )
    .unwrap()
    .with_landmarks(vec![0, 2])
    .unwrap();
    let mut moved = mesh.vertices().to_vec();
    moved[0] += Vec3::new(0.5, 0.0, 0.0);
    moved[2] += Vec3::new(0.0, 0.25, 0.5);
    let (l, g) = landmark_loss(&mesh, &moved).unwrap();
    let ok = l == 0.28125 && g[0] == Vec3::new(0.5, 0.0, 0.0) && g[1] == Vec3::zeros() && g[2] == Vec3::new(0.0, 0.25, 0.5);
    pass &= ok;
    notes.push(format!("landmark {l}"));

    let src = OpacityMap::from_values(2, 2, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
    let def = OpacityMap::from_values(2, 2, vec![0.5; 4]).unwrap();
    let (o, og) = opacity_loss(&src, &def).unwrap();
    let ok = o == 0.140625 && og == vec![0.25, -0.25, 0.0, 0.125];
    pass &= ok;
    notes.push(format!("opacity {o}"));

    let sphere = primitives::icosphere(1.0, 3);
    let map = build_symmetry_map(&sphere, &PlaneSpec::Axis(0, 0.0), 1e-9).unwrap();
    let mut r = rng(3);
    let noisy: Vec<Vec3> = sphere.vertices().iter().map(|p| p + Vec3::new(r.gen(), r.gen(), r.gen()) * 0.05).collect();
    let once = symmetry_project(&noisy, &map);
    let twice = symmetry_project(&once, &map);
    let ok = once == twice && map.pairs.len() > 100;
    pass &= ok;
    notes.push(format!("projection idempotent {}", once == twice));

    let guided = GuidanceResult::loss_only(0.3);
    let paper = LossWeights::default();
    let expect = 0.3 + 200.0 * 0.02 + 250.0 * 0.004;
    let combined = total_loss(&paper, &guided, 0.02, 0.004);
    let mut linear = (paper.guidance, paper.landmark, paper.opacity) == (1.0, 200.0, 250.0) && (combined - expect).abs() <= 1e-15 * expect;
    for _ in 0..20 {
        let a = LossWeights {
            guidance: r.gen(),
            landmark: r.gen(),
            opacity: r.gen(),
        };
        let b = LossWeights {
            guidance: r.gen(),
            landmark: r.gen(),
            opacity: r.gen(),
        };
        let sum = LossWeights {
            guidance: a.guidance + b.guidance,
            landmark: a.landmark + b.landmark,
            opacity: a.opacity + b.opacity,
        };
        let lhs = total_loss(&sum, &guided, 0.02, 0.004);
        let rhs = total_loss(&a, &guided, 0.02, 0.004) + total_loss(&b, &guided, 0.02, 0.004);
        linear &= (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0);
    }
    pass &= linear;
    notes.push(format!("combination at (1, 200, 250) = {combined}, linear {linear}"));
    outcome(pass, notes.join(", "))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let (source, guidance, config) = sphere_to_ellipsoid();
    let reference = guidance.clone();
    let mut guidance = guidance;
    let opt = Optimizer::new(&source, config).unwrap();
    let mut state = opt.initial_state();
    let initial = silhouette_loss(&reference, source.vertices(), source.faces());
    opt.run(&mut state, &mut guidance as &mut dyn Guidance, None, |_| Ok(())).unwrap();
    let out = opt.deformed_mesh(&state).unwrap();
    let last = silhouette_loss(&reference, out.vertices(), out.faces());
    let (ratio, _) = self_intersection_ratio(&out, IntersectionMode::Bvh);
    let reread = parse_obj(&write_obj(&out), "output", "output").unwrap();
    let source_obj = parse_obj(&write_obj(&source), "input", "input").unwrap();
    let topology = out.faces() == source.faces()
        && out.uvs() == source.uvs()
        && reread.faces() == source_obj.faces()
        && reread.uvs() == source_obj.uvs();
    let t = start.elapsed();
    outcome(
        last <= 0.1 * initial && ratio == 0.0 && topology && within(t, 300.0),
        format!(
            "silhouette loss {initial:.3e} -> {last:.3e} ({:.2}%), self-intersection {ratio}, topology/UVs equal {topology}, {t:.1?}",
            100.0 * last / initial
        ),
    )
}

fn local_edit_containment() -> Outcome {
    let LocalEdit {
        mesh,
        guidance,
        config,
        near,
    } = local_edit();
    let mut g = guidance.clone();
    let opt = Optimizer::new(&mesh, config).unwrap();
    let mut state = opt.initial_state();
    opt.run(&mut state, &mut g as &mut dyn Guidance, None, |_| Ok(())).unwrap();
    let v = opt.vertices(&state).unwrap();
    let ratio = guidance.ratio(&v);
    let diag = mesh.bbox_diagonal();
    let outside = v
        .iter()
        .zip(mesh.vertices())
        .zip(&near)
        .filter(|(_, &n)| !n)
        .map(|((a, b), _)| (a - b).norm())
        .fold(0.0, f64::max)
        / diag;
    outcome(
        (ratio - 2.0).abs() <= 0.05 && outside <= 1e-2,
        format!("region ratio {ratio:.4}, max displacement outside 2-ring {outside:.2e} x diagonal"),
    )
}

fn self_intersection_metric() -> Outcome {
    let mut meshes = corpus();
    meshes.push(seven_pair_mesh());
    meshes.push(primitives::crumpled(2, 0.45, 3));
    let mut agree = true;
    let mut crumpled_pairs = 0;
    for m in &meshes {
        let (rb, pb) = self_intersection_ratio(m, IntersectionMode::Bvh);
        let (rf, pf) = self_intersection_ratio(m, IntersectionMode::Brute);
        agree &= pb == pf && rb == rf;
        if m.name == "crumpled" {
            crumpled_pairs += pf.len();
        }
    }
    let (_, seven) = self_intersection_ratio(&seven_pair_mesh(), IntersectionMode::Brute);
    let (sphere_ratio, _) = self_intersection_ratio(&primitives::icosphere(1.0, 3), IntersectionMode::Bvh);
    outcome(
        agree && seven.len() == 7 && sphere_ratio == 0.0,
        format!(
            "BVH = brute on {} meshes {agree}, constructed mesh {} pairs, crumpled meshes {crumpled_pairs} pairs, icosphere ratio {sphere_ratio}",
            meshes.len(),
            seven.len()
        ),
    )
}

fn run_artifacts(dir: &std::path::Path) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let mesh = primitives::icosphere(1.0, 2).with_landmarks(vec![0, 5, 17, 40]).unwrap();
    let target = primitives::ellipsoid(Vec3::new(1.2, 0.9, 1.0), 2);
    let mut guidance = TargetSilhouetteGuidance::from_mesh(&target, fixed_cameras(48), 1.5).unwrap();
    let config = OptimConfig {
        iterations: 15,
        width: 48,
        height: 48,
        sigma: 1.5,
        seed: 1234,
        ..Default::default()
    };
    let opt = Optimizer::new(&mesh, config.clone()).unwrap();
    let mut state = opt.initial_state();
    let ckpt = dir.join("run.jrun");
    opt.run(&mut state, &mut guidance as &mut dyn Guidance, Some(&ckpt), |_| Ok(())).unwrap();
    save_run(&ckpt, &config, &state).unwrap();
    let obj = write_obj(&opt.deformed_mesh(&state).unwrap()).into_bytes();
    (obj, std::fs::read(&ckpt).unwrap(), loss_csv(&state.history).into_bytes())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_artifacts(a.path());
    let second = run_artifacts(b.path());
    let same = [first.0 == second.0, first.1 == second.1, first.2 == second.2];
    outcome(
        same.iter().all(|&s| s),
        format!("OBJ equal {}, checkpoint equal {}, CSV equal {}", same[0], same[1], same[2]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("identity reproduction", identity_reproduction),
        ("linear reproduction", linear_reproduction),
        ("adjoint correctness", adjoint_correctness),
        ("solve linearity and weight scaling", linearity_and_scaling),
        ("rasterizer gradient check", raster_gradient_check),
        ("regularizer correctness", regularizers),
        ("end-to-end deformation", end_to_end),
        ("local edit containment", local_edit_containment),
        ("self-intersection metric", self_intersection_metric),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = check();
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        failed += usize::from(!result.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
