#![allow(dead_code)]

use jacdeform::mesh::primitives;
use jacdeform::objectives::{LossWeights, RegionScaleGuidance, TargetSilhouetteGuidance};
use jacdeform::optimizer::{camera_at, OptimConfig};
use jacdeform::raster::Camera;
use jacdeform::{JacobianField, Mat3, TriMesh, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn single_triangle() -> TriMesh {
    TriMesh::new(
        "triangle",
        vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.2, 0.9, 0.1)],
        vec![[0, 1, 2]],
    )
    .unwrap()
}

/// Triangle, quad-split plane, 1280-face icosphere and a crumpled sphere.
pub fn corpus() -> Vec<TriMesh> {
    vec![
        single_triangle(),
        primitives::grid(6, 4, 1.5, 1.0),
        primitives::icosphere(1.0, 3),
        primitives::crumpled(2, 0.3, 11),
    ]
}

/// Seven separate triangles in `z = 0`, one vertical blade in `y = 0.5`
/// crossing all of them, and one stray triangle far away: exactly seven
/// intersecting face pairs.
pub fn seven_pair_mesh() -> TriMesh {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for k in 0..7 {
        let x = 1.0 + 2.5 * k as f64;
        let base = verts.len();
        verts.extend([Vec3::new(x, 0.0, 0.0), Vec3::new(x + 1.0, 0.0, 0.0), Vec3::new(x + 0.5, 1.0, 0.0)]);
        faces.push([base, base + 1, base + 2]);
    }
    let base = verts.len();
    verts.extend([Vec3::new(-1.0, 0.5, -1.0), Vec3::new(20.0, 0.5, -1.0), Vec3::new(9.5, 0.5, 5.0)]);
    faces.push([base, base + 1, base + 2]);
    let base = verts.len();
    verts.extend([Vec3::new(0.0, 9.0, 9.0), Vec3::new(1.0, 9.0, 9.0), Vec3::new(0.0, 10.0, 9.0)]);
    faces.push([base, base + 1, base + 2]);
    TriMesh::new("seven-pairs", verts, faces).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, spread: f64) -> Mat3 {
    Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-spread..spread))
}

pub fn random_field(rng: &mut ChaCha8Rng, faces: usize) -> JacobianField {
    JacobianField {
        jacobians: (0..faces).map(|_| random_matrix(rng, 0.4)).collect(),
        weights: (0..faces).map(|_| rng.gen_range(0.5..1.5)).collect(),
    }
}

pub fn max_abs_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max)
}

pub fn fixed_cameras(resolution: usize) -> Vec<Camera> {
    [(0.0, 0.0), (90.0, 0.0), (45.0, 35.0), (-60.0, -25.0)]
        .iter()
        .map(|&(az, el): &(f64, f64)| {
            camera_at(
                Vec3::zeros(),
                az.to_radians(),
                el.to_radians(),
                4.0,
                45f64.to_radians(),
                resolution,
                resolution,
            )
            .unwrap()
        })
        .collect()
}

pub const E2E_SIGMA: f64 = 1.0;

/// Unit sphere with UVs, silhouette guidance toward an ellipsoid seen from
/// four fixed cameras at 128x128, and the run configuration.
pub fn sphere_to_ellipsoid() -> (TriMesh, TargetSilhouetteGuidance, OptimConfig) {
    let source = primitives::with_spherical_uvs(primitives::icosphere(1.0, 3));
    let target = primitives::ellipsoid(Vec3::new(1.3, 0.8, 1.0), 3);
    let guidance = TargetSilhouetteGuidance::from_mesh(&target, fixed_cameras(128), E2E_SIGMA).unwrap();
    let config = OptimConfig {
        iterations: 500,
        width: 128,
        height: 128,
        sigma: E2E_SIGMA,
        weights: LossWeights {
            guidance: 1.0,
            landmark: 200.0,
            opacity: 0.0,
        },
        ..Default::default()
    };
    (source, guidance, config)
}

/// Summed silhouette loss over every view.
pub fn silhouette_loss(guidance: &TargetSilhouetteGuidance, vertices: &[Vec3], faces: &[[usize; 3]]) -> f64 {
    (0..guidance.views().len())
        .map(|i| guidance.evaluate_view(vertices, faces, i).unwrap().loss)
        .sum()
}

pub struct LocalEdit {
    pub mesh: TriMesh,
    pub guidance: RegionScaleGuidance,
    pub config: OptimConfig,
    /// Vertices within two rings of the region.
    pub near: Vec<bool>,
}

/// Scale-2 edit of a polar cap on the icosphere. Only faces touching the
/// cap are free; every vertex beyond the cap's 2-ring is a landmark.
pub fn local_edit() -> LocalEdit {
    let sphere = primitives::icosphere(1.0, 3);
    let labels: Vec<i64> = sphere.vertices().iter().map(|p| i64::from(p.z > 0.8)).collect();
    let sphere = sphere.with_region_labels(labels).unwrap();
    let region = sphere.region_vertices(1);
    let near = sphere.k_ring(&region, 2);
    let landmarks: Vec<usize> = (0..sphere.vertex_count()).filter(|&v| !near[v]).collect();
    let mesh = sphere.with_landmarks(landmarks).unwrap();
    let guidance = RegionScaleGuidance::new(&mesh, 1, 2.0).unwrap();
    let config = OptimConfig {
        iterations: 500,
        weights: LossWeights {
            guidance: 1.0,
            landmark: 200.0,
            opacity: 0.0,
        },
        face_mask: mesh.region_touching_face_mask(1),
        ..Default::default()
    };
    LocalEdit {
        mesh,
        guidance,
        config,
        near,
    }
}
