//! Procedural meshes used by tests, examples and the CLI's synthetic inputs.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriMesh, UvLayout, Vec3};

/// Subdivided icosahedron projected onto a sphere, outward-facing
/// counterclockwise winding. `subdivisions = 3` gives 642 vertices and 1280
/// faces.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[key.0] + verts[key.1]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    TriMesh::new(format!("icosphere{subdivisions}"), verts, faces).expect("valid icosphere")
}

/// Axis-aligned ellipsoid obtained by scaling an icosphere.
pub fn ellipsoid(radii: Vec3, subdivisions: usize) -> TriMesh {
    let sphere = icosphere(1.0, subdivisions);
    let verts = sphere
        .vertices()
        .iter()
        .map(|v| v.component_mul(&radii))
        .collect();
    let mut m = sphere.with_vertices(verts).expect("same vertex count");
    m.name = format!("ellipsoid{subdivisions}");
    m
}

/// Flat `nx x ny` grid of quads in the z = 0 plane, each split into two
/// triangles (as a fan-triangulated quad OBJ would be), centered at the origin.
pub fn grid(nx: usize, ny: usize, width: f64, height: f64) -> TriMesh {
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push(Vec3::new(
                width * (i as f64 / nx as f64 - 0.5),
                height * (j as f64 / ny as f64 - 0.5),
                0.0,
            ));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let q = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        }
    }
    TriMesh::new("grid", verts, faces).expect("valid grid")
}

/// Closed cube with the given half extent, centered at the origin.
pub fn cube(half: f64) -> TriMesh {
    let mut verts = Vec::with_capacity(8);
    for i in 0..8 {
        verts.push(Vec3::new(
            if i & 1 == 0 { -half } else { half },
            if i & 2 == 0 { -half } else { half },
            if i & 4 == 0 { -half } else { half },
        ));
    }
    let quads = [
        [0, 2, 3, 1], // z-
        [4, 5, 7, 6], // z+
        [0, 1, 5, 4], // y-
        [2, 6, 7, 3], // y+
        [0, 4, 6, 2], // x-
        [1, 3, 7, 5], // x+
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh::new("cube", verts, faces).expect("valid cube")
}

/// Unit icosphere with every vertex pushed by a uniform random offset in
/// `[-amplitude, amplitude]^3`. Large amplitudes fold the surface through
/// itself, which makes a useful self-intersection fixture.
pub fn crumpled(subdivisions: usize, amplitude: f64, seed: u64) -> TriMesh {
    let base = icosphere(1.0, subdivisions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts = base
        .vertices()
        .iter()
        .map(|p| {
            let mut d = || rng.gen_range(-amplitude..=amplitude);
            p + Vec3::new(d(), d(), d())
        })
        .collect();
    TriMesh::new("crumpled", verts, base.faces().to_vec()).expect("random offsets keep faces non-degenerate")
}

/// Attaches per-corner spherical UVs (longitude/latitude about the centroid).
/// Each face gets its own three `vt` entries so seams need no special care.
pub fn with_spherical_uvs(mesh: TriMesh) -> TriMesh {
    let c = mesh.centroid();
    let mut coords = Vec::with_capacity(3 * mesh.face_count());
    let mut corners = Vec::with_capacity(mesh.face_count());
    for f in mesh.faces() {
        let mut tri = [0usize; 3];
        for (k, &v) in f.iter().enumerate() {
            let d = (mesh.vertices()[v] - c).normalize();
            let u = 0.5 + d.z.atan2(d.x) / (2.0 * std::f64::consts::PI);
            let w = 0.5 + d.y.clamp(-1.0, 1.0).asin() / std::f64::consts::PI;
            tri[k] = coords.len();
            coords.push([u, w]);
        }
        corners.push(tri);
    }
    mesh.with_uvs(UvLayout { coords, corners }).expect("one UV triple per face")
}
