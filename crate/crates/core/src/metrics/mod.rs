//! Mesh quality: self-intersections and triangle shape statistics.

mod bvh;
mod tritri;

pub use bvh::{Aabb, Bvh};
pub use tritri::triangle_triangle_intersect;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mesh::{TriMesh, Vec3, DEGENERATE_AREA_RATIO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntersectionMode {
    Bvh,
    Brute,
}

/// Unordered intersecting face pairs `(i, j)`, `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfIntersection {
    /// Distinct faces in at least one pair, over the face count.
    pub ratio: f64,
    pub pairs: Vec<(usize, usize)>,
}

fn shares_vertex(a: &[usize; 3], b: &[usize; 3]) -> bool {
    a.iter().any(|v| b.contains(v))
}

fn degenerate_faces(mesh: &TriMesh) -> Vec<bool> {
    let diag = mesh.bbox_diagonal();
    let threshold = DEGENERATE_AREA_RATIO * diag * diag;
    (0..mesh.face_count())
        .map(|f| {
            let [a, b, c] = mesh.face_corners(f);
            tritri::is_degenerate(&[a, b, c]) || mesh.face_area(f) <= threshold
        })
        .collect()
}

/// Face pairs that share a point, excluding pairs with a common vertex.
/// Degenerate faces are skipped.
pub fn self_intersections(mesh: &TriMesh, mode: IntersectionMode) -> SelfIntersection {
    let faces = mesh.faces();
    let degenerate = degenerate_faces(mesh);
    let corners = |f: usize| mesh.face_corners(f);
    let test = |i: usize, j: usize| {
        !degenerate[i]
            && !degenerate[j]
            && !shares_vertex(&faces[i], &faces[j])
            && triangle_triangle_intersect(&corners(i), &corners(j)).unwrap_or(false)
    };
    let m = faces.len();
    let mut pairs: Vec<(usize, usize)> = match mode {
        IntersectionMode::Brute => (0..m)
            .into_par_iter()
            .flat_map_iter(|i| (i + 1..m).filter(move |&j| test(i, j)).map(move |j| (i, j)))
            .collect(),
        IntersectionMode::Bvh => {
            let bvh = Bvh::build(mesh);
            (0..m)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let mut hits = Vec::new();
                    bvh.query(&Aabb::of_face(mesh, i), |j| {
                        if j > i && test(i, j) {
                            hits.push((i, j));
                        }
                    });
                    hits
                })
                .collect()
        }
    };
    pairs.sort_unstable();
    let mut involved = vec![false; m];
    for &(i, j) in &pairs {
        involved[i] = true;
        involved[j] = true;
    }
    let count = involved.iter().filter(|&&b| b).count();
    SelfIntersection {
        ratio: if m == 0 { 0.0 } else { count as f64 / m as f64 },
        pairs,
    }
}

/// Ratio and pair list, as [`self_intersections`].
pub fn self_intersection_ratio(mesh: &TriMesh, mode: IntersectionMode) -> (f64, Vec<(usize, usize)>) {
    let r = self_intersections(mesh, mode);
    (r.ratio, r.pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mesh: String,
    pub mode: IntersectionMode,
    pub faces: usize,
    pub self_intersection_ratio: f64,
    pub intersecting_pairs: usize,
    pub min_angle_deg: f64,
    /// Longest edge over shortest altitude, worst face.
    pub max_aspect_ratio: f64,
    pub degenerate_faces: usize,
}

impl QualityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

fn angles(a: Vec3, b: Vec3, c: Vec3) -> [f64; 3] {
    let ang = |p: Vec3, q: Vec3, r: Vec3| {
        let u = q - p;
        let v = r - p;
        u.cross(&v).norm().atan2(u.dot(&v)).to_degrees()
    };
    [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
}

fn aspect_ratio(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let edges = [(b - a).norm(), (c - b).norm(), (a - c).norm()];
    let longest = edges.iter().cloned().fold(0.0, f64::max);
    let twice_area = (b - a).cross(&(c - a)).norm();
    // the shortest altitude is the one onto the longest edge
    let altitude = twice_area / longest;
    if altitude > 0.0 {
        longest / altitude
    } else {
        f64::INFINITY
    }
}

pub fn quality_report(mesh: &TriMesh, mode: IntersectionMode) -> QualityReport {
    let si = self_intersections(mesh, mode);
    let degenerate = degenerate_faces(mesh);
    let mut min_angle = f64::INFINITY;
    let mut max_aspect: f64 = 0.0;
    for f in 0..mesh.face_count() {
        if degenerate[f] {
            continue;
        }
        let [a, b, c] = mesh.face_corners(f);
        for t in angles(a, b, c) {
            min_angle = min_angle.min(t);
        }
        max_aspect = max_aspect.max(aspect_ratio(a, b, c));
    }
    QualityReport {
        mesh: mesh.name.clone(),
        mode,
        faces: mesh.face_count(),
        self_intersection_ratio: si.ratio,
        intersecting_pairs: si.pairs.len(),
        min_angle_deg: if min_angle.is_finite() { min_angle } else { 0.0 },
        max_aspect_ratio: max_aspect,
        degenerate_faces: degenerate.iter().filter(|&&d| d).count(),
    }
}
