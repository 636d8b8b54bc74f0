//! Indexed triangle meshes with the attributes deformation must carry through
//! untouched: per-corner UVs, landmark vertex indices and per-vertex region
//! labels.

mod obj;
mod operators;
pub mod primitives;
mod sidecar;
mod symmetry;

pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use operators::{build_gradient_operator, FaceGradientOperator};
pub use sidecar::{
    load_face_mask, load_landmarks, load_region_labels, save_face_mask, save_landmarks,
    save_region_labels,
};
pub use symmetry::{build_symmetry_map, Plane, PlaneSpec, SymmetryMap};

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Faces whose area falls below this fraction of the squared bounding-box
/// diagonal are treated as degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("mesh has no {0}")]
    Empty(&'static str),
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} is degenerate: {reason}")]
    DegenerateFace { face: usize, reason: String },
    #[error("mesh is not edge-manifold: {} edge(s) shared by more than two faces, e.g. {}", .edges.len(), format_edges(.edges))]
    NonManifold { edges: Vec<(usize, usize)> },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("attribute mismatch: {0}")]
    Attribute(String),
    #[error("symmetry mismatch: {unmatched} of {total} vertices have no mirror counterpart; worst: {}", format_worst(.worst))]
    SymmetryMismatch {
        unmatched: usize,
        total: usize,
        worst: Vec<(usize, f64)>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_edges(edges: &[(usize, usize)]) -> String {
    edges
        .iter()
        .take(8)
        .map(|(a, b)| format!("({a},{b})"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn format_worst(worst: &[(usize, f64)]) -> String {
    worst
        .iter()
        .map(|(v, d)| format!("v{v} ({d:.3e})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Texture coordinates referenced per face corner, kept exactly as read so a
/// save/load cycle reproduces them bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct UvLayout {
    pub coords: Vec<[f64; 2]>,
    pub corners: Vec<[usize; 3]>,
}

impl UvLayout {
    /// UV of corner `k` of face `f`.
    pub fn corner(&self, f: usize, k: usize) -> [f64; 2] {
        self.coords[self.corners[f][k]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub name: String,
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    uvs: Option<UvLayout>,
    landmarks: Vec<usize>,
    region_labels: Option<Vec<i64>>,
}

impl TriMesh {
    /// Builds a validated mesh. Rejects out-of-range or repeated indices,
    /// degenerate faces and edges shared by more than two faces.
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            name: name.into(),
            vertices,
            faces,
            uvs: None,
            landmarks: Vec::new(),
            region_labels: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_uvs(mut self, uvs: UvLayout) -> Result<Self, MeshError> {
        if uvs.corners.len() != self.faces.len() {
            return Err(MeshError::Attribute(format!(
                "{} UV corner triples for {} faces",
                uvs.corners.len(),
                self.faces.len()
            )));
        }
        if let Some(bad) = uvs.corners.iter().flatten().find(|&&i| i >= uvs.coords.len()) {
            return Err(MeshError::Attribute(format!(
                "UV index {bad} out of range ({} coordinates)",
                uvs.coords.len()
            )));
        }
        self.uvs = Some(uvs);
        Ok(self)
    }

    pub fn with_landmarks(mut self, landmarks: Vec<usize>) -> Result<Self, MeshError> {
        if let Some(bad) = landmarks.iter().find(|&&i| i >= self.vertices.len()) {
            return Err(MeshError::Attribute(format!(
                "landmark index {bad} out of range ({} vertices)",
                self.vertices.len()
            )));
        }
        self.landmarks = landmarks;
        Ok(self)
    }

    pub fn with_region_labels(mut self, labels: Vec<i64>) -> Result<Self, MeshError> {
        if labels.len() != self.vertices.len() {
            return Err(MeshError::Attribute(format!(
                "{} region labels for {} vertices",
                labels.len(),
                self.vertices.len()
            )));
        }
        self.region_labels = Some(labels);
        Ok(self)
    }

    /// Same connectivity and attributes with new vertex positions.
    ///
    /// Deformed positions are not re-validated: a deformation may legitimately
    /// produce thin faces, which the metrics module reports on.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::Attribute(format!(
                "{} positions for a mesh with {} vertices",
                vertices.len(),
                self.vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        Ok(Self {
            vertices,
            ..self.clone()
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn uvs(&self) -> Option<&UvLayout> {
        self.uvs.as_ref()
    }

    pub fn landmarks(&self) -> &[usize] {
        &self.landmarks
    }

    pub fn region_labels(&self) -> Option<&[i64]> {
        self.region_labels.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_corners(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_corners(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_corners(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn centroid(&self) -> Vec3 {
        centroid(&self.vertices)
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.vertices)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Faces whose three vertices all carry `label`.
    pub fn region_face_mask(&self, label: i64) -> Option<Vec<bool>> {
        let labels = self.region_labels.as_ref()?;
        Some(
            self.faces
                .iter()
                .map(|f| f.iter().all(|&v| labels[v] == label))
                .collect(),
        )
    }

    /// Faces touching at least one vertex carrying `label`.
    pub fn region_touching_face_mask(&self, label: i64) -> Option<Vec<bool>> {
        let labels = self.region_labels.as_ref()?;
        Some(
            self.faces
                .iter()
                .map(|f| f.iter().any(|&v| labels[v] == label))
                .collect(),
        )
    }

    pub fn region_vertices(&self, label: i64) -> Vec<usize> {
        match &self.region_labels {
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == label)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Vertex-to-vertex adjacency lists (sorted, no duplicates).
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Vertices within `rings` edge hops of `seeds` (seeds included).
    pub fn k_ring(&self, seeds: &[usize], rings: usize) -> Vec<bool> {
        let adj = self.vertex_neighbors();
        let mut inside = vec![false; self.vertices.len()];
        let mut frontier: Vec<usize> = seeds.to_vec();
        for &s in seeds {
            inside[s] = true;
        }
        for _ in 0..rings {
            let mut next = Vec::new();
            for &v in &frontier {
                for &w in &adj[v] {
                    if !inside[w] {
                        inside[w] = true;
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        inside
    }

    /// Connected components over face adjacency; isolated vertices count as
    /// their own component.
    pub fn connected_components(&self) -> usize {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let (ra, rb) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    fn validate(&self) -> Result<(), MeshError> {
        if self.vertices.is_empty() {
            return Err(MeshError::Empty("vertices"));
        }
        if self.faces.is_empty() {
            return Err(MeshError::Empty("faces"));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(MeshError::IndexOutOfRange {
                    face: fi,
                    index: bad,
                    count: n,
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    reason: format!("repeated vertex index in {:?}", f),
                });
            }
        }
        let diag = self.bbox_diagonal();
        let min_area = DEGENERATE_AREA_RATIO * diag * diag;
        for fi in 0..self.faces.len() {
            let area = self.face_area(fi);
            if !(area > min_area) {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    reason: format!("area {area:e} below threshold {min_area:e}"),
                });
            }
        }
        let bad = non_manifold_edges(&self.faces);
        if !bad.is_empty() {
            return Err(MeshError::NonManifold { edges: bad });
        }
        Ok(())
    }
}

/// Undirected edges used by more than two faces, sorted.
pub fn non_manifold_edges(faces: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *uses.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut bad: Vec<_> = uses
        .into_iter()
        .filter(|&(_, c)| c > 2)
        .map(|(e, _)| e)
        .collect();
    bad.sort_unstable();
    bad
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return Vec3::zeros();
    }
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}

pub fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> TriMesh {
        TriMesh::new(
            "tri",
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn minimal_triangle_is_valid() {
        let m = tri();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
        assert!((m.face_area(0) - 0.5).abs() < 1e-15);
        assert_eq!(m.face_normal(0), Vec3::z());
    }

    #[test]
    fn repeated_index_is_degenerate() {
        let err = TriMesh::new("d", vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 0, 1]])
            .unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { face: 0, .. }));
    }

    #[test]
    fn collinear_face_is_degenerate() {
        let err = TriMesh::new(
            "d",
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { .. }));
    }

    #[test]
    fn fin_of_three_faces_is_non_manifold() {
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            -Vec3::y(),
            Vec3::z(),
        ];
        let err = TriMesh::new("fin", v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap_err();
        match err {
            MeshError::NonManifold { edges } => assert_eq!(edges, vec![(0, 1)]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_mesh_is_rejected() {
        assert!(matches!(
            TriMesh::new("e", vec![], vec![]),
            Err(MeshError::Empty(_))
        ));
    }

    #[test]
    fn attribute_lengths_are_checked() {
        assert!(tri().with_landmarks(vec![3]).is_err());
        assert!(tri().with_region_labels(vec![1, 2]).is_err());
        assert!(tri()
            .with_uvs(UvLayout {
                coords: vec![[0.0, 0.0]],
                corners: vec![[0, 0, 1]]
            })
            .is_err());
    }

    #[test]
    fn components_and_rings() {
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(6.0, 0.0, 0.0),
            Vec3::new(5.0, 1.0, 0.0),
        ];
        let m = TriMesh::new("two", v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        assert_eq!(m.connected_components(), 2);
        let ring = m.k_ring(&[0], 1);
        assert_eq!(ring, vec![true, true, true, false, false, false]);
    }
}
