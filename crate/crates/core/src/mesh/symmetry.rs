use std::collections::HashMap;

use super::{MeshError, Mat3, TriMesh, Vec3};

/// Reflection plane `{p : normal · p = offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        let len = normal.norm();
        Self {
            normal: normal / len,
            offset: offset / len,
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn reflect(&self, p: &Vec3) -> Vec3 {
        p - self.normal * (2.0 * self.signed_distance(p))
    }

    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }

    /// Linear part of the reflection, `I - 2 n nᵀ`.
    pub fn reflection_matrix(&self) -> Mat3 {
        Mat3::identity() - self.normal * self.normal.transpose() * 2.0
    }
}

/// How to place the plane for a given mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaneSpec {
    /// Normal along a coordinate axis (0 = x, 1 = y, 2 = z) through the mesh
    /// centroid.
    AxisThroughCentroid(usize),
    /// Normal along a coordinate axis at a fixed offset.
    Axis(usize, f64),
    Explicit(Plane),
}

impl PlaneSpec {
    pub fn resolve(&self, mesh: &TriMesh) -> Plane {
        match *self {
            PlaneSpec::AxisThroughCentroid(axis) => {
                let n = Vec3::ith(axis, 1.0);
                Plane::new(n, mesh.centroid()[axis])
            }
            PlaneSpec::Axis(axis, offset) => Plane::new(Vec3::ith(axis, 1.0), offset),
            PlaneSpec::Explicit(p) => p,
        }
    }
}

/// Vertex correspondence under reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryMap {
    /// Mirrored vertex pairs `(a, b)` with `a < b`.
    pub pairs: Vec<(usize, usize)>,
    /// Vertices on the plane; they map to themselves.
    pub fixed: Vec<usize>,
    /// Vertices without a counterpart (tolerated below 5%).
    pub unmatched: Vec<usize>,
    pub plane: Plane,
    mirror: Vec<Option<usize>>,
}

impl SymmetryMap {
    pub fn mirror_of(&self, v: usize) -> Option<usize> {
        self.mirror[v]
    }

    pub fn vertex_count(&self) -> usize {
        self.mirror.len()
    }

    pub fn is_involution(&self) -> bool {
        self.mirror
            .iter()
            .enumerate()
            .all(|(v, m)| m.is_none_or(|w| self.mirror[w] == Some(v)))
    }

    /// Mirror face of every face, found by matching mirrored vertex sets.
    /// `None` when a corner is unmatched or no face has the mirrored vertices.
    pub fn mirror_faces(&self, faces: &[[usize; 3]]) -> Vec<Option<usize>> {
        let key = |f: [usize; 3]| {
            let mut k = f;
            k.sort_unstable();
            k
        };
        let lookup: HashMap<[usize; 3], usize> =
            faces.iter().enumerate().map(|(i, f)| (key(*f), i)).collect();
        faces
            .iter()
            .map(|f| {
                let mirrored = [
                    self.mirror[f[0]]?,
                    self.mirror[f[1]]?,
                    self.mirror[f[2]]?,
                ];
                lookup.get(&key(mirrored)).copied()
            })
            .collect()
    }
}

/// Pairs each vertex with the nearest vertex to its reflection. Vertices
/// within `tolerance` of the plane are fixed; a pair is accepted when both
/// directions agree and the reflected distance is within `tolerance`.
pub fn build_symmetry_map(
    mesh: &TriMesh,
    plane: &PlaneSpec,
    tolerance: f64,
) -> Result<SymmetryMap, MeshError> {
    let plane = plane.resolve(mesh);
    let verts = mesh.vertices();
    let n = verts.len();
    let grid = PointGrid::new(verts);
    let nearest: Vec<(usize, f64)> = verts
        .iter()
        .map(|p| grid.nearest(&plane.reflect(p)))
        .collect();

    let mut mirror = vec![None; n];
    let mut fixed = Vec::new();
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for i in 0..n {
        if plane.signed_distance(&verts[i]).abs() <= tolerance {
            mirror[i] = Some(i);
            fixed.push(i);
            continue;
        }
        let (j, d) = nearest[i];
        let on_plane = plane.signed_distance(&verts[j]).abs() <= tolerance;
        if d <= tolerance && j != i && !on_plane && nearest[j].0 == i {
            mirror[i] = Some(j);
            if i < j {
                pairs.push((i, j));
            }
        } else {
            unmatched.push(i);
        }
    }
    if unmatched.len() * 20 > n {
        let mut worst: Vec<(usize, f64)> = unmatched.iter().map(|&i| (i, nearest[i].1)).collect();
        worst.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        worst.truncate(5);
        return Err(MeshError::SymmetryMismatch {
            unmatched: unmatched.len(),
            total: n,
            worst,
        });
    }
    Ok(SymmetryMap {
        pairs,
        fixed,
        unmatched,
        plane,
        mirror,
    })
}

/// Uniform bucket grid for nearest-point queries.
struct PointGrid<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    buckets: HashMap<[usize; 3], Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let (lo, hi) = super::bounding_box(points);
        let extent = hi - lo;
        let diag = extent.norm();
        let per_axis = (points.len() as f64).cbrt().ceil().max(1.0);
        let cell = if diag > 0.0 { diag / per_axis } else { 1.0 };
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize) + 1);
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            buckets: HashMap::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let c = grid.cell_of(p);
            grid.buckets.entry(c).or_default().push(i);
        }
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let t = ((p[a] - self.origin[a]) / self.cell).floor();
            t.clamp(0.0, (self.dims[a] - 1) as f64) as usize
        })
    }

    fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let c = self.cell_of(q);
        let max_shell = *self.dims.iter().max().unwrap();
        let mut best = (usize::MAX, f64::INFINITY);
        for r in 0..=max_shell {
            let lo = [0, 1, 2].map(|a| c[a] as i64 - r as i64);
            let hi = [0, 1, 2].map(|a| c[a] as i64 + r as i64);
            for x in lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                    for z in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
                        let on_shell = [x, y, z]
                            .iter()
                            .zip(lo.iter().zip(&hi))
                            .any(|(v, (l, h))| v == l || v == h);
                        if !on_shell {
                            continue;
                        }
                        if let Some(list) = self.buckets.get(&[x as usize, y as usize, z as usize]) {
                            for &i in list {
                                let d = (self.points[i] - q).norm();
                                if d < best.1 || (d == best.1 && i < best.0) {
                                    best = (i, d);
                                }
                            }
                        }
                    }
                }
            }
            // every unvisited cell is at least r cells away from q's cell
            if best.1 < (r as f64) * self.cell {
                break;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn centered_cube_has_four_pairs() {
        let cube = primitives::cube(1.0);
        let map = build_symmetry_map(&cube, &PlaneSpec::Axis(0, 0.0), 1e-9).unwrap();
        assert_eq!(map.pairs.len(), 4);
        assert!(map.fixed.is_empty());
        assert!(map.is_involution());
    }

    #[test]
    fn translated_cube_is_a_mismatch() {
        let cube = primitives::cube(1.0);
        let moved: Vec<Vec3> = cube
            .vertices()
            .iter()
            .map(|v| v + Vec3::new(10.0, 0.0, 0.0))
            .collect();
        let cube = cube.with_vertices(moved).unwrap();
        match build_symmetry_map(&cube, &PlaneSpec::Axis(0, 0.0), 1e-9) {
            Err(MeshError::SymmetryMismatch { unmatched, worst, .. }) => {
                assert_eq!(unmatched, 8);
                assert!(!worst.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn icosphere_matches_brute_force_reflection() {
        let mesh = primitives::icosphere(1.0, 3);
        let tol = 1e-9;
        let map = build_symmetry_map(&mesh, &PlaneSpec::Axis(0, 0.0), tol).unwrap();
        assert!(map.is_involution());
        assert!(map.unmatched.is_empty());
        let v = mesh.vertices();
        for i in 0..v.len() {
            let r = Vec3::new(-v[i].x, v[i].y, v[i].z);
            // brute-force nearest neighbour of the reflection
            let (j, d) = (0..v.len())
                .map(|j| (j, (v[j] - r).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d <= tol);
            if v[i].x.abs() <= tol {
                assert_eq!(map.mirror_of(i), Some(i));
                assert!(map.fixed.contains(&i));
            } else {
                assert_eq!(map.mirror_of(i), Some(j));
            }
        }
        let fixed_expect: Vec<usize> = (0..v.len()).filter(|&i| v[i].x.abs() <= tol).collect();
        assert_eq!(map.fixed, fixed_expect);
    }

    #[test]
    fn mirror_faces_form_an_involution() {
        let mesh = primitives::icosphere(1.0, 2);
        let map = build_symmetry_map(&mesh, &PlaneSpec::AxisThroughCentroid(0), 1e-9).unwrap();
        let fm = map.mirror_faces(mesh.faces());
        for (f, m) in fm.iter().enumerate() {
            let g = m.expect("every face has a mirror");
            assert_eq!(fm[g], Some(f));
        }
    }

    #[test]
    fn plane_reflection_is_an_involution() {
        let p = Plane::new(Vec3::new(1.0, 2.0, -0.5), 0.3);
        let x = Vec3::new(0.2, -1.1, 4.0);
        assert!((p.reflect(&p.reflect(&x)) - x).norm() < 1e-14);
        assert!(p.signed_distance(&p.project(&x)).abs() < 1e-14);
        let r = p.reflection_matrix();
        assert!((r * r - Mat3::identity()).amax() < 1e-15);
    }
}
