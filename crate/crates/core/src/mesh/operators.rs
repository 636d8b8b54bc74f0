use super::{MeshError, TriMesh, Vec3, DEGENERATE_AREA_RATIO};
use crate::sparse::SparseMatrix;

/// Per-face gradient of piecewise-linear vertex functions.
///
/// Row `3f + a` of `matrix` yields component `a` of the (in-plane) gradient on
/// face `f`. Applied to an `n x 3` block of vertex positions, the `3 x 3` block
/// of face `f` is the transpose of the deformation Jacobian on that face.
#[derive(Debug, Clone)]
pub struct FaceGradientOperator {
    pub matrix: SparseMatrix,
    pub face_areas: Vec<f64>,
}

impl FaceGradientOperator {
    pub fn face_count(&self) -> usize {
        self.face_areas.len()
    }

    /// Per-face gradients of a scalar vertex function.
    pub fn apply(&self, phi: &[f64]) -> Vec<Vec3> {
        let g = self
            .matrix
            .mul_vec(phi)
            .expect("scalar field length must equal vertex count");
        g.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
    }
}

/// Assembles the gradient operator: for face `(v0, v1, v2)` with area `A` and
/// unit normal `n`, the gradient of `φ` is `Σ_k φ_k (n × e_k) / 2A`, where
/// `e_k` is the edge opposite corner `k`, oriented counterclockwise.
pub fn build_gradient_operator(mesh: &TriMesh) -> Result<FaceGradientOperator, MeshError> {
    let m = mesh.face_count();
    let diag = mesh.bbox_diagonal();
    let min_area = DEGENERATE_AREA_RATIO * diag * diag;
    let mut triplets = Vec::with_capacity(9 * m);
    let mut face_areas = Vec::with_capacity(m);
    for (f, face) in mesh.faces().iter().enumerate() {
        let p = mesh.face_corners(f);
        let cross = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let twice_area = cross.norm();
        if !(0.5 * twice_area > min_area) {
            return Err(MeshError::DegenerateFace {
                face: f,
                reason: format!("area {:e} below threshold {min_area:e}", 0.5 * twice_area),
            });
        }
        let normal = cross / twice_area;
        for k in 0..3 {
            let edge = p[(k + 2) % 3] - p[(k + 1) % 3];
            let g = normal.cross(&edge) / twice_area;
            for a in 0..3 {
                triplets.push((3 * f + a, face[k], g[a]));
            }
        }
        face_areas.push(0.5 * twice_area);
    }
    let matrix = SparseMatrix::from_triplets(3 * m, mesh.vertex_count(), &triplets)
        .expect("face indices validated by TriMesh");
    Ok(FaceGradientOperator { matrix, face_areas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn right_triangle() -> TriMesh {
        TriMesh::new(
            "rt",
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn reproduces_linear_function_on_right_triangle() {
        let g = build_gradient_operator(&right_triangle()).unwrap();
        let grad = g.apply(&[0.0, 1.0, 0.0]);
        assert!((grad[0] - Vec3::x()).norm() < 1e-15);
    }

    #[test]
    fn annihilates_constants() {
        let g = build_gradient_operator(&right_triangle()).unwrap();
        assert!(g.apply(&[5.0, 5.0, 5.0])[0].norm() <= 1e-12);
        for mesh in [primitives::icosphere(1.0, 3), primitives::grid(6, 4, 2.0, 1.0)] {
            let g = build_gradient_operator(&mesh).unwrap();
            let ones = vec![1.0; mesh.vertex_count()];
            let worst = g.apply(&ones).iter().fold(0.0f64, |m, v| m.max(v.amax()));
            assert!(worst <= 1e-12, "{}: {worst}", mesh.name);
        }
    }

    #[test]
    fn linear_precision_on_random_nonplanar_mesh() {
        // icosahedron (20 faces) with jittered radii
        let base = primitives::icosphere(1.0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let verts: Vec<Vec3> = base
            .vertices()
            .iter()
            .map(|v| v * rng.gen_range(0.7..1.3))
            .collect();
        let mesh = base.with_vertices(verts).unwrap();
        assert_eq!(mesh.face_count(), 20);
        let a = Vec3::new(2.0, -3.0, 1.0);
        let phi: Vec<f64> = mesh.vertices().iter().map(|p| a.dot(p) + 0.25).collect();
        let g = build_gradient_operator(&mesh).unwrap();
        for (f, grad) in g.apply(&phi).iter().enumerate() {
            // independent closed form: in-plane projection of a
            let [p0, p1, p2] = mesh.face_corners(f);
            let n = (p1 - p0).cross(&(p2 - p0)).normalize();
            let expect = a - n * n.dot(&a);
            assert!((grad - expect).norm() <= 1e-10 * expect.norm(), "face {f}");
        }
    }

    #[test]
    fn face_areas_and_layout() {
        let mesh = primitives::icosphere(1.0, 2);
        let g = build_gradient_operator(&mesh).unwrap();
        assert_eq!(g.matrix.rows(), 3 * mesh.face_count());
        assert_eq!(g.matrix.cols(), mesh.vertex_count());
        for f in 0..mesh.face_count() {
            assert!((g.face_areas[f] - mesh.face_area(f)).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_deformed_face_is_rejected() {
        let m = right_triangle();
        let squashed = m
            .with_vertices(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 0.5])
            .unwrap();
        assert!(matches!(
            build_gradient_operator(&squashed),
            Err(MeshError::DegenerateFace { .. })
        ));
    }
}
