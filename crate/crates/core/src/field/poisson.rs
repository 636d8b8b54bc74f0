use super::{FieldGradient, JacobianField};
use crate::error::{Error, Result};
use crate::mesh::{build_gradient_operator, centroid, FaceGradientOperator, Mat3, TriMesh, Vec3};
use crate::sparse::{conjugate_gradient, DenseBlock, SparseMatrix, SpdFactor};

/// Translation gauge for the solve. The solution is always re-centered on the
/// source centroid afterwards, so the pinned vertex only selects which
/// row/column is removed to make the Laplacian definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pinning {
    Vertex(usize),
}

impl Default for Pinning {
    fn default() -> Self {
        Pinning::Vertex(0)
    }
}

/// Linear solver used for the pinned Laplacian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverBackend {
    /// Direct Cholesky below this many vertices, CG above.
    Auto { direct_limit: usize },
    Direct,
    ConjugateGradient { tolerance: f64, max_iterations: usize },
}

impl Default for SolverBackend {
    fn default() -> Self {
        SolverBackend::Auto {
            direct_limit: 250_000,
        }
    }
}

#[derive(Debug, Clone)]
enum Solver {
    Direct(SpdFactor),
    Iterative { tolerance: f64, max_iterations: usize },
}

/// Assembled least-squares Poisson problem
/// `min_V Σ_i |f_i| ‖∇_i V - w_i J_i‖²` for one source mesh.
///
/// The Laplacian `L = Gᵀ M G` is factored once at assembly and shared by every
/// forward solve and adjoint solve.
#[derive(Debug, Clone)]
pub struct PoissonSystem {
    gradient: FaceGradientOperator,
    mass: Vec<f64>,
    laplacian: SparseMatrix,
    reduced: SparseMatrix,
    divergence: SparseMatrix,
    solver: Solver,
    pin: usize,
    free: Vec<usize>,
    source_centroid: Vec3,
}

impl PoissonSystem {
    pub fn assemble(mesh: &TriMesh, pinning: Pinning) -> Result<Self> {
        Self::assemble_with(mesh, pinning, SolverBackend::default())
    }

    pub fn assemble_with(mesh: &TriMesh, pinning: Pinning, backend: SolverBackend) -> Result<Self> {
        let Pinning::Vertex(pin) = pinning;
        let n = mesh.vertex_count();
        if pin >= n {
            return Err(Error::Invalid(format!(
                "pinned vertex {pin} out of range ({n} vertices)"
            )));
        }
        let components = mesh.connected_components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        let gradient = build_gradient_operator(mesh)?;
        let mass: Vec<f64> = gradient.face_areas.iter().flat_map(|&a| [a; 3]).collect();
        let divergence = gradient.matrix.transpose().multiply(&SparseMatrix::diagonal(&mass))?;
        let laplacian = divergence.multiply(&gradient.matrix)?;
        let free: Vec<usize> = (0..n).filter(|&v| v != pin).collect();
        let reduced = laplacian.submatrix(&free, &free);
        let solver = match backend {
            SolverBackend::Auto { direct_limit } if n > direct_limit => Solver::Iterative {
                tolerance: 1e-12,
                max_iterations: 20 * n,
            },
            SolverBackend::Auto { .. } | SolverBackend::Direct => {
                Solver::Direct(SpdFactor::factor(&reduced)?)
            }
            SolverBackend::ConjugateGradient {
                tolerance,
                max_iterations,
            } => Solver::Iterative {
                tolerance,
                max_iterations,
            },
        };
        Ok(Self {
            gradient,
            mass,
            laplacian,
            reduced,
            divergence,
            solver,
            pin,
            free,
            source_centroid: mesh.centroid(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.laplacian.rows()
    }

    pub fn face_count(&self) -> usize {
        self.gradient.face_count()
    }

    pub fn gradient(&self) -> &FaceGradientOperator {
        &self.gradient
    }

    /// Per-row mass: each face area repeated three times.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Unpinned `Gᵀ M G`.
    pub fn laplacian(&self) -> &SparseMatrix {
        &self.laplacian
    }

    /// Laplacian with the pinned row and column removed.
    pub fn pinned_laplacian(&self) -> &SparseMatrix {
        &self.reduced
    }

    pub fn pinned_vertex(&self) -> usize {
        self.pin
    }

    pub fn source_centroid(&self) -> Vec3 {
        self.source_centroid
    }

    pub fn uses_direct_solver(&self) -> bool {
        matches!(self.solver, Solver::Direct(_))
    }

    /// Stacks per-face targets into the `3m x 3` block `T` whose face block is
    /// `targetᵀ`, matching the layout of `G V`.
    fn stack_targets(&self, targets: &[Mat3]) -> DenseBlock {
        let mut t = DenseBlock::zeros(3 * targets.len(), 3);
        for (f, m) in targets.iter().enumerate() {
            for a in 0..3 {
                for c in 0..3 {
                    t.set(3 * f + a, c, m[(c, a)]);
                }
            }
        }
        t
    }

    fn solve_reduced(&self, rhs: &DenseBlock) -> Result<DenseBlock> {
        match &self.solver {
            Solver::Direct(factor) => Ok(factor.solve(rhs)?),
            Solver::Iterative {
                tolerance,
                max_iterations,
            } => {
                let mut out = DenseBlock::zeros(rhs.rows, rhs.cols);
                for c in 0..rhs.cols {
                    let (x, _) = conjugate_gradient(
                        &self.reduced,
                        &rhs.column(c),
                        None,
                        *tolerance,
                        *max_iterations,
                    )?;
                    out.set_column(c, &x);
                }
                Ok(out)
            }
        }
    }

    /// Solves for vertices whose per-face Jacobians best match `targets` in
    /// the area-weighted least-squares sense, re-centered on the source
    /// centroid.
    pub fn solve_targets(&self, targets: &[Mat3]) -> Result<Vec<Vec3>> {
        if targets.len() != self.face_count() {
            return Err(Error::LengthMismatch {
                what: "per-face targets",
                expected: self.face_count(),
                actual: targets.len(),
            });
        }
        if let Some(i) = targets.iter().position(|t| !t.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("target of face {i}")));
        }
        let rhs = self.divergence.multiply_dense(&self.stack_targets(targets))?;
        let mut reduced_rhs = DenseBlock::zeros(self.free.len(), 3);
        for (r, &v) in self.free.iter().enumerate() {
            for c in 0..3 {
                reduced_rhs.set(r, c, rhs.get(v, c));
            }
        }
        let x = self.solve_reduced(&reduced_rhs)?;
        let mut verts = vec![Vec3::zeros(); self.vertex_count()];
        for (r, &v) in self.free.iter().enumerate() {
            verts[v] = Vec3::new(x.get(r, 0), x.get(r, 1), x.get(r, 2));
        }
        let shift = self.source_centroid - centroid(&verts);
        for v in &mut verts {
            *v += shift;
        }
        Ok(verts)
    }

    /// Deformed vertex positions for `field`.
    pub fn forward_solve(&self, field: &JacobianField) -> Result<Vec<Vec3>> {
        self.check_field(field)?;
        let targets: Vec<Mat3> = (0..field.len()).map(|i| field.target(i)).collect();
        self.solve_targets(&targets)
    }

    /// Gradient with respect to each face target `w_i J_i`, given the loss
    /// gradient with respect to the solved vertices.
    pub fn target_gradient(&self, d_vertices: &[Vec3]) -> Result<Vec<Mat3>> {
        let n = self.vertex_count();
        if d_vertices.len() != n {
            return Err(Error::LengthMismatch {
                what: "vertex gradient",
                expected: n,
                actual: d_vertices.len(),
            });
        }
        if let Some(i) = d_vertices.iter().position(|g| !g.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("vertex gradient at {i}")));
        }
        // re-centering is a symmetric projection; its adjoint removes the mean
        let mean = centroid(d_vertices);
        let mut reduced = DenseBlock::zeros(self.free.len(), 3);
        for (r, &v) in self.free.iter().enumerate() {
            let g = d_vertices[v] - mean;
            for c in 0..3 {
                reduced.set(r, c, g[c]);
            }
        }
        let u_reduced = self.solve_reduced(&reduced)?;
        let mut u = DenseBlock::zeros(n, 3);
        for (r, &v) in self.free.iter().enumerate() {
            for c in 0..3 {
                u.set(v, c, u_reduced.get(r, c));
            }
        }
        let gu = self.gradient.matrix.multiply_dense(&u)?;
        Ok((0..self.face_count())
            .map(|f| {
                // block (a, c) pairs with target entry (c, a)
                Mat3::from_fn(|c, a| self.mass[3 * f + a] * gu.get(3 * f + a, c))
            })
            .collect())
    }

    /// Exact adjoint of [`forward_solve`](Self::forward_solve):
    /// `∂L/∂J_i = w_i ∂L/∂T_i` and `∂L/∂w_i = ⟨J_i, ∂L/∂T_i⟩`.
    pub fn backward(&self, field: &JacobianField, d_vertices: &[Vec3]) -> Result<FieldGradient> {
        self.check_field(field)?;
        let d_targets = self.target_gradient(d_vertices)?;
        Ok(FieldGradient {
            d_jacobians: d_targets
                .iter()
                .zip(&field.weights)
                .map(|(g, w)| g * *w)
                .collect(),
            d_weights: d_targets
                .iter()
                .zip(&field.jacobians)
                .map(|(g, j)| g.dot(j))
                .collect(),
        })
    }

    /// `‖Gᵀ M (G V - T)‖∞` restricted to the free rows, and `‖Gᵀ M T‖∞`.
    pub fn optimality_residual(&self, vertices: &[Vec3], field: &JacobianField) -> Result<(f64, f64)> {
        self.check_field(field)?;
        let targets: Vec<Mat3> = (0..field.len()).map(|i| field.target(i)).collect();
        let t = self.stack_targets(&targets);
        let mut v = DenseBlock::zeros(vertices.len(), 3);
        for (i, p) in vertices.iter().enumerate() {
            for c in 0..3 {
                v.set(i, c, p[c]);
            }
        }
        let mut gv = self.gradient.matrix.multiply_dense(&v)?;
        for (a, b) in gv.data.iter_mut().zip(&t.data) {
            *a -= b;
        }
        let res = self.divergence.multiply_dense(&gv)?;
        let scale = self.divergence.multiply_dense(&t)?;
        let free_max = |d: &DenseBlock| {
            self.free
                .iter()
                .flat_map(|&r| (0..3).map(move |c| (r, c)))
                .fold(0.0f64, |m, (r, c)| m.max(d.get(r, c).abs()))
        };
        Ok((free_max(&res), free_max(&scale)))
    }

    fn check_field(&self, field: &JacobianField) -> Result<()> {
        if field.len() != self.face_count() {
            return Err(Error::LengthMismatch {
                what: "jacobian field",
                expected: self.face_count(),
                actual: field.len(),
            });
        }
        field.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_dev(a: &[Vec3], b: &[Vec3]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).amax()))
    }

    fn single_triangle() -> TriMesh {
        TriMesh::new(
            "tri",
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_stencil() {
        let sys = PoissonSystem::assemble(&single_triangle(), Pinning::default()).unwrap();
        // hand-computed cotangent stencil scaled by area: the right angle has
        // cot 0, the two 45° angles cot 1, so L = ½ [[2,-1,-1],[-1,1,0],[-1,0,1]]
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let l = sys.laplacian().to_dense();
        for r in 0..3 {
            for c in 0..3 {
                assert!((l[r][c] - expect[r][c]).abs() < 1e-14, "L[{r}][{c}] = {}", l[r][c]);
            }
        }
        assert_eq!(sys.pinned_laplacian().rows(), 2);
        assert!(sys.uses_direct_solver());
    }

    #[test]
    fn disconnected_mesh_is_rejected() {
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(3.0, 1.0, 0.0),
        ];
        let mesh = TriMesh::new("two", v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        assert!(matches!(
            PoissonSystem::assemble(&mesh, Pinning::default()),
            Err(Error::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn unpinned_laplacian_has_constant_null_space() {
        let mesh = primitives::icosphere(1.0, 3);
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        let row_sums = sys.laplacian().mul_vec(&vec![1.0; mesh.vertex_count()]).unwrap();
        assert!(row_sums.iter().all(|s| s.abs() <= 1e-10));
        assert!(sys.laplacian().max_asymmetry().unwrap() <= 1e-12);
    }

    #[test]
    fn identity_field_reproduces_source() {
        for mesh in [
            single_triangle(),
            primitives::grid(5, 4, 2.0, 1.5),
            primitives::icosphere(1.0, 3),
        ] {
            let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
            let v = sys.forward_solve(&JacobianField::identity(mesh.face_count())).unwrap();
            assert!(max_dev(&v, mesh.vertices()) <= 1e-8, "{}", mesh.name);
        }
    }

    #[test]
    fn constant_linear_map_is_reproduced() {
        let mesh = primitives::icosphere(1.0, 2);
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        let a = Mat3::new(1.2, 0.3, -0.1, 0.0, 0.8, 0.4, 0.2, -0.3, 1.5);
        let v = sys
            .forward_solve(&JacobianField::constant(mesh.face_count(), a, 1.0))
            .unwrap();
        let c = mesh.centroid();
        let expect: Vec<Vec3> = mesh.vertices().iter().map(|p| a * (p - c) + c).collect();
        assert!(max_dev(&v, &expect) <= 1e-6);
    }

    #[test]
    fn uniform_weight_scales_about_centroid() {
        let mesh = primitives::icosphere(1.0, 2);
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        let v = sys
            .forward_solve(&JacobianField::constant(mesh.face_count(), Mat3::identity(), 2.5))
            .unwrap();
        let c = mesh.centroid();
        let expect: Vec<Vec3> = mesh.vertices().iter().map(|p| (p - c) * 2.5 + c).collect();
        assert!(max_dev(&v, &expect) <= 1e-6);
    }

    #[test]
    fn poisson_optimality_holds_for_random_field() {
        let mesh = primitives::icosphere(1.0, 2);
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let field = JacobianField {
            jacobians: (0..mesh.face_count())
                .map(|_| Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
            weights: (0..mesh.face_count()).map(|_| rng.gen_range(0.5..1.5)).collect(),
        };
        let v = sys.forward_solve(&field).unwrap();
        let (res, scale) = sys.optimality_residual(&v, &field).unwrap();
        assert!(res <= 1e-8 * scale, "{res} vs {scale}");
    }

    #[test]
    fn length_mismatch_is_reported() {
        let mesh = primitives::icosphere(1.0, 1);
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        assert!(matches!(
            sys.forward_solve(&JacobianField::identity(3)),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(sys.target_gradient(&[Vec3::zeros()]).is_err());
    }

    #[test]
    fn zero_vertex_gradient_gives_zero_field_gradient() {
        let mesh = primitives::icosphere(1.0, 1);
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        let g = sys
            .backward(
                &JacobianField::identity(mesh.face_count()),
                &vec![Vec3::zeros(); mesh.vertex_count()],
            )
            .unwrap();
        assert_eq!(g, FieldGradient::zeros(mesh.face_count()));
    }

    fn quadratic_loss(v: &[Vec3], target: &[Vec3]) -> f64 {
        v.iter().zip(target).map(|(a, b)| (a - b).norm_squared()).sum()
    }

    #[test]
    fn single_triangle_adjoint_matches_finite_differences() {
        let mesh = single_triangle();
        let sys = PoissonSystem::assemble(&mesh, Pinning::default()).unwrap();
        let target = vec![
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(1.3, 0.1, -0.2),
            Vec3::new(-0.2, 0.9, 0.4),
        ];
        let field = JacobianField {
            jacobians: vec![Mat3::new(1.1, 0.2, -0.3, 0.1, 0.9, 0.2, -0.2, 0.3, 1.2)],
            weights: vec![0.8],
        };
        let v = sys.forward_solve(&field).unwrap();
        let dv: Vec<Vec3> = v.iter().zip(&target).map(|(a, b)| (a - b) * 2.0).collect();
        let grad = sys.backward(&field, &dv).unwrap().to_flat();
        let flat = field.to_flat();
        let h = 1e-5;
        for k in 0..10 {
            let eval = |delta: f64| {
                let mut p = flat.clone();
                p[k] += delta;
                let f = JacobianField::from_flat(&p).unwrap();
                quadratic_loss(&sys.forward_solve(&f).unwrap(), &target)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
            assert!(rel <= 1e-6, "param {k}: adjoint {} fd {fd}", grad[k]);
        }
    }
}
