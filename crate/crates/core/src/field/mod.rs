//! Per-face weighted Jacobians, the optimization variables of the deformation.
//!
//! Each face `i` carries a 3x3 matrix `J_i` and a scalar weight `w_i`; the
//! deformed vertices are the least-squares Poisson solution whose per-face
//! Jacobians best match `w_i J_i` (see [`PoissonSystem`]).

mod checkpoint;
mod poisson;

pub use checkpoint::{load_field, read_field, save_field, write_field, FIELD_MAGIC, FIELD_VERSION};
pub use poisson::{Pinning, PoissonSystem, SolverBackend};

use crate::error::{Error, Result};
use crate::mesh::{Mat3, TriMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianField {
    pub jacobians: Vec<Mat3>,
    pub weights: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every `J_i` and `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub d_jacobians: Vec<Mat3>,
    pub d_weights: Vec<f64>,
}

impl JacobianField {
    /// `J_i = I`, `w_i = 1`: the field whose solve is the source mesh.
    pub fn identity(face_count: usize) -> Self {
        Self {
            jacobians: vec![Mat3::identity(); face_count],
            weights: vec![1.0; face_count],
        }
    }

    /// Constant field `(jacobian, weight)` on every face.
    pub fn constant(face_count: usize, jacobian: Mat3, weight: f64) -> Self {
        Self {
            jacobians: vec![jacobian; face_count],
            weights: vec![weight; face_count],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.jacobians.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                what: "jacobians vs weights",
                expected: self.weights.len(),
                actual: self.jacobians.len(),
            });
        }
        if let Some(i) = self
            .jacobians
            .iter()
            .zip(&self.weights)
            .position(|(j, w)| !w.is_finite() || !j.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite(format!("jacobian field at face {i}")));
        }
        Ok(())
    }

    /// Weighted target `w_i J_i` of face `i`.
    pub fn target(&self, i: usize) -> Mat3 {
        self.jacobians[i] * self.weights[i]
    }

    /// Flattens to `[J_0 row-major, ..., J_{m-1}, w_0, ..., w_{m-1}]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(10 * self.len());
        for j in &self.jacobians {
            for r in 0..3 {
                for c in 0..3 {
                    out.push(j[(r, c)]);
                }
            }
        }
        out.extend_from_slice(&self.weights);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(10) {
            return Err(Error::Invalid(format!(
                "flat field length {} is not a multiple of 10",
                flat.len()
            )));
        }
        let m = flat.len() / 10;
        let jacobians = flat[..9 * m]
            .chunks_exact(9)
            .map(Mat3::from_row_slice)
            .collect();
        Ok(Self {
            jacobians,
            weights: flat[9 * m..].to_vec(),
        })
    }
}

impl FieldGradient {
    pub fn zeros(face_count: usize) -> Self {
        Self {
            d_jacobians: vec![Mat3::zeros(); face_count],
            d_weights: vec![0.0; face_count],
        }
    }

    pub fn len(&self) -> usize {
        self.d_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_weights.is_empty()
    }

    /// Same flat layout as [`JacobianField::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        JacobianField {
            jacobians: self.d_jacobians.clone(),
            weights: self.d_weights.clone(),
        }
        .to_flat()
    }

    /// Zeroes the gradient on faces where `mask` is false.
    pub fn mask(&mut self, mask: &[bool]) {
        for (i, keep) in mask.iter().enumerate() {
            if !keep {
                self.d_jacobians[i] = Mat3::zeros();
                self.d_weights[i] = 0.0;
            }
        }
    }
}

/// Identity field sized for `mesh`.
pub fn identity_field(mesh: &TriMesh) -> JacobianField {
    JacobianField::identity(mesh.face_count())
}

/// Elementwise `(1 - t) a + t b` on Jacobians and weights.
pub fn interpolate(a: &JacobianField, b: &JacobianField, t: f64) -> Result<JacobianField> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "interpolated fields",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("interpolation parameter".into()));
    }
    Ok(JacobianField {
        jacobians: a
            .jacobians
            .iter()
            .zip(&b.jacobians)
            .map(|(ja, jb)| ja * (1.0 - t) + jb * t)
            .collect(),
        weights: a
            .weights
            .iter()
            .zip(&b.weights)
            .map(|(wa, wb)| (1.0 - t) * wa + t * wb)
            .collect(),
    })
}

/// Keeps `field` where `face_mask` is true and takes `base` elsewhere.
pub fn apply_mask(
    field: &JacobianField,
    base: &JacobianField,
    face_mask: &[bool],
) -> Result<JacobianField> {
    for (what, len) in [("base field", base.len()), ("face mask", face_mask.len())] {
        if len != field.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: field.len(),
                actual: len,
            });
        }
    }
    let mut out = field.clone();
    for (i, keep) in face_mask.iter().enumerate() {
        if !keep {
            out.jacobians[i] = base.jacobians[i];
            out.weights[i] = base.weights[i];
        }
    }
    Ok(out)
}
