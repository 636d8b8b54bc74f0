use super::{SparseError, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for SPD systems.
///
/// Used as the fallback when a direct factor would be too large to hold.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, CgReport), SparseError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(SparseError::DimensionMismatch(format!(
            "cg on {}x{} with rhs of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(SparseError::NotSpd { pivot: i, value: d })
            }
        })
        .collect::<Result<_, _>>()?;
    let b_norm = norm(b);
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let ax = a.mul_vec(&x)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(p, q)| p * q).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = norm(&r) / b_norm;
    for it in 0..max_iterations {
        if rel <= tolerance {
            return Ok((
                x,
                CgReport {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        let ap = a.mul_vec(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SparseError::NotSpd { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / b_norm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel <= tolerance {
        Ok((
            x,
            CgReport {
                iterations: max_iterations,
                relative_residual: rel,
            },
        ))
    } else {
        Err(SparseError::NotConverged {
            iterations: max_iterations,
            residual: rel,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
