use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// One bias-corrected Adam step at step index `t >= 1`, in place.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    hp: AdamParams,
    t: u64,
) -> Result<()> {
    let n = params.len();
    for (what, len) in [("gradient", grads.len()), ("first moment", m.len()), ("second moment", v.len())] {
        if len != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                actual: len,
            });
        }
    }
    if t == 0 {
        return Err(Error::Invalid("Adam step index starts at 1".into()));
    }
    let c1 = 1.0 - hp.beta1.powf(t as f64);
    let c2 = 1.0 - hp.beta2.powf(t as f64);
    for i in 0..n {
        let g = grads[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
    Ok(())
}
