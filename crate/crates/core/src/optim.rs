//! Adam with bias correction.

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment buffers for one flat parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamMoments {
    pub fn new(len: usize) -> Self {
        AdamMoments {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One Adam step in place. A non-finite gradient aborts before anything is written.
pub fn optimizer_update(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut AdamMoments,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != moments.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            found: grads.len().min(moments.len()),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i} is {}", grads[i])));
    }
    moments.step += 1;
    let t = moments.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut().zip(moments.v.iter_mut()))
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
    }
    Ok(())
}
