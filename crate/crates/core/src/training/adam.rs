//! Adam with lazily updated rows for embedding tables.

use std::collections::BTreeMap;

use crate::models::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamSettings {
    pub fn new(lr: f64) -> Self {
        AdamSettings {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

struct StepScalars {
    lr_t: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

fn scalars(s: &AdamSettings, step: u64) -> StepScalars {
    let t = step as i32;
    let bc1 = 1.0 - s.beta1.powi(t);
    let bc2 = 1.0 - s.beta2.powi(t);
    StepScalars {
        lr_t: (s.lr * bc2.sqrt() / bc1) as f32,
        beta1: s.beta1 as f32,
        beta2: s.beta2 as f32,
        eps: (s.eps * bc2.sqrt()) as f32,
    }
}

#[inline]
fn update(params: &mut [f32], m: &mut [f32], v: &mut [f32], grad: &[f32], k: &StepScalars) {
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * g;
        v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * g * g;
        params[i] -= k.lr_t * m[i] / (v[i].sqrt() + k.eps);
    }
}

/// Dense step. `step` is the 1-based global step used for bias correction.
pub fn adam_dense(params: &mut [f32], moments: &mut Moments, grad: &[f32], settings: &AdamSettings, step: u64) {
    let k = scalars(settings, step);
    update(params, &mut moments.m, &mut moments.v, grad, &k);
}

/// Updates only the rows present in `grads`; other rows and their moments
/// are left untouched.
pub fn adam_rows(
    params: &mut Matrix<f32>,
    moments: &mut Moments,
    grads: &BTreeMap<u32, Vec<f32>>,
    settings: &AdamSettings,
    step: u64,
) {
    let k = scalars(settings, step);
    let cols = params.cols();
    for (&row, g) in grads {
        let range = row as usize * cols..(row as usize + 1) * cols;
        update(
            params.row_mut(row as usize),
            &mut moments.m[range.clone()],
            &mut moments.v[range],
            g,
            &k,
        );
    }
}
