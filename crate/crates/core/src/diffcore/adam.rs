use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter moment estimates and the shared step counter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    /// Steps taken since each slot's moments were last reset; drives bias
    /// correction per slot.
    pub slot_steps: Vec<u64>,
}

impl AdamState {
    pub fn new(params: &[&Matrix]) -> Self {
        Self {
            step: 0,
            first: params.iter().map(|p| Matrix::zeros(p.dim())).collect(),
            second: params.iter().map(|p| Matrix::zeros(p.dim())).collect(),
            slot_steps: vec![0; params.len()],
        }
    }

    /// Zeroes the moments of one slot, resizing them to `shape`.
    pub fn reset_slot(&mut self, slot: usize, shape: (usize, usize)) {
        self.first[slot] = Matrix::zeros(shape);
        self.second[slot] = Matrix::zeros(shape);
        self.slot_steps[slot] = 0;
    }

    /// Makes the slot list match `params`: extra slots are dropped, new ones
    /// start at zero, and slots whose shape changed are reset.
    pub fn sync(&mut self, params: &[&Matrix]) {
        self.first.truncate(params.len());
        self.second.truncate(params.len());
        self.slot_steps.truncate(params.len());
        for (i, p) in params.iter().enumerate() {
            if i >= self.first.len() {
                self.first.push(Matrix::zeros(p.dim()));
                self.second.push(Matrix::zeros(p.dim()));
                self.slot_steps.push(0);
            } else if self.first[i].dim() != p.dim() {
                self.reset_slot(i, p.dim());
            }
        }
    }
}

impl Adam {
    /// One bias-corrected Adam update. Slots with `None` gradient count as
    /// zero gradient.
    pub fn step(
        &self,
        params: &mut [&mut Matrix],
        grads: &[Option<Matrix>],
        state: &mut AdamState,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.first.len() {
            return Err(Error::Precondition(format!(
                "adam: {} params, {} grads, {} state slots",
                params.len(),
                grads.len(),
                state.first.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if let Some(g) = g {
                if g.dim() != p.dim() || state.first[i].dim() != p.dim() {
                    return Err(Error::Shape {
                        op: "adam",
                        lhs: p.dim(),
                        rhs: g.dim(),
                    });
                }
            }
        }
        state.step += 1;
        for (i, p) in params.iter_mut().enumerate() {
            state.slot_steps[i] += 1;
            let Some(g) = &grads[i] else {
                // zero gradient: moments decay, parameter moves only by
                // residual momentum
                state.first[i].mapv_inplace(|m| m * self.beta1);
                state.second[i].mapv_inplace(|v| v * self.beta2);
                if state.first[i].iter().all(|&m| m == 0.0) {
                    continue;
                }
                self.apply(p, i, state);
                continue;
            };
            let (b1, b2) = (self.beta1, self.beta2);
            ndarray::Zip::from(&mut state.first[i])
                .and(&mut state.second[i])
                .and(g)
                .for_each(|m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                });
            self.apply(p, i, state);
        }
        Ok(())
    }

    fn apply(&self, p: &mut Matrix, slot: usize, state: &AdamState) {
        let t = state.slot_steps[slot] as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (lr, eps) = (self.lr, self.eps);
        ndarray::Zip::from(p)
            .and(&state.first[slot])
            .and(&state.second[slot])
            .for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            });
    }
}

/// Rescales gradients in place so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Option<Matrix>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * s);
        }
    }
    norm
}
