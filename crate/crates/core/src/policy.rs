//! Online reinforcement learning of the readout.
//!
//! After each trial only the row of the chosen action moves:
//! `W_out[choice] += η (r - softmax(β y)[choice]) (x - x_th)`.
//! Actions are picked epsilon-greedily with epsilon decaying linearly from 1 to 0.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyParams {
    pub eta: f64,
    pub beta: f64,
    pub x_th: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams { eta: 0.002, beta: 20.0, x_th: 0.0 }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::param("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be positive, got {}", self.beta)));
        }
        if !self.x_th.is_finite() {
            return Err(Error::param("x_th", "must be finite"));
        }
        Ok(())
    }
}

/// Readout matrix (actions × units) and its fixed binary support.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub w_out: DMatrix<f64>,
    pub mask: DMatrix<f64>,
}

impl ReadoutWeights {
    /// Zero readout; each entry is independently masked out with probability `sparsity`.
    pub fn new<R: Rng + ?Sized>(n_actions: usize, n_units: usize, sparsity: f64, rng: &mut R) -> Self {
        let mask = DMatrix::from_fn(n_actions, n_units, |_, _| {
            if sparsity > 0.0 && rng.gen::<f64>() < sparsity {
                0.0
            } else {
                1.0
            }
        });
        ReadoutWeights { w_out: DMatrix::zeros(n_actions, n_units), mask }
    }

    pub fn dense(w_out: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(w_out.nrows(), w_out.ncols(), 1.0);
        ReadoutWeights { w_out, mask }
    }

    pub fn apply_mask(&mut self) {
        self.w_out.component_mul_assign(&self.mask);
    }
}

/// `exp(β y_i) / Σ_j exp(β y_j)`, shifted by the maximum for stability.
pub fn softmax(y: &[f64], beta: f64) -> Vec<f64> {
    let max = y.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = y.iter().map(|v| (beta * v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// First index of the maximum.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in y.iter().enumerate() {
        if v > y[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice over `y.len()` actions.
pub fn select_action<R: Rng + ?Sized>(y: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..y.len())
    } else {
        argmax(y)
    }
}

/// Applies the delta rule to row `choice` and re-applies the mask.
pub fn update_readout(w: &mut ReadoutWeights, choice: usize, reward: f64, y: &[f64], x: &[f64], params: &PolicyParams) {
    let p = softmax(y, params.beta)[choice];
    let gain = params.eta * (reward - p);
    if gain == 0.0 {
        return;
    }
    for (k, &xi) in x.iter().enumerate() {
        let m = w.mask[(choice, k)];
        if m != 0.0 {
            w.w_out[(choice, k)] += gain * (xi - params.x_th);
        }
    }
}

/// Linear decay from 1 at the first trial to 0 at the last.
pub fn epsilon_at(trial_idx: usize, n_trials: usize) -> Result<f64> {
    if trial_idx >= n_trials {
        return Err(Error::EpsilonIndex { index: trial_idx, n_trials });
    }
    if n_trials == 1 {
        return Ok(1.0);
    }
    Ok(1.0 - trial_idx as f64 / (n_trials - 1) as f64)
}
