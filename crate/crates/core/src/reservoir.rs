//! A single leaky echo-state reservoir.
//!
//! The continuous dynamics `(1/α) dx/dt = -x + tanh(W x + W_in u + W_fb y)` are
//! integrated with the usual one-step leaky update
//! `x <- (1 - α) x + α tanh(W x + W_in u + W_fb y)`, and the output is read
//! linearly as `y = W_out x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{scale_to_spectral_radius, CsrMatrix};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirParams {
    pub n_units: usize,
    pub leak_rate: f64,
    pub spectral_radius: Option<f64>,
    pub rec_connectivity: f64,
    pub input_connectivity: f64,
    pub input_scaling: f64,
    pub feedback_scaling: f64,
    pub seed: u64,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        ReservoirParams {
            n_units: 100,
            leak_rate: 0.3,
            spectral_radius: Some(0.9),
            rec_connectivity: 0.1,
            input_connectivity: 0.2,
            input_scaling: 1.0,
            feedback_scaling: 0.1,
            seed: 0,
        }
    }
}

fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("must lie in [0, 1], got {v}")))
    }
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::param("n_units", "must be at least 1"));
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return Err(Error::param("leak_rate", format!("must lie in (0, 1], got {}", self.leak_rate)));
        }
        if let Some(sr) = self.spectral_radius {
            if !(sr > 0.0 && sr.is_finite()) {
                return Err(Error::param("spectral_radius", format!("must be positive, got {sr}")));
            }
        }
        check_unit_interval("rec_connectivity", self.rec_connectivity)?;
        check_unit_interval("input_connectivity", self.input_connectivity)?;
        if !(self.input_scaling > 0.0) {
            return Err(Error::param("input_scaling", "must be positive"));
        }
        if !(self.feedback_scaling > 0.0) {
            return Err(Error::param("feedback_scaling", "must be positive"));
        }
        Ok(())
    }
}

/// Fixed weights of one reservoir: recurrent `w` (n×n), input `w_in` (n×k) and
/// output feedback `w_fb` (n×m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub w: CsrMatrix,
    pub w_in: CsrMatrix,
    pub w_fb: CsrMatrix,
}

impl WeightSet {
    pub fn n_units(&self) -> usize {
        self.w.rows()
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.w.rows();
        if self.w.cols() != n {
            return Err(Error::DimensionMismatch { matrix: "W", expected: n, actual: self.w.cols() });
        }
        if self.w_in.rows() != n {
            return Err(Error::DimensionMismatch { matrix: "W_in", expected: n, actual: self.w_in.rows() });
        }
        if self.w_fb.rows() != n {
            return Err(Error::DimensionMismatch { matrix: "W_fb", expected: n, actual: self.w_fb.rows() });
        }
        Ok(())
    }
}

/// Draws the three weight matrices. Nonzeros of `W` are uniform in `[-1, 1]` at
/// exactly `rec_connectivity` density and then rescaled to the requested
/// spectral radius; input and feedback nonzeros are uniform in `[-1, 1]` times
/// their scaling, at `input_connectivity` density.
pub fn init_weights(params: &ReservoirParams, input_dim: usize, output_dim: usize) -> Result<WeightSet> {
    params.validate()?;
    if input_dim == 0 {
        return Err(Error::param("input_dim", "must be at least 1"));
    }
    if output_dim == 0 {
        return Err(Error::param("output_dim", "must be at least 1"));
    }
    let n = params.n_units;
    let mut rng = stream(params.seed, "reservoir/w");
    let mut w = CsrMatrix::random(n, n, params.rec_connectivity, 1.0, &mut rng);
    if let Some(sr) = params.spectral_radius {
        if w.nnz() > 0 {
            w = scale_to_spectral_radius(&w, sr)?;
        }
    }
    let mut rng = stream(params.seed, "reservoir/w_in");
    let w_in = CsrMatrix::random(n, input_dim, params.input_connectivity, params.input_scaling, &mut rng);
    let mut rng = stream(params.seed, "reservoir/w_fb");
    let w_fb = CsrMatrix::random(n, output_dim, params.input_connectivity, params.feedback_scaling, &mut rng);
    Ok(WeightSet { w, w_in, w_fb })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirState {
    pub x: Vec<f64>,
}

impl ReservoirState {
    pub fn zeros(n: usize) -> Self {
        ReservoirState { x: vec![0.0; n] }
    }

    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Writes the leaky update of `x` into `out` (which must not alias `x`).
pub(crate) fn step_into(x: &[f64], w: &WeightSet, u: &[f64], y_prev: &[f64], leak: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    w.w.mul_acc(x, out);
    w.w_in.mul_acc(u, out);
    w.w_fb.mul_acc(y_prev, out);
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = (1.0 - leak) * xi + leak * o.tanh();
    }
}

/// One time step of the reservoir. Pure: the returned state depends only on the arguments.
pub fn step(state: &ReservoirState, w: &WeightSet, u: &[f64], y_prev: &[f64], leak: f64) -> Result<ReservoirState> {
    w.check_shapes()?;
    let n = w.n_units();
    if state.len() != n {
        return Err(Error::DimensionMismatch { matrix: "state", expected: n, actual: state.len() });
    }
    if u.len() != w.w_in.cols() {
        return Err(Error::DimensionMismatch { matrix: "W_in", expected: w.w_in.cols(), actual: u.len() });
    }
    if y_prev.len() != w.w_fb.cols() {
        return Err(Error::DimensionMismatch { matrix: "W_fb", expected: w.w_fb.cols(), actual: y_prev.len() });
    }
    if !(leak > 0.0 && leak <= 1.0) {
        return Err(Error::param("leak_rate", format!("must lie in (0, 1], got {leak}")));
    }
    let mut out = vec![0.0; n];
    step_into(&state.x, w, u, y_prev, leak, &mut out);
    Ok(ReservoirState { x: out })
}

/// `y = W_out x` for the concatenated state of all reservoirs.
pub fn readout(x_concat: &[f64], w_out: &DMatrix<f64>) -> Result<Vec<f64>> {
    if w_out.ncols() != x_concat.len() {
        return Err(Error::DimensionMismatch { matrix: "W_out", expected: w_out.ncols(), actual: x_concat.len() });
    }
    let y = w_out * DVector::from_column_slice(x_concat);
    Ok(y.iter().copied().collect())
}
