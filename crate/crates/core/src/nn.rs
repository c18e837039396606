//! Feedforward networks with analytic backpropagation, and the Adam
//! optimizer.
//!
//! Networks are dense, with rectifier activations on the hidden layers and a
//! linear output layer. Parameters live in one flat `f64` buffer laid out
//! layer by layer (row-major weight matrix, then bias vector), so gradients,
//! moment estimates, and parameter updates are all plain slice arithmetic.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::rng::RngStream;

/// Parameters of a dense feedforward network.
///
/// Layer `l` maps `layer_sizes[l]` inputs to `layer_sizes[l+1]` outputs as
/// `relu(W x + b)` (identity instead of `relu` on the last layer). The flat
/// buffer stores `W_0, b_0, W_1, b_1, ...` with each `W_l` row-major
/// `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    data: Vec<f64>,
}

impl MlpParams {
    /// Network with all weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::Invalid {
                what: "layer_sizes needs >= 2 positive entries",
            });
        }
        let n = param_count(layer_sizes);
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            data: vec![0.0; n],
        })
    }

    /// Glorot-uniform initialization: weights drawn from
    /// `U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
    pub fn init(layer_sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        let mut p = MlpParams::zeros(layer_sizes)?;
        let mut off = 0;
        for l in 0..p.n_layers() {
            let (fan_in, fan_out) = (p.layer_sizes[l], p.layer_sizes[l + 1]);
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for w in &mut p.data[off..off + fan_in * fan_out] {
                *w = rng.uniform_in(-limit, limit);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(p)
    }

    /// Builds from an existing flat buffer (checkpoint loading).
    pub fn from_flat(layer_sizes: &[usize], data: Vec<f64>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::Invalid {
                what: "layer_sizes needs >= 2 positive entries",
            });
        }
        let n = param_count(layer_sizes);
        if data.len() != n {
            return Err(CoreError::DimMismatch {
                what: "flat parameter buffer",
                expected: n,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "network parameters",
            });
        }
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            data,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Forward pass. Output length equals the last layer size.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(CoreError::DimMismatch {
                what: "mlp forward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut cur = input.to_vec();
        let mut off = 0;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.data[off..off + n_in * n_out];
            let b = &self.data[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(cur.iter()) {
                    z += wi * xi;
                }
                // Hidden layers rectify; output layer is linear.
                next[o] = if l + 1 < self.n_layers() && z < 0.0 { 0.0 } else { z };
            }
            cur = next;
            off += n_in * n_out + n_out;
        }
        Ok(cur)
    }

    /// Gradient of `upstream . output` with respect to every weight and bias,
    /// as a fresh flat buffer. Rectifier subgradient at 0 is taken as 0.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.n_params()];
        self.backward_scaled_into(input, upstream, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Accumulates `scale * d(upstream . output)/d(params)` into `acc`.
    ///
    /// This is the hot path of the gradient estimators: it avoids allocating
    /// one gradient buffer per trajectory step.
    pub fn backward_scaled_into(
        &self,
        input: &[f64],
        upstream: &[f64],
        scale: f64,
        acc: &mut [f64],
    ) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(CoreError::DimMismatch {
                what: "mlp backward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if upstream.len() != self.output_dim() {
            return Err(CoreError::DimMismatch {
                what: "mlp backward upstream gradient",
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if acc.len() != self.n_params() {
            return Err(CoreError::DimMismatch {
                what: "mlp backward gradient buffer",
                expected: self.n_params(),
                got: acc.len(),
            });
        }

        let n_layers = self.n_layers();
        // Forward pass, keeping post-activation values of every layer.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut off = 0;
        let mut offsets = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            offsets.push(off);
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.data[off..off + n_in * n_out];
            let b = &self.data[off + n_in * n_out..off + n_in * n_out + n_out];
            let prev = &acts[l];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(prev.iter()) {
                    z += wi * xi;
                }
                next[o] = if l + 1 < n_layers && z < 0.0 { 0.0 } else { z };
            }
            acts.push(next);
            off += n_in * n_out + n_out;
        }

        // Backward pass. delta[l] = d(upstream . output)/d(pre-activation of layer l).
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let w = &self.data[off..off + n_in * n_out];
            // On hidden layers the post-activation kept in acts[l+1] is zero
            // exactly where the rectifier clipped, so gating on it applies
            // the subgradient convention (0 at 0).
            if l + 1 < n_layers {
                for (d, a) in delta.iter_mut().zip(acts[l + 1].iter()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let prev = &acts[l];
            let (gw, gb) = acc[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = scale * delta[o];
                if d != 0.0 {
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(prev.iter()) {
                        *g += d * xi;
                    }
                }
                gb[o] += d;
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &w[o * n_in..(o + 1) * n_in];
                        for (pd, wi) in prev_delta.iter_mut().zip(row.iter()) {
                            *pd += d * wi;
                        }
                    }
                }
                delta = prev_delta;
            }
        }
        Ok(())
    }
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

/// Adam moment estimates for one flat parameter buffer.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the standard hyper-parameters (0.9, 0.999, 1e-8).
    pub fn new(n_params: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn n_params(&self) -> usize {
        self.first_moment.len()
    }
}

/// One Adam descent step on a flat parameter buffer:
///
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, then
/// `p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`.
///
/// Callers maximizing an objective pass the negated ascent gradient.
/// Non-finite gradient entries are rejected so training loops can skip the
/// batch.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if grad.len() != params.len() || state.n_params() != params.len() {
        return Err(CoreError::DimMismatch {
            what: "adam step",
            expected: params.len(),
            got: grad.len(),
        });
    }
    if !(lr > 0.0) {
        return Err(CoreError::Invalid {
            what: "adam learning rate must be > 0",
        });
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(CoreError::NonFinite { what: "gradient" });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);
    for i in 0..params.len() {
        let g = grad[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] =
            state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + state.epsilon);
    }
    Ok(())
}

/// Plain SGD descent step, kept for estimator tests where the raw update
/// direction matters.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if grad.len() != params.len() {
        return Err(CoreError::DimMismatch {
            what: "sgd step",
            expected: params.len(),
            got: grad.len(),
        });
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(CoreError::NonFinite { what: "gradient" });
    }
    for (p, g) in params.iter_mut().zip(grad.iter()) {
        *p -= lr * g;
    }
    Ok(())
}
