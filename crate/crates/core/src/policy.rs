//! Parametrized randomized policies with exact score functions.
//!
//! Two families:
//!
//! - [`SoftmaxPolicy`] over a finite action set, one logit network per
//!   action. The score of sampled action `m` with respect to the parameters
//!   of network `l` is `(delta_{ml} - prob_l) * grad(logit_l)`.
//! - [`GaussianPolicy`] over a continuous action space, mean parametrized by
//!   a network and a fixed positive-definite covariance. The score is
//!   `grad(mu)^T Sigma^{-1} (a - mu)`.
//!
//! Both satisfy the zero-mean score identity: the policy-weighted
//! sum/integral of the score vanishes at every `(t, x)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::nn::MlpParams;
use crate::rng::RngStream;

/// Gradient with the shape of a [`SoftmaxPolicy`]'s parameters: one flat
/// buffer per logit network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub nets: Vec<Vec<f64>>,
}

impl PolicyGrad {
    pub fn zeros_like(policy: &SoftmaxPolicy) -> Self {
        PolicyGrad {
            nets: policy
                .nets
                .iter()
                .map(|n| vec![0.0; n.n_params()])
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for n in &mut self.nets {
            n.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &PolicyGrad) {
        for (dst, src) in self.nets.iter_mut().zip(other.nets.iter()) {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += a * s;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for n in &mut self.nets {
            n.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.nets.iter().all(|n| n.iter().all(|x| x.is_finite()))
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(|n| n.len()).sum()
    }
}

/// Softmax policy over a finite action set, one logit network per action.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    nets: Vec<MlpParams>,
    actions: Vec<f64>,
}

impl SoftmaxPolicy {
    /// Requires at least two actions and scalar-output networks sharing one
    /// input dimension.
    pub fn new(nets: Vec<MlpParams>, actions: Vec<f64>) -> Result<Self> {
        if nets.len() < 2 || nets.len() != actions.len() {
            return Err(CoreError::Invalid {
                what: "softmax policy needs M >= 2 nets with matching action values",
            });
        }
        let input_dim = nets[0].input_dim();
        for n in &nets {
            if n.output_dim() != 1 {
                return Err(CoreError::Invalid {
                    what: "softmax logit nets must have output dimension 1",
                });
            }
            if n.input_dim() != input_dim {
                return Err(CoreError::Invalid {
                    what: "softmax logit nets must share the input dimension",
                });
            }
        }
        Ok(SoftmaxPolicy { nets, actions })
    }

    /// Fresh Glorot-initialized policy: `hidden` lists the hidden layer
    /// widths, the input is `input_dim`-dimensional.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        actions: &[f64],
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let nets = actions
            .iter()
            .map(|_| MlpParams::init(&sizes, rng))
            .collect::<Result<Vec<_>>>()?;
        SoftmaxPolicy::new(nets, actions.to_vec())
    }

    pub fn n_actions(&self) -> usize {
        self.nets.len()
    }

    pub fn input_dim(&self) -> usize {
        self.nets[0].input_dim()
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn nets(&self) -> &[MlpParams] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [MlpParams] {
        &mut self.nets
    }

    pub fn into_parts(self) -> (Vec<MlpParams>, Vec<f64>) {
        (self.nets, self.actions)
    }

    /// Raw logits at the given feature vector.
    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.nets.len());
        for n in &self.nets {
            let y = n.forward(features)?;
            if !y[0].is_finite() {
                return Err(CoreError::NonFinite {
                    what: "softmax logit",
                });
            }
            out.push(y[0]);
        }
        Ok(out)
    }

    /// Action probabilities, computed with max-logit subtraction.
    pub fn probs(&self, features: &[f64]) -> Result<Vec<f64>> {
        let logits = self.logits(features)?;
        Ok(softmax(&logits))
    }

    /// Score of sampled action index `m`: for every net `l`, accumulates
    /// `(delta_{ml} - prob_l) * grad(logit_l)`.
    pub fn score(&self, features: &[f64], m: usize) -> Result<PolicyGrad> {
        let mut g = PolicyGrad::zeros_like(self);
        self.score_scaled_into(features, m, 1.0, &mut g)?;
        Ok(g)
    }

    /// Accumulates `scale * score(features, m)` into `acc`.
    pub fn score_scaled_into(
        &self,
        features: &[f64],
        m: usize,
        scale: f64,
        acc: &mut PolicyGrad,
    ) -> Result<()> {
        if m >= self.nets.len() {
            return Err(CoreError::Invalid {
                what: "sampled action index out of range",
            });
        }
        let probs = self.probs(features)?;
        for (l, net) in self.nets.iter().enumerate() {
            let delta = if l == m { 1.0 } else { 0.0 };
            let coeff = scale * (delta - probs[l]);
            net.backward_scaled_into(features, &[1.0], coeff, &mut acc.nets[l])?;
        }
        Ok(())
    }

    /// Samples an action index (and its value) by inverse CDF on one uniform.
    pub fn sample(&self, features: &[f64], rng: &mut RngStream) -> Result<(usize, f64)> {
        let probs = self.probs(features)?;
        let u = rng.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok((i, self.actions[i]));
            }
        }
        // Rounding can leave acc marginally below 1.
        let last = self.actions.len() - 1;
        Ok((last, self.actions[last]))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Fixed symmetric positive-definite covariance with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct Covariance {
    dim: usize,
    chol: Vec<f64>, // lower triangular, row-major
}

impl Covariance {
    /// Builds from a dense row-major matrix; fails if not symmetric
    /// positive definite.
    pub fn new(dim: usize, matrix: &[f64]) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(CoreError::DimMismatch {
                what: "covariance matrix",
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                if libm::fabs(matrix[i * dim + j] - matrix[j * dim + i]) > 1e-12 {
                    return Err(CoreError::Invalid {
                        what: "covariance must be symmetric",
                    });
                }
            }
        }
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = matrix[i * dim + j];
                for k in 0..j {
                    sum -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(CoreError::Invalid {
                            what: "covariance must be positive definite",
                        });
                    }
                    l[i * dim + j] = libm::sqrt(sum);
                } else {
                    l[i * dim + j] = sum / l[j * dim + j];
                }
            }
        }
        Ok(Covariance { dim, chol: l })
    }

    pub fn isotropic(dim: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(CoreError::Invalid {
                what: "isotropic covariance needs eps > 0",
            });
        }
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = eps;
        }
        Covariance::new(dim, &m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L z` for the Cholesky factor `L`.
    fn chol_mul(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            let mut s = 0.0;
            for k in 0..=i {
                s += self.chol[i * self.dim + k] * z[k];
            }
            out[i] = s;
        }
    }

    /// Solves `Sigma x = rhs` via the two triangular solves.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s -= self.chol[i * n + k] * y[k];
            }
            y[i] = s / self.chol[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.chol[k * n + i] * x[k];
            }
            x[i] = s / self.chol[i * n + i];
        }
        x
    }
}

/// Gaussian policy: actions drawn from `N(mu(t, x), Sigma)` with the mean
/// parametrized by a network and a fixed exploration covariance.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    mean_net: MlpParams,
    sigma: Covariance,
}

impl GaussianPolicy {
    pub fn new(mean_net: MlpParams, sigma: Covariance) -> Result<Self> {
        if mean_net.output_dim() != sigma.dim() {
            return Err(CoreError::DimMismatch {
                what: "gaussian policy action dimension",
                expected: sigma.dim(),
                got: mean_net.output_dim(),
            });
        }
        Ok(GaussianPolicy { mean_net, sigma })
    }

    pub fn mean_net(&self) -> &MlpParams {
        &self.mean_net
    }

    pub fn action_dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn mean(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(features)
    }

    /// Draws `mu + L z` with `z` standard normal and `L` the Cholesky factor.
    pub fn sample(&self, features: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        let mu = self.mean(features)?;
        let z: Vec<f64> = (0..self.sigma.dim())
            .map(|_| rng.standard_normal())
            .collect();
        let mut lz = vec![0.0; self.sigma.dim()];
        self.sigma.chol_mul(&z, &mut lz);
        Ok(mu.iter().zip(lz.iter()).map(|(m, d)| m + d).collect())
    }

    /// Score with respect to the mean-net parameters:
    /// `grad(mu)^T Sigma^{-1} (a - mu)`, one backward pass with upstream
    /// `Sigma^{-1} (a - mu)`.
    pub fn score(&self, features: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.sigma.dim() {
            return Err(CoreError::DimMismatch {
                what: "gaussian score action",
                expected: self.sigma.dim(),
                got: action.len(),
            });
        }
        let mu = self.mean(features)?;
        let resid: Vec<f64> = action.iter().zip(mu.iter()).map(|(a, m)| a - m).collect();
        let upstream = self.sigma.solve(&resid);
        self.mean_net.backward(features, &upstream)
    }
}
