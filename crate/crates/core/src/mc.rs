//! Monte Carlo pricing of policies and feedback controls, plus the surface
//! and sample-path exports behind the figure artifacts.
//!
//! Pricing runs one independent stream per path, seeded as `seed + path
//! index`, so estimates are reproducible and independent of how paths are
//! distributed over workers: a parallel driver only needs to evaluate
//! [`price_one_path`] for every index and push the results in index order.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mdp::{Environment, TimeGrid};
use crate::policy::SoftmaxPolicy;
use crate::rng::RngStream;
use crate::srp::SrpEnv;

/// Anything that can choose a trading rate at a grid point: a randomized
/// policy (samples), a deterministic feedback map, or a constant rate.
pub trait ControlRule {
    fn rate(
        &self,
        i: usize,
        t_frac: f64,
        features: &[f64],
        state: &[f64],
        rng: &mut RngStream,
    ) -> Result<f64>;
}

impl ControlRule for SoftmaxPolicy {
    fn rate(
        &self,
        _i: usize,
        _t_frac: f64,
        features: &[f64],
        _state: &[f64],
        rng: &mut RngStream,
    ) -> Result<f64> {
        Ok(self.sample(features, rng)?.1)
    }
}

/// Constant trading rate (e.g. `B / T` for the zero-price benchmark).
#[derive(Debug, Clone, Copy)]
pub struct ConstantRate(pub f64);

impl ControlRule for ConstantRate {
    fn rate(&self, _: usize, _: f64, _: &[f64], _: &[f64], _: &mut RngStream) -> Result<f64> {
        Ok(self.0)
    }
}

/// Deterministic feedback map `(i, state) -> rate`.
pub struct FeedbackRule<F>(pub F);

impl<F: Fn(usize, &[f64]) -> f64> ControlRule for FeedbackRule<F> {
    fn rate(&self, i: usize, _: f64, _: &[f64], state: &[f64], _: &mut RngStream) -> Result<f64> {
        Ok((self.0)(i, state))
    }
}

/// Monte Carlo estimate of the contract value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    /// Sample mean, in price units of the initial price.
    pub mean: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl PriceEstimate {
    /// The mean in basis points (1e4 times the price-unit value).
    pub fn mean_bp(&self) -> f64 {
        self.mean * 1e4
    }

    pub fn std_error_bp(&self) -> f64 {
        self.std_error * 1e4
    }
}

/// Streaming mean/variance accumulator (Welford), mergeable for parallel
/// reductions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let delta = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            libm::sqrt(self.variance() / self.n as f64)
        }
    }
}

/// Simulates one path under `rule` and returns the terminal reward.
///
/// `path_seed` should be `seed + path_index` so that estimates do not depend
/// on how paths are scheduled.
pub fn price_one_path<E: Environment + ?Sized, R: ControlRule + ?Sized>(
    env: &E,
    grid: &TimeGrid,
    rule: &R,
    path_seed: u64,
) -> Result<f64> {
    let mut rng = RngStream::new(path_seed);
    let mut x = env.reset(&mut rng);
    let mut feats = Vec::new();
    for i in 0..grid.n_steps() {
        let t_frac = grid.t_frac(i);
        env.features(t_frac, &x, &mut feats);
        let a = rule.rate(i, t_frac, &feats, &x, &mut rng)?;
        let next = env.step(i, &x, a, &mut rng);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(CoreError::EpisodeAborted { step: i });
        }
        x = next;
        if !env.in_domain(&x) {
            break;
        }
    }
    Ok(env.terminal_reward(&x))
}

/// Sample mean and standard error of the terminal reward over `n_paths`
/// independent rollouts. Deterministic given the seed; a failed path aborts
/// the whole estimate.
pub fn mc_price<E: Environment + ?Sized, R: ControlRule + ?Sized>(
    env: &E,
    grid: &TimeGrid,
    rule: &R,
    n_paths: usize,
    seed: u64,
) -> Result<PriceEstimate> {
    if n_paths == 0 {
        return Err(CoreError::Invalid {
            what: "mc_price needs n_paths >= 1",
        });
    }
    let mut stats = RunningStats::new();
    for p in 0..n_paths {
        let g = price_one_path(env, grid, rule, seed.wrapping_add(p as u64))?;
        stats.push(g);
    }
    Ok(PriceEstimate {
        mean: stats.mean(),
        std_error: stats.std_error(),
        n_paths,
        seed,
    })
}

/// One row of the policy-surface export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub vwap: f64,
    pub inventory: f64,
    /// Probability the policy assigns to the traded action.
    pub prob: f64,
}

/// Evaluates the probability of action index `action_index` on a
/// `resolution x resolution` product grid over `(V, Q)` at fixed time and
/// spot. Rows are sorted by `(V, Q)`.
pub fn policy_surface(
    policy: &SoftmaxPolicy,
    env: &SrpEnv,
    t_frac: f64,
    s_fixed: f64,
    v_range: (f64, f64),
    q_range: (f64, f64),
    resolution: usize,
    action_index: usize,
) -> Result<Vec<SurfaceRow>> {
    if resolution < 2 {
        return Err(CoreError::Invalid {
            what: "surface resolution must be >= 2 per axis",
        });
    }
    if action_index >= policy.n_actions() {
        return Err(CoreError::Invalid {
            what: "surface action index out of range",
        });
    }
    let mut rows = Vec::with_capacity(resolution * resolution);
    let mut feats = Vec::new();
    for iv in 0..resolution {
        let v = v_range.0 + (v_range.1 - v_range.0) * iv as f64 / (resolution - 1) as f64;
        for iq in 0..resolution {
            let q = q_range.0 + (q_range.1 - q_range.0) * iq as f64 / (resolution - 1) as f64;
            env.policy_features(t_frac, s_fixed, v, q, 0.0, &mut feats);
            let p = policy.probs(&feats)?;
            rows.push(SurfaceRow {
                vwap: v,
                inventory: q,
                prob: p[action_index],
            });
        }
    }
    Ok(rows)
}

/// One recorded state along a sampled path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub path: usize,
    pub step: usize,
    pub t: f64,
    pub price: f64,
    pub vwap: f64,
    pub inventory: f64,
}

/// Simulates `n` paths under `rule` and records the visited `(S, V, Q)`
/// states up to and including the stopping state.
pub fn sample_paths<E: Environment + ?Sized, R: ControlRule + ?Sized>(
    env: &E,
    grid: &TimeGrid,
    rule: &R,
    n: usize,
    seed: u64,
) -> Result<Vec<PathPoint>> {
    if n == 0 {
        return Err(CoreError::Invalid {
            what: "sample_paths needs n >= 1",
        });
    }
    let mut out = Vec::new();
    let mut feats = Vec::new();
    for p in 0..n {
        let mut rng = RngStream::new(seed.wrapping_add(p as u64));
        let mut x = env.reset(&mut rng);
        out.push(path_point(p, 0, grid, &x));
        for i in 0..grid.n_steps() {
            let t_frac = grid.t_frac(i);
            env.features(t_frac, &x, &mut feats);
            let a = rule.rate(i, t_frac, &feats, &x, &mut rng)?;
            let next = env.step(i, &x, a, &mut rng);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(CoreError::EpisodeAborted { step: i });
            }
            x = next;
            out.push(path_point(p, i + 1, grid, &x));
            if !env.in_domain(&x) {
                break;
            }
        }
    }
    Ok(out)
}

fn path_point(p: usize, i: usize, grid: &TimeGrid, x: &[f64]) -> PathPoint {
    PathPoint {
        path: p,
        step: i,
        t: grid.t(i),
        price: x[0],
        vwap: x[1],
        inventory: x[2],
    }
}
