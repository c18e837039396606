//! Exit-time Markov decision processes and episode rollouts.
//!
//! An [`Environment`] exposes an initial state inside an open domain, a
//! (possibly random) transition `step`, the domain membership test, and a
//! terminal reward. Episodes run on a uniform [`TimeGrid`]: the policy acts
//! at `t_0..t_{N-1}`, the post-step state is tested for exit, and the episode
//! stops at the first exit or at the horizon. The terminal reward is
//! evaluated at the stopping state.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::policy::SoftmaxPolicy;
use crate::rng::RngStream;

/// Uniform subdivision `t_0 = 0 < ... < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps == 0 || !(horizon > 0.0) {
            return Err(CoreError::Invalid {
                what: "time grid needs n_steps >= 1 and horizon > 0",
            });
        }
        Ok(TimeGrid { n_steps, horizon })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Knot `t_i = i * dt`.
    pub fn t(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n_steps as f64
    }

    /// Fraction `t_i / T` in `[0, 1]`, the time feature fed to networks.
    pub fn t_frac(&self, i: usize) -> f64 {
        i as f64 / self.n_steps as f64
    }
}

/// Controlled Markov process with an exit domain and a terminal reward.
///
/// Implementations must be stateless between episodes: all episode state
/// lives in the caller. `step` must be deterministic given `(i, state,
/// action)` and the stream position, so rollouts are reproducible and can
/// run in parallel with one stream per worker.
pub trait Environment {
    /// Dimension of the raw state vector.
    fn state_dim(&self) -> usize;

    /// Dimension of the policy/critic feature vector (time included).
    fn feature_dim(&self) -> usize {
        self.state_dim() + 1
    }

    /// Initial state; must lie in the domain.
    fn reset(&self, rng: &mut RngStream) -> Vec<f64>;

    /// Next state given step index, state, and action value.
    fn step(&self, i: usize, state: &[f64], action: f64, rng: &mut RngStream) -> Vec<f64>;

    /// Whether `state` lies in the open domain.
    fn in_domain(&self, state: &[f64]) -> bool;

    /// Terminal reward at the stopping state.
    fn terminal_reward(&self, state: &[f64]) -> f64;

    /// Feature map fed to policy and critic networks. Defaults to the time
    /// fraction followed by the raw state.
    fn features(&self, t_frac: f64, state: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(t_frac);
        out.extend_from_slice(state);
    }
}

/// One sampled episode.
///
/// `states` and `features` have length `exit_index + 1` (initial state up to
/// and including the stopping state); `action_indices` and `actions` have
/// length `exit_index`. Scores are recomputed from the cached features, which
/// is only valid while the policy parameters are unchanged — gradient
/// estimators here are strictly on-policy.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
    pub action_indices: Vec<usize>,
    pub actions: Vec<f64>,
    /// Index `K` such that the episode stopped at `t_K`.
    pub exit_index: usize,
    /// Exit time `tau = t_K`.
    pub exit_time: f64,
    /// Terminal reward `G` at the stopping state.
    pub terminal_reward: f64,
}

impl Trajectory {
    pub fn n_transitions(&self) -> usize {
        self.exit_index
    }
}

/// Runs one episode under a softmax policy.
///
/// Actions are sampled at `t_0..`, the post-step state is tested, and the
/// loop stops at the first `i + 1` with the state out of the domain or
/// `i + 1 = N`. A non-finite state from the environment aborts the episode.
pub fn rollout<E: Environment + ?Sized>(
    env: &E,
    grid: &TimeGrid,
    policy: &SoftmaxPolicy,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    if policy.input_dim() != env.feature_dim() {
        return Err(CoreError::DimMismatch {
            what: "policy input vs environment features",
            expected: env.feature_dim(),
            got: policy.input_dim(),
        });
    }
    let n = grid.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut features = Vec::with_capacity(n + 1);
    let mut action_indices = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);

    let mut x = env.reset(rng);
    let mut feats = Vec::new();
    env.features(grid.t_frac(0), &x, &mut feats);
    states.push(x.clone());
    features.push(feats.clone());

    for i in 0..n {
        let (idx, a) = policy.sample(&features[i], rng)?;
        let next = env.step(i, &x, a, rng);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(CoreError::EpisodeAborted { step: i });
        }
        action_indices.push(idx);
        actions.push(a);
        env.features(grid.t_frac(i + 1), &next, &mut feats);
        states.push(next.clone());
        features.push(feats.clone());
        x = next;
        if !env.in_domain(&x) || i + 1 == n {
            let k = i + 1;
            return Ok(Trajectory {
                states,
                features,
                action_indices,
                actions,
                exit_index: k,
                exit_time: grid.t(k),
                terminal_reward: env.terminal_reward(&x),
            });
        }
    }
    unreachable!("loop always stops at i + 1 = n");
}

/// Environment wrapper realizing the running-reward reduction: an extra
/// state coordinate `y` accumulates `f(i, x, a) * dt` per step, the domain
/// test ignores `y`, and the terminal reward becomes `y + g(x)`.
///
/// `y` is excluded from the policy features: the augmented value function is
/// additive in `y`, so the optimal policy does not depend on it, and rollouts
/// under a given policy match the base environment path by path.
pub struct MayerAugmented<'a, E: ?Sized, F> {
    base: &'a E,
    running_reward: F,
    dt: f64,
}

/// Wraps `env` so the Bolza-style criterion with running reward `f` becomes
/// a pure terminal-reward problem on the same grid.
pub fn mayer_augment<'a, E, F>(env: &'a E, grid: &TimeGrid, f: F) -> MayerAugmented<'a, E, F>
where
    E: Environment + ?Sized,
    F: Fn(usize, &[f64], f64) -> f64,
{
    MayerAugmented {
        base: env,
        running_reward: f,
        dt: grid.dt(),
    }
}

impl<E, F> Environment for MayerAugmented<'_, E, F>
where
    E: Environment + ?Sized,
    F: Fn(usize, &[f64], f64) -> f64,
{
    fn state_dim(&self) -> usize {
        self.base.state_dim() + 1
    }

    fn feature_dim(&self) -> usize {
        self.base.feature_dim()
    }

    fn reset(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut x = self.base.reset(rng);
        x.push(0.0);
        x
    }

    fn step(&self, i: usize, state: &[f64], action: f64, rng: &mut RngStream) -> Vec<f64> {
        let d = self.base.state_dim();
        let mut next = self.base.step(i, &state[..d], action, rng);
        let y = state[d] + (self.running_reward)(i, &state[..d], action) * self.dt;
        next.push(y);
        next
    }

    fn in_domain(&self, state: &[f64]) -> bool {
        self.base.in_domain(&state[..self.base.state_dim()])
    }

    fn terminal_reward(&self, state: &[f64]) -> f64 {
        let d = self.base.state_dim();
        state[d] + self.base.terminal_reward(&state[..d])
    }

    fn features(&self, t_frac: f64, state: &[f64], out: &mut Vec<f64>) {
        self.base
            .features(t_frac, &state[..self.base.state_dim()], out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpParams;
    use crate::toy::ChainEnv;

    fn uniform_two_action_policy(input_dim: usize) -> SoftmaxPolicy {
        let net = MlpParams::zeros(&[input_dim, 2, 1]).unwrap();
        SoftmaxPolicy::new(vec![net.clone(), net], vec![0.0, 1.0]).unwrap()
    }

    struct NeverExit;
    impl Environment for NeverExit {
        fn state_dim(&self) -> usize {
            1
        }
        fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&self, _i: usize, state: &[f64], action: f64, _rng: &mut RngStream) -> Vec<f64> {
            vec![state[0] + action]
        }
        fn in_domain(&self, _state: &[f64]) -> bool {
            true
        }
        fn terminal_reward(&self, state: &[f64]) -> f64 {
            state[0]
        }
    }

    struct ImmediateExit;
    impl Environment for ImmediateExit {
        fn state_dim(&self) -> usize {
            1
        }
        fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&self, _i: usize, _state: &[f64], _action: f64, _rng: &mut RngStream) -> Vec<f64> {
            vec![100.0]
        }
        fn in_domain(&self, state: &[f64]) -> bool {
            state[0] < 50.0
        }
        fn terminal_reward(&self, state: &[f64]) -> f64 {
            state[0]
        }
    }

    #[test]
    fn no_exit_runs_to_horizon() {
        let grid = TimeGrid::new(5, 1.0).unwrap();
        let policy = uniform_two_action_policy(2);
        let mut rng = RngStream::new(1);
        let tr = rollout(&NeverExit, &grid, &policy, &mut rng).unwrap();
        assert_eq!(tr.exit_index, 5);
        assert_eq!(tr.exit_time, 1.0);
        assert_eq!(tr.actions.len(), 5);
        assert_eq!(tr.states.len(), 6);
    }

    #[test]
    fn immediate_exit_records_one_action() {
        let grid = TimeGrid::new(5, 1.0).unwrap();
        let policy = uniform_two_action_policy(2);
        let mut rng = RngStream::new(2);
        let tr = rollout(&ImmediateExit, &grid, &policy, &mut rng).unwrap();
        assert_eq!(tr.exit_index, 1);
        assert_eq!(tr.actions.len(), 1);
        assert_eq!(tr.terminal_reward, 100.0);
    }

    #[test]
    fn exit_consistency_along_paths() {
        let grid = TimeGrid::new(2, 1.0).unwrap();
        let env = ChainEnv::exit_rich();
        let policy = uniform_two_action_policy(2);
        let mut rng = RngStream::new(3);
        for _ in 0..500 {
            let tr = rollout(&env, &grid, &policy, &mut rng).unwrap();
            let k = tr.exit_index;
            assert!(k >= 1);
            for s in &tr.states[..k] {
                assert!(env.in_domain(s));
            }
            if k < grid.n_steps() {
                assert!(!env.in_domain(&tr.states[k]));
            }
        }
    }

    #[test]
    fn rollout_deterministic_under_equal_seeds() {
        let grid = TimeGrid::new(2, 1.0).unwrap();
        let env = ChainEnv::exit_rich();
        let policy = uniform_two_action_policy(2);
        let mut r1 = RngStream::new(9);
        let mut r2 = RngStream::new(9);
        for _ in 0..100 {
            let a = rollout(&env, &grid, &policy, &mut r1).unwrap();
            let b = rollout(&env, &grid, &policy, &mut r2).unwrap();
            assert_eq!(a.action_indices, b.action_indices);
            assert_eq!(a.states, b.states);
            assert_eq!(a.terminal_reward, b.terminal_reward);
        }
    }

    #[test]
    fn empirical_exit_law_matches_enumeration() {
        // ChainEnv from state 1 with a uniform policy has three outcomes:
        //   a0 = up            -> tau = t1, G = g(2), prob 1/2
        //   a0 = stay, a1 = up -> tau = t2, G = g(2), prob 1/4
        //   a0 = stay, a1 = stay -> tau = t2, G = g(1), prob 1/4
        let grid = TimeGrid::new(2, 1.0).unwrap();
        let env = ChainEnv::exit_rich();
        let policy = uniform_two_action_policy(2);
        let mut rng = RngStream::new(4);
        let n = 100_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let tr = rollout(&env, &grid, &policy, &mut rng).unwrap();
            if tr.exit_index == 1 {
                counts[0] += 1;
            } else if tr.terminal_reward == env.reward[2] {
                counts[1] += 1;
            } else {
                counts[2] += 1;
            }
        }
        let expected = [0.5, 0.25, 0.25];
        for (c, p) in counts.iter().zip(expected.iter()) {
            let freq = *c as f64 / n as f64;
            let se = libm::sqrt(p * (1.0 - p) / n as f64);
            assert!(
                libm::fabs(freq - p) < 3.0 * se,
                "freq {freq} vs {p} (se {se})"
            );
        }
    }

    #[test]
    fn aborts_on_non_finite_state() {
        struct NanEnv;
        impl Environment for NanEnv {
            fn state_dim(&self) -> usize {
                1
            }
            fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
                vec![0.0]
            }
            fn step(&self, _i: usize, _s: &[f64], _a: f64, _r: &mut RngStream) -> Vec<f64> {
                vec![f64::NAN]
            }
            fn in_domain(&self, _s: &[f64]) -> bool {
                true
            }
            fn terminal_reward(&self, _s: &[f64]) -> f64 {
                0.0
            }
        }
        let grid = TimeGrid::new(3, 1.0).unwrap();
        let policy = uniform_two_action_policy(2);
        let mut rng = RngStream::new(5);
        let err = rollout(&NanEnv, &grid, &policy, &mut rng);
        assert!(matches!(err, Err(CoreError::EpisodeAborted { step: 0 })));
    }

    #[test]
    fn mayer_zero_running_reward_is_neutral() {
        let grid = TimeGrid::new(5, 1.0).unwrap();
        let base = NeverExit;
        let wrapped = mayer_augment(&base, &grid, |_, _, _| 0.0);
        let policy = uniform_two_action_policy(2);
        let mut r1 = RngStream::new(6);
        let mut r2 = RngStream::new(6);
        for _ in 0..50 {
            let a = rollout(&base, &grid, &policy, &mut r1).unwrap();
            let b = rollout(&wrapped, &grid, &policy, &mut r2).unwrap();
            assert_eq!(a.terminal_reward, b.terminal_reward);
            assert_eq!(a.exit_index, b.exit_index);
        }
    }

    #[test]
    fn mayer_constant_running_reward_telescopes() {
        // No-exit env, f = c: the augmented terminal reward is g(x_T) + c T.
        let grid = TimeGrid::new(8, 2.0).unwrap();
        let base = NeverExit;
        let c = 0.7;
        let wrapped = mayer_augment(&base, &grid, move |_, _, _| c);
        let policy = uniform_two_action_policy(2);
        let mut r1 = RngStream::new(7);
        let mut r2 = RngStream::new(7);
        let a = rollout(&base, &grid, &policy, &mut r1).unwrap();
        let b = rollout(&wrapped, &grid, &policy, &mut r2).unwrap();
        assert!((b.terminal_reward - (a.terminal_reward + c * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn mayer_accumulator_monotone_for_nonnegative_f() {
        let grid = TimeGrid::new(6, 1.0).unwrap();
        let base = NeverExit;
        let wrapped = mayer_augment(&base, &grid, |i, _, a| i as f64 * 0.1 + a);
        let policy = uniform_two_action_policy(2);
        let mut rng = RngStream::new(8);
        let tr = rollout(&wrapped, &grid, &policy, &mut rng).unwrap();
        let d = base.state_dim();
        assert_eq!(tr.states[0][d], 0.0);
        for w in tr.states.windows(2) {
            assert!(w[1][d] >= w[0][d]);
        }
    }
}
