//! Small reference environments.
//!
//! These are deliberately tiny — a three-state chain, a one-shot bandit, and
//! a deterministic counter — so that exact quantities (path enumerations,
//! optimal policies, value functions) are available in closed form. The test
//! suites use them as oracles for the gradient estimators and training loops.

use alloc::vec;
use alloc::vec::Vec;

use crate::mdp::Environment;
use crate::rng::RngStream;

/// Three-state chain on `{0, 1, 2}` with actions `{stay, up} = {0, 1}` and
/// domain `{0, 1}`: reaching state 2 exits. Transitions are deterministic
/// (`state + action`), so the law of an episode is fully determined by the
/// action path.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    /// Initial state (must be 0 or 1).
    pub start: f64,
    /// Terminal reward per state index.
    pub reward: [f64; 3],
}

impl ChainEnv {
    /// Start at 1 so the very first `up` exits: with two steps this yields
    /// three distinct `(tau, G)` outcomes.
    pub fn exit_rich() -> Self {
        ChainEnv {
            start: 1.0,
            reward: [0.0, 0.3, 1.0],
        }
    }
}

impl Environment for ChainEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
        vec![self.start]
    }

    fn step(&self, _i: usize, state: &[f64], action: f64, _rng: &mut RngStream) -> Vec<f64> {
        vec![(state[0] + action).min(2.0)]
    }

    fn in_domain(&self, state: &[f64]) -> bool {
        state[0] < 1.5
    }

    fn terminal_reward(&self, state: &[f64]) -> f64 {
        let idx = libm::round(state[0]) as usize;
        self.reward[idx.min(2)]
    }
}

/// One-step bandit: the post-step state records the action taken, the domain
/// is never left, and the terminal reward is the recorded action. With
/// actions `{0, 1}` the optimal policy is the Dirac mass on action 1. Run it
/// with a one-step time grid.
#[derive(Debug, Clone)]
pub struct BanditEnv;

impl Environment for BanditEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
        vec![0.0]
    }

    fn step(&self, _i: usize, _state: &[f64], action: f64, _rng: &mut RngStream) -> Vec<f64> {
        vec![action]
    }

    fn in_domain(&self, _state: &[f64]) -> bool {
        true
    }

    fn terminal_reward(&self, state: &[f64]) -> f64 {
        state[0]
    }
}

/// Deterministic clock: the state is the elapsed fraction `i / n_steps`,
/// actions are ignored, the domain is never left, and the terminal reward is
/// a constant. The exact value function is that constant everywhere, which
/// makes it a fixed-point oracle for critics.
#[derive(Debug, Clone)]
pub struct CounterEnv {
    pub n_steps: usize,
    pub terminal: f64,
}

impl Environment for CounterEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
        vec![0.0]
    }

    fn step(&self, i: usize, _state: &[f64], _action: f64, _rng: &mut RngStream) -> Vec<f64> {
        vec![(i + 1) as f64 / self.n_steps as f64]
    }

    fn in_domain(&self, _state: &[f64]) -> bool {
        true
    }

    fn terminal_reward(&self, _state: &[f64]) -> f64 {
        self.terminal
    }
}
