//! Share-repurchase (barrier VWAP-minus) pricing environment.
//!
//! The bank must buy `B` shares before the horizon `T`. State is
//! `(S, V, Q, C)`: price, running VWAP, inventory, cumulated cash cost. The
//! trading rate acts on the inventory; the contract terminates at the first
//! grid time with `Q >= B` (or at `T`), and the terminal reward is the PnL
//!
//! `B (V - S) - lambda (B - Q)_+ - beta B C`.
//!
//! Dynamics per Euler step of size `dt = T / N`, with `z` standard normal:
//!
//! - `S' = S (1 + gamma a dt + sigma sqrt(dt) z)` (linear permanent impact),
//! - `V' = V + (S - V) dt / t_{i+1}` with `V_0 = S0`, which removes the
//!   `t = 0` singularity of the continuous VWAP dynamics and keeps `V = S0`
//!   while the price has not moved,
//! - `Q' = Q + a dt`,
//! - `C' = C + a S dt`.
//!
//! Time is measured in years with trading-day conventions (`dt = 1/252`,
//! `T = 60/252` by default); the trading rate is in shares per year.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{CoreError, Result};
use crate::mdp::Environment;
use crate::rng::RngStream;

/// Trading days per year used by the default parameters.
pub const TRADING_DAYS: f64 = 252.0;

/// Market and contract parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrpConfig {
    /// Initial price.
    pub s0: f64,
    /// Target number of shares.
    pub b: f64,
    /// Horizon in years.
    pub horizon: f64,
    /// Number of grid steps.
    pub n_steps: usize,
    /// Volatility per sqrt(year).
    pub sigma: f64,
    /// Permanent-impact coefficient, >= 0.
    pub gamma: f64,
    /// Transaction-cost coefficient, >= 0.
    pub beta: f64,
    /// Penalty per undelivered share at the horizon, > 0.
    pub lambda: f64,
    /// Maximal trading rate in shares per year; the action set is {0, a_max}.
    pub a_max: f64,
}

impl Default for SrpConfig {
    /// Base experiment: 60 trading days, unit price and target, lambda = 5,
    /// sigma = 0.2, daily steps, no impact or costs.
    fn default() -> Self {
        SrpConfig {
            s0: 1.0,
            b: 1.0,
            horizon: 60.0 / TRADING_DAYS,
            n_steps: 60,
            sigma: 0.2,
            gamma: 0.0,
            beta: 0.0,
            lambda: 5.0,
            a_max: 25.2,
        }
    }
}

impl SrpConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Whether full-speed trading can reach the target within the horizon.
    pub fn target_reachable(&self) -> bool {
        self.a_max * self.horizon >= self.b
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.s0,
            self.b,
            self.horizon,
            self.sigma,
            self.gamma,
            self.beta,
            self.lambda,
            self.a_max,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(CoreError::NonFinite {
                what: "share-repurchase parameters",
            });
        }
        if !(self.s0 > 0.0 && self.b > 0.0 && self.horizon > 0.0) {
            return Err(CoreError::Invalid {
                what: "s0, b, horizon must be positive",
            });
        }
        if self.n_steps == 0 {
            return Err(CoreError::Invalid {
                what: "n_steps must be >= 1",
            });
        }
        if self.sigma < 0.0 || self.gamma < 0.0 || self.beta < 0.0 {
            return Err(CoreError::Invalid {
                what: "sigma, gamma, beta must be >= 0",
            });
        }
        if !(self.lambda > 0.0) {
            return Err(CoreError::Invalid {
                what: "lambda must be > 0",
            });
        }
        if !(self.a_max > 0.0) {
            return Err(CoreError::Invalid {
                what: "a_max must be > 0",
            });
        }
        Ok(())
    }
}

/// State of the repurchase program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrpState {
    pub price: f64,
    pub vwap: f64,
    pub inventory: f64,
    pub cash: f64,
}

impl SrpState {
    pub fn from_slice(x: &[f64]) -> Self {
        SrpState {
            price: x[0],
            vwap: x[1],
            inventory: x[2],
            cash: x[3],
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.price, self.vwap, self.inventory, self.cash]
    }
}

/// Flooring applied when an Euler step would drive the price non-positive.
pub const PRICE_FLOOR: f64 = 1e-8;

/// The environment. Stateless between episodes; the price-floor clamp
/// counter is the only shared mutable piece and is a relaxed atomic so
/// parallel rollouts stay safe.
#[derive(Debug)]
pub struct SrpEnv {
    cfg: SrpConfig,
    target_unreachable: bool,
    clamp_count: AtomicU64,
}

impl SrpEnv {
    /// Validates the configuration, including reachability of the target at
    /// full speed.
    pub fn new(cfg: SrpConfig) -> Result<Self> {
        cfg.validate()?;
        if !cfg.target_reachable() {
            return Err(CoreError::Invalid {
                what: "a_max * horizon < b: target unreachable at full speed (use new_unchecked to override)",
            });
        }
        Ok(SrpEnv {
            cfg,
            target_unreachable: false,
            clamp_count: AtomicU64::new(0),
        })
    }

    /// Escape hatch for deliberately unreachable targets; callers should
    /// surface [`SrpEnv::target_unreachable`] as a warning.
    pub fn new_unchecked(cfg: SrpConfig) -> Result<Self> {
        cfg.validate()?;
        let unreachable = !cfg.target_reachable();
        Ok(SrpEnv {
            cfg,
            target_unreachable: unreachable,
            clamp_count: AtomicU64::new(0),
        })
    }

    pub fn cfg(&self) -> &SrpConfig {
        &self.cfg
    }

    pub fn target_unreachable(&self) -> bool {
        self.target_unreachable
    }

    /// Number of price-floor clamps since construction.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_count.load(Ordering::Relaxed)
    }

    /// Feature vector fed to policy and critic networks:
    /// `(t/T, S, V, Q/B)`, plus `C` when transaction costs are active.
    pub fn policy_features(&self, t_frac: f64, s: f64, v: f64, q: f64, c: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(t_frac);
        out.push(s);
        out.push(v);
        out.push(q / self.cfg.b);
        if self.cfg.beta > 0.0 {
            out.push(c);
        }
    }

    /// PnL at the stopping state.
    pub fn pnl(&self, x: &SrpState) -> f64 {
        let c = &self.cfg;
        c.b * (x.vwap - x.price) - c.lambda * (c.b - x.inventory).max(0.0) - c.beta * c.b * x.cash
    }
}

impl Environment for SrpEnv {
    fn state_dim(&self) -> usize {
        4
    }

    fn feature_dim(&self) -> usize {
        if self.cfg.beta > 0.0 {
            5
        } else {
            4
        }
    }

    fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
        vec![self.cfg.s0, self.cfg.s0, 0.0, 0.0]
    }

    fn step(&self, i: usize, state: &[f64], action: f64, rng: &mut RngStream) -> Vec<f64> {
        let c = &self.cfg;
        let dt = c.dt();
        let (s, v, q, cash) = (state[0], state[1], state[2], state[3]);
        let z = rng.standard_normal();
        let mut s_next = s * (1.0 + c.gamma * action * dt + c.sigma * libm::sqrt(dt) * z);
        if s_next <= 0.0 {
            s_next = PRICE_FLOOR;
            self.clamp_count.fetch_add(1, Ordering::Relaxed);
        }
        // VWAP recursion with the t_{i+1} denominator: (i+1) dt.
        let v_next = v + (s - v) / (i + 1) as f64;
        let q_next = q + action * dt;
        let cash_next = cash + action * s * dt;
        vec![s_next, v_next, q_next, cash_next]
    }

    fn in_domain(&self, state: &[f64]) -> bool {
        state[2] < self.cfg.b
    }

    fn terminal_reward(&self, state: &[f64]) -> f64 {
        self.pnl(&SrpState::from_slice(state))
    }

    fn features(&self, t_frac: f64, state: &[f64], out: &mut Vec<f64>) {
        self.policy_features(t_frac, state[0], state[1], state[2], state[3], out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{rollout, TimeGrid};
    use crate::nn::MlpParams;
    use crate::policy::SoftmaxPolicy;

    fn cfg_no_noise(a_max: f64) -> SrpConfig {
        SrpConfig {
            sigma: 0.0,
            a_max,
            ..SrpConfig::default()
        }
    }

    #[test]
    fn equilibrium_state_is_fixed() {
        // a = 0, sigma = 0, V = S: nothing moves.
        let env = SrpEnv::new(cfg_no_noise(25.2)).unwrap();
        let mut rng = RngStream::new(1);
        let x = vec![1.0, 1.0, 0.0, 0.0];
        let y = env.step(3, &x, 0.0, &mut rng);
        assert_eq!(y, x);
    }

    #[test]
    fn deterministic_accounting_step() {
        // gamma = 0, sigma = 0, a = a_max, S = 1.
        let a = 5.04;
        let env = SrpEnv::new(cfg_no_noise(a)).unwrap();
        let dt = env.cfg().dt();
        let mut rng = RngStream::new(2);
        let y = env.step(0, &[1.0, 1.0, 0.0, 0.0], a, &mut rng);
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert!((y[2] - a * dt).abs() < 1e-15);
        assert!((y[3] - a * dt).abs() < 1e-15);
    }

    #[test]
    fn impact_drift_hand_value() {
        // gamma = 0.1, sigma = 0, a = 5.04, dt = 1/252, S = 1:
        // S' = 1 + 0.1 * 5.04 / 252 = 1.002.
        let cfg = SrpConfig {
            sigma: 0.0,
            gamma: 0.1,
            a_max: 5.04,
            ..SrpConfig::default()
        };
        let env = SrpEnv::new(cfg).unwrap();
        let mut rng = RngStream::new(3);
        let y = env.step(0, &[1.0, 1.0, 0.0, 0.0], 5.04, &mut rng);
        assert!((y[0] - 1.002).abs() < 1e-12);
    }

    #[test]
    fn pnl_cases() {
        let env = SrpEnv::new(SrpConfig::default()).unwrap();
        // Q = B, V = S, beta = 0 -> 0.
        assert_eq!(env.terminal_reward(&[1.0, 1.0, 1.0, 0.5]), 0.0);
        // Q = 0 at T, V = S -> -lambda B = -5.
        assert_eq!(env.terminal_reward(&[1.0, 1.0, 0.0, 0.0]), -5.0);
        // Q = B, V = 1.01, S = 1.00 -> 0.01 (100 bp).
        assert!((env.terminal_reward(&[1.0, 1.01, 1.0, 0.0]) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn domain_boundary_is_exit() {
        let env = SrpEnv::new(SrpConfig::default()).unwrap();
        assert!(env.in_domain(&[1.0, 1.0, 0.0, 0.0]));
        assert!(!env.in_domain(&[1.0, 1.0, 1.0, 0.0]));
        assert!(env.in_domain(&[1.0, 1.0, 1.0 - 1e-12, 0.0]));
    }

    #[test]
    fn unreachable_target_rejected_with_escape_hatch() {
        let cfg = SrpConfig {
            a_max: 1.0, // a_max * T = 0.238 < 1
            ..SrpConfig::default()
        };
        assert!(SrpEnv::new(cfg).is_err());
        let env = SrpEnv::new_unchecked(cfg).unwrap();
        assert!(env.target_unreachable());
    }

    #[test]
    fn zero_vol_zero_impact_vwap_stays_at_s0() {
        let env = SrpEnv::new(cfg_no_noise(25.2)).unwrap();
        let grid = TimeGrid::new(60, env.cfg().horizon).unwrap();
        let net = MlpParams::zeros(&[4, 2, 1]).unwrap();
        let policy = SoftmaxPolicy::new(vec![net.clone(), net], vec![0.0, 25.2]).unwrap();
        let mut rng = RngStream::new(4);
        let tr = rollout(&env, &grid, &policy, &mut rng).unwrap();
        for s in &tr.states {
            assert!((s[0] - 1.0).abs() < 1e-12);
            assert!((s[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inventory_overshoot_bounded() {
        let cfg = SrpConfig::default();
        let env = SrpEnv::new(cfg).unwrap();
        let grid = TimeGrid::new(cfg.n_steps, cfg.horizon).unwrap();
        let net = MlpParams::zeros(&[4, 2, 1]).unwrap();
        let policy = SoftmaxPolicy::new(vec![net.clone(), net], vec![0.0, cfg.a_max]).unwrap();
        let mut rng = RngStream::new(5);
        let bound = cfg.b + cfg.a_max * cfg.dt() + 1e-12;
        for _ in 0..200 {
            let tr = rollout(&env, &grid, &policy, &mut rng).unwrap();
            let q_exit = tr.states[tr.exit_index][2];
            assert!(q_exit <= bound, "q at exit {q_exit}");
        }
    }

    #[test]
    fn features_drop_cash_without_costs() {
        let env = SrpEnv::new(SrpConfig::default()).unwrap();
        let mut out = Vec::new();
        env.features(0.5, &[1.1, 0.9, 0.25, 0.33], &mut out);
        assert_eq!(out, vec![0.5, 1.1, 0.9, 0.25]);

        let env = SrpEnv::new(SrpConfig {
            beta: 1e-4,
            ..SrpConfig::default()
        })
        .unwrap();
        let mut out = Vec::new();
        env.features(0.5, &[1.1, 0.9, 0.25, 0.33], &mut out);
        assert_eq!(out.len(), 5);
        assert_eq!(out[4], 0.33);
    }

    #[test]
    fn price_floor_clamp_counted() {
        // Force a clamp with an absurd volatility.
        let cfg = SrpConfig {
            sigma: 1e4,
            ..SrpConfig::default()
        };
        let env = SrpEnv::new(cfg).unwrap();
        let mut rng = RngStream::new(6);
        let mut clamped = false;
        for _ in 0..100 {
            let y = env.step(0, &[1.0, 1.0, 0.0, 0.0], 0.0, &mut rng);
            if y[0] == PRICE_FLOOR {
                clamped = true;
            }
        }
        assert!(clamped);
        assert!(env.clamp_count() > 0);
    }
}
