//! Cart-pole dynamics (the benchmark's Euler integration) and the shaped
//! reward used for model-based return estimation.
//!
//! `step` evaluates, in this order:
//! ```text
//! force     = ±force_magnitude
//! temp      = (force + pole_mass_length · θ̇ · θ̇ · sin θ) / total_mass
//! θ_acc     = (g · sin θ − cos θ · temp)
//!             / (half_length · (4/3 − pole_mass · cos θ · cos θ / total_mass))
//! x_acc     = temp − pole_mass_length · θ_acc · cos θ / total_mass
//! x'  = x + τ·ẋ,   ẋ' = ẋ + τ·x_acc
//! θ'  = θ + τ·θ̇,   θ̇' = θ̇ + τ·θ_acc
//! ```

use std::ops::Neg;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cart position bound (m).
pub const X_THRESHOLD: f64 = 2.4;
/// Pole angle bound (rad).
pub const THETA_THRESHOLD: f64 = 0.2095;
/// Reset draws every component from `[-RESET_BOUND, RESET_BOUND]`.
pub const RESET_BOUND: f64 = 0.05;
pub const MAX_EPISODE_STEPS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    /// Cart position (m).
    pub x: f64,
    /// Cart velocity (m/s).
    pub x_dot: f64,
    /// Pole angle (rad).
    pub theta: f64,
    /// Pole angular velocity (rad/s).
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self { x, x_dot, theta, theta_dot }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn is_out_of_bounds(&self) -> bool {
        self.x.abs() > X_THRESHOLD || self.theta.abs() > THETA_THRESHOLD
    }
}

impl Neg for CartPoleState {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(-self.x, -self.x_dot, -self.theta, -self.theta_dot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Push left (action 0).
    Left,
    /// Push right (action 1).
    Right,
}

impl Action {
    pub fn index(self) -> u8 {
        match self {
            Action::Left => 0,
            Action::Right => 1,
        }
    }

    pub fn from_index(index: u8) -> Result<Self> {
        match index {
            0 => Ok(Action::Left),
            1 => Ok(Action::Right),
            other => Err(Error::Domain(format!("action must be 0 or 1, got {other}"))),
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }

    /// Fixed encoding `{0, 1} → {-1, +1}`.
    pub fn as_input(self) -> f64 {
        match self {
            Action::Left => -1.0,
            Action::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub force_magnitude: f64,
    pub time_step: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_magnitude: 10.0,
            time_step: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: CartPoleState,
    pub terminated: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CartPole {
    physics: PhysicsParams,
}

impl CartPole {
    pub fn new(physics: PhysicsParams) -> Result<Self> {
        let p = physics;
        let all = [p.gravity, p.cart_mass, p.pole_mass, p.pole_half_length, p.force_magnitude, p.time_step];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("physics parameters must be positive: {p:?}")));
        }
        Ok(Self { physics })
    }

    pub fn physics(&self) -> &PhysicsParams {
        &self.physics
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> CartPoleState {
        let dist = Uniform::new_inclusive(-RESET_BOUND, RESET_BOUND);
        CartPoleState::new(dist.sample(rng), dist.sample(rng), dist.sample(rng), dist.sample(rng))
    }

    pub fn step(&self, state: &CartPoleState, action: Action) -> Result<StepOutcome> {
        if !state.is_finite() {
            return Err(Error::Domain(format!("non-finite cart-pole state {state:?}")));
        }
        let p = &self.physics;
        let total_mass = p.pole_mass + p.cart_mass;
        let pole_mass_length = p.pole_mass * p.pole_half_length;
        let force = match action {
            Action::Right => p.force_magnitude,
            Action::Left => -p.force_magnitude,
        };
        let CartPoleState { x, x_dot, theta, theta_dot } = *state;
        let cos_theta = theta.cos();
        let sin_theta = theta.sin();

        let temp = (force + pole_mass_length * theta_dot * theta_dot * sin_theta) / total_mass;
        let theta_acc = (p.gravity * sin_theta - cos_theta * temp)
            / (p.pole_half_length
                * (4.0 / 3.0 - p.pole_mass * cos_theta * cos_theta / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos_theta / total_mass;

        let next = CartPoleState::new(
            x + p.time_step * x_dot,
            x_dot + p.time_step * x_acc,
            theta + p.time_step * theta_dot,
            theta_dot + p.time_step * theta_acc,
        );
        Ok(StepOutcome { next, terminated: next.is_out_of_bounds() })
    }
}

/// Shaped reward: 0 outside the bounds (checked first), 1 in the central
/// region `|x| < 0.5 ∧ |θ| < 0.05`, 0.5 otherwise.
pub fn reward(state: &CartPoleState) -> f64 {
    if state.is_out_of_bounds() {
        0.0
    } else if state.x.abs() < 0.5 && state.theta.abs() < 0.05 {
        1.0
    } else {
        0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_from_rest_pushing_right() {
        let env = CartPole::default();
        let out = env.step(&CartPoleState::default(), Action::Right).unwrap();
        let s = out.next;
        assert_eq!(s.x, 0.0);
        assert!((s.x_dot - 0.195_121_951).abs() < 1e-6);
        assert_eq!(s.theta, 0.0);
        assert!((s.theta_dot + 0.292_682_927).abs() < 1e-6);
        assert!(!out.terminated);
    }

    #[test]
    fn termination_bounds() {
        let env = CartPole::default();
        let s = CartPoleState::new(0.0, 0.0, 0.25, 0.0);
        assert!(env.step(&s, Action::Left).unwrap().terminated);
        let s = CartPoleState::new(2.5, 0.0, 0.0, 0.0);
        assert!(env.step(&s, Action::Left).unwrap().terminated);
        assert!(!CartPoleState::new(0.0, 0.0, THETA_THRESHOLD, 0.0).is_out_of_bounds());
        assert!(env.step(&CartPoleState::new(f64::NAN, 0.0, 0.0, 0.0), Action::Left).is_err());
    }

    #[test]
    fn mirror_symmetry() {
        let env = CartPole::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let s = CartPoleState::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-2.0..2.0),
            );
            let a = if rng.gen::<bool>() { Action::Left } else { Action::Right };
            let lhs = env.step(&-s, a.mirrored()).unwrap().next;
            let rhs = -env.step(&s, a).unwrap().next;
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn reset_is_seeded_and_bounded() {
        let env = CartPole::default();
        let a = env.reset(&mut ChaCha8Rng::seed_from_u64(4));
        let b = env.reset(&mut ChaCha8Rng::seed_from_u64(4));
        let c = env.reset(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            let s = env.reset(&mut rng);
            assert!(s.to_array().iter().all(|v| v.abs() <= RESET_BOUND));
        }
    }

    #[test]
    fn reward_branches() {
        assert_eq!(reward(&CartPoleState::new(0.0, 0.0, 0.0, 0.0)), 1.0);
        assert_eq!(reward(&CartPoleState::new(3.0, 0.0, 0.0, 0.0)), 0.0);
        assert_eq!(reward(&CartPoleState::new(1.0, 0.0, 0.1, 0.0)), 0.5);
        // zero branch dominates
        assert_eq!(reward(&CartPoleState::new(2.41, 0.0, 0.01, 0.0)), 0.0);
        // exactly at a threshold is not exceeding it
        assert_eq!(reward(&CartPoleState::new(0.0, 0.0, 0.2095, 0.0)), 0.5);
        assert_eq!(reward(&CartPoleState::new(0.5, 0.0, 0.0, 0.0)), 0.5);
        let s = CartPoleState::new(0.3, 1.0, -0.04, 2.0);
        assert_eq!(reward(&s), reward(&-s));
    }

    #[test]
    fn action_indices() {
        assert_eq!(Action::from_index(1).unwrap(), Action::Right);
        assert!(Action::from_index(2).is_err());
        assert_eq!(Action::Left.as_input(), -1.0);
    }

    #[test]
    fn invalid_physics_rejected() {
        let p = PhysicsParams { time_step: 0.0, ..PhysicsParams::default() };
        assert!(CartPole::new(p).is_err());
    }
}
