//! Adam for the gradient-trained models and particle swarm optimization for
//! the gradient-free policy search.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Self { config, step: 0, m: vec![0.0; dim], v: vec![0.0; dim] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(config_err(format!(
                "Adam state has {} entries, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient component {i} ({}) at Adam step {}",
                grad[i],
                self.step + 1
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    /// Total fitness evaluations.
    pub budget: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Initial positions are uniform in `[init_low, init_high]^dim`.
    pub init_low: f64,
    pub init_high: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        // constriction-style coefficients: ω = 1/(2 ln 2), c = 1/2 + ln 2
        let ln2 = std::f64::consts::LN_2;
        Self {
            particles: 100,
            budget: 20_000,
            inertia: 0.5 / ln2,
            cognitive: 0.5 + ln2,
            social: 0.5 + ln2,
            init_low: -PI,
            init_high: PI,
            seed: 0,
        }
    }
}

/// One incumbent improvement: the evaluation that produced it (1-based),
/// its fitness and position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub evaluation: usize,
    pub fitness: f64,
    pub position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations: usize,
    pub history: Vec<Improvement>,
}

/// Maximizes `fitness` with a synchronous particle swarm.
///
/// Each iteration evaluates the swarm in parallel, then updates personal and
/// global bests in particle order, so the result does not depend on the
/// number of worker threads. Velocities start at zero; positions are not
/// clipped. Non-finite fitness values count as `-∞`. When the budget is not
/// a multiple of the swarm size only the leading particles of the final
/// iteration are evaluated.
pub fn pso_maximize<F>(fitness: F, dim: usize, config: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if config.particles == 0 || dim == 0 {
        return Err(config_err("PSO needs at least one particle and one dimension"));
    }
    if config.budget < config.particles {
        return Err(config_err(format!(
            "budget {} is smaller than the swarm ({} particles)",
            config.budget, config.particles
        )));
    }
    if !(config.init_low < config.init_high) {
        return Err(config_err("PSO init box is empty"));
    }
    let mut rng = seed::stream_rng(config.seed, seed::STREAM_PSO);
    let n = config.particles;
    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(config.init_low..config.init_high)).collect())
        .collect();
    let mut velocities = vec![vec![0.0; dim]; n];
    let mut personal: Vec<(Vec<f64>, f64)> = positions.iter().map(|p| (p.clone(), f64::NEG_INFINITY)).collect();
    let mut best_position = positions[0].clone();
    let mut best_fitness = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut evaluations = 0;

    while evaluations < config.budget {
        let batch = n.min(config.budget - evaluations);
        let scores: Vec<f64> = positions[..batch]
            .par_iter()
            .map(|p| {
                let f = fitness(p);
                if f.is_finite() {
                    f
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        for (i, &f) in scores.iter().enumerate() {
            evaluations += 1;
            if f > personal[i].1 {
                personal[i] = (positions[i].clone(), f);
            }
            if f > best_fitness {
                best_fitness = f;
                best_position = positions[i].clone();
                history.push(Improvement { evaluation: evaluations, fitness: f, position: best_position.clone() });
            }
        }
        if evaluations >= config.budget {
            break;
        }
        for i in 0..n {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let x = positions[i][d];
                let v = config.inertia * velocities[i][d]
                    + config.cognitive * r1 * (personal[i].0[d] - x)
                    + config.social * r2 * (best_position[d] - x);
                velocities[i][d] = v;
                positions[i][d] = x + v;
            }
        }
    }

    Ok(PsoResult { best_position, best_fitness, evaluations, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_constant_gradient_moves_at_lr() {
        // m̂ = g and v̂ = g² exactly for a constant gradient, so each step is
        // lr·g/(|g| + ε).
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg, 2);
        let mut p = vec![0.0, 0.0];
        let g = [3.0, -0.5];
        for _ in 0..200 {
            let before = p.clone();
            adam.step(&mut p, &g).unwrap();
            assert!((before[0] - p[0] - cfg.lr * 3.0 / (3.0 + cfg.eps)).abs() < 1e-12);
            assert!((p[1] - before[1] - cfg.lr * 0.5 / (0.5 + cfg.eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, 1.0];
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            adam.step(&mut p, &g).unwrap();
        }
        let f: f64 = p.iter().map(|x| x * x).sum();
        assert!(f < 1e-3, "f = {f}");
    }

    #[test]
    fn adam_rejects_bad_input() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut p = vec![0.0; 2];
        assert!(matches!(adam.step(&mut p, &[f64::NAN, 0.0]), Err(Error::Training(_))));
        assert!(adam.step(&mut p, &[0.0]).is_err());
    }

    #[test]
    fn pso_finds_shifted_optimum() {
        let cfg = PsoConfig { particles: 20, budget: 5_000, seed: 1, ..PsoConfig::default() };
        let res = pso_maximize(|w| -w.iter().map(|x| (x - 3.0) * (x - 3.0)).sum::<f64>(), 4, &cfg).unwrap();
        assert_eq!(res.evaluations, 5_000);
        for x in &res.best_position {
            assert!((x - 3.0).abs() < 1e-2, "{:?}", res.best_position);
        }
    }

    #[test]
    fn pso_single_round() {
        let cfg = PsoConfig { particles: 10, budget: 10, seed: 2, ..PsoConfig::default() };
        let seen = std::sync::Mutex::new(Vec::new());
        let res = pso_maximize(
            |w| {
                let f = w[0].sin() + w[1];
                seen.lock().unwrap().push(f);
                f
            },
            2,
            &cfg,
        )
        .unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), 10);
        assert_eq!(res.best_fitness, seen.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn pso_history_is_strictly_increasing_and_deterministic() {
        let cfg = PsoConfig { particles: 8, budget: 203, seed: 3, ..PsoConfig::default() };
        let f = |w: &[f64]| -(w[0] - 1.0).abs() - (w[1] + 0.5).powi(2);
        let a = pso_maximize(f, 2, &cfg).unwrap();
        let b = pso_maximize(f, 2, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.evaluations, 203);
        for w in a.history.windows(2) {
            assert!(w[1].fitness > w[0].fitness);
            assert!(w[1].evaluation > w[0].evaluation);
        }
        assert_eq!(a.history.last().unwrap().fitness, a.best_fitness);
    }

    #[test]
    fn pso_penalizes_non_finite() {
        let cfg = PsoConfig { particles: 5, budget: 50, seed: 4, ..PsoConfig::default() };
        let res = pso_maximize(|w| if w[0] > 0.0 { f64::NAN } else { w[0] }, 1, &cfg).unwrap();
        assert!(res.best_fitness.is_finite());
        assert!(res.best_position[0] <= 0.0);
    }

    #[test]
    fn pso_rejects_small_budget() {
        let cfg = PsoConfig { particles: 10, budget: 9, ..PsoConfig::default() };
        assert!(pso_maximize(|_| 0.0, 2, &cfg).is_err());
    }
}
