//! VQC policy, model-based return estimation and policy search.
//!
//! A candidate ω is scored purely on the surrogate: from every start state in
//! a fixed set `S` the policy and the model are rolled out for `H` steps and
//! the shaped rewards of the predicted states are summed (no discount, no
//! early termination). The fitness is the mean over `S`. The real
//! environment is only touched by [`evaluate_on_env`].

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cartpole::{reward, Action, CartPole, CartPoleState, MAX_EPISODE_STEPS};
use crate::dataset::{Range, Scaler};
use crate::error::{config_err, Error, Result};
use crate::optim::{pso_maximize, Improvement, PsoConfig};
use crate::seed;
use crate::surrogate::write_json;
use crate::vqc::{BoundVqc, ParamVector, VqcSnapshot, VqcTemplate};

/// One-step dynamics `s̃' = m(s, a)`.
pub trait Dynamics: Sync {
    fn predict(&self, state: &CartPoleState, action: Action) -> CartPoleState;
}

/// A deterministic policy `a = π(s)`.
pub trait Controller: Sync {
    fn act(&self, state: &CartPoleState) -> Action;
}

/// Readouts at or above this value select [`Action::Right`].
pub const ACTION_THRESHOLD: f64 = 0.0;

pub fn action_from_readout(z: f64) -> Action {
    if z >= ACTION_THRESHOLD {
        Action::Right
    } else {
        Action::Left
    }
}

/// The policy VQC with bound parameters.
#[derive(Debug, Clone)]
pub struct VqcPolicy {
    template: VqcTemplate,
    params: ParamVector,
    state_scaler: [Range; 4],
    bound: BoundVqc,
}

impl VqcPolicy {
    pub fn new(template: VqcTemplate, params: ParamVector, state_scaler: [Range; 4]) -> Result<Self> {
        if template.num_inputs() != 4 || template.num_outputs() != 1 {
            return Err(config_err(format!(
                "policy template must have 4 inputs and 1 output, has {} and {}",
                template.num_inputs(),
                template.num_outputs()
            )));
        }
        let bound = template.bind(&params)?;
        Ok(Self { template, params, state_scaler, bound })
    }

    pub fn template(&self) -> &VqcTemplate {
        &self.template
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn scale_state(&self, state: &CartPoleState) -> [f64; 4] {
        let v = state.to_array();
        std::array::from_fn(|d| self.state_scaler[d].to_unit(v[d]))
    }

    /// Raw `⟨Z₀⟩` readout for a state.
    pub fn readout(&self, state: &CartPoleState) -> f64 {
        self.bound.evaluate(&self.scale_state(state)).map(|o| o[0]).unwrap_or(f64::NAN)
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            schema_version: POLICY_SCHEMA_VERSION,
            vqc: VqcSnapshot::new(&self.template, self.params.clone()),
            state_scaler: self.state_scaler,
        }
    }

    pub fn from_snapshot(snap: PolicySnapshot) -> Result<Self> {
        if snap.schema_version != POLICY_SCHEMA_VERSION {
            return Err(Error::Schema {
                what: "policy".into(),
                expected: POLICY_SCHEMA_VERSION,
                found: snap.schema_version,
            });
        }
        let (template, params) = snap.vqc.restore()?;
        Self::new(template, params, snap.state_scaler)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.snapshot())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let snap: PolicySnapshot = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::from_snapshot(snap)
    }
}

impl Controller for VqcPolicy {
    fn act(&self, state: &CartPoleState) -> Action {
        action_from_readout(self.readout(state))
    }
}

pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub schema_version: u32,
    pub vqc: VqcSnapshot,
    pub state_scaler: [Range; 4],
}

/// `count` environment resets drawn from `seed`.
pub fn start_states(count: usize, seed: u64) -> Vec<CartPoleState> {
    let env = CartPole::default();
    let mut rng = seed::rng(seed);
    (0..count).map(|_| env.reset(&mut rng)).collect()
}

/// Start states of the fitness function for a run seed.
pub fn fitness_start_states(count: usize, run_seed: u64) -> Vec<CartPoleState> {
    start_states(count, seed::derive(run_seed, seed::STREAM_FITNESS_STARTS))
}

/// Held-out evaluation start states for a seed; disjoint from the fitness
/// stream of any run seed.
pub fn evaluation_start_states(count: usize, seed: u64) -> Vec<CartPoleState> {
    start_states(count, seed::derive(seed, seed::STREAM_EVAL_STARTS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub starts: Vec<CartPoleState>,
    /// Roll-outs per start state; the mean is used.
    pub repetitions: usize,
}

impl RolloutConfig {
    pub fn new(horizon: usize, starts: Vec<CartPoleState>) -> Result<Self> {
        let cfg = Self { horizon, starts, repetitions: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.starts.is_empty() || self.repetitions == 0 {
            return Err(config_err("roll-outs need H ≥ 1, |S| ≥ 1 and N ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnEstimate {
    pub value: f64,
    /// First step whose predicted state was non-finite; later steps score 0.
    pub diverged_at: Option<usize>,
}

/// `Σ_{t=1..H} r(s̃_t)` with `s̃_{t+1} = m(s̃_t, π(s̃_t))`, `s̃_0 = s0`.
pub fn estimate_return<M, P>(model: &M, policy: &P, s0: &CartPoleState, horizon: usize) -> ReturnEstimate
where
    M: Dynamics + ?Sized,
    P: Controller + ?Sized,
{
    let mut state = *s0;
    let mut total = 0.0;
    for t in 1..=horizon {
        let action = policy.act(&state);
        state = model.predict(&state, action);
        if !state.is_finite() {
            return ReturnEstimate { value: total, diverged_at: Some(t) };
        }
        total += reward(&state);
    }
    ReturnEstimate { value: total, diverged_at: None }
}

/// Mean return estimate over the start-state set.
pub fn fitness<M, P>(model: &M, policy: &P, config: &RolloutConfig) -> f64
where
    M: Dynamics + ?Sized,
    P: Controller + ?Sized,
{
    let returns: Vec<f64> = config
        .starts
        .par_iter()
        .map(|s0| {
            let total: f64 = (0..config.repetitions)
                .map(|_| estimate_return(model, policy, s0, config.horizon).value)
                .sum();
            total / config.repetitions as f64
        })
        .collect();
    returns.iter().sum::<f64>() / returns.len() as f64
}

/// Fitness of policy parameters ω.
pub fn fitness_of_params<M: Dynamics + ?Sized>(
    model: &M,
    template: &VqcTemplate,
    state_scaler: &[Range; 4],
    params: &[f64],
    config: &RolloutConfig,
) -> Result<f64> {
    let policy = VqcPolicy::new(template.clone(), ParamVector(params.to_vec()), *state_scaler)?;
    Ok(fitness(model, &policy, config))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: ParamVector,
    pub best_fitness: f64,
    pub evaluations: usize,
    /// Incumbent improvements in evaluation order.
    pub history: Vec<Improvement>,
}

/// PSO over the policy parameters, maximizing the model-based fitness.
pub fn search<M: Dynamics + ?Sized>(
    model: &M,
    template: &VqcTemplate,
    state_scaler: &[Range; 4],
    rollout: &RolloutConfig,
    pso: &PsoConfig,
) -> Result<SearchOutcome> {
    rollout.validate()?;
    // arity check up front; the fitness closure cannot fail afterwards
    VqcPolicy::new(template.clone(), ParamVector::zeros(template.num_params()), *state_scaler)?;
    let result = pso_maximize(
        |w| fitness_of_params(model, template, state_scaler, w, rollout).unwrap_or(f64::NEG_INFINITY),
        template.num_params(),
        pso,
    )?;
    Ok(SearchOutcome {
        best: ParamVector(result.best_position),
        best_fitness: result.best_fitness,
        evaluations: result.evaluations,
        history: result.history,
    })
}

pub fn state_scaler(scaler: &Scaler) -> [Range; 4] {
    scaler.state
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub x0: f64,
    pub x_dot0: f64,
    pub theta0: f64,
    pub theta_dot0: f64,
    /// Sum of shaped rewards over the visited states.
    #[serde(rename = "return")]
    pub shaped_return: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub episodes: Vec<EpisodeResult>,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub min_steps: usize,
    pub max_steps: usize,
    /// Every episode reached `max_steps`.
    pub perfect: bool,
}

impl EvaluationReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.episodes {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs real episodes from each start state until termination or
/// `max_steps`.
pub fn evaluate_on_env<P: Controller + ?Sized>(
    policy: &P,
    env: &CartPole,
    starts: &[CartPoleState],
    max_steps: usize,
) -> Result<EvaluationReport> {
    if starts.is_empty() || max_steps == 0 {
        return Err(config_err("evaluation needs start states and max_steps ≥ 1"));
    }
    let episodes = starts
        .par_iter()
        .enumerate()
        .map(|(episode, s0)| {
            let mut state = *s0;
            let mut total = 0.0;
            let mut steps = 0;
            while steps < max_steps {
                let out = env.step(&state, policy.act(&state))?;
                steps += 1;
                state = out.next;
                total += reward(&state);
                if out.terminated {
                    break;
                }
            }
            Ok(EpisodeResult {
                episode,
                x0: s0.x,
                x_dot0: s0.x_dot,
                theta0: s0.theta,
                theta_dot0: s0.theta_dot,
                shaped_return: total,
                steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = episodes.len() as f64;
    let mean_return = episodes.iter().map(|e| e.shaped_return).sum::<f64>() / n;
    let mean_steps = episodes.iter().map(|e| e.steps as f64).sum::<f64>() / n;
    let min_steps = episodes.iter().map(|e| e.steps).min().unwrap_or(0);
    let max = episodes.iter().map(|e| e.steps).max().unwrap_or(0);
    Ok(EvaluationReport { perfect: min_steps == max_steps, episodes, mean_return, mean_steps, min_steps, max_steps: max })
}

/// One row of the learning-curve export: model fitness of an incumbent and,
/// optionally, its performance on the real environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub evaluation: usize,
    pub fitness: f64,
    pub env_mean_return: Option<f64>,
    pub env_mean_steps: Option<f64>,
    pub env_perfect: Option<bool>,
}

/// Diagnostic environment evaluation of every incumbent after the search
/// has finished; nothing flows back into the optimization.
pub fn learning_curve(
    outcome: &SearchOutcome,
    template: &VqcTemplate,
    state_scaler: &[Range; 4],
    eval_starts: Option<&[CartPoleState]>,
) -> Result<Vec<CurvePoint>> {
    let env = CartPole::default();
    outcome
        .history
        .iter()
        .map(|imp| {
            let mut point = CurvePoint {
                evaluation: imp.evaluation,
                fitness: imp.fitness,
                env_mean_return: None,
                env_mean_steps: None,
                env_perfect: None,
            };
            if let Some(starts) = eval_starts {
                let policy = VqcPolicy::new(template.clone(), ParamVector(imp.position.clone()), *state_scaler)?;
                let report = evaluate_on_env(&policy, &env, starts, MAX_EPISODE_STEPS)?;
                point.env_mean_return = Some(report.mean_return);
                point.env_mean_steps = Some(report.mean_steps);
                point.env_perfect = Some(report.perfect);
            }
            Ok(point)
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
