//! Scenarios, Monte Carlo averaging and metrics.
//!
//! A [`Scenario`] fixes the popularity chains, cache capacity, discount,
//! cost-weight schedule, learner and seeds. [`run_scenario`] runs every
//! realization on its own pair of random streams and reduces the per-slot
//! traces in realization order, so results do not depend on the thread count.

mod metrics;
pub mod presets;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caching::{ActionSpace, CacheAction, SystemState};
use crate::env::{simulate, Agent, Environment, Revelation};
use crate::linear::{LinearLearner, LinearLearnerConfig};
use crate::oracle::{solve, OracleSolution, QTable, StateSpace};
use crate::popularity::MarkovChain;
use crate::schedule::{EpsilonSchedule, LambdaSchedule, StepSize};
use crate::tabular::{ExactLearner, QLearnerConfig};
use crate::{Error, Result, SimRng};

pub use metrics::{
    band_entry, cache_hit_fraction, export_metrics, mean_and_se, normalized_q_error, read_metrics,
    Metadata, MetricsTable, MetricsTrace, RunFailure, RunSummary, HIT_METRIC_EXPECTED,
    HIT_METRIC_REALIZED, NORM_ERROR_METRIC, SEED_MIXING,
};

pub const DEFAULT_GAMMA: f64 = 0.8;

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_window() -> usize {
    10_000
}

/// Which agent drives the cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Exact {
        beta: StepSize,
        epsilon: EpsilonSchedule,
    },
    Linear {
        alpha_g: f64,
        alpha_l: f64,
        alpha_r: f64,
        epsilon: EpsilonSchedule,
    },
    /// Follows the optimal policy of the known MDP.
    OraclePolicy,
    /// A uniformly random action every slot.
    RandomBaseline,
}

impl LearnerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            LearnerSpec::Exact { .. } => "exact",
            LearnerSpec::Linear { .. } => "linear",
            LearnerSpec::OraclePolicy => "oracle",
            LearnerSpec::RandomBaseline => "random",
        }
    }
}

/// Full description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub g_chain: MarkovChain,
    pub l_chain: MarkovChain,
    pub capacity: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub lambda_schedule: LambdaSchedule,
    pub learner: LearnerSpec,
    pub horizon: usize,
    pub realizations: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub revelation: Revelation,
    /// Track the normalized Q error against the oracle every this many slots.
    #[serde(default)]
    pub oracle_every: Option<usize>,
    /// Final slots summarized per run.
    #[serde(default = "default_window")]
    pub summary_window: usize,
}

impl Scenario {
    pub fn catalog_size(&self) -> usize {
        self.g_chain.catalog_size()
    }

    pub fn validate(&self) -> Result<()> {
        if self.g_chain.catalog_size() != self.l_chain.catalog_size() {
            return Err(Error::DimensionMismatch {
                expected: self.g_chain.catalog_size(),
                found: self.l_chain.catalog_size(),
            });
        }
        ActionSpace::new(self.catalog_size(), self.capacity)?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} must lie in [0, 1)", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidConfig("realizations must be at least 1".into()));
        }
        if self.oracle_every == Some(0) {
            return Err(Error::InvalidConfig("oracle_every must be at least 1".into()));
        }
        if self.needs_oracle() && self.lambda_schedule.as_constant().is_none() {
            return Err(Error::InvalidConfig(
                "the oracle needs constant cost weights".into(),
            ));
        }
        if let Revelation::Empirical { requests_per_slot: 0 } = self.revelation {
            return Err(Error::InvalidConfig("requests_per_slot must be at least 1".into()));
        }
        match self.learner {
            LearnerSpec::Exact { beta, epsilon } => self.exact_config(beta, epsilon).validate(),
            LearnerSpec::Linear { .. } => self.linear_config()?.validate(),
            _ => Ok(()),
        }
    }

    fn needs_oracle(&self) -> bool {
        self.oracle_every.is_some() || self.learner == LearnerSpec::OraclePolicy
    }

    fn exact_config(&self, beta: StepSize, epsilon: EpsilonSchedule) -> QLearnerConfig {
        QLearnerConfig {
            beta,
            epsilon,
            gamma: self.gamma,
        }
    }

    fn linear_config(&self) -> Result<LinearLearnerConfig> {
        match self.learner {
            LearnerSpec::Linear {
                alpha_g,
                alpha_l,
                alpha_r,
                epsilon,
            } => Ok(LinearLearnerConfig {
                alpha_g,
                alpha_l,
                alpha_r,
                epsilon,
                gamma: self.gamma,
            }),
            _ => Err(Error::InvalidConfig("not a linear learner".into())),
        }
    }

    /// Number of learned values the configured learner stores.
    pub fn learner_parameters(&self) -> Option<usize> {
        let f = self.catalog_size();
        let (g, l) = (self.g_chain.num_states(), self.l_chain.num_states());
        match self.learner {
            LearnerSpec::Exact { .. } => {
                let a = ActionSpace::new(f, self.capacity).ok()?.enumerable_len().ok()?;
                (g * l * a).checked_mul(a)
            }
            LearnerSpec::Linear { .. } => Some((g + l) * f + 1),
            _ => None,
        }
    }

    /// The oracle's state space and solution for the constant cost weights.
    pub fn solve_oracle(&self) -> Result<(StateSpace, OracleSolution)> {
        let params = self
            .lambda_schedule
            .as_constant()
            .ok_or_else(|| Error::InvalidConfig("the oracle needs constant cost weights".into()))?;
        let space = StateSpace::new(self.g_chain.clone(), self.l_chain.clone(), self.capacity)?;
        let solution = solve(&space, self.gamma, params)?;
        Ok((space, solution))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Seed of realization `r`: a splitmix64 finalizer applied to the mixed
/// base seed.
pub fn realization_seed(base_seed: u64, r: u64) -> u64 {
    let mut z = base_seed ^ r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Environment and learner streams of one realization.
pub fn realization_rngs(seed: u64) -> (SimRng, SimRng) {
    let mut env = SimRng::seed_from_u64(seed);
    let mut agent = env.clone();
    env.set_stream(0);
    agent.set_stream(1);
    (env, agent)
}

/// Uniform action over all `C(F, M)` subsets, drawn without enumeration.
pub fn random_baseline_action(space: &ActionSpace, rng: &mut SimRng) -> CacheAction {
    space.sample_uniform(rng)
}

/// Picks a uniformly random action every slot.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    space: ActionSpace,
}

impl RandomAgent {
    pub fn new(space: ActionSpace) -> Self {
        Self { space }
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _: &SystemState, _: usize, rng: &mut SimRng) -> Result<CacheAction> {
        Ok(random_baseline_action(&self.space, rng))
    }

    fn learn(&mut self, _: &SystemState, _: &CacheAction, _: &SystemState, _: f64, _: usize) -> Result<f64> {
        Ok(f64::NAN)
    }
}

/// Follows a fixed policy over an enumerated state space.
#[derive(Debug, Clone, Copy)]
pub struct OracleAgent<'a> {
    space: &'a StateSpace,
    solution: &'a OracleSolution,
}

impl<'a> OracleAgent<'a> {
    pub fn new(space: &'a StateSpace, solution: &'a OracleSolution) -> Self {
        Self { space, solution }
    }
}

impl Agent for OracleAgent<'_> {
    fn act(&mut self, state: &SystemState, _: usize, _: &mut SimRng) -> Result<CacheAction> {
        let s = self.space.state_index(state)?;
        Ok(self.space.actions()[self.solution.policy.action(s)].clone())
    }

    fn learn(&mut self, _: &SystemState, _: &CacheAction, _: &SystemState, _: f64, _: usize) -> Result<f64> {
        Ok(f64::NAN)
    }

    fn q_estimate(&self, _: &StateSpace) -> Option<QTable> {
        Some(self.solution.q.clone())
    }
}

/// Per-slot output of one realization.
struct RunTrace {
    cost: Vec<f64>,
    hit: Vec<f64>,
    norm_error: Vec<f64>,
    summary: RunSummary,
}

struct Oracle {
    space: StateSpace,
    solution: OracleSolution,
}

/// Runs every realization of `scenario`.
pub fn run_scenario(scenario: &Scenario) -> Result<MetricsTrace> {
    let seeds: Vec<u64> = (0..scenario.realizations as u64)
        .map(|r| realization_seed(scenario.base_seed, r))
        .collect();
    run_with_seeds(scenario, &seeds)
}

/// Runs one realization per entry of `seeds`, ignoring `scenario.realizations`
/// and `scenario.base_seed`.
pub fn run_with_seeds(scenario: &Scenario, seeds: &[u64]) -> Result<MetricsTrace> {
    scenario.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("no realizations to run".into()));
    }
    let oracle = if scenario.needs_oracle() {
        let (space, solution) = scenario.solve_oracle()?;
        Some(Oracle { space, solution })
    } else {
        None
    };
    let horizon = scenario.horizon;
    let mut acc = Accumulator::new(horizon, scenario.oracle_every.is_some());
    let mut failures = Vec::new();
    let batch = (rayon::current_num_threads() * 4).max(8);
    for (chunk_index, chunk) in seeds.chunks(batch).enumerate() {
        let results: Vec<Result<RunTrace>> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| run_realization(scenario, oracle.as_ref(), chunk_index * batch + i, seed))
            .collect();
        for (i, result) in results.into_iter().enumerate() {
            let realization = chunk_index * batch + i;
            match result {
                Ok(run) => acc.add(run),
                Err(err) => failures.push(RunFailure {
                    realization,
                    seed: chunk[i],
                    error: err.to_string(),
                }),
            }
        }
    }
    if acc.runs.is_empty() {
        let first = failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(Error::InvalidConfig(format!("every realization failed: {first}")));
    }
    let metadata = Metadata {
        scenario: scenario.name.clone(),
        description: scenario.description.clone(),
        catalog_size: scenario.catalog_size(),
        capacity: scenario.capacity,
        global_states: scenario.g_chain.num_states(),
        local_states: scenario.l_chain.num_states(),
        gamma: scenario.gamma,
        learner: scenario.learner,
        learner_parameters: scenario.learner_parameters(),
        lambda_schedule: scenario.lambda_schedule.clone(),
        revelation: scenario.revelation,
        horizon,
        realizations_requested: seeds.len(),
        realizations_completed: acc.runs.len(),
        base_seed: scenario.base_seed,
        seed_mixing: SEED_MIXING.into(),
        summary_window: scenario.summary_window.min(horizon),
        hit_metric: match scenario.revelation {
            Revelation::ChainState => HIT_METRIC_EXPECTED,
            Revelation::Empirical { .. } => HIT_METRIC_REALIZED,
        }
        .into(),
        norm_error_metric: scenario.oracle_every.map(|_| NORM_ERROR_METRIC.into()),
        norm_error_every: scenario.oracle_every,
    };
    Ok(acc.finish(failures, metadata))
}

fn run_realization(scenario: &Scenario, oracle: Option<&Oracle>, realization: usize, seed: u64) -> Result<RunTrace> {
    let (mut env_rng, mut agent_rng) = realization_rngs(seed);
    let mut env = Environment::new(&scenario.g_chain, &scenario.l_chain, scenario.revelation);
    let space = ActionSpace::new(scenario.catalog_size(), scenario.capacity)?;
    let (ng, nl) = (scenario.g_chain.num_states(), scenario.l_chain.num_states());
    let mut trace = match scenario.learner {
        LearnerSpec::Exact { beta, epsilon } => {
            let mut agent = ExactLearner::new(scenario.exact_config(beta, epsilon), ng, nl, space)?;
            record(&mut agent, scenario, oracle, &mut env, &mut env_rng, &mut agent_rng)?
        }
        LearnerSpec::Linear { .. } => {
            let mut agent = LinearLearner::new(scenario.linear_config()?, ng, nl, space)?;
            record(&mut agent, scenario, oracle, &mut env, &mut env_rng, &mut agent_rng)?
        }
        LearnerSpec::OraclePolicy => {
            let o = oracle.ok_or_else(|| Error::InvalidConfig("oracle unavailable".into()))?;
            let mut agent = OracleAgent::new(&o.space, &o.solution);
            record(&mut agent, scenario, oracle, &mut env, &mut env_rng, &mut agent_rng)?
        }
        LearnerSpec::RandomBaseline => {
            let mut agent = RandomAgent::new(space);
            record(&mut agent, scenario, oracle, &mut env, &mut env_rng, &mut agent_rng)?
        }
    };
    trace.summary.realization = realization;
    trace.summary.seed = seed;
    Ok(trace)
}

fn record<A: Agent>(
    agent: &mut A,
    scenario: &Scenario,
    oracle: Option<&Oracle>,
    env: &mut Environment,
    env_rng: &mut SimRng,
    agent_rng: &mut SimRng,
) -> Result<RunTrace> {
    let horizon = scenario.horizon;
    let mut cost = Vec::with_capacity(horizon);
    let mut hit = Vec::with_capacity(horizon);
    let mut norm_error = Vec::new();
    let every = scenario.oracle_every.filter(|_| oracle.is_some());
    if every.is_some() {
        norm_error = vec![f64::NAN; horizon];
    }
    simulate(
        agent,
        env,
        &scenario.lambda_schedule,
        scenario.capacity,
        horizon,
        env_rng,
        agent_rng,
        |r, a| {
            cost.push(r.cost);
            hit.push(r.hit_fraction);
            if let (Some(k), Some(o)) = (every, oracle) {
                if (r.slot + 1) % k == 0 {
                    if let Some(q) = a.q_estimate(&o.space) {
                        norm_error[r.slot] = normalized_q_error(&q, &o.solution.q)?;
                    }
                }
            }
            Ok(())
        },
    )?;
    let window = scenario.summary_window.clamp(1, horizon);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let intervals = scenario.lambda_schedule.intervals();
    let halves: Vec<(usize, usize)> = intervals
        .iter()
        .enumerate()
        .map(|(i, iv)| {
            let end = intervals.get(i + 1).map_or(horizon, |n| n.start).min(horizon);
            let start = iv.start.min(end);
            (start + (end - start) / 2, end)
        })
        .collect();
    let summary = RunSummary {
        realization: 0,
        seed: 0,
        mean_cost: mean(&cost),
        window_cost: mean(&cost[horizon - window..]),
        window_hit: mean(&hit[horizon - window..]),
        interval_cost: halves.iter().map(|&(a, b)| mean(&cost[a..b])).collect(),
        interval_hit: halves.iter().map(|&(a, b)| mean(&hit[a..b])).collect(),
        final_norm_error: norm_error.iter().rev().find(|v| !v.is_nan()).copied(),
    };
    Ok(RunTrace {
        cost,
        hit,
        norm_error,
        summary,
    })
}

/// Running sums in realization order.
struct Accumulator {
    cost: Moments,
    run_avg: Moments,
    hit: Moments,
    norm_error: Option<Moments>,
    runs: Vec<RunSummary>,
}

struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            sq: vec![0.0; n],
        }
    }

    fn add(&mut self, values: impl IntoIterator<Item = f64>) {
        for ((s, q), v) in self.sum.iter_mut().zip(self.sq.iter_mut()).zip(values) {
            *s += v;
            *q += v * v;
        }
    }

    fn mean_se(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / nf).collect();
        let se = self
            .sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                if n < 2 {
                    f64::NAN
                } else {
                    ((q / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
                }
            })
            .collect();
        (mean, se)
    }
}

impl Accumulator {
    fn new(horizon: usize, with_error: bool) -> Self {
        Self {
            cost: Moments::new(horizon),
            run_avg: Moments::new(horizon),
            hit: Moments::new(horizon),
            norm_error: with_error.then(|| Moments::new(horizon)),
            runs: Vec::new(),
        }
    }

    fn add(&mut self, run: RunTrace) {
        self.cost.add(run.cost.iter().copied());
        let mut total = 0.0;
        self.run_avg.add(run.cost.iter().enumerate().map(|(t, c)| {
            total += c;
            total / (t + 1) as f64
        }));
        self.hit.add(run.hit.iter().copied());
        if let Some(m) = &mut self.norm_error {
            m.add(run.norm_error.iter().copied());
        }
        self.runs.push(run.summary);
    }

    fn finish(self, failures: Vec<RunFailure>, metadata: Metadata) -> MetricsTrace {
        let n = self.runs.len();
        let (avg_cost, avg_cost_se) = self.cost.mean_se(n);
        let (run_avg_cost, run_avg_cost_se) = self.run_avg.mean_se(n);
        let (hit_fraction, hit_fraction_se) = self.hit.mean_se(n);
        MetricsTrace {
            avg_cost,
            avg_cost_se,
            run_avg_cost,
            run_avg_cost_se,
            hit_fraction,
            hit_fraction_se,
            norm_error: self.norm_error.map(|m| m.mean_se(n).0),
            runs: self.runs,
            failures,
            metadata,
        }
    }
}
