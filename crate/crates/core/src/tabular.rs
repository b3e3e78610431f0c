//! Tabular ε-greedy Q-learning over the enumerated state-action space.
//!
//! The learner never sees transition probabilities. Each slot it updates the
//! single entry `Q(s_prev, a)` toward `cost + γ min_α Q(s_next, α)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::caching::{ActionSpace, CacheAction, SystemState};
use crate::env::{run_traced, Agent, Environment, Trace};
use crate::oracle::{argmin, QTable, StateSpace};
use crate::schedule::{EpsilonSchedule, LambdaSchedule, StepSize};
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLearnerConfig {
    pub beta: StepSize,
    pub epsilon: EpsilonSchedule,
    pub gamma: f64,
}

impl QLearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.beta.validate()?;
        self.epsilon.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "discount {} must lie in [0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Q-table, visit counts and configuration of one tabular learner.
#[derive(Debug, Clone)]
pub struct ExactLearner {
    config: QLearnerConfig,
    space: ActionSpace,
    actions: Vec<CacheAction>,
    num_l: usize,
    q: QTable,
    visits: Vec<u32>,
    updates: usize,
}

impl ExactLearner {
    /// Zero-initialized learner for `num_g × num_l` popularity states and
    /// the `C(F, M)` actions of `space`.
    pub fn new(config: QLearnerConfig, num_g: usize, num_l: usize, space: ActionSpace) -> Result<Self> {
        config.validate()?;
        let actions = space.actions()?;
        let num_states = num_g * num_l * actions.len();
        let num_actions = actions.len();
        Ok(Self {
            config,
            space,
            actions,
            num_l,
            q: QTable::zeros(num_states, num_actions),
            visits: vec![0; num_states * num_actions],
            updates: 0,
        })
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn into_q(self) -> QTable {
        self.q
    }

    pub fn config(&self) -> &QLearnerConfig {
        &self.config
    }

    /// Number of [`Self::td_update`] calls so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn actions(&self) -> &[CacheAction] {
        &self.actions
    }

    /// Same layout as [`StateSpace::index`].
    pub fn state_index(&self, state: &SystemState) -> Result<usize> {
        let a = self.space.index_of(&state.action)?;
        let s = (state.g * self.num_l + state.l) * self.actions.len() + a;
        if s >= self.q.num_states() {
            return Err(Error::IndexOutOfRange {
                index: s,
                len: self.q.num_states(),
            });
        }
        Ok(s)
    }

    /// With probability `epsilon` a uniform action index, otherwise the
    /// lowest-index minimizer of `Q(s, ·)`.
    pub fn epsilon_greedy_action<R: Rng + ?Sized>(&self, s: usize, epsilon: f64, rng: &mut R) -> usize {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            rng.random_range(0..self.actions.len())
        } else {
            argmin(self.q.row(s))
        }
    }

    /// `Q(s_prev, a) ← (1-β) Q(s_prev, a) + β [cost + γ min_α Q(s_next, α)]`,
    /// returning the new entry.
    pub fn td_update(&mut self, s_prev: usize, a: usize, s_next: usize, cost: f64, beta: f64, gamma: f64) -> f64 {
        let target = cost + gamma * self.q.min(s_next);
        let old = self.q.get(s_prev, a);
        let new = (1.0 - beta) * old + beta * target;
        self.q.set(s_prev, a, new);
        self.visits[s_prev * self.actions.len() + a] += 1;
        self.updates += 1;
        new
    }

    /// Step size for the next update of `(s, a)`.
    pub fn beta_for(&self, s: usize, a: usize) -> f64 {
        self.config
            .beta
            .at(self.visits[s * self.actions.len() + a])
    }

    /// Greedy policy of the current table.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.q.num_states()).map(|s| self.q.argmin(s)).collect()
    }
}

impl Agent for ExactLearner {
    fn act(&mut self, state: &SystemState, slot: usize, rng: &mut SimRng) -> Result<CacheAction> {
        let s = self.state_index(state)?;
        let a = self.epsilon_greedy_action(s, self.config.epsilon.at(slot), rng);
        Ok(self.actions[a].clone())
    }

    fn learn(
        &mut self,
        prev: &SystemState,
        action: &CacheAction,
        next: &SystemState,
        cost: f64,
        slot: usize,
    ) -> Result<f64> {
        if !cost.is_finite() {
            return Err(Error::Divergence {
                slot,
                detail: format!("non-finite cost {cost}"),
            });
        }
        let s_prev = self.state_index(prev)?;
        let s_next = self.state_index(next)?;
        let a = self.space.index_of(action)?;
        let beta = self.beta_for(s_prev, a);
        self.td_update(s_prev, a, s_next, cost, beta, self.config.gamma);
        Ok(beta)
    }

    fn epsilon(&self, slot: usize) -> f64 {
        self.config.epsilon.at(slot)
    }

    fn q_estimate(&self, _space: &StateSpace) -> Option<QTable> {
        Some(self.q.clone())
    }
}

/// Runs a fresh tabular learner for `horizon` slots.
pub fn run_exact(
    config: QLearnerConfig,
    env: &mut Environment<'_>,
    costs: &LambdaSchedule,
    capacity: usize,
    horizon: usize,
    env_rng: &mut SimRng,
    agent_rng: &mut SimRng,
) -> Result<(Trace, QTable)> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let space = ActionSpace::new(env.catalog_size(), capacity)?;
    let mut learner = ExactLearner::new(
        config,
        env.g_chain.num_states(),
        env.l_chain.num_states(),
        space,
    )?;
    let trace = run_traced(&mut learner, env, costs, capacity, horizon, env_rng, agent_rng)?;
    Ok((trace, learner.into_q()))
}
