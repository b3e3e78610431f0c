//! Slot-level environment and the select → reveal → cost → learn loop.
//!
//! Each slot the agent picks the cache contents for the coming slot, both
//! popularity chains step, the realized cost of that choice is charged, and
//! the agent learns from the transition.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caching::{CacheAction, CostParams, SystemState};
use crate::csv_util::{sig17, write_lines};
use crate::oracle::{QTable, StateSpace};
use crate::popularity::{estimate_empirical, sample_requests, MarkovChain, PopularityProfile};
use crate::schedule::LambdaSchedule;
use crate::{Result, SimRng};

/// How the local popularity is revealed to the caching agent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Revelation {
    /// The true chain states are observed directly.
    #[default]
    ChainState,
    /// `requests_per_slot` local requests are sampled; the agent sees their
    /// empirical profile, quantized onto the local chain's states.
    Empirical { requests_per_slot: u64 },
}

/// What the agent learns at the end of a slot.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Global chain state.
    pub g: usize,
    /// Local chain state as seen by the agent (quantized in empirical mode).
    pub l: usize,
    /// True local chain state.
    pub true_l: usize,
    /// Empirical local profile, in empirical mode.
    pub local_estimate: Option<PopularityProfile>,
}

/// Global and local popularity chains plus the revelation mode.
#[derive(Debug, Clone, Copy)]
pub struct Environment<'a> {
    pub g_chain: &'a MarkovChain,
    pub l_chain: &'a MarkovChain,
    pub revelation: Revelation,
    g: usize,
    l: usize,
}

impl<'a> Environment<'a> {
    pub fn new(g_chain: &'a MarkovChain, l_chain: &'a MarkovChain, revelation: Revelation) -> Self {
        Self {
            g_chain,
            l_chain,
            revelation,
            g: 0,
            l: 0,
        }
    }

    pub fn catalog_size(&self) -> usize {
        self.g_chain.catalog_size()
    }

    /// Draws the initial chain states uniformly.
    pub fn reset(&mut self, rng: &mut SimRng) -> Result<Observation> {
        use rand::Rng;
        self.g = rng.random_range(0..self.g_chain.num_states());
        self.l = rng.random_range(0..self.l_chain.num_states());
        self.observe(rng)
    }

    /// Advances both chains one slot.
    pub fn step(&mut self, rng: &mut SimRng) -> Result<Observation> {
        self.g = self.g_chain.step(self.g, rng);
        self.l = self.l_chain.step(self.l, rng);
        self.observe(rng)
    }

    fn observe(&self, rng: &mut SimRng) -> Result<Observation> {
        match self.revelation {
            Revelation::ChainState => Ok(Observation {
                g: self.g,
                l: self.l,
                true_l: self.l,
                local_estimate: None,
            }),
            Revelation::Empirical { requests_per_slot } => {
                let batch = sample_requests(self.l_chain.state(self.l), requests_per_slot, rng)?;
                let estimate = estimate_empirical(&batch)?;
                Ok(Observation {
                    g: self.g,
                    l: self.l_chain.quantize(&estimate)?,
                    true_l: self.l,
                    local_estimate: Some(estimate),
                })
            }
        }
    }

    /// Global profile of an observation.
    pub fn global_profile(&self, obs: &Observation) -> &'a [f64] {
        self.g_chain.state(obs.g).probs()
    }

    /// Local profile the slot is charged against: the true state profile, or
    /// the realized request shares in empirical mode.
    pub fn local_profile<'o>(&self, obs: &'o Observation) -> &'o [f64]
    where
        'a: 'o,
    {
        match &obs.local_estimate {
            Some(p) => p.probs(),
            None => self.l_chain.state(obs.true_l).probs(),
        }
    }
}

/// Realized cost `λ1 |a \ a_prev| + λ2 (1-a)ᵀ p_L + λ3 (1-a)ᵀ p_G`.
pub fn realized_cost(
    prev: &CacheAction,
    action: &CacheAction,
    global: &[f64],
    local: &[f64],
    params: &CostParams,
) -> f64 {
    params.lambda1 * action.newly_fetched(prev) as f64
        + params.lambda2 * action.uncached_mass(local)
        + params.lambda3 * action.uncached_mass(global)
}

/// A caching agent driven by [`simulate`].
pub trait Agent {
    /// Chooses the cache contents for the coming slot.
    fn act(&mut self, state: &SystemState, slot: usize, rng: &mut SimRng) -> Result<CacheAction>;

    /// Learns from one realized transition; returns the step size used.
    fn learn(
        &mut self,
        prev: &SystemState,
        action: &CacheAction,
        next: &SystemState,
        cost: f64,
        slot: usize,
    ) -> Result<f64>;

    /// Exploration probability in effect at `slot`.
    fn epsilon(&self, _slot: usize) -> f64 {
        0.0
    }

    /// The agent's current Q estimate over an enumerated state space.
    fn q_estimate(&self, _space: &StateSpace) -> Option<QTable> {
        None
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub g: usize,
    pub l: usize,
    pub action: CacheAction,
    pub cost: f64,
    pub hit_fraction: f64,
    pub epsilon: f64,
    pub step: f64,
}

/// Runs `agent` for `horizon` slots from a uniformly drawn initial chain state
/// and the action caching files `1..=M`, calling `on_slot` after every slot.
///
/// `env_rng` drives the popularity chains only, so agents run on the same
/// stream see the same popularity trajectory.
pub fn simulate<A: Agent>(
    agent: &mut A,
    env: &mut Environment<'_>,
    costs: &LambdaSchedule,
    capacity: usize,
    horizon: usize,
    env_rng: &mut SimRng,
    agent_rng: &mut SimRng,
    mut on_slot: impl FnMut(&SlotRecord, &A) -> Result<()>,
) -> Result<SystemState> {
    let start = env.reset(env_rng)?;
    let mut state = SystemState {
        g: start.g,
        l: start.l,
        action: CacheAction::first(env.catalog_size(), capacity)?,
    };
    for slot in 0..horizon {
        let action = agent.act(&state, slot, agent_rng)?;
        let obs = env.step(env_rng)?;
        let local = env.local_profile(&obs);
        let cost = realized_cost(
            &state.action,
            &action,
            env.global_profile(&obs),
            local,
            costs.at(slot),
        );
        let hit_fraction = action.cached_mass(local);
        let next = SystemState {
            g: obs.g,
            l: obs.l,
            action,
        };
        let step = agent.learn(&state, &next.action, &next, cost, slot)?;
        let record = SlotRecord {
            slot,
            g: next.g,
            l: next.l,
            action: next.action,
            cost,
            hit_fraction,
            epsilon: agent.epsilon(slot),
            step,
        };
        on_slot(&record, agent)?;
        state = SystemState {
            g: record.g,
            l: record.l,
            action: record.action,
        };
    }
    Ok(state)
}

/// Full per-slot trace of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace(pub Vec<SlotRecord>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|r| r.cost)
    }

    /// CSV `slot,g_state,l_state,action,realized_cost,epsilon,beta`.
    ///
    /// Chain states are 0-based indices, actions 1-based file labels. For
    /// the linear learner the `beta` column carries its global step size.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = "slot,g_state,l_state,action,realized_cost,epsilon,beta".to_string();
        let rows = self.0.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.slot,
                r.g,
                r.l,
                r.action,
                sig17(r.cost),
                sig17(r.epsilon),
                sig17(r.step)
            )
        });
        write_lines(path, std::iter::once(header).chain(rows))
    }
}

/// Runs `agent` and keeps every slot.
pub fn run_traced<A: Agent>(
    agent: &mut A,
    env: &mut Environment<'_>,
    costs: &LambdaSchedule,
    capacity: usize,
    horizon: usize,
    env_rng: &mut SimRng,
    agent_rng: &mut SimRng,
) -> Result<Trace> {
    let mut trace = Vec::with_capacity(horizon);
    simulate(agent, env, costs, capacity, horizon, env_rng, agent_rng, |r, _| {
        trace.push(r.clone());
        Ok(())
    })?;
    Ok(Trace(trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popularity::PopularityProfile;
    use crate::rng_from_seed;

    struct Fixed(CacheAction);

    impl Agent for Fixed {
        fn act(&mut self, _: &SystemState, _: usize, _: &mut SimRng) -> Result<CacheAction> {
            Ok(self.0.clone())
        }
        fn learn(&mut self, _: &SystemState, _: &CacheAction, _: &SystemState, _: f64, _: usize) -> Result<f64> {
            Ok(f64::NAN)
        }
    }

    #[test]
    fn fixed_agent_on_constant_chains() {
        let p = PopularityProfile::new(vec![0.5, 0.3, 0.2]).unwrap();
        let g = MarkovChain::constant(p.clone());
        let l = MarkovChain::constant(p);
        let mut env = Environment::new(&g, &l, Revelation::ChainState);
        let costs = LambdaSchedule::constant(CostParams::new(10.0, 1.0, 2.0).unwrap());
        let mut agent = Fixed(CacheAction::from_labels(3, &[2]).unwrap());
        let trace = run_traced(
            &mut agent,
            &mut env,
            &costs,
            1,
            3,
            &mut rng_from_seed(1),
            &mut rng_from_seed(2),
        )
        .unwrap();
        assert_eq!(trace.len(), 3);
        // First slot switches from file 1 to file 2.
        assert!((trace.0[0].cost - (10.0 + 0.7 + 1.4)).abs() < 1e-12);
        assert!((trace.0[1].cost - 2.1).abs() < 1e-12);
        assert!(trace.0.iter().all(|r| (r.hit_fraction - 0.3).abs() < 1e-15));
    }

    #[test]
    fn empirical_mode_quantizes() {
        let a = PopularityProfile::new(vec![0.9, 0.05, 0.05]).unwrap();
        let b = PopularityProfile::new(vec![0.05, 0.05, 0.9]).unwrap();
        let chain = MarkovChain::new(vec![a, b], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let mut env = Environment::new(
            &chain,
            &chain,
            Revelation::Empirical {
                requests_per_slot: 500,
            },
        );
        let mut rng = rng_from_seed(4);
        for _ in 0..50 {
            let obs = env.step(&mut rng).unwrap();
            assert_eq!(obs.l, obs.true_l);
            let est = obs.local_estimate.as_ref().unwrap();
            assert!((est.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_csv_columns() {
        let rec = SlotRecord {
            slot: 0,
            g: 1,
            l: 0,
            action: CacheAction::from_labels(4, &[1, 3]).unwrap(),
            cost: 1.5,
            hit_fraction: 0.5,
            epsilon: 0.05,
            step: 0.8,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        Trace(vec![rec]).write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "slot,g_state,l_state,action,realized_cost,epsilon,beta");
        assert!(lines[1].starts_with("0,1,0,1 3,1.5"));
    }
}
