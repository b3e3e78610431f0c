//! Scalable Q-learning with a linear Q-function approximation.
//!
//! `Q̂(s, a') = ψ(s)ᵀ (1 − a')` with
//! `ψ(s) = Θ^G[g] + Θ^L[l] + θ^R · a_prev`. The greedy action caches the `M`
//! files with the largest `ψ` entries, so the action space is never
//! enumerated.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caching::{ActionSpace, CacheAction, SystemState};
use crate::csv_util::{sig17, write_lines};
use crate::env::{run_traced, Agent, Environment, Trace};
use crate::error::check_dim;
use crate::oracle::{QTable, StateSpace};
use crate::schedule::{EpsilonSchedule, LambdaSchedule};
use crate::{Error, Result, SimRng};

/// `Θ^G` (`|P_G| × F`), `Θ^L` (`|P_L| × F`) and `θ^R`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    num_g: usize,
    num_l: usize,
    catalog: usize,
    theta_g: Vec<f64>,
    theta_l: Vec<f64>,
    pub theta_r: f64,
}

impl LinearParams {
    pub fn zeros(num_g: usize, num_l: usize, catalog: usize) -> Self {
        Self {
            num_g,
            num_l,
            catalog,
            theta_g: vec![0.0; num_g * catalog],
            theta_l: vec![0.0; num_l * catalog],
            theta_r: 0.0,
        }
    }

    pub fn num_g(&self) -> usize {
        self.num_g
    }

    pub fn num_l(&self) -> usize {
        self.num_l
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog
    }

    /// `(|P_G| + |P_L|) F + 1`.
    pub fn num_parameters(&self) -> usize {
        self.theta_g.len() + self.theta_l.len() + 1
    }

    pub fn theta_g(&self, g: usize) -> &[f64] {
        &self.theta_g[g * self.catalog..(g + 1) * self.catalog]
    }

    pub fn theta_g_mut(&mut self, g: usize) -> &mut [f64] {
        &mut self.theta_g[g * self.catalog..(g + 1) * self.catalog]
    }

    pub fn theta_l(&self, l: usize) -> &[f64] {
        &self.theta_l[l * self.catalog..(l + 1) * self.catalog]
    }

    pub fn theta_l_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.theta_l[l * self.catalog..(l + 1) * self.catalog]
    }

    /// Every parameter, `Θ^G` then `Θ^L` then `θ^R`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        v.extend_from_slice(&self.theta_g);
        v.extend_from_slice(&self.theta_l);
        v.push(self.theta_r);
        v
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.theta_g.iter_mut().for_each(|x| *x *= c);
        p.theta_l.iter_mut().for_each(|x| *x *= c);
        p.theta_r *= c;
        p
    }

    pub fn is_finite(&self) -> bool {
        self.theta_r.is_finite()
            && self.theta_g.iter().all(|x| x.is_finite())
            && self.theta_l.iter().all(|x| x.is_finite())
    }

    fn check_state(&self, s: &SystemState) -> Result<()> {
        check_dim(self.catalog, s.action.catalog_size())?;
        if s.g >= self.num_g {
            return Err(Error::IndexOutOfRange {
                index: s.g,
                len: self.num_g,
            });
        }
        if s.l >= self.num_l {
            return Err(Error::IndexOutOfRange {
                index: s.l,
                len: self.num_l,
            });
        }
        Ok(())
    }

    /// Writes `ψ(s)` into `out`.
    pub fn psi_into(&self, s: &SystemState, out: &mut Vec<f64>) -> Result<()> {
        self.check_state(s)?;
        out.clear();
        out.extend(
            self.theta_g(s.g)
                .iter()
                .zip(self.theta_l(s.l))
                .map(|(x, y)| x + y),
        );
        for &f in s.action.files() {
            out[f] += self.theta_r;
        }
        Ok(())
    }

    pub fn psi(&self, s: &SystemState) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.catalog);
        self.psi_into(s, &mut out)?;
        Ok(out)
    }

    /// `ψ(s)ᵀ (1 − a')`.
    pub fn q_hat(&self, s: &SystemState, a_next: &CacheAction) -> Result<f64> {
        check_dim(self.catalog, a_next.catalog_size())?;
        let psi = self.psi(s)?;
        Ok(uncached_sum(&psi, a_next))
    }

    /// Greedy action at `s` and its `Q̂` value.
    pub fn greedy(&self, s: &SystemState, capacity: usize, scratch: &mut Scratch) -> Result<(CacheAction, f64)> {
        self.psi_into(s, &mut scratch.psi)?;
        let files = top_m(&scratch.psi, capacity, &mut scratch.order)?;
        let total: f64 = scratch.psi.iter().sum();
        let kept: f64 = files.iter().map(|&f| scratch.psi[f]).sum();
        Ok((CacheAction::from_sorted(self.catalog, files), total - kept))
    }

    /// `min_{a'} Q̂(s, a')`.
    pub fn min_q(&self, s: &SystemState, capacity: usize, scratch: &mut Scratch) -> Result<f64> {
        self.greedy(s, capacity, scratch).map(|(_, q)| q)
    }

    /// `Q̂` over every state-action pair of an enumerated space.
    pub fn materialize(&self, space: &StateSpace) -> Result<QTable> {
        check_dim(self.num_g, space.g_chain().num_states())?;
        check_dim(self.num_l, space.l_chain().num_states())?;
        check_dim(self.catalog, space.g_chain().catalog_size())?;
        let actions = space.actions();
        let mut values = Vec::with_capacity(space.num_states() * actions.len());
        let mut psi = Vec::with_capacity(self.catalog);
        for s in 0..space.num_states() {
            self.psi_into(&space.state(s), &mut psi)?;
            values.extend(actions.iter().map(|a| uncached_sum(&psi, a)));
        }
        Ok(QTable::from_fn(space.num_states(), actions.len(), |s, a| {
            values[s * actions.len() + a]
        }))
    }

    /// CSV `block,row,f1..fF`; block is `G`, `L` or `R`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = std::iter::once("block,row".to_string())
            .chain((1..=self.catalog).map(|f| format!("f{f}")))
            .collect::<Vec<_>>()
            .join(",");
        let row = |block: &str, i: usize, values: &[f64]| {
            let mut line = format!("{block},{i}");
            for v in values {
                line.push(',');
                line.push_str(&sig17(*v));
            }
            line
        };
        let g = (0..self.num_g).map(|i| row("G", i, self.theta_g(i)));
        let l = (0..self.num_l).map(|i| row("L", i, self.theta_l(i)));
        let r = std::iter::once(row("R", 0, &[self.theta_r]));
        write_lines(path, std::iter::once(header).chain(g).chain(l).chain(r))
    }
}

fn uncached_sum(psi: &[f64], a: &CacheAction) -> f64 {
    let total: f64 = psi.iter().sum();
    total - a.files().iter().map(|&f| psi[f]).sum::<f64>()
}

/// Reusable buffers for [`LinearParams::greedy`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    psi: Vec<f64>,
    order: Vec<usize>,
}

/// Indices of the `m` largest entries, ties to the lowest index, sorted.
pub fn top_m(psi: &[f64], m: usize, order: &mut Vec<usize>) -> Result<Vec<usize>> {
    if m > psi.len() {
        return Err(Error::InvalidCapacity { f: psi.len(), m });
    }
    order.clear();
    order.extend(0..psi.len());
    let rank = |&i: &usize, &j: &usize| psi[j].total_cmp(&psi[i]).then(i.cmp(&j));
    if m > 0 && m < psi.len() {
        order.select_nth_unstable_by(m - 1, rank);
    }
    let mut files = order[..m].to_vec();
    files.sort_unstable();
    Ok(files)
}

/// Greedy action at `s`: cache the `capacity` files with the largest `ψ`.
pub fn greedy_top_m(params: &LinearParams, s: &SystemState, capacity: usize) -> Result<CacheAction> {
    params
        .greedy(s, capacity, &mut Scratch::default())
        .map(|(a, _)| a)
}

/// `ê = cost + γ min_{a'} Q̂(s_next, a') − Q̂(s_prev, a)`.
pub fn linear_td_error(
    params: &LinearParams,
    s_prev: &SystemState,
    a: &CacheAction,
    s_next: &SystemState,
    cost: f64,
    gamma: f64,
) -> Result<f64> {
    let target = cost + gamma * params.min_q(s_next, a.capacity(), &mut Scratch::default())?;
    Ok(target - params.q_hat(s_prev, a)?)
}

/// Gradient of `Q̂(s_prev, a)`: the `(1 − a)` rows for `Θ^G[g]` and
/// `Θ^L[l]`, and `a_prevᵀ (1 − a)` for `θ^R`.
pub fn prediction_gradient(s_prev: &SystemState, a: &CacheAction) -> (Vec<f64>, f64) {
    let row = a.indicator().into_iter().map(|x| 1.0 - x).collect();
    (row, s_prev.action.newly_fetched(a) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLearnerConfig {
    pub alpha_g: f64,
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub epsilon: EpsilonSchedule,
    pub gamma: f64,
}

impl LinearLearnerConfig {
    pub fn uniform_step(alpha: f64, epsilon: EpsilonSchedule, gamma: f64) -> Self {
        Self {
            alpha_g: alpha,
            alpha_l: alpha,
            alpha_r: alpha,
            epsilon,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_g", self.alpha_g),
            ("alpha_l", self.alpha_l),
            ("alpha_r", self.alpha_r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} {v} must be positive")));
            }
        }
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

/// In-place SGD step after observing TD error `e` for `(s_prev, a)`.
pub fn sgd_update(
    params: &mut LinearParams,
    s_prev: &SystemState,
    a: &CacheAction,
    e: f64,
    config: &LinearLearnerConfig,
) -> Result<()> {
    if !e.is_finite() {
        return Err(Error::Divergence {
            slot: 0,
            detail: format!("non-finite TD error {e}"),
        });
    }
    params.check_state(s_prev)?;
    check_dim(params.catalog, a.catalog_size())?;
    let dg = config.alpha_g * e;
    let dl = config.alpha_l * e;
    let cached = a.files();
    let mut next = cached.iter().peekable();
    let mut uncached = Vec::with_capacity(params.catalog - cached.len());
    for f in 0..params.catalog {
        if next.peek() == Some(&&f) {
            next.next();
        } else {
            uncached.push(f);
        }
    }
    let row = params.theta_g_mut(s_prev.g);
    for &f in &uncached {
        row[f] += dg;
    }
    let row = params.theta_l_mut(s_prev.l);
    for &f in &uncached {
        row[f] += dl;
    }
    params.theta_r += config.alpha_r * e * s_prev.action.newly_fetched(a) as f64;
    Ok(())
}

/// ε-greedy learner over [`LinearParams`].
#[derive(Debug, Clone)]
pub struct LinearLearner {
    config: LinearLearnerConfig,
    space: ActionSpace,
    params: LinearParams,
    scratch: Scratch,
}

impl LinearLearner {
    pub fn new(config: LinearLearnerConfig, num_g: usize, num_l: usize, space: ActionSpace) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params: LinearParams::zeros(num_g, num_l, space.catalog_size()),
            space,
            scratch: Scratch::default(),
        })
    }

    pub fn params(&self) -> &LinearParams {
        &self.params
    }

    pub fn into_params(self) -> LinearParams {
        self.params
    }

    pub fn config(&self) -> &LinearLearnerConfig {
        &self.config
    }
}

impl Agent for LinearLearner {
    fn act(&mut self, state: &SystemState, slot: usize, rng: &mut SimRng) -> Result<CacheAction> {
        use rand::Rng;
        let eps = self.config.epsilon.at(slot);
        if eps > 0.0 && rng.random::<f64>() < eps {
            return Ok(self.space.sample_uniform(rng));
        }
        let (a, _) = self
            .params
            .greedy(state, self.space.capacity(), &mut self.scratch)?;
        Ok(a)
    }

    fn learn(
        &mut self,
        prev: &SystemState,
        action: &CacheAction,
        next: &SystemState,
        cost: f64,
        slot: usize,
    ) -> Result<f64> {
        let min_next = self
            .params
            .min_q(next, self.space.capacity(), &mut self.scratch)?;
        self.params.psi_into(prev, &mut self.scratch.psi)?;
        let predicted = uncached_sum(&self.scratch.psi, action);
        let e = cost + self.config.gamma * min_next - predicted;
        sgd_update(&mut self.params, prev, action, e, &self.config).map_err(|err| match err {
            Error::Divergence { detail, .. } => Error::Divergence { slot, detail },
            other => other,
        })?;
        Ok(self.config.alpha_g)
    }

    fn epsilon(&self, slot: usize) -> f64 {
        self.config.epsilon.at(slot)
    }

    fn q_estimate(&self, space: &StateSpace) -> Option<QTable> {
        self.params.materialize(space).ok()
    }
}

/// Runs a fresh linear learner for `horizon` slots.
pub fn run_linear(
    config: LinearLearnerConfig,
    env: &mut Environment<'_>,
    costs: &LambdaSchedule,
    capacity: usize,
    horizon: usize,
    env_rng: &mut SimRng,
    agent_rng: &mut SimRng,
) -> Result<(Trace, LinearParams)> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let space = ActionSpace::new(env.catalog_size(), capacity)?;
    let mut learner = LinearLearner::new(
        config,
        env.g_chain.num_states(),
        env.l_chain.num_states(),
        space,
    )?;
    let trace = run_traced(&mut learner, env, costs, capacity, horizon, env_rng, agent_rng)?;
    Ok((trace, learner.into_params()))
}
