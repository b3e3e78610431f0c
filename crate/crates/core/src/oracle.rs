//! The caching MDP with known transition probabilities, solved exactly.
//!
//! States are triples `(g, l, a)`: global chain state, local chain state and
//! the cached action. Both chains evolve independently of the action, and
//! choosing action `a'` makes `a'` the action component of the next state, so
//!
//! ```text
//! P[(g,l,a) -> (g',l',a'') | a'] = PG[g][g'] · PL[l][l'] · 1{a'' = a'}
//! ```
//!
//! Policy evaluation is a dense direct solve of `(I - γ P^π) V = c̄^π`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::caching::{ActionSpace, CacheAction, CostParams, SystemState};
use crate::csv_util::{sig17, write_lines};
use crate::error::check_dim;
use crate::popularity::MarkovChain;
use crate::{Error, Result};

const MAX_POLICY_ITERATIONS: usize = 10_000;

/// Enumerated state space `P_G × P_L × A`, indexed g-major, then l, then action.
#[derive(Debug, Clone)]
pub struct StateSpace {
    g_chain: MarkovChain,
    l_chain: MarkovChain,
    space: ActionSpace,
    actions: Vec<CacheAction>,
    // uncached_g[g][a] = (1 - a)ᵀ E[p_G' | g], likewise for l.
    uncached_g: Vec<Vec<f64>>,
    uncached_l: Vec<Vec<f64>>,
    // fetched[a_prev][a] = |a \ a_prev|
    fetched: Vec<Vec<f64>>,
}

impl StateSpace {
    pub fn new(g_chain: MarkovChain, l_chain: MarkovChain, capacity: usize) -> Result<Self> {
        check_dim(g_chain.catalog_size(), l_chain.catalog_size())?;
        let space = ActionSpace::new(g_chain.catalog_size(), capacity)?;
        let actions = space.actions()?;
        let uncached = |chain: &MarkovChain| -> Vec<Vec<f64>> {
            (0..chain.num_states())
                .map(|i| {
                    let mean = chain.expected_next_profile(i);
                    actions.iter().map(|a| a.uncached_mass(&mean)).collect()
                })
                .collect()
        };
        let uncached_g = uncached(&g_chain);
        let uncached_l = uncached(&l_chain);
        let fetched = actions
            .iter()
            .map(|prev| actions.iter().map(|a| a.newly_fetched(prev) as f64).collect())
            .collect();
        Ok(Self {
            g_chain,
            l_chain,
            space,
            actions,
            uncached_g,
            uncached_l,
            fetched,
        })
    }

    pub fn g_chain(&self) -> &MarkovChain {
        &self.g_chain
    }

    pub fn l_chain(&self) -> &MarkovChain {
        &self.l_chain
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    /// Actions in index order.
    pub fn actions(&self) -> &[CacheAction] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_states(&self) -> usize {
        self.g_chain.num_states() * self.l_chain.num_states() * self.actions.len()
    }

    /// Index of `(g, l, action index)`.
    pub fn index(&self, g: usize, l: usize, a: usize) -> usize {
        (g * self.l_chain.num_states() + l) * self.actions.len() + a
    }

    /// `(g, l, action index)` of state `s`.
    pub fn decompose(&self, s: usize) -> (usize, usize, usize) {
        let na = self.actions.len();
        let nl = self.l_chain.num_states();
        (s / (na * nl), (s / na) % nl, s % na)
    }

    pub fn state_index(&self, state: &SystemState) -> Result<usize> {
        self.check_chain_indices(state.g, state.l)?;
        let a = self.space.index_of(&state.action)?;
        Ok(self.index(state.g, state.l, a))
    }

    pub fn state(&self, s: usize) -> SystemState {
        let (g, l, a) = self.decompose(s);
        SystemState {
            g,
            l,
            action: self.actions[a].clone(),
        }
    }

    fn check_chain_indices(&self, g: usize, l: usize) -> Result<()> {
        for (index, len) in [(g, self.g_chain.num_states()), (l, self.l_chain.num_states())] {
            if index >= len {
                return Err(Error::IndexOutOfRange { index, len });
            }
        }
        Ok(())
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.num_states() {
            return Err(Error::IndexOutOfRange {
                index: s,
                len: self.num_states(),
            });
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.num_actions() {
            return Err(Error::IndexOutOfRange {
                index: a,
                len: self.num_actions(),
            });
        }
        Ok(())
    }

    /// One-step expected cost `c̄(s, a)` under constant weights.
    pub fn expected_cost(&self, s: usize, a: usize, params: &CostParams) -> f64 {
        let (g, l, prev) = self.decompose(s);
        params.lambda1 * self.fetched[prev][a]
            + params.lambda2 * self.uncached_l[l][a]
            + params.lambda3 * self.uncached_g[g][a]
    }

    /// `Σ_{g',l'} PG[g][g'] · PL[l][l'] · values(g', l', a)` for every
    /// `(g, l, a)`, laid out like the state index.
    fn expected_next(&self, values: impl Fn(usize) -> f64) -> Vec<f64> {
        let (ng, nl, na) = (
            self.g_chain.num_states(),
            self.l_chain.num_states(),
            self.num_actions(),
        );
        let pg = self.g_chain.transition();
        let pl = self.l_chain.transition();
        let mut out = vec![0.0; ng * nl * na];
        for g in 0..ng {
            for l in 0..nl {
                let base = self.index(g, l, 0);
                for (g2, &p_g) in pg[g].iter().enumerate() {
                    if p_g == 0.0 {
                        continue;
                    }
                    for (l2, &p_l) in pl[l].iter().enumerate() {
                        let w = p_g * p_l;
                        if w == 0.0 {
                            continue;
                        }
                        let next = self.index(g2, l2, 0);
                        for a in 0..na {
                            out[base + a] += w * values(next + a);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Deterministic policy: an action index per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    /// Caches files `1..=M` everywhere (action index 0).
    pub fn initial(space: &StateSpace) -> Self {
        Policy(vec![0; space.num_states()])
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }
}

/// Discounted cost-to-go per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

/// Dense `|S| × |A|` table of state-action values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_fn(num_states: usize, num_actions: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.num_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lowest-index minimizer of row `s`.
    pub fn argmin(&self, s: usize) -> usize {
        argmin(self.row(s))
    }

    pub fn min(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Lowest index attaining the minimum.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `[P^a]_{s, s_next}`.
pub fn transition_prob(space: &StateSpace, s: usize, a: usize, s_next: usize) -> Result<f64> {
    space.check_state(s)?;
    space.check_state(s_next)?;
    space.check_action(a)?;
    let (g, l, _) = space.decompose(s);
    let (g2, l2, a2) = space.decompose(s_next);
    if a2 != a {
        return Ok(0.0);
    }
    Ok(space.g_chain.transition()[g][g2] * space.l_chain.transition()[l][l2])
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("discount {gamma} must lie in [0, 1)")));
    }
    Ok(())
}

/// Solves `V = c̄^π + γ P^π V` directly.
pub fn policy_evaluation(
    space: &StateSpace,
    policy: &Policy,
    gamma: f64,
    params: &CostParams,
) -> Result<ValueFunction> {
    check_gamma(gamma)?;
    let n = space.num_states();
    check_dim(n, policy.0.len())?;
    for &a in &policy.0 {
        space.check_action(a)?;
    }

    let pg = space.g_chain.transition();
    let pl = space.l_chain.transition();
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        let a = policy.0[s];
        rhs[s] = space.expected_cost(s, a, params);
        let (g, l, _) = space.decompose(s);
        for (g2, &p_g) in pg[g].iter().enumerate() {
            for (l2, &p_l) in pl[l].iter().enumerate() {
                system[(s, space.index(g2, l2, a))] -= gamma * p_g * p_l;
            }
        }
    }
    let solution = system.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    Ok(ValueFunction(solution.iter().copied().collect()))
}

/// `Q(s, a) = c̄(s, a) + γ Σ_{s'} [P^a]_{ss'} v(s')`.
pub fn q_from_value(
    space: &StateSpace,
    v: &ValueFunction,
    gamma: f64,
    params: &CostParams,
) -> Result<QTable> {
    check_dim(space.num_states(), v.0.len())?;
    let next = space.expected_next(|s| v.0[s]);
    let na = space.num_actions();
    Ok(QTable::from_fn(space.num_states(), na, |s, a| {
        let (g, l, _) = space.decompose(s);
        space.expected_cost(s, a, params) + gamma * next[space.index(g, l, a)]
    }))
}

/// Greedy policy of `q`, lowest action index on ties.
pub fn policy_improvement(space: &StateSpace, q: &QTable) -> Result<Policy> {
    check_dim(space.num_states(), q.num_states())?;
    check_dim(space.num_actions(), q.num_actions())?;
    Ok(Policy((0..q.num_states()).map(|s| q.argmin(s)).collect()))
}

/// Output of [`policy_iteration`].
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub policy: Policy,
    pub value: ValueFunction,
    pub q: QTable,
    /// Number of evaluate/improve rounds performed.
    pub iterations: usize,
}

/// Alternates evaluation and improvement until the policy is stable.
pub fn policy_iteration(
    space: &StateSpace,
    gamma: f64,
    params: &CostParams,
    initial: Policy,
) -> Result<OracleSolution> {
    check_gamma(gamma)?;
    params.validate()?;
    let mut policy = initial;
    for iteration in 1..=MAX_POLICY_ITERATIONS {
        let value = policy_evaluation(space, &policy, gamma, params)?;
        let q = q_from_value(space, &value, gamma, params)?;
        let improved = policy_improvement(space, &q)?;
        if improved == policy {
            return Ok(OracleSolution {
                policy,
                value,
                q,
                iterations: iteration,
            });
        }
        policy = improved;
    }
    Err(Error::NotConverged(MAX_POLICY_ITERATIONS))
}

/// Policy iteration from [`Policy::initial`].
pub fn solve(space: &StateSpace, gamma: f64, params: &CostParams) -> Result<OracleSolution> {
    policy_iteration(space, gamma, params, Policy::initial(space))
}

/// `max_{s,a} |Q(s,a) - c̄(s,a) - γ Σ_{s'} [P^a]_{ss'} min_α Q(s',α)|`.
pub fn bellman_optimality_residual(
    space: &StateSpace,
    q: &QTable,
    gamma: f64,
    params: &CostParams,
) -> Result<f64> {
    check_dim(space.num_states(), q.num_states())?;
    check_dim(space.num_actions(), q.num_actions())?;
    let mins: Vec<f64> = (0..q.num_states()).map(|s| q.min(s)).collect();
    let next = space.expected_next(|s| mins[s]);
    let mut worst = 0.0f64;
    for s in 0..q.num_states() {
        let (g, l, _) = space.decompose(s);
        for a in 0..q.num_actions() {
            let target = space.expected_cost(s, a, params) + gamma * next[space.index(g, l, a)];
            worst = worst.max((q.get(s, a) - target).abs());
        }
    }
    Ok(worst)
}

/// CSV with one row per state: `state,g_state,l_state,cached,action,files,value`.
pub fn write_policy_csv(
    space: &StateSpace,
    policy: &Policy,
    value: &ValueFunction,
    path: &Path,
) -> Result<()> {
    check_dim(space.num_states(), policy.0.len())?;
    check_dim(space.num_states(), value.0.len())?;
    let header = "state,g_state,l_state,cached,action,files,value".to_string();
    let rows = (0..space.num_states()).map(|s| {
        let (g, l, prev) = space.decompose(s);
        let a = policy.0[s];
        format!(
            "{s},{g},{l},{},{a},{},{}",
            space.actions[prev],
            space.actions[a],
            sig17(value.0[s])
        )
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

/// CSV with one row per state-action pair: `state,action,files,q`.
pub fn write_q_csv(space: &StateSpace, q: &QTable, path: &Path) -> Result<()> {
    check_dim(space.num_states(), q.num_states())?;
    check_dim(space.num_actions(), q.num_actions())?;
    let header = "state,action,files,q".to_string();
    let rows = (0..q.num_states()).flat_map(move |s| {
        (0..q.num_actions())
            .map(move |a| format!("{s},{a},{},{}", space.actions[a], sig17(q.get(s, a))))
    });
    write_lines(path, std::iter::once(header).chain(rows))
}
