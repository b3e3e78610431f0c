//! Reference implementations used only by the tests.
//!
//! Everything here is built from raw profile and transition numbers with its
//! own action enumeration and its own Gaussian elimination, so it shares no
//! code path with the solver under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use cache_rl::caching::CostParams;
use cache_rl::popularity::{MarkovChain, PopularityProfile};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A caching MDP described by plain numbers.
#[derive(Debug, Clone)]
pub struct Instance {
    pub catalog: usize,
    pub capacity: usize,
    pub g_states: Vec<Vec<f64>>,
    pub l_states: Vec<Vec<f64>>,
    pub g_transition: Vec<Vec<f64>>,
    pub l_transition: Vec<Vec<f64>>,
    pub lambda: [f64; 3],
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng, catalog: usize, capacity: usize, ng: usize, nl: usize) -> Self {
        Self {
            catalog,
            capacity,
            g_states: (0..ng).map(|_| random_simplex(rng, catalog)).collect(),
            l_states: (0..nl).map(|_| random_simplex(rng, catalog)).collect(),
            g_transition: (0..ng).map(|_| random_simplex(rng, ng)).collect(),
            l_transition: (0..nl).map(|_| random_simplex(rng, nl)).collect(),
            lambda: [
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
            ],
        }
    }

    pub fn chains(&self) -> (MarkovChain, MarkovChain) {
        let chain = |states: &[Vec<f64>], t: &[Vec<f64>]| {
            MarkovChain::new(
                states
                    .iter()
                    .map(|p| PopularityProfile::new(p.clone()).unwrap())
                    .collect(),
                t.to_vec(),
            )
            .unwrap()
        };
        (
            chain(&self.g_states, &self.g_transition),
            chain(&self.l_states, &self.l_transition),
        )
    }

    pub fn params(&self) -> CostParams {
        CostParams::new(self.lambda[0], self.lambda[1], self.lambda[2]).unwrap()
    }

    pub fn ng(&self) -> usize {
        self.g_states.len()
    }

    pub fn nl(&self) -> usize {
        self.l_states.len()
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Explicit MDP: states `(g, l, a_prev)` indexed `(g·nl + l)·|A| + a_prev`.
#[derive(Debug, Clone)]
pub struct Mdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub actions: Vec<Vec<usize>>,
    /// `cost[s][a]`.
    pub cost: Vec<Vec<f64>>,
    /// `next[s][a]`: list of `(s', probability)`.
    pub next: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Mdp {
    pub fn build(inst: &Instance) -> Self {
        let actions = combinations(inst.catalog, inst.capacity);
        let na = actions.len();
        let (ng, nl) = (inst.ng(), inst.nl());
        let num_states = ng * nl * na;
        let mean = |states: &[Vec<f64>], row: &[f64]| -> Vec<f64> {
            (0..inst.catalog)
                .map(|f| row.iter().zip(states).map(|(p, s)| p * s[f]).sum())
                .collect()
        };
        let miss = |a: &[usize], p: &[f64]| -> f64 {
            (0..inst.catalog).filter(|f| !a.contains(f)).map(|f| p[f]).sum()
        };
        let mut cost = vec![vec![0.0; na]; num_states];
        let mut next = vec![vec![Vec::new(); na]; num_states];
        for g in 0..ng {
            let mg = mean(&inst.g_states, &inst.g_transition[g]);
            for l in 0..nl {
                let ml = mean(&inst.l_states, &inst.l_transition[l]);
                for prev in 0..na {
                    let s = (g * nl + l) * na + prev;
                    for (a, act) in actions.iter().enumerate() {
                        let fetched = act.iter().filter(|f| !actions[prev].contains(f)).count();
                        cost[s][a] = inst.lambda[0] * fetched as f64
                            + inst.lambda[1] * miss(act, &ml)
                            + inst.lambda[2] * miss(act, &mg);
                        for g2 in 0..ng {
                            for l2 in 0..nl {
                                let p = inst.g_transition[g][g2] * inst.l_transition[l][l2];
                                next[s][a].push(((g2 * nl + l2) * na + a, p));
                            }
                        }
                    }
                }
            }
        }
        Self {
            num_states,
            num_actions: na,
            actions,
            cost,
            next,
        }
    }

    /// `V^π` by Gaussian elimination with partial pivoting.
    pub fn evaluate(&self, policy: &[usize], gamma: f64) -> Vec<f64> {
        let n = self.num_states;
        let mut m = vec![vec![0.0; n + 1]; n];
        for s in 0..n {
            let a = policy[s];
            m[s][s] += 1.0;
            for &(s2, p) in &self.next[s][a] {
                m[s][s2] -= gamma * p;
            }
            m[s][n] = self.cost[s][a];
        }
        solve_augmented(m)
    }

    pub fn q_from_value(&self, v: &[f64], gamma: f64) -> Vec<Vec<f64>> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| {
                        self.cost[s][a]
                            + gamma * self.next[s][a].iter().map(|&(s2, p)| p * v[s2]).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    /// `max |Q(s,a) − c(s,a) − γ Σ p min_α Q(s',α)|`.
    pub fn bellman_residual(&self, q: &[Vec<f64>], gamma: f64) -> f64 {
        let mins: Vec<f64> = q
            .iter()
            .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect();
        let mut worst = 0.0f64;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let target = self.cost[s][a]
                    + gamma * self.next[s][a].iter().map(|&(s2, p)| p * mins[s2]).sum::<f64>();
                worst = worst.max((q[s][a] - target).abs());
            }
        }
        worst
    }
}

/// Solves the `n × (n+1)` augmented system.
pub fn solve_augmented(m: Vec<Vec<f64>>) -> Vec<f64> {
    let n = m.len();
    let mut flat: Vec<f64> = m.into_iter().flatten().collect();
    let mut x = vec![0.0; n];
    solve_flat(&mut flat, n, &mut x);
    x
}

/// Row-major `n × (n+1)` augmented system, eliminated in place.
fn solve_flat(m: &mut [f64], n: usize, x: &mut [f64]) {
    let w = n + 1;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * w + col].abs().total_cmp(&m[j * w + col].abs()))
            .unwrap();
        if pivot != col {
            for k in 0..w {
                m.swap(col * w + k, pivot * w + k);
            }
        }
        let d = m[col * w + col];
        for row in col + 1..n {
            let f = m[row * w + col] / d;
            if f != 0.0 {
                for k in col..w {
                    m[row * w + k] -= f * m[col * w + k];
                }
            }
        }
    }
    for row in (0..n).rev() {
        let mut acc = m[row * w + n];
        for k in row + 1..n {
            acc -= m[row * w + k] * x[k];
        }
        x[row] = acc / m[row * w + row];
    }
}

/// Result of a search over deterministic policies.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub policy: Vec<usize>,
    pub value: Vec<f64>,
    pub evaluated: u64,
}

/// Evaluates every one of the `|A|^|S|` deterministic policies and keeps the
/// one with the smallest total value (first found on ties). An optimal policy
/// minimizes every component, hence also the sum.
pub fn brute_force(mdp: &Mdp, gamma: f64) -> SearchResult {
    let n = mdp.num_states;
    let mut policy = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0u64;
    loop {
        let v = mdp.evaluate(&policy, gamma);
        evaluated += 1;
        let total: f64 = v.iter().sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, policy.clone()));
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == n {
                let (_, policy) = best.unwrap();
                let value = mdp.evaluate(&policy, gamma);
                return SearchResult {
                    policy,
                    value,
                    evaluated,
                };
            }
            policy[i] += 1;
            if policy[i] < mdp.num_actions {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
    }
}

/// Per-slice decision maps for single-file caches: in popularity state
/// `(g, l)` every previous file either stays or is replaced by one common
/// target `b`.
///
/// With `M = 1`, `Q*(g, l, a_prev, a) = λ1·1{a ≠ a_prev} + W(g, l, a)` where
/// `W` does not depend on `a_prev`. Any switch therefore goes to
/// `argmin_a W(g, l, a)`, so some optimal policy lies in this family.
pub fn stay_or_switch_maps(catalog: usize) -> Vec<Vec<usize>> {
    let mut maps = BTreeSet::new();
    for b in 0..catalog {
        for mask in 0u32..(1 << catalog) {
            if mask & (1 << b) != 0 {
                continue;
            }
            let map: Vec<usize> = (0..catalog)
                .map(|prev| if mask & (1 << prev) != 0 { b } else { prev })
                .collect();
            maps.insert(map);
        }
    }
    maps.into_iter().collect()
}

/// Exhaustive search over every policy built from [`stay_or_switch_maps`]
/// (one map per popularity state) for `M = 1`.
///
/// The last popularity slice varies innermost. For each combination of the
/// other slices their block of `I − γP` is solved once; the inner loop then
/// only solves the `F × F` Schur complement.
pub fn stay_or_switch_search(mdp: &Mdp, gamma: f64) -> SearchResult {
    let f = mdp.num_actions;
    assert!(mdp.actions.iter().all(|a| a.len() == 1), "single-file caches only");
    let slices = mdp.num_states / f;
    let maps = stay_or_switch_maps(f);
    let na = slices - 1;
    let n_a = na * f;
    let last = na;

    // Slice-to-slice transition weights, read off the explicit MDP.
    let mut t = vec![vec![0.0; slices]; slices];
    for k in 0..slices {
        for &(s2, p) in &mdp.next[k * f][0] {
            t[k][s2 / f] += p;
        }
    }

    let mut choice = vec![0usize; na];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0u64;
    loop {
        // Outer block: states of slices 0..na under `choice`.
        let policy_a: Vec<usize> = (0..n_a).map(|s| maps[choice[s / f]][s % f]).collect();
        let width = n_a + f + 1;
        let mut m = vec![vec![0.0; width]; n_a];
        for s in 0..n_a {
            let k = s / f;
            let a = policy_a[s];
            m[s][s] += 1.0;
            for k2 in 0..slices {
                let col = if k2 == last { n_a + a } else { k2 * f + a };
                m[s][col] -= gamma * t[k][k2];
            }
            m[s][width - 1] = mdp.cost[s][a];
        }
        // X = M_AA^{-1} [M_AB | c_A].
        let x = solve_multi(m, n_a, f + 1);
        let col_sum: Vec<f64> = (0..=f).map(|j| (0..n_a).map(|i| x[i][j]).sum()).collect();

        let mut sys = vec![0.0; f * (f + 1)];
        let mut v_b = vec![0.0; f];
        for map in &maps {
            // Schur complement S = M_BB − M_BA X_B, rhs = c_B − M_BA x_c.
            sys.fill(0.0);
            for p in 0..f {
                let s = last * f + p;
                let a = map[p];
                let r = &mut sys[p * (f + 1)..(p + 1) * (f + 1)];
                r[p] += 1.0;
                r[a] -= gamma * t[last][last];
                r[f] = mdp.cost[s][a];
                for k2 in 0..na {
                    let w = -gamma * t[last][k2];
                    for (dst, src) in r.iter_mut().zip(&x[k2 * f + a]) {
                        *dst -= w * src;
                    }
                }
            }
            solve_flat(&mut sys, f, &mut v_b);
            let total_a = col_sum[f] - (0..f).map(|j| col_sum[j] * v_b[j]).sum::<f64>();
            let total = total_a + v_b.iter().sum::<f64>();
            evaluated += 1;
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                let mut policy = policy_a.clone();
                policy.extend(map.iter().copied());
                best = Some((total, policy));
            }
        }

        let mut i = 0;
        loop {
            if i == na {
                let (_, policy) = best.unwrap();
                let value = mdp.evaluate(&policy, gamma);
                return SearchResult {
                    policy,
                    value,
                    evaluated,
                };
            }
            choice[i] += 1;
            if choice[i] < maps.len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Solves `A X = B` where `m = [A | B]` has `n` rows and `k` right-hand sides.
fn solve_multi(mut m: Vec<Vec<f64>>, n: usize, k: usize) -> Vec<Vec<f64>> {
    let w = n + k;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let d = m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / d;
            if f != 0.0 {
                for c in col..w {
                    m[row][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![vec![0.0; k]; n];
    for row in (0..n).rev() {
        for j in 0..k {
            let mut acc = m[row][n + j];
            for c in row + 1..n {
                acc -= m[row][c] * x[c][j];
            }
            x[row][j] = acc / m[row][row];
        }
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
