//! Content popularity profiles and the Markov chains that drive them.
//!
//! File indices are 0-based everywhere in the API; outputs meant for people
//! (CSV, CLI) render them 1-based.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Probability mass over the `F` files of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PopularityProfile(Vec<f64>);

impl PopularityProfile {
    /// Validates that `probs` is a non-empty probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProfile("empty catalog".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidProfile(format!("entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidProfile(format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    /// Uniform popularity over `f` files.
    pub fn uniform(f: usize) -> Result<Self> {
        if f == 0 {
            return Err(Error::InvalidProfile("empty catalog".into()));
        }
        Ok(Self(vec![1.0 / f as f64; f]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Catalog size `F`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total-variation distance `½ Σ |p - q|`.
    pub fn total_variation(&self, other: &PopularityProfile) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(0.5
            * self
                .0
                .iter()
                .zip(&other.0)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }
}

impl TryFrom<Vec<f64>> for PopularityProfile {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PopularityProfile> for Vec<f64> {
    fn from(p: PopularityProfile) -> Self {
        p.0
    }
}

/// Zipf popularity: the file ranked `r`-th (1-based) gets mass proportional
/// to `1 / r^eta`. `ordering[r]` names the file holding rank `r + 1`.
pub fn zipf_profile(f: usize, eta: f64, ordering: &[usize]) -> Result<PopularityProfile> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidExponent(eta));
    }
    if f == 0 {
        return Err(Error::InvalidProfile("empty catalog".into()));
    }
    check_permutation(ordering, f)?;

    let weights: Vec<f64> = (1..=f).map(|rank| (rank as f64).powf(-eta)).collect();
    let norm: f64 = weights.iter().sum();
    let mut probs = vec![0.0; f];
    for (w, &file) in weights.iter().zip(ordering) {
        probs[file] = w / norm;
    }
    Ok(PopularityProfile(probs))
}

fn check_permutation(ordering: &[usize], f: usize) -> Result<()> {
    if ordering.len() != f {
        return Err(Error::InvalidPermutation(f));
    }
    let mut seen = vec![false; f];
    for &i in ordering {
        if i >= f || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidPermutation(f));
        }
    }
    Ok(())
}

/// Identity ordering `0..f`: file 0 is the most popular.
pub fn identity_ordering(f: usize) -> Vec<usize> {
    (0..f).collect()
}

/// Uniformly random ordering of `0..f`.
pub fn random_ordering<R: Rng + ?Sized>(f: usize, rng: &mut R) -> Vec<usize> {
    let mut ordering = identity_ordering(f);
    ordering.shuffle(rng);
    ordering
}

#[derive(Deserialize)]
struct RawChain {
    states: Vec<PopularityProfile>,
    transition: Vec<Vec<f64>>,
}

/// A finite set of popularity profiles with a row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain")]
pub struct MarkovChain {
    states: Vec<PopularityProfile>,
    transition: Vec<Vec<f64>>,
}

impl TryFrom<RawChain> for MarkovChain {
    type Error = Error;

    fn try_from(raw: RawChain) -> Result<Self> {
        Self::new(raw.states, raw.transition)
    }
}

impl MarkovChain {
    pub fn new(states: Vec<PopularityProfile>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidChain("no states".into()));
        }
        let f = states[0].len();
        if states.iter().any(|s| s.len() != f) {
            return Err(Error::InvalidChain("states have different catalog sizes".into()));
        }
        if transition.len() != n {
            return Err(Error::InvalidChain(format!(
                "transition has {} rows for {n} states",
                transition.len()
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidChain(format!("row {i} has {} entries", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidChain(format!("row {i} has an entry outside [0,1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidChain(format!("row {i} sums to {total}")));
            }
        }
        Ok(Self { states, transition })
    }

    /// A chain that never leaves its single state.
    pub fn constant(profile: PopularityProfile) -> Self {
        Self {
            states: vec![profile],
            transition: vec![vec![1.0]],
        }
    }

    pub fn states(&self) -> &[PopularityProfile] {
        &self.states
    }

    pub fn state(&self, index: usize) -> &PopularityProfile {
        &self.states[index]
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Catalog size shared by every state.
    pub fn catalog_size(&self) -> usize {
        self.states[0].len()
    }

    /// Draws the next state index from row `current`.
    pub fn step<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> usize {
        let row = &self.transition[current];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = current;
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = j;
                if u < acc {
                    return j;
                }
            }
        }
        // Row sums can fall short of 1 by rounding.
        last_positive
    }

    /// One-step conditional mean profile `Σ_j P[current][j] · states[j]`.
    pub fn expected_next_profile(&self, current: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.catalog_size()];
        for (p, state) in self.transition[current].iter().zip(&self.states) {
            if *p == 0.0 {
                continue;
            }
            for (m, s) in mean.iter_mut().zip(state.probs()) {
                *m += p * s;
            }
        }
        mean
    }

    /// Index of the state closest to `profile` in total variation, lowest
    /// index on ties.
    pub fn quantize(&self, profile: &PopularityProfile) -> Result<usize> {
        check_dim(self.catalog_size(), profile.len())?;
        let mut best = (0, f64::INFINITY);
        for (i, state) in self.states.iter().enumerate() {
            let d = state.total_variation(profile)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Samples `step` from `chain`; free-function form of [`MarkovChain::step`].
pub fn step_chain<R: Rng + ?Sized>(chain: &MarkovChain, current: usize, rng: &mut R) -> Result<usize> {
    if current >= chain.num_states() {
        return Err(Error::IndexOutOfRange {
            index: current,
            len: chain.num_states(),
        });
    }
    Ok(chain.step(current, rng))
}

/// Per-file request counts observed in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestBatch {
    pub counts: Vec<u64>,
}

impl RequestBatch {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Draws `n` i.i.d. requests from `profile` and counts them per file.
///
/// Uses the conditional-binomial construction of the multinomial, so the
/// cost is `O(F)` regardless of `n`.
pub fn sample_requests<R: Rng + ?Sized>(
    profile: &PopularityProfile,
    n: u64,
    rng: &mut R,
) -> Result<RequestBatch> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let probs = profile.probs();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass_left = 1.0f64;
    let last = probs.len() - 1;
    for (f, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if f == last {
            counts[f] = remaining;
            break;
        }
        let q = if mass_left > 0.0 { (p / mass_left).clamp(0.0, 1.0) } else { 1.0 };
        let k = Binomial::new(remaining, q)
            .expect("probability clamped to [0,1]")
            .sample(rng);
        counts[f] = k;
        remaining -= k;
        mass_left -= p;
    }
    Ok(RequestBatch { counts })
}

/// Empirical profile `counts[f] / Σ counts`.
pub fn estimate_empirical(batch: &RequestBatch) -> Result<PopularityProfile> {
    let total = batch.total();
    if total == 0 || batch.counts.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let probs = batch
        .counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    Ok(PopularityProfile(probs))
}

/// Index of the chain state nearest to `profile` (total variation, lowest
/// index on ties).
pub fn quantize_to_state(profile: &PopularityProfile, chain: &MarkovChain) -> Result<usize> {
    chain.quantize(profile)
}

/// Chain whose states are Zipf profiles with the given exponents, each under
/// its own random file ordering.
pub fn zipf_chain<R: Rng + ?Sized>(
    f: usize,
    exponents: &[f64],
    transition: Vec<Vec<f64>>,
    rng: &mut R,
) -> Result<MarkovChain> {
    let states = exponents
        .iter()
        .map(|&eta| zipf_profile(f, eta, &random_ordering(f, rng)))
        .collect::<Result<Vec<_>>>()?;
    MarkovChain::new(states, transition)
}

/// Row-stochastic matrix with rows drawn from a symmetric Dirichlet(1).
pub fn random_transition<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|x: f64| x / total).collect()
        })
        .collect()
}

/// Random chain with `n` Zipf states whose exponents are uniform on
/// `[eta_lo, eta_hi)` and Dirichlet(1) transition rows.
pub fn random_zipf_chain<R: Rng + ?Sized>(
    n: usize,
    f: usize,
    eta_lo: f64,
    eta_hi: f64,
    rng: &mut R,
) -> Result<MarkovChain> {
    let exponents: Vec<f64> = (0..n).map(|_| rng.random_range(eta_lo..eta_hi)).collect();
    let transition = random_transition(n, rng);
    zipf_chain(f, &exponents, transition, rng)
}
