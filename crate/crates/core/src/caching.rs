//! Cache actions, the feasible action set, and slot costs.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::popularity::{MarkovChain, PopularityProfile};
use crate::{Error, Result};

/// Largest action space the enumerating components (oracle, tabular learner)
/// accept.
pub const MAX_ENUMERABLE_ACTIONS: u128 = 1 << 24;

/// The set of `M` files held in a cache of capacity `M` over a catalog of `F`.
///
/// Files are 0-based and kept sorted, so equal sets compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheAction {
    catalog: usize,
    files: Vec<usize>,
}

impl CacheAction {
    /// Builds an action from any order of distinct 0-based file indices.
    pub fn new(catalog: usize, mut files: Vec<usize>) -> Result<Self> {
        files.sort_unstable();
        if files.is_empty() || files.len() > catalog {
            return Err(Error::InvalidCapacity {
                f: catalog,
                m: files.len(),
            });
        }
        if files.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidAction(format!("duplicate files in {files:?}")));
        }
        if let Some(&last) = files.last() {
            if last >= catalog {
                return Err(Error::InvalidAction(format!(
                    "file {last} outside catalog of {catalog}"
                )));
            }
        }
        Ok(Self { catalog, files })
    }

    /// Builds an action from 1-based file labels.
    pub fn from_labels(catalog: usize, labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidAction("file labels are 1-based".into()));
        }
        Self::new(catalog, labels.iter().map(|l| l - 1).collect())
    }

    /// Caches files `0..m`.
    pub fn first(catalog: usize, m: usize) -> Result<Self> {
        Self::new(catalog, (0..m).collect())
    }

    /// Trusted constructor for already sorted, distinct, in-range files.
    pub(crate) fn from_sorted(catalog: usize, files: Vec<usize>) -> Self {
        debug_assert!(files.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(files.last().is_some_and(|&f| f < catalog));
        Self { catalog, files }
    }

    pub fn files(&self) -> &[usize] {
        &self.files
    }

    /// Catalog size `F`.
    pub fn catalog_size(&self) -> usize {
        self.catalog
    }

    /// Cache capacity `M`.
    pub fn capacity(&self) -> usize {
        self.files.len()
    }

    pub fn contains(&self, file: usize) -> bool {
        self.files.binary_search(&file).is_ok()
    }

    /// The 0/1 vector form.
    pub fn indicator(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.catalog];
        for &f in &self.files {
            v[f] = 1.0;
        }
        v
    }

    /// `|self ∩ other|`.
    pub fn overlap(&self, other: &CacheAction) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.files.len() && j < other.files.len() {
            match self.files[i].cmp(&other.files[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// `|self \ other|`: files in `self` that `other` does not hold.
    pub fn newly_fetched(&self, other: &CacheAction) -> usize {
        self.files.len() - self.overlap(other)
    }

    /// `Σ_{f ∈ a} probs[f]`.
    pub fn cached_mass(&self, probs: &[f64]) -> f64 {
        self.files.iter().map(|&f| probs[f]).sum()
    }

    /// `Σ_{f ∉ a} probs[f]`, summed over the uncached files themselves.
    pub fn uncached_mass(&self, probs: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut next = self.files.iter().copied().peekable();
        for (f, p) in probs.iter().enumerate() {
            if next.peek() == Some(&f) {
                next.next();
            } else {
                total += p;
            }
        }
        total
    }

    /// Space-separated 1-based labels, e.g. `"1 3"`.
    pub fn labels(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CacheAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, file) in self.files.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", file + 1)?;
        }
        Ok(())
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) at every step.
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// `C(n, k)` for spaces known to be enumerable. Every intermediate value is
/// at most `C(n, min(k, n-k))` times `n`, far below `u64::MAX` there.
fn small_binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 0..k as u64 {
        c = c * (n as u64 - i) / (i + 1);
    }
    c
}

/// All `C(F, M)` feasible actions in lexicographic order.
///
/// Nothing is materialized: actions are ranked and unranked on demand, so the
/// space can describe catalogs far too large to enumerate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    catalog: usize,
    capacity: usize,
    len: u128,
}

impl ActionSpace {
    pub fn new(catalog: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || capacity > catalog {
            return Err(Error::InvalidCapacity {
                f: catalog,
                m: capacity,
            });
        }
        Ok(Self {
            catalog,
            capacity,
            len: binomial(catalog, capacity),
        })
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `C(F, M)`.
    pub fn len(&self) -> u128 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `len()` as a `usize` when the space is small enough to enumerate.
    pub fn enumerable_len(&self) -> Result<usize> {
        if self.len > MAX_ENUMERABLE_ACTIONS {
            return Err(Error::ActionSpaceTooLarge {
                f: self.catalog,
                m: self.capacity,
            });
        }
        Ok(self.len as usize)
    }

    /// Lexicographic rank of `action`.
    pub fn index_of(&self, action: &CacheAction) -> Result<usize> {
        let n = self.enumerable_len()?;
        check_dim(self.catalog, action.catalog_size())?;
        check_dim(self.capacity, action.capacity())?;
        let (f, m) = (self.catalog, self.capacity);
        let mut rank: u64 = 0;
        let mut start = 0;
        for (i, &c) in action.files().iter().enumerate() {
            // Σ_{j=start}^{c-1} C(f-1-j, m-1-i), summed by the hockey-stick
            // identity. Both terms count completions of a valid prefix, so
            // neither exceeds C(F, M).
            rank += small_binomial(f - start, m - i) - small_binomial(f - c, m - i);
            start = c + 1;
        }
        debug_assert!(rank < n as u64);
        Ok(rank as usize)
    }

    /// The action with lexicographic rank `index`.
    pub fn action_at(&self, index: usize) -> Result<CacheAction> {
        let n = self.enumerable_len()?;
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
        let (f, m) = (self.catalog, self.capacity);
        let mut rest = index as u64;
        let mut files = Vec::with_capacity(m);
        let mut j = 0;
        for i in 0..m {
            loop {
                let block = small_binomial(f - 1 - j, m - 1 - i);
                if rest < block {
                    break;
                }
                rest -= block;
                j += 1;
            }
            files.push(j);
            j += 1;
        }
        Ok(CacheAction::from_sorted(f, files))
    }

    /// Iterates the actions in lexicographic order.
    pub fn iter(&self) -> ActionIter {
        ActionIter {
            catalog: self.catalog,
            current: Some((0..self.capacity).collect()),
        }
    }

    /// Materializes every action, index-aligned with [`Self::index_of`].
    pub fn actions(&self) -> Result<Vec<CacheAction>> {
        self.enumerable_len()?;
        Ok(self.iter().collect())
    }

    /// Uniform draw from the space by sampling an `M`-subset directly.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> CacheAction {
        let mut files = rand::seq::index::sample(rng, self.catalog, self.capacity).into_vec();
        files.sort_unstable();
        CacheAction::from_sorted(self.catalog, files)
    }
}

pub struct ActionIter {
    catalog: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for ActionIter {
    type Item = CacheAction;

    fn next(&mut self) -> Option<CacheAction> {
        let current = self.current.take()?;
        let out = CacheAction::from_sorted(self.catalog, current.clone());
        let m = current.len();
        let mut next = current;
        // Rightmost position that can still advance.
        let mut i = m;
        while i > 0 {
            i -= 1;
            if next[i] < self.catalog - m + i {
                next[i] += 1;
                for k in i + 1..m {
                    next[k] = next[k - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// Weights of the three cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Per newly fetched file.
    pub lambda1: f64,
    /// Per unit of uncached local popularity.
    pub lambda2: f64,
    /// Per unit of uncached global popularity.
    pub lambda3: f64,
}

impl CostParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let p = Self {
            lambda1,
            lambda2,
            lambda3,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Global chain state, local chain state and the action currently cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub g: usize,
    pub l: usize,
    pub action: CacheAction,
}

/// `λ1 · |a_new \ a_prev|`.
pub fn refresh_cost(a_new: &CacheAction, a_prev: &CacheAction, lambda1: f64) -> Result<f64> {
    check_dim(a_prev.catalog_size(), a_new.catalog_size())?;
    check_dim(a_prev.capacity(), a_new.capacity())?;
    Ok(lambda1 * a_new.newly_fetched(a_prev) as f64)
}

/// `λ · Σ_{f ∉ a} profile[f]`.
pub fn mismatch_cost(a: &CacheAction, profile: &PopularityProfile, lambda: f64) -> Result<f64> {
    check_dim(a.catalog_size(), profile.len())?;
    Ok(lambda * a.uncached_mass(profile.probs()))
}

/// Realized cost of moving from `prev` to action `a` once the next global and
/// local profiles are revealed.
pub fn aggregate_cost(
    prev: &SystemState,
    a: &CacheAction,
    pg_next: &PopularityProfile,
    pl_next: &PopularityProfile,
    params: &CostParams,
) -> Result<f64> {
    Ok(refresh_cost(a, &prev.action, params.lambda1)?
        + mismatch_cost(a, pl_next, params.lambda2)?
        + mismatch_cost(a, pg_next, params.lambda3)?)
}

/// Mean of [`aggregate_cost`] over the one-step transitions of both chains
/// from the states in `prev`.
pub fn expected_cost(
    prev: &SystemState,
    a: &CacheAction,
    g_chain: &MarkovChain,
    l_chain: &MarkovChain,
    params: &CostParams,
) -> Result<f64> {
    for (index, chain) in [(prev.g, g_chain), (prev.l, l_chain)] {
        if index >= chain.num_states() {
            return Err(Error::IndexOutOfRange {
                index,
                len: chain.num_states(),
            });
        }
    }
    check_dim(a.catalog_size(), g_chain.catalog_size())?;
    check_dim(a.catalog_size(), l_chain.catalog_size())?;
    let mean_l = l_chain.expected_next_profile(prev.l);
    let mean_g = g_chain.expected_next_profile(prev.g);
    Ok(refresh_cost(a, &prev.action, params.lambda1)?
        + params.lambda2 * a.uncached_mass(&mean_l)
        + params.lambda3 * a.uncached_mass(&mean_g))
}
