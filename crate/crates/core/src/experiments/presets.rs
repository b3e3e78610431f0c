//! Built-in networks and scenarios.

use crate::caching::CostParams;
use crate::env::Revelation;
use crate::popularity::{random_ordering, random_zipf_chain, zipf_profile, MarkovChain};
use crate::schedule::{EpsilonSchedule, LambdaInterval, LambdaSchedule, StepSize};
use crate::{rng_from_seed, Error, Result};

use super::{LearnerSpec, Scenario};

/// Seed from which the preset networks draw their random parts.
pub const NETWORK_SEED: u64 = 2017;

pub const SMALL_CATALOG: usize = 10;
pub const SMALL_CAPACITY: usize = 2;
pub const SMALL_GLOBAL_EXPONENTS: [f64; 2] = [1.0, 1.5];
pub const SMALL_LOCAL_EXPONENTS: [f64; 2] = [0.7, 2.5];

pub const LARGE_CATALOG: usize = 1000;
pub const LARGE_CAPACITY: usize = 10;
pub const LARGE_GLOBAL_STATES: usize = 50;
pub const LARGE_LOCAL_STATES: usize = 40;
pub const LARGE_EXPONENT_RANGE: (f64, f64) = (2.0, 4.0);
pub const LARGE_EXPLORE_SLOTS: usize = 700_000;

/// Linear step size of the small-network presets.
pub const SMALL_ALPHA: f64 = 0.005;

/// Linear step size for the large network. Each update moves `Q̂` by about
/// `2 α (F − M) ê`, so the small-network step is rescaled by
/// `(10 − 2) / (1000 − 10)`; `0.005` itself diverges here.
pub const LARGE_ALPHA: f64 = SMALL_ALPHA * (SMALL_CATALOG - SMALL_CAPACITY) as f64
    / (LARGE_CATALOG - LARGE_CAPACITY) as f64;

/// Cost weights `(λ1, λ2, λ3)` of the named scenarios.
pub const WEIGHTS: [(&str, [f64; 3]); 9] = [
    ("s1", [10.0, 600.0, 1000.0]),
    ("s2", [600.0, 10.0, 1000.0]),
    ("s3", [10.0, 10.0, 1000.0]),
    ("s4", [0.0, 1000.0, 0.0]),
    ("s5", [0.0, 0.0, 1000.0]),
    ("s6", [60.0, 10.0, 10.0]),
    ("s7", [100.0, 20.0, 20.0]),
    ("s8", [0.0, 0.0, 1000.0]),
    ("s9", [0.0, 1000.0, 600.0]),
];

pub fn weights(name: &str) -> Option<CostParams> {
    WEIGHTS.iter().find(|(n, _)| *n == name).map(|(_, w)| CostParams {
        lambda1: w[0],
        lambda2: w[1],
        lambda3: w[2],
    })
}

/// Two-state global and local chains over 10 files. Each state is a Zipf
/// profile over its own random file ordering drawn from `seed`.
pub fn small_network(seed: u64) -> Result<(MarkovChain, MarkovChain)> {
    let mut rng = rng_from_seed(seed);
    let mut states = |exponents: &[f64]| -> Result<Vec<_>> {
        exponents
            .iter()
            .map(|&eta| zipf_profile(SMALL_CATALOG, eta, &random_ordering(SMALL_CATALOG, &mut rng)))
            .collect()
    };
    let g = MarkovChain::new(
        states(&SMALL_GLOBAL_EXPONENTS)?,
        vec![vec![0.8, 0.2], vec![0.75, 0.25]],
    )?;
    let l = MarkovChain::new(
        states(&SMALL_LOCAL_EXPONENTS)?,
        vec![vec![0.6, 0.4], vec![0.2, 0.8]],
    )?;
    Ok((g, l))
}

/// 50 global and 40 local states over 1000 files with random transitions
/// and Zipf exponents uniform on `(2, 4)`.
pub fn large_network(seed: u64) -> Result<(MarkovChain, MarkovChain)> {
    let mut rng = rng_from_seed(seed);
    let (lo, hi) = LARGE_EXPONENT_RANGE;
    let g = random_zipf_chain(LARGE_GLOBAL_STATES, LARGE_CATALOG, lo, hi, &mut rng)?;
    let l = random_zipf_chain(LARGE_LOCAL_STATES, LARGE_CATALOG, lo, hi, &mut rng)?;
    Ok((g, l))
}

/// Tabular learner with constant `β` and `ε`.
pub fn exact_learner(beta: f64, epsilon: f64) -> LearnerSpec {
    LearnerSpec::Exact {
        beta: StepSize::Constant { value: beta },
        epsilon: EpsilonSchedule::Constant { value: epsilon },
    }
}

/// Linear learner with one step size for all three blocks.
pub fn linear_learner(alpha: f64, epsilon: EpsilonSchedule) -> LearnerSpec {
    LearnerSpec::Linear {
        alpha_g: alpha,
        alpha_l: alpha,
        alpha_r: alpha,
        epsilon,
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 10] = ["s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "dynamic"];

/// One-line description of a preset.
pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "s1" | "s2" | "s3" | "s4" | "s5" => "small network, tabular learner (beta 0.8, epsilon 0.05)",
        "s6" => "small network, tabular learner (beta 0.7), pure exploration with Q-error tracking",
        "s7" | "s8" | "s9" => "large network, linear learner (alpha 4.04e-5), explore 7e5 slots then 1/t",
        "dynamic" => "small network, linear learner, illustrative piecewise-constant weights",
        _ => return None,
    })
}

/// Builds a named scenario.
pub fn preset(name: &str) -> Result<Scenario> {
    let unknown = || Error::InvalidConfig(format!("unknown preset {name:?}"));
    if name == "dynamic" {
        return dynamic();
    }
    let params = weights(name).ok_or_else(unknown)?;
    let index: usize = name[1..].parse().map_err(|_| unknown())?;
    let description = describe(name).unwrap_or_default().to_string();
    let scenario = if index <= 6 {
        let (g_chain, l_chain) = small_network(NETWORK_SEED)?;
        let (learner, oracle_every) = if index == 6 {
            (
                LearnerSpec::Exact {
                    beta: StepSize::Constant { value: 0.7 },
                    epsilon: EpsilonSchedule::Constant { value: 1.0 },
                },
                Some(1000),
            )
        } else {
            (exact_learner(0.8, 0.05), None)
        };
        Scenario {
            name: name.to_string(),
            description,
            g_chain,
            l_chain,
            capacity: SMALL_CAPACITY,
            gamma: super::DEFAULT_GAMMA,
            lambda_schedule: LambdaSchedule::constant(params),
            learner,
            horizon: 100_000,
            realizations: 1000,
            base_seed: 1,
            revelation: Revelation::ChainState,
            oracle_every,
            summary_window: 10_000,
        }
    } else {
        let (g_chain, l_chain) = large_network(NETWORK_SEED)?;
        Scenario {
            name: name.to_string(),
            description,
            g_chain,
            l_chain,
            capacity: LARGE_CAPACITY,
            gamma: super::DEFAULT_GAMMA,
            lambda_schedule: LambdaSchedule::constant(params),
            learner: linear_learner(
                LARGE_ALPHA,
                EpsilonSchedule::ExploreThenInverse {
                    explore_slots: LARGE_EXPLORE_SLOTS,
                },
            ),
            horizon: 1_000_000,
            realizations: 10,
            base_seed: 1,
            revelation: Revelation::ChainState,
            oracle_every: None,
            summary_window: 10_000,
        }
    };
    Ok(scenario)
}

fn dynamic() -> Result<Scenario> {
    let (g_chain, l_chain) = small_network(NETWORK_SEED)?;
    let interval = |start, name| -> Result<LambdaInterval> {
        Ok(LambdaInterval {
            start,
            params: weights(name).ok_or_else(|| Error::InvalidConfig(name.to_string()))?,
        })
    };
    let schedule = LambdaSchedule::new(vec![
        interval(0, "s4")?,
        interval(25_000, "s5")?,
        interval(50_000, "s6")?,
        interval(75_000, "s4")?,
    ])?;
    Ok(Scenario {
        name: "dynamic".into(),
        description: describe("dynamic").unwrap_or_default().to_string(),
        g_chain,
        l_chain,
        capacity: SMALL_CAPACITY,
        gamma: super::DEFAULT_GAMMA,
        lambda_schedule: schedule,
        learner: linear_learner(SMALL_ALPHA, EpsilonSchedule::Constant { value: 0.05 }),
        horizon: 100_000,
        realizations: 200,
        base_seed: 1,
        revelation: Revelation::ChainState,
        oracle_every: None,
        summary_window: 10_000,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_table() {
        let expected = [
            (10.0, 600.0, 1000.0),
            (600.0, 10.0, 1000.0),
            (10.0, 10.0, 1000.0),
            (0.0, 1000.0, 0.0),
            (0.0, 0.0, 1000.0),
            (60.0, 10.0, 10.0),
            (100.0, 20.0, 20.0),
            (0.0, 0.0, 1000.0),
            (0.0, 1000.0, 600.0),
        ];
        for (i, (l1, l2, l3)) in expected.into_iter().enumerate() {
            let p = weights(&format!("s{}", i + 1)).unwrap();
            assert_eq!((p.lambda1, p.lambda2, p.lambda3), (l1, l2, l3));
        }
        assert!(weights("s10").is_none());
    }

    #[test]
    fn small_network_shape() {
        let (g, l) = small_network(NETWORK_SEED).unwrap();
        assert_eq!(g.catalog_size(), 10);
        assert_eq!(g.transition()[1], vec![0.75, 0.25]);
        assert_eq!(l.transition()[0], vec![0.6, 0.4]);
        // Zipf(1) over 10 files: the top file holds 1/H_10.
        let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        let top = g.state(0).probs().iter().cloned().fold(0.0, f64::max);
        assert!((top - 1.0 / h10).abs() < 1e-12);
        assert_eq!(small_network(NETWORK_SEED).unwrap(), (g, l));
    }

    #[test]
    fn every_preset_builds() {
        for name in PRESET_NAMES {
            if name.starts_with('s') && name[1..].parse::<usize>().unwrap() >= 7 {
                continue;
            }
            let s = preset(name).unwrap();
            s.validate().unwrap();
            assert_eq!(s.name, name);
            assert!(describe(name).is_some());
        }
        assert!(preset("s0").is_err());
        assert!(preset("bogus").is_err());
    }

    #[test]
    fn large_preset_dimensions() {
        let s = preset("s7").unwrap();
        assert_eq!(s.g_chain.num_states(), 50);
        assert_eq!(s.l_chain.num_states(), 40);
        assert_eq!(s.g_chain.catalog_size(), 1000);
        assert_eq!(s.capacity, 10);
        s.validate().unwrap();
    }
}
