//! Exploration, step-size and cost-weight schedules.
//!
//! Slots are 0-based; the learning iteration index used by `1/t` schedules is
//! `t = slot + 1`.

use serde::{Deserialize, Serialize};

use crate::caching::CostParams;
use crate::{Error, Result};

/// Exploration probability `ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    Constant { value: f64 },
    /// `ε_t = 1/t`.
    Inverse,
    /// `ε_t = 1` for `t <= explore_slots`, then `0`.
    ExploreThenExploit { explore_slots: usize },
    /// `ε_t = 1` for `t <= explore_slots`, then `1/(t - explore_slots)`.
    ExploreThenInverse { explore_slots: usize },
}

impl EpsilonSchedule {
    pub fn at(&self, slot: usize) -> f64 {
        let t = slot + 1;
        match *self {
            EpsilonSchedule::Constant { value } => value,
            EpsilonSchedule::Inverse => 1.0 / t as f64,
            EpsilonSchedule::ExploreThenExploit { explore_slots } => {
                if t <= explore_slots {
                    1.0
                } else {
                    0.0
                }
            }
            EpsilonSchedule::ExploreThenInverse { explore_slots } => {
                if t <= explore_slots {
                    1.0
                } else {
                    1.0 / (t - explore_slots) as f64
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EpsilonSchedule::Constant { value } = *self {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidConfig(format!("epsilon {value} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Step size `β_t` of the tabular learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSize {
    Constant { value: f64 },
    /// `1 / (1 + n)` where `n` counts earlier updates of the same pair.
    VisitCount,
}

impl StepSize {
    pub fn at(&self, prior_visits: u32) -> f64 {
        match *self {
            StepSize::Constant { value } => value,
            StepSize::VisitCount => 1.0 / (1.0 + prior_visits as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let StepSize::Constant { value } = *self {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidConfig(format!("beta {value} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// One interval of a [`LambdaSchedule`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaInterval {
    /// First slot (inclusive) at which these weights apply.
    pub start: usize,
    #[serde(flatten)]
    pub params: CostParams,
}

/// Piecewise-constant cost weights over slots, left-closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LambdaInterval>", into = "Vec<LambdaInterval>")]
pub struct LambdaSchedule(Vec<LambdaInterval>);

impl LambdaSchedule {
    pub fn constant(params: CostParams) -> Self {
        Self(vec![LambdaInterval { start: 0, params }])
    }

    pub fn new(intervals: Vec<LambdaInterval>) -> Result<Self> {
        match intervals.first() {
            None => return Err(Error::InvalidConfig("empty lambda schedule".into())),
            Some(first) if first.start != 0 => {
                return Err(Error::InvalidConfig("lambda schedule must start at slot 0".into()))
            }
            _ => {}
        }
        if intervals.windows(2).any(|w| w[0].start >= w[1].start) {
            return Err(Error::InvalidConfig(
                "lambda schedule starts must be strictly increasing".into(),
            ));
        }
        for i in &intervals {
            i.params.validate()?;
        }
        Ok(Self(intervals))
    }

    pub fn intervals(&self) -> &[LambdaInterval] {
        &self.0
    }

    /// Weights active at `slot`.
    pub fn at(&self, slot: usize) -> &CostParams {
        let i = self.0.partition_point(|iv| iv.start <= slot);
        &self.0[i - 1].params
    }

    /// The single weight set, if the schedule never changes.
    pub fn as_constant(&self) -> Option<&CostParams> {
        match self.0.as_slice() {
            [only] => Some(&only.params),
            _ => None,
        }
    }
}

impl TryFrom<Vec<LambdaInterval>> for LambdaSchedule {
    type Error = Error;

    fn try_from(v: Vec<LambdaInterval>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LambdaSchedule> for Vec<LambdaInterval> {
    fn from(s: LambdaSchedule) -> Self {
        s.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedules() {
        assert_eq!(EpsilonSchedule::Constant { value: 0.05 }.at(123), 0.05);
        assert_eq!(EpsilonSchedule::Inverse.at(0), 1.0);
        assert_eq!(EpsilonSchedule::Inverse.at(3), 0.25);
        let e = EpsilonSchedule::ExploreThenExploit { explore_slots: 10 };
        assert_eq!(e.at(9), 1.0);
        assert_eq!(e.at(10), 0.0);
        let e = EpsilonSchedule::ExploreThenInverse {
            explore_slots: 700_000,
        };
        assert_eq!(e.at(699_999), 1.0);
        assert_eq!(e.at(700_000), 1.0);
        assert_eq!(e.at(700_001), 0.5);
        assert!(EpsilonSchedule::Constant { value: 1.5 }.validate().is_err());
    }

    #[test]
    fn step_sizes() {
        assert_eq!(StepSize::VisitCount.at(0), 1.0);
        assert_eq!(StepSize::VisitCount.at(3), 0.25);
        assert!(StepSize::Constant { value: 0.0 }.validate().is_err());
        assert!(StepSize::Constant { value: 1.0 }.validate().is_ok());
    }

    fn p(x: f64) -> CostParams {
        CostParams::new(x, x, x).unwrap()
    }

    #[test]
    fn lambda_boundaries_are_left_closed() {
        let s = LambdaSchedule::new(vec![
            LambdaInterval { start: 0, params: p(1.0) },
            LambdaInterval { start: 100, params: p(2.0) },
            LambdaInterval { start: 250, params: p(3.0) },
        ])
        .unwrap();
        assert_eq!(s.at(0).lambda1, 1.0);
        assert_eq!(s.at(99).lambda1, 1.0);
        assert_eq!(s.at(100).lambda1, 2.0);
        assert_eq!(s.at(249).lambda1, 2.0);
        assert_eq!(s.at(250).lambda1, 3.0);
        assert_eq!(s.at(10_000).lambda1, 3.0);
        assert!(s.as_constant().is_none());
        assert!(LambdaSchedule::constant(p(1.0)).as_constant().is_some());
    }

    #[test]
    fn lambda_schedule_validation() {
        assert!(LambdaSchedule::new(vec![]).is_err());
        assert!(LambdaSchedule::new(vec![LambdaInterval { start: 1, params: p(1.0) }]).is_err());
        assert!(LambdaSchedule::new(vec![
            LambdaInterval { start: 0, params: p(1.0) },
            LambdaInterval { start: 0, params: p(1.0) },
        ])
        .is_err());
    }

    #[test]
    fn lambda_schedule_json() {
        let s = LambdaSchedule::new(vec![
            LambdaInterval { start: 0, params: p(1.0) },
            LambdaInterval { start: 5, params: p(2.0) },
        ])
        .unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"lambda1\""));
        let back: LambdaSchedule = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
