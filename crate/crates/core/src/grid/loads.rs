//! Seeded skewed pulse loads, one asynchronous pulse train per node.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{LoadProfile, Pulse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLoad {
    pub node: usize,
    pub profile: LoadProfile,
}

/// Level and period sets the generator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewSpec {
    pub levels: Vec<f64>,
    pub periods: Vec<f64>,
    pub duty: f64,
    pub seed: u64,
}

impl Default for SkewSpec {
    fn default() -> Self {
        SkewSpec {
            levels: vec![2e-3, 5e-3, 10e-3, 15e-3, 20e-3],
            periods: vec![200e-9, 300e-9, 500e-9, 700e-9],
            duty: 0.5,
            seed: 1,
        }
    }
}

/// For each node: a high level and a low level (not above it) from
/// `levels`, a period from `periods`, and a uniform random phase.
pub fn skewed_loads(nodes: &[usize], spec: &SkewSpec) -> Result<Vec<NodeLoad>> {
    if spec.levels.is_empty() || spec.periods.is_empty() {
        return Err(Error::Config("skewed loads need at least one level and one period".into()));
    }
    if spec.levels.iter().any(|&l| !(l >= 0.0)) || spec.periods.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Config("load levels must be >= 0 and periods > 0".into()));
    }
    if !(spec.duty > 0.0 && spec.duty < 1.0) {
        return Err(Error::Config("load duty must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    nodes
        .iter()
        .map(|&node| {
            let a = *spec.levels.choose(&mut rng).expect("non-empty");
            let b = *spec.levels.choose(&mut rng).expect("non-empty");
            let period = *spec.periods.choose(&mut rng).expect("non-empty");
            let phase = rng.random_range(0.0..period);
            let pulse = Pulse { period, duty: spec.duty, i_high: a.max(b), i_low: a.min(b), phase };
            Ok(NodeLoad { node, profile: LoadProfile::pulsed(pulse) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_within_levels() {
        let spec = SkewSpec::default();
        let a = skewed_loads(&[0, 5, 9], &spec).unwrap();
        assert_eq!(a, skewed_loads(&[0, 5, 9], &spec).unwrap());
        assert_ne!(a, skewed_loads(&[0, 5, 9], &SkewSpec { seed: 2, ..spec.clone() }).unwrap());
        for l in &a {
            assert!(l.profile.peak() <= 20e-3);
            let p = l.profile.pulse.unwrap();
            assert!(p.i_low <= p.i_high && spec.periods.contains(&p.period));
        }
        assert!(skewed_loads(&[0], &SkewSpec { levels: vec![], ..spec }).is_err());
    }
}
