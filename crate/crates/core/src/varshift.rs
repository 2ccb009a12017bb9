//! Variable-shift controller: a symmetric bank of `2*num_c + 1` comparators
//! with equally spaced references drives proportional shifts of a
//! thermometer-coded switch array, once per clock cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static configuration of the comparator bank and switch array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparatorBankSpec {
    /// Comparators on either side of the center one.
    pub num_c: usize,
    /// Desired output voltage; reference of the center comparator.
    pub v_center: f64,
    /// Spacing between successive references.
    pub v_gap: f64,
    /// Largest number of switches toggled in one cycle.
    pub block_size: usize,
    pub n_switches: usize,
    pub clock_period: f64,
}

impl Default for ComparatorBankSpec {
    fn default() -> Self {
        ComparatorBankSpec {
            num_c: 8,
            v_center: 0.8,
            v_gap: 5e-3,
            block_size: 8,
            n_switches: 256,
            clock_period: 1e-9,
        }
    }
}

impl ComparatorBankSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_c < 1 {
            return Err(Error::Config("varshift.num_c must be >= 1".into()));
        }
        if !(self.v_gap > 0.0) {
            return Err(Error::Config(format!("varshift.v_gap must be > 0, got {}", self.v_gap)));
        }
        if self.block_size < 1 {
            return Err(Error::Config("varshift.block_size must be >= 1".into()));
        }
        if self.n_switches < self.block_size {
            return Err(Error::Config(format!(
                "varshift.n_switches ({}) must be >= block_size ({})",
                self.n_switches, self.block_size
            )));
        }
        if !(self.clock_period > 0.0) {
            return Err(Error::Config("varshift.clock_period must be > 0".into()));
        }
        Ok(())
    }

    pub fn total_comparators(&self) -> usize {
        2 * self.num_c + 1
    }

    /// Smallest nonzero shift, `round(block_size / num_c)`.
    pub fn min_step(&self) -> usize {
        ((self.block_size as f64 / self.num_c as f64).round() as usize).max(1)
    }
}

// Rungs are snapped to a 1 pV grid so that decimal setpoints (e.g. 0.795)
// compare exactly against decimal sample voltages.
fn snap(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// The `2*num_c + 1` reference voltages, ascending.
pub fn reference_ladder(spec: &ComparatorBankSpec) -> Vec<f64> {
    let n = spec.num_c as i64;
    (-n..=n).map(|k| snap(spec.v_center + k as f64 * spec.v_gap)).collect()
}

/// Number of rungs strictly above `v_out`.
pub fn count_above(v_out: f64, ladder: &[f64]) -> usize {
    ladder.len() - ladder.partition_point(|&r| r <= v_out)
}

/// Signed switch-count change for a given imbalance of the bank.
///
/// `low_count` is the number of comparators whose reference sits above the
/// sensed voltage. Positive result turns switches ON.
pub fn shift_for_low_count(spec: &ComparatorBankSpec, low_count: usize) -> i64 {
    let n = spec.num_c as i64;
    let d = (low_count as i64 - n).clamp(-n, n);
    (spec.block_size as f64 * d as f64 / n as f64).round() as i64
}

/// Signed shift commanded when the output sits at `v_out`.
pub fn shift_amount(spec: &ComparatorBankSpec, v_out: f64) -> i64 {
    shift_for_low_count(spec, count_above(v_out, &reference_ladder(spec)))
}

/// Thermometer-coded gate vector: a prefix of ON switches followed by OFF.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThermoState {
    gates: Vec<bool>,
}

impl ThermoState {
    /// State with the first `junction` switches ON.
    pub fn with_junction(n_switches: usize, junction: usize) -> Self {
        let j = junction.min(n_switches);
        let mut gates = vec![false; n_switches];
        gates[..j].iter_mut().for_each(|g| *g = true);
        ThermoState { gates }
    }

    /// Wraps a raw gate vector without checking the thermometer property.
    pub fn from_gates(gates: Vec<bool>) -> Self {
        ThermoState { gates }
    }

    pub fn gates(&self) -> &[bool] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Number of leading ON switches. Fails if a 1 follows a 0.
    pub fn junction_index(&self) -> Result<usize> {
        let j = self.gates.iter().take_while(|&&g| g).count();
        if let Some(pos) = self.gates[j..].iter().position(|&g| g) {
            return Err(Error::CorruptedState(format!(
                "switch {} is ON above the junction at {j}",
                j + pos
            )));
        }
        Ok(j)
    }

    pub fn is_thermometer(&self) -> bool {
        self.junction_index().is_ok()
    }
}

/// Moves the junction by `delta`, saturating at the array bounds.
pub fn apply_shift(state: &ThermoState, delta: i64) -> Result<ThermoState> {
    let j = state.junction_index()? as i64;
    let n = state.len() as i64;
    let next = (j + delta).clamp(0, n) as usize;
    Ok(ThermoState::with_junction(state.len(), next))
}

/// One clock cycle of the controller.
pub fn step_cycle(spec: &ComparatorBankSpec, state: &ThermoState, v_out_sampled: f64) -> Result<ThermoState> {
    apply_shift(state, shift_amount(spec, v_out_sampled))
}
