//! Time-interleaved controller: `N` comparators share one reference and
//! fire at `N` equal sub-phases of the clock period, each driving its own
//! switch. Also hosts the load-dependent clock divider.

use serde::{Deserialize, Serialize};

use crate::circuit::{comparator_decide, Decision, SwitchModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterleaveSpec {
    pub n_comparators: usize,
    pub v_ref: f64,
    /// Undivided clock period, `1/f0`.
    pub base_clock_period: f64,
    pub switch: SwitchModel,
}

impl InterleaveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_comparators < 1 {
            return Err(Error::Config("interleave.n_comparators must be >= 1".into()));
        }
        if !(self.base_clock_period > 0.0) {
            return Err(Error::Config("interleave.base_clock_period must be > 0".into()));
        }
        self.switch.validate()
    }

    /// Duration of one sub-phase at the given divider.
    pub fn phase_duration(&self, divider: u32) -> f64 {
        self.base_clock_period * divider as f64 / self.n_comparators as f64
    }
}

/// Sampling offsets within one effective clock period.
pub fn phase_times(spec: &InterleaveSpec, divider: u32) -> Vec<f64> {
    let t = spec.base_clock_period * divider.max(1) as f64;
    let n = spec.n_comparators;
    (0..n).map(|k| k as f64 * t / n as f64).collect()
}

/// One gate per comparator. Unordered, not a thermometer code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateVector {
    gates: Vec<bool>,
}

impl GateVector {
    pub fn all_off(n: usize) -> Self {
        GateVector { gates: vec![false; n] }
    }

    pub fn from_gates(gates: Vec<bool>) -> Self {
        GateVector { gates }
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

    /// Number of ON gates.
    pub fn on_count(&self) -> usize {
        self.gates.iter().filter(|&&g| g).count()
    }

    /// In-place form of [`step_phase`].
    pub fn update(&mut self, phase_index: usize, v_ref: f64, v_sampled: f64, offset: f64) -> Result<()> {
        let n = self.gates.len();
        let gate = self.gates.get_mut(phase_index).ok_or_else(|| {
            Error::InvalidArgument(format!("phase index {phase_index} out of range for {n} comparators"))
        })?;
        *gate = comparator_decide(v_sampled, v_ref, offset)? == Decision::Low;
        Ok(())
    }
}

pub fn on_count(gates: &GateVector) -> usize {
    gates.on_count()
}

/// Fires comparator `phase_index`: its switch turns ON iff the reference is
/// above the sampled voltage. Other gates are untouched.
pub fn step_phase(
    spec: &InterleaveSpec,
    gates: &GateVector,
    phase_index: usize,
    v_out_sampled: f64,
    offset_sample: f64,
) -> Result<GateVector> {
    let mut next = gates.clone();
    next.update(phase_index, spec.v_ref, v_out_sampled, offset_sample)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub counts: Vec<usize>,
    #[serde(rename = "div")]
    pub divider: u32,
}

/// Maps the ON-switch count to a clock divider.
///
/// Construction checks that the bands are disjoint and cover `0..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BandMapRepr", into = "BandMapRepr")]
pub struct FreqBandMap {
    bands: Vec<Band>,
    table: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct BandMapRepr {
    bands: Vec<Band>,
}

impl TryFrom<BandMapRepr> for FreqBandMap {
    type Error = Error;
    fn try_from(r: BandMapRepr) -> Result<Self> {
        let n = r.bands.iter().flat_map(|b| b.counts.iter().copied()).max().unwrap_or(0);
        FreqBandMap::new(r.bands, n)
    }
}

impl From<FreqBandMap> for BandMapRepr {
    fn from(m: FreqBandMap) -> Self {
        BandMapRepr { bands: m.bands }
    }
}

impl FreqBandMap {
    pub fn new(bands: Vec<Band>, n_comparators: usize) -> Result<Self> {
        let mut table: Vec<Option<u32>> = vec![None; n_comparators + 1];
        for b in &bands {
            if b.divider < 1 {
                return Err(Error::Config("band divider must be >= 1".into()));
            }
            for &c in &b.counts {
                let slot = table.get_mut(c).ok_or_else(|| {
                    Error::Config(format!("band count {c} exceeds comparator count {n_comparators}"))
                })?;
                if slot.is_some() {
                    return Err(Error::Config(format!("ON count {c} appears in more than one band")));
                }
                *slot = Some(b.divider);
            }
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(c, d)| d.ok_or_else(|| Error::Config(format!("ON count {c} is not covered by any band"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(FreqBandMap { bands, table })
    }

    /// Every count maps to divider 1.
    pub fn identity(n_comparators: usize) -> Self {
        Self::constant(n_comparators, 1)
    }

    pub fn constant(n_comparators: usize, divider: u32) -> Self {
        let d = divider.max(1);
        FreqBandMap {
            bands: vec![Band { counts: (0..=n_comparators).collect(), divider: d }],
            table: vec![d; n_comparators + 1],
        }
    }

    /// Builds a map from `(counts, divider)` pairs.
    pub fn from_pairs(pairs: &[(&[usize], u32)], n_comparators: usize) -> Result<Self> {
        let bands = pairs.iter().map(|(c, d)| Band { counts: c.to_vec(), divider: *d }).collect();
        Self::new(bands, n_comparators)
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// Highest ON count the map covers.
    pub fn n_max(&self) -> usize {
        self.table.len() - 1
    }

    pub fn divider_for(&self, n_on: usize) -> u32 {
        self.table[n_on.min(self.n_max())]
    }

    /// Number of distinct divider changes when walking the counts upward.
    pub fn gradient_steps(&self) -> usize {
        self.table.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Largest ratio between dividers of adjacent ON counts.
    pub fn max_adjacent_ratio(&self) -> f64 {
        self.table
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0] as f64, w[1] as f64);
                a.max(b) / a.min(b)
            })
            .fold(1.0, f64::max)
    }
}

/// Period to use for the clock cycle that starts now.
pub fn retime_clock(map: &FreqBandMap, n_on: usize, spec: &InterleaveSpec) -> f64 {
    spec.base_clock_period * map.divider_for(n_on) as f64
}
