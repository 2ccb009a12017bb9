use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ControllerSpec, Metrics, RunSetup};
use crate::circuit::LoadProfile;
use crate::error::{Error, Result};
use crate::interleave::FreqBandMap;

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Varshift: comparators per side, with the ladder span `num_c * v_gap`
    /// and the block size held fixed. Interleaved: comparator count with
    /// per-switch strength unchanged.
    NComparators,
    /// Interleaved comparator count with the total switch strength held fixed.
    NComparatorsFixedTotal,
    CLoad,
    VGap,
    BlockSize,
    /// Varshift minimum step; sets `block_size = value * num_c`.
    MinStep,
    /// Per-switch strength (`g_on` or `i_on`), a proxy for device width.
    SwitchStrength,
    FClk,
    ILoad,
}

impl SweepParam {
    pub const ALL: [SweepParam; 9] = [
        SweepParam::NComparators,
        SweepParam::NComparatorsFixedTotal,
        SweepParam::CLoad,
        SweepParam::VGap,
        SweepParam::BlockSize,
        SweepParam::MinStep,
        SweepParam::SwitchStrength,
        SweepParam::FClk,
        SweepParam::ILoad,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::NComparators => "n_comparators",
            SweepParam::NComparatorsFixedTotal => "n_comparators_fixed_total",
            SweepParam::CLoad => "c_load",
            SweepParam::VGap => "v_gap",
            SweepParam::BlockSize => "block_size",
            SweepParam::MinStep => "min_step",
            SweepParam::SwitchStrength => "g_on",
            SweepParam::FClk => "f_clk",
            SweepParam::ILoad => "i_load",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "switch_width" | "i_on" | "switch_strength" => Ok(SweepParam::SwitchStrength),
            _ => SweepParam::ALL
                .into_iter()
                .find(|p| p.name() == s)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

fn as_count(param: SweepParam, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value.is_finite() {
        Ok(value as usize)
    } else {
        Err(Error::InvalidArgument(format!("{param} needs a positive integer, got {value}")))
    }
}

fn resize_map(map: &FreqBandMap, n: usize) -> Result<FreqBandMap> {
    let d = map.divider_for(0);
    if (0..=map.n_max()).all(|k| map.divider_for(k) == d) {
        Ok(FreqBandMap::constant(n, d))
    } else {
        Err(Error::Config("cannot resize a non-uniform band map for a comparator-count sweep".into()))
    }
}

/// Copy of `base` with `param` set to `value`.
pub fn apply_param(base: &RunSetup, param: SweepParam, value: f64) -> Result<RunSetup> {
    let mut s = base.clone();
    let wrong = || Error::InvalidArgument(format!("{param} does not apply to the {:?} scheme", base.sim.scheme));
    match param {
        SweepParam::CLoad => s.sim.c_load = value,
        SweepParam::ILoad => s.load = LoadProfile::constant(value),
        SweepParam::SwitchStrength => {
            let sw = s.controller.switch().with_strength(value);
            *s.controller.switch_mut() = sw;
        }
        SweepParam::FClk => match &mut s.controller {
            ControllerSpec::VarShift { bank, .. } => bank.clock_period = 1.0 / value,
            ControllerSpec::Interleaved { spec, .. } => spec.base_clock_period = 1.0 / value,
            ControllerSpec::Forced { .. } => return Err(wrong()),
        },
        SweepParam::NComparators => {
            let n = as_count(param, value)?;
            match &mut s.controller {
                ControllerSpec::VarShift { bank, .. } => {
                    bank.v_gap *= bank.num_c as f64 / n as f64;
                    bank.num_c = n;
                }
                ControllerSpec::Interleaved { spec, map } => {
                    spec.n_comparators = n;
                    *map = resize_map(map, n)?;
                }
                ControllerSpec::Forced { .. } => return Err(wrong()),
            }
        }
        SweepParam::NComparatorsFixedTotal => {
            let n = as_count(param, value)?;
            match &mut s.controller {
                ControllerSpec::Interleaved { spec, map } => {
                    let scale = spec.n_comparators as f64 / n as f64;
                    spec.switch = spec.switch.scaled(scale);
                    spec.n_comparators = n;
                    *map = resize_map(map, n)?;
                }
                _ => return Err(wrong()),
            }
        }
        SweepParam::VGap => match &mut s.controller {
            ControllerSpec::VarShift { bank, .. } => bank.v_gap = value,
            _ => return Err(wrong()),
        },
        SweepParam::BlockSize => match &mut s.controller {
            ControllerSpec::VarShift { bank, .. } => bank.block_size = as_count(param, value)?,
            _ => return Err(wrong()),
        },
        SweepParam::MinStep => match &mut s.controller {
            ControllerSpec::VarShift { bank, .. } => bank.block_size = as_count(param, value)? * bank.num_c,
            _ => return Err(wrong()),
        },
    }
    s.controller.validate()?;
    s.sim.validate()?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: Result<Metrics>,
}

/// One independent run per value, in input order. Runs execute in parallel;
/// a run that fails (for example never settles) is reported in its row and
/// the sweep continues.
pub fn sweep(base: &RunSetup, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    let setups = values.iter().map(|&v| apply_param(base, param, v)).collect::<Result<Vec<_>>>()?;
    Ok(setups
        .par_iter()
        .zip(values.par_iter())
        .map(|(s, &value)| SweepRow { value, metrics: s.evaluate() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_names_roundtrip() {
        for p in SweepParam::ALL {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert_eq!("switch_width".parse::<SweepParam>().unwrap(), SweepParam::SwitchStrength);
        assert!("bogus".parse::<SweepParam>().is_err());
    }
}
