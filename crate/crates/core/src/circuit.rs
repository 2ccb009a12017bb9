//! Circuit primitives shared by both controllers and both engines:
//! the comparator decision rule, pass-switch current models, load
//! profiles and the optional comparator offset hook.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output of a clocked comparator.
///
/// `Low` means the reference is above the sensed voltage (the comparator
/// pulls its output to ground); `High` means it is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    High,
    Low,
}

/// Compares `v_sense + offset` against `v_ref`.
///
/// Returns `Low` iff `v_ref > v_sense + offset`. Equality resolves to `High`.
pub fn comparator_decide(v_sense: f64, v_ref: f64, offset: f64) -> Result<Decision> {
    if !(v_sense.is_finite() && v_ref.is_finite() && offset.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite comparator input (v_sense={v_sense}, v_ref={v_ref}, offset={offset})"
        )));
    }
    Ok(if v_ref > v_sense + offset {
        Decision::Low
    } else {
        Decision::High
    })
}

/// Electrical behavior of one pass switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchKind {
    /// Each ON switch sources a fixed current.
    ConstantCurrent { i_on: f64 },
    /// Each ON switch is a linear-region conductance from the supply rail.
    TriodeConductance { g_on: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchModel {
    pub kind: SwitchKind,
    pub vdd: f64,
}

impl SwitchModel {
    pub fn constant_current(i_on: f64, vdd: f64) -> Result<Self> {
        Self::new(SwitchKind::ConstantCurrent { i_on }, vdd)
    }

    pub fn triode(g_on: f64, vdd: f64) -> Result<Self> {
        Self::new(SwitchKind::TriodeConductance { g_on }, vdd)
    }

    pub fn new(kind: SwitchKind, vdd: f64) -> Result<Self> {
        let m = SwitchModel { kind, vdd };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vdd > 0.0 && self.vdd.is_finite()) {
            return Err(Error::Config(format!("switch vdd must be > 0, got {}", self.vdd)));
        }
        match self.kind {
            SwitchKind::ConstantCurrent { i_on } if !(i_on > 0.0 && i_on.is_finite()) => Err(
                Error::Config(format!("constant-current switch needs i_on > 0, got {i_on}")),
            ),
            SwitchKind::TriodeConductance { g_on } if !(g_on > 0.0 && g_on.is_finite()) => Err(
                Error::Config(format!("triode switch needs g_on > 0, got {g_on}")),
            ),
            _ => Ok(()),
        }
    }

    /// Total current of `n_on` switches into a node at `v_out`.
    ///
    /// A triode switch cannot source backwards: above `vdd` it delivers 0.
    pub fn current(&self, n_on: usize, v_out: f64) -> f64 {
        if n_on == 0 {
            return 0.0;
        }
        let n = n_on as f64;
        match self.kind {
            SwitchKind::ConstantCurrent { i_on } => n * i_on,
            SwitchKind::TriodeConductance { g_on } => {
                if v_out >= self.vdd {
                    0.0
                } else {
                    n * g_on * (self.vdd - v_out)
                }
            }
        }
    }

    /// Current of a single switch when the output sits at `v_out`.
    pub fn unit_current_at(&self, v_out: f64) -> f64 {
        self.current(1, v_out)
    }

    /// Same switch with its strength (i_on or g_on) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SwitchModel {
        let kind = match self.kind {
            SwitchKind::ConstantCurrent { i_on } => SwitchKind::ConstantCurrent { i_on: i_on * factor },
            SwitchKind::TriodeConductance { g_on } => SwitchKind::TriodeConductance { g_on: g_on * factor },
        };
        SwitchModel { kind, vdd: self.vdd }
    }

    /// Same switch with its strength replaced by `value`.
    pub fn with_strength(&self, value: f64) -> SwitchModel {
        let kind = match self.kind {
            SwitchKind::ConstantCurrent { .. } => SwitchKind::ConstantCurrent { i_on: value },
            SwitchKind::TriodeConductance { .. } => SwitchKind::TriodeConductance { g_on: value },
        };
        SwitchModel { kind, vdd: self.vdd }
    }
}

/// Periodic rectangular pulse superposed on the segment current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub period: f64,
    pub duty: f64,
    pub i_high: f64,
    pub i_low: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Pulse {
    fn position(&self, t: f64) -> (f64, f64) {
        let rel = t - self.phase;
        let k = (rel / self.period).floor();
        let start = self.phase + k * self.period;
        (start, (t - start) / self.period)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let (_, frac) = self.position(t);
        if frac < self.duty {
            self.i_high
        } else {
            self.i_low
        }
    }

    /// First pulse edge strictly after `t`.
    pub fn next_edge_after(&self, t: f64) -> f64 {
        let (start, _) = self.position(t);
        let rise = start;
        let fall = start + self.duty * self.period;
        let next_rise = start + self.period;
        [rise, fall, next_rise]
            .into_iter()
            .find(|&e| e > t)
            .unwrap_or(next_rise + self.period)
    }
}

/// Piecewise-constant load current, optionally with a periodic pulse on top.
///
/// A segment boundary belongs to the later segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    /// `(t_start, i_load)` pairs; the first starts at 0.
    pub segments: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<Pulse>,
}

impl LoadProfile {
    pub fn constant(i_load: f64) -> Self {
        LoadProfile { segments: vec![(0.0, i_load)], pulse: None }
    }

    /// `i_before` until `t_step`, then `i_after`.
    pub fn step(i_before: f64, t_step: f64, i_after: f64) -> Self {
        LoadProfile { segments: vec![(0.0, i_before), (t_step, i_after)], pulse: None }
    }

    pub fn pulsed(pulse: Pulse) -> Self {
        LoadProfile { segments: vec![(0.0, 0.0)], pulse: Some(pulse) }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(&(t0, _)) = self.segments.first() else {
            return Err(Error::Config("load profile needs at least one segment".into()));
        };
        if t0 != 0.0 {
            return Err(Error::Config(format!("first load segment must start at 0, got {t0}")));
        }
        for w in self.segments.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config(format!(
                    "load segment starts must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(_, i)) = self.segments.iter().find(|s| !(s.1 >= 0.0 && s.1.is_finite())) {
            return Err(Error::Config(format!("load current must be >= 0, got {i}")));
        }
        if let Some(p) = &self.pulse {
            if !(p.period > 0.0) {
                return Err(Error::Config(format!("pulse period must be > 0, got {}", p.period)));
            }
            if !(0.0..=1.0).contains(&p.duty) {
                return Err(Error::Config(format!("pulse duty must be in [0,1], got {}", p.duty)));
            }
            if !(p.i_high >= 0.0 && p.i_low >= 0.0) {
                return Err(Error::Config("pulse currents must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Load current at time `t` (right-continuous).
    pub fn load_at(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|&(ts, _)| ts <= t);
        let base = if idx == 0 { self.segments.first().map_or(0.0, |s| s.1) } else { self.segments[idx - 1].1 };
        base + self.pulse.as_ref().map_or(0.0, |p| p.value_at(t))
    }

    /// Time of the first discontinuity strictly after `t`, if any.
    pub fn next_change_after(&self, t: f64) -> Option<f64> {
        let seg = self.segments.iter().map(|s| s.0).find(|&ts| ts > t);
        let pulse = self.pulse.as_ref().filter(|p| p.duty > 0.0 && p.duty < 1.0).map(|p| p.next_edge_after(t));
        match (seg, pulse) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Largest current the profile can draw.
    pub fn peak(&self) -> f64 {
        let seg = self.segments.iter().map(|s| s.1).fold(0.0, f64::max);
        seg + self.pulse.as_ref().map_or(0.0, |p| p.i_high.max(p.i_low))
    }
}

/// Frequency-dependent comparator offset. Disabled by default.
///
/// The standard deviation is `sigma0 * (1 + (f/f_knee)^exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetModel {
    pub sigma0: f64,
    pub f_knee: f64,
    pub exponent: f64,
    pub enabled: bool,
}

impl Default for OffsetModel {
    fn default() -> Self {
        OffsetModel { sigma0: 0.0, f_knee: 1e9, exponent: 1.0, enabled: false }
    }
}

impl OffsetModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 >= 0.0 && self.f_knee > 0.0 && self.exponent >= 0.0) {
            return Err(Error::Config(format!(
                "offset model needs sigma0 >= 0, f_knee > 0, exponent >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn sigma_at(&self, f_clk: f64) -> f64 {
        self.sigma0 * (1.0 + (f_clk / self.f_knee).powf(self.exponent))
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.sigma0 > 0.0
    }
}

/// Draws one comparator offset at clock frequency `f_clk`.
pub fn sample_offset<R: Rng + ?Sized>(model: &OffsetModel, f_clk: f64, rng: &mut R) -> f64 {
    if !model.is_active() {
        return 0.0;
    }
    let sigma = model.sigma_at(f_clk);
    match Normal::new(0.0, sigma) {
        Ok(n) => n.sample(rng),
        Err(_) => 0.0,
    }
}
