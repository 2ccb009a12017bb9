//! Single-node closed-loop transient engine.
//!
//! Between controller events, load changes and sample instants the output
//! node obeys a linear constant-coefficient ODE,
//! `C dV/dt = I_supply(V) - I_load`, which is advanced by its closed-form
//! solution. The node cannot be pulled below ground: if the trajectory
//! reaches 0 V it stays there and the load only draws what the switches
//! deliver.

mod metrics;
mod sweep;
mod trace;

pub use metrics::{
    current_efficiency, evaluate, measure_ripple, measure_settling, steady_window_start, Metrics, SettleRule,
};
pub use sweep::{apply_param, sweep, SweepParam, SweepRow};
pub use trace::{ChargeLedger, Sample, Trace, CSV_HEADER};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{comparator_decide, sample_offset, Decision, LoadProfile, OffsetModel, SwitchKind, SwitchModel};
use crate::error::{Error, Result};
use crate::interleave::{FreqBandMap, GateVector, InterleaveSpec};
use crate::varshift::{self, ComparatorBankSpec, ThermoState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    VarShift,
    Interleaved,
    /// Controller disabled; a fixed number of switches stays ON.
    Forced,
}

/// Control-circuit power model: energy per comparison plus static current.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficiencyModel {
    pub e_cmp: f64,
    #[serde(default)]
    pub i_static: f64,
}

impl EfficiencyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_cmp >= 0.0 && self.i_static >= 0.0) {
            return Err(Error::Config(format!("efficiency needs e_cmp >= 0 and i_static >= 0 (got {self:?})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub vdd: f64,
    pub c_load: f64,
    pub t_end: f64,
    /// Trace sampling interval; defaults to the finest effective clock
    /// period divided by 16.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub scheme: Scheme,
    #[serde(default)]
    pub efficiency: EfficiencyModel,
    #[serde(default)]
    pub offset: OffsetModel,
    /// Output voltage at t = 0.
    #[serde(default)]
    pub v_init: f64,
    /// Length of the steady-state window used for ripple and efficiency;
    /// defaults to a quarter of `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ripple_window: Option<f64>,
}

impl SimConfig {
    pub fn new(scheme: Scheme, vdd: f64, c_load: f64, t_end: f64) -> Self {
        SimConfig {
            vdd,
            c_load,
            t_end,
            sample_dt: None,
            seed: 0,
            scheme,
            efficiency: EfficiencyModel::default(),
            offset: OffsetModel::default(),
            v_init: 0.0,
            ripple_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vdd > 0.0) {
            return Err(Error::Config(format!("sim.vdd must be > 0, got {}", self.vdd)));
        }
        if !(self.c_load > 0.0) {
            return Err(Error::Config(format!("sim.c_load must be > 0, got {}", self.c_load)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("sim.t_end must be >= 0, got {}", self.t_end)));
        }
        if let Some(dt) = self.sample_dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("sim.sample_dt must be > 0, got {dt}")));
            }
        }
        if !(self.v_init >= 0.0 && self.v_init <= self.vdd) {
            return Err(Error::Config(format!("sim.v_init must lie in [0, vdd], got {}", self.v_init)));
        }
        if let Some(w) = self.ripple_window {
            if !(w > 0.0) {
                return Err(Error::Config(format!("sim.ripple_window must be > 0, got {w}")));
            }
        }
        self.efficiency.validate()?;
        self.offset.validate()
    }

    pub fn ripple_window(&self) -> f64 {
        self.ripple_window.unwrap_or(self.t_end / 4.0)
    }
}

/// Controller configuration for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum ControllerSpec {
    VarShift { bank: ComparatorBankSpec, switch: SwitchModel },
    Interleaved { spec: InterleaveSpec, map: FreqBandMap },
    Forced { n_on: usize, switch: SwitchModel },
}

impl ControllerSpec {
    pub fn scheme(&self) -> Scheme {
        match self {
            ControllerSpec::VarShift { .. } => Scheme::VarShift,
            ControllerSpec::Interleaved { .. } => Scheme::Interleaved,
            ControllerSpec::Forced { .. } => Scheme::Forced,
        }
    }

    pub fn switch(&self) -> &SwitchModel {
        match self {
            ControllerSpec::VarShift { switch, .. } | ControllerSpec::Forced { switch, .. } => switch,
            ControllerSpec::Interleaved { spec, .. } => &spec.switch,
        }
    }

    pub fn switch_mut(&mut self) -> &mut SwitchModel {
        match self {
            ControllerSpec::VarShift { switch, .. } | ControllerSpec::Forced { switch, .. } => switch,
            ControllerSpec::Interleaved { spec, .. } => &mut spec.switch,
        }
    }

    /// Comparators that fire every clock period.
    pub fn n_comparators(&self) -> usize {
        match self {
            ControllerSpec::VarShift { bank, .. } => bank.total_comparators(),
            ControllerSpec::Interleaved { spec, .. } => spec.n_comparators,
            ControllerSpec::Forced { .. } => 0,
        }
    }

    /// Voltage the loop regulates to.
    pub fn v_target(&self) -> Option<f64> {
        match self {
            ControllerSpec::VarShift { bank, .. } => Some(bank.v_center),
            ControllerSpec::Interleaved { spec, .. } => Some(spec.v_ref),
            ControllerSpec::Forced { .. } => None,
        }
    }

    /// Shortest clock period the controller can run at.
    pub fn finest_period(&self) -> Option<f64> {
        match self {
            ControllerSpec::VarShift { bank, .. } => Some(bank.clock_period),
            ControllerSpec::Interleaved { spec, map } => {
                let d = (0..=map.n_max()).map(|n| map.divider_for(n)).min().unwrap_or(1);
                Some(spec.base_clock_period * d as f64)
            }
            ControllerSpec::Forced { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControllerSpec::VarShift { bank, switch } => {
                bank.validate()?;
                switch.validate()
            }
            ControllerSpec::Interleaved { spec, map } => {
                spec.validate()?;
                if map.n_max() != spec.n_comparators {
                    return Err(Error::Config(format!(
                        "band map covers 0..={} but there are {} comparators",
                        map.n_max(),
                        spec.n_comparators
                    )));
                }
                Ok(())
            }
            ControllerSpec::Forced { switch, .. } => switch.validate(),
        }
    }
}

/// Everything needed for one engine run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub sim: SimConfig,
    pub controller: ControllerSpec,
    pub load: LoadProfile,
}

impl RunSetup {
    pub fn run(&self) -> Result<Trace> {
        run(&self.sim, &self.controller, &self.load)
    }

    pub fn evaluate(&self) -> Result<Metrics> {
        let trace = self.run()?;
        evaluate(&trace, &self.sim, &self.controller)
    }
}

/// Result of advancing the node over one constant-coefficient interval.
struct Interval {
    v_end: f64,
    q_supply: f64,
    q_load: f64,
}

/// Closed-form advance of `C dV/dt = I_sup(V) - i_load` over `h` seconds with
/// `n_on` switches, floored at 0 V.
fn advance(switch: &SwitchModel, n_on: usize, c: f64, i_load: f64, v0: f64, h: f64) -> Interval {
    if h <= 0.0 {
        return Interval { v_end: v0, q_supply: 0.0, q_load: 0.0 };
    }
    let g_total = match switch.kind {
        SwitchKind::TriodeConductance { g_on } if n_on > 0 => n_on as f64 * g_on,
        _ => 0.0,
    };
    if g_total > 0.0 && v0 <= switch.vdd {
        let vdd = switch.vdd;
        let tau = c / g_total;
        let v_inf = vdd - i_load / g_total;
        // Time at which the exponential reaches 0 V, if it does.
        let h_floor = if v_inf < 0.0 { tau * ((v0 - v_inf) / -v_inf).ln() } else { f64::INFINITY };
        let h1 = h.min(h_floor.max(0.0));
        let decay = -(-h1 / tau).exp_m1();
        let v1 = if h1 < h { 0.0 } else { v_inf + (v0 - v_inf) * (1.0 - decay) };
        let q_sup1 = i_load * h1 - c * (v0 - v_inf) * decay;
        let mut q_sup = q_sup1;
        let mut q_load = i_load * h1;
        if h1 < h {
            // Pinned at ground: the load gets what the switches deliver.
            let pinned = g_total * vdd * (h - h1);
            q_sup += pinned;
            q_load += pinned;
        }
        return Interval { v_end: v1, q_supply: q_sup, q_load };
    }
    let i_sup = switch.current(n_on, v0);
    let slope = (i_sup - i_load) / c;
    let h_floor = if slope < 0.0 { -v0 / slope } else { f64::INFINITY };
    if h_floor < h {
        let h1 = h_floor.max(0.0);
        Interval { v_end: 0.0, q_supply: i_sup * h, q_load: i_load * h1 + i_sup * (h - h1) }
    } else {
        Interval { v_end: v0 + slope * h, q_supply: i_sup * h, q_load: i_load * h }
    }
}

enum ControlState<'a> {
    VarShift {
        bank: &'a ComparatorBankSpec,
        ladder: Vec<f64>,
        state: ThermoState,
        cycle: u64,
    },
    Interleaved {
        spec: &'a InterleaveSpec,
        map: &'a FreqBandMap,
        gates: GateVector,
        phase: usize,
        period_start: f64,
        period: f64,
    },
    Forced {
        n_on: usize,
    },
}

impl ControlState<'_> {
    fn n_on(&self) -> usize {
        match self {
            ControlState::VarShift { state, .. } => state.junction_index().unwrap_or(0),
            ControlState::Interleaved { gates, .. } => gates.on_count(),
            ControlState::Forced { n_on } => *n_on,
        }
    }

    fn period(&self) -> f64 {
        match self {
            ControlState::VarShift { bank, .. } => bank.clock_period,
            ControlState::Interleaved { period, .. } => *period,
            ControlState::Forced { .. } => 0.0,
        }
    }

    /// Processes the event at `t`; returns the time of the next one.
    fn fire(&mut self, t: f64, v: f64, offset: &OffsetModel, rng: &mut ChaCha8Rng) -> Result<f64> {
        match self {
            ControlState::VarShift { bank, ladder, state, cycle } => {
                let low = if offset.is_active() {
                    let f = 1.0 / bank.clock_period;
                    let mut low = 0;
                    for &r in ladder.iter() {
                        if comparator_decide(v, r, sample_offset(offset, f, rng))? == Decision::Low {
                            low += 1;
                        }
                    }
                    low
                } else {
                    varshift::count_above(v, ladder)
                };
                *state = varshift::apply_shift(state, varshift::shift_for_low_count(bank, low))?;
                *cycle += 1;
                Ok(*cycle as f64 * bank.clock_period)
            }
            ControlState::Interleaved { spec, map, gates, phase, period_start, period } => {
                if *phase == 0 {
                    *period = spec.base_clock_period * map.divider_for(gates.on_count()) as f64;
                    *period_start = t;
                }
                let off = sample_offset(offset, 1.0 / *period, rng);
                gates.update(*phase, spec.v_ref, v, off)?;
                *phase += 1;
                if *phase == spec.n_comparators {
                    *phase = 0;
                    Ok(*period_start + *period)
                } else {
                    Ok(*period_start + *phase as f64 * *period / spec.n_comparators as f64)
                }
            }
            ControlState::Forced { .. } => Ok(f64::INFINITY),
        }
    }
}

/// Runs one closed-loop transient from `v_init` to `t_end`.
pub fn run(sim: &SimConfig, controller: &ControllerSpec, load: &LoadProfile) -> Result<Trace> {
    sim.validate()?;
    controller.validate()?;
    load.validate()?;
    if sim.scheme != controller.scheme() {
        return Err(Error::Config(format!(
            "sim.scheme is {:?} but the controller is {:?}",
            sim.scheme,
            controller.scheme()
        )));
    }
    let switch = *controller.switch();
    if switch.vdd != sim.vdd {
        return Err(Error::Config(format!("switch vdd {} differs from sim.vdd {}", switch.vdd, sim.vdd)));
    }

    let sample_dt = match (sim.sample_dt, controller.finest_period()) {
        (Some(dt), _) => dt,
        (None, Some(p)) => p / 16.0,
        (None, None) => (sim.t_end / 1000.0).max(f64::MIN_POSITIVE),
    };

    let mut ctl = match controller {
        ControllerSpec::VarShift { bank, .. } => ControlState::VarShift {
            bank,
            ladder: varshift::reference_ladder(bank),
            state: ThermoState::with_junction(bank.n_switches, 0),
            cycle: 0,
        },
        ControllerSpec::Interleaved { spec, map } => ControlState::Interleaved {
            spec,
            map,
            gates: GateVector::all_off(spec.n_comparators),
            phase: 0,
            period_start: 0.0,
            period: spec.base_clock_period * map.divider_for(0) as f64,
        },
        ControllerSpec::Forced { n_on, .. } => ControlState::Forced { n_on: *n_on },
    };

    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut trace = Trace::default();
    trace.charge = ChargeLedger { c_load: sim.c_load, v_start: sim.v_init, v_end: sim.v_init, ..Default::default() };
    if sim.t_end <= 0.0 {
        return Ok(trace);
    }
    // Tolerate rounding so a t_end that is a whole number of samples keeps its last sample.
    let n_samples = (sim.t_end / sample_dt * (1.0 + 1e-9)).floor() as u64 + 1;
    trace.samples.reserve(n_samples as usize);

    let mut t = 0.0;
    let mut v = sim.v_init;
    let mut next_ctrl = match ctl {
        ControlState::Forced { .. } => f64::INFINITY,
        _ => 0.0,
    };
    let mut k_sample: u64 = 0;
    let mut next_sample = 0.0;

    loop {
        if next_ctrl == t {
            next_ctrl = ctl.fire(t, v, &sim.offset, &mut rng)?;
        }
        if next_sample == t {
            trace.samples.push(Sample { t, v_out: v, n_on: ctl.n_on(), i_load: load.load_at(t), period_eff: ctl.period() });
            k_sample += 1;
            next_sample = if k_sample < n_samples { (k_sample as f64 * sample_dt).min(sim.t_end) } else { f64::INFINITY };
        }
        if t >= sim.t_end {
            break;
        }
        let next_load = load.next_change_after(t).unwrap_or(f64::INFINITY);
        let t_next = next_ctrl.min(next_sample).min(next_load).min(sim.t_end);
        let step = advance(&switch, ctl.n_on(), sim.c_load, load.load_at(t), v, t_next - t);
        trace.charge.q_supply += step.q_supply;
        trace.charge.q_load += step.q_load;
        v = step.v_end;
        t = t_next;
    }
    trace.charge.v_end = v;
    debug_assert!(trace.charge.relative_error() < 1e-6, "charge not conserved: {:?}", trace.charge);
    Ok(trace)
}

/// Energy per comparison that makes the rate model hit `target_eta` at one
/// operating point, assuming no static control current.
pub fn calibrate_ecmp(target_eta: f64, i_load: f64, f_clk: f64, n_comparators: usize, vdd: f64) -> Result<f64> {
    if !(target_eta > 0.0 && target_eta < 1.0) {
        return Err(Error::InvalidArgument(format!("target efficiency must lie in (0, 1), got {target_eta}")));
    }
    if n_comparators == 0 || !(f_clk > 0.0) || !(vdd > 0.0) || !(i_load > 0.0) {
        return Err(Error::InvalidArgument("calibration needs i_load, f_clk, vdd > 0 and n_comparators >= 1".into()));
    }
    Ok(i_load * (1.0 / target_eta - 1.0) * vdd / (n_comparators as f64 * f_clk))
}
