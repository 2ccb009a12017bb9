use serde::{Deserialize, Serialize};

use super::{ControllerSpec, SimConfig, Trace};
use crate::error::{Error, Result};

/// Band-and-hold settling criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettleRule {
    pub v_target: f64,
    pub band: f64,
    pub hold: f64,
}

impl SettleRule {
    /// 1% band around `v_target`, held for 10 clock periods.
    pub fn standard(v_target: f64, period: f64) -> Self {
        SettleRule { v_target, band: 0.01 * v_target.abs(), hold: 10.0 * period }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ripple_pp: f64,
    pub settling_time: f64,
    /// `None` when the load draws no current.
    pub current_efficiency: Option<f64>,
    pub v_mean_ss: f64,
}

/// Earliest sample time `t` such that every sample in `[t, t + hold]` lies
/// within `band` of `v_target`.
pub fn measure_settling(trace: &Trace, v_target: f64, band: f64, hold: f64) -> Result<f64> {
    if !(band > 0.0 && hold > 0.0) {
        return Err(Error::InvalidArgument(format!("settling needs band > 0 and hold > 0 (got {band}, {hold})")));
    }
    let mut run_start: Option<f64> = None;
    for s in &trace.samples {
        if (s.v_out - v_target).abs() <= band {
            let start = *run_start.get_or_insert(s.t);
            if s.t - start >= hold {
                return Ok(start);
            }
        } else {
            run_start = None;
        }
    }
    Err(Error::NotSettled { tail_ripple: tail_ripple(trace, hold) })
}

fn tail_ripple(trace: &Trace, window: f64) -> f64 {
    trace.peak_to_peak_since(trace.t_end() - window)
}

/// Start of the steady-state window: the later of the settling instant and
/// `t_end - window`.
pub fn steady_window_start(trace: &Trace, window: f64, rule: &SettleRule) -> Result<f64> {
    match measure_settling(trace, rule.v_target, rule.band, rule.hold) {
        Ok(ts) => Ok(ts.max(trace.t_end() - window)),
        Err(Error::NotSettled { .. }) => Err(Error::NotSettled { tail_ripple: tail_ripple(trace, window) }),
        Err(e) => Err(e),
    }
}

/// Peak-to-peak output voltage over the final `window`, excluding samples
/// taken before the output settled.
pub fn measure_ripple(trace: &Trace, window: f64, rule: &SettleRule) -> Result<f64> {
    let start = steady_window_start(trace, window, rule)?;
    Ok(trace.peak_to_peak_since(start))
}

/// `I_load / (I_load + I_ctrl)` averaged over the trace, with
/// `I_ctrl = i_static + n * e_cmp * f_eff / vdd`.
pub fn current_efficiency(trace: &Trace, sim: &SimConfig, n_comparators: usize) -> Result<f64> {
    let n = trace.samples.len();
    if n == 0 {
        return Err(Error::UndefinedEfficiency);
    }
    let i_load = trace.samples.iter().map(|s| s.i_load).sum::<f64>() / n as f64;
    if i_load <= 0.0 {
        return Err(Error::UndefinedEfficiency);
    }
    let f_eff = trace
        .samples
        .iter()
        .map(|s| if s.period_eff > 0.0 { 1.0 / s.period_eff } else { 0.0 })
        .sum::<f64>()
        / n as f64;
    let eff = &sim.efficiency;
    let i_ctrl = eff.i_static + n_comparators as f64 * eff.e_cmp * f_eff / sim.vdd;
    Ok(i_load / (i_load + i_ctrl))
}

/// Ripple, settling time, efficiency and mean level of a run with the
/// standard settling rule.
pub fn evaluate(trace: &Trace, sim: &SimConfig, controller: &ControllerSpec) -> Result<Metrics> {
    let v_target = controller
        .v_target()
        .ok_or_else(|| Error::InvalidArgument("metrics need a regulating controller".into()))?;
    let rule = SettleRule::standard(v_target, trace.max_period().max(controller.finest_period().unwrap_or(0.0)));
    let settling_time = measure_settling(trace, rule.v_target, rule.band, rule.hold)
        .map_err(|_| Error::NotSettled { tail_ripple: tail_ripple(trace, sim.ripple_window()) })?;
    let start = settling_time.max(trace.t_end() - sim.ripple_window());
    let window = trace.since(start);
    let ripple_pp = window.peak_to_peak_since(start);
    let v_mean_ss = window.voltages().sum::<f64>() / window.len().max(1) as f64;
    let current_efficiency = match current_efficiency(&window, sim, controller.n_comparators()) {
        Ok(eta) => Some(eta),
        Err(Error::UndefinedEfficiency) => None,
        Err(e) => return Err(e),
    };
    Ok(Metrics { ripple_pp, settling_time: settling_time - trace.t_start(), current_efficiency, v_mean_ss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ChargeLedger, Sample, Scheme};

    fn synth(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Trace {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                Sample { t, v_out: f(t), n_on: 0, i_load: 10e-3, period_eff: 4e-9 }
            })
            .collect();
        Trace { samples, charge: ChargeLedger::default() }
    }

    #[test]
    fn ripple_of_sinusoid() {
        let tr = synth(1e-10, 20_000, |t| 0.9 + 1e-3 * (2.0 * std::f64::consts::PI * 1e8 * t).sin());
        let rule = SettleRule { v_target: 0.9, band: 0.009, hold: 40e-9 };
        let r = measure_ripple(&tr, 1e-6, &rule).unwrap();
        assert!((r - 2e-3).abs() < 1e-6, "{r}");
    }

    #[test]
    fn ripple_of_constant() {
        let tr = synth(1e-10, 1000, |_| 0.6);
        let rule = SettleRule::standard(0.6, 1e-9);
        assert_eq!(measure_ripple(&tr, 5e-8, &rule).unwrap(), 0.0);
    }

    #[test]
    fn settling_of_exponential() {
        let tau = 20e-9;
        let dt = 0.1e-9;
        let tr = synth(dt, 20_000, |t| 0.9 * (1.0 - (-t / tau).exp()));
        let ts = measure_settling(&tr, 0.9, 0.009, 10e-9).unwrap();
        let want = tau * 100f64.ln();
        assert!((ts - want).abs() <= dt, "{ts} vs {want}");
    }

    #[test]
    fn settling_inside_band_from_start() {
        let tr = synth(1e-9, 100, |_| 0.8);
        assert_eq!(measure_settling(&tr, 0.8, 0.008, 10e-9).unwrap(), 0.0);
    }

    #[test]
    fn not_settled_carries_tail_ripple() {
        let tr = synth(1e-9, 100, |t| if (t * 1e9) as u64 % 2 == 0 { 0.0 } else { 1.0 });
        match measure_settling(&tr, 0.5, 0.01, 5e-9) {
            Err(Error::NotSettled { tail_ripple }) => assert_eq!(tail_ripple, 1.0),
            other => panic!("{other:?}"),
        }
        assert!(measure_settling(&tr, 0.5, 0.0, 5e-9).is_err());
    }

    #[test]
    fn efficiency_without_control_power_is_one() {
        let tr = synth(1e-9, 100, |_| 0.6);
        let sim = SimConfig::new(Scheme::Interleaved, 0.7, 9e-9, 1e-7);
        assert_eq!(current_efficiency(&tr, &sim, 8).unwrap(), 1.0);
        let mut zero = tr.clone();
        zero.samples.iter_mut().for_each(|s| s.i_load = 0.0);
        assert_eq!(current_efficiency(&zero, &sim, 8), Err(Error::UndefinedEfficiency));
    }

    #[test]
    fn efficiency_rate_model() {
        let tr = synth(1e-9, 100, |_| 0.6);
        let mut sim = SimConfig::new(Scheme::Interleaved, 0.7, 9e-9, 1e-7);
        sim.efficiency.e_cmp = 112e-15;
        let eta = current_efficiency(&tr, &sim, 8).unwrap();
        let i_ctrl = 8.0 * 112e-15 * 250e6 / 0.7;
        assert!((eta - 10e-3 / (10e-3 + i_ctrl)).abs() < 1e-12);
    }
}
