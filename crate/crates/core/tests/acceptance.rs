//! Acceptance suite. Every test prints one `PASS`/`FAIL` line for its
//! criterion before asserting it; tolerances are pinned below.
//!
//! Criteria the model does not meet are `#[ignore]`d with the reason, not
//! relaxed: `cargo test -p dldo-core --test acceptance -- --ignored` runs
//! them and they fail.

use std::io::Write;
use std::time::{Duration, Instant};

use dldo_core::circuit::{LoadProfile, OffsetModel, SwitchModel};
use dldo_core::engine::{
    self, measure_settling, ControllerSpec, Metrics, RunSetup, Scheme, SimConfig, SweepParam, Trace,
};
use dldo_core::grid::{run_grid, summarize, GridScenario, GridSpec, NodeLoad, PadModel};
use dldo_core::interleave::{FreqBandMap, InterleaveSpec};
use dldo_core::presets::{self, TABLE1};
use dldo_core::varshift::{self, ComparatorBankSpec, ThermoState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EFFICIENCY_TOL_PP: f64 = 0.7;
const EFFICIENCY_BUDGET: Duration = Duration::from_secs(10);
const RIPPLE_CAP: f64 = 6e-3;
const RIPPLE_FACTOR: f64 = 2.0;
const RIPPLE_VARIATION: f64 = 0.30;
const RIPPLE_BUDGET: Duration = Duration::from_secs(30);
const HEADLINE_RIPPLE: f64 = 5e-3;
const HEADLINE_SETTLING: f64 = 0.5e-6;
const HEADLINE_BUDGET: Duration = Duration::from_secs(30);
const TREND_MIN_POINTS: usize = 5;
const TREND_FLAT_BAND: f64 = 0.10;
const TREND_BUDGET: Duration = Duration::from_secs(300);
const ORACLE_DT: f64 = 1e-12;
const ORACLE_T_END: f64 = 10e-6;
const ORACLE_TOL: f64 = 0.1e-3;
const RC_TOL: f64 = 10e-6;
const DEGENERATE_TOL: f64 = 0.1e-3;
const GRID_SPREAD_FACTOR: f64 = 2.0;
const KCL_TOL: f64 = 1e-9;
const GRID_BUDGET: Duration = Duration::from_secs(600);
const THERMO_SEQUENCES: usize = 100_000;
const CONSERVATION_TOL: f64 = 1e-9;

// Written to the stdout handle rather than through `println!`, which the
// test harness captures for passing tests.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn report(n: u32, what: &str, pass: bool, detail: &str) {
    say(&format!("criterion {n:>2} {what}: {} ({detail})", if pass { "PASS" } else { "FAIL" }));
}

/// Runs the engine and checks the charge ledger of the run.
fn run_checked(s: &RunSetup) -> Trace {
    let trace = s.run().expect("run succeeds");
    let err = trace.charge.relative_error();
    assert!(err < CONSERVATION_TOL, "charge ledger off by {err:e}");
    trace
}

fn evaluate_checked(s: &RunSetup) -> Metrics {
    let trace = run_checked(s);
    engine::evaluate(&trace, &s.sim, &s.controller).expect("run settles")
}

#[test]
fn criterion_01_table1_efficiency() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut detail = vec![];
    for row in [0, 2] {
        let (i, period, _, eta_ref) = TABLE1[row];
        let eta = evaluate_checked(&presets::table1(row).unwrap()).current_efficiency.unwrap();
        let dev = (eta - eta_ref).abs() * 100.0;
        ok &= dev <= EFFICIENCY_TOL_PP;
        detail.push(format!("{:.0} mA/{:.0} ns: {:.2}% vs {:.1}%", i * 1e3, period * 1e9, eta * 100.0, eta_ref * 100.0));
    }
    let elapsed = t0.elapsed();
    ok &= elapsed < EFFICIENCY_BUDGET;
    report(1, "reference-point efficiency", ok, &format!("{}; {elapsed:.1?}", detail.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_02_table1_ripple() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut ripples = vec![];
    for (row, &(_, _, ripple_ref, _)) in TABLE1.iter().enumerate() {
        let r = evaluate_checked(&presets::table1(row).unwrap()).ripple_pp;
        ok &= r <= RIPPLE_CAP && r <= RIPPLE_FACTOR * ripple_ref && r >= ripple_ref / RIPPLE_FACTOR;
        ripples.push(r);
    }
    let hi = ripples.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ripples.iter().cloned().fold(f64::MAX, f64::min);
    let variation = (hi - lo) / hi;
    ok &= variation < RIPPLE_VARIATION;
    let elapsed = t0.elapsed();
    ok &= elapsed < RIPPLE_BUDGET;
    let mv: Vec<String> = ripples.iter().map(|r| format!("{:.2}", r * 1e3)).collect();
    report(
        2,
        "reference-point ripple",
        ok,
        &format!("[{}] mV, variation {:.0}%; {elapsed:.1?}", mv.join(", "), variation * 100.0),
    );
    assert!(ok);
}

#[test]
fn criterion_03_headline_step() {
    let t0 = Instant::now();
    let s = presets::headline();
    let trace = run_checked(&s);
    let after = trace.since(presets::HEADLINE_T_STEP).rebased(presets::HEADLINE_T_STEP);
    let v_ref = s.controller.v_target().unwrap();
    let period = s.controller.finest_period().unwrap();
    let settling = measure_settling(&after, v_ref, 0.01 * v_ref, 10.0 * period).expect("settles after the step");
    let ripple = trace.peak_to_peak_since(trace.t_end() - s.sim.ripple_window());
    let droop = v_ref - after.voltages().fold(f64::INFINITY, f64::min);
    let elapsed = t0.elapsed();
    let ok = ripple < HEADLINE_RIPPLE && settling < HEADLINE_SETTLING && elapsed < HEADLINE_BUDGET;
    report(
        3,
        "50 mA step headline",
        ok,
        &format!(
            "ripple {:.2} mV, settling {:.1} ns, droop {:.2} mV; {elapsed:.1?}",
            ripple * 1e3,
            settling * 1e9,
            droop * 1e3
        ),
    );
    assert!(ok);
}

#[derive(Clone, Copy)]
enum Trend {
    Up,
    Down,
    /// Every point within the flat band of the mean.
    Flat,
    /// Minimum strictly inside the sweep.
    InteriorMin,
}

fn holds(trend: Trend, ys: &[f64]) -> bool {
    match trend {
        Trend::Up => ys.windows(2).all(|w| w[1] >= w[0]),
        Trend::Down => ys.windows(2).all(|w| w[1] <= w[0]),
        Trend::Flat => {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            ys.iter().all(|y| (y - mean).abs() <= TREND_FLAT_BAND * mean)
        }
        Trend::InteriorMin => {
            let (k, _) = ys.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            k > 0 && k + 1 < ys.len() && ys[k] < ys[0] && ys[k] < ys[ys.len() - 1]
        }
    }
}

#[derive(Clone, Copy)]
enum Quantity {
    Ripple,
    Settling,
    Efficiency,
}

/// Runs one preset sweep and checks each listed trend; returns the number of
/// failed trends.
fn check_sweep(preset: &str, label: &str, trends: &[(Quantity, Trend)]) -> usize {
    let p = presets::preset(preset).unwrap();
    assert!(p.values.len() >= TREND_MIN_POINTS, "{preset} has too few points");
    let metrics: Vec<Option<Metrics>> = p
        .values
        .iter()
        .map(|&v| {
            let s = engine::apply_param(&p.base, p.param, v).unwrap();
            let trace = run_checked(&s);
            engine::evaluate(&trace, &s.sim, &s.controller).ok()
        })
        .collect();
    let mut failed = 0;
    for &(q, trend) in trends {
        let ys: Option<Vec<f64>> = metrics
            .iter()
            .map(|m| {
                m.map(|m| match q {
                    Quantity::Ripple => m.ripple_pp,
                    Quantity::Settling => m.settling_time,
                    Quantity::Efficiency => m.current_efficiency.unwrap_or(f64::NAN),
                })
            })
            .collect();
        let name = match q {
            Quantity::Ripple => "ripple",
            Quantity::Settling => "settling",
            Quantity::Efficiency => "efficiency",
        };
        let dir = match trend {
            Trend::Up => "rises",
            Trend::Down => "falls",
            Trend::Flat => "flat",
            Trend::InteriorMin => "interior minimum",
        };
        let ok = ys.as_ref().is_some_and(|ys| holds(trend, ys));
        failed += usize::from(!ok);
        let shown = ys.map_or("unsettled point".to_string(), |ys| {
            ys.iter().map(|y| format!("{y:.3e}")).collect::<Vec<_>>().join(" ")
        });
        say(&format!("    {label}: {name} {dir} vs {}: {} [{shown}]", p.param.name(), if ok { "ok" } else { "violated" }));
    }
    failed
}

fn trend_suite(n_label: &str, sweeps: &[(&str, &str, &[(Quantity, Trend)])]) -> (usize, Duration) {
    let t0 = Instant::now();
    let failed = sweeps.iter().map(|(p, l, t)| check_sweep(p, l, t)).sum();
    let elapsed = t0.elapsed();
    report(4, n_label, failed == 0, &format!("{failed} trend(s) violated; {elapsed:.1?}"));
    (failed, elapsed)
}

#[test]
fn criterion_04_trends_interleaved() {
    use Quantity::*;
    use Trend::*;
    let (failed, elapsed) = trend_suite(
        "interleaved trends",
        &[
            ("fig10", "f_clk", &[(Ripple, Down), (Settling, Down)]),
            ("fig11", "N at fixed total", &[(Ripple, Down), (Settling, Flat)]),
            ("fig13", "C", &[(Settling, Up), (Ripple, Down)]),
            ("fig14", "switch width", &[(Settling, Down), (Ripple, Up)]),
            ("fig9", "efficiency", &[(Efficiency, Down)]),
        ],
    );
    assert!(failed == 0 && elapsed < TREND_BUDGET);
}

#[test]
#[ignore = "fails: the dead-zone controller parks at a fixed point, so steady ripple is microvolts and trendless"]
fn criterion_04_trends_varshift() {
    use Quantity::*;
    use Trend::*;
    let (failed, elapsed) = trend_suite(
        "varshift trends",
        &[
            ("fig3", "comparator count", &[(Ripple, Down), (Settling, Up)]),
            ("fig4", "C", &[(Settling, Up), (Ripple, Down)]),
            ("fig5", "Vref gap", &[(Settling, Up), (Ripple, Up)]),
            ("fig6", "min step", &[(Settling, Down), (Ripple, Up)]),
            ("fig7", "switch strength", &[(Ripple, InteriorMin)]),
        ],
    );
    assert!(failed == 0 && elapsed < TREND_BUDGET);
}

/// Brute-force forward-Euler integration of the interleaved loop on an
/// integer picosecond grid. Shares nothing with the engine but the
/// comparator convention (switch ON iff `v_ref > v`).
fn euler_interleaved(
    n: usize,
    period: f64,
    v_ref: f64,
    g_on: f64,
    vdd: f64,
    c: f64,
    i_load: f64,
    sample_dt: f64,
    t_end: f64,
) -> Vec<f64> {
    let steps_per_phase = (period / n as f64 / ORACLE_DT).round() as u64;
    let steps_per_sample = (sample_dt / ORACLE_DT).round() as u64;
    let total = (t_end / ORACLE_DT).round() as u64;
    let mut gates = vec![false; n];
    let mut v = 0.0_f64;
    let mut out = Vec::with_capacity((total / steps_per_sample + 1) as usize);
    for step in 0..=total {
        if step % steps_per_phase == 0 {
            let k = (step / steps_per_phase) as usize % n;
            gates[k] = v_ref > v;
        }
        if step % steps_per_sample == 0 {
            out.push(v);
        }
        let n_on = gates.iter().filter(|&&g| g).count() as f64;
        v = (v + ORACLE_DT * (n_on * g_on * (vdd - v) - i_load) / c).max(0.0);
    }
    out
}

#[test]
fn criterion_05_fixed_step_oracle() {
    let mut s = presets::table1(1).unwrap();
    s.sim.t_end = ORACLE_T_END;
    let trace = run_checked(&s);
    let ControllerSpec::Interleaved { spec, .. } = &s.controller else { unreachable!() };
    let dldo_core::circuit::SwitchKind::TriodeConductance { g_on } = spec.switch.kind else { unreachable!() };
    let sample_dt = spec.base_clock_period / 16.0;
    let oracle = euler_interleaved(
        spec.n_comparators,
        spec.base_clock_period,
        spec.v_ref,
        g_on,
        s.sim.vdd,
        s.sim.c_load,
        s.load.load_at(0.0),
        sample_dt,
        ORACLE_T_END,
    );
    assert_eq!(oracle.len(), trace.len());
    let (worst, at) = trace
        .samples
        .iter()
        .zip(&oracle)
        .map(|(a, b)| ((a.v_out - b).abs(), a.t))
        .fold((0.0, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
    let ok = worst < ORACLE_TOL;
    report(5, "fixed-step oracle", ok, &format!("max |dV| {:.3} mV at {:.3} us", worst * 1e3, at * 1e6));
    assert!(ok);
}

#[test]
fn criterion_06_forced_rc() {
    let (vdd, g, n_on, c, i) = (0.7, 0.1, 4, 9e-9, 10e-3);
    let switch = SwitchModel::triode(g, vdd).unwrap();
    let mut sim = SimConfig::new(Scheme::Forced, vdd, c, 300e-9);
    sim.v_init = 0.1;
    let s = RunSetup { sim, controller: ControllerSpec::Forced { n_on, switch }, load: LoadProfile::constant(i) };
    let trace = run_checked(&s);
    let g_total = n_on as f64 * g;
    let (v_inf, tau) = (vdd - i / g_total, c / g_total);
    let worst = trace
        .samples
        .iter()
        .map(|p| (p.v_out - (v_inf + (0.1 - v_inf) * (-p.t / tau).exp())).abs())
        .fold(0.0, f64::max);
    let ok = worst < RC_TOL && trace.len() > 100;
    report(6, "forced-ON RC", ok, &format!("max error {:.2e} V over {} samples", worst, trace.len()));
    assert!(ok);
}

#[test]
fn criterion_07_degenerate_grid() {
    // Weak switches keep the steady ripple below the tolerance. With the
    // ripple larger than the tolerance the comparison stops being about the
    // integrators: a sample that lands within rounding error of the
    // reference can be decided differently, after which the two loops
    // follow different (equally valid) limit cycles.
    let (vdd, c) = (1.0, 9e-9);
    let switch = SwitchModel::triode(0.005, vdd).unwrap();
    let ctl = ControllerSpec::Interleaved {
        spec: InterleaveSpec { n_comparators: 8, v_ref: 0.9, base_clock_period: 1e-9, switch },
        map: FreqBandMap::identity(8),
    };
    let load = LoadProfile::step(1e-3, 1e-6, 3e-3);
    let spec = GridSpec::single_node(PadModel::ideal(vdd), c);
    let mut sc = GridScenario::uniform(ctl.clone(), 1);
    sc.loads = vec![NodeLoad { node: 0, profile: load.clone() }];
    sc.steps_per_phase = 64;
    let grid = run_grid(&spec, &sc, 2e-6, None).unwrap();
    let single = run_checked(&RunSetup { sim: SimConfig::new(Scheme::Interleaved, vdd, c, 2e-6), controller: ctl, load });
    let gt = &grid.traces[0].trace;
    let worst = gt.samples.iter().zip(&single.samples).map(|(a, b)| (a.v_out - b.v_out).abs()).fold(0.0, f64::max);
    let ok = gt.len() == single.len() && worst < DEGENERATE_TOL;
    report(7, "degenerate grid", ok, &format!("max |dV| {:.4} mV", worst * 1e3));
    assert!(ok);
}

#[test]
fn criterion_08_grid_scenario() {
    let t0 = Instant::now();
    let (spec, sc) = presets::grid_scenario(1).unwrap();
    assert!(sc.loads.iter().all(|l| l.profile.peak() <= 20e-3));
    let run = run_grid(&spec, &sc, presets::GRID_T_END, None).unwrap();
    let s = summarize(&spec, &sc, &run, presets::GRID_WINDOW).unwrap();
    let elapsed = t0.elapsed();
    let settled = s.all_settled();
    let spread_ok = s.node_spread <= GRID_SPREAD_FACTOR * s.max_ripple();
    let kcl_ok = s.max_kcl_residual < KCL_TOL;
    let ok = settled && spread_ok && kcl_ok && elapsed < GRID_BUDGET;
    report(
        8,
        "grid scenario",
        ok,
        &format!(
            "{} nodes settled: {settled}, spread {:.2} mV vs max ripple {:.2} mV, KCL {:.1e} A; {elapsed:.1?}",
            s.nodes.len(),
            s.node_spread * 1e3,
            s.max_ripple() * 1e3,
            s.max_kcl_residual
        ),
    );
    assert!(ok);
}

#[test]
#[ignore = "fails: the three-step map ripples more than the single-step map at 20 mA"]
fn criterion_09_band_maps() {
    let maps = presets::band_maps();
    let mut ripples = vec![];
    for (label, map) in &maps {
        let (spec, sc) = presets::band_study(map.clone()).unwrap();
        let run = run_grid(&spec, &sc, presets::GRID_T_END, None).unwrap();
        let s = summarize(&spec, &sc, &run, presets::GRID_WINDOW).unwrap();
        assert!(s.all_settled(), "{label} did not settle");
        ripples.push((label, s.max_ripple()));
    }
    let (coarse, smooth) = (ripples[0].1, ripples[ripples.len() - 1].1);
    let ok = smooth <= coarse;
    let shown: Vec<String> = ripples.iter().map(|(l, r)| format!("{l} {:.2} mV", r * 1e3)).collect();
    report(9, "band-map study", ok, &shown.join(", "));
    assert!(ok);
}

#[test]
fn criterion_10_invariants() {
    // Thermometer preservation under random shift sequences.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut thermo_ok = true;
    for _ in 0..THERMO_SEQUENCES {
        let n = rng.random_range(1..=64usize);
        let block = rng.random_range(1..=n as i64);
        let mut s = ThermoState::with_junction(n, rng.random_range(0..=n));
        for _ in 0..rng.random_range(1..=20) {
            s = varshift::apply_shift(&s, rng.random_range(-block..=block)).unwrap();
            thermo_ok &= s.is_thermometer();
        }
    }

    // |shift| <= block_size at every rung, just either side of it, and
    // beyond both ends of the ladder.
    let mut shift_ok = true;
    let mut probes = 0usize;
    for num_c in 1..=16 {
        for block_size in 1..=32 {
            let bank = ComparatorBankSpec { num_c, block_size, ..ComparatorBankSpec::default() };
            let ladder = varshift::reference_ladder(&bank);
            let eps = bank.v_gap * 1e-6;
            let mut vs = vec![ladder[0] - 1.0, ladder[ladder.len() - 1] + 1.0];
            for &r in &ladder {
                vs.extend([r - eps, r, r + eps]);
            }
            for v in vs {
                shift_ok &= varshift::shift_amount(&bank, v).unsigned_abs() as usize <= block_size;
                probes += 1;
            }
        }
    }

    // Bit-identical reruns, with comparator noise on so the seed matters.
    let mut noisy = presets::table1(1).unwrap();
    noisy.sim.offset = OffsetModel { sigma0: 1e-3, enabled: true, ..OffsetModel::default() };
    noisy.sim.seed = 42;
    let determinism_ok = run_checked(&noisy) == run_checked(&noisy);

    // Conservation on runs of every scheme (the acceptance runs above check
    // it too, through `run_checked`).
    let mut conservation_ok = true;
    for name in presets::PRESET_NAMES {
        let p = presets::preset(name).unwrap();
        for &v in &p.values {
            let s = engine::apply_param(&p.base, p.param, v).unwrap();
            conservation_ok &= s.run().unwrap().charge.relative_error() < CONSERVATION_TOL;
        }
    }
    let mut forced = presets::table1(0).unwrap();
    forced.sim.scheme = Scheme::Forced;
    forced.controller = ControllerSpec::Forced { n_on: 3, switch: *forced.controller.switch() };
    conservation_ok &= forced.run().unwrap().charge.relative_error() < CONSERVATION_TOL;

    let ok = thermo_ok && shift_ok && determinism_ok && conservation_ok;
    report(
        10,
        "invariants",
        ok,
        &format!(
            "thermometer {thermo_ok} ({THERMO_SEQUENCES} sequences), shift bound {shift_ok} ({probes} probes), \
             determinism {determinism_ok}, conservation {conservation_ok}"
        ),
    );
    assert!(ok);
}

#[test]
fn varshift_engine_moves_at_most_one_block_per_cycle() {
    let p = presets::preset("fig3").unwrap();
    let s = engine::apply_param(&p.base, SweepParam::CLoad, 1e-9).unwrap();
    let ControllerSpec::VarShift { bank, .. } = &s.controller else { unreachable!() };
    let trace = run_checked(&s);
    for w in trace.samples.windows(2) {
        assert!(w[1].n_on.abs_diff(w[0].n_on) <= bank.block_size);
    }
}
