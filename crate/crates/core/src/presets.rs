//! Documented base configurations: the three reference operating points, the load
//! step headline case and one sweep per sensitivity figure.
//!
//! Varshift figures share one switch design: triode devices sized so the
//! full array delivers about 4x the 10 mA design load at 0.2 V dropout.
//! Interleaved figures use 16 triode switches of 25 mS (40 mA total at
//! 0.1 V dropout) at 1 GHz with C = 3 nF and a 10 mA load.
//!
//! Grid LDOs carry eight 100 mS switches: behind the 1 ohm pad a 35 mA
//! draw leaves about 65 mV of headroom, at which the array still delivers
//! about 50 mA.

use crate::circuit::{LoadProfile, SwitchModel};
use crate::engine::{calibrate_ecmp, ControllerSpec, RunSetup, Scheme, SimConfig, SweepParam};
use crate::error::{Error, Result};
use crate::grid::{build_network, constant_loads, skewed_loads, GridScenario, GridSpec, SkewSpec};
use crate::interleave::{FreqBandMap, InterleaveSpec};
use crate::varshift::ComparatorBankSpec;

/// Reference operating points: load current, clock period, reported ripple, reported
/// current efficiency.
pub const TABLE1: [(f64, f64, f64, f64); 3] =
    [(20e-3, 2e-9, 4.4e-3, 0.973), (10e-3, 4e-9, 5.0e-3, 0.969), (5e-3, 8e-9, 5.2e-3, 0.968)];

const T1_VDD: f64 = 0.7;
const T1_VREF: f64 = 0.6;
const T1_G_ON: f64 = 0.1;
const T1_N: usize = 8;
const T1_C: f64 = 9e-9;

/// Comparator energy calibrated on the 10 mA / 4 ns reference point.
pub fn table1_e_cmp() -> f64 {
    let (i, period, _, eta) = TABLE1[1];
    calibrate_ecmp(eta, i, 1.0 / period, T1_N, T1_VDD).expect("table row is feasible")
}

fn table1_controller(period: f64) -> ControllerSpec {
    let switch = SwitchModel::triode(T1_G_ON, T1_VDD).expect("valid switch");
    ControllerSpec::Interleaved {
        spec: InterleaveSpec { n_comparators: T1_N, v_ref: T1_VREF, base_clock_period: period, switch },
        map: FreqBandMap::identity(T1_N),
    }
}

/// One reference operating point as a fixed-clock run. The row's clock period is the
/// divided clock the band map would select for that load.
pub fn table1(row: usize) -> Result<RunSetup> {
    let &(i, period, _, _) =
        TABLE1.get(row).ok_or_else(|| Error::InvalidArgument(format!("reference points are rows 0..3, got {row}")))?;
    let mut sim = SimConfig::new(Scheme::Interleaved, T1_VDD, T1_C, 4e-6);
    sim.efficiency.e_cmp = table1_e_cmp();
    Ok(RunSetup { sim, controller: table1_controller(period), load: LoadProfile::constant(i) })
}

/// Start of the load step in [`headline`].
pub const HEADLINE_T_STEP: f64 = 2e-6;

/// Eight interleaved comparators at 1 GHz, 9 nF, load stepping 0 to 50 mA.
pub fn headline() -> RunSetup {
    let mut sim = SimConfig::new(Scheme::Interleaved, T1_VDD, T1_C, 4e-6);
    sim.efficiency.e_cmp = table1_e_cmp();
    RunSetup { sim, controller: table1_controller(1e-9), load: LoadProfile::step(0.0, HEADLINE_T_STEP, 50e-3) }
}

const VS_VDD: f64 = 1.0;
const VS_G_ON: f64 = 8e-4;

fn varshift_base(i_load: f64, c_load: f64) -> RunSetup {
    let mut sim = SimConfig::new(Scheme::VarShift, VS_VDD, c_load, 2e-6);
    sim.efficiency.e_cmp = table1_e_cmp();
    let switch = SwitchModel::triode(VS_G_ON, VS_VDD).expect("valid switch");
    RunSetup {
        sim,
        controller: ControllerSpec::VarShift { bank: ComparatorBankSpec::default(), switch },
        load: LoadProfile::constant(i_load),
    }
}

const IL_VDD: f64 = 1.0;
const IL_N: usize = 16;
const IL_G_ON: f64 = 0.025;

fn interleaved_base() -> RunSetup {
    let mut sim = SimConfig::new(Scheme::Interleaved, IL_VDD, 3e-9, 1e-6);
    sim.efficiency.e_cmp = table1_e_cmp();
    let switch = SwitchModel::triode(IL_G_ON, IL_VDD).expect("valid switch");
    RunSetup {
        sim,
        controller: ControllerSpec::Interleaved {
            spec: InterleaveSpec { n_comparators: IL_N, v_ref: 0.9, base_clock_period: 1e-9, switch },
            map: FreqBandMap::identity(IL_N),
        },
        load: LoadProfile::constant(10e-3),
    }
}

const GRID_G_ON: f64 = 0.1;

/// The controller every grid LDO uses, with the given band map.
pub fn grid_ldo(map: FreqBandMap) -> ControllerSpec {
    let switch = SwitchModel::triode(GRID_G_ON, 1.0).expect("valid switch");
    ControllerSpec::Interleaved {
        spec: InterleaveSpec { n_comparators: 8, v_ref: 0.9, base_clock_period: 1e-9, switch },
        map,
    }
}

/// Duration and steady-state window of the grid runs.
pub const GRID_T_END: f64 = 2e-6;
pub const GRID_WINDOW: f64 = 0.5e-6;

/// Nine LDOs on the default 3 x 3 pad grid, each node drawing an
/// asynchronous pulse train with randomly drawn levels up to 20 mA.
pub fn grid_scenario(seed: u64) -> Result<(GridSpec, GridScenario)> {
    let spec = GridSpec::default();
    let net = build_network(&spec)?;
    let mut sc = GridScenario::uniform(grid_ldo(FreqBandMap::identity(8)), net.n_ldos());
    sc.efficiency.e_cmp = table1_e_cmp();
    sc.loads = skewed_loads(&net.ldo_nodes, &SkewSpec { seed, ..SkewSpec::default() })?;
    Ok((spec, sc))
}

/// Band maps for the allocation study, coarsest first. All run at full
/// speed from five switches up and differ in how finely the light-load end
/// is graded; the finer two contain the `{3, 4} -> f0/2` band.
pub fn band_maps() -> Vec<(&'static str, FreqBandMap)> {
    let m = |pairs: &[(&[usize], u32)]| FreqBandMap::from_pairs(pairs, 8).expect("valid map");
    vec![
        ("single-step", m(&[(&[0, 1, 2, 3, 4], 4), (&[5, 6, 7, 8], 1)])),
        ("two-step", m(&[(&[0, 1, 2], 4), (&[3, 4], 2), (&[5, 6, 7, 8], 1)])),
        ("three-step", m(&[(&[0, 1], 4), (&[2], 3), (&[3, 4], 2), (&[5, 6, 7, 8], 1)])),
    ]
}

/// Load per LDO in the band-map study.
pub const BAND_STUDY_LOAD: f64 = 20e-3;

/// Uniform 20 mA at every LDO with the given band map.
pub fn band_study(map: FreqBandMap) -> Result<(GridSpec, GridScenario)> {
    let spec = GridSpec::default();
    let net = build_network(&spec)?;
    let mut sc = GridScenario::uniform(grid_ldo(map), net.n_ldos());
    sc.efficiency.e_cmp = table1_e_cmp();
    sc.loads = constant_loads(&net.ldo_nodes, BAND_STUDY_LOAD);
    Ok((spec, sc))
}

/// A figure reproduction: base run, swept parameter and its grid.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub base: RunSetup,
    pub param: SweepParam,
    pub values: Vec<f64>,
}

pub const PRESET_NAMES: [&str; 11] =
    ["fig3", "fig4", "fig5", "fig6", "fig7", "fig9", "fig10", "fig11", "fig12", "fig13", "fig14"];

pub fn preset(name: &str) -> Result<Preset> {
    use SweepParam::*;
    let (name, base, param, values) = match name {
        "fig3" => ("fig3", varshift_base(10e-3, 5e-9), NComparators, vec![1.0, 2.0, 4.0, 5.0, 8.0]),
        "fig4" => ("fig4", varshift_base(10e-3, 5e-9), CLoad, vec![1e-9, 2e-9, 5e-9, 10e-9, 20e-9]),
        "fig5" => ("fig5", varshift_base(2e-3, 5e-9), VGap, vec![1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3]),
        "fig6" => ("fig6", varshift_base(10e-3, 5e-9), MinStep, vec![1.0, 2.0, 3.0, 4.0, 6.0]),
        "fig7" => (
            "fig7",
            varshift_base(10e-3, 5e-9),
            SwitchStrength,
            vec![2.5e-4, 5e-4, 8e-4, 1.6e-3, 3.2e-3, 6.4e-3],
        ),
        "fig9" => ("fig9", interleaved_base(), FClk, vec![0.5e9, 1e9, 1.5e9, 2e9, 3e9, 4e9]),
        "fig10" => ("fig10", interleaved_base(), FClk, vec![0.5e9, 1e9, 1.5e9, 2e9, 3e9, 4e9]),
        "fig11" => ("fig11", interleaved_base(), NComparatorsFixedTotal, vec![4.0, 8.0, 12.0, 16.0, 24.0, 32.0]),
        "fig12" => ("fig12", interleaved_base(), ILoad, vec![2e-3, 5e-3, 10e-3, 15e-3, 20e-3]),
        "fig13" => ("fig13", interleaved_base(), CLoad, vec![1e-9, 2e-9, 3e-9, 5e-9, 8e-9]),
        "fig14" => ("fig14", interleaved_base(), SwitchStrength, vec![8.25e-3, 16.75e-3, 25e-3, 33.25e-3, 50e-3]),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(Preset { name, base, param, values })
}
