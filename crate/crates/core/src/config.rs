//! TOML run configuration.
//!
//! Every physical quantity is in SI base units and may be written either as
//! a number or as a string with an engineering prefix and an optional unit:
//! `c_load = "9nF"`, `f0 = "1 GHz"`, `t_end = 4e-6`.
//!
//! ```toml
//! [sim]
//! scheme = "interleaved"
//! vdd = 0.7
//! c_load = "9n"
//! t_end = "4u"
//!
//! [interleave]
//! n_comparators = 8
//! v_ref = 0.6
//! f0 = "250M"
//! g_on = 0.1
//!
//! [load]
//! i_load = "10m"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::circuit::{LoadProfile, OffsetModel, Pulse, SwitchKind, SwitchModel};
use crate::engine::{ControllerSpec, EfficiencyModel, RunSetup, Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::grid::{skewed_loads, GridScenario, GridSpec, NodeLoad, PadModel, SkewSpec};
use crate::interleave::{Band, FreqBandMap, InterleaveSpec};
use crate::varshift::ComparatorBankSpec;

/// A float that also parses from strings such as `"9n"` or `"2.5 mA"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Quantity(pub f64);

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity(v)
    }
}

const UNITS: [&str; 9] = ["Hz", "Ohm", "ohm", "F", "s", "V", "A", "S", "H"];

fn prefix_exponent(p: &str) -> Option<i32> {
    Some(match p {
        "" => 0,
        "f" => -15,
        "p" => -12,
        "n" => -9,
        "u" | "µ" => -6,
        "m" => -3,
        "k" => 3,
        "M" => 6,
        "G" => 9,
        _ => return None,
    })
}

/// Parses a number with an optional engineering prefix and unit. The prefix
/// is folded into the decimal exponent, so `"9n"` reads exactly as `9e-9`.
pub fn parse_quantity(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot read '{s}' as a quantity (examples: 9n, 2.5 mA, 1e-9)"));
    let split = s
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(s.len()))
        .rev()
        .find(|&i| s[..i].trim_end().parse::<f64>().is_ok())
        .ok_or_else(bad)?;
    let number = s[..split].trim_end();
    let rest = s[split..].trim();
    let unit = UNITS.iter().find(|u| rest.ends_with(*u)).copied().unwrap_or("");
    let shift = prefix_exponent(&rest[..rest.len() - unit.len()]).ok_or_else(bad)?;
    let (mantissa, exp) = match number.find(['e', 'E']) {
        Some(i) => (&number[..i], number[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (number, 0),
    };
    let v: f64 = format!("{mantissa}e{}", exp + shift).parse().map_err(|_| bad())?;
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Quantity;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string like \"9n\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Quantity, E> {
                Ok(Quantity(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Quantity, E> {
                Ok(Quantity(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Quantity, E> {
                Ok(Quantity(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Quantity, E> {
                parse_quantity(v).map(Quantity).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchType {
    #[default]
    Triode,
    ConstantCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub scheme: Scheme,
    pub vdd: Quantity,
    pub c_load: Quantity,
    pub t_end: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<Quantity>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub v_init: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ripple_window: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarShiftSection {
    pub num_c: usize,
    pub v_center: Quantity,
    pub v_gap: Quantity,
    pub block_size: usize,
    #[serde(default = "default_n_switches")]
    pub n_switches: usize,
    pub clock_period: Quantity,
    #[serde(default)]
    pub switch: SwitchType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_on: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_on: Option<Quantity>,
}

fn default_n_switches() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterleaveSection {
    pub n_comparators: usize,
    pub v_ref: Quantity,
    /// Undivided clock frequency.
    pub f0: Quantity,
    /// Band map; all counts at divider 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<Vec<Band>>,
    #[serde(default)]
    pub switch: SwitchType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_on: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_on: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedSection {
    pub n_on: usize,
    #[serde(default)]
    pub switch: SwitchType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_on: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_on: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub period: Quantity,
    pub duty: f64,
    pub i_high: Quantity,
    pub i_low: Quantity,
    #[serde(default)]
    pub phase: Quantity,
}

/// Exactly one of `i_load` or `segments`, optionally with a pulse on top.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_load: Option<Quantity>,
    /// `[t_start, i_load]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<(Quantity, Quantity)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencySection {
    #[serde(default)]
    pub e_cmp: Quantity,
    #[serde(default)]
    pub i_static: Quantity,
    /// Target for `calibrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetSection {
    pub sigma0: Quantity,
    #[serde(default = "default_f_knee")]
    pub f_knee: Quantity,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

fn default_f_knee() -> Quantity {
    Quantity(1e9)
}

fn default_exponent() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Grid scenario. Every LDO uses the `[interleave]` controller with the pad
/// supply as its rail. Loads come from `loads_file`, a uniform `i_load`, or
/// the seeded skewed generator, in that order of precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "d_cell")]
    pub cell_size: Quantity,
    #[serde(default = "d_seg")]
    pub segment_len: Quantity,
    #[serde(default = "d_rseg")]
    pub r_segment: Quantity,
    #[serde(default = "d_pads")]
    pub n_pads_x: usize,
    #[serde(default = "d_pads")]
    pub n_pads_y: usize,
    #[serde(default = "d_clump")]
    pub c_lumped: Quantity,
    /// Defaults to every pad.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldo_positions: Option<Vec<usize>>,
    #[serde(default = "d_rpad")]
    pub r_pad: Quantity,
    #[serde(default = "d_lpad")]
    pub l_pad: Quantity,
    #[serde(default = "d_cpad")]
    pub c_pad: Quantity,
    #[serde(default = "d_vsup")]
    pub v_supply: Quantity,
    #[serde(default = "d_imax")]
    pub i_max_per_ldo: Quantity,
    #[serde(default = "d_spp")]
    pub steps_per_phase: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observe: Vec<usize>,
    /// JSON list of `{node, profile}` objects, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads_file: Option<String>,
    /// Same constant load at every LDO node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_load: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<SkewSection>,
}

fn d_cell() -> Quantity {
    Quantity(GridSpec::default().cell_size)
}
fn d_seg() -> Quantity {
    Quantity(GridSpec::default().segment_len)
}
fn d_rseg() -> Quantity {
    Quantity(GridSpec::default().r_segment)
}
fn d_pads() -> usize {
    3
}
fn d_clump() -> Quantity {
    Quantity(GridSpec::default().c_lumped)
}
fn d_rpad() -> Quantity {
    Quantity(PadModel::flip_chip().r_pad)
}
fn d_lpad() -> Quantity {
    Quantity(PadModel::flip_chip().l_pad)
}
fn d_cpad() -> Quantity {
    Quantity(PadModel::flip_chip().c_pad)
}
fn d_vsup() -> Quantity {
    Quantity(PadModel::flip_chip().v_supply)
}
fn d_imax() -> Quantity {
    Quantity(35e-3)
}
fn d_spp() -> u32 {
    4
}

impl Default for GridSection {
    fn default() -> Self {
        toml::from_str("").expect("all grid fields have defaults")
    }
}

/// Skewed-load generator settings; the seed is `sim.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewSection {
    pub levels: Vec<Quantity>,
    pub periods: Vec<Quantity>,
    #[serde(default = "d_duty")]
    pub duty: f64,
}

fn d_duty() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub varshift: Option<VarShiftSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleave: Option<InterleaveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced: Option<ForcedSection>,
    #[serde(default)]
    pub load: LoadSection,
    #[serde(default)]
    pub efficiency: EfficiencySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
}

fn switch_model(ty: SwitchType, g_on: Option<Quantity>, i_on: Option<Quantity>, vdd: f64, section: &str) -> Result<SwitchModel> {
    let kind = match (ty, g_on, i_on) {
        (SwitchType::Triode, Some(g), None) => SwitchKind::TriodeConductance { g_on: g.0 },
        (SwitchType::ConstantCurrent, None, Some(i)) => SwitchKind::ConstantCurrent { i_on: i.0 },
        (SwitchType::Triode, _, _) => {
            return Err(Error::Config(format!("{section}: a triode switch needs g_on and no i_on")))
        }
        (SwitchType::ConstantCurrent, _, _) => {
            return Err(Error::Config(format!("{section}: a constant-current switch needs i_on and no g_on")))
        }
    };
    SwitchModel::new(kind, vdd)
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("missing [{name}] section")))
}

impl Config {
    /// Parses TOML; errors carry the line, column and field.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        let mut sim = SimConfig::new(s.scheme, s.vdd.0, s.c_load.0, s.t_end.0);
        sim.sample_dt = s.sample_dt.map(|q| q.0);
        sim.seed = s.seed;
        sim.v_init = s.v_init.0;
        sim.ripple_window = s.ripple_window.map(|q| q.0);
        sim.efficiency = EfficiencyModel { e_cmp: self.efficiency.e_cmp.0, i_static: self.efficiency.i_static.0 };
        if let Some(o) = &self.offset {
            sim.offset = OffsetModel { sigma0: o.sigma0.0, f_knee: o.f_knee.0, exponent: o.exponent, enabled: o.enabled };
        }
        sim.validate()?;
        Ok(sim)
    }

    fn interleaved(&self, vdd: f64) -> Result<ControllerSpec> {
        let s = section(&self.interleave, "interleave")?;
        if !(s.f0.0 > 0.0) {
            return Err(Error::Config(format!("interleave.f0 must be > 0, got {}", s.f0.0)));
        }
        let switch = switch_model(s.switch, s.g_on, s.i_on, vdd, "interleave")?;
        let map = match &s.bands {
            Some(b) => FreqBandMap::new(b.clone(), s.n_comparators)?,
            None => FreqBandMap::identity(s.n_comparators),
        };
        let spec =
            InterleaveSpec { n_comparators: s.n_comparators, v_ref: s.v_ref.0, base_clock_period: 1.0 / s.f0.0, switch };
        let c = ControllerSpec::Interleaved { spec, map };
        c.validate()?;
        Ok(c)
    }

    pub fn controller(&self) -> Result<ControllerSpec> {
        let vdd = self.sim.vdd.0;
        let c = match self.sim.scheme {
            Scheme::VarShift => {
                let s = section(&self.varshift, "varshift")?;
                let bank = ComparatorBankSpec {
                    num_c: s.num_c,
                    v_center: s.v_center.0,
                    v_gap: s.v_gap.0,
                    block_size: s.block_size,
                    n_switches: s.n_switches,
                    clock_period: s.clock_period.0,
                };
                ControllerSpec::VarShift { bank, switch: switch_model(s.switch, s.g_on, s.i_on, vdd, "varshift")? }
            }
            Scheme::Interleaved => return self.interleaved(vdd),
            Scheme::Forced => {
                let s = section(&self.forced, "forced")?;
                ControllerSpec::Forced { n_on: s.n_on, switch: switch_model(s.switch, s.g_on, s.i_on, vdd, "forced")? }
            }
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load_profile(&self) -> Result<LoadProfile> {
        let l = &self.load;
        let mut profile = match (&l.i_load, &l.segments) {
            (Some(i), None) => LoadProfile::constant(i.0),
            (None, Some(segs)) => LoadProfile { segments: segs.iter().map(|(t, i)| (t.0, i.0)).collect(), pulse: None },
            (None, None) if l.pulse.is_some() => LoadProfile::constant(0.0),
            (None, None) => return Err(Error::Config("[load] needs i_load, segments or pulse".into())),
            (Some(_), Some(_)) => return Err(Error::Config("[load] takes i_load or segments, not both".into())),
        };
        if let Some(p) = &l.pulse {
            profile.pulse =
                Some(Pulse { period: p.period.0, duty: p.duty, i_high: p.i_high.0, i_low: p.i_low.0, phase: p.phase.0 });
        }
        profile.validate()?;
        Ok(profile)
    }

    /// Everything a single-node run needs.
    pub fn run_setup(&self) -> Result<RunSetup> {
        Ok(RunSetup { sim: self.sim_config()?, controller: self.controller()?, load: self.load_profile()? })
    }

    /// Grid geometry and scenario. `base_dir` resolves a relative
    /// `loads_file`.
    pub fn grid_setup(&self, base_dir: &Path) -> Result<(GridSpec, GridScenario)> {
        let g = section(&self.grid, "grid")?;
        let n_pads = g.n_pads_x * g.n_pads_y;
        let spec = GridSpec {
            cell_size: g.cell_size.0,
            segment_len: g.segment_len.0,
            r_segment: g.r_segment.0,
            n_pads_x: g.n_pads_x,
            n_pads_y: g.n_pads_y,
            c_lumped: g.c_lumped.0,
            ldo_positions: g.ldo_positions.clone().unwrap_or_else(|| (0..n_pads).collect()),
            pad: PadModel { r_pad: g.r_pad.0, l_pad: g.l_pad.0, c_pad: g.c_pad.0, v_supply: g.v_supply.0 },
        };
        let net = crate::grid::build_network(&spec)?;
        let mut sc = GridScenario::uniform(self.interleaved(g.v_supply.0)?, net.n_ldos());
        sc.observe = g.observe.clone();
        sc.i_max_per_ldo = g.i_max_per_ldo.0;
        sc.steps_per_phase = g.steps_per_phase;
        sc.v_init = self.sim.v_init.0;
        sc.efficiency = EfficiencyModel { e_cmp: self.efficiency.e_cmp.0, i_static: self.efficiency.i_static.0 };
        sc.loads = if let Some(file) = &g.loads_file {
            let path: PathBuf = base_dir.join(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read grid.loads_file {}: {e}", path.display())))?;
            serde_json::from_str::<Vec<NodeLoad>>(&text)
                .map_err(|e| Error::Config(format!("grid.loads_file {}: {e}", path.display())))?
        } else if let Some(i) = g.i_load {
            crate::grid::constant_loads(&net.ldo_nodes, i.0)
        } else {
            let mut skew = SkewSpec { seed: self.sim.seed, ..SkewSpec::default() };
            if let Some(s) = &g.skew {
                skew.levels = s.levels.iter().map(|q| q.0).collect();
                skew.periods = s.periods.iter().map(|q| q.0).collect();
                skew.duty = s.duty;
            }
            skewed_loads(&net.ldo_nodes, &skew)?
        };
        sc.validate(&net)?;
        Ok((spec, sc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities() {
        let cases = [
            ("9n", 9e-9),
            ("9nF", 9e-9),
            ("2.5 mA", 2.5e-3),
            ("1G", 1e9),
            ("1 GHz", 1e9),
            ("250M", 250e6),
            ("1e-9", 1e-9),
            ("3", 3.0),
            ("4u", 4e-6),
            ("112 fF", 112e-15),
            ("5p", 5e-12),
            ("0.55 Ohm", 0.55),
            ("10ms", 10e-3),
            ("1.5e3k", 1.5e6),
            ("-2m", -2e-3),
        ];
        for (s, want) in cases {
            let got = parse_quantity(s).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{s}: {got}");
        }
        for s in ["", "n", "9x", "9 nn", "abc", "1e999"] {
            assert!(parse_quantity(s).is_err(), "{s}");
        }
    }

    const TABLE1: &str = r#"
[sim]
scheme = "interleaved"
vdd = 0.7
c_load = "9n"
t_end = "4u"

[interleave]
n_comparators = 8
v_ref = 0.6
f0 = "250M"
g_on = 0.1
bands = [{counts = [0, 1, 2], div = 8}, {counts = [3, 4, 5, 6, 7, 8], div = 1}]

[load]
i_load = "10m"

[efficiency]
e_cmp = "112f"
"#;

    #[test]
    fn parses_interleaved() {
        let cfg = Config::from_toml(TABLE1).unwrap();
        let setup = cfg.run_setup().unwrap();
        assert_eq!(setup.sim.c_load, 9e-9);
        assert_eq!(setup.load, LoadProfile::constant(10e-3));
        match setup.controller {
            ControllerSpec::Interleaved { spec, map } => {
                assert!((spec.base_clock_period - 4e-9).abs() < 1e-21);
                assert_eq!(map.divider_for(1), 8);
                assert_eq!(spec.switch.kind, SwitchKind::TriodeConductance { g_on: 0.1 });
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = Config::from_toml(TABLE1).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::from_json(&json).unwrap(), cfg);
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let e = Config::from_toml(&TABLE1.replace("c_load = \"9n\"", "c_load = \"9q\"")).unwrap_err();
        assert!(e.to_string().contains("c_load") || e.to_string().contains("line"), "{e}");
        let e = Config::from_toml(&TABLE1.replace("g_on", "g_onn")).unwrap_err();
        assert!(e.to_string().contains("g_onn"), "{e}");
        let cfg = Config::from_toml(&TABLE1.replace("g_on = 0.1", "")).unwrap();
        assert!(matches!(cfg.run_setup(), Err(Error::Config(_))));
        let cfg = Config::from_toml(&TABLE1.replace("scheme = \"interleaved\"", "scheme = \"var_shift\"")).unwrap();
        assert!(cfg.run_setup().unwrap_err().to_string().contains("[varshift]"));
    }

    #[test]
    fn grid_defaults_match_the_preset_geometry() {
        let cfg = Config::from_toml(&format!("{TABLE1}\n[grid]\n")).unwrap();
        let (spec, sc) = cfg.grid_setup(Path::new(".")).unwrap();
        assert_eq!(spec, GridSpec::default());
        assert_eq!(sc.ldos.len(), 9);
        assert_eq!(sc.loads.len(), 9);
        let missing = Config::from_toml(&format!("{TABLE1}\n[grid]\nloads_file = \"nope.json\"\n")).unwrap();
        assert!(matches!(missing.grid_setup(Path::new("/nonexistent")), Err(Error::Config(_))));
    }
}
