//! Power-delivery co-simulation: flip-chip pads feeding LDOs that regulate
//! an orthogonal resistive grid, solved by backward-Euler nodal analysis.
//!
//! Node layout: grid crossings first, row-major (`y * nx + x`), then one pad
//! node per LDO in `ldo_positions` order. Pads without an LDO carry no
//! current and are left out.

mod banded;
mod loads;

use serde::{Deserialize, Serialize};

use crate::circuit::{LoadProfile, SwitchKind, SwitchModel};
use crate::engine::{evaluate, ControllerSpec, EfficiencyModel, Metrics, Sample, Scheme, SimConfig, Trace};
use crate::error::{Error, Result};
use crate::interleave::{FreqBandMap, GateVector, InterleaveSpec};

pub use banded::{BandedCholesky, BandedSpd};
pub use loads::{skewed_loads, NodeLoad, SkewSpec};

/// Series `r_pad + l_pad` from an ideal source, `c_pad` to ground at the pad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadModel {
    pub r_pad: f64,
    pub l_pad: f64,
    pub c_pad: f64,
    pub v_supply: f64,
}

impl PadModel {
    /// 1 ohm, 1 nH, 5 pF, 1 V.
    pub fn flip_chip() -> Self {
        PadModel { r_pad: 1.0, l_pad: 1e-9, c_pad: 5e-12, v_supply: 1.0 }
    }

    /// Zero-impedance connection to the supply.
    pub fn ideal(v_supply: f64) -> Self {
        PadModel { r_pad: 0.0, l_pad: 0.0, c_pad: 0.0, v_supply }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.r_pad, self.l_pad, self.c_pad].iter().all(|x| *x >= 0.0 && x.is_finite());
        if !ok || !(self.v_supply > 0.0) {
            return Err(Error::Config("pad r, l, c must be >= 0 and v_supply > 0".into()));
        }
        Ok(())
    }

    fn is_ideal(&self) -> bool {
        self.r_pad == 0.0 && self.l_pad == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Pad pitch. Zero collapses the grid to one node (needs one pad).
    pub cell_size: f64,
    pub segment_len: f64,
    /// Resistance of one `segment_len` piece.
    pub r_segment: f64,
    pub n_pads_x: usize,
    pub n_pads_y: usize,
    /// Capacitance at each LDO output node.
    pub c_lumped: f64,
    /// Pad indices (row-major over the pad array) that host an LDO.
    pub ldo_positions: Vec<usize>,
    pub pad: PadModel,
}

impl Default for GridSpec {
    /// 3 x 3 pads at 1 mm pitch, 0.1 mm segments of 0.55 ohm, 9 nF per
    /// LDO node, an LDO at every pad.
    fn default() -> Self {
        GridSpec {
            cell_size: 1e-3,
            segment_len: 1e-4,
            r_segment: 0.55,
            n_pads_x: 3,
            n_pads_y: 3,
            c_lumped: 9e-9,
            ldo_positions: (0..9).collect(),
            pad: PadModel::flip_chip(),
        }
    }
}

impl GridSpec {
    /// One node, one pad, one LDO.
    pub fn single_node(pad: PadModel, c_lumped: f64) -> Self {
        GridSpec {
            cell_size: 0.0,
            segment_len: 0.0,
            r_segment: 0.0,
            n_pads_x: 1,
            n_pads_y: 1,
            c_lumped,
            ldo_positions: vec![0],
            pad,
        }
    }

    /// Segments per pad pitch; 0 for the single-node grid.
    fn segments_per_cell(&self) -> Result<usize> {
        if self.cell_size == 0.0 {
            if self.n_pads_x != 1 || self.n_pads_y != 1 {
                return Err(Error::Config("grid.cell_size = 0 needs exactly one pad".into()));
            }
            return Ok(0);
        }
        if !(self.cell_size > 0.0 && self.segment_len > 0.0) {
            return Err(Error::Config("grid.cell_size and grid.segment_len must be > 0".into()));
        }
        let ratio = self.cell_size / self.segment_len;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "grid.segment_len ({}) must divide grid.cell_size ({})",
                self.segment_len, self.cell_size
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.pad.validate()?;
        if self.n_pads_x == 0 || self.n_pads_y == 0 {
            return Err(Error::Config("grid needs at least one pad in each direction".into()));
        }
        let k = self.segments_per_cell()?;
        if k > 0 && !(self.r_segment > 0.0) {
            return Err(Error::Config("grid.r_segment must be > 0 for a multi-node grid".into()));
        }
        if !(self.c_lumped > 0.0) {
            return Err(Error::Config("grid.c_lumped must be > 0".into()));
        }
        if self.ldo_positions.is_empty() {
            return Err(Error::Config("grid needs at least one LDO".into()));
        }
        let n_pads = self.n_pads_x * self.n_pads_y;
        let mut seen = vec![false; n_pads];
        for &p in &self.ldo_positions {
            if p >= n_pads {
                return Err(Error::Config(format!("LDO position {p} is not one of the {n_pads} pads")));
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::Config(format!("two LDOs at pad {p}")));
            }
        }
        Ok(())
    }
}

/// Assembled topology of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nx: usize,
    pub ny: usize,
    pub g_segment: f64,
    /// Grid node of each LDO output, in `ldo_positions` order.
    pub ldo_nodes: Vec<usize>,
    pub c_lumped: f64,
    pub pad: PadModel,
}

/// Grid crossings at `segment_len` pitch over `n_pads * cell_size` in each
/// direction, pads at cell centres.
pub fn build_network(spec: &GridSpec) -> Result<Network> {
    spec.validate()?;
    let k = spec.segments_per_cell()?;
    let (nx, ny) = (spec.n_pads_x * k + 1, spec.n_pads_y * k + 1);
    let ldo_nodes = spec
        .ldo_positions
        .iter()
        .map(|&p| {
            let (px, py) = (p % spec.n_pads_x, p / spec.n_pads_x);
            (py * k + k / 2) * nx + px * k + k / 2
        })
        .collect();
    let g_segment = if k == 0 { 0.0 } else { 1.0 / spec.r_segment };
    Ok(Network { nx, ny, g_segment, ldo_nodes, c_lumped: spec.c_lumped, pad: spec.pad })
}

impl Network {
    /// Grid nodes, excluding pads.
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_ldos(&self) -> usize {
        self.ldo_nodes.len()
    }

    /// Every segment once, as `(lower index, higher index)`.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nx, ny) = (self.nx, self.ny);
        (0..nx * ny).flat_map(move |i| {
            let (x, y) = (i % nx, i / nx);
            let right = (x + 1 < nx).then_some((i, i + 1));
            let down = (y + 1 < ny).then_some((i, i + nx));
            right.into_iter().chain(down)
        })
    }

    fn bandwidth(&self) -> usize {
        if self.ny > 1 {
            self.nx
        } else {
            usize::from(self.nx > 1)
        }
    }

    /// Node counts and element totals, for checking a geometry by eye.
    pub fn audit(&self) -> String {
        format!(
            "{} x {} grid nodes, {} segments of {} S, {} LDO nodes {:?}, {} pad nodes",
            self.nx,
            self.ny,
            self.segments().count(),
            self.g_segment,
            self.n_ldos(),
            self.ldo_nodes,
            self.n_ldos()
        )
    }
}

/// Node voltages (grid nodes then pad nodes) and pad inductor currents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub node_voltages: Vec<f64>,
    pub inductor_currents: Vec<f64>,
    pub time: f64,
}

impl GridState {
    /// Grid at `v_grid`, pads at the supply, no pad current.
    pub fn initial(net: &Network, v_grid: f64) -> Self {
        let mut node_voltages = vec![v_grid; net.n_nodes()];
        node_voltages.extend(std::iter::repeat_n(net.pad.v_supply, net.n_ldos()));
        GridState { node_voltages, inductor_currents: vec![0.0; net.n_ldos()], time: 0.0 }
    }

    pub fn pad_voltage(&self, net: &Network, ldo: usize) -> f64 {
        self.node_voltages[net.n_nodes() + ldo]
    }
}

/// What an LDO's switch array presents between its pad and output node:
/// a conductance (triode devices) and a fixed current (current-source devices).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LdoDrive {
    pub conductance: f64,
    pub current: f64,
}

impl LdoDrive {
    pub fn from_switch(switch: &SwitchModel, n_on: usize) -> Self {
        let n = n_on as f64;
        match switch.kind {
            SwitchKind::TriodeConductance { g_on } => LdoDrive { conductance: n * g_on, current: 0.0 },
            SwitchKind::ConstantCurrent { i_on } => LdoDrive { conductance: 0.0, current: n * i_on },
        }
    }
}

/// Per-LDO terms of the pad branch after eliminating the pad node.
struct PadTerms {
    g_eff: f64,
    inj: f64,
    b_p: f64,
    d_p: f64,
    g_s: f64,
}

fn pad_terms(pad: &PadModel, dt: f64, drive: LdoDrive, v_p_old: f64, i_l_old: f64) -> PadTerms {
    let (g_sw, i_cc) = (drive.conductance, drive.current);
    if pad.is_ideal() {
        return PadTerms { g_eff: g_sw, inj: g_sw * pad.v_supply + i_cc, b_p: 0.0, d_p: 0.0, g_s: f64::INFINITY };
    }
    let g_s = 1.0 / (pad.r_pad + pad.l_pad / dt);
    let y_p = g_s + pad.c_pad / dt;
    let b_p = g_s * pad.v_supply + g_s * (pad.l_pad / dt) * i_l_old + pad.c_pad / dt * v_p_old - i_cc;
    let d_p = y_p + g_sw;
    PadTerms { g_eff: g_sw * y_p / d_p, inj: g_sw * b_p / d_p + i_cc, b_p, d_p, g_s }
}

/// Backward-Euler stepper with the constant part of the nodal matrix
/// factored once. Switch conductances enter as a rank-`n_ldos` update.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    net: &'a Network,
    dt: f64,
    chol: BandedCholesky,
    /// `B^-1 e_j` for each LDO node, column-major.
    z: Vec<f64>,
    /// `E^T B^-1 E`, row-major.
    w: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(net: &'a Network, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be > 0, got {dt}")));
        }
        let n = net.n_nodes();
        let mut b = BandedSpd::zeros(n, net.bandwidth());
        for (i, j) in net.segments() {
            b.add(i, i, net.g_segment);
            b.add(j, j, net.g_segment);
            b.add(i, j, -net.g_segment);
        }
        for &node in &net.ldo_nodes {
            b.add(node, node, net.c_lumped / dt);
        }
        let chol = b.cholesky()?;
        let k = net.n_ldos();
        let mut z = vec![0.0; n * k];
        let mut w = vec![0.0; k * k];
        for (j, &node) in net.ldo_nodes.iter().enumerate() {
            let col = &mut z[j * n..(j + 1) * n];
            col[node] = 1.0;
            chol.solve_in_place(col);
        }
        for (a, &node) in net.ldo_nodes.iter().enumerate() {
            for c in 0..k {
                w[a * k + c] = z[c * n + node];
            }
        }
        Ok(Stepper { net, dt, chol, z, w })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step. `injections[i]` is current pushed into grid node `i`
    /// (loads are negative).
    pub fn step(&self, state: &GridState, drives: &[LdoDrive], injections: &[f64]) -> Result<GridState> {
        let net = self.net;
        let (n, k, dt) = (net.n_nodes(), net.n_ldos(), self.dt);
        if drives.len() != k || injections.len() != n || state.node_voltages.len() != n + k {
            return Err(Error::InvalidArgument("drive, injection or state size does not match the network".into()));
        }
        let cdt = net.c_lumped / dt;
        let mut rhs = injections.to_vec();
        let mut terms = Vec::with_capacity(k);
        let mut d = vec![0.0; k];
        for (j, &node) in net.ldo_nodes.iter().enumerate() {
            let t = pad_terms(&net.pad, dt, drives[j], state.node_voltages[n + j], state.inductor_currents[j]);
            rhs[node] += cdt * state.node_voltages[node] + t.inj;
            d[j] = t.g_eff;
            terms.push(t);
        }
        self.chol.solve_in_place(&mut rhs);
        let mut x = rhs;
        if d.iter().any(|&g| g != 0.0) {
            let mut m = vec![0.0; k * k];
            for a in 0..k {
                for c in 0..k {
                    m[a * k + c] = f64::from(a == c) + d[a] * self.w[a * k + c];
                }
            }
            let r: Vec<f64> = (0..k).map(|a| d[a] * x[net.ldo_nodes[a]]).collect();
            let u = banded::dense_solve(m, r)?;
            for (j, uj) in u.iter().enumerate() {
                let col = &self.z[j * n..(j + 1) * n];
                for (xi, zi) in x.iter_mut().zip(col) {
                    *xi -= zi * uj;
                }
            }
        }
        let mut currents = vec![0.0; k];
        x.resize(n + k, 0.0);
        for (j, t) in terms.iter().enumerate() {
            let v_o = x[net.ldo_nodes[j]];
            let drive = drives[j];
            if net.pad.is_ideal() {
                x[n + j] = net.pad.v_supply;
                currents[j] = drive.conductance * (net.pad.v_supply - v_o) + drive.current;
            } else {
                let v_p = (t.b_p + drive.conductance * v_o) / t.d_p;
                x[n + j] = v_p;
                currents[j] = t.g_s
                    * (net.pad.v_supply - v_p + net.pad.l_pad / dt * state.inductor_currents[j]);
            }
        }
        Ok(GridState { node_voltages: x, inductor_currents: currents, time: state.time + dt })
    }

    /// Largest KCL mismatch over all nodes for a step from `old` to `new`.
    pub fn kcl_residual(&self, old: &GridState, new: &GridState, drives: &[LdoDrive], injections: &[f64]) -> f64 {
        kcl_residual(self.net, old, new, drives, injections, self.dt)
    }
}

/// One backward-Euler step, factoring the system from scratch.
pub fn transient_step(
    net: &Network,
    state: &GridState,
    drives: &[LdoDrive],
    injections: &[f64],
    dt: f64,
) -> Result<GridState> {
    Stepper::new(net, dt)?.step(state, drives, injections)
}

/// Sum of currents leaving each node under the discretized element laws,
/// maximised over nodes.
pub fn kcl_residual(
    net: &Network,
    old: &GridState,
    new: &GridState,
    drives: &[LdoDrive],
    injections: &[f64],
    dt: f64,
) -> f64 {
    let n = net.n_nodes();
    let v = &new.node_voltages;
    let mut sum: Vec<f64> = injections.iter().map(|i| -i).collect();
    for (i, j) in net.segments() {
        let cur = net.g_segment * (v[i] - v[j]);
        sum[i] += cur;
        sum[j] -= cur;
    }
    let mut worst: f64 = 0.0;
    let pad = &net.pad;
    for (j, &node) in net.ldo_nodes.iter().enumerate() {
        let v_p = v[n + j];
        let i_sw = drives[j].conductance * (v_p - v[node]) + drives[j].current;
        sum[node] += net.c_lumped / dt * (v[node] - old.node_voltages[node]) - i_sw;
        if !pad.is_ideal() {
            let pad_sum = pad.c_pad / dt * (v_p - old.node_voltages[n + j]) + i_sw - new.inductor_currents[j];
            let law = new.inductor_currents[j] * (pad.r_pad + pad.l_pad / dt)
                - (pad.v_supply - v_p + pad.l_pad / dt * old.inductor_currents[j]);
            worst = worst.max(pad_sum.abs()).max(law.abs() / (pad.r_pad + pad.l_pad / dt));
        }
    }
    sum.iter().fold(worst, |w, s| w.max(s.abs()))
}

/// Everything a grid run needs besides the geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScenario {
    /// One controller per LDO, interleaved or forced.
    pub ldos: Vec<ControllerSpec>,
    pub loads: Vec<NodeLoad>,
    /// Grid nodes to record. Empty means the LDO nodes.
    #[serde(default)]
    pub observe: Vec<usize>,
    /// Largest load any one LDO node may carry.
    #[serde(default = "default_i_max")]
    pub i_max_per_ldo: f64,
    /// Time steps per undivided comparator phase.
    #[serde(default = "default_steps_per_phase")]
    pub steps_per_phase: u32,
    #[serde(default)]
    pub v_init: f64,
    /// Control-current model used when summarizing node efficiency.
    #[serde(default)]
    pub efficiency: EfficiencyModel,
}

fn default_i_max() -> f64 {
    35e-3
}

fn default_steps_per_phase() -> u32 {
    4
}

impl GridScenario {
    /// The same controller at every LDO, no loads yet.
    pub fn uniform(controller: ControllerSpec, n_ldos: usize) -> Self {
        GridScenario {
            ldos: vec![controller; n_ldos],
            loads: Vec::new(),
            observe: Vec::new(),
            i_max_per_ldo: default_i_max(),
            steps_per_phase: default_steps_per_phase(),
            v_init: 0.0,
            efficiency: EfficiencyModel::default(),
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.ldos.len() != net.n_ldos() {
            return Err(Error::Config(format!("{} LDO controllers for {} LDO positions", self.ldos.len(), net.n_ldos())));
        }
        for c in &self.ldos {
            c.validate()?;
            if matches!(c, ControllerSpec::VarShift { .. }) {
                return Err(Error::Config("grid LDOs run the interleaved controller (or forced)".into()));
            }
        }
        if self.steps_per_phase < 1 {
            return Err(Error::Config("grid.steps_per_phase must be >= 1".into()));
        }
        for l in &self.loads {
            l.profile.validate()?;
            if l.node >= net.n_nodes() {
                return Err(Error::Config(format!("load at node {} outside the {}-node grid", l.node, net.n_nodes())));
            }
        }
        for &node in &net.ldo_nodes {
            let total: f64 = self.loads.iter().filter(|l| l.node == node).map(|l| l.profile.peak()).sum();
            if total > self.i_max_per_ldo * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "load at LDO node {node} peaks at {total} A, above the {} A per-LDO maximum",
                    self.i_max_per_ldo
                )));
            }
        }
        if let Some(&bad) = self.observe.iter().find(|&&o| o >= net.n_nodes()) {
            return Err(Error::Config(format!("observed node {bad} outside the grid")));
        }
        Ok(())
    }

    fn observed(&self, net: &Network) -> Vec<usize> {
        if self.observe.is_empty() {
            net.ldo_nodes.clone()
        } else {
            self.observe.clone()
        }
    }
}

/// Interleaved controller on the integer step lattice.
enum LdoState<'a> {
    Interleaved {
        spec: &'a InterleaveSpec,
        map: &'a FreqBandMap,
        gates: GateVector,
        unit: u64,
        phase: usize,
        period_start: u64,
        period: u64,
        next: u64,
    },
    Forced {
        n_on: usize,
    },
}

impl LdoState<'_> {
    fn n_on(&self) -> usize {
        match self {
            LdoState::Interleaved { gates, .. } => gates.on_count(),
            LdoState::Forced { n_on } => *n_on,
        }
    }

    fn fire(&mut self, tick: u64, v: f64) -> Result<()> {
        if let LdoState::Interleaved { spec, map, gates, unit, phase, period_start, period, next } = self {
            if *next != tick {
                return Ok(());
            }
            if *phase == 0 {
                *period = *unit * spec.n_comparators as u64 * map.divider_for(gates.on_count()) as u64;
                *period_start = tick;
            }
            gates.update(*phase, spec.v_ref, v, 0.0)?;
            *phase += 1;
            if *phase == spec.n_comparators {
                *phase = 0;
            }
            *next = if *phase == 0 {
                *period_start + *period
            } else {
                *period_start + *phase as u64 * *period / spec.n_comparators as u64
            };
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub node: usize,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub dt: f64,
    pub traces: Vec<NodeTrace>,
    /// Largest per-node KCL residual over all steps, in amperes.
    pub max_kcl_residual: f64,
    /// Largest switch-array current each LDO delivered.
    pub peak_ldo_current: Vec<f64>,
}

/// Time step of a scenario: the shortest undivided phase over the LDOs,
/// divided by `steps_per_phase`.
pub fn grid_dt(scenario: &GridScenario) -> Result<f64> {
    let phase = scenario
        .ldos
        .iter()
        .filter_map(|c| match c {
            ControllerSpec::Interleaved { spec, .. } => Some(spec.phase_duration(1)),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    if phase.is_infinite() {
        return Err(Error::Config("grid run needs at least one interleaved LDO to set the time step".into()));
    }
    Ok(phase / scenario.steps_per_phase as f64)
}

/// Co-simulates every LDO controller with the grid from t = 0 to `t_end`.
/// Controllers fire on the step lattice, then samples are recorded, then
/// the network advances one step.
pub fn run_grid(spec: &GridSpec, scenario: &GridScenario, t_end: f64, sample_dt: Option<f64>) -> Result<GridRun> {
    let net = build_network(spec)?;
    scenario.validate(&net)?;
    if !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be >= 0, got {t_end}")));
    }
    let dt = grid_dt(scenario)?;
    let mut ctl = Vec::with_capacity(scenario.ldos.len());
    for c in &scenario.ldos {
        ctl.push(match c {
            ControllerSpec::Interleaved { spec, map } => {
                let ratio = spec.phase_duration(1) / dt;
                let unit = ratio.round();
                if (ratio - unit).abs() > 1e-6 * ratio {
                    return Err(Error::Config(format!(
                        "LDO phase {} s is not a whole number of {} s grid steps",
                        spec.phase_duration(1),
                        dt
                    )));
                }
                LdoState::Interleaved {
                    spec,
                    map,
                    gates: GateVector::all_off(spec.n_comparators),
                    unit: unit as u64,
                    phase: 0,
                    period_start: 0,
                    period: 0,
                    next: 0,
                }
            }
            ControllerSpec::Forced { n_on, .. } => LdoState::Forced { n_on: *n_on },
            ControllerSpec::VarShift { .. } => unreachable!("rejected by validate"),
        });
    }
    let finest = scenario.ldos.iter().filter_map(|c| c.finest_period()).fold(f64::INFINITY, f64::min);
    let sample_ticks = ((sample_dt.unwrap_or(finest / 16.0) / dt).round() as u64).max(1);
    let n_ticks = (t_end / dt).round() as u64;
    let observed = scenario.observed(&net);
    let ldo_at: Vec<Option<usize>> = observed.iter().map(|o| net.ldo_nodes.iter().position(|n| n == o)).collect();

    let stepper = Stepper::new(&net, dt)?;
    let mut state = GridState::initial(&net, scenario.v_init);
    let mut traces: Vec<NodeTrace> =
        observed.iter().map(|&node| NodeTrace { node, trace: Trace::default() }).collect();
    let mut injections = vec![0.0; net.n_nodes()];
    let mut drives = vec![LdoDrive::default(); net.n_ldos()];
    let mut peak = vec![0.0f64; net.n_ldos()];
    let mut worst = 0.0f64;

    for tick in 0..=n_ticks {
        let t = tick as f64 * dt;
        for (j, c) in ctl.iter_mut().enumerate() {
            c.fire(tick, state.node_voltages[net.ldo_nodes[j]])?;
        }
        if tick % sample_ticks == 0 {
            for (tr, at) in traces.iter_mut().zip(&ldo_at) {
                let (n_on, period_eff) = match at.map(|j| &ctl[j]) {
                    Some(LdoState::Interleaved { period, .. }) => (ctl[at.unwrap()].n_on(), *period as f64 * dt),
                    Some(c) => (c.n_on(), 0.0),
                    None => (0, 0.0),
                };
                let i_load = scenario.loads.iter().filter(|l| l.node == tr.node).map(|l| l.profile.load_at(t)).sum();
                tr.trace.samples.push(Sample { t, v_out: state.node_voltages[tr.node], n_on, i_load, period_eff });
            }
        }
        if tick == n_ticks {
            break;
        }
        injections.iter_mut().for_each(|x| *x = 0.0);
        for l in &scenario.loads {
            injections[l.node] -= l.profile.load_at(t);
        }
        for (j, c) in ctl.iter().enumerate() {
            drives[j] = LdoDrive::from_switch(scenario.ldos[j].switch(), c.n_on());
        }
        let next = stepper.step(&state, &drives, &injections)?;
        worst = worst.max(stepper.kcl_residual(&state, &next, &drives, &injections));
        for (j, &node) in net.ldo_nodes.iter().enumerate() {
            let v_p = next.node_voltages[net.n_nodes() + j];
            let i_sw = drives[j].conductance * (v_p - next.node_voltages[node]) + drives[j].current;
            peak[j] = peak[j].max(i_sw);
        }
        state = next;
    }
    Ok(GridRun { dt, traces, max_kcl_residual: worst, peak_ldo_current: peak })
}

/// Largest instantaneous spread between node voltages over samples at or
/// after `t_from`. Traces are assumed to share sample times.
pub fn node_spread(traces: &[Trace], t_from: f64) -> f64 {
    let Some(first) = traces.first() else { return 0.0 };
    (0..first.len())
        .filter(|&i| first.samples[i].t >= t_from)
        .map(|i| {
            let (lo, hi) = traces
                .iter()
                .filter_map(|tr| tr.samples.get(i))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.v_out), hi.max(s.v_out)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Per-node outcome in a grid summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: usize,
    /// `None` if the node never settled.
    pub metrics: Option<Metrics>,
    /// Peak-to-peak over the final window, settled or not.
    pub tail_ripple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub dt: f64,
    pub nodes: Vec<NodeSummary>,
    pub node_spread: f64,
    pub max_kcl_residual: f64,
    pub peak_ldo_current: Vec<f64>,
}

impl GridSummary {
    pub fn all_settled(&self) -> bool {
        self.nodes.iter().all(|n| n.metrics.is_some())
    }

    pub fn max_ripple(&self) -> f64 {
        self.nodes.iter().filter_map(|n| n.metrics.map(|m| m.ripple_pp)).fold(0.0, f64::max)
    }
}

/// Metrics per observed node against the reference of the LDO at that node
/// (or the first LDO), plus the spread over the final `window`.
pub fn summarize(spec: &GridSpec, scenario: &GridScenario, run: &GridRun, window: f64) -> Result<GridSummary> {
    let net = build_network(spec)?;
    let regulating = scenario
        .ldos
        .iter()
        .find(|c| c.v_target().is_some())
        .ok_or_else(|| Error::Config("summary needs at least one regulating LDO".into()))?;
    let t_end = run.traces.first().map_or(0.0, |t| t.trace.t_end());
    let mut sim = SimConfig::new(Scheme::Interleaved, spec.pad.v_supply, spec.c_lumped, t_end);
    sim.ripple_window = Some(window);
    sim.efficiency = scenario.efficiency;
    let mut nodes = Vec::with_capacity(run.traces.len());
    for nt in &run.traces {
        let ctl = net
            .ldo_nodes
            .iter()
            .position(|&n| n == nt.node)
            .map(|j| &scenario.ldos[j])
            .filter(|c| c.v_target().is_some())
            .unwrap_or(regulating);
        let metrics = match evaluate(&nt.trace, &sim, ctl) {
            Ok(m) => Some(m),
            Err(Error::NotSettled { .. }) => None,
            Err(e) => return Err(e),
        };
        nodes.push(NodeSummary { node: nt.node, metrics, tail_ripple: nt.trace.peak_to_peak_since(t_end - window) });
    }
    let traces: Vec<Trace> = run.traces.iter().map(|t| t.trace.clone()).collect();
    Ok(GridSummary {
        dt: run.dt,
        nodes,
        node_spread: node_spread(&traces, t_end - window),
        max_kcl_residual: run.max_kcl_residual,
        peak_ldo_current: run.peak_ldo_current.clone(),
    })
}

/// A constant `i_load` at each of `nodes`.
pub fn constant_loads(nodes: &[usize], i_load: f64) -> Vec<NodeLoad> {
    nodes.iter().map(|&node| NodeLoad { node, profile: LoadProfile::constant(i_load) }).collect()
}
