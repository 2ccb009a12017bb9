//! `dldo`: run single-node simulations, parameter sweeps, grid scenarios and
//! efficiency calibration from a TOML config or a named preset.
//!
//! Exit codes: 0 success, 1 a run did not settle, 2 usage or config error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dldo_core::config::{parse_quantity, Config};
use dldo_core::engine::{self, calibrate_ecmp, ControllerSpec, Metrics, RunSetup, SweepParam};
use dldo_core::grid::{run_grid, summarize, GridScenario, GridSpec, GridSummary};
use dldo_core::presets;
use serde_json::json;

#[derive(Parser)]
#[command(name = "dldo", version, about = "Behavioral digital LDO simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One single-node run: trace.csv and metrics.json.
    Simulate(Common),
    /// One run per value of a parameter: sweep_<param>.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary, e.g. f_clk, c_load, n_comparators.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values; engineering prefixes allowed.
        #[arg(long)]
        values: Option<String>,
    },
    /// Multi-LDO grid co-simulation: per-node traces and grid_summary.json.
    Grid(Common),
    /// Comparator energy that meets a target efficiency.
    Calibrate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Named preset instead of a config: fig3..fig7, fig9..fig14 for
    /// sweeps; fig19 (band-map study) or fig21 (skewed loads) for grid.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// A run that finished but did not settle.
struct NotSettled;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(c) => simulate(&c),
        Command::Sweep { common, param, values } => sweep(&common, param.as_deref(), values.as_deref()),
        Command::Grid(c) => grid(&c),
        Command::Calibrate(c) => calibrate(&c),
    };
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(NotSettled)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

type Outcome = Result<std::result::Result<(), NotSettled>>;

fn load_config(c: &Common) -> Result<Config> {
    let Some(path) = &c.config else { bail!("--config is required here") };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = Config::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = c.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn config_dir(c: &Common) -> PathBuf {
    c.config.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default()
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: PathBuf, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(contents).with_context(|| format!("writing {}", path.display()))
}

fn metrics_json(m: &dldo_core::Result<Metrics>) -> serde_json::Value {
    match m {
        Ok(m) => json!({
            "settled": true,
            "ripple_pp": m.ripple_pp,
            "settling_time": m.settling_time,
            "current_efficiency": m.current_efficiency,
            "v_mean_ss": m.v_mean_ss,
        }),
        Err(dldo_core::Error::NotSettled { tail_ripple }) => json!({
            "settled": false,
            "ripple_pp": null,
            "settling_time": null,
            "current_efficiency": null,
            "v_mean_ss": null,
            "tail_ripple": tail_ripple,
        }),
        Err(e) => json!({ "settled": false, "error": e.to_string() }),
    }
}

fn trace_file(out: &Path, stem: &str, trace: &engine::Trace, format: Format) -> Result<()> {
    match format {
        Format::Csv => write(out.join(format!("{stem}.csv")), trace.to_csv_string().as_bytes()),
        Format::Json => write(out.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&trace.samples)?),
    }
}

fn simulate(c: &Common) -> Outcome {
    if c.preset.is_some() {
        bail!("simulate takes --config, not --preset");
    }
    let cfg = load_config(c)?;
    let setup = cfg.run_setup()?;
    let trace = setup.run()?;
    let metrics = engine::evaluate(&trace, &setup.sim, &setup.controller);
    if let Err(e @ (dldo_core::Error::InvalidArgument(_) | dldo_core::Error::CorruptedState(_))) = &metrics {
        bail!("{e}");
    }
    create_out(&c.out)?;
    trace_file(&c.out, "trace", &trace, c.format)?;
    let mut doc = metrics_json(&metrics);
    doc["config"] = serde_json::to_value(&cfg)?;
    write(c.out.join("metrics.json"), &serde_json::to_vec_pretty(&doc)?)?;
    Ok(match metrics {
        Ok(_) => Ok(()),
        Err(e) => {
            eprintln!("{e}");
            Err(NotSettled)
        }
    })
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_quantity(t).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        bail!("--values is empty");
    }
    Ok(v)
}

fn sweep(c: &Common, param: Option<&str>, values: Option<&str>) -> Outcome {
    let (base, param, values): (RunSetup, SweepParam, Vec<f64>) = match (&c.preset, &c.config) {
        (Some(name), None) => {
            let mut p = presets::preset(name)?;
            if let Some(s) = c.seed {
                p.base.sim.seed = s;
            }
            let param = match param {
                Some(s) => s.parse()?,
                None => p.param,
            };
            let values = match values {
                Some(v) => parse_values(v)?,
                None => p.values,
            };
            (p.base, param, values)
        }
        (None, Some(_)) => {
            let base = load_config(c)?.run_setup()?;
            let Some(param) = param else { bail!("--param is required with --config") };
            let Some(values) = values else { bail!("--values is required with --config") };
            (base, param.parse()?, parse_values(values)?)
        }
        _ => bail!("sweep needs exactly one of --config or --preset"),
    };
    let rows = engine::sweep(&base, param, &values)?;
    create_out(&c.out)?;
    let stem = format!("sweep_{param}");
    match c.format {
        Format::Csv => {
            let mut s = String::from("value,ripple_pp,settling_time,efficiency\n");
            for r in &rows {
                match &r.metrics {
                    Ok(m) => {
                        let eta = m.current_efficiency.map_or(String::new(), |e| e.to_string());
                        s.push_str(&format!("{},{},{},{}\n", r.value, m.ripple_pp, m.settling_time, eta));
                    }
                    Err(_) => s.push_str(&format!("{},,,\n", r.value)),
                }
            }
            write(c.out.join(format!("{stem}.csv")), s.as_bytes())?;
        }
        Format::Json => {
            let doc: Vec<_> = rows
                .iter()
                .map(|r| {
                    let mut m = metrics_json(&r.metrics);
                    m["value"] = json!(r.value);
                    m
                })
                .collect();
            write(c.out.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&doc)?)?;
        }
    }
    Ok(if rows.iter().all(|r| r.metrics.is_ok()) { Ok(()) } else { Err(NotSettled) })
}

fn run_and_write_grid(spec: &GridSpec, sc: &GridScenario, t_end: f64, window: f64, out: &Path, format: Format) -> Result<GridSummary> {
    let run = run_grid(spec, sc, t_end, None)?;
    let summary = summarize(spec, sc, &run, window)?;
    create_out(out)?;
    for nt in &run.traces {
        trace_file(out, &format!("node_{}", nt.node), &nt.trace, format)?;
    }
    write(out.join("loads.json"), &serde_json::to_vec_pretty(&sc.loads)?)?;
    write(out.join("grid_summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

fn grid(c: &Common) -> Outcome {
    let settled = match (&c.preset, &c.config) {
        (Some(name), None) => match name.as_str() {
            "fig21" => {
                let (spec, sc) = presets::grid_scenario(c.seed.unwrap_or(1))?;
                run_and_write_grid(&spec, &sc, presets::GRID_T_END, presets::GRID_WINDOW, &c.out, c.format)?.all_settled()
            }
            "fig19" => {
                let mut table = String::from("map,max_ripple_pp,node_spread\n");
                let mut all = true;
                for (label, map) in presets::band_maps() {
                    let (spec, sc) = presets::band_study(map)?;
                    let s = run_and_write_grid(
                        &spec,
                        &sc,
                        presets::GRID_T_END,
                        presets::GRID_WINDOW,
                        &c.out.join(label),
                        c.format,
                    )?;
                    all &= s.all_settled();
                    table.push_str(&format!("{label},{},{}\n", s.max_ripple(), s.node_spread));
                }
                write(c.out.join("band_study.csv"), table.as_bytes())?;
                all
            }
            other => bail!("unknown grid preset '{other}' (known: fig19, fig21)"),
        },
        (None, Some(_)) => {
            let cfg = load_config(c)?;
            let (spec, sc) = cfg.grid_setup(&config_dir(c))?;
            let sim = cfg.sim_config()?;
            run_and_write_grid(&spec, &sc, sim.t_end, sim.ripple_window(), &c.out, c.format)?.all_settled()
        }
        _ => bail!("grid needs exactly one of --config or --preset"),
    };
    Ok(if settled { Ok(()) } else { Err(NotSettled) })
}

fn calibrate(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let Some(eta) = cfg.efficiency.target_eta else { bail!("calibrate needs efficiency.target_eta") };
    let Some(i_load) = cfg.load.i_load else { bail!("calibrate needs a constant load.i_load") };
    let controller = cfg.controller()?;
    let f_clk = match &controller {
        ControllerSpec::Interleaved { spec, .. } => 1.0 / spec.base_clock_period,
        ControllerSpec::VarShift { bank, .. } => 1.0 / bank.clock_period,
        ControllerSpec::Forced { .. } => bail!("a forced run has no comparators to calibrate"),
    };
    let e = calibrate_ecmp(eta, i_load.0, f_clk, controller.n_comparators(), cfg.sim.vdd.0)?;
    println!("e_cmp = {e:e}");
    create_out(&c.out)?;
    write(c.out.join("efficiency.toml"), format!("[efficiency]\ne_cmp = {e:e}\n").as_bytes())?;
    Ok(Ok(()))
}
