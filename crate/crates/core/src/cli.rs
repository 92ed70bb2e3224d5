//! Command-line front end: `simulate`, `compare`, `build-plant` and
//! `export-case`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io::{emit_plots, load_case_file, write_case_file, write_timeseries_csv, Model};
use crate::plant::{build_osw_plant, Connection, OswPlantSpec};
use crate::scenarios::{build_reference_grid, reference_case, run_comparison, Comparison, RunMetrics};
use crate::simulation::{run_simulation, Scenario, SimulationResult, Termination};

#[derive(Debug, Parser)]
#[command(
    name = "mpvc",
    version,
    about = "Multi-plant reactive power and voltage control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its time series as CSV.
    Simulate {
        /// Case file; the built-in reference grid when omitted.
        #[arg(long)]
        case: Option<PathBuf>,
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum, default_value = "on")]
        mpvc: Switch,
        /// Override the scenario end time, seconds.
        #[arg(long)]
        t_end: Option<f64>,
        /// Override the step size, seconds.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a scenario with the MPVC off and on; write both CSVs, the
    /// metrics and three SVG figures.
    Compare {
        #[arg(long)]
        case: Option<PathBuf>,
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the aggregated equivalent of an offshore wind plant.
    BuildPlant {
        /// Rating, MW.
        #[arg(long)]
        rating: f64,
        /// Distance to shore, miles.
        #[arg(long)]
        distance: f64,
        /// Number of collector strings.
        #[arg(long, default_value_t = 10)]
        strings: u32,
        /// Reactive range at the POI, MVar (defaults to half the rating).
        #[arg(long)]
        q_range: Option<f64>,
        /// Print the full equivalent as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write the built-in reference case file.
    ExportCase {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn main_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Simulate {
            case,
            scenario,
            mpvc,
            t_end,
            dt,
            out,
        } => {
            let model = load_model(case.as_deref())?;
            let mut sc = find_scenario(&model, &scenario)?.clone().with_mpvc(mpvc == Switch::On);
            if let Some(t) = t_end {
                sc = sc.with_t_end(t);
            }
            if let Some(dt) = dt {
                sc = sc.with_dt(dt);
            }
            let result = run_simulation(&model.network, &model.controllers, &sc)?;
            create_dir(&out)?;
            let path = out.join(format!("{}_{}.csv", sc.name, mode_tag(sc.mpvc_enabled)));
            write_timeseries_csv(&result, &path)?;
            let mut report = String::new();
            run_report(&mut report, &result, &RunMetrics::of(&result));
            let _ = writeln!(report, "wrote {}", path.display());
            Ok(report)
        }
        Command::Compare { case, scenario, out } => {
            let model = load_model(case.as_deref())?;
            let sc = find_scenario(&model, &scenario)?;
            let cmp = run_comparison(&model, sc)?;
            create_dir(&out)?;
            let mut files = Vec::new();
            for r in [&cmp.off, &cmp.on] {
                let path = out.join(format!("{}_{}.csv", sc.name, mode_tag(r.mpvc_enabled)));
                write_timeseries_csv(r, &path)?;
                files.push(path);
            }
            let metrics_path = out.join(format!("{}_metrics.json", sc.name));
            let metrics = serde_json::json!({
                "scenario": sc.name,
                "mpvc_off": cmp.off_metrics,
                "mpvc_on": cmp.on_metrics,
                "sharing_ratio_on": cmp.on_metrics.sharing_ratio(),
            });
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
            std::fs::write(&metrics_path, text).map_err(|source| Error::Io {
                path: metrics_path.clone(),
                source,
            })?;
            files.push(metrics_path);
            files.extend(emit_plots(&cmp.off, &cmp.on, &out)?);
            let mut report = comparison_report(&cmp);
            for f in files {
                let _ = writeln!(report, "wrote {}", f.display());
            }
            Ok(report)
        }
        Command::BuildPlant {
            rating,
            distance,
            strings,
            q_range,
            json,
        } => {
            let q_range = q_range.unwrap_or(rating / 2.0);
            let spec = OswPlantSpec::new("OSW", rating, distance, strings, 1, q_range);
            let plant = build_osw_plant(&spec, 1000, 1000)?;
            if json {
                return Ok(serde_json::to_string_pretty(&plant).expect("plant serializes") + "\n");
            }
            let mut s = String::new();
            let kind = match plant.connection {
                Connection::Ac => "AC",
                Connection::Dc => "DC",
            };
            let _ = writeln!(s, "connection: {kind}");
            let _ = writeln!(s, "rating: {rating} MW, distance: {distance} mi, strings: {strings}");
            let _ = writeln!(s, "parallel export cables: {}", plant.n_parallel_transmission_cables);
            if let Some(link) = &plant.dc_link {
                let _ = writeln!(
                    s,
                    "dc link: {:.1} kV, loop resistance {:.4} ohm, received {:.2} MW",
                    link.voltage_kv,
                    link.resistance_ohm,
                    link.received_mw(rating)
                );
            }
            let _ = writeln!(
                s,
                "machine: P {:.3} pu, Q limits [{:.3}, {:.3}] pu",
                plant.machine.p_set, plant.machine.q_min, plant.machine.q_max
            );
            for b in &plant.branches {
                let _ = writeln!(
                    s,
                    "branch {:>5} -> {:<5} r {:.6} x {:.6} b {:.6} tap {}",
                    b.from_bus, b.to_bus, b.r, b.x, b.b_shunt, b.tap
                );
            }
            for sh in &plant.shunts {
                let _ = writeln!(s, "shunt at {}: b {:.6} pu", sh.bus, sh.b);
            }
            Ok(s)
        }
        Command::ExportCase { out } => {
            write_case_file(&reference_case(), &out)?;
            Ok(format!("wrote {}\n", out.display()))
        }
    }
}

fn load_model(case: Option<&Path>) -> Result<Model> {
    match case {
        Some(path) => load_case_file(path),
        None => build_reference_grid(),
    }
}

fn find_scenario<'a>(model: &'a Model, name: &str) -> Result<&'a Scenario> {
    model.scenario(name).map_err(|_| {
        Error::InvalidParameter(format!(
            "unknown scenario '{name}'; available: {}",
            model.scenario_names().join(", ")
        ))
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn mode_tag(mpvc: bool) -> &'static str {
    if mpvc {
        "on"
    } else {
        "off"
    }
}

fn opt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "none".to_string(), |t| format!("{t:.3} s"))
}

fn run_report(s: &mut String, r: &SimulationResult, m: &RunMetrics) {
    let _ = writeln!(s, "[{} | MPVC {}]", r.scenario, mode_tag(r.mpvc_enabled));
    match r.termination {
        Termination::Completed => {
            let _ = writeln!(s, "  termination: completed at {:.3} s", r.last().t);
        }
        Termination::Collapsed { t } => {
            let _ = writeln!(s, "  termination: voltage collapse at {t:.3} s");
        }
    }
    let _ = writeln!(
        s,
        "  pilot V: {:.6} pu (setpoint {:.6})",
        r.last().pilot_v,
        r.v_ref_pilot
    );
    let _ = writeln!(s, "  final pilot deviation: {:.3e} pu", m.final_pilot_deviation);
    for (name, dq) in r.plant_names.iter().zip(&m.dq_poi) {
        let _ = writeln!(s, "  {name} dQ_POI: {dq:+.6} pu");
    }
    if let Some(l) = m.collapse_load_mvar {
        let _ = writeln!(s, "  added load at collapse: {l:.2} MVar");
    }
    let _ = writeln!(s, "  master saturation: {}", opt_time(m.master_saturation_time));
}

fn comparison_report(c: &Comparison) -> String {
    let mut s = String::new();
    run_report(&mut s, &c.off, &c.off_metrics);
    run_report(&mut s, &c.on, &c.on_metrics);
    if let Some(r) = c.on_metrics.sharing_ratio() {
        let _ = writeln!(s, "sharing ratio dQ1/dQ2 (MPVC on): {r:.4}");
    }
    let _ = writeln!(
        s,
        "collapse times: MPVC off {}, MPVC on {}",
        opt_time(c.off_metrics.collapse_time),
        opt_time(c.on_metrics.collapse_time)
    );
    s
}
