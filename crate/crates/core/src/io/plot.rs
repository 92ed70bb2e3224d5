//! SVG figures overlaying the MPVC-off and MPVC-on runs of a scenario.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::simulation::{Sample, SimulationResult};

pub const PLOT_KINDS: [&str; 3] = ["pilot_voltage", "master_output", "plant_q"];

/// Points kept per trace.
const MAX_POINTS: usize = 2000;
const SIZE: (u32, u32) = (900, 540);

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

struct Trace {
    label: String,
    points: Vec<(f64, f64)>,
}

fn trace(label: String, result: &SimulationResult, f: impl Fn(&Sample) -> f64) -> Trace {
    let rows: Vec<&Sample> = std::iter::once(&result.initial).chain(&result.samples).collect();
    let stride = rows.len().div_ceil(MAX_POINTS).max(1);
    let mut points: Vec<(f64, f64)> = rows.iter().step_by(stride).map(|s| (s.t, f(s))).collect();
    let last = rows[rows.len() - 1];
    if points.last().map(|p| p.0) != Some(last.t) {
        points.push((last.t, f(last)));
    }
    Trace { label, points }
}

fn plot_error(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

fn render(title: &str, y_label: &str, traces: &[Trace]) -> Result<String> {
    let (mut x_max, mut y_min, mut y_max) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for p in traces.iter().flat_map(|t| &t.points) {
        x_max = x_max.max(p.0);
        y_min = y_min.min(p.1);
        y_max = y_max.max(p.1);
    }
    let pad = ((y_max - y_min) * 0.08).max(1e-3);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_error)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(0.0..x_max.max(1e-6), (y_min - pad)..(y_max + pad))
            .map_err(plot_error)?;
        chart
            .configure_mesh()
            .x_desc("time (s)")
            .y_desc(y_label)
            .draw()
            .map_err(plot_error)?;
        for (i, t) in traces.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(t.points.iter().copied(), color.stroke_width(2)))
                .map_err(plot_error)?
                .label(t.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(plot_error)?;
        root.present().map_err(plot_error)?;
    }
    Ok(svg)
}

fn mode(r: &SimulationResult) -> &'static str {
    if r.mpvc_enabled {
        "MPVC on"
    } else {
        "MPVC off"
    }
}

/// Writes `<scenario>_pilot_voltage.svg`, `<scenario>_master_output.svg` and
/// `<scenario>_plant_q.svg`. Nothing is written unless all three render.
pub fn emit_plots(off: &SimulationResult, on: &SimulationResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if off.samples.is_empty() || on.samples.is_empty() {
        return Err(Error::EmptyResult);
    }
    let runs = [off, on];
    let name = &on.scenario;

    let pilot: Vec<Trace> = runs
        .iter()
        .map(|r| trace(format!("pilot V, {}", mode(r)), r, |s| s.pilot_v))
        .collect();
    let master: Vec<Trace> = runs
        .iter()
        .map(|r| trace(format!("dQ_REF, {}", mode(r)), r, |s| s.dq_ref))
        .collect();
    let mut plant_q = Vec::new();
    for (i, pname) in on.plant_names.iter().enumerate() {
        plant_q.push(trace(format!("{pname} Q_REF, MPVC on"), on, |s| s.plants[i].q_ref));
        for r in runs {
            plant_q.push(trace(format!("{pname} Q_POI, {}", mode(r)), r, |s| s.plants[i].q_poi));
        }
    }

    let figures = [
        render(&format!("{name}: pilot bus voltage"), "voltage (pu)", &pilot)?,
        render(&format!("{name}: master controller output"), "dQ_REF (pu)", &master)?,
        render(&format!("{name}: plant reactive power"), "Q (pu, 100 MVA)", &plant_q)?,
    ];
    let mut written = Vec::new();
    for (kind, svg) in PLOT_KINDS.iter().zip(figures) {
        let path = out_dir.join(format!("{name}_{kind}.svg"));
        std::fs::write(&path, svg).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{PlantSample, Termination};

    fn result(steps: usize, mpvc: bool) -> SimulationResult {
        let row = |k: usize| Sample {
            t: k as f64 * 0.005,
            pilot_v: 1.03 - 1e-4 * k as f64,
            dq_ref: 0.001 * k as f64,
            added_q_mvar: 0.0,
            plants: vec![PlantSample {
                q_ref: 0.7,
                q_poi: 0.69,
                v_ref: 1.0,
                q_cmd: 0.8,
                v_poi: 1.0,
            }],
        };
        SimulationResult {
            scenario: "demo".into(),
            mpvc_enabled: mpvc,
            dt: 0.005,
            plant_names: vec!["A".into()],
            v_ref_pilot: 1.03,
            q_ref0: vec![0.7],
            initial: row(0),
            samples: (1..=steps).map(row).collect(),
            termination: Termination::Completed,
            master_saturation_time: None,
        }
    }

    #[test]
    fn three_named_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&result(5000, false), &result(300, true), dir.path()).unwrap();
        let names: Vec<_> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            ["demo_pilot_voltage.svg", "demo_master_output.svg", "demo_plant_q.svg"]
        );
        for f in files {
            assert!(std::fs::read_to_string(f).unwrap().starts_with("<svg"));
        }
    }

    #[test]
    fn trace_ends_at_run_end() {
        let r = result(4999, false);
        let t = trace("x".into(), &r, |s| s.pilot_v);
        assert!(t.points.len() <= MAX_POINTS + 1);
        assert_eq!(t.points.last().unwrap().0, r.samples.last().unwrap().t);
    }

    #[test]
    fn empty_result_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_plots(&result(0, false), &result(10, true), dir.path()).unwrap_err();
        assert!(matches!(err, Error::EmptyResult));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
