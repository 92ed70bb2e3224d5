use std::path::Path;

use mpvc::io::{load_case_file, parse_case};
use mpvc::scenarios::{build_reference_grid, reference_case, run_comparison, LOAD_RAMP, SCENARIO_NAMES};
use mpvc::simulation::SimulationResult;

fn shipped_case() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/cases/reference.json"))
}

/// Samples at whole seconds, the last one included.
fn every_second(r: &SimulationResult) -> Vec<(f64, f64)> {
    let stride = (1.0 / r.dt).round() as usize;
    r.samples
        .iter()
        .skip(stride - 1)
        .step_by(stride)
        .map(|s| (s.t, s.pilot_v))
        .collect()
}

#[test]
fn shipped_case_matches_builtin_grid() {
    let text = std::fs::read_to_string(shipped_case()).unwrap();
    assert_eq!(parse_case(&text, shipped_case()).unwrap(), reference_case());
    let from_file = load_case_file(shipped_case()).unwrap();
    let builtin = build_reference_grid().unwrap();
    assert_eq!(from_file.network, builtin.network);
    assert_eq!(from_file.controllers, builtin.controllers);
}

#[test]
fn builtin_scenarios_are_addressable() {
    let model = build_reference_grid().unwrap();
    for name in SCENARIO_NAMES {
        assert_eq!(model.scenario(name).unwrap().name, name);
    }
}

#[test]
fn ramp_holds_setpoint_until_saturation_then_declines() {
    let model = build_reference_grid().unwrap();
    let cmp = run_comparison(&model, model.scenario(LOAD_RAMP).unwrap()).unwrap();
    let on = &cmp.on;
    let t_sat = on.master_saturation_time.expect("master saturates");
    let t_collapse = on.termination.collapse_time().expect("on run collapses");
    let points = every_second(on);
    for &(t, v) in points.iter().filter(|p| p.0 < t_sat) {
        assert!((v - on.v_ref_pilot).abs() < 1e-3, "t={t}: {v}");
    }
    let after: Vec<_> = points.iter().filter(|p| p.0 > t_sat && p.0 < t_collapse).collect();
    assert!(after.len() > 10);
    for w in after.windows(2) {
        assert!(w[1].1 < w[0].1, "rise at t={}: {} -> {}", w[1].0, w[0].1, w[1].1);
    }
    // Collapse is a result: the last row sits at the collapse time.
    assert_eq!(on.last().t, t_collapse);
    let added = on.last().added_q_mvar;
    assert!((added - (t_collapse - 5.0)).abs() < 1e-6, "added {added}");
}

#[test]
fn mpvc_off_ramp_loses_setpoint_early() {
    let model = build_reference_grid().unwrap();
    let cmp = run_comparison(&model, model.scenario(LOAD_RAMP).unwrap()).unwrap();
    let off = &cmp.off;
    assert!(off.master_saturation_time.is_none());
    assert!(off.samples.iter().all(|s| s.dq_ref == 0.0));
    let at_100 = off.samples.iter().find(|s| s.t >= 100.0).unwrap();
    assert!((at_100.pilot_v - off.v_ref_pilot).abs() > 1e-3);
    assert!(cmp.off_metrics.collapse_time < cmp.on_metrics.collapse_time);
}
