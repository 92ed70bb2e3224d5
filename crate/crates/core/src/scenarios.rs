//! The reference study grid, the three disturbance scenarios and the
//! MPVC on/off comparison harness.
//!
//! The grid is an 18-bus system: an external 500 kV equivalent, a 500 kV
//! generator near the load area, a 500/345/138 kV backbone, a 138 kV pilot
//! bus with a small local generator, and two 230 kV POIs each hosting an
//! AC-connected offshore plant built by the plant builder.

use serde::{Deserialize, Serialize};

use crate::control::{MasterParams, PlantLocalParams, SlaveParams};
use crate::error::{Error, Result};
use crate::io::case::{assemble, CaseFile, ControllerConfig, Model, PlantEntry, SCHEMA_VERSION};
use crate::network::{Branch, Bus, BusId, BusKind, Injector, InjectorId, InjectorKind, Network, Shunt};
use crate::plant::OswPlantSpec;
use crate::simulation::{run_simulation, Event, EventAction, Scenario, SimulationResult, DEFAULT_DT};

pub const EXTERNAL_BUS: BusId = 1;
pub const GEN500_BUS: BusId = 2;
pub const PILOT_BUS: BusId = 5;
pub const POI1_BUS: BusId = 8;
pub const POI2_BUS: BusId = 9;
pub const GEN500_INJECTOR: InjectorId = 2;

pub const GEN_TRIP: &str = "gen-trip";
pub const LOAD_RAMP: &str = "load-ramp";
pub const LOAD_STEP: &str = "load-step";
pub const SCENARIO_NAMES: [&str; 3] = [GEN_TRIP, LOAD_RAMP, LOAD_STEP];

/// Disturbance time shared by all scenarios, seconds.
pub const DISTURBANCE_TIME: f64 = 5.0;

/// Tunable data of the reference grid (per-unit on 100 MVA unless noted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceGridParams {
    pub external_v: f64,
    pub external_x: f64,
    pub gen500_p: f64,
    pub gen500_v: f64,
    pub gen500_q_max: f64,
    pub gen500_x: f64,
    pub x_500_345: f64,
    pub x_345_138: f64,
    pub x_pilot_north: f64,
    pub x_pilot_south: f64,
    pub x_north_south: f64,
    pub x_poi_xfmr: f64,
    pub x_poi_tie: f64,
    pub local_gen_p: f64,
    pub local_gen_v: f64,
    pub local_gen_q_max: f64,
    pub local_gen_x: f64,
    pub pilot_load: (f64, f64),
    pub north_load: (f64, f64),
    pub south_load: (f64, f64),
    pub station_345_load: (f64, f64),
    /// Capacitor bank susceptances at the pilot, north and south buses.
    pub capacitors: (f64, f64, f64),
    pub osw1_mw: f64,
    pub osw2_mw: f64,
    pub osw1_q_mvar: f64,
    pub osw2_q_mvar: f64,
    pub plant_local: PlantLocalParams,
}

impl Default for ReferenceGridParams {
    fn default() -> Self {
        Self {
            external_v: 1.0,
            external_x: 0.0299,
            gen500_p: 1.067,
            gen500_v: 1.0076,
            gen500_q_max: 3.05,
            gen500_x: 0.005,
            x_500_345: 0.005,
            x_345_138: 0.0264,
            x_pilot_north: 0.02,
            x_pilot_south: 0.02,
            x_north_south: 0.04,
            x_poi_xfmr: 0.0255,
            x_poi_tie: 0.02,
            local_gen_p: 2.0,
            local_gen_v: 1.0341,
            local_gen_q_max: 1.0626,
            local_gen_x: 0.02,
            pilot_load: (6.376, 1.034),
            north_load: (4.0, 1.0),
            south_load: (4.5, 1.1),
            station_345_load: (4.0, 1.0),
            capacitors: (4.795, 1.377, 1.377),
            osw1_mw: 800.0,
            osw2_mw: 880.0,
            osw1_q_mvar: 24.56,
            osw2_q_mvar: 20.5,
            plant_local: PlantLocalParams::default(),
        }
    }
}

fn line(from: BusId, to: BusId, x: f64) -> Branch {
    Branch::line(from, to, x / 10.0, x, 0.0)
}

fn xfmr(from: BusId, to: BusId, x: f64) -> Branch {
    Branch::transformer(from, to, x / 40.0, x, 1.0)
}

pub fn reference_network(p: &ReferenceGridParams) -> Network {
    let bus = |id, kind, kv, name: &str| Bus::new(id, kind, kv).named(name);
    let buses = vec![
        bus(EXTERNAL_BUS, BusKind::Slack, 500.0, "External 500"),
        bus(GEN500_BUS, BusKind::VoltageControlled, 500.0, "G500"),
        bus(3, BusKind::Load, 500.0, "Station 500"),
        bus(4, BusKind::Load, 345.0, "Station 345").with_load(p.station_345_load.0, p.station_345_load.1),
        bus(PILOT_BUS, BusKind::Load, 138.0, "Pilot 138").with_load(p.pilot_load.0, p.pilot_load.1),
        bus(6, BusKind::Load, 138.0, "North 138").with_load(p.north_load.0, p.north_load.1),
        bus(7, BusKind::Load, 138.0, "South 138").with_load(p.south_load.0, p.south_load.1),
        bus(POI1_BUS, BusKind::Load, 230.0, "POI1 230"),
        bus(POI2_BUS, BusKind::Load, 230.0, "POI2 230"),
        bus(10, BusKind::VoltageControlled, 138.0, "Local gen 138"),
    ];
    let branches = vec![
        line(EXTERNAL_BUS, 3, p.external_x),
        line(GEN500_BUS, 3, p.gen500_x),
        xfmr(3, 4, p.x_500_345),
        xfmr(4, PILOT_BUS, p.x_345_138),
        line(PILOT_BUS, 6, p.x_pilot_north),
        line(PILOT_BUS, 7, p.x_pilot_south),
        line(6, 7, p.x_north_south),
        xfmr(POI1_BUS, 6, p.x_poi_xfmr),
        xfmr(POI2_BUS, 7, p.x_poi_xfmr),
        line(POI1_BUS, POI2_BUS, p.x_poi_tie),
        xfmr(10, PILOT_BUS, p.local_gen_x),
    ];
    let injectors = vec![
        Injector::new(1, EXTERNAL_BUS, InjectorKind::BoundaryEquivalent)
            .named("External grid")
            .with_v_set(p.external_v)
            .with_q_limits(-99.0, 99.0),
        Injector::new(GEN500_INJECTOR, GEN500_BUS, InjectorKind::Synchronous)
            .named("G500")
            .with_p(p.gen500_p)
            .with_v_set(p.gen500_v)
            .with_q_limits(-p.gen500_q_max, p.gen500_q_max),
        Injector::new(3, 10, InjectorKind::Synchronous)
            .named("Local gen")
            .with_p(p.local_gen_p)
            .with_v_set(p.local_gen_v)
            .with_q_limits(-p.local_gen_q_max, p.local_gen_q_max),
    ];
    let shunts = [(PILOT_BUS, p.capacitors.0), (6, p.capacitors.1), (7, p.capacitors.2)]
        .into_iter()
        .filter(|&(_, b)| b != 0.0)
        .map(|(bus, b)| Shunt { bus, g: 0.0, b })
        .collect();
    Network {
        buses,
        branches,
        shunts,
        injectors,
        ..Default::default()
    }
}

pub fn scenario_generator_trip() -> Scenario {
    Scenario {
        name: GEN_TRIP.into(),
        events: vec![Event::new(
            DISTURBANCE_TIME,
            EventAction::TripInjector { id: GEN500_INJECTOR },
        )],
        t_end: 60.0,
        dt: DEFAULT_DT,
        mpvc_enabled: true,
    }
}

pub fn scenario_load_ramp() -> Scenario {
    Scenario {
        name: LOAD_RAMP.into(),
        events: vec![Event::new(
            DISTURBANCE_TIME,
            EventAction::LoadRamp {
                bus: PILOT_BUS,
                rate_mvar_per_s: 1.0,
                stop: None,
                step_interval: None,
            },
        )],
        t_end: 400.0,
        dt: DEFAULT_DT,
        mpvc_enabled: true,
    }
}

pub fn scenario_load_step() -> Scenario {
    Scenario {
        name: LOAD_STEP.into(),
        events: vec![Event::new(
            DISTURBANCE_TIME,
            EventAction::LoadStep {
                bus: PILOT_BUS,
                dp_mw: 0.0,
                dq_mvar: 60.0,
            },
        )],
        t_end: 60.0,
        dt: DEFAULT_DT,
        mpvc_enabled: true,
    }
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    match name {
        GEN_TRIP => Ok(scenario_generator_trip()),
        LOAD_RAMP => Ok(scenario_load_ramp()),
        LOAD_STEP => Ok(scenario_load_step()),
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

pub fn reference_case_with(p: &ReferenceGridParams) -> CaseFile {
    let plant = |name: &str, mw, miles, poi, q_range, q_mvar| PlantEntry {
        q_poi_mvar: q_mvar,
        ..PlantEntry::new(OswPlantSpec::new(name, mw, miles, 10, poi, q_range))
    };
    CaseFile {
        schema_version: SCHEMA_VERSION,
        network: reference_network(p),
        plants: vec![
            plant("OSW1", p.osw1_mw, 20.0, POI1_BUS, 395.2, p.osw1_q_mvar),
            plant("OSW2", p.osw2_mw, 30.0, POI2_BUS, 484.3, p.osw2_q_mvar),
        ],
        controllers: ControllerConfig {
            master: MasterParams::new(PILOT_BUS),
            slave: SlaveParams::default(),
            plant_local: p.plant_local.clone(),
        },
        scenarios: vec![scenario_generator_trip(), scenario_load_ramp(), scenario_load_step()],
    }
}

pub fn reference_case() -> CaseFile {
    reference_case_with(&ReferenceGridParams::default())
}

/// Solved reference grid with its controllers attached.
pub fn build_reference_grid() -> Result<Model> {
    assemble(&reference_case())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// |pilot V − setpoint| at the end of the run, pu.
    pub final_pilot_deviation: f64,
    /// Change of each plant's POI reactive injection over the run, pu.
    pub dq_poi: Vec<f64>,
    /// Largest |Q_POI − Q_REF| over plants at the end of the run, pu.
    pub final_tracking_error: f64,
    pub collapse_time: Option<f64>,
    pub collapse_load_mvar: Option<f64>,
    pub master_saturation_time: Option<f64>,
}

impl RunMetrics {
    pub fn of(result: &SimulationResult) -> Self {
        let last = result.last();
        let dq_poi: Vec<f64> = last
            .plants
            .iter()
            .zip(&result.initial.plants)
            .map(|(a, b)| a.q_poi - b.q_poi)
            .collect();
        Self {
            final_pilot_deviation: (last.pilot_v - result.v_ref_pilot).abs(),
            dq_poi,
            final_tracking_error: last
                .plants
                .iter()
                .map(|p| (p.q_poi - p.q_ref).abs())
                .fold(0.0, f64::max),
            collapse_time: result.termination.collapse_time(),
            collapse_load_mvar: result.collapse_load_mvar(),
            master_saturation_time: result.master_saturation_time,
        }
    }

    /// ΔQ_POI of the first plant over the second.
    pub fn sharing_ratio(&self) -> Option<f64> {
        match self.dq_poi.as_slice() {
            [a, b, ..] if *b != 0.0 => Some(a / b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub off: SimulationResult,
    pub on: SimulationResult,
    pub off_metrics: RunMetrics,
    pub on_metrics: RunMetrics,
}

/// Runs `scenario` with the MPVC off and on, concurrently.
pub fn run_comparison(model: &Model, scenario: &Scenario) -> Result<Comparison> {
    let off_sc = scenario.clone().with_mpvc(false);
    let on_sc = scenario.clone().with_mpvc(true);
    let (off, on) = std::thread::scope(|s| {
        let off = s.spawn(|| run_simulation(&model.network, &model.controllers, &off_sc));
        let on = run_simulation(&model.network, &model.controllers, &on_sc);
        (off.join().expect("simulation thread panicked"), on)
    });
    let (off, on) = (off?, on?);
    Ok(Comparison {
        off_metrics: RunMetrics::of(&off),
        on_metrics: RunMetrics::of(&on),
        off,
        on,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_grid_solves_with_table_ranges() {
        let model = build_reference_grid().unwrap();
        let c = &model.controllers;
        let ranges: Vec<f64> = c.slaves.iter().map(|s| s.q_rng).collect();
        assert_eq!(ranges, vec![395.2, 484.3]);
        assert_relative_eq!(ranges.iter().sum::<f64>(), 879.5, epsilon = 1e-9);
        assert!(c.slaves.iter().all(|s| s.q_ref0 > 0.0));
        let v = model.network.bus(PILOT_BUS).unwrap().v_mag;
        assert_eq!(c.master.v_ref_pilot, v);
        assert!((v - 1.03).abs() < 0.01, "pilot {v}");
        assert_eq!(c.master.k_g, 0.0);
    }

    #[test]
    fn scenario_definitions() {
        let trip = scenario_generator_trip();
        assert_eq!(
            trip.events,
            vec![Event::new(5.0, EventAction::TripInjector { id: GEN500_INJECTOR })]
        );
        assert_eq!(trip.t_end, 60.0);
        let step = scenario_load_step();
        assert_eq!(
            step.events,
            vec![Event::new(
                5.0,
                EventAction::LoadStep {
                    bus: PILOT_BUS,
                    dp_mw: 0.0,
                    dq_mvar: 60.0
                }
            )]
        );
        assert_eq!(scenario_load_ramp().t_end, 400.0);
        assert!(matches!(builtin_scenario("no-such"), Err(Error::UnknownScenario(_))));
        for name in SCENARIO_NAMES {
            assert_eq!(builtin_scenario(name).unwrap().name, name);
        }
    }
}
