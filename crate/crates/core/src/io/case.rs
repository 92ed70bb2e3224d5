//! JSON case files.
//!
//! A case holds the base transmission network, the offshore plants to build
//! onto it, controller settings and named scenarios. Reactive quantities of
//! plants are in MVar; network data and controller gains are per-unit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{
    ControllerSet, MasterController, MasterParams, PlantBinding, PlantLocalController, PlantLocalParams,
    SlaveController, SlaveParams,
};
use crate::error::{Error, Result};
use crate::network::{validate_network, BusId, BusKind, InjectorId, Network, BASE_MVA};
use crate::plant::{build_osw_plant, machine_q_for_poi, AggregatedPlant, Connection, OswPlantSpec};
use crate::powerflow::{solve_power_flow, SolverOptions};
use crate::simulation::{poi_reactive_power, store_voltages, Scenario};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantEntry {
    pub spec: OswPlantSpec,
    /// Active dispatch, MW; defaults to the rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatch_mw: Option<f64>,
    /// Scheduled reactive injection at the POI, MVar.
    #[serde(default)]
    pub q_poi_mvar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_bus_id: Option<BusId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injector_id: Option<InjectorId>,
    /// Overrides the case-wide plant controller settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<PlantLocalParams>,
}

impl PlantEntry {
    pub fn new(spec: OswPlantSpec) -> Self {
        Self {
            spec,
            dispatch_mw: None,
            q_poi_mvar: 0.0,
            first_bus_id: None,
            injector_id: None,
            local: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub master: MasterParams,
    #[serde(default)]
    pub slave: SlaveParams,
    #[serde(default)]
    pub plant_local: PlantLocalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema_version: u32,
    pub network: Network,
    #[serde(default)]
    pub plants: Vec<PlantEntry>,
    pub controllers: ControllerConfig,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

/// A case turned into a solved network with attached controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    /// Network with the solved pre-disturbance voltages stored on its buses.
    pub network: Network,
    pub controllers: ControllerSet,
    pub plants: Vec<AggregatedPlant>,
    pub scenarios: Vec<Scenario>,
}

impl Model {
    pub fn scenario(&self, name: &str) -> Result<&Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownScenario(name.to_string()))
    }

    pub fn scenario_names(&self) -> Vec<&str> {
        self.scenarios.iter().map(|s| s.name.as_str()).collect()
    }
}

fn case_error(path: &Path, message: impl Into<String>) -> Error {
    Error::CaseFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses case text; `origin` only labels diagnostics.
pub fn parse_case(text: &str, origin: &Path) -> Result<CaseFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let case: CaseFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            case_error(origin, inner.to_string())
        } else {
            case_error(origin, format!("{inner} (field `{path}`)"))
        }
    })?;
    if case.schema_version != SCHEMA_VERSION {
        return Err(case_error(
            origin,
            format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                case.schema_version
            ),
        ));
    }
    Ok(case)
}

pub fn read_case_file(path: &Path) -> Result<CaseFile> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_case(&text, path)
}

/// Reads and assembles a case file.
pub fn load_case_file(path: &Path) -> Result<Model> {
    let case = read_case_file(path)?;
    assemble(&case).map_err(|e| match e {
        Error::InvalidNetwork(_) | Error::PlantSpec { .. } | Error::InitialDivergence(_) => {
            case_error(path, e.to_string())
        }
        other => other,
    })
}

pub fn write_case_file(case: &CaseFile, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(case).expect("case files always serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Builds the plants onto the network, solves the pre-disturbance power
/// flow and initializes every controller at that equilibrium.
pub fn assemble(case: &CaseFile) -> Result<Model> {
    let violations = validate_network(&case.network);
    if !violations.is_empty() {
        return Err(Error::InvalidNetwork(violations));
    }
    let mut net = case.network.clone();
    let mut plants = Vec::with_capacity(case.plants.len());
    let mut bindings = Vec::with_capacity(case.plants.len());

    for entry in &case.plants {
        let first_bus = entry.first_bus_id.unwrap_or_else(|| net.next_bus_id());
        let injector_id = entry.injector_id.unwrap_or_else(|| net.next_injector_id());
        let mut plant = build_osw_plant(&entry.spec, first_bus, injector_id)?;
        if let Some(mw) = entry.dispatch_mw {
            if !(mw >= 0.0 && mw <= entry.spec.rating_mw) {
                return Err(Error::PlantSpec {
                    name: entry.spec.name.clone(),
                    reason: format!("dispatch {mw} MW outside [0, {}]", entry.spec.rating_mw),
                });
            }
            plant.machine.p_set = mw / BASE_MVA;
        }
        let q_sched = entry.q_poi_mvar / BASE_MVA;
        if q_sched.abs() > entry.spec.q_range_mvar / BASE_MVA {
            return Err(Error::PlantSpec {
                name: entry.spec.name.clone(),
                reason: format!(
                    "scheduled {} MVar exceeds the {} MVar range",
                    entry.q_poi_mvar, entry.spec.q_range_mvar
                ),
            });
        }
        let branch_offset = net.branches.len();
        let binding = match plant.connection {
            Connection::Ac => {
                plant.machine.q_out = machine_q_for_poi(&plant, plant.machine.p_set, q_sched)?;
                plant.attach(&mut net)?;
                PlantBinding {
                    name: plant.name.clone(),
                    machine_injector: plant.machine.id,
                    poi_bus: plant.poi_bus,
                    export_branches: plant.export_branches().into_iter().map(|i| i + branch_offset).collect(),
                }
            }
            Connection::Dc => {
                plant.attach(&mut net)?;
                // The plant controller commands the converter's reactive
                // output directly, so the POI is not voltage-controlled.
                net.bus_mut(plant.poi_bus).unwrap().kind = BusKind::Load;
                let conv_id = plant.dc_link.as_ref().unwrap().onshore_converter.id;
                net.injector_mut(conv_id).unwrap().q_out = q_sched;
                PlantBinding {
                    name: plant.name.clone(),
                    machine_injector: conv_id,
                    poi_bus: plant.poi_bus,
                    export_branches: Vec::new(),
                }
            }
        };
        plants.push(plant);
        bindings.push(binding);
    }

    let sol = solve_power_flow(&net, &SolverOptions::default())?;
    if !sol.converged {
        return Err(Error::InitialDivergence(sol.max_mismatch));
    }
    store_voltages(&mut net, &sol);

    let mp = &case.controllers.master;
    let v_pilot = sol.v_mag_at(mp.pilot_bus).ok_or(Error::UnknownBus(mp.pilot_bus))?;
    let master = MasterController::new(mp, mp.v_ref_pilot.unwrap_or(v_pilot), v_pilot)?;
    let q_poi = poi_reactive_power(&net, &sol, &bindings);
    let mut slaves = Vec::with_capacity(bindings.len());
    let mut locals = Vec::with_capacity(bindings.len());
    for (i, (entry, b)) in case.plants.iter().zip(&bindings).enumerate() {
        let v_poi = sol.v_mag_at(b.poi_bus).ok_or(Error::UnknownBus(b.poi_bus))?;
        let mut slave = SlaveController::new(&case.controllers.slave, entry.spec.q_range_mvar, q_poi[i], b.poi_bus)?;
        slave.track(v_poi);
        slaves.push(slave);
        let inj = net.injector(b.machine_injector).unwrap();
        let params = entry.local.as_ref().unwrap_or(&case.controllers.plant_local);
        locals.push(PlantLocalController::new(
            params, v_poi, inj.q_out, inj.q_min, inj.q_max,
        )?);
    }

    Ok(Model {
        network: net,
        controllers: ControllerSet {
            master,
            slaves,
            locals,
            bindings,
        },
        plants,
        scenarios: case.scenarios.clone(),
    })
}
