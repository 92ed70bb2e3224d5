//! Aggregated offshore wind plant equivalents.
//!
//! An AC plant is a machine bus, a pad-mount transformer, one equivalent
//! 69 kV collector cable, a substation transformer and parallel 230 kV
//! export cables landing on the onshore POI, with an offshore shunt reactor
//! absorbing the export cables' charging. A DC plant keeps the same
//! offshore AC island, fed into a grid-forming offshore converter, and
//! reaches shore through a resistive DC link ending in a voltage-controlled
//! onshore converter at the POI.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    impedance_to_per_unit, susceptance_to_per_unit, Branch, Bus, BusId, BusKind, Injector, InjectorId, InjectorKind,
    Network, Shunt, BASE_MVA, FREQUENCY_HZ,
};
use crate::powerflow::{solve_power_flow, SolverOptions};

pub const KM_PER_MILE: f64 = 1.609344;
pub const COLLECTOR_LENGTH_MILES: f64 = 5.0;
/// Export cables longer than this use HVDC.
pub const DC_DISTANCE_THRESHOLD_MILES: f64 = 60.0;
/// Plants rated above this use HVDC.
pub const DC_RATING_THRESHOLD_MW: f64 = 1000.0;

pub const PAD_MOUNT_Z_PCT: f64 = 6.0;
pub const PAD_MOUNT_X_OVER_R: f64 = 8.0;
pub const SUBSTATION_Z_PCT: f64 = 10.0;
pub const SUBSTATION_X_OVER_R: f64 = 50.0;
pub const MACHINE_KV: f64 = 0.69;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CableKind {
    Collector69kV,
    TransmissionAc230kV,
    TransmissionDc400kV,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableParams {
    /// Ω/km
    pub r_per_km: f64,
    /// mH/km
    pub l_per_km: f64,
    /// µF/km
    pub c_per_km: f64,
    /// A
    pub current_rating: f64,
    /// kV
    pub voltage_rating: f64,
    pub kind: CableKind,
}

impl CableParams {
    pub const COLLECTOR_69KV: Self = Self {
        r_per_km: 0.0176,
        l_per_km: 0.31,
        c_per_km: 0.38,
        current_rating: 820.0,
        voltage_rating: 69.0,
        kind: CableKind::Collector69kV,
    };
    pub const TRANSMISSION_AC_230KV: Self = Self {
        r_per_km: 0.0176,
        l_per_km: 0.38,
        c_per_km: 0.19,
        current_rating: 770.0,
        voltage_rating: 230.0,
        kind: CableKind::TransmissionAc230kV,
    };
    pub const TRANSMISSION_DC_400KV: Self = Self {
        r_per_km: 0.0132,
        l_per_km: 0.0,
        c_per_km: 0.0,
        current_rating: 1145.0,
        voltage_rating: 400.0,
        kind: CableKind::TransmissionDc400kV,
    };

    pub fn is_valid(&self) -> bool {
        let positive = self.r_per_km > 0.0 && self.current_rating > 0.0 && self.voltage_rating > 0.0;
        let reactive = match self.kind {
            CableKind::TransmissionDc400kV => self.l_per_km >= 0.0 && self.c_per_km >= 0.0,
            _ => self.l_per_km > 0.0 && self.c_per_km > 0.0,
        };
        positive && reactive
    }

    /// Three-phase apparent power capacity of one cable, MVA.
    pub fn capacity_mva(&self) -> f64 {
        3f64.sqrt() * self.voltage_rating * self.current_rating / 1000.0
    }

    /// Series r, x and total charging b, per-unit on the cable's voltage and
    /// the given MVA base, for `length_km` of cable.
    pub fn per_unit(&self, length_km: f64, base_mva: f64) -> (f64, f64, f64) {
        let omega = 2.0 * PI * FREQUENCY_HZ;
        let kv = self.voltage_rating;
        let r = impedance_to_per_unit(self.r_per_km * length_km, kv, base_mva);
        let x = impedance_to_per_unit(omega * self.l_per_km * 1e-3 * length_km, kv, base_mva);
        let b = susceptance_to_per_unit(omega * self.c_per_km * 1e-6 * length_km, kv, base_mva);
        (r, x, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connection {
    Ac,
    Dc,
}

fn default_collector_length() -> f64 {
    COLLECTOR_LENGTH_MILES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OswPlantSpec {
    pub name: String,
    pub rating_mw: f64,
    pub distance_to_shore_miles: f64,
    pub n_collector_strings: u32,
    #[serde(default = "default_collector_length")]
    pub collector_length_miles: f64,
    pub poi_bus: BusId,
    /// Symmetric reactive capability at the POI, MVar.
    pub q_range_mvar: f64,
    /// Requested connection; must agree with [`select_connection_type`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<Connection>,
}

impl OswPlantSpec {
    pub fn new(
        name: &str,
        rating_mw: f64,
        distance_miles: f64,
        strings: u32,
        poi_bus: BusId,
        q_range_mvar: f64,
    ) -> Self {
        Self {
            name: name.to_string(),
            rating_mw,
            distance_to_shore_miles: distance_miles,
            n_collector_strings: strings,
            collector_length_miles: COLLECTOR_LENGTH_MILES,
            poi_bus,
            q_range_mvar,
            connection: None,
        }
    }

    fn check(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::PlantSpec {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.rating_mw > 0.0) {
            return fail("rating must be positive");
        }
        if !(self.distance_to_shore_miles > 0.0) {
            return fail("distance to shore must be positive");
        }
        if self.n_collector_strings == 0 {
            return fail("at least one collector string is required");
        }
        if !(self.collector_length_miles > 0.0) {
            return fail("collector length must be positive");
        }
        if !(self.q_range_mvar > 0.0) {
            return fail("reactive range must be positive");
        }
        Ok(())
    }
}

/// HVDC when the export cable is longer than 60 miles or the plant is rated
/// above 1000 MW; both comparisons are strict.
pub fn select_connection_type(distance_miles: f64, rating_mw: f64) -> Connection {
    if distance_miles > DC_DISTANCE_THRESHOLD_MILES || rating_mw > DC_RATING_THRESHOLD_MW {
        Connection::Dc
    } else {
        Connection::Ac
    }
}

/// Series (r, x) on the system base for a transformer given as an impedance
/// magnitude in percent of its own rating and an X/R ratio.
pub fn transformer_impedance(z_magnitude_pct: f64, x_over_r: f64, device_mva: f64, system_mva: f64) -> (f64, f64) {
    let z = z_magnitude_pct / 100.0;
    let r_device = z / (1.0 + x_over_r * x_over_r).sqrt();
    let r = r_device * system_mva / device_mva;
    (r, x_over_r * r)
}

/// One branch standing in for all parallel collector strings: series
/// impedance divided by the string count, charging multiplied by it.
pub fn aggregate_collector_system(
    spec: &OswPlantSpec,
    cable: &CableParams,
    from_bus: BusId,
    to_bus: BusId,
) -> Result<Branch> {
    if cable.kind != CableKind::Collector69kV {
        return Err(Error::PlantSpec {
            name: spec.name.clone(),
            reason: format!("collector needs a 69 kV collector cable, got {:?}", cable.kind),
        });
    }
    let n = spec.n_collector_strings.max(1) as f64;
    let (r, x, b) = cable.per_unit(spec.collector_length_miles * KM_PER_MILE, BASE_MVA);
    Ok(Branch::line(from_bus, to_bus, r / n, x / n, b * n).with_rating(n * cable.capacity_mva()))
}

/// Number of parallel export cables, sized at unity power factor.
pub fn size_transmission_cables(rating_mw: f64, cable: &CableParams) -> usize {
    ((rating_mw / cable.capacity_mva()).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcLink {
    /// Loop resistance of the pole and return conductors, Ω.
    pub resistance_ohm: f64,
    pub voltage_kv: f64,
    /// Bus of the grid-forming offshore converter (slack of the offshore island).
    pub offshore_converter_bus: BusId,
    pub onshore_converter: Injector,
}

impl DcLink {
    /// Power received onshore for `sent_mw` injected at the offshore converter.
    pub fn received_mw(&self, sent_mw: f64) -> f64 {
        let current_ka = sent_mw / self.voltage_kv;
        sent_mw - current_ka * current_ka * self.resistance_ohm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPlant {
    pub name: String,
    pub connection: Connection,
    pub poi_bus: BusId,
    pub q_range_mvar: f64,
    /// Plant-internal buses. For DC plants these form the offshore island.
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Offshore shunt reactors compensating export-cable charging.
    pub shunts: Vec<Shunt>,
    pub machine: Injector,
    pub machine_bus: BusId,
    pub n_parallel_transmission_cables: usize,
    pub dc_link: Option<DcLink>,
}

impl AggregatedPlant {
    /// Adds the plant to `net`. AC plants contribute their buses, branches
    /// and machine; DC plants contribute the onshore converter only, and
    /// the POI becomes voltage-controlled.
    pub fn attach(&self, net: &mut Network) -> Result<()> {
        if net.bus(self.poi_bus).is_none() {
            return Err(Error::UnknownBus(self.poi_bus));
        }
        match &self.dc_link {
            None => {
                net.buses.extend(self.buses.iter().cloned());
                net.branches.extend(self.branches.iter().cloned());
                net.shunts.extend(self.shunts.iter().cloned());
                net.injectors.push(self.machine.clone());
            }
            Some(link) => {
                let mut conv = link.onshore_converter.clone();
                conv.p_set = self.delivered_mw(self.machine.p_set * BASE_MVA)? / BASE_MVA;
                net.injectors.push(conv);
                net.bus_mut(self.poi_bus).unwrap().kind = BusKind::VoltageControlled;
            }
        }
        Ok(())
    }

    /// Offshore AC island of a DC plant, with the offshore converter as slack.
    pub fn offshore_network(&self) -> Option<Network> {
        self.dc_link.as_ref().map(|_| Network {
            buses: self.buses.clone(),
            branches: self.branches.clone(),
            injectors: vec![self.machine.clone()],
            ..Default::default()
        })
    }

    /// Active power reaching the POI for a machine output of `machine_mw`.
    pub fn delivered_mw(&self, machine_mw: f64) -> Result<f64> {
        match &self.dc_link {
            Some(link) => {
                let mut island = self.offshore_network().unwrap();
                island.injectors[0].p_set = machine_mw / BASE_MVA;
                let sol = solve_power_flow(&island, &SolverOptions::default())?;
                if !sol.converged {
                    return Err(Error::PlantSpec {
                        name: self.name.clone(),
                        reason: "offshore island power flow did not converge".into(),
                    });
                }
                let k = island.bus_index()[&link.offshore_converter_bus];
                Ok(link.received_mw(-sol.p_bus[k] * BASE_MVA))
            }
            None => {
                let (p, _) = self.poi_injection_on_infinite_bus(machine_mw / BASE_MVA, self.machine.q_out)?;
                Ok(p * BASE_MVA)
            }
        }
    }

    /// Indices (into the plant's own branch list) of the export cables.
    pub fn export_branches(&self) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.to_bus == self.poi_bus)
            .map(|(i, _)| i)
            .collect()
    }

    /// Solves an AC plant connected to a 1.0 pu infinite bus at the POI and
    /// returns the (P, Q) in pu delivered into the POI.
    pub fn poi_injection_on_infinite_bus(&self, p_machine: f64, q_machine: f64) -> Result<(f64, f64)> {
        let net = self.on_infinite_bus(p_machine, q_machine);
        let sol = solve_power_flow(&net, &SolverOptions::default())?;
        if !sol.converged {
            return Err(Error::PlantSpec {
                name: self.name.clone(),
                reason: "plant power flow on an infinite bus did not converge".into(),
            });
        }
        let s: num_complex::Complex64 = self
            .export_branches()
            .into_iter()
            .map(|i| -sol.branch_flow(&net, i).1)
            .sum();
        Ok((s.re, s.im))
    }

    /// Sets the machine reactive limits of an AC plant so that, at full
    /// active output on a 1.0 pu POI, the POI sees exactly +/- the Q range.
    /// The machine's scheduled output becomes the one delivering zero Q.
    pub fn size_machine_capability(&mut self) -> Result<()> {
        let p = self.machine.p_set;
        let q = self.q_range_mvar / BASE_MVA;
        let q_max = machine_q_for_poi(self, p, q)?;
        let q_min = machine_q_for_poi(self, p, -q)?;
        let q0 = machine_q_for_poi(self, p, 0.0)?;
        self.machine.q_min = q_min;
        self.machine.q_max = q_max;
        self.machine.q_out = q0;
        Ok(())
    }

    pub fn on_infinite_bus(&self, p_machine: f64, q_machine: f64) -> Network {
        let mut machine = self.machine.clone();
        machine.p_set = p_machine;
        machine.q_out = q_machine;
        machine.q_min = machine.q_min.min(q_machine);
        machine.q_max = machine.q_max.max(q_machine);
        let mut buses = vec![Bus::new(self.poi_bus, BusKind::Slack, 230.0)];
        buses.extend(self.buses.iter().cloned());
        Network {
            buses,
            branches: self.branches.clone(),
            shunts: self.shunts.clone(),
            injectors: vec![machine],
            ..Default::default()
        }
    }
}

/// Machine reactive output that delivers `target` pu into the POI at full
/// active output, found by secant iteration on infinite-bus solves.
pub fn machine_q_for_poi(plant: &AggregatedPlant, p: f64, target: f64) -> Result<f64> {
    let mut q0 = target;
    let mut f0 = plant.poi_injection_on_infinite_bus(p, q0)?.1 - target;
    let mut q1 = q0 - f0;
    for _ in 0..50 {
        let f1 = plant.poi_injection_on_infinite_bus(p, q1)?.1 - target;
        if f1.abs() < 1e-10 {
            return Ok(q1);
        }
        let slope = (f1 - f0) / (q1 - q0);
        q0 = q1;
        f0 = f1;
        q1 -= f1 / slope;
    }
    Err(Error::PlantSpec {
        name: plant.name.clone(),
        reason: "could not size machine reactive capability".into(),
    })
}

/// Builds the aggregated equivalent of `spec`. Plant-internal buses are
/// numbered from `first_bus_id`; the machine injector takes `injector_id`
/// and a DC plant's onshore converter takes `injector_id + 1`.
pub fn build_osw_plant(spec: &OswPlantSpec, first_bus_id: BusId, injector_id: InjectorId) -> Result<AggregatedPlant> {
    spec.check()?;
    let connection = select_connection_type(spec.distance_to_shore_miles, spec.rating_mw);
    if let Some(requested) = spec.connection {
        if requested != connection {
            return Err(Error::PlantSpec {
                name: spec.name.clone(),
                reason: format!(
                    "{requested:?} connection requested but {:.1} mi / {:.0} MW requires {connection:?}",
                    spec.distance_to_shore_miles, spec.rating_mw
                ),
            });
        }
    }

    let machine_bus = first_bus_id;
    let pad_hv = first_bus_id + 1;
    let collector_end = first_bus_id + 2;
    let substation_hv = first_bus_id + 3;
    let label = |s: &str| format!("{} {s}", spec.name);

    let buses = vec![
        Bus::new(machine_bus, BusKind::Load, MACHINE_KV).named(&label("machine")),
        Bus::new(pad_hv, BusKind::Load, 69.0).named(&label("pad-mount HV")),
        Bus::new(collector_end, BusKind::Load, 69.0).named(&label("collector")),
        Bus::new(
            substation_hv,
            if connection == Connection::Dc {
                BusKind::Slack
            } else {
                BusKind::Load
            },
            230.0,
        )
        .named(&label(if connection == Connection::Dc {
            "offshore converter"
        } else {
            "substation HV"
        })),
    ];

    let device_mva = spec.rating_mw;
    let (r_pad, x_pad) = transformer_impedance(PAD_MOUNT_Z_PCT, PAD_MOUNT_X_OVER_R, device_mva, BASE_MVA);
    let (r_sub, x_sub) = transformer_impedance(SUBSTATION_Z_PCT, SUBSTATION_X_OVER_R, device_mva, BASE_MVA);
    let mut branches = vec![
        Branch::transformer(machine_bus, pad_hv, r_pad, x_pad, 1.0).with_rating(device_mva),
        aggregate_collector_system(spec, &CableParams::COLLECTOR_69KV, pad_hv, collector_end)?,
        Branch::transformer(collector_end, substation_hv, r_sub, x_sub, 1.0).with_rating(device_mva),
    ];

    let p = spec.rating_mw / BASE_MVA;
    let machine = Injector::new(injector_id, machine_bus, InjectorKind::WindPlant)
        .named(&spec.name)
        .with_p(p)
        .with_p_max(p);

    let length_km = spec.distance_to_shore_miles * KM_PER_MILE;
    let mut plant = match connection {
        Connection::Ac => {
            let cable = CableParams::TRANSMISSION_AC_230KV;
            let n = size_transmission_cables(spec.rating_mw, &cable);
            let (r, x, b) = cable.per_unit(length_km, BASE_MVA);
            for _ in 0..n {
                branches.push(Branch::line(substation_hv, spec.poi_bus, r, x, b).with_rating(cable.capacity_mva()));
            }
            let reactor = Shunt {
                bus: substation_hv,
                g: 0.0,
                b: -(n as f64) * b,
            };
            AggregatedPlant {
                name: spec.name.clone(),
                connection,
                poi_bus: spec.poi_bus,
                q_range_mvar: spec.q_range_mvar,
                buses,
                branches,
                shunts: vec![reactor],
                machine,
                machine_bus,
                n_parallel_transmission_cables: n,
                dc_link: None,
            }
        }
        Connection::Dc => {
            let cable = CableParams::TRANSMISSION_DC_400KV;
            let q = spec.q_range_mvar / BASE_MVA;
            let converter = Injector::new(injector_id + 1, spec.poi_bus, InjectorKind::VscHvdcOnshore)
                .named(&label("onshore converter"))
                .with_q_limits(-q, q)
                .with_v_set(1.0)
                .with_p_max(p);
            AggregatedPlant {
                name: spec.name.clone(),
                connection,
                poi_bus: spec.poi_bus,
                q_range_mvar: spec.q_range_mvar,
                buses,
                branches,
                shunts: Vec::new(),
                machine,
                machine_bus,
                n_parallel_transmission_cables: 1,
                dc_link: Some(DcLink {
                    resistance_ohm: 2.0 * cable.r_per_km * length_km,
                    voltage_kv: cable.voltage_rating,
                    offshore_converter_bus: substation_hv,
                    onshore_converter: converter,
                }),
            }
        }
    };

    if connection == Connection::Ac {
        plant.size_machine_capability()?;
    }
    Ok(plant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_admittance_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec_800() -> OswPlantSpec {
        OswPlantSpec::new("OSW", 800.0, 25.0, 10, 100, 395.2)
    }

    #[test]
    fn connection_rule_boundaries() {
        assert_eq!(select_connection_type(50.0, 800.0), Connection::Ac);
        assert_eq!(select_connection_type(70.0, 800.0), Connection::Dc);
        assert_eq!(select_connection_type(50.0, 1200.0), Connection::Dc);
        assert_eq!(select_connection_type(60.0, 1000.0), Connection::Ac);
    }

    #[test]
    fn transformer_examples() {
        // Oracle: magnitude 0.06 and ratio 8 fix r = 0.06 / sqrt(65).
        let (r, x) = transformer_impedance(6.0, 8.0, 100.0, 100.0);
        assert_relative_eq!(r, 0.0074421, epsilon = 5e-8);
        assert_relative_eq!(x, 0.0595364, epsilon = 5e-7);
        assert_relative_eq!(r.hypot(x), 0.06, epsilon = 1e-15);
        let (r, x) = transformer_impedance(10.0, 50.0, 100.0, 100.0);
        assert_relative_eq!(r, 0.0019996, epsilon = 5e-8);
        assert_relative_eq!(x, 0.0999800, epsilon = 5e-8);
        let (r2, x2) = transformer_impedance(6.0, 8.0, 50.0, 100.0);
        let (r1, x1) = transformer_impedance(6.0, 8.0, 100.0, 100.0);
        assert_eq!((r2, x2), (2.0 * r1, 2.0 * x1));
    }

    #[test]
    fn collector_per_unit_values() {
        let mut spec = spec_800();
        spec.n_collector_strings = 1;
        let one = aggregate_collector_system(&spec, &CableParams::COLLECTOR_69KV, 1, 2).unwrap();
        assert_relative_eq!(one.r, 0.0029746, epsilon = 5e-8);
        assert_relative_eq!(one.x, 0.019752, epsilon = 5e-7);
        spec.n_collector_strings = 10;
        let ten = aggregate_collector_system(&spec, &CableParams::COLLECTOR_69KV, 1, 2).unwrap();
        assert_relative_eq!(ten.r, one.r / 10.0, epsilon = 1e-15);
        assert_relative_eq!(ten.x, one.x / 10.0, epsilon = 1e-15);
        assert_relative_eq!(ten.b_shunt, one.b_shunt * 10.0, epsilon = 1e-15);
        assert!(aggregate_collector_system(&spec, &CableParams::TRANSMISSION_AC_230KV, 1, 2).is_err());
    }

    #[test]
    fn two_strings_match_two_parallel_singles() {
        let mut spec = spec_800();
        spec.n_collector_strings = 2;
        let agg = aggregate_collector_system(&spec, &CableParams::COLLECTOR_69KV, 1, 2).unwrap();
        spec.n_collector_strings = 1;
        let single = aggregate_collector_system(&spec, &CableParams::COLLECTOR_69KV, 1, 2).unwrap();
        let net = |branches: Vec<Branch>| Network {
            buses: vec![Bus::new(1, BusKind::Slack, 69.0), Bus::new(2, BusKind::Load, 69.0)],
            branches,
            ..Default::default()
        };
        let a = build_admittance_matrix(&net(vec![agg]));
        let b = build_admittance_matrix(&net(vec![single.clone(), single]));
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-9 * x.norm().max(1.0));
        }
    }

    #[test]
    fn cable_sizing() {
        let c = CableParams::TRANSMISSION_AC_230KV;
        assert_relative_eq!(c.capacity_mva(), 306.74, epsilon = 0.01);
        assert_eq!(size_transmission_cables(816.0, &c), 3);
        assert_eq!(size_transmission_cables(300.0, &c), 1);
    }

    #[test]
    fn ac_plant_topology_and_losses() {
        let plant = build_osw_plant(&spec_800(), 1, 1).unwrap();
        assert_eq!(plant.connection, Connection::Ac);
        assert_eq!(plant.n_parallel_transmission_cables, 3);
        assert_eq!(plant.buses.len(), 4);
        assert_eq!(plant.branches.len(), 6);
        assert_eq!(plant.export_branches().len(), 3);
        assert_eq!(plant.shunts.len(), 1);
        assert!(plant.dc_link.is_none());

        let (p, _) = plant.poi_injection_on_infinite_bus(8.0, plant.machine.q_out).unwrap();
        assert!(p < 8.0 && p > 7.8, "{p}");

        // Capability corners land on the requested POI range.
        let q = 3.952;
        assert_relative_eq!(
            plant.poi_injection_on_infinite_bus(8.0, plant.machine.q_max).unwrap().1,
            q,
            epsilon = 1e-8
        );
        assert_relative_eq!(
            plant.poi_injection_on_infinite_bus(8.0, plant.machine.q_min).unwrap().1,
            -q,
            epsilon = 1e-8
        );
    }

    #[test]
    fn dc_plant_topology() {
        let spec = OswPlantSpec::new("DC", 1200.0, 50.0, 14, 100, 500.0);
        let plant = build_osw_plant(&spec, 1, 1).unwrap();
        assert_eq!(plant.connection, Connection::Dc);
        assert_eq!(plant.buses.len(), 4);
        assert_eq!(plant.branches.len(), 3);
        let link = plant.dc_link.as_ref().unwrap();
        assert_eq!(link.onshore_converter.kind, InjectorKind::VscHvdcOnshore);
        assert_eq!(link.onshore_converter.q_max, 5.0);
        let delivered = plant.delivered_mw(1200.0).unwrap();
        assert!(delivered < 1200.0 && delivered > 1100.0, "{delivered}");

        let mut net = Network {
            buses: vec![Bus::new(99, BusKind::Slack, 230.0), Bus::new(100, BusKind::Load, 230.0)],
            branches: vec![Branch::line(99, 100, 0.0, 0.01, 0.0)],
            ..Default::default()
        };
        plant.attach(&mut net).unwrap();
        assert_eq!(net.bus(100).unwrap().kind, BusKind::VoltageControlled);
        let sol = solve_power_flow(&net, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.v_mag[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn inconsistent_connection_is_a_fault() {
        let mut spec = OswPlantSpec::new("DC", 1200.0, 50.0, 14, 100, 500.0);
        spec.connection = Some(Connection::Ac);
        assert!(matches!(build_osw_plant(&spec, 1, 1), Err(Error::PlantSpec { .. })));
        let mut bad = spec_800();
        bad.n_collector_strings = 0;
        assert!(build_osw_plant(&bad, 1, 1).is_err());
    }

    #[test]
    fn aggregate_equals_explicit_strings_in_solved_voltages() {
        let plant = build_osw_plant(&spec_800(), 1, 1).unwrap();
        let agg = plant.on_infinite_bus(8.0, 0.5);
        let mut explicit = agg.clone();
        let mut single_spec = spec_800();
        single_spec.n_collector_strings = 1;
        let single = aggregate_collector_system(&single_spec, &CableParams::COLLECTOR_69KV, 2, 3).unwrap();
        let ci = explicit
            .branches
            .iter()
            .position(|b| b.from_bus == 2 && b.to_bus == 3)
            .unwrap();
        explicit.branches.remove(ci);
        for _ in 0..10 {
            explicit.branches.push(single.clone());
        }
        let opts = SolverOptions {
            tolerance: 1e-12,
            ..Default::default()
        };
        let a = solve_power_flow(&agg, &opts).unwrap();
        let b = solve_power_flow(&explicit, &opts).unwrap();
        assert!(a.converged && b.converged);
        for (x, y) in a.voltages().iter().zip(b.voltages()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn connection_rule_is_monotone(d in 1.0f64..120.0, r in 50.0f64..2000.0, dd in 0.0f64..50.0, dr in 0.0f64..500.0) {
            if select_connection_type(d, r) == Connection::Dc {
                prop_assert_eq!(select_connection_type(d + dd, r + dr), Connection::Dc);
            }
        }

        #[test]
        fn transformer_identity(z in 0.5f64..20.0, k in 0.5f64..100.0, dev in 1.0f64..2000.0, sys in 10.0f64..1000.0) {
            let (r, x) = transformer_impedance(z, k, dev, sys);
            prop_assert!(((r.hypot(x) * dev / sys) - z / 100.0).abs() <= 1e-12 * (z / 100.0).max(1.0));
            prop_assert!((x / r - k).abs() <= 1e-12 * k);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn built_plants_solve_across_outputs(
            rating in 200.0f64..1000.0, dist in 5.0f64..60.0, strings in 3u32..15, frac in 0.0f64..1.0
        ) {
            let spec = OswPlantSpec::new("P", rating, dist, strings, 100, 0.3 * rating);
            let plant = build_osw_plant(&spec, 1, 1).unwrap();
            let p = frac * rating / BASE_MVA;
            let net = plant.on_infinite_bus(p, plant.machine.q_out);
            let sol = solve_power_flow(&net, &SolverOptions::default()).unwrap();
            prop_assert!(sol.converged);
        }
    }
}
