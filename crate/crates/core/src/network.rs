//! Per-unit network data model and bus admittance assembly.
//!
//! All quantities are per-unit on a 100 MVA system base. Transformers are
//! ordinary branches with an off-nominal tap on the from side and no
//! magnetizing branch.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// System MVA base shared by every per-unit quantity.
pub const BASE_MVA: f64 = 100.0;
/// System frequency used to turn inductance and capacitance into reactance.
pub const FREQUENCY_HZ: f64 = 60.0;

pub type BusId = u32;
pub type InjectorId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    Slack,
    VoltageControlled,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: BusKind,
    pub base_kv: f64,
    #[serde(default = "one")]
    pub v_mag: f64,
    #[serde(default)]
    pub v_ang: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Bus {
    pub fn new(id: BusId, kind: BusKind, base_kv: f64) -> Self {
        Self {
            id,
            name: None,
            kind,
            base_kv,
            v_mag: 1.0,
            v_ang: 0.0,
            p_load: 0.0,
            q_load: 0.0,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn with_load(mut self, p: f64, q: f64) -> Self {
        self.p_load = p;
        self.q_load = q;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_shunt: f64,
    #[serde(default = "one")]
    pub tap: f64,
    #[serde(default)]
    pub mva_rating: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

impl Branch {
    pub fn line(from_bus: BusId, to_bus: BusId, r: f64, x: f64, b_shunt: f64) -> Self {
        Self {
            from_bus,
            to_bus,
            r,
            x,
            b_shunt,
            tap: 1.0,
            mva_rating: 0.0,
            in_service: true,
        }
    }

    pub fn transformer(from_bus: BusId, to_bus: BusId, r: f64, x: f64, tap: f64) -> Self {
        Self {
            tap,
            ..Self::line(from_bus, to_bus, r, x, 0.0)
        }
    }

    pub fn with_rating(mut self, mva: f64) -> Self {
        self.mva_rating = mva;
        self
    }

    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }

    /// The 2x2 pi-model stamp `[[yff, yft], [ytf, ytt]]`.
    pub fn stamp(&self) -> [[Complex64; 2]; 2] {
        let y = self.series_admittance();
        let half_b = Complex64::new(0.0, self.b_shunt / 2.0);
        let t = self.tap;
        [[(y + half_b) / (t * t), -y / t], [-y / t, y + half_b]]
    }
}

/// Fixed shunt admittance at a bus, per-unit at 1.0 pu voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shunt {
    pub bus: BusId,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectorKind {
    Synchronous,
    WindPlant,
    VscHvdcOnshore,
    BoundaryEquivalent,
}

impl InjectorKind {
    /// Whether the injector regulates its bus voltage when sitting on a
    /// slack or voltage-controlled bus. Wind plants always inject `q_out`.
    pub fn regulates_voltage(self) -> bool {
        !matches!(self, InjectorKind::WindPlant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injector {
    pub id: InjectorId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub bus: BusId,
    pub kind: InjectorKind,
    #[serde(default)]
    pub p_set: f64,
    #[serde(default)]
    pub q_out: f64,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default = "one")]
    pub v_set: f64,
    /// Active power rating in per-unit; zero means unrated.
    #[serde(default)]
    pub p_max: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

impl Injector {
    pub fn new(id: InjectorId, bus: BusId, kind: InjectorKind) -> Self {
        Self {
            id,
            name: None,
            bus,
            kind,
            p_set: 0.0,
            q_out: 0.0,
            q_min: 0.0,
            q_max: 0.0,
            v_set: 1.0,
            p_max: 0.0,
            in_service: true,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p_set = p;
        self
    }

    pub fn with_q_limits(mut self, q_min: f64, q_max: f64) -> Self {
        self.q_min = q_min;
        self.q_max = q_max;
        self
    }

    pub fn with_v_set(mut self, v: f64) -> Self {
        self.v_set = v;
        self
    }

    pub fn with_q_out(mut self, q: f64) -> Self {
        self.q_out = q;
        self
    }

    pub fn with_p_max(mut self, p_max: f64) -> Self {
        self.p_max = p_max;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub shunts: Vec<Shunt>,
    #[serde(default)]
    pub injectors: Vec<Injector>,
}

fn default_base_mva() -> f64 {
    BASE_MVA
}

fn default_frequency() -> f64 {
    FREQUENCY_HZ
}

impl Default for Network {
    fn default() -> Self {
        Self {
            base_mva: BASE_MVA,
            frequency_hz: FREQUENCY_HZ,
            buses: Vec::new(),
            branches: Vec::new(),
            shunts: Vec::new(),
            injectors: Vec::new(),
        }
    }
}

/// A broken network invariant. Violations are reported as data.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BaseMva(f64),
    DuplicateBusId(BusId),
    DuplicateInjectorId(InjectorId),
    NonPositiveBaseKv(BusId),
    NonPositiveVoltage(BusId),
    NoSlack,
    MultipleSlack(Vec<BusId>),
    ZeroImpedance(usize),
    NonPositiveTap(usize),
    SelfLoop(usize),
    UnknownBus { element: String, bus: BusId },
    QLimitsInverted(InjectorId),
    QOutOfRange(InjectorId),
    PAboveRating(InjectorId),
    Disconnected(Vec<BusId>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BaseMva(v) => write!(f, "system base must be {BASE_MVA} MVA, found {v}"),
            Violation::DuplicateBusId(id) => write!(f, "duplicate bus id {id}"),
            Violation::DuplicateInjectorId(id) => write!(f, "duplicate injector id {id}"),
            Violation::NonPositiveBaseKv(id) => write!(f, "bus {id} has non-positive base kV"),
            Violation::NonPositiveVoltage(id) => write!(f, "bus {id} has non-positive voltage seed"),
            Violation::NoSlack => write!(f, "network has no slack bus"),
            Violation::MultipleSlack(ids) => write!(f, "multiple slack buses: {ids:?}"),
            Violation::ZeroImpedance(i) => write!(f, "branch {i} has r = x = 0"),
            Violation::NonPositiveTap(i) => write!(f, "branch {i} has non-positive tap"),
            Violation::SelfLoop(i) => write!(f, "branch {i} connects a bus to itself"),
            Violation::UnknownBus { element, bus } => {
                write!(f, "{element} references unknown bus {bus}")
            }
            Violation::QLimitsInverted(id) => write!(f, "injector {id} has q_min > q_max"),
            Violation::QOutOfRange(id) => write!(f, "injector {id} has q_out outside [q_min, q_max]"),
            Violation::PAboveRating(id) => write!(f, "injector {id} has p_set above its rating"),
            Violation::Disconnected(ids) => {
                write!(f, "buses not connected to the slack: {ids:?}")
            }
        }
    }
}

/// Checks every structural invariant of `net`. An empty list means the
/// network is well formed.
pub fn validate_network(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    if net.base_mva != BASE_MVA {
        out.push(Violation::BaseMva(net.base_mva));
    }

    let mut seen = BTreeSet::new();
    for bus in &net.buses {
        if !seen.insert(bus.id) {
            out.push(Violation::DuplicateBusId(bus.id));
        }
        if !(bus.base_kv > 0.0) {
            out.push(Violation::NonPositiveBaseKv(bus.id));
        }
        if !(bus.v_mag > 0.0) {
            out.push(Violation::NonPositiveVoltage(bus.id));
        }
    }

    let slacks: Vec<BusId> = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    match slacks.len() {
        0 => out.push(Violation::NoSlack),
        1 => {}
        _ => out.push(Violation::MultipleSlack(slacks.clone())),
    }

    for (i, br) in net.branches.iter().enumerate() {
        if br.r == 0.0 && br.x == 0.0 {
            out.push(Violation::ZeroImpedance(i));
        }
        if !(br.tap > 0.0) {
            out.push(Violation::NonPositiveTap(i));
        }
        if br.from_bus == br.to_bus {
            out.push(Violation::SelfLoop(i));
        }
        for bus in [br.from_bus, br.to_bus] {
            if !seen.contains(&bus) {
                out.push(Violation::UnknownBus {
                    element: format!("branch {i}"),
                    bus,
                });
            }
        }
    }

    for sh in &net.shunts {
        if !seen.contains(&sh.bus) {
            out.push(Violation::UnknownBus {
                element: "shunt".into(),
                bus: sh.bus,
            });
        }
    }

    let mut inj_ids = BTreeSet::new();
    for inj in &net.injectors {
        if !inj_ids.insert(inj.id) {
            out.push(Violation::DuplicateInjectorId(inj.id));
        }
        if !seen.contains(&inj.bus) {
            out.push(Violation::UnknownBus {
                element: format!("injector {}", inj.id),
                bus: inj.bus,
            });
        }
        if inj.q_min > inj.q_max {
            out.push(Violation::QLimitsInverted(inj.id));
        } else if inj.in_service && (inj.q_out < inj.q_min || inj.q_out > inj.q_max) {
            out.push(Violation::QOutOfRange(inj.id));
        }
        if inj.p_max > 0.0 && inj.p_set > inj.p_max * (1.0 + 1e-9) {
            out.push(Violation::PAboveRating(inj.id));
        }
    }

    if slacks.len() == 1 {
        let unreached = unreachable_buses(net, slacks[0]);
        if !unreached.is_empty() {
            out.push(Violation::Disconnected(unreached));
        }
    }
    out
}

fn unreachable_buses(net: &Network, root: BusId) -> Vec<BusId> {
    let mut adj: HashMap<BusId, Vec<BusId>> = HashMap::new();
    for br in net.branches.iter().filter(|b| b.in_service) {
        adj.entry(br.from_bus).or_default().push(br.to_bus);
        adj.entry(br.to_bus).or_default().push(br.from_bus);
    }
    let mut visited = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(b) = stack.pop() {
        for &n in adj.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
            if visited.insert(n) {
                stack.push(n);
            }
        }
    }
    net.buses
        .iter()
        .map(|b| b.id)
        .filter(|id| !visited.contains(id))
        .collect()
}

impl Network {
    /// Maps bus ids to dense matrix indices in declaration order.
    pub fn bus_index(&self) -> BTreeMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_mut(&mut self, id: BusId) -> Option<&mut Bus> {
        self.buses.iter_mut().find(|b| b.id == id)
    }

    pub fn injector(&self, id: InjectorId) -> Option<&Injector> {
        self.injectors.iter().find(|i| i.id == id)
    }

    pub fn injector_mut(&mut self, id: InjectorId) -> Option<&mut Injector> {
        self.injectors.iter_mut().find(|i| i.id == id)
    }

    pub fn next_bus_id(&self) -> BusId {
        self.buses.iter().map(|b| b.id + 1).max().unwrap_or(1)
    }

    pub fn next_injector_id(&self) -> InjectorId {
        self.injectors.iter().map(|i| i.id + 1).max().unwrap_or(1)
    }
}

/// Assembles the dense bus admittance matrix using the pi model for every
/// in-service branch plus the fixed bus shunts. Rows follow
/// [`Network::bus_index`].
pub fn build_admittance_matrix(net: &Network) -> DMatrix<Complex64> {
    let idx = net.bus_index();
    let n = net.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
        let s = br.stamp();
        y[(f, f)] += s[0][0];
        y[(f, t)] += s[0][1];
        y[(t, f)] += s[1][0];
        y[(t, t)] += s[1][1];
    }
    for sh in &net.shunts {
        let k = idx[&sh.bus];
        y[(k, k)] += Complex64::new(sh.g, sh.b);
    }
    y
}

/// Impedance base in ohms for a voltage base in kV and power base in MVA.
pub fn base_impedance(base_kv: f64, base_mva: f64) -> f64 {
    base_kv * base_kv / base_mva
}

pub fn impedance_to_per_unit(ohms: f64, base_kv: f64, base_mva: f64) -> f64 {
    ohms * base_mva / (base_kv * base_kv)
}

pub fn per_unit_to_impedance(pu: f64, base_kv: f64, base_mva: f64) -> f64 {
    pu * base_kv * base_kv / base_mva
}

/// Converts a shunt susceptance in siemens to per-unit.
pub fn susceptance_to_per_unit(siemens: f64, base_kv: f64, base_mva: f64) -> f64 {
    siemens * base_impedance(base_kv, base_mva)
}
