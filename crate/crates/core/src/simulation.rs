//! Quasi-steady-state time stepping.
//!
//! Each step applies due events, advances every controller from the
//! previous step's measurements, writes plant reactive commands into the
//! network and re-solves the power flow from the previous solution. The
//! first step whose solve fails (after the solver's flat-start retry) is the
//! voltage collapse time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::{distribute_q_reference, ControllerSet, PlantBinding};
use crate::error::{Error, Result};
use crate::network::{validate_network, BusId, InjectorId, Network, BASE_MVA};
use crate::powerflow::{solve_power_flow, solve_power_flow_warm, PowerFlowSolution, SolverOptions, WarmStart};

/// Largest accepted step, seconds.
pub const MAX_DT: f64 = 0.01;
pub const DEFAULT_DT: f64 = 0.005;

/// Tolerance used when comparing event times against the step grid.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EventAction {
    TripInjector {
        id: InjectorId,
    },
    LoadStep {
        bus: BusId,
        #[serde(default)]
        dp_mw: f64,
        #[serde(default)]
        dq_mvar: f64,
    },
    /// Reactive load ramp starting at the event time. With `step_interval`
    /// set, the load grows in discrete steps of `rate * step_interval`.
    LoadRamp {
        bus: BusId,
        rate_mvar_per_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stop: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step_interval: Option<f64>,
    },
    SetMasterEnabled {
        enabled: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    pub action: EventAction,
}

impl Event {
    pub fn new(time: f64, action: EventAction) -> Self {
        Self { time, action }
    }
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub events: Vec<Event>,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub mpvc_enabled: bool,
}

impl Scenario {
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::InvalidParameter(format!(
                "dt must lie in (0, {MAX_DT}], got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.events.iter().any(|e| !(e.time >= 0.0)) {
            return Err(Error::InvalidParameter("event times must be non-negative".into()));
        }
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::InvalidParameter("events must be sorted by time".into()));
        }
        for e in &self.events {
            if let EventAction::LoadRamp {
                stop,
                step_interval,
                rate_mvar_per_s,
                ..
            } = &e.action
            {
                if !rate_mvar_per_s.is_finite() {
                    return Err(Error::InvalidParameter("ramp rate must be finite".into()));
                }
                if stop.is_some_and(|s| s < e.time) {
                    return Err(Error::InvalidParameter("ramp stop precedes its start".into()));
                }
                if step_interval.is_some_and(|s| !(s > 0.0)) {
                    return Err(Error::InvalidParameter("ramp step interval must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn with_mpvc(mut self, enabled: bool) -> Self {
        self.mpvc_enabled = enabled;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }
}

/// An active reactive load ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub bus: BusId,
    pub rate_mvar_per_s: f64,
    pub start: f64,
    pub stop: Option<f64>,
    pub step_interval: Option<f64>,
}

impl Ramp {
    /// Load added by the ramp up to time `t`, MVar.
    pub fn cumulative_mvar(&self, t: f64) -> f64 {
        let end = self.stop.map_or(t, |s| t.min(s));
        let elapsed = (end - self.start).max(0.0);
        match self.step_interval {
            None => self.rate_mvar_per_s * elapsed,
            Some(h) => self.rate_mvar_per_s * h * (elapsed / h + TIME_EPS).floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    Collapsed { t: f64 },
}

impl Termination {
    pub fn collapse_time(&self) -> Option<f64> {
        match self {
            Termination::Completed => None,
            Termination::Collapsed { t } => Some(*t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub t: f64,
    pub converged: bool,
}

/// The first failed step is the collapse time.
pub fn detect_voltage_collapse(history: &[StepOutcome]) -> Termination {
    history
        .iter()
        .find(|s| !s.converged)
        .map_or(Termination::Completed, |s| Termination::Collapsed { t: s.t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSample {
    pub q_ref: f64,
    pub q_poi: f64,
    pub v_ref: f64,
    pub q_cmd: f64,
    pub v_poi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub pilot_v: f64,
    pub dq_ref: f64,
    /// Load added by events so far, MVar.
    pub added_q_mvar: f64,
    pub plants: Vec<PlantSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub scenario: String,
    pub mpvc_enabled: bool,
    pub dt: f64,
    pub plant_names: Vec<String>,
    pub v_ref_pilot: f64,
    pub q_ref0: Vec<f64>,
    /// State at t = 0.
    pub initial: Sample,
    /// One row per step, t = k·dt for k ≥ 1.
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub master_saturation_time: Option<f64>,
}

impl SimulationResult {
    pub fn last(&self) -> &Sample {
        self.samples.last().unwrap_or(&self.initial)
    }

    /// Added load at collapse, MVar.
    pub fn collapse_load_mvar(&self) -> Option<f64> {
        self.termination.collapse_time().map(|_| self.last().added_q_mvar)
    }
}

fn q_into_poi(net: &Network, sol: &PowerFlowSolution, binding: &PlantBinding) -> f64 {
    if binding.export_branches.is_empty() {
        // Converter-coupled plant: the injector sits on the POI itself.
        return net
            .injectors
            .iter()
            .position(|j| j.id == binding.machine_injector)
            .map_or(0.0, |i| sol.q_inj[i]);
    }
    binding
        .export_branches
        .iter()
        .map(|&i| -sol.branch_flow(net, i).1.im)
        .sum()
}

struct Measurements {
    pilot_v: f64,
    q_poi: Vec<f64>,
    v_poi: Vec<f64>,
    q_branch: f64,
}

fn measure(net: &Network, sol: &PowerFlowSolution, ctrl: &ControllerSet) -> Result<Measurements> {
    let v_at = |bus: BusId| sol.v_mag_at(bus).ok_or(Error::UnknownBus(bus));
    let q_branch = match ctrl.master.monitored_branch {
        Some(i) if i < net.branches.len() => sol.branch_flow(net, i).0.im,
        Some(i) => return Err(Error::InvalidParameter(format!("monitored branch {i} does not exist"))),
        None => 0.0,
    };
    Ok(Measurements {
        pilot_v: v_at(ctrl.master.pilot_bus)?,
        q_poi: ctrl.bindings.iter().map(|b| q_into_poi(net, sol, b)).collect(),
        v_poi: ctrl.bindings.iter().map(|b| v_at(b.poi_bus)).collect::<Result<_>>()?,
        q_branch,
    })
}

/// Plant-side view of `sol` for bindings; used when building controllers.
pub fn poi_reactive_power(net: &Network, sol: &PowerFlowSolution, bindings: &[PlantBinding]) -> Vec<f64> {
    bindings.iter().map(|b| q_into_poi(net, sol, b)).collect()
}

fn check_bindings(net: &Network, ctrl: &ControllerSet) -> Result<()> {
    let n = ctrl.bindings.len();
    if ctrl.slaves.len() != n || ctrl.locals.len() != n {
        return Err(Error::InvalidParameter(format!(
            "controller set has {} bindings, {} slaves and {} plant controllers",
            n,
            ctrl.slaves.len(),
            ctrl.locals.len()
        )));
    }
    if net.bus(ctrl.master.pilot_bus).is_none() {
        return Err(Error::UnknownBus(ctrl.master.pilot_bus));
    }
    for b in &ctrl.bindings {
        if net.injector(b.machine_injector).is_none() {
            return Err(Error::UnknownInjector(b.machine_injector));
        }
        if net.bus(b.poi_bus).is_none() {
            return Err(Error::UnknownBus(b.poi_bus));
        }
        if let Some(&i) = b.export_branches.iter().find(|&&i| i >= net.branches.len()) {
            return Err(Error::InvalidParameter(format!(
                "plant '{}' export branch {i} does not exist",
                b.name
            )));
        }
    }
    Ok(())
}

/// Applies one event. Ramps are returned for the caller to advance.
pub fn apply_event(
    net: &mut Network,
    ctrl: &mut ControllerSet,
    mpvc: &mut bool,
    event: &Event,
) -> Result<Option<Ramp>> {
    match &event.action {
        EventAction::TripInjector { id } => {
            net.injector_mut(*id).ok_or(Error::UnknownInjector(*id))?.in_service = false;
        }
        EventAction::LoadStep { bus, dp_mw, dq_mvar } => {
            let b = net.bus_mut(*bus).ok_or(Error::UnknownBus(*bus))?;
            b.p_load += dp_mw / BASE_MVA;
            b.q_load += dq_mvar / BASE_MVA;
        }
        EventAction::LoadRamp {
            bus,
            rate_mvar_per_s,
            stop,
            step_interval,
        } => {
            if net.bus(*bus).is_none() {
                return Err(Error::UnknownBus(*bus));
            }
            return Ok(Some(Ramp {
                bus: *bus,
                rate_mvar_per_s: *rate_mvar_per_s,
                start: event.time,
                stop: *stop,
                step_interval: *step_interval,
            }));
        }
        EventAction::SetMasterEnabled { enabled } => {
            if *enabled && !*mpvc {
                // Bumpless: the master restarts from zero output and each
                // slave continues from the setpoint its plant already holds.
                let master = &mut ctrl.master;
                master.pi = crate::control::PiState::new(master.pi.params);
                master.dq_ref = 0.0;
                for (slave, local) in ctrl.slaves.iter_mut().zip(&ctrl.locals) {
                    slave.track(local.v_ref);
                }
            }
            *mpvc = *enabled;
        }
    }
    Ok(None)
}

fn sample(t: f64, m: &Measurements, ctrl: &ControllerSet, shares: &[f64], added_q_mvar: f64) -> Sample {
    Sample {
        t,
        pilot_v: m.pilot_v,
        dq_ref: ctrl.master.dq_ref,
        added_q_mvar,
        plants: ctrl
            .slaves
            .iter()
            .zip(&ctrl.locals)
            .enumerate()
            .map(|(i, (s, l))| PlantSample {
                q_ref: s.q_ref0 + shares[i],
                q_poi: m.q_poi[i],
                v_ref: l.v_ref,
                q_cmd: l.q_cmd,
                v_poi: m.v_poi[i],
            })
            .collect(),
    }
}

/// Runs `scenario` from the equilibrium stored in `net`.
pub fn run_simulation(net: &Network, controllers: &ControllerSet, scenario: &Scenario) -> Result<SimulationResult> {
    scenario.check()?;
    let violations = validate_network(net);
    if !violations.is_empty() {
        return Err(Error::InvalidNetwork(violations));
    }
    check_bindings(net, controllers)?;
    let mut net = net.clone();
    let mut ctrl = controllers.clone();
    let opts = SolverOptions::default();

    let initial = solve_power_flow(&net, &opts)?;
    if !initial.converged {
        return Err(Error::InitialDivergence(initial.max_mismatch));
    }
    let mut warm = WarmStart::from_solution(&initial);
    let mut meas = measure(&net, &initial, &ctrl)?;
    let mut mpvc = scenario.mpvc_enabled;
    let mut shares = vec![0.0; ctrl.slaves.len()];
    if mpvc {
        shares = distribute_q_reference(ctrl.master.dq_ref, &ctrl.slaves)?;
    }
    let mut added_q = 0.0;
    let initial_sample = sample(0.0, &meas, &ctrl, &shares, added_q);

    let dt = scenario.dt;
    let n_steps = (scenario.t_end / dt + TIME_EPS).floor() as usize;
    let mut samples = Vec::with_capacity(n_steps);
    let mut ramps: Vec<Ramp> = Vec::new();
    let mut next_event = 0;
    let mut termination = Termination::Completed;
    let mut saturation = None;
    let machine_index: Vec<usize> = ctrl
        .bindings
        .iter()
        .map(|b| net.injectors.iter().position(|j| j.id == b.machine_injector).unwrap())
        .collect();

    for k in 1..=n_steps {
        let t_prev = (k - 1) as f64 * dt;
        let t = k as f64 * dt;
        while next_event < scenario.events.len() && scenario.events[next_event].time <= t + TIME_EPS {
            let ev = &scenario.events[next_event];
            if let Some(ramp) = apply_event(&mut net, &mut ctrl, &mut mpvc, ev)? {
                ramps.push(ramp);
            }
            if let EventAction::LoadStep { dq_mvar, .. } = ev.action {
                added_q += dq_mvar;
            }
            next_event += 1;
        }
        for ramp in &ramps {
            let inc = ramp.cumulative_mvar(t) - ramp.cumulative_mvar(t_prev);
            if inc != 0.0 {
                net.bus_mut(ramp.bus).unwrap().q_load += inc / BASE_MVA;
                added_q += inc;
            }
        }

        if mpvc {
            let dq = ctrl.master.step(meas.pilot_v, meas.q_branch, dt);
            shares = distribute_q_reference(dq, &ctrl.slaves)?;
            for (i, slave) in ctrl.slaves.iter_mut().enumerate() {
                ctrl.locals[i].v_ref = slave.step(meas.q_poi[i], shares[i], dt);
            }
            if saturation.is_none() && ctrl.master.saturated() {
                saturation = Some(t);
            }
        }
        for (i, local) in ctrl.locals.iter_mut().enumerate() {
            net.injectors[machine_index[i]].q_out = local.step(meas.v_poi[i], dt);
        }

        let sol = solve_power_flow_warm(&net, &opts, &warm)?;
        if !sol.converged {
            samples.push(sample(t, &meas, &ctrl, &shares, added_q));
            termination = Termination::Collapsed { t };
            break;
        }
        meas = measure(&net, &sol, &ctrl)?;
        warm = WarmStart::from_solution(&sol);
        samples.push(sample(t, &meas, &ctrl, &shares, added_q));
    }

    Ok(SimulationResult {
        scenario: scenario.name.clone(),
        mpvc_enabled: scenario.mpvc_enabled,
        dt,
        plant_names: ctrl.bindings.iter().map(|b| b.name.clone()).collect(),
        v_ref_pilot: ctrl.master.v_ref_pilot,
        q_ref0: ctrl.slaves.iter().map(|s| s.q_ref0).collect(),
        initial: initial_sample,
        samples,
        termination,
        master_saturation_time: saturation,
    })
}

/// Writes solved voltages back into the bus records.
pub fn store_voltages(net: &mut Network, sol: &PowerFlowSolution) {
    for (bus, v) in net.buses.iter_mut().zip(sol.voltages()) {
        let v: Complex64 = v;
        bus.v_mag = v.norm();
        bus.v_ang = v.arg();
    }
}
