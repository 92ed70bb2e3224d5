//! Master/slave reactive power and voltage controllers and the plant-local
//! Q-V regulator they drive.
//!
//! The master is a PI voltage regulator on the pilot bus producing a
//! reactive power increment `dq_ref` (pu, 100 MVA base). The increment is
//! split among slaves in proportion to their POI reactive ranges, and each
//! slave PI turns its reactive power error (in MVar) into a plant voltage
//! setpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, InjectorId, BASE_MVA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiParams {
    pub kp: f64,
    pub ki: f64,
    pub out_min: f64,
    pub out_max: f64,
}

impl PiParams {
    pub fn new(kp: f64, ki: f64, out_min: f64, out_max: f64) -> Result<Self> {
        if !(out_min < out_max) {
            return Err(Error::InvalidParameter(format!(
                "PI limits must satisfy min < max, got [{out_min}, {out_max}]"
            )));
        }
        Ok(Self {
            kp,
            ki,
            out_min,
            out_max,
        })
    }
}

/// PI regulator with output clamping and conditional integration: the
/// integrator is frozen while the output sits on a limit and the error
/// pushes further into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    pub params: PiParams,
    pub integrator: f64,
    pub last_output: f64,
}

impl PiState {
    pub fn new(params: PiParams) -> Self {
        Self::with_output(params, 0.0)
    }

    /// A regulator whose zero-error output is `output` (bumpless start).
    pub fn with_output(params: PiParams, output: f64) -> Self {
        let output = output.clamp(params.out_min, params.out_max);
        Self {
            params,
            integrator: output,
            last_output: output,
        }
    }

    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        let PiParams {
            kp,
            ki,
            out_min,
            out_max,
        } = self.params;
        let proportional = kp * error;
        let unclamped = proportional + self.integrator;
        let pushing_up = error > 0.0 && unclamped >= out_max;
        let pushing_down = error < 0.0 && unclamped <= out_min;
        if !(pushing_up || pushing_down) {
            let next = self.integrator + ki * error * dt;
            // Stop exactly on the limit rather than stepping past it.
            self.integrator = if error > 0.0 {
                next.min((out_max - proportional).max(self.integrator))
            } else {
                next.max((out_min - proportional).min(self.integrator))
            };
        }
        self.last_output = (proportional + self.integrator).clamp(out_min, out_max);
        self.last_output
    }

    pub fn saturated(&self) -> bool {
        self.last_output >= self.params.out_max || self.last_output <= self.params.out_min
    }
}

/// Free-standing form of [`PiState::step`].
pub fn pi_step(state: &mut PiState, error: f64, dt: f64) -> f64 {
    state.step(error, dt)
}

/// First-order lag with exact zero-order-hold discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagState {
    pub time_constant: f64,
    pub y: f64,
}

impl LagState {
    pub fn new(time_constant: f64, y: f64) -> Result<Self> {
        if !(time_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lag time constant must be positive, got {time_constant}"
            )));
        }
        Ok(Self { time_constant, y })
    }

    pub fn step(&mut self, u: f64, dt: f64) -> f64 {
        self.y += (u - self.y) * (1.0 - (-dt / self.time_constant).exp());
        self.y
    }
}

pub fn lag_step(state: &mut LagState, u: f64, dt: f64) -> f64 {
    state.step(u, dt)
}

fn default_kp_v() -> f64 {
    4.0
}
fn default_ki_v() -> f64 {
    40.0
}
fn default_q_max_ref() -> f64 {
    2.0
}
fn default_q_min_ref() -> f64 {
    -2.0
}
fn default_sensor_tc() -> f64 {
    0.02
}

/// Master controller settings. Defaults are the tuned project values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterParams {
    pub pilot_bus: BusId,
    /// Pilot voltage setpoint; `None` takes the solved pre-disturbance voltage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_ref_pilot: Option<f64>,
    #[serde(default)]
    pub k_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitored_branch: Option<usize>,
    #[serde(default = "default_sensor_tc")]
    pub sensor_time_constant: f64,
    #[serde(default = "default_kp_v")]
    pub kp: f64,
    #[serde(default = "default_ki_v")]
    pub ki: f64,
    #[serde(default = "default_q_max_ref")]
    pub q_max_ref: f64,
    #[serde(default = "default_q_min_ref")]
    pub q_min_ref: f64,
}

impl MasterParams {
    pub fn new(pilot_bus: BusId) -> Self {
        Self {
            pilot_bus,
            v_ref_pilot: None,
            k_g: 0.0,
            monitored_branch: None,
            sensor_time_constant: default_sensor_tc(),
            kp: default_kp_v(),
            ki: default_ki_v(),
            q_max_ref: default_q_max_ref(),
            q_min_ref: default_q_min_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterController {
    pub v_ref_pilot: f64,
    pub k_g: f64,
    pub sensor: LagState,
    pub pi: PiState,
    pub pilot_bus: BusId,
    pub monitored_branch: Option<usize>,
    pub dq_ref: f64,
}

impl MasterController {
    /// Builds the master with its sensor settled at `v_pilot`.
    pub fn new(params: &MasterParams, v_ref_pilot: f64, v_pilot: f64) -> Result<Self> {
        Ok(Self {
            v_ref_pilot,
            k_g: params.k_g,
            sensor: LagState::new(params.sensor_time_constant, v_pilot)?,
            pi: PiState::new(PiParams::new(params.kp, params.ki, params.q_min_ref, params.q_max_ref)?),
            pilot_bus: params.pilot_bus,
            monitored_branch: params.monitored_branch,
            dq_ref: 0.0,
        })
    }

    pub fn step(&mut self, v_meas_pilot: f64, q_branch: f64, dt: f64) -> f64 {
        let v = self.sensor.step(v_meas_pilot, dt);
        let error = self.v_ref_pilot - v - self.k_g * q_branch;
        self.dq_ref = self.pi.step(error, dt);
        self.dq_ref
    }

    pub fn saturated(&self) -> bool {
        self.pi.saturated()
    }
}

pub fn master_step(mc: &mut MasterController, v_meas_pilot: f64, q_branch: f64, dt: f64) -> f64 {
    mc.step(v_meas_pilot, q_branch, dt)
}

fn default_kp_q() -> f64 {
    0.001
}
fn default_ki_q() -> f64 {
    0.01
}
fn default_v_max() -> f64 {
    1.05
}
fn default_v_min() -> f64 {
    0.95
}
fn default_bias() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaveParams {
    #[serde(default = "default_kp_q")]
    pub kp: f64,
    #[serde(default = "default_ki_q")]
    pub ki: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    /// Setpoint produced at zero regulator output.
    #[serde(default = "default_bias")]
    pub v_bias: f64,
}

impl Default for SlaveParams {
    fn default() -> Self {
        Self {
            kp: default_kp_q(),
            ki: default_ki_q(),
            v_max: default_v_max(),
            v_min: default_v_min(),
            v_bias: default_bias(),
        }
    }
}

/// Reactive power regulator for one plant. Its error is taken in MVar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaveController {
    /// Reactive range at the POI, MVar.
    pub q_rng: f64,
    /// Original reactive reference, pu.
    pub q_ref0: f64,
    pub pi: PiState,
    pub v_bias: f64,
    pub poi_bus: BusId,
    pub v_ref_out: f64,
}

impl SlaveController {
    pub fn new(params: &SlaveParams, q_rng: f64, q_ref0: f64, poi_bus: BusId) -> Result<Self> {
        if !(q_rng > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "slave Q range must be positive, got {q_rng}"
            )));
        }
        let pi = PiParams::new(
            params.kp,
            params.ki,
            params.v_min - params.v_bias,
            params.v_max - params.v_bias,
        )?;
        Ok(Self {
            q_rng,
            q_ref0,
            pi: PiState::new(pi),
            v_bias: params.v_bias,
            poi_bus,
            v_ref_out: params.v_bias,
        })
    }

    /// Re-seeds the integrator so the next zero-error output is `v_ref`.
    pub fn track(&mut self, v_ref: f64) {
        self.pi = PiState::with_output(self.pi.params, v_ref - self.v_bias);
        self.v_ref_out = self.v_bias + self.pi.last_output;
    }

    pub fn v_limits(&self) -> (f64, f64) {
        (
            self.v_bias + self.pi.params.out_min,
            self.v_bias + self.pi.params.out_max,
        )
    }

    pub fn step(&mut self, q_poi_meas: f64, dq_ref_i: f64, dt: f64) -> f64 {
        let error_mvar = (self.q_ref0 + dq_ref_i - q_poi_meas) * BASE_MVA;
        let (lo, hi) = self.v_limits();
        self.v_ref_out = (self.v_bias + self.pi.step(error_mvar, dt)).clamp(lo, hi);
        self.v_ref_out
    }
}

pub fn slave_step(sc: &mut SlaveController, q_poi_meas: f64, dq_ref_i: f64, dt: f64) -> f64 {
    sc.step(q_poi_meas, dq_ref_i, dt)
}

/// Splits `dq_ref` among slaves in proportion to their reactive ranges.
pub fn distribute_q_reference(dq_ref: f64, slaves: &[SlaveController]) -> Result<Vec<f64>> {
    if slaves.is_empty() {
        return Err(Error::NoSlaves);
    }
    if let Some(bad) = slaves.iter().find(|s| !(s.q_rng > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "slave Q range must be positive, got {}",
            bad.q_rng
        )));
    }
    let total: f64 = slaves.iter().map(|s| s.q_rng).sum();
    Ok(slaves.iter().map(|s| dq_ref * (s.q_rng / total)).collect())
}

fn default_local_kp() -> f64 {
    2.0
}
fn default_local_ki() -> f64 {
    40.0
}
fn default_droop() -> f64 {
    0.0
}
fn default_converter_tc() -> f64 {
    0.05
}

/// Generic plant-level Q-V regulator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantLocalParams {
    /// pu Q per pu V.
    #[serde(default = "default_local_kp")]
    pub kp: f64,
    /// pu Q per pu V per second.
    #[serde(default = "default_local_ki")]
    pub ki: f64,
    /// Reactive droop in pu V per pu Q deviation from the scheduled output.
    #[serde(default = "default_droop")]
    pub droop: f64,
    #[serde(default = "default_converter_tc")]
    pub converter_time_constant: f64,
}

impl Default for PlantLocalParams {
    fn default() -> Self {
        Self {
            kp: default_local_kp(),
            ki: default_local_ki(),
            droop: default_droop(),
            converter_time_constant: default_converter_tc(),
        }
    }
}

/// Plant-level regulator: PI on the POI voltage error (less a reactive
/// droop around the scheduled output), followed by the converter lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantLocalController {
    pub v_ref: f64,
    pub pi: PiState,
    pub droop: f64,
    pub q_sched: f64,
    pub converter: LagState,
    pub q_min: f64,
    pub q_max: f64,
    pub q_cmd: f64,
}

impl PlantLocalController {
    /// A regulator at equilibrium: output `q_sched` with the POI at `v_ref`.
    pub fn new(params: &PlantLocalParams, v_ref: f64, q_sched: f64, q_min: f64, q_max: f64) -> Result<Self> {
        let pi = PiParams::new(params.kp, params.ki, q_min, q_max)?;
        Ok(Self {
            v_ref,
            pi: PiState::with_output(pi, q_sched),
            droop: params.droop,
            q_sched,
            converter: LagState::new(params.converter_time_constant, q_sched)?,
            q_min,
            q_max,
            q_cmd: q_sched,
        })
    }

    pub fn step(&mut self, v_poi: f64, dt: f64) -> f64 {
        let error = self.v_ref - v_poi - self.droop * (self.q_cmd - self.q_sched);
        let u = self.pi.step(error, dt);
        self.q_cmd = self.converter.step(u, dt).clamp(self.q_min, self.q_max);
        self.q_cmd
    }
}

pub fn plant_local_control_step(pc: &mut PlantLocalController, v_poi: f64, dt: f64) -> f64 {
    pc.step(v_poi, dt)
}

/// Where a plant sits in the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantBinding {
    pub name: String,
    pub machine_injector: InjectorId,
    pub poi_bus: BusId,
    /// Network branch indices whose POI-end flow is the plant's POI injection.
    /// Empty when the injector itself sits on the POI (converter plants).
    pub export_branches: Vec<usize>,
}

/// Every controller of one simulation run, plants in matching order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSet {
    pub master: MasterController,
    pub slaves: Vec<SlaveController>,
    pub locals: Vec<PlantLocalController>,
    pub bindings: Vec<PlantBinding>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn master_params() -> MasterParams {
        MasterParams::new(1)
    }

    fn slave(q_rng: f64) -> SlaveController {
        SlaveController::new(&SlaveParams::default(), q_rng, 0.0, 1).unwrap()
    }

    #[test]
    fn pi_step_response_matches_analytic_ramp() {
        let mut pi = PiState::new(PiParams::new(4.0, 40.0, -2.0, 2.0).unwrap());
        let dt = 0.001;
        for k in 1..=1000 {
            let y = pi.step(0.01, dt);
            let t = k as f64 * dt;
            assert_relative_eq!(y, 0.04 + 0.4 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn pi_saturates_and_freezes() {
        let mut pi = PiState::new(PiParams::new(0.0, 1.0, -0.5, 0.5).unwrap());
        for _ in 0..2000 {
            pi.step(1.0, 0.01);
        }
        assert_eq!(pi.last_output, 0.5);
        assert!(pi.integrator <= 0.5);
        let frozen = pi.integrator;
        pi.step(1.0, 0.01);
        assert_eq!(pi.integrator, frozen);
    }

    #[test]
    fn pi_zero_error_stays_zero() {
        let mut pi = PiState::new(PiParams::new(4.0, 40.0, -2.0, 2.0).unwrap());
        for _ in 0..100 {
            assert_eq!(pi.step(0.0, 0.005), 0.0);
        }
        assert!(PiParams::new(1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pi_leaves_limit_promptly_after_long_saturation() {
        let mut pi = PiState::new(PiParams::new(4.0, 40.0, -2.0, 2.0).unwrap());
        let dt = 0.005;
        for _ in 0..20_000 {
            pi.step(0.05, dt);
        }
        assert_eq!(pi.last_output, 2.0);
        let ti = 4.0 / 40.0;
        let mut left = None;
        for k in 1..=((ti / dt) as usize) {
            if pi.step(-0.01, dt) < 2.0 {
                left = Some(k);
                break;
            }
        }
        assert!(left.is_some());
    }

    #[test]
    fn lag_matches_exponential() {
        let mut lag = LagState::new(0.02, 0.0).unwrap();
        let dt = 0.002;
        for _ in 0..10 {
            lag.step(1.0, dt);
        }
        assert_relative_eq!(lag.y, 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(lag.y, 0.63212, epsilon = 1e-5);
        let mut fixed = LagState::new(0.02, 0.7).unwrap();
        assert_eq!(fixed.step(0.7, 0.005), 0.7);
        let mut settle = LagState::new(0.02, 0.0).unwrap();
        for _ in 0..10_000 {
            settle.step(3.0, 0.005);
        }
        assert_relative_eq!(settle.y, 3.0, epsilon = 1e-12);
        assert!(LagState::new(0.0, 0.0).is_err());
    }

    #[test]
    fn master_zero_error_and_ramp() {
        let mut mc = MasterController::new(&master_params(), 1.03, 1.03).unwrap();
        for _ in 0..100 {
            assert_eq!(mc.step(1.03, 0.0, 0.005), 0.0);
        }
        let mut mc = MasterController::new(&master_params(), 1.03, 1.029).unwrap();
        let dt = 0.005;
        let mut prev = mc.step(1.029, 0.0, dt);
        for _ in 0..200 {
            let y = mc.step(1.029, 0.0, dt);
            assert_relative_eq!((y - prev) / dt, 0.04, epsilon = 1e-9);
            prev = y;
        }
    }

    #[test]
    fn master_ignores_branch_q_when_gain_is_zero() {
        let mut a = MasterController::new(&master_params(), 1.03, 1.0).unwrap();
        let mut b = a.clone();
        for k in 0..500 {
            let v = 1.0 + 0.0001 * k as f64;
            assert_eq!(a.step(v, 0.0, 0.005), b.step(v, 5.0 * (k as f64).sin(), 0.005));
        }
    }

    #[test]
    fn master_output_clamped() {
        let mut mc = MasterController::new(&master_params(), 1.03, 0.9).unwrap();
        for _ in 0..10_000 {
            mc.step(0.9, 0.0, 0.005);
        }
        assert_eq!(mc.dq_ref, 2.0);
        assert!(mc.saturated());
    }

    #[test]
    fn distribution_examples() {
        let shares = distribute_q_reference(1.0, &[slave(395.2), slave(484.3)]).unwrap();
        assert_relative_eq!(shares[0], 0.449346, epsilon = 1e-6);
        assert_relative_eq!(shares[1], 0.550654, epsilon = 1e-6);
        assert_eq!(
            distribute_q_reference(0.0, &[slave(395.2), slave(484.3)]).unwrap(),
            vec![0.0, 0.0]
        );
        let shares = distribute_q_reference(2.0, &[slave(100.0), slave(100.0), slave(200.0)]).unwrap();
        assert_eq!(shares, vec![0.5, 0.5, 1.0]);
        assert!(matches!(distribute_q_reference(1.0, &[]), Err(Error::NoSlaves)));
    }

    #[test]
    fn slave_nominal_and_integral_sign() {
        let mut sc = SlaveController::new(&SlaveParams::default(), 395.2, 0.7, 1).unwrap();
        assert_eq!(sc.step(0.7, 0.0, 0.005), 1.0);
        let mut prev = 1.0;
        for _ in 0..20_000 {
            let v = sc.step(0.6, 0.0, 0.005);
            assert!(v >= prev);
            assert!(v <= 1.05);
            prev = v;
        }
        assert_eq!(prev, 1.05);
    }

    #[test]
    fn slave_track_is_bumpless() {
        let mut sc = slave(395.2);
        sc.track(1.012);
        assert_relative_eq!(sc.step(0.0, 0.0, 0.005), 1.012, epsilon = 1e-15);
    }

    #[test]
    fn plant_local_holds_at_equilibrium_and_follows_setpoint() {
        let params = PlantLocalParams::default();
        let mut pc = PlantLocalController::new(&params, 1.0, 0.3, -4.0, 4.0).unwrap();
        for _ in 0..100 {
            assert_relative_eq!(pc.step(1.0, 0.005), 0.3, epsilon = 1e-15);
        }
        pc.v_ref = 1.01;
        let mut prev = 0.3;
        for _ in 0..100 {
            let q = pc.step(1.0, 0.005);
            assert!(q > prev);
            prev = q;
        }
    }

    #[test]
    fn plant_local_clamped_to_capability() {
        let mut pc = PlantLocalController::new(&PlantLocalParams::default(), 1.0, 0.0, -1.0, 1.5).unwrap();
        for _ in 0..10_000 {
            let q = pc.step(0.8, 0.005);
            assert!((-1.0..=1.5).contains(&q));
        }
        assert_relative_eq!(pc.q_cmd, 1.5, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn distribution_partitions(dq in -2.0f64..2.0, ranges in proptest::collection::vec(1.0f64..1000.0, 1..6), scale in 0.1f64..10.0) {
            let slaves: Vec<_> = ranges.iter().map(|&r| slave(r)).collect();
            let shares = distribute_q_reference(dq, &slaves).unwrap();
            let sum: f64 = shares.iter().sum();
            prop_assert!((sum - dq).abs() < 1e-12);
            prop_assert!(shares.iter().all(|s| s * dq >= 0.0));
            let scaled: Vec<_> = ranges.iter().map(|&r| slave(r * scale)).collect();
            let shares2 = distribute_q_reference(dq, &scaled).unwrap();
            for (a, b) in shares.iter().zip(&shares2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn limits_hold_for_random_inputs(errors in proptest::collection::vec(-0.2f64..0.2, 1..400)) {
            let mut mc = MasterController::new(&master_params(), 1.03, 1.03).unwrap();
            let mut sc = slave(395.2);
            for e in errors {
                let dq = mc.step(1.03 - e, 0.0, 0.005);
                prop_assert!((-2.0..=2.0).contains(&dq));
                let v = sc.step(e * 10.0, dq, 0.005);
                prop_assert!((0.95..=1.05).contains(&v));
            }
        }
    }
}
