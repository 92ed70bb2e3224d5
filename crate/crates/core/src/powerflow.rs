//! Polar Newton-Raphson AC power flow with PV/PQ switching.
//!
//! Divergence is reported through [`PowerFlowSolution::converged`], never as
//! an error; the simulation layer reads it as voltage collapse.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{build_admittance_matrix, validate_network, BusId, BusKind, Network};

/// Maximum number of PV/PQ switching passes around the Newton solve.
pub const MAX_Q_LIMIT_PASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub flat_start: bool,
    pub q_limit_enforcement: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 30,
            flat_start: false,
            q_limit_enforcement: true,
        }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "solver tolerance must be > 0 and max_iterations >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Lower,
    Upper,
}

/// A voltage-controlled bus held at one of its reactive limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub limit: Limit,
    /// Total reactive output of the bus's regulating injectors.
    pub q: f64,
}

/// Voltage-controlled buses currently re-typed to load buses, keyed by bus id.
pub type QLimitPins = BTreeMap<BusId, Pin>;

#[derive(Debug, Clone, PartialEq)]
pub struct QLimitUpdate {
    pub changed: bool,
    /// Effective kind of every bus after the update, in bus order.
    pub bus_kinds: Vec<(BusId, BusKind)>,
    pub pinned: Vec<BusId>,
    pub released: Vec<BusId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub converged: bool,
    pub iterations: usize,
    pub bus_ids: Vec<BusId>,
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// Net complex injection computed at each bus.
    pub p_bus: Vec<f64>,
    pub q_bus: Vec<f64>,
    /// Per-injector outputs in network injector order; zero when out of service.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub max_mismatch: f64,
    /// Infinity norm of the mismatch at each Newton iterate of the final solve.
    pub mismatch_history: Vec<f64>,
    pub bus_kinds: Vec<BusKind>,
    pub pins: QLimitPins,
}

impl PowerFlowSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.v_mag
            .iter()
            .zip(&self.v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    fn position(&self, bus: BusId) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus)
    }

    pub fn v_mag_at(&self, bus: BusId) -> Option<f64> {
        self.position(bus).map(|k| self.v_mag[k])
    }

    /// Complex power entering branch `index` at its from end and at its to end.
    pub fn branch_flow(&self, net: &Network, index: usize) -> (Complex64, Complex64) {
        let br = &net.branches[index];
        if !br.in_service {
            return (Complex64::default(), Complex64::default());
        }
        let (f, t) = (self.position(br.from_bus).unwrap(), self.position(br.to_bus).unwrap());
        let vf = Complex64::from_polar(self.v_mag[f], self.v_ang[f]);
        let vt = Complex64::from_polar(self.v_mag[t], self.v_ang[t]);
        let s = br.stamp();
        let i_f = s[0][0] * vf + s[0][1] * vt;
        let i_t = s[1][0] * vf + s[1][1] * vt;
        (vf * i_f.conj(), vt * i_t.conj())
    }
}

/// Warm-start state carried between consecutive solves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub voltages: Vec<Complex64>,
    pub pins: QLimitPins,
}

impl WarmStart {
    pub fn from_solution(sol: &PowerFlowSolution) -> Self {
        Self {
            voltages: sol.voltages(),
            pins: sol.pins.clone(),
        }
    }
}

/// Grid data flattened for dense indexing.
struct Prepared {
    y: DMatrix<Complex64>,
    ids: Vec<BusId>,
    kinds: Vec<BusKind>,
    v_set: Vec<f64>,
    /// Scheduled injection from loads and non-regulating injectors.
    s_fixed: Vec<Complex64>,
    q_min: Vec<f64>,
    q_max: Vec<f64>,
}

impl Prepared {
    fn new(net: &Network) -> Self {
        let idx = net.bus_index();
        let n = net.buses.len();
        let mut kinds: Vec<BusKind> = net.buses.iter().map(|b| b.kind).collect();
        let mut v_set: Vec<f64> = net.buses.iter().map(|b| b.v_mag).collect();
        let mut s_fixed: Vec<Complex64> = net.buses.iter().map(|b| Complex64::new(-b.p_load, -b.q_load)).collect();
        let mut q_min = vec![0.0; n];
        let mut q_max = vec![0.0; n];
        let mut regulated = vec![false; n];

        for inj in net.injectors.iter().filter(|i| i.in_service) {
            let k = idx[&inj.bus];
            let regulating = inj.kind.regulates_voltage() && kinds[k] != BusKind::Load;
            if regulating {
                if !regulated[k] {
                    v_set[k] = inj.v_set;
                }
                regulated[k] = true;
                q_min[k] += inj.q_min;
                q_max[k] += inj.q_max;
                if kinds[k] != BusKind::Slack {
                    s_fixed[k] += Complex64::new(inj.p_set, 0.0);
                }
            } else {
                s_fixed[k] += Complex64::new(inj.p_set, inj.q_out);
            }
        }
        for k in 0..n {
            if kinds[k] == BusKind::VoltageControlled && !regulated[k] {
                kinds[k] = BusKind::Load;
            }
        }
        Self {
            y: build_admittance_matrix(net),
            ids: net.buses.iter().map(|b| b.id).collect(),
            kinds,
            v_set,
            s_fixed,
            q_min,
            q_max,
        }
    }

    fn n(&self) -> usize {
        self.ids.len()
    }

    fn effective_kinds(&self, pins: &QLimitPins) -> Vec<BusKind> {
        self.kinds
            .iter()
            .zip(&self.ids)
            .map(|(&k, id)| {
                if k == BusKind::VoltageControlled && pins.contains_key(id) {
                    BusKind::Load
                } else {
                    k
                }
            })
            .collect()
    }

    fn scheduled(&self, pins: &QLimitPins) -> Vec<Complex64> {
        self.s_fixed
            .iter()
            .zip(&self.ids)
            .zip(&self.kinds)
            .map(|((&s, id), &kind)| match pins.get(id) {
                Some(pin) if kind == BusKind::VoltageControlled => s + Complex64::new(0.0, pin.q),
                _ => s,
            })
            .collect()
    }

    fn flat_start(&self) -> Vec<Complex64> {
        self.kinds
            .iter()
            .zip(&self.v_set)
            .map(|(&k, &vs)| match k {
                BusKind::Load => Complex64::new(1.0, 0.0),
                _ => Complex64::new(vs, 0.0),
            })
            .collect()
    }

    /// Seeds regulated magnitudes at their setpoints, keeping angles.
    fn seed(&self, v: &[Complex64], pins: &QLimitPins) -> Vec<Complex64> {
        let kinds = self.effective_kinds(pins);
        v.iter()
            .zip(&kinds)
            .zip(&self.v_set)
            .map(|((&v, &k), &vs)| match k {
                BusKind::Load => v,
                _ => Complex64::from_polar(vs, v.arg()),
            })
            .collect()
    }
}

fn computed_injection(y: &DMatrix<Complex64>, v: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = v.len();
    let mut current = vec![Complex64::default(); n];
    for i in 0..n {
        let mut acc = Complex64::default();
        for k in 0..n {
            acc += y[(i, k)] * v[k];
        }
        current[i] = acc;
    }
    let s = v.iter().zip(&current).map(|(v, i)| v * i.conj()).collect();
    (s, current)
}

/// Per-bus residual of scheduled minus computed injection.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// Active power rows for every non-slack bus.
    pub p: Vec<(BusId, f64)>,
    /// Reactive power rows for every load bus.
    pub q: Vec<(BusId, f64)>,
}

impl Mismatch {
    pub fn max_abs(&self) -> f64 {
        self.p.iter().chain(&self.q).map(|(_, m)| m.abs()).fold(0.0, f64::max)
    }
}

/// Evaluates the power-balance residual of `net` at the voltage vector `v`
/// (ordered as [`Network::bus_index`]).
pub fn compute_mismatch(net: &Network, v: &[Complex64]) -> Result<Mismatch> {
    if v.len() != net.buses.len() {
        return Err(Error::DimensionMismatch {
            expected: net.buses.len(),
            got: v.len(),
        });
    }
    let prep = Prepared::new(net);
    let pins = QLimitPins::new();
    let sched = prep.scheduled(&pins);
    let (s, _) = computed_injection(&prep.y, v);
    let mut out = Mismatch {
        p: Vec::new(),
        q: Vec::new(),
    };
    for k in 0..prep.n() {
        let d = sched[k] - s[k];
        if prep.kinds[k] != BusKind::Slack {
            out.p.push((prep.ids[k], d.re));
        }
        if prep.kinds[k] == BusKind::Load {
            out.q.push((prep.ids[k], d.im));
        }
    }
    Ok(out)
}

struct NewtonOutcome {
    converged: bool,
    iterations: usize,
    v: Vec<Complex64>,
    history: Vec<f64>,
}

fn residual(kinds: &[BusKind], sched: &[Complex64], s: &[Complex64], pv_pq: &[usize], pq: &[usize]) -> DVector<f64> {
    let mut f = DVector::zeros(pv_pq.len() + pq.len());
    for (r, &k) in pv_pq.iter().enumerate() {
        f[r] = sched[k].re - s[k].re;
    }
    for (r, &k) in pq.iter().enumerate() {
        f[pv_pq.len() + r] = sched[k].im - s[k].im;
    }
    debug_assert!(pq.iter().all(|&k| kinds[k] == BusKind::Load));
    f
}

fn newton(prep: &Prepared, pins: &QLimitPins, v0: Vec<Complex64>, opts: &SolverOptions) -> NewtonOutcome {
    let kinds = prep.effective_kinds(pins);
    let sched = prep.scheduled(pins);
    let pv_pq: Vec<usize> = (0..prep.n()).filter(|&k| kinds[k] != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..prep.n()).filter(|&k| kinds[k] == BusKind::Load).collect();
    let (na, nm) = (pv_pq.len(), pq.len());

    let mut v = v0;
    let mut history = Vec::new();
    let mut iterations = 0;
    // Set once the tolerance is met; one refinement step follows so the
    // returned state is accurate well beyond the mismatch tolerance.
    let mut polishing = false;
    let mut accepted = None;
    loop {
        let (s, current) = computed_injection(&prep.y, &v);
        let f = residual(&kinds, &sched, &s, &pv_pq, &pq);
        let norm = f.amax();
        history.push(norm);
        if !norm.is_finite() {
            break;
        }
        if polishing || norm <= opts.tolerance * 1e-4 {
            return NewtonOutcome {
                converged: norm <= opts.tolerance,
                iterations,
                v,
                history,
            };
        }
        if norm <= opts.tolerance {
            polishing = true;
            accepted = Some(v.clone());
        } else {
            if iterations >= opts.max_iterations {
                break;
            }
            iterations += 1;
        }

        // dS/dVa and dS/dVm, restricted to the unknowns.
        let mut jac = DMatrix::<f64>::zeros(na + nm, na + nm);
        let vn: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        let j = Complex64::new(0.0, 1.0);
        for (r, &i) in pv_pq.iter().enumerate() {
            for (c, &k) in pv_pq.iter().enumerate() {
                let mut d = (prep.y[(i, k)] * v[k]).conj();
                if i == k {
                    d = current[i].conj() - d;
                } else {
                    d = -d;
                }
                let ds_dva = j * v[i] * d;
                jac[(r, c)] = ds_dva.re;
            }
            for (c, &k) in pq.iter().enumerate() {
                let mut ds_dvm = v[i] * (prep.y[(i, k)] * vn[k]).conj();
                if i == k {
                    ds_dvm += current[i].conj() * vn[i];
                }
                jac[(r, na + c)] = ds_dvm.re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pv_pq.iter().enumerate() {
                let mut d = (prep.y[(i, k)] * v[k]).conj();
                if i == k {
                    d = current[i].conj() - d;
                } else {
                    d = -d;
                }
                let ds_dva = j * v[i] * d;
                jac[(na + r, c)] = ds_dva.im;
            }
            for (c, &k) in pq.iter().enumerate() {
                let mut ds_dvm = v[i] * (prep.y[(i, k)] * vn[k]).conj();
                if i == k {
                    ds_dvm += current[i].conj() * vn[i];
                }
                jac[(na + r, na + c)] = ds_dvm.im;
            }
        }

        let Some(dx) = jac.lu().solve(&f) else {
            break;
        };
        if dx.iter().any(|x| !x.is_finite()) {
            break;
        }
        for (r, &k) in pv_pq.iter().enumerate() {
            let (m, a) = v[k].to_polar();
            v[k] = Complex64::from_polar(m, a + dx[r]);
        }
        for (r, &k) in pq.iter().enumerate() {
            let (m, a) = v[k].to_polar();
            v[k] = Complex64::from_polar(m + dx[na + r], a);
        }
        if v.iter().any(|x| !(x.norm() > 1e-3 && x.norm() < 5.0)) {
            break;
        }
    }
    match accepted {
        Some(v) => NewtonOutcome {
            converged: true,
            iterations,
            v,
            history,
        },
        None => NewtonOutcome {
            converged: false,
            iterations,
            v,
            history,
        },
    }
}

/// Pins or releases voltage-controlled buses against their reactive limits.
/// Returns true when the set of pinned buses changed.
fn update_pins(prep: &Prepared, v: &[Complex64], pins: &mut QLimitPins) -> (bool, Vec<BusId>, Vec<BusId>) {
    let (s, _) = computed_injection(&prep.y, v);
    let mut pinned = Vec::new();
    let mut released = Vec::new();
    for k in 0..prep.n() {
        if prep.kinds[k] != BusKind::VoltageControlled {
            continue;
        }
        let id = prep.ids[k];
        match pins.get(&id) {
            Some(pin) => {
                let vm = v[k].norm();
                let reversed = match pin.limit {
                    Limit::Upper => vm > prep.v_set[k],
                    Limit::Lower => vm < prep.v_set[k],
                };
                if reversed {
                    pins.remove(&id);
                    released.push(id);
                }
            }
            None => {
                let q_reg = s[k].im - prep.s_fixed[k].im;
                let pin = if q_reg > prep.q_max[k] {
                    Some(Pin {
                        limit: Limit::Upper,
                        q: prep.q_max[k],
                    })
                } else if q_reg < prep.q_min[k] {
                    Some(Pin {
                        limit: Limit::Lower,
                        q: prep.q_min[k],
                    })
                } else {
                    None
                };
                if let Some(pin) = pin {
                    pins.insert(id, pin);
                    pinned.push(id);
                }
            }
        }
    }
    // Drop pins whose bus no longer regulates (e.g. its generator tripped).
    pins.retain(|id, _| {
        prep.ids
            .iter()
            .position(|b| b == id)
            .map(|k| prep.kinds[k] == BusKind::VoltageControlled)
            .unwrap_or(false)
    });
    (!pinned.is_empty() || !released.is_empty(), pinned, released)
}

/// One PV/PQ switching pass over a solved state. Any regulating bus whose
/// reactive demand exceeds its limits is pinned at the violated limit and
/// re-typed to a load bus; a pinned bus whose voltage error has reversed is
/// released.
pub fn apply_q_limits(net: &Network, sol: &PowerFlowSolution, pins: &mut QLimitPins) -> Result<QLimitUpdate> {
    if sol.v_mag.len() != net.buses.len() {
        return Err(Error::DimensionMismatch {
            expected: net.buses.len(),
            got: sol.v_mag.len(),
        });
    }
    let prep = Prepared::new(net);
    let (changed, pinned, released) = update_pins(&prep, &sol.voltages(), pins);
    let kinds = prep.effective_kinds(pins);
    Ok(QLimitUpdate {
        changed,
        bus_kinds: prep.ids.iter().copied().zip(kinds).collect(),
        pinned,
        released,
    })
}

fn assemble(net: &Network, prep: &Prepared, out: NewtonOutcome, pins: QLimitPins) -> PowerFlowSolution {
    let (s, _) = computed_injection(&prep.y, &out.v);
    let kinds = prep.effective_kinds(&pins);
    let idx = net.bus_index();

    // Reactive output of regulators at each bus, and slack active output.
    let mut reg_q = vec![0.0; prep.n()];
    let mut slack_p = vec![0.0; prep.n()];
    let mut reg_count = vec![0usize; prep.n()];
    for k in 0..prep.n() {
        reg_q[k] = match pins.get(&prep.ids[k]) {
            Some(pin) if prep.kinds[k] == BusKind::VoltageControlled => pin.q,
            _ => s[k].im - prep.s_fixed[k].im,
        };
        slack_p[k] = s[k].re - prep.s_fixed[k].re;
    }
    for inj in net.injectors.iter().filter(|i| i.in_service) {
        let k = idx[&inj.bus];
        if inj.kind.regulates_voltage() && prep.kinds[k] != BusKind::Load {
            reg_count[k] += 1;
        }
    }

    let mut p_inj = Vec::with_capacity(net.injectors.len());
    let mut q_inj = Vec::with_capacity(net.injectors.len());
    for inj in &net.injectors {
        if !inj.in_service {
            p_inj.push(0.0);
            q_inj.push(0.0);
            continue;
        }
        let k = idx[&inj.bus];
        if inj.kind.regulates_voltage() && prep.kinds[k] != BusKind::Load {
            let p = if prep.kinds[k] == BusKind::Slack {
                slack_p[k] / reg_count[k] as f64
            } else {
                inj.p_set
            };
            let span = prep.q_max[k] - prep.q_min[k];
            let q = if span > 0.0 {
                inj.q_min + (reg_q[k] - prep.q_min[k]) * (inj.q_max - inj.q_min) / span
            } else {
                reg_q[k] / reg_count[k] as f64
            };
            p_inj.push(p);
            q_inj.push(q);
        } else {
            p_inj.push(inj.p_set);
            q_inj.push(inj.q_out);
        }
    }

    PowerFlowSolution {
        converged: out.converged,
        iterations: out.iterations,
        bus_ids: prep.ids.clone(),
        v_mag: out.v.iter().map(|v| v.norm()).collect(),
        v_ang: out.v.iter().map(|v| v.arg()).collect(),
        p_bus: s.iter().map(|s| s.re).collect(),
        q_bus: s.iter().map(|s| s.im).collect(),
        p_inj,
        q_inj,
        max_mismatch: out.history.last().copied().unwrap_or(f64::INFINITY),
        mismatch_history: out.history,
        bus_kinds: kinds,
        pins,
    }
}

fn attempt(
    net: &Network,
    prep: &Prepared,
    seed: Vec<Complex64>,
    mut pins: QLimitPins,
    opts: &SolverOptions,
) -> PowerFlowSolution {
    let mut v = prep.seed(&seed, &pins);
    let mut total_iterations = 0;
    let mut switched = BTreeSet::new();
    for pass in 0..=MAX_Q_LIMIT_PASSES {
        let mut out = newton(prep, &pins, v, opts);
        total_iterations += out.iterations;
        let mut done = !out.converged || !opts.q_limit_enforcement || pass == MAX_Q_LIMIT_PASSES;
        if !done {
            let used = pins.clone();
            let (changed, pinned, released) = update_pins(prep, &out.v, &mut pins);
            // A bus switched back within one solve has no consistent state:
            // at its limit the voltage overshoots the setpoint, and at the
            // setpoint the demand exceeds the limit.
            let hunting = pinned.iter().chain(&released).any(|id| switched.contains(id));
            if hunting {
                out.converged = false;
                pins = used;
            }
            switched.extend(pinned.into_iter().chain(released));
            done = hunting || !changed;
        }
        if done {
            let mut sol = assemble(net, prep, out, pins);
            sol.iterations = total_iterations;
            return sol;
        }
        v = prep.seed(&out.v, &pins);
    }
    unreachable!("loop returns on its final pass")
}

/// Solves `net` from its stored bus voltages (or flat when requested).
pub fn solve_power_flow(net: &Network, opts: &SolverOptions) -> Result<PowerFlowSolution> {
    let violations = validate_network(net);
    if !violations.is_empty() {
        return Err(Error::InvalidNetwork(violations));
    }
    opts.check()?;
    let seed = WarmStart {
        voltages: net
            .buses
            .iter()
            .map(|b| Complex64::from_polar(b.v_mag, b.v_ang))
            .collect(),
        pins: QLimitPins::new(),
    };
    Ok(solve_prevalidated(net, opts, Some(&seed)))
}

/// Solves `net` seeded from a previous state. The network must already have
/// passed [`validate_network`]. When the seeded solve fails, one retry is made
/// from a flat start with all Q-limit pins cleared.
pub fn solve_power_flow_warm(net: &Network, opts: &SolverOptions, warm: &WarmStart) -> Result<PowerFlowSolution> {
    opts.check()?;
    if warm.voltages.len() != net.buses.len() {
        return Err(Error::DimensionMismatch {
            expected: net.buses.len(),
            got: warm.voltages.len(),
        });
    }
    Ok(solve_prevalidated(net, opts, Some(warm)))
}

fn solve_prevalidated(net: &Network, opts: &SolverOptions, warm: Option<&WarmStart>) -> PowerFlowSolution {
    let prep = Prepared::new(net);
    let flat = prep.flat_start();
    match warm {
        Some(w) if !opts.flat_start => {
            let sol = attempt(net, &prep, w.voltages.clone(), w.pins.clone(), opts);
            if sol.converged {
                return sol;
            }
            let retry = attempt(net, &prep, flat, QLimitPins::new(), opts);
            if retry.converged {
                retry
            } else {
                sol
            }
        }
        _ => attempt(net, &prep, flat, QLimitPins::new(), opts),
    }
}
