//! Underactuated gripper: one pump pressure drives every finger.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuator::{actuator_step, ActuatorParams, ActuatorState, PressureRamp};
use crate::error::{Result, TwinError};
use crate::pump::{pump_step, PumpParams, PumpState};
use crate::rng::derive_seed;
use crate::settle::SettleTracker;
use crate::uncertainty::{sample_params, SampledParams, SimOptions, SpeedUncertaintyTable};

/// Trailing window over which the steady-state finger spread is measured, s.
pub const STEADY_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GripperSystem {
    pub pump: PumpParams,
    /// Pressure at which the pump stops.
    pub p_final: f64,
    pub fingers: Vec<ActuatorParams>,
}

impl GripperSystem {
    pub fn new(pump: PumpParams, p_final: f64, fingers: Vec<ActuatorParams>) -> Result<Self> {
        let g = Self {
            pump,
            p_final,
            fingers,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fingers.is_empty() {
            return Err(TwinError::Configuration(
                "a gripper needs at least one finger".into(),
            ));
        }
        self.pump.validate().map_err(|e| e.within("pump"))?;
        if !(self.p_final > 0.0 && self.p_final.is_finite()) {
            return Err(TwinError::invalid("p_final", "must be finite and > 0"));
        }
        for (i, f) in self.fingers.iter().enumerate() {
            f.validate()
                .map_err(|e| e.within(&format!("fingers[{i}]")))?;
        }
        Ok(())
    }

    pub fn n_fingers(&self) -> usize {
        self.fingers.len()
    }

    /// Sets each finger's pressure gain so its nominal equilibrium at
    /// `p_final` is `target_theta`: `g_i = ω_n,i² θ / p_final`.
    pub fn calibrate_gains(&mut self, target_theta: f64) -> Result<Vec<f64>> {
        if !(self.p_final > 0.0) {
            return Err(TwinError::Calibration(format!(
                "final pressure must be > 0, got {}",
                self.p_final
            )));
        }
        let limit = self.theta_max();
        if !(target_theta > 0.0 && target_theta <= limit) {
            return Err(TwinError::Calibration(format!(
                "target {target_theta} rad outside (0, {limit}]"
            )));
        }
        let p_final = self.p_final;
        Ok(self
            .fingers
            .iter_mut()
            .map(|f| {
                f.pressure_gain = f.omega_n * f.omega_n * target_theta / p_final;
                f.pressure_gain
            })
            .collect())
    }

    /// Smallest operating-range limit over all fingers.
    pub fn theta_max(&self) -> f64 {
        self.fingers
            .iter()
            .map(|f| f.theta_max)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspCommand {
    /// rad/s
    pub motor_speed: f64,
    /// Common step reference for every finger, rad.
    pub target_theta: f64,
    /// How long to keep simulating after the pump stops, s.
    pub hold_duration: f64,
}

impl GraspCommand {
    pub fn new(motor_speed: f64, target_theta: f64) -> Self {
        Self {
            motor_speed,
            target_theta,
            hold_duration: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    PumpStop,
    /// Zero-based finger index.
    Clamp(usize),
    Settled(usize),
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::PumpStop => write!(f, "pump_stop"),
            TraceEvent::Clamp(i) => write!(f, "clamp_{}", i + 1),
            TraceEvent::Settled(i) => write!(f, "settled_{}", i + 1),
        }
    }
}

impl FromStr for TraceEvent {
    type Err = TwinError;

    fn from_str(s: &str) -> Result<Self> {
        let finger = |rest: &str| -> Result<usize> {
            rest.parse::<usize>()
                .ok()
                .filter(|&i| i >= 1)
                .map(|i| i - 1)
                .ok_or_else(|| TwinError::TraceFormat(format!("bad event `{s}`")))
        };
        if s == "pump_stop" {
            Ok(TraceEvent::PumpStop)
        } else if let Some(rest) = s.strip_prefix("clamp_") {
            Ok(TraceEvent::Clamp(finger(rest)?))
        } else if let Some(rest) = s.strip_prefix("settled_") {
            Ok(TraceEvent::Settled(finger(rest)?))
        } else {
            Err(TwinError::TraceFormat(format!("unknown event `{s}`")))
        }
    }
}

/// Time series of one grasp. Row `k` is the state at `time[k]`; every
/// series shares the same grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiTrace {
    pub time: Vec<f64>,
    pub pressure: Vec<f64>,
    /// `theta[finger][row]`
    pub theta: Vec<Vec<f64>>,
    pub theta_dot: Vec<Vec<f64>>,
    pub events: Vec<Vec<TraceEvent>>,
    /// Common step reference, rad.
    pub reference: f64,
    /// Per-finger parameter draws when uncertainty was enabled.
    pub samples: Vec<SampledParams>,
}

impl MultiTrace {
    pub fn empty(n_fingers: usize) -> Self {
        Self {
            theta: vec![Vec::new(); n_fingers],
            theta_dot: vec![Vec::new(); n_fingers],
            ..Default::default()
        }
    }

    pub fn n_fingers(&self) -> usize {
        self.theta.len()
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    fn push_row(&mut self, t: f64, p: f64, states: &[ActuatorState], events: Vec<TraceEvent>) {
        self.time.push(t);
        self.pressure.push(p);
        for (i, s) in states.iter().enumerate() {
            self.theta[i].push(s.theta);
            self.theta_dot[i].push(s.theta_dot);
        }
        self.events.push(events);
    }

    /// Largest pairwise finger difference at row `k`, rad.
    pub fn spread_at(&self, k: usize) -> f64 {
        let (lo, hi) = self
            .theta
            .iter()
            .map(|series| series[k])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    /// Row at which the last finger first met the settling rule.
    pub fn all_settled_row(&self) -> Option<usize> {
        let mut pending: Vec<bool> = vec![true; self.n_fingers()];
        for (k, events) in self.events.iter().enumerate() {
            for e in events {
                if let TraceEvent::Settled(i) = e {
                    if let Some(flag) = pending.get_mut(*i) {
                        *flag = false;
                    }
                }
            }
            if pending.iter().all(|p| !p) {
                return Some(k);
            }
        }
        None
    }
}

/// Simulates one grasp: the pump runs at `cmd.motor_speed` until the
/// pressure reaches `p_final`, then stops for `cmd.hold_duration` seconds.
/// Every finger integrates against the same pressure ramp in each step.
///
/// With `uncertainty = Some((table, seed))` finger `i` uses a parameter
/// draw from `derive_seed(seed, i)` at the sigmas for the commanded speed.
pub fn simulate_grasp(
    gripper: &GripperSystem,
    cmd: &GraspCommand,
    opts: &SimOptions,
    uncertainty: Option<(&SpeedUncertaintyTable, u64)>,
) -> Result<MultiTrace> {
    let dt = opts.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TwinError::InvalidArgument(format!(
            "time step must be > 0, got {dt}"
        )));
    }
    if !(cmd.motor_speed > 0.0 && cmd.motor_speed <= gripper.pump.omega_max) {
        return Err(TwinError::CommandRange {
            omega: cmd.motor_speed,
            omega_max: gripper.pump.omega_max,
        });
    }
    if !(cmd.target_theta > 0.0 && cmd.target_theta <= gripper.theta_max()) {
        return Err(TwinError::InvalidArgument(format!(
            "target {} rad outside (0, {}]",
            cmd.target_theta,
            gripper.theta_max()
        )));
    }
    if !(cmd.hold_duration >= 0.0 && cmd.hold_duration.is_finite()) {
        return Err(TwinError::InvalidArgument(
            "hold duration must be >= 0".into(),
        ));
    }

    let n = gripper.n_fingers();
    let mut samples = Vec::new();
    let fingers: Vec<ActuatorParams> = match uncertainty {
        None => gripper.fingers.clone(),
        Some((table, seed)) => {
            let sigmas = table.sigma_for_speed(cmd.motor_speed)?;
            gripper
                .fingers
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let s = sample_params(f, sigmas, derive_seed(seed, i as u64))?;
                    samples.push(s);
                    Ok(s.apply_to(f))
                })
                .collect::<Result<_>>()?
        }
    };

    let pump = gripper.pump.with_ceiling(gripper.p_final);
    let mut pressure = PumpState::default();
    let mut states = vec![ActuatorState::at_rest(); n];
    let mut trackers: Vec<SettleTracker> = (0..n)
        .map(|_| SettleTracker::new(&opts.settle, dt))
        .collect();
    let mut settled = vec![false; n];

    let mut trace = MultiTrace::empty(n);
    trace.reference = cmd.target_theta;
    trace.samples = samples;
    trace.push_row(0.0, 0.0, &states, Vec::new());

    let hold_steps = (cmd.hold_duration / dt).round() as usize;
    let mut stop_step: Option<usize> = None;
    let mut k = 0usize;
    loop {
        if let Some(s) = stop_step {
            if k >= s + hold_steps {
                break;
            }
        }
        k += 1;
        let mut events = Vec::new();
        let before = pressure.pressure;
        if stop_step.is_none() {
            pressure = pump_step(&pump, pressure, cmd.motor_speed, dt)?;
            if pressure.pressure >= gripper.p_final {
                stop_step = Some(k);
                events.push(TraceEvent::PumpStop);
            }
        }
        let ramp = PressureRamp::new(before, pressure.pressure);
        for i in 0..n {
            let out = actuator_step(&states[i], &fingers[i], ramp, dt)?;
            states[i] = out.state;
            if out.clamped {
                events.push(TraceEvent::Clamp(i));
            }
            if stop_step.is_some() && !settled[i] && trackers[i].observe(out.state.theta_dot) {
                settled[i] = true;
                events.push(TraceEvent::Settled(i));
            }
        }
        trace.push_row(k as f64 * dt, pressure.pressure, &states, events);
    }
    Ok(trace)
}

/// Finger-to-finger disagreement of one grasp, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coordination {
    /// Largest spread from the start until every finger has settled (or
    /// the whole trace if some finger never does).
    pub max_transient_diff_deg: f64,
    /// Largest spread over the final second.
    pub steady_diff_deg: f64,
    /// Largest spread anywhere in the trace.
    pub max_diff_deg: f64,
}

pub fn coordination_error(trace: &MultiTrace) -> Result<Coordination> {
    if trace.n_fingers() < 2 {
        return Err(TwinError::NotApplicable(format!(
            "coordination needs at least two fingers, trace has {}",
            trace.n_fingers()
        )));
    }
    if trace.is_empty() {
        return Err(TwinError::NotApplicable("empty trace".into()));
    }
    let last = trace.len() - 1;
    let transient_end = trace.all_settled_row().unwrap_or(last);
    let t_end = trace.time[last];
    let spreads: Vec<f64> = (0..trace.len()).map(|k| trace.spread_at(k)).collect();
    let max_of = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);

    let transient = max_of(&mut spreads[..=transient_end].iter().copied());
    let steady = max_of(
        &mut spreads
            .iter()
            .zip(&trace.time)
            .filter(|(_, &t)| t >= t_end - STEADY_WINDOW - 1e-12)
            .map(|(s, _)| *s),
    );
    let overall = max_of(&mut spreads.iter().copied());
    Ok(Coordination {
        max_transient_diff_deg: transient.to_degrees(),
        steady_diff_deg: steady.to_degrees(),
        max_diff_deg: overall.to_degrees(),
    })
}

/// Runs `runs` independent uncertain grasps, run `r` seeded with
/// `derive_seed(seed, r)`, and returns their coordination metrics in run
/// order.
pub fn coordination_batch(
    gripper: &GripperSystem,
    cmd: &GraspCommand,
    opts: &SimOptions,
    table: &SpeedUncertaintyTable,
    seed: u64,
    runs: usize,
) -> Result<Vec<Coordination>> {
    let out: Vec<Result<Coordination>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let trace = simulate_grasp(
                gripper,
                cmd,
                opts,
                Some((table, derive_seed(seed, r as u64))),
            )?;
            coordination_error(&trace)
        })
        .collect();
    out.into_iter().collect()
}
