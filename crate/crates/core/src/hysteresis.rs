//! Inflate/deflate cycle of a single actuator and the resulting θ(p) loop.

use serde::Serialize;

use crate::actuator::{actuator_step, ActuatorParams, ActuatorState, PressureRamp};
use crate::error::{Result, TwinError};
use crate::pump::{pump_step, vent_step, PumpParams, PumpState};
use crate::settle::{SettleCriterion, SettleTracker};

/// Velocity bound for "at rest" between the two halves of the cycle. Far
/// tighter than the grasp settling rule so the unloading half starts from
/// the equilibrium to rounding precision.
pub const REST_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct HysteresisLoop {
    /// `(p, θ)` after each inflation step, starting at rest.
    pub loading: Vec<(f64, f64)>,
    /// `(p, θ)` after each vent step, starting at the settled top.
    pub unloading: Vec<(f64, f64)>,
    pub p_top: f64,
    /// Settled angle at `p_top` before venting.
    pub theta_top: f64,
    /// Area between the loading path and the unloading path reflected
    /// through the loop centre `(p_top/2, θ_top/2)`. Positive when
    /// unloading is more damped than loading; zero when both paths share
    /// one damping ratio.
    pub asymmetry_area: f64,
    /// Plain loop area `∫ θ_unload dp - ∫ θ_load dp`, including the lag
    /// that any viscous response shows.
    pub dissipation_area: f64,
    pub final_state: ActuatorState,
}

/// Inflates from rest to `p_top` at `speed`, holds until at rest, vents at
/// the same speed back to zero and holds again.
pub fn hysteresis_loop(
    params: &ActuatorParams,
    pump: &PumpParams,
    speed: f64,
    p_top: f64,
    dt: f64,
) -> Result<HysteresisLoop> {
    if !(p_top > 0.0 && p_top.is_finite()) {
        return Err(TwinError::InvalidArgument(format!(
            "top pressure must be finite and > 0, got {p_top}"
        )));
    }
    if !(speed > 0.0) {
        return Err(TwinError::CommandRange {
            omega: speed,
            omega_max: pump.omega_max,
        });
    }
    let rest = SettleCriterion {
        tolerance: REST_TOLERANCE,
        ..SettleCriterion::default()
    };
    let pump = pump.with_ceiling(p_top);
    let mut state = ActuatorState::at_rest();
    let mut p = PumpState::default();

    let mut loading = vec![(0.0, 0.0)];
    while p.pressure < p_top {
        let before = p.pressure;
        p = pump_step(&pump, p, speed, dt)?;
        state = actuator_step(&state, params, PressureRamp::new(before, p.pressure), dt)?.state;
        loading.push((p.pressure, state.theta));
    }
    state = hold_until_rest(state, params, p_top, dt, &rest)?;
    let theta_top = state.theta;

    let mut unloading = vec![(p_top, theta_top)];
    while p.pressure > 0.0 {
        let before = p.pressure;
        p = vent_step(&pump, p, speed, dt)?;
        state = actuator_step(&state, params, PressureRamp::new(before, p.pressure), dt)?.state;
        unloading.push((p.pressure, state.theta));
    }
    state = hold_until_rest(state, params, 0.0, dt, &rest)?;

    let asymmetry_area = reflected_area(&loading, &unloading, theta_top);
    let dissipation_area = -(path_integral(&loading) + path_integral(&unloading));
    Ok(HysteresisLoop {
        loading,
        unloading,
        p_top,
        theta_top,
        asymmetry_area,
        dissipation_area,
        final_state: state,
    })
}

fn hold_until_rest(
    mut state: ActuatorState,
    params: &ActuatorParams,
    p: f64,
    dt: f64,
    rest: &SettleCriterion,
) -> Result<ActuatorState> {
    let mut tracker = SettleTracker::new(rest, dt);
    for _ in 0..rest.horizon_steps(dt) {
        state = actuator_step(&state, params, PressureRamp::constant(p), dt)?.state;
        if tracker.observe(state.theta_dot) {
            return Ok(state);
        }
    }
    Err(TwinError::Horizon {
        trial: 0,
        horizon: rest.horizon,
    })
}

/// Trapezoidal `∫ θ dp` along a sampled path.
fn path_integral(path: &[(f64, f64)]) -> f64 {
    path.windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum()
}

/// Pairs the k-th inflation and vent steps. Both ramps run at the same
/// speed, so they have the same length up to one rounding step.
fn reflected_area(loading: &[(f64, f64)], unloading: &[(f64, f64)], theta_top: f64) -> f64 {
    let gap = |k: usize| {
        let (_, up) = loading[k];
        let (_, down) = unloading[k];
        up - (theta_top - down)
    };
    let n = loading.len().min(unloading.len());
    let mut area = 0.0;
    for k in 1..n {
        let dp = loading[k].0 - loading[k - 1].0;
        area += 0.5 * (gap(k - 1) + gap(k)) * dp;
    }
    area
}
