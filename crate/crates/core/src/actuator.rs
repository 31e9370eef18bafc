//! Lumped second-order model of one soft pneumatic bending actuator.
//!
//! The bending angle obeys the mass-normalized form
//!
//! ```text
//! θ'' + 2 ζ ω_n θ' + ω_n² θ = g p
//! ```
//!
//! where `p` is the pump pressure and `g` folds the pressure-to-force gain
//! into the unit-mass normalization. Damping switches between a loading and
//! an unloading ratio (hysteresis), the stiffness decays with completed
//! inflate/deflate cycles, and the angle is confined to the linear
//! operating range `[0, theta_max]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::ode::rk4_step;

/// Upper end of the linear operating range, rad.
pub const DEFAULT_THETA_MAX: f64 = 8.0 * PI / 9.0;

/// Exponential stiffness decay over completed cycles:
/// `K(k) = K_inf + (K_0 - K_inf) exp(-lambda k)` with `K_inf = k_inf_ratio K_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Softening {
    pub k_inf_ratio: f64,
    /// Decay rate per completed cycle. Zero disables softening.
    pub lambda: f64,
}

impl Default for Softening {
    fn default() -> Self {
        Self {
            k_inf_ratio: 0.9,
            lambda: 0.01,
        }
    }
}

impl Softening {
    pub const DISABLED: Softening = Softening {
        k_inf_ratio: 1.0,
        lambda: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorParams {
    /// Damping ratio on the loading (inflation) path.
    pub zeta_fwd: f64,
    /// Damping ratio on the unloading (deflation) path.
    pub zeta_bwd: f64,
    /// Natural frequency at cycle zero, rad/s.
    pub omega_n: f64,
    /// Identified equivalent mass. Recorded only; the model is mass-normalized.
    pub m_eq: f64,
    /// Mass-normalized pressure gain, rad/s² per pressure unit.
    pub pressure_gain: f64,
    pub theta_max: f64,
    pub softening: Softening,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self::finger(1.9)
    }
}

impl ActuatorParams {
    /// Default finger with the given natural frequency and a unit
    /// steady-state gain (1 rad per pressure unit).
    pub fn finger(omega_n: f64) -> Self {
        Self {
            zeta_fwd: 0.7,
            zeta_bwd: 0.8,
            omega_n,
            m_eq: 0.18,
            pressure_gain: omega_n * omega_n,
            theta_max: DEFAULT_THETA_MAX,
            softening: Softening::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("zeta_fwd", self.zeta_fwd)?;
        positive("zeta_bwd", self.zeta_bwd)?;
        if self.zeta_bwd < self.zeta_fwd {
            return Err(TwinError::invalid(
                "zeta_bwd",
                format!(
                    "unloading damping {} must not be below loading damping {}",
                    self.zeta_bwd, self.zeta_fwd
                ),
            ));
        }
        positive("omega_n", self.omega_n)?;
        positive("pressure_gain", self.pressure_gain)?;
        positive("theta_max", self.theta_max)?;
        if self.theta_max > PI {
            return Err(TwinError::invalid("theta_max", "must not exceed pi"));
        }
        if !self.m_eq.is_finite() {
            return Err(TwinError::invalid("m_eq", "must be finite"));
        }
        let s = &self.softening;
        if !(s.k_inf_ratio > 0.0 && s.k_inf_ratio <= 1.0) {
            return Err(TwinError::invalid(
                "softening.k_inf_ratio",
                "must lie in (0, 1]",
            ));
        }
        if !(s.lambda >= 0.0 && s.lambda.is_finite()) {
            return Err(TwinError::invalid(
                "softening.lambda",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// Spring constant `K_n = ω_n²` after `cycles` completed cycles.
    pub fn spring_constant_at(&self, cycles: u32) -> f64 {
        let k0 = self.omega_n * self.omega_n;
        let s = &self.softening;
        if s.lambda == 0.0 || cycles == 0 {
            return k0;
        }
        let k_inf = s.k_inf_ratio * k0;
        k_inf + (k0 - k_inf) * (-s.lambda * f64::from(cycles)).exp()
    }
}

pub(crate) fn positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(TwinError::invalid(
            field,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

/// Young's modulus, second moment of area and length of the bending layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialGeometry {
    /// Pa
    pub young_modulus: f64,
    /// m⁴
    pub second_moment: f64,
    /// m
    pub length: f64,
}

/// `K_n = 2 E I / L²`.
pub fn spring_constant(geom: &MaterialGeometry) -> Result<f64> {
    positive("young_modulus", geom.young_modulus)?;
    positive("second_moment", geom.second_moment)?;
    positive("length", geom.length)?;
    Ok(2.0 * geom.young_modulus * geom.second_moment / (geom.length * geom.length))
}

/// `C_n = 2 ζ ω_n` in the mass-normalized form.
pub fn damping_coefficient(zeta: f64, omega_n: f64) -> f64 {
    2.0 * zeta * omega_n
}

/// Effective natural frequency after `cycle_count` completed cycles.
pub fn apply_cycle_softening(params: &ActuatorParams, cycle_count: u32) -> f64 {
    params.spring_constant_at(cycle_count).sqrt()
}

/// Equilibrium bending angle under a constant pressure, `g p / ω_n²`.
pub fn steady_state_angle(params: &ActuatorParams, p_final: f64) -> Result<f64> {
    if !(p_final >= 0.0 && p_final.is_finite()) {
        return Err(TwinError::InvalidArgument(format!(
            "final pressure must be finite and >= 0, got {p_final}"
        )));
    }
    Ok(params.pressure_gain * p_final / (params.omega_n * params.omega_n))
}

/// Sign of the pressure rate during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Loading,
    Unloading,
    Hold,
}

impl Direction {
    pub fn from_rate(rate: f64) -> Self {
        if rate > 0.0 {
            Direction::Loading
        } else if rate < 0.0 {
            Direction::Unloading
        } else {
            Direction::Hold
        }
    }
}

/// Damping ratio for the current pressure direction. `carried` is the last
/// non-hold direction; `Hold` there means none has been seen yet, which
/// selects the loading path.
pub fn hysteresis_zeta(direction: Direction, carried: Direction, params: &ActuatorParams) -> f64 {
    let path = match direction {
        Direction::Hold => carried,
        active => active,
    };
    match path {
        Direction::Unloading => params.zeta_bwd,
        Direction::Loading | Direction::Hold => params.zeta_fwd,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    pub theta: f64,
    pub theta_dot: f64,
    pub direction: Direction,
    /// Last non-hold direction; `Hold` before any pressure change.
    pub last_active: Direction,
    /// Completed loading→unloading transitions.
    pub cycle_count: u32,
}

impl Default for ActuatorState {
    fn default() -> Self {
        Self::at_rest()
    }
}

impl ActuatorState {
    pub fn at_rest() -> Self {
        Self::resting_at(0.0)
    }

    pub fn resting_at(theta: f64) -> Self {
        Self {
            theta,
            theta_dot: 0.0,
            direction: Direction::Hold,
            last_active: Direction::Hold,
            cycle_count: 0,
        }
    }

    pub fn effective_zeta(&self, params: &ActuatorParams) -> f64 {
        hysteresis_zeta(self.direction, self.last_active, params)
    }
}

/// Pressure over one step, varying linearly from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureRamp {
    pub start: f64,
    pub end: f64,
}

impl PressureRamp {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn constant(p: f64) -> Self {
        Self { start: p, end: p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: ActuatorState,
    /// The angle hit an end of the operating range during this step.
    pub clamped: bool,
}

/// Advances one actuator by `dt` seconds with a single RK4 step.
///
/// The direction (and with it the damping ratio) is fixed for the whole
/// step from the sign of `pressure.end - pressure.start`.
pub fn actuator_step(
    state: &ActuatorState,
    params: &ActuatorParams,
    pressure: PressureRamp,
    dt: f64,
) -> Result<StepOutcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TwinError::InvalidArgument(format!(
            "time step must be finite and > 0, got {dt}"
        )));
    }
    if !(state.theta.is_finite()
        && state.theta_dot.is_finite()
        && pressure.start.is_finite()
        && pressure.end.is_finite())
    {
        return Err(TwinError::NumericFault(format!(
            "non-finite input: theta={}, theta_dot={}, p=[{}, {}]",
            state.theta, state.theta_dot, pressure.start, pressure.end
        )));
    }

    let direction = Direction::from_rate(pressure.end - pressure.start);
    let mut cycle_count = state.cycle_count;
    let mut last_active = state.last_active;
    match direction {
        Direction::Loading => last_active = Direction::Loading,
        Direction::Unloading => {
            if last_active == Direction::Loading {
                cycle_count += 1;
            }
            last_active = Direction::Unloading;
        }
        Direction::Hold => {}
    }

    let zeta = hysteresis_zeta(direction, last_active, params);
    let stiffness = params.spring_constant_at(cycle_count);
    let damping = damping_coefficient(zeta, stiffness.sqrt());
    let gain = params.pressure_gain;
    let p0 = pressure.start;
    let slope = (pressure.end - pressure.start) / dt;

    let [theta, theta_dot] = rk4_step(&[state.theta, state.theta_dot], 0.0, dt, |t, x| {
        [
            x[1],
            gain * (p0 + slope * t) - damping * x[1] - stiffness * x[0],
        ]
    });
    if !(theta.is_finite() && theta_dot.is_finite()) {
        return Err(TwinError::NumericFault(format!(
            "integration produced theta={theta}, theta_dot={theta_dot}"
        )));
    }

    let (theta, theta_dot, clamped) = if theta < 0.0 {
        (0.0, 0.0, true)
    } else if theta > params.theta_max {
        (params.theta_max, 0.0, true)
    } else {
        (theta, theta_dot, false)
    };

    Ok(StepOutcome {
        state: ActuatorState {
            theta,
            theta_dot,
            direction,
            last_active,
            cycle_count,
        },
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_softening() -> ActuatorParams {
        ActuatorParams {
            softening: Softening::DISABLED,
            ..ActuatorParams::default()
        }
    }

    /// Closed-form underdamped response to a constant forcing `g p` from rest.
    fn step_response(zeta: f64, omega_n: f64, theta_ss: f64, t: f64) -> f64 {
        let wd = omega_n * (1.0 - zeta * zeta).sqrt();
        let decay = (-zeta * omega_n * t).exp();
        theta_ss
            * (1.0 - decay * ((wd * t).cos() + zeta / (1.0 - zeta * zeta).sqrt() * (wd * t).sin()))
    }

    fn max_step_error(dt: f64, horizon: f64) -> f64 {
        let params = no_softening();
        // g p = ω_n² · 1 rad
        let p = params.omega_n * params.omega_n / params.pressure_gain;
        let mut state = ActuatorState::at_rest();
        let steps = (horizon / dt).round() as usize;
        let mut worst: f64 = 0.0;
        for k in 1..=steps {
            state = actuator_step(&state, &params, PressureRamp::constant(p), dt)
                .unwrap()
                .state;
            let exact = step_response(0.7, 1.9, 1.0, k as f64 * dt);
            worst = worst.max((state.theta - exact).abs());
        }
        worst
    }

    #[test]
    fn spring_constant_examples() {
        let k = spring_constant(&MaterialGeometry {
            young_modulus: 1.0,
            second_moment: 1.0,
            length: 2f64.sqrt(),
        })
        .unwrap();
        assert!((k - 1.0).abs() < 1e-15);
        let k = spring_constant(&MaterialGeometry {
            young_modulus: 2.0,
            second_moment: 3.0,
            length: 2.0,
        })
        .unwrap();
        assert_eq!(k, 3.0);
    }

    #[test]
    fn spring_constant_decreases_with_length() {
        let at = |length| {
            spring_constant(&MaterialGeometry {
                young_modulus: 5.0e5,
                second_moment: 2.0e-10,
                length,
            })
            .unwrap()
        };
        assert!(at(0.05) > at(0.06));
        assert!(at(0.06) > at(0.1));
    }

    #[test]
    fn spring_constant_rejects_non_positive_inputs() {
        for geom in [
            MaterialGeometry {
                young_modulus: 0.0,
                second_moment: 1.0,
                length: 1.0,
            },
            MaterialGeometry {
                young_modulus: 1.0,
                second_moment: -1.0,
                length: 1.0,
            },
            MaterialGeometry {
                young_modulus: 1.0,
                second_moment: 1.0,
                length: 0.0,
            },
        ] {
            assert!(matches!(
                spring_constant(&geom),
                Err(TwinError::InvalidParameter { .. })
            ));
        }
    }

    #[test]
    fn damping_coefficient_examples() {
        assert!((damping_coefficient(0.7, 1.9) - 2.66).abs() < 1e-12);
        assert!((damping_coefficient(0.8, 1.9) - 3.04).abs() < 1e-12);
        assert_eq!(damping_coefficient(0.0, 1.9), 0.0);
    }

    #[test]
    fn hysteresis_zeta_selects_path() {
        let p = ActuatorParams::default();
        assert_eq!(
            hysteresis_zeta(Direction::Loading, Direction::Hold, &p),
            0.7
        );
        assert_eq!(
            hysteresis_zeta(Direction::Unloading, Direction::Loading, &p),
            0.8
        );
        assert_eq!(
            hysteresis_zeta(Direction::Hold, Direction::Loading, &p),
            0.7
        );
        assert_eq!(
            hysteresis_zeta(Direction::Hold, Direction::Unloading, &p),
            0.8
        );
        assert_eq!(hysteresis_zeta(Direction::Hold, Direction::Hold, &p), 0.7);
    }

    #[test]
    fn equilibrium_is_bit_stable() {
        let params = ActuatorParams::default();
        let mut state = ActuatorState::at_rest();
        for _ in 0..10_000 {
            let out = actuator_step(&state, &params, PressureRamp::constant(0.0), 1e-3).unwrap();
            assert!(!out.clamped);
            state = out.state;
        }
        assert_eq!(state, ActuatorState::at_rest());
    }

    #[test]
    fn step_response_matches_closed_form() {
        let err = max_step_error(1e-3, 10.0);
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn integrator_converges_at_fourth_order() {
        let e1 = max_step_error(1e-2, 10.0);
        let e2 = max_step_error(5e-3, 10.0);
        let e3 = max_step_error(2.5e-3, 10.0);
        assert!(e1 / e2 >= 8.0, "{e1} / {e2}");
        assert!(e2 / e3 >= 8.0, "{e2} / {e3}");
    }

    #[test]
    fn large_pressure_pins_at_theta_max() {
        let params = no_softening();
        let mut state = ActuatorState::at_rest();
        let mut clamps = 0;
        for _ in 0..20_000 {
            let out = actuator_step(&state, &params, PressureRamp::constant(10.0), 1e-3).unwrap();
            clamps += out.clamped as usize;
            state = out.state;
        }
        assert!(clamps > 0);
        assert_eq!(state.theta, DEFAULT_THETA_MAX);
    }

    #[test]
    fn softening_law() {
        let params = ActuatorParams::default();
        assert_eq!(params.spring_constant_at(0), 1.9 * 1.9);
        assert_eq!(apply_cycle_softening(&params, 0), 1.9);
        let mut prev = params.spring_constant_at(0);
        for k in 1..500 {
            let next = params.spring_constant_at(k);
            assert!(next <= prev);
            prev = next;
        }
        let far = params.spring_constant_at(100_000);
        assert!((far - 3.249).abs() < 1e-9, "{far}");
    }

    #[test]
    fn cycle_counts_on_loading_to_unloading() {
        let params = ActuatorParams::default();
        let mut s = ActuatorState::at_rest();
        let dt = 1e-3;
        let ramps = [
            PressureRamp::new(0.0, 0.1),
            PressureRamp::constant(0.1),
            PressureRamp::new(0.1, 0.05),
            PressureRamp::new(0.05, 0.0),
            PressureRamp::new(0.0, 0.1),
            PressureRamp::new(0.1, 0.0),
        ];
        let mut counts = vec![];
        for r in ramps {
            s = actuator_step(&s, &params, r, dt).unwrap().state;
            counts.push(s.cycle_count);
        }
        assert_eq!(counts, vec![0, 0, 1, 1, 1, 2]);
    }

    #[test]
    fn initial_unloading_does_not_count_a_cycle() {
        let params = ActuatorParams::default();
        let s = ActuatorState::resting_at(0.5);
        let out = actuator_step(&s, &params, PressureRamp::new(0.5, 0.4), 1e-3).unwrap();
        assert_eq!(out.state.cycle_count, 0);
        assert_eq!(out.state.effective_zeta(&params), 0.8);
    }

    #[test]
    fn non_finite_inputs_are_numeric_faults() {
        let params = ActuatorParams::default();
        let s = ActuatorState::at_rest();
        assert!(matches!(
            actuator_step(&s, &params, PressureRamp::constant(f64::NAN), 1e-3),
            Err(TwinError::NumericFault(_))
        ));
        let bad = ActuatorState {
            theta_dot: f64::INFINITY,
            ..s
        };
        assert!(matches!(
            actuator_step(&bad, &params, PressureRamp::constant(0.0), 1e-3),
            Err(TwinError::NumericFault(_))
        ));
        assert!(actuator_step(&s, &params, PressureRamp::constant(0.0), 0.0).is_err());
    }

    #[test]
    fn steady_state_angle_examples() {
        let params = ActuatorParams::default();
        assert_eq!(steady_state_angle(&params, 0.0).unwrap(), 0.0);
        let p = params.omega_n * params.omega_n / params.pressure_gain;
        assert!((steady_state_angle(&params, p).unwrap() - 1.0).abs() < 1e-15);
        assert!(steady_state_angle(&params, -1.0).is_err());
    }

    #[test]
    fn steady_state_angle_matches_long_hold() {
        let params = no_softening();
        let p = 0.8;
        let mut s = ActuatorState::at_rest();
        for _ in 0..60_000 {
            s = actuator_step(&s, &params, PressureRamp::constant(p), 1e-3)
                .unwrap()
                .state;
        }
        let expected = steady_state_angle(&params, p).unwrap();
        assert!((s.theta - expected).abs() < 1e-3);
    }

    #[test]
    fn steady_state_angle_is_linear_and_decreasing_in_omega() {
        let params = ActuatorParams::default();
        let a = steady_state_angle(&params, 0.3).unwrap();
        let b = steady_state_angle(&params, 0.6).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        let stiffer = ActuatorParams {
            omega_n: 2.2,
            ..params
        };
        assert!(steady_state_angle(&stiffer, 0.6).unwrap() < b);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(ActuatorParams::default().validate().is_ok());
        let cases = [
            ActuatorParams {
                zeta_fwd: -1.0,
                ..Default::default()
            },
            ActuatorParams {
                zeta_bwd: 0.6,
                ..Default::default()
            },
            ActuatorParams {
                omega_n: 0.0,
                ..Default::default()
            },
            ActuatorParams {
                pressure_gain: 0.0,
                ..Default::default()
            },
            ActuatorParams {
                theta_max: 4.0,
                ..Default::default()
            },
            ActuatorParams {
                softening: Softening {
                    k_inf_ratio: 1.5,
                    lambda: 0.0,
                },
                ..Default::default()
            },
            ActuatorParams {
                softening: Softening {
                    k_inf_ratio: 0.9,
                    lambda: -0.1,
                },
                ..Default::default()
            },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    proptest! {
        #[test]
        fn angle_stays_in_operating_range(
            pressures in prop::collection::vec(-2.0f64..6.0, 1..300),
            dt in 1e-3f64..5e-2,
        ) {
            let params = ActuatorParams::default();
            let mut s = ActuatorState::at_rest();
            let mut prev = 0.0;
            for p in pressures {
                s = actuator_step(&s, &params, PressureRamp::new(prev, p), dt).unwrap().state;
                prev = p;
                prop_assert!(s.theta >= 0.0 && s.theta <= params.theta_max);
            }
        }
    }
}
