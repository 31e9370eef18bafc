//! Air pump driven by a linear motor: `p' = B ω`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::actuator::positive;
use crate::error::{Result, TwinError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpParams {
    /// Pressure units per rad of motor rotation.
    pub b_gain: f64,
    /// Motor speed limit, rad/s.
    pub omega_max: f64,
    /// Optional pressure ceiling; inflation stops here.
    pub p_max: Option<f64>,
}

impl Default for PumpParams {
    fn default() -> Self {
        Self {
            b_gain: 1.0,
            omega_max: TAU,
            p_max: None,
        }
    }
}

impl PumpParams {
    pub fn validate(&self) -> Result<()> {
        positive("b_gain", self.b_gain)?;
        positive("omega_max", self.omega_max)?;
        if let Some(p_max) = self.p_max {
            positive("p_max", p_max)?;
        }
        Ok(())
    }

    pub fn with_ceiling(self, p_max: f64) -> Self {
        Self {
            p_max: Some(p_max),
            ..self
        }
    }

    fn check_speed(&self, omega: f64) -> Result<()> {
        if (0.0..=self.omega_max).contains(&omega) {
            Ok(())
        } else {
            Err(TwinError::CommandRange {
                omega,
                omega_max: self.omega_max,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PumpState {
    pub pressure: f64,
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(TwinError::InvalidArgument(format!(
            "time step must be finite and > 0, got {dt}"
        )))
    }
}

/// Inflation: `p' = p + B ω dt`, capped at `p_max` when one is set.
pub fn pump_step(params: &PumpParams, pump: PumpState, omega: f64, dt: f64) -> Result<PumpState> {
    params.check_speed(omega)?;
    check_dt(dt)?;
    let mut pressure = pump.pressure + params.b_gain * omega * dt;
    if let Some(p_max) = params.p_max {
        pressure = pressure.min(p_max);
    }
    Ok(PumpState { pressure })
}

/// Deflation through the vent at an equivalent motor speed `omega_vent`:
/// `p' = p - B ω_vent dt`, floored at zero.
pub fn vent_step(
    params: &PumpParams,
    pump: PumpState,
    omega_vent: f64,
    dt: f64,
) -> Result<PumpState> {
    params.check_speed(omega_vent)?;
    check_dt(dt)?;
    let pressure = (pump.pressure - params.b_gain * omega_vent * dt).max(0.0);
    Ok(PumpState { pressure })
}
