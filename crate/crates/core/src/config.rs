//! TOML run configuration with built-in defaults for the two-finger setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actuator::ActuatorParams;
use crate::error::{Result, TwinError};
use crate::gripper::GripperSystem;
use crate::pump::PumpParams;
use crate::qlearn::{QLearnParams, StateBins};
use crate::settle::SettleCriterion;
use crate::uncertainty::{SimOptions, SpeedUncertaintyTable};

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "GRIPPER_TWIN_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinConfig {
    /// Master seed for library callers; the command line always overrides it.
    pub seed: u64,
    /// Integration step, s.
    pub dt: f64,
    /// Grasp pressure shared by all fingers.
    pub p_final: f64,
    pub pump: PumpParams,
    pub settle: SettleCriterion,
    pub qlearn: QLearnParams,
    pub state_bins: StateBins,
    pub fingers: Vec<ActuatorParams>,
    pub uncertainty: SpeedUncertaintyTable,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: 1e-3,
            p_final: 1.0,
            pump: PumpParams::default(),
            settle: SettleCriterion::default(),
            qlearn: QLearnParams::default(),
            state_bins: StateBins::default(),
            fingers: vec![ActuatorParams::finger(1.9), ActuatorParams::finger(1.75)],
            uncertainty: SpeedUncertaintyTable::default(),
        }
    }
}

impl TwinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TwinError::invalid("dt", "must be finite and > 0"));
        }
        self.pump.validate().map_err(|e| e.within("pump"))?;
        self.settle.validate().map_err(|e| e.within("settle"))?;
        self.qlearn.validate().map_err(|e| e.within("qlearn"))?;
        self.state_bins.validate()?;
        self.uncertainty
            .validate()
            .map_err(|e| e.within("uncertainty"))?;
        self.gripper()?;
        Ok(())
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            dt: self.dt,
            settle: self.settle,
        }
    }

    /// The configured gripper, gains as written (not yet calibrated).
    pub fn gripper(&self) -> Result<GripperSystem> {
        GripperSystem::new(self.pump, self.p_final, self.fingers.clone())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| TwinError::Configuration(format!("cannot serialize config: {e}")))
    }

    /// Parses and validates. `origin` names the source in error messages.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let config: TwinConfig = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}: ")
                })
                .unwrap_or_default();
            TwinError::ConfigParse {
                path: origin.to_string(),
                message: format!("{location}{}", e.message()),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

pub fn load_config(path: &Path) -> Result<TwinConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| TwinError::io(path, e))?;
    TwinConfig::from_toml(&text, &path.display().to_string())
}

/// `explicit` if given, else the path in `GRIPPER_TWIN_CONFIG` if set.
pub fn resolve_config_path(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

/// Loads the resolved config file, or the defaults when there is none.
pub fn load_or_default(explicit: Option<&Path>) -> Result<TwinConfig> {
    match resolve_config_path(explicit) {
        Some(path) => load_config(&path),
        None => Ok(TwinConfig::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = TwinConfig::from_toml("", "inline").unwrap();
        assert_eq!(c, TwinConfig::default());
        assert_eq!(c.fingers.len(), 2);
        assert_eq!(c.fingers[0].zeta_fwd, 0.7);
        assert_eq!(c.fingers[1].omega_n, 1.75);
        assert_eq!(c.qlearn.alpha, 0.1);
        assert_eq!(c.qlearn.gamma, 0.95);
    }

    #[test]
    fn round_trip() {
        let c = TwinConfig::default();
        let back = TwinConfig::from_toml(&c.to_toml().unwrap(), "inline").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn partial_override() {
        let c = TwinConfig::from_toml("dt = 0.002\n[pump]\np_max = 3.0\n", "inline").unwrap();
        assert_eq!(c.dt, 0.002);
        assert_eq!(c.pump.p_max, Some(3.0));
        assert_eq!(c.pump.b_gain, 1.0);
    }

    #[test]
    fn invalid_field_is_named() {
        let text = "[[fingers]]\nzeta_fwd = -1.0\n";
        match TwinConfig::from_toml(text, "inline") {
            Err(TwinError::InvalidParameter { field, .. }) => {
                assert_eq!(field, "fingers[0].zeta_fwd")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = TwinConfig::from_toml("dt = 0.001\n\nbogus = 1\n", "cfg.toml").unwrap_err();
        match err {
            TwinError::ConfigParse { path, message } => {
                assert_eq!(path, "cfg.toml");
                assert!(message.starts_with("line 3"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = TwinConfig::default();
        let b = TwinConfig {
            seed: 1,
            ..TwinConfig::default()
        };
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
