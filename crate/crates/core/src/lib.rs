//! Digital twin of an underactuated multi-finger pneumatic soft gripper.
//!
//! Each finger is a second-order actuator driven by a shared air pump.
//! Parameter uncertainty grows at low motor speeds; Monte Carlo runs
//! quantify the resulting steady-state error spread and a tabular
//! Q-learning agent picks the speed that minimizes it.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuator;
pub mod cli;
pub mod config;
pub mod error;
pub mod gripper;
pub mod hysteresis;
pub mod io;
pub mod ode;
pub mod pump;
pub mod qlearn;
pub mod rng;
pub mod settle;
pub mod uncertainty;

pub use error::{Result, TwinError};
