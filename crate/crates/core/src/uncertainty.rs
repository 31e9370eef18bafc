//! Speed-dependent parameter uncertainty and Monte Carlo estimation of the
//! steady-state error spread.
//!
//! Slow actuation excites more variability in the material response. Each
//! trial draws one `(ζ, ω_n)` pair from Gaussians whose standard deviations
//! are looked up from the motor speed, drives the sampled actuator to the
//! pressure that would put the *nominal* actuator exactly on target, and
//! records how far the sampled one settles from that target.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuator::{
    actuator_step, steady_state_angle, ActuatorParams, ActuatorState, PressureRamp,
};
use crate::error::{Result, TwinError};
use crate::pump::{pump_step, PumpParams, PumpState};
use crate::rng::{derive_seed, seeded_rng};
use crate::settle::{SettleCriterion, SettleTracker};

/// Rejection-sampling budget for one strictly positive draw.
pub const MAX_DRAW_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSigma {
    /// Motor speed, rad/s.
    pub speed: f64,
    pub sigma_zeta: f64,
    /// rad/s
    pub sigma_omega_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigmas {
    pub zeta: f64,
    pub omega_n: f64,
}

impl Sigmas {
    pub const ZERO: Sigmas = Sigmas {
        zeta: 0.0,
        omega_n: 0.0,
    };
}

/// Standard deviations of `ζ` and `ω_n` at a handful of motor speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedUncertaintyTable {
    rows: Vec<SpeedSigma>,
}

impl Default for SpeedUncertaintyTable {
    fn default() -> Self {
        let pairs = [
            (0.12, 0.1),
            (0.1, 0.084),
            (0.08, 0.071),
            (0.06, 0.063),
            (0.052, 0.055),
            (0.05, 0.055),
        ];
        let rows = pairs
            .iter()
            .enumerate()
            .map(|(i, &(sigma_zeta, sigma_omega_n))| SpeedSigma {
                speed: (i + 1) as f64 * PI / 3.0,
                sigma_zeta,
                sigma_omega_n,
            })
            .collect();
        Self { rows }
    }
}

impl SpeedUncertaintyTable {
    pub fn new(rows: Vec<SpeedSigma>) -> Result<Self> {
        let table = Self { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn rows(&self) -> &[SpeedSigma] {
        &self.rows
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.speed).collect()
    }

    /// Speeds strictly increasing, sigmas non-negative and non-increasing
    /// with speed.
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(TwinError::Configuration(
                "speed uncertainty table is empty".into(),
            ));
        }
        for (i, r) in self.rows.iter().enumerate() {
            let at = |f: &str| format!("rows[{i}].{f}");
            if !(r.speed > 0.0 && r.speed.is_finite()) {
                return Err(TwinError::invalid(at("speed"), "must be finite and > 0"));
            }
            if !(r.sigma_zeta >= 0.0 && r.sigma_zeta.is_finite()) {
                return Err(TwinError::invalid(
                    at("sigma_zeta"),
                    "must be finite and >= 0",
                ));
            }
            if !(r.sigma_omega_n >= 0.0 && r.sigma_omega_n.is_finite()) {
                return Err(TwinError::invalid(
                    at("sigma_omega_n"),
                    "must be finite and >= 0",
                ));
            }
            if i > 0 {
                let prev = &self.rows[i - 1];
                if r.speed <= prev.speed {
                    return Err(TwinError::invalid(
                        at("speed"),
                        "speeds must be strictly increasing",
                    ));
                }
                if r.sigma_zeta > prev.sigma_zeta || r.sigma_omega_n > prev.sigma_omega_n {
                    return Err(TwinError::invalid(
                        at("sigma"),
                        "sigmas must not increase with speed",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Piecewise-linear interpolation in speed, held constant beyond the
    /// first and last rows.
    pub fn sigma_for_speed(&self, omega: f64) -> Result<Sigmas> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(TwinError::InvalidArgument(format!(
                "motor speed must be finite and > 0, got {omega}"
            )));
        }
        let (first, last) = match (self.rows.first(), self.rows.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => {
                return Err(TwinError::Configuration(
                    "speed uncertainty table is empty".into(),
                ))
            }
        };
        let pick = |r: &SpeedSigma| Sigmas {
            zeta: r.sigma_zeta,
            omega_n: r.sigma_omega_n,
        };
        if omega <= first.speed {
            return Ok(pick(first));
        }
        if omega >= last.speed {
            return Ok(pick(last));
        }
        let upper = self.rows.partition_point(|r| r.speed < omega);
        let (a, b) = (&self.rows[upper - 1], &self.rows[upper]);
        let w = (omega - a.speed) / (b.speed - a.speed);
        Ok(Sigmas {
            zeta: a.sigma_zeta + w * (b.sigma_zeta - a.sigma_zeta),
            omega_n: a.sigma_omega_n + w * (b.sigma_omega_n - a.sigma_omega_n),
        })
    }
}

/// One sampled transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledParams {
    pub zeta_sample: f64,
    pub omega_n_sample: f64,
    /// Seed of the stream that produced the draw.
    pub seed: u64,
}

impl SampledParams {
    /// Nominal parameters with the sampled loading damping and natural
    /// frequency. The unloading damping moves with the loading one so the
    /// loading/unloading gap is preserved. The pressure gain is kept.
    pub fn apply_to(&self, nominal: &ActuatorParams) -> ActuatorParams {
        let shift = self.zeta_sample - nominal.zeta_fwd;
        ActuatorParams {
            zeta_fwd: self.zeta_sample,
            zeta_bwd: nominal.zeta_bwd + shift,
            omega_n: self.omega_n_sample,
            ..*nominal
        }
    }
}

fn draw_positive<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> Result<f64> {
    for _ in 0..MAX_DRAW_ATTEMPTS {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + sigma * z;
        if x > 0.0 {
            return Ok(x);
        }
    }
    Err(TwinError::DegenerateDistribution {
        attempts: MAX_DRAW_ATTEMPTS,
    })
}

/// Draws `ζ ~ N(ζ_nom, σ_ζ²)` then `ω_n ~ N(ω_n,nom, σ_ω²)` from the stream
/// seeded with `seed`, rejecting non-positive values.
///
/// The same seed always yields the same standard-normal deviates, so two
/// calls that differ only in `sigmas` are perfectly correlated.
pub fn sample_params(nominal: &ActuatorParams, sigmas: Sigmas, seed: u64) -> Result<SampledParams> {
    if !(sigmas.zeta >= 0.0 && sigmas.omega_n >= 0.0) {
        return Err(TwinError::InvalidArgument(format!(
            "standard deviations must be >= 0, got {sigmas:?}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let zeta_sample = draw_positive(&mut rng, nominal.zeta_fwd, sigmas.zeta)?;
    let omega_n_sample = draw_positive(&mut rng, nominal.omega_n, sigmas.omega_n)?;
    Ok(SampledParams {
        zeta_sample,
        omega_n_sample,
        seed,
    })
}

/// Integration step and settling rule shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub settle: SettleCriterion,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            settle: SettleCriterion::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettledResponse {
    pub theta: f64,
    /// Time at which the settling window completed, s.
    pub settled_at: f64,
}

/// Runs the pump at `speed` up to `p_hold`, then holds until the actuator
/// settles. Returns `None` if the horizon runs out first.
pub fn settle_response(
    params: &ActuatorParams,
    pump: &PumpParams,
    speed: f64,
    p_hold: f64,
    opts: &SimOptions,
) -> Result<Option<SettledResponse>> {
    let dt = opts.dt;
    let pump = pump.with_ceiling(p_hold);
    let mut pressure = PumpState::default();
    let mut state = ActuatorState::at_rest();
    let mut tracker = SettleTracker::new(&opts.settle, dt);
    for k in 1..=opts.settle.horizon_steps(dt) {
        let before = pressure.pressure;
        if before < p_hold {
            pressure = pump_step(&pump, pressure, speed, dt)?;
        }
        let ramp = PressureRamp::new(before, pressure.pressure);
        state = actuator_step(&state, params, ramp, dt)?.state;
        if pressure.pressure >= p_hold && tracker.observe(state.theta_dot) {
            return Ok(Some(SettledResponse {
                theta: state.theta,
                settled_at: k as f64 * dt,
            }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SseStats {
    /// rad
    pub mean_e_ss: f64,
    /// Sample standard deviation (n - 1 denominator), rad.
    pub std_e_ss: f64,
    pub n_trials: usize,
    pub speed: f64,
    pub target_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub zeta: f64,
    pub omega_n: f64,
    pub e_ss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub stats: SseStats,
    pub trials: Vec<TrialRecord>,
}

/// Monte Carlo estimate of the steady-state error spread at one motor speed.
///
/// Trial `i` draws from `derive_seed(seed, i)`. Trials run in parallel and
/// are reduced in index order, so the result is independent of the thread
/// count.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_sse(
    nominal: &ActuatorParams,
    pump: &PumpParams,
    table: &SpeedUncertaintyTable,
    speed: f64,
    target_theta: f64,
    n_trials: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<MonteCarloRun> {
    if n_trials < 2 {
        return Err(TwinError::InvalidArgument(format!(
            "need at least 2 trials, got {n_trials}"
        )));
    }
    if !(target_theta > 0.0 && target_theta <= nominal.theta_max) {
        return Err(TwinError::InvalidArgument(format!(
            "target angle {target_theta} outside (0, {}]",
            nominal.theta_max
        )));
    }
    if !(speed > 0.0 && speed <= pump.omega_max) {
        return Err(TwinError::CommandRange {
            omega: speed,
            omega_max: pump.omega_max,
        });
    }
    let sigmas = table.sigma_for_speed(speed)?;
    // Pressure at which the nominal actuator sits exactly on target.
    let p_hold = target_theta / steady_state_angle(nominal, 1.0)?;

    let outcomes: Vec<Result<TrialRecord>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let sample = sample_params(nominal, sigmas, derive_seed(seed, trial as u64))?;
            let params = sample.apply_to(nominal);
            let settled =
                settle_response(&params, pump, speed, p_hold, opts)?.ok_or(TwinError::Horizon {
                    trial,
                    horizon: opts.settle.horizon,
                })?;
            Ok(TrialRecord {
                trial,
                zeta: sample.zeta_sample,
                omega_n: sample.omega_n_sample,
                e_ss: settled.theta - target_theta,
            })
        })
        .collect();
    let trials = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let (mean_e_ss, std_e_ss) = mean_and_std(trials.iter().map(|t| t.e_ss));
    Ok(MonteCarloRun {
        stats: SseStats {
            mean_e_ss,
            std_e_ss,
            n_trials,
            speed,
            target_theta,
        },
        trials,
    })
}

/// Mean and sample standard deviation, accumulated in iteration order.
pub fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuator::Softening;

    fn nominal() -> ActuatorParams {
        ActuatorParams {
            softening: Softening::DISABLED,
            ..ActuatorParams::default()
        }
    }

    #[test]
    fn table_lookup_examples() {
        let t = SpeedUncertaintyTable::default();
        let s = t.sigma_for_speed(2.0 * PI).unwrap();
        assert_eq!((s.zeta, s.omega_n), (0.05, 0.055));
        let s = t.sigma_for_speed(PI / 3.0).unwrap();
        assert_eq!((s.zeta, s.omega_n), (0.12, 0.1));
        let s = t.sigma_for_speed(PI / 2.0).unwrap();
        assert!((s.zeta - 0.11).abs() < 1e-12 && (s.omega_n - 0.092).abs() < 1e-12);
        // below and above the table: end rows
        let s = t.sigma_for_speed(PI / 12.0).unwrap();
        assert_eq!((s.zeta, s.omega_n), (0.12, 0.1));
        let s = t.sigma_for_speed(10.0).unwrap();
        assert_eq!((s.zeta, s.omega_n), (0.05, 0.055));
    }

    #[test]
    fn table_lookup_is_monotone() {
        let t = SpeedUncertaintyTable::default();
        let mut prev = t.sigma_for_speed(0.01).unwrap();
        for i in 1..=800 {
            let s = t.sigma_for_speed(i as f64 * 0.01).unwrap();
            assert!(s.zeta <= prev.zeta + 1e-15 && s.omega_n <= prev.omega_n + 1e-15);
            prev = s;
        }
    }

    #[test]
    fn table_validation() {
        assert!(SpeedUncertaintyTable::new(vec![]).is_err());
        let empty = SpeedUncertaintyTable { rows: vec![] };
        assert!(matches!(
            empty.sigma_for_speed(1.0),
            Err(TwinError::Configuration(_))
        ));
        let rising = vec![
            SpeedSigma {
                speed: 1.0,
                sigma_zeta: 0.1,
                sigma_omega_n: 0.1,
            },
            SpeedSigma {
                speed: 2.0,
                sigma_zeta: 0.2,
                sigma_omega_n: 0.1,
            },
        ];
        assert!(SpeedUncertaintyTable::new(rising).is_err());
        let unordered = vec![
            SpeedSigma {
                speed: 2.0,
                sigma_zeta: 0.1,
                sigma_omega_n: 0.1,
            },
            SpeedSigma {
                speed: 1.0,
                sigma_zeta: 0.1,
                sigma_omega_n: 0.1,
            },
        ];
        assert!(SpeedUncertaintyTable::new(unordered).is_err());
        assert!(SpeedUncertaintyTable::default().validate().is_ok());
    }

    #[test]
    fn zero_sigma_returns_nominal() {
        let s = sample_params(&nominal(), Sigmas::ZERO, 3).unwrap();
        assert_eq!((s.zeta_sample, s.omega_n_sample), (0.7, 1.9));
    }

    #[test]
    fn same_seed_same_sample() {
        let sig = Sigmas {
            zeta: 0.12,
            omega_n: 0.1,
        };
        let a = sample_params(&nominal(), sig, 99).unwrap();
        let b = sample_params(&nominal(), sig, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_params(&nominal(), sig, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_means_within_three_standard_errors() {
        let sig = Sigmas {
            zeta: 0.12,
            omega_n: 0.1,
        };
        let n = 10_000;
        let draws: Vec<SampledParams> = (0..n)
            .map(|i| sample_params(&nominal(), sig, derive_seed(2024, i)).unwrap())
            .collect();
        let (mz, _) = mean_and_std(draws.iter().map(|d| d.zeta_sample));
        let (mw, _) = mean_and_std(draws.iter().map(|d| d.omega_n_sample));
        let n = n as f64;
        assert!((mz - 0.7).abs() < 3.0 * 0.12 / n.sqrt(), "{mz}");
        assert!((mw - 1.9).abs() < 3.0 * 0.1 / n.sqrt(), "{mw}");
    }

    #[test]
    fn hopeless_distribution_is_degenerate() {
        let mut rng = seeded_rng(1);
        assert!(matches!(
            draw_positive(&mut rng, -1e6, 1.0),
            Err(TwinError::DegenerateDistribution { attempts: 100 })
        ));
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(sample_params(
            &nominal(),
            Sigmas {
                zeta: -0.1,
                omega_n: 0.0
            },
            0
        )
        .is_err());
    }

    #[test]
    fn nominal_monte_carlo_has_no_spread() {
        let zero = SpeedUncertaintyTable::new(vec![SpeedSigma {
            speed: 1.0,
            sigma_zeta: 0.0,
            sigma_omega_n: 0.0,
        }])
        .unwrap();
        let run = monte_carlo_sse(
            &nominal(),
            &PumpParams::default(),
            &zero,
            2.0 * PI,
            1.0,
            8,
            5,
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(run.stats.std_e_ss, 0.0);
        assert!(run.stats.mean_e_ss.abs() < 1e-3);
    }

    #[test]
    fn monte_carlo_argument_checks() {
        let t = SpeedUncertaintyTable::default();
        let p = PumpParams::default();
        let o = SimOptions::default();
        assert!(monte_carlo_sse(&nominal(), &p, &t, 1.0, 1.0, 1, 0, &o).is_err());
        assert!(monte_carlo_sse(&nominal(), &p, &t, 1.0, 0.0, 10, 0, &o).is_err());
        assert!(monte_carlo_sse(&nominal(), &p, &t, 1.0, 3.0, 10, 0, &o).is_err());
        assert!(matches!(
            monte_carlo_sse(&nominal(), &p, &t, 7.0, 1.0, 10, 0, &o),
            Err(TwinError::CommandRange { .. })
        ));
    }

    #[test]
    fn short_horizon_reports_trial() {
        let opts = SimOptions {
            dt: 1e-3,
            settle: SettleCriterion {
                horizon: 2.0,
                ..Default::default()
            },
        };
        let err = monte_carlo_sse(
            &nominal(),
            &PumpParams::default(),
            &SpeedUncertaintyTable::default(),
            PI,
            1.0,
            4,
            0,
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, TwinError::Horizon { trial: 0, .. }), "{err}");
    }

    #[test]
    fn mean_and_std_basic() {
        let (m, s) = mean_and_std([1.0, 2.0, 3.0, 4.0].into_iter());
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
