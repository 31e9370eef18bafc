//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_or_default, TwinConfig};
use crate::error::{Result, TwinError};
use crate::gripper::{
    coordination_batch, coordination_error, simulate_grasp, GraspCommand, GripperSystem,
};
use crate::io::{
    unix_now, write_manifest, write_q_table, write_text, write_trace, write_trace_to,
    write_train_log, write_trials, RunManifest, Summary,
};
use crate::qlearn::{train, GripperEnv};
use crate::rng::derive_seed;
use crate::uncertainty::{mean_and_std, monte_carlo_sse};

#[derive(Debug, Parser)]
#[command(
    name = "gripper-twin",
    version,
    about = "Pneumatic soft gripper digital twin"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config; falls back to $GRIPPER_TWIN_CONFIG, then built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV, summary and manifest files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel batches (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-finger grasp trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Motor speed, rad/s.
        #[arg(long, allow_negative_numbers = true)]
        speed: f64,
        /// Target angle, rad.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        target: f64,
        /// Draw the finger's parameters from the speed's uncertainty.
        #[arg(long)]
        seed: Option<u64>,
        /// 1-based finger index into the config.
        #[arg(long, default_value_t = 1)]
        finger: usize,
        /// Simulated time after the pump stops, s.
        #[arg(long, default_value_t = 20.0)]
        hold: f64,
    },
    /// Steady-state error spread over random parameter draws.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        speed: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        target: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        finger: usize,
    },
    /// Q-learning over motor speeds.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        target: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Multi-finger grasp and finger-to-finger coordination error.
    Coordinate {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        speed: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        target: f64,
        #[arg(long, value_enum, default_value_t = Switch::Off)]
        uncertainty: Switch,
        /// Required with `--uncertainty on`.
        #[arg(long)]
        seed: Option<u64>,
        /// Independent uncertain runs; more than one needs `--uncertainty on`.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 20.0)]
        hold: f64,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Montecarlo { common, .. }
            | Command::Train { common, .. }
            | Command::Coordinate { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Montecarlo { .. } => "montecarlo",
            Command::Train { .. } => "train",
            Command::Coordinate { .. } => "coordinate",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate { seed, .. } | Command::Coordinate { seed, .. } => *seed,
            Command::Montecarlo { seed, .. } | Command::Train { seed, .. } => Some(*seed),
        }
    }
}

/// Runs the tool with process-level stdout/stderr and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Exit codes: 0 success, 2 usage, otherwise the error category's code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let argv_text: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(&cli.command, &argv_text, out) {
        Ok(()) => 0,
        Err(e) => {
            let category = e.category();
            let _ = writeln!(err, "error[{}]: {e}", category.label());
            category.exit_code()
        }
    }
}

fn dispatch(cmd: &Command, argv: &[String], out: &mut dyn Write) -> Result<()> {
    let common = cmd.common();
    let started_at = unix_now();
    let mut config = load_or_default(common.config.as_deref())?;
    if let Some(seed) = cmd.seed() {
        config.seed = seed;
    }
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|e| TwinError::io(dir, e))?;
    }
    let body = || -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        execute(cmd, &config, common.out.as_deref(), &mut buf)?;
        Ok(buf)
    };
    let text = match common.threads {
        None => body()?,
        Some(n) => {
            if n == 0 {
                return Err(TwinError::InvalidArgument("--threads must be >= 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| TwinError::InvalidArgument(format!("cannot start thread pool: {e}")))?
                .install(body)?
        }
    };
    out.write_all(&text)
        .map_err(|e| TwinError::io("<stdout>", e))?;
    if let Some(dir) = &common.out {
        let config_text = config.to_toml()?;
        write_text(&dir.join("config.toml"), &config_text)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario: cmd.name().into(),
            seed: cmd.seed(),
            args: argv.to_vec(),
            config_hash: config.hash()?,
            config: config_text,
            started_at,
            finished_at: unix_now(),
        };
        write_manifest(&manifest, &dir.join("manifest.json"))?;
    }
    Ok(())
}

fn finger_gripper(config: &TwinConfig, finger: usize, target: f64) -> Result<GripperSystem> {
    let params = finger
        .checked_sub(1)
        .and_then(|i| config.fingers.get(i))
        .ok_or_else(|| {
            TwinError::InvalidArgument(format!(
                "--finger {finger} outside 1..={}",
                config.fingers.len()
            ))
        })?;
    let mut g = GripperSystem::new(config.pump, config.p_final, vec![*params])?;
    g.calibrate_gains(target)?;
    Ok(g)
}

/// Speeds typed with four decimals may land just above the motor limit
/// (`6.2832` for 2π); those snap to the limit.
const SPEED_ROUNDING: f64 = 1e-4;

fn command_speed(speed: f64, config: &TwinConfig) -> f64 {
    let limit = config.pump.omega_max;
    if speed > limit && speed - limit <= SPEED_ROUNDING {
        limit
    } else {
        speed
    }
}

fn emit(out: &mut Vec<u8>, text: &str) -> Result<()> {
    out.extend_from_slice(text.as_bytes());
    Ok(())
}

fn execute(
    cmd: &Command,
    config: &TwinConfig,
    dir: Option<&Path>,
    out: &mut Vec<u8>,
) -> Result<()> {
    let opts = config.sim_options();
    let summary = match cmd {
        Command::Simulate {
            speed,
            target,
            seed,
            finger,
            hold,
            ..
        } => {
            let gripper = finger_gripper(config, *finger, *target)?;
            let command = GraspCommand {
                hold_duration: *hold,
                ..GraspCommand::new(command_speed(*speed, config), *target)
            };
            let trace = simulate_grasp(
                &gripper,
                &command,
                &opts,
                seed.map(|s| (&config.uncertainty, s)),
            )?;
            let final_theta = *trace.theta[0].last().expect("trace has the initial row");
            let mut s = Summary::new("simulate", *seed);
            s.n_trials = Some(1);
            s.mean_e_ss = Some(final_theta - target);
            match dir {
                Some(d) => write_trace(&trace, &d.join("trace.csv"))?,
                None => return write_trace_to(&trace, out),
            }
            s
        }
        Command::Montecarlo {
            speed,
            target,
            trials,
            seed,
            finger,
            ..
        } => {
            let gripper = finger_gripper(config, *finger, *target)?;
            let run = monte_carlo_sse(
                &gripper.fingers[0],
                &gripper.pump,
                &config.uncertainty,
                command_speed(*speed, config),
                *target,
                *trials,
                *seed,
                &opts,
            )?;
            if let Some(d) = dir {
                write_trials(&run.trials, &d.join("trials.csv"))?;
            }
            let mut s = Summary::new("montecarlo", Some(*seed));
            s.n_trials = Some(run.stats.n_trials);
            s.mean_e_ss = Some(run.stats.mean_e_ss);
            s.std_e_ss = Some(run.stats.std_e_ss);
            s
        }
        Command::Train {
            episodes,
            target,
            seed,
            ..
        } => {
            let mut gripper = config.gripper()?;
            gripper.calibrate_gains(*target)?;
            let q = &config.qlearn;
            let mut env = GripperEnv::new(
                gripper,
                config.uncertainty.clone(),
                config.state_bins.clone(),
                *target,
                q.trials_per_step,
                q.steps_per_episode,
                opts,
                derive_seed(*seed, 1),
            )?;
            let (table, log) = train(&mut env, *episodes, q, derive_seed(*seed, 0))?;
            let actions = *env.actions();
            if let Some(d) = dir {
                write_train_log(&log, &actions, &d.join("train_log.csv"))?;
                write_q_table(&table, &d.join("q_table.csv"))?;
            }
            let policy = table.greedy_policy();
            let speeds = policy
                .iter()
                .map(|&a| actions.speed(a))
                .collect::<Result<Vec<f64>>>()?;
            let visited = log.visited_states();
            let edges = env.bins().edges();
            let mut text = String::new();
            for (state, speed) in speeds.iter().enumerate() {
                let lo = if state == 0 { 0.0 } else { edges[state - 1] };
                let hi = edges
                    .get(state)
                    .map(|e| format!("{e}"))
                    .unwrap_or_else(|| "inf".into());
                let mark = if visited.contains(&state) {
                    ""
                } else {
                    " (unvisited)"
                };
                text.push_str(&format!(
                    "# state {state} [{lo}, {hi}) rad: recommend {speed:.4} rad/s{mark}\n"
                ));
            }
            emit(out, &text)?;
            let mut s = Summary::new("train", Some(*seed));
            s.greedy_policy = Some(speeds);
            s
        }
        Command::Coordinate {
            speed,
            target,
            uncertainty,
            seed,
            runs,
            hold,
            ..
        } => {
            let mut gripper = config.gripper()?;
            gripper.calibrate_gains(*target)?;
            let command = GraspCommand {
                hold_duration: *hold,
                ..GraspCommand::new(command_speed(*speed, config), *target)
            };
            let draw = match (uncertainty, seed) {
                (Switch::Off, _) => None,
                (Switch::On, Some(s)) => Some(*s),
                (Switch::On, None) => {
                    return Err(TwinError::InvalidArgument(
                        "--uncertainty on requires --seed".into(),
                    ))
                }
            };
            let mut s = Summary::new("coordinate", draw);
            match (draw, *runs) {
                (_, 0) => return Err(TwinError::InvalidArgument("--runs must be >= 1".into())),
                (_, 1) => {
                    let trace = simulate_grasp(
                        &gripper,
                        &command,
                        &opts,
                        draw.map(|d| (&config.uncertainty, d)),
                    )?;
                    let c = coordination_error(&trace)?;
                    if let Some(d) = dir {
                        write_trace(&trace, &d.join("trace.csv"))?;
                    }
                    s.n_trials = Some(1);
                    s.max_transient_diff_deg = Some(c.max_transient_diff_deg);
                    s.steady_diff_deg = Some(c.steady_diff_deg);
                }
                (None, _) => {
                    return Err(TwinError::InvalidArgument(
                        "--runs above 1 requires --uncertainty on".into(),
                    ))
                }
                (Some(master), n) => {
                    let batch = coordination_batch(
                        &gripper,
                        &command,
                        &opts,
                        &config.uncertainty,
                        master,
                        n,
                    )?;
                    if let Some(d) = dir {
                        write_coordination(&batch, &d.join("runs.csv"))?;
                    }
                    let (mean_transient, _) =
                        mean_and_std(batch.iter().map(|c| c.max_transient_diff_deg));
                    let (mean_steady, _) = mean_and_std(batch.iter().map(|c| c.steady_diff_deg));
                    s.n_trials = Some(n);
                    s.max_transient_diff_deg = Some(mean_transient);
                    s.steady_diff_deg = Some(mean_steady);
                }
            }
            s
        }
    };
    let text = summary.to_toml()?;
    if let Some(d) = dir {
        write_text(&d.join("summary.toml"), &text)?;
    }
    emit(out, &text)
}

fn write_coordination(batch: &[crate::gripper::Coordination], path: &Path) -> Result<()> {
    let mut text = String::from("run,max_transient_diff_deg,steady_diff_deg,max_diff_deg\n");
    for (r, c) in batch.iter().enumerate() {
        text.push_str(&format!(
            "{r},{:.8e},{:.8e},{:.8e}\n",
            c.max_transient_diff_deg, c.steady_diff_deg, c.max_diff_deg
        ));
    }
    write_text(path, &text)
}
