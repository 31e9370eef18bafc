//! Tabular Q-learning over motor-speed choices.
//!
//! The agent observes a discretized uncertainty level, picks one of six
//! motor speeds, and is rewarded with the negative Monte Carlo spread of the
//! steady-state error at that speed.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::gripper::GripperSystem;
use crate::rng::{derive_seed, seeded_rng};
use crate::uncertainty::{monte_carlo_sse, SimOptions, SpeedUncertaintyTable};

pub const N_ACTIONS: usize = 6;

/// The six motor speeds `k π / 3`, `k = 1..=6`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedActionSet {
    speeds: [f64; N_ACTIONS],
}

impl Default for SpeedActionSet {
    fn default() -> Self {
        let mut speeds = [0.0; N_ACTIONS];
        for (k, s) in speeds.iter_mut().enumerate() {
            *s = (k + 1) as f64 * PI / 3.0;
        }
        Self { speeds }
    }
}

impl SpeedActionSet {
    pub fn new(speeds: [f64; N_ACTIONS]) -> Result<Self> {
        if speeds.windows(2).any(|w| w[1] <= w[0]) || speeds[0] <= 0.0 {
            return Err(TwinError::invalid(
                "actions",
                "speeds must be positive and strictly increasing",
            ));
        }
        Ok(Self { speeds })
    }

    pub fn speed(&self, action: usize) -> Result<f64> {
        self.speeds.get(action).copied().ok_or(TwinError::Index {
            what: "action",
            index: action,
            limit: N_ACTIONS,
        })
    }

    pub fn speeds(&self) -> &[f64; N_ACTIONS] {
        &self.speeds
    }
}

/// Fixed bin edges over the observed error spread; `edges.len() + 1` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateBins {
    edges: Vec<f64>,
}

impl Default for StateBins {
    fn default() -> Self {
        Self {
            edges: vec![0.06, 0.07, 0.08, 0.09, 0.11],
        }
    }
}

impl StateBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        let bins = Self { edges };
        bins.validate()?;
        Ok(bins)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.is_empty() {
            return Err(TwinError::invalid("bin_edges", "need at least one edge"));
        }
        if self.edges.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || self.edges.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(TwinError::invalid(
                "bin_edges",
                "edges must be positive, finite and strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Bin `i` covers `[edges[i-1], edges[i])`.
    pub fn bin(&self, sigma: f64) -> usize {
        self.edges.partition_point(|&e| e <= sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    /// Zero-initialized table.
    pub fn new(n_states: usize, n_actions: usize, alpha: f64, gamma: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(TwinError::InvalidArgument("empty Q-table".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(TwinError::invalid("alpha", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(TwinError::invalid("gamma", "must lie in [0, 1)"));
        }
        Ok(Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            alpha,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(TwinError::Index {
                what: "state",
                index: s,
                limit: self.n_states,
            });
        }
        if a >= self.n_actions {
            return Err(TwinError::Index {
                what: "action",
                index: a,
                limit: self.n_actions,
            });
        }
        Ok(())
    }

    pub fn get(&self, s: usize, a: usize) -> Result<f64> {
        self.check(s, a)?;
        Ok(self.values[s * self.n_actions + a])
    }

    pub fn row(&self, s: usize) -> Result<&[f64]> {
        self.check(s, 0)?;
        Ok(&self.values[s * self.n_actions..(s + 1) * self.n_actions])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Argmax of `Q(s, ·)`, ties to the lowest index.
    pub fn greedy(&self, s: usize) -> Result<usize> {
        let row = self.row(s)?;
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        Ok(best)
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| self.greedy(s).expect("state in range"))
            .collect()
    }

    pub fn max_value(&self, s: usize) -> Result<f64> {
        Ok(self
            .row(s)?
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// `r = -σ(e_ss)`.
pub fn reward(sigma_e_ss: f64) -> Result<f64> {
    if !(sigma_e_ss >= 0.0) {
        return Err(TwinError::InvalidArgument(format!(
            "error spread must be >= 0, got {sigma_e_ss}"
        )));
    }
    Ok(-sigma_e_ss)
}

/// Watkins update `Q(s,a) += α (r + γ max_a' Q(s',a') - Q(s,a))`.
pub fn q_update(q: &mut QTable, s: usize, a: usize, r: f64, s_next: usize) -> Result<()> {
    q.check(s, a)?;
    let target = r + q.gamma * q.max_value(s_next)?;
    let i = s * q.n_actions + a;
    q.values[i] += q.alpha * (target - q.values[i]);
    Ok(())
}

/// ε-greedy: uniform random action with probability `epsilon`, otherwise
/// the greedy one.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(TwinError::InvalidArgument(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..q.n_actions))
    } else {
        q.greedy(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub next_state: usize,
    pub reward: f64,
    pub done: bool,
    /// Observed spread per finger, rad.
    pub finger_sigmas: Vec<f64>,
}

/// Episodic discrete environment.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self) -> Result<usize>;
    fn step(&mut self, action: usize) -> Result<Transition>;
}

/// Learning and episode-shape settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearnParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Exploration rate in the first episode.
    pub epsilon: f64,
    /// Multiplier applied to epsilon after each episode.
    pub epsilon_decay: f64,
    pub steps_per_episode: usize,
    /// Monte Carlo trials behind each reward.
    pub trials_per_step: usize,
}

impl Default for QLearnParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.95,
            epsilon: 0.2,
            epsilon_decay: 0.9,
            steps_per_episode: 20,
            trials_per_step: 50,
        }
    }
}

impl QLearnParams {
    pub fn validate(&self) -> Result<()> {
        QTable::new(1, 1, self.alpha, self.gamma)?;
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(TwinError::invalid("epsilon", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(TwinError::invalid("epsilon_decay", "must lie in [0, 1]"));
        }
        if self.steps_per_episode == 0 {
            return Err(TwinError::invalid("steps_per_episode", "must be >= 1"));
        }
        if self.trials_per_step < 2 {
            return Err(TwinError::invalid("trials_per_step", "must be >= 2"));
        }
        Ok(())
    }
}

/// The gripper as an MDP. Each step runs a Monte Carlo batch per finger at
/// the chosen speed; the observed spread is the largest over the fingers.
#[derive(Debug, Clone)]
pub struct GripperEnv {
    gripper: GripperSystem,
    table: SpeedUncertaintyTable,
    actions: SpeedActionSet,
    bins: StateBins,
    target_theta: f64,
    trials_per_step: usize,
    steps_per_episode: usize,
    opts: SimOptions,
    seed: u64,
    rng: ChaCha8Rng,
    steps_taken: usize,
}

impl GripperEnv {
    /// `gripper` must already be calibrated to `target_theta`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gripper: GripperSystem,
        table: SpeedUncertaintyTable,
        bins: StateBins,
        target_theta: f64,
        trials_per_step: usize,
        steps_per_episode: usize,
        opts: SimOptions,
        seed: u64,
    ) -> Result<Self> {
        gripper.validate()?;
        table.validate()?;
        bins.validate()?;
        if trials_per_step < 2 {
            return Err(TwinError::invalid("trials_per_step", "must be >= 2"));
        }
        if steps_per_episode == 0 {
            return Err(TwinError::invalid("steps_per_episode", "must be >= 1"));
        }
        Ok(Self {
            gripper,
            table,
            actions: SpeedActionSet::default(),
            bins,
            target_theta,
            trials_per_step,
            steps_per_episode,
            opts,
            seed,
            rng: seeded_rng(seed),
            steps_taken: 0,
        })
    }

    pub fn actions(&self) -> &SpeedActionSet {
        &self.actions
    }

    pub fn bins(&self) -> &StateBins {
        &self.bins
    }

    /// Restarts the random stream from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = seeded_rng(seed);
    }

    /// Starts an episode. No spread has been measured yet, so the agent
    /// starts in the highest-uncertainty bin.
    pub fn reset_episode(&mut self) -> usize {
        self.steps_taken = 0;
        self.bins.n_bins() - 1
    }

    /// One environment step at speed index `action`.
    pub fn env_step(&mut self, action: usize) -> Result<Transition> {
        let speed = self.actions.speed(action)?;
        let batch_seed = self.rng.next_u64();
        let mut finger_sigmas = Vec::with_capacity(self.gripper.n_fingers());
        for (i, finger) in self.gripper.fingers.iter().enumerate() {
            let run = monte_carlo_sse(
                finger,
                &self.gripper.pump,
                &self.table,
                speed,
                self.target_theta,
                self.trials_per_step,
                derive_seed(batch_seed, i as u64),
                &self.opts,
            )?;
            finger_sigmas.push(run.stats.std_e_ss);
        }
        let sigma = finger_sigmas.iter().copied().fold(0.0, f64::max);
        self.steps_taken += 1;
        Ok(Transition {
            next_state: self.bins.bin(sigma),
            reward: reward(sigma)?,
            done: self.steps_taken >= self.steps_per_episode,
            finger_sigmas,
        })
    }
}

impl Environment for GripperEnv {
    fn n_states(&self) -> usize {
        self.bins.n_bins()
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn reset(&mut self) -> Result<usize> {
        Ok(self.reset_episode())
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        self.env_step(action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub epsilon: f64,
    pub steps: Vec<StepRecord>,
    /// Greedy action per state after the episode.
    pub greedy_policy: Vec<usize>,
    pub cumulative_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
}

impl TrainLog {
    /// States the agent acted from at least once, ascending.
    pub fn visited_states(&self) -> Vec<usize> {
        let mut seen: Vec<usize> = self
            .episodes
            .iter()
            .flat_map(|e| e.steps.iter().map(|s| s.state))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    /// Number of times each action was taken.
    pub fn action_counts(&self, n_actions: usize) -> Vec<usize> {
        let mut counts = vec![0; n_actions];
        for s in self.episodes.iter().flat_map(|e| &e.steps) {
            counts[s.action] += 1;
        }
        counts
    }

    /// Mean observed reward per action (`None` for actions never taken).
    pub fn mean_reward_per_action(&self, n_actions: usize) -> Vec<Option<f64>> {
        let mut sums = vec![0.0; n_actions];
        let counts = self.action_counts(n_actions);
        for s in self.episodes.iter().flat_map(|e| &e.steps) {
            sums[s.action] += s.reward;
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }
}

/// ε-greedy Q-learning for `episodes` episodes. Exploration draws come
/// from a stream seeded with `seed`; the environment carries its own.
pub fn train<E: Environment>(
    env: &mut E,
    episodes: usize,
    params: &QLearnParams,
    seed: u64,
) -> Result<(QTable, TrainLog)> {
    if episodes == 0 {
        return Err(TwinError::InvalidArgument("episodes must be >= 1".into()));
    }
    params.validate()?;
    let mut q = QTable::new(env.n_states(), env.n_actions(), params.alpha, params.gamma)?;
    let mut rng = seeded_rng(seed);
    let mut log = TrainLog::default();
    let mut epsilon = params.epsilon;

    for episode in 0..episodes {
        let mut state = env.reset()?;
        let mut steps = Vec::with_capacity(params.steps_per_episode);
        let mut total = 0.0;
        for _ in 0..params.steps_per_episode {
            let action = select_action(&q, state, epsilon, &mut rng)?;
            let t = env.step(action)?;
            q_update(&mut q, state, action, t.reward, t.next_state)?;
            steps.push(StepRecord {
                state,
                action,
                reward: t.reward,
                next_state: t.next_state,
            });
            total += t.reward;
            state = t.next_state;
            if t.done {
                break;
            }
        }
        log.episodes.push(EpisodeRecord {
            episode,
            epsilon,
            steps,
            greedy_policy: q.greedy_policy(),
            cumulative_reward: total,
        });
        epsilon *= params.epsilon_decay;
    }
    Ok((q, log))
}
