//! Trace CSV, run summaries and run manifests.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::gripper::{MultiTrace, TraceEvent};
use crate::qlearn::{QTable, SpeedActionSet, TrainLog};
use crate::uncertainty::TrialRecord;

/// Nine significant digits.
fn num(v: f64) -> String {
    format!("{v:.8e}")
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| TwinError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| TwinError::io(path, e))
}

pub fn trace_header(n_fingers: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "p".to_string()];
    h.extend((1..=n_fingers).map(|i| format!("theta_{i}")));
    h.extend((1..=n_fingers).map(|i| format!("theta_dot_{i}")));
    h.push("event".into());
    h
}

/// One row per time step; events of a row are joined with `;`.
pub fn write_trace(trace: &MultiTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| TwinError::io(path, e))?;
    write_trace_to(trace, file)
}

pub fn write_trace_to<W: Write>(trace: &MultiTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = trace.n_fingers();
    w.write_record(trace_header(n))?;
    for k in 0..trace.len() {
        let mut row = vec![num(trace.time[k]), num(trace.pressure[k])];
        row.extend(trace.theta.iter().map(|s| num(s[k])));
        row.extend(trace.theta_dot.iter().map(|s| num(s[k])));
        let events: Vec<String> = trace.events[k].iter().map(|e| e.to_string()).collect();
        row.push(events.join(";"));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| TwinError::io("<trace>", e))
}

/// Inverse of [`write_trace`]. The reference angle and parameter draws are
/// not part of the file and come back empty.
pub fn read_trace(path: &Path) -> Result<MultiTrace> {
    let file = File::open(path).map_err(|e| TwinError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 5 || header.len().is_multiple_of(2) {
        return Err(TwinError::TraceFormat(format!(
            "unexpected column count {}",
            header.len()
        )));
    }
    let n = (header.len() - 3) / 2;
    if header != trace_header(n) {
        return Err(TwinError::TraceFormat(format!(
            "unexpected header {header:?}"
        )));
    }
    let mut trace = MultiTrace::empty(n);
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let field = |j: usize| -> Result<f64> {
            record[j].parse::<f64>().map_err(|_| {
                TwinError::TraceFormat(format!(
                    "row {}: column {} is not a number",
                    line + 1,
                    header[j]
                ))
            })
        };
        trace.time.push(field(0)?);
        trace.pressure.push(field(1)?);
        for i in 0..n {
            trace.theta[i].push(field(2 + i)?);
            trace.theta_dot[i].push(field(2 + n + i)?);
        }
        let events = &record[2 + 2 * n];
        trace.events.push(
            events
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::parse::<TraceEvent>)
                .collect::<Result<_>>()?,
        );
    }
    Ok(trace)
}

pub fn write_trials(trials: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["trial", "zeta", "omega_n", "e_ss"])?;
    for t in trials {
        w.write_record([
            t.trial.to_string(),
            num(t.zeta),
            num(t.omega_n),
            num(t.e_ss),
        ])?;
    }
    finish(w, path)
}

pub fn write_train_log(log: &TrainLog, actions: &SpeedActionSet, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "episode",
        "step",
        "epsilon",
        "state",
        "action",
        "speed",
        "reward",
        "next_state",
    ])?;
    for e in &log.episodes {
        for (k, s) in e.steps.iter().enumerate() {
            w.write_record([
                e.episode.to_string(),
                k.to_string(),
                num(e.epsilon),
                s.state.to_string(),
                s.action.to_string(),
                num(actions.speed(s.action)?),
                num(s.reward),
                s.next_state.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

pub fn write_q_table(q: &QTable, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let mut header = vec!["state".to_string()];
    header.extend((0..q.n_actions()).map(|a| format!("a{a}")));
    w.write_record(&header)?;
    for s in 0..q.n_states() {
        let mut row = vec![s.to_string()];
        row.extend(q.row(s)?.iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Structured result of one subcommand. Keys that do not apply to a
/// scenario are omitted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_e_ss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_e_ss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_transient_diff_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_diff_deg: Option<f64>,
    /// Recommended speed per state bin, rad/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greedy_policy: Option<Vec<f64>>,
}

impl Summary {
    pub fn new(scenario: &str, seed: Option<u64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed,
            ..Default::default()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| TwinError::Configuration(format!("cannot serialize summary: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TwinError::ConfigParse {
            path: "summary".into(),
            message: e.message().to_string(),
        })
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub seed: Option<u64>,
    pub args: Vec<String>,
    pub config_hash: String,
    /// Effective configuration, TOML.
    pub config: String,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| TwinError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| TwinError::io(path, e))
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| TwinError::Configuration(format!("cannot serialize manifest: {e}")))?;
    write_text(path, &(text + "\n"))
}
