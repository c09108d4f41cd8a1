//! Newline-delimited JSON trajectory logs.
//!
//! The first line is a header carrying the environment config; every
//! following line is one step (the post-reset state is logged as step 0 with
//! no actions).

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{StepEvents, StepOutcome, Terminal, WorldState};
use crate::config::EnvConfig;

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub schema_version: u32,
    pub step: u32,
    /// `[x, y, heading]` per pursuer.
    pub pursuers: Vec<[f64; 3]>,
    pub evaders: Vec<[f64; 3]>,
    pub captured: Vec<bool>,
    pub actions: Vec<f64>,
    pub reward: f64,
    pub events: StepEvents,
    pub terminal: Terminal,
}

impl StepRecord {
    pub fn from_state(state: &WorldState, actions: &[f64], reward: f64, events: StepEvents) -> Self {
        Self {
            schema_version: LOG_SCHEMA_VERSION,
            step: state.step,
            pursuers: state.pursuers.iter().map(|p| [p.x, p.y, p.heading]).collect(),
            evaders: state.evaders.iter().map(|p| [p.x, p.y, p.heading]).collect(),
            captured: state.captured.clone(),
            actions: actions.to_vec(),
            reward,
            events,
            terminal: state.terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Header { schema_version: u32, seed: Option<u64>, config: EnvConfig },
    Step(StepRecord),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// A fully parsed log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub config: EnvConfig,
    pub seed: Option<u64>,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryLog {
    pub fn parse(text: &str) -> Result<Self, LogError> {
        Self::read(text.as_bytes())
    }

    pub fn read(r: impl BufRead) -> Result<Self, LogError> {
        let mut header = None;
        let mut steps = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line)
                .map_err(|e| LogError::Malformed { line: i + 1, message: e.to_string() })?;
            match rec {
                LogRecord::Header { schema_version, seed, config } => {
                    if header.is_some() {
                        return Err(LogError::Malformed { line: i + 1, message: "duplicate header".into() });
                    }
                    check_version(i + 1, schema_version)?;
                    header = Some((config, seed));
                }
                LogRecord::Step(s) => {
                    if header.is_none() {
                        return Err(LogError::Malformed { line: i + 1, message: "step before header".into() });
                    }
                    check_version(i + 1, s.schema_version)?;
                    steps.push(s);
                }
            }
        }
        let (config, seed) = header.ok_or(LogError::Malformed { line: 0, message: "missing header".into() })?;
        Ok(Self { config, seed, steps })
    }

    pub fn write(&self, w: impl Write) -> Result<(), LogError> {
        let mut tw = TrajectoryWriter::new(w, &self.config, self.seed)?;
        for s in &self.steps {
            tw.write_record(s)?;
        }
        Ok(())
    }
}

fn check_version(line: usize, v: u32) -> Result<(), LogError> {
    if v != LOG_SCHEMA_VERSION {
        return Err(LogError::Malformed { line, message: format!("unsupported schema_version {v}") });
    }
    Ok(())
}

/// Streams records as they happen.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W, cfg: &EnvConfig, seed: Option<u64>) -> Result<Self, LogError> {
        let header = LogRecord::Header { schema_version: LOG_SCHEMA_VERSION, seed, config: cfg.clone() };
        serde_json::to_writer(&mut out, &header).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn record_reset(&mut self, state: &WorldState) -> Result<(), LogError> {
        self.write_record(&StepRecord::from_state(state, &[], 0.0, StepEvents::default()))
    }

    pub fn record_step(&mut self, state: &WorldState, actions: &[f64], outcome: &StepOutcome) -> Result<(), LogError> {
        self.write_record(&StepRecord::from_state(state, actions, outcome.reward, outcome.events.clone()))
    }

    pub fn write_record(&mut self, rec: &StepRecord) -> Result<(), LogError> {
        serde_json::to_writer(&mut self.out, &LogRecord::Step(rec.clone())).map_err(io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
