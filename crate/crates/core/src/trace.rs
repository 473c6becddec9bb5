//! Line-delimited JSON episode traces: a header, one record per tick, an end record.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::arbiter::{ArbiterEvent, CommandSource, Phase};
use crate::bench::{InfractionEvent, RouteResult};
use crate::safety::ControlCommand;
use crate::world::{ParticipantState, SignalColor};

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: u32,
    pub scenario: String,
    /// Path of the scenario document, when loaded from disk.
    #[serde(default)]
    pub source: Option<String>,
    pub config_digest: String,
    pub variant: String,
    pub seed: u64,
    pub dt: f64,
    pub route_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub sim_time: f64,
    pub ego: ParticipantState,
    pub route_s: f64,
    pub participants: Vec<ParticipantState>,
    pub signal_phases: Vec<(u32, SignalColor)>,
    /// Arbiter phase after this tick's decision.
    pub phase: Phase,
    pub source: CommandSource,
    /// The single actuation applied during this tick.
    pub command: ControlCommand,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<ArbiterEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infractions: Vec<InfractionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Tick(Box<TickRecord>),
    End(Box<RouteResult>),
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("trace has no header record")]
    MissingHeader,
}

/// A fully parsed trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub ticks: Vec<TickRecord>,
    pub result: Option<RouteResult>,
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let mut header = None;
    let mut ticks = Vec::new();
    let mut result = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?;
        match rec {
            TraceRecord::Header(h) => header = Some(h),
            TraceRecord::Tick(t) => ticks.push(*t),
            TraceRecord::End(r) => result = Some(*r),
        }
    }
    Ok(Trace {
        header: header.ok_or(TraceError::MissingHeader)?,
        ticks,
        result,
    })
}
