//! Line-delimited JSON traces: one header line, then one [`StepRecord`] per line.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::engine::{run_actions, EngineError, Session, StepMode, StepRecord};
use crate::gridworld::Pose;
use crate::planner::{Action, Planner};

pub const TRACE_FORMAT: &str = "intentgrid-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace is empty (missing header line)")]
    MissingHeader,
    #[error("not an {TRACE_FORMAT} v{TRACE_VERSION} file (found {format} v{version})")]
    Format { format: String, version: u32 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub map_hash: String,
    pub goal_count: usize,
    pub config: ModelConfig,
    pub seed: u64,
    pub mode: StepMode,
    pub start: Pose,
}

impl TraceHeader {
    pub fn for_session(session: &Session) -> Self {
        Self {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            map_hash: session.map().hash(),
            goal_count: session.map().goal_count(),
            config: session.config(),
            seed: session.seed(),
            mode: session.mode(),
            start: session.start(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
}

impl Trace {
    pub fn from_session(session: &Session) -> Self {
        Self { header: TraceHeader::for_session(session), records: session.history().to_vec() }
    }

    /// Intended actions in step order.
    pub fn actions(&self) -> Vec<Action> {
        self.records.iter().map(|r| r.intended).collect()
    }

    /// Final desire probabilities, or `None` for an empty trace.
    pub fn final_estimate(&self) -> Option<&[f64]> {
        self.records.last().map(|r| r.estimate.as_slice())
    }
}

/// Appends records to a trace stream, flushing after each line.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> Result<Self, TraceError> {
        write_line(&mut out, header)?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn append(&mut self, record: &StepRecord) -> Result<(), TraceError> {
        write_line(&mut self.out, record)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), TraceError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| TraceError::Json { line: 0, source: e })?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_trace<W: Write>(out: W, trace: &Trace) -> Result<(), TraceError> {
    let mut w = TraceWriter::new(out, &trace.header)?;
    for r in &trace.records {
        w.append(r)?;
    }
    Ok(())
}

pub fn trace_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
        Ok(l) => !l.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines.next().ok_or(TraceError::MissingHeader)?;
    let header: TraceHeader = serde_json::from_str(&first?).map_err(|source| TraceError::Json { line: 1, source })?;
    if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
        return Err(TraceError::Format { format: header.format, version: header.version });
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let record = serde_json::from_str(&line?).map_err(|source| TraceError::Json { line: n + 1, source })?;
        records.push(record);
    }
    Ok(Trace { header, records })
}

/// Re-runs a trace's intended actions with its recorded seed, mode and start.
pub fn replay_trace(planner: Arc<Planner>, trace: &Trace) -> Result<Trace, TraceError> {
    let session = run_actions(
        planner,
        trace.header.config.hmm,
        trace.header.start,
        &trace.actions(),
        trace.header.mode,
        trace.header.seed,
    )?;
    Ok(Trace::from_session(&session))
}
