//! Subcommand implementations and their exit-code mapping.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use intentgrid_core::tables::{read_header, read_tables, write_tables, TablesError};
use intentgrid_core::trace::{read_trace, replay_trace, write_trace, TraceError};
use intentgrid_core::{
    parse_map, precompute, run_actions, DesireState, GridMap, Heading, ModelConfig, Planner, Pose, Scenario, StepMode,
    StepRecord, Trace,
};
use serde::Serialize;

use crate::args::{Cli, Command, ConfigArgs, InspectArgs, PrecomputeArgs, ReplayArgs, ServeArgs};
use crate::service::{self, SessionSettings};

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad input values or files that do not parse (exit 2).
    Validation(String),
    /// Unreadable or unwritable files, sockets (exit 3).
    Io(String),
    /// Tables or traces that belong to a different map or configuration (exit 4).
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Mismatch(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Mismatch(m) => write!(f, "mismatch: {m}"),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<TablesError> for CliError {
    fn from(e: TablesError) -> Self {
        match e {
            TablesError::Io(_) => CliError::Io(e.to_string()),
            TablesError::Mismatch(_) => CliError::Mismatch(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Precompute(args) => cmd_precompute(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

/// Everything a subcommand needs after layering defaults, scenario and flags.
#[derive(Debug, Serialize)]
pub struct Resolved {
    pub map: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub tables: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub mode: StepMode,
    pub config: ModelConfig,
    #[serde(skip)]
    pub loaded_scenario: Option<Scenario>,
}

pub fn resolve(args: &ConfigArgs) -> Result<Resolved, CliError> {
    let scenario = match &args.scenario {
        Some(path) => Some(Scenario::load(path).map_err(|e| match e {
            intentgrid_core::scenario::ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(format!("{}: {e}", path.display())),
        })?),
        None => None,
    };
    let overrides = scenario.as_ref().map(|s| s.params).unwrap_or_default().merged(&args.model.overrides());
    let config = ModelConfig::default().with(&overrides);
    config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(Resolved {
        map: args.map.clone().or_else(|| scenario.as_ref().map(|s| s.map.clone())),
        scenario: args.scenario.clone(),
        tables: args.tables.clone(),
        out: args.out.clone(),
        seed: args.seed.or(scenario.as_ref().map(|s| s.seed)).unwrap_or(0),
        mode: args.mode.or(scenario.as_ref().map(|s| s.mode)).unwrap_or_default(),
        config,
        loaded_scenario: scenario,
    })
}

fn print_config(resolved: &Resolved) {
    let text = serde_json::to_string_pretty(resolved).expect("config serializes");
    // A closed pipe (`| head`) is not an error worth reporting.
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn load_map(path: &Path) -> Result<GridMap, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_map(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn require_map(resolved: &Resolved) -> Result<GridMap, CliError> {
    let path =
        resolved.map.as_deref().ok_or_else(|| CliError::Validation("no map given; pass --map or --scenario".into()))?;
    load_map(path)
}

/// Loads `--tables` after checking it against the map and parameters, or
/// solves from scratch.
fn planner_for(resolved: &Resolved, map: &GridMap) -> Result<Planner, CliError> {
    let params = &resolved.config.planner;
    params.validate_for(map).map_err(|e| CliError::Validation(e.to_string()))?;
    match &resolved.tables {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
            let header = read_header(&mut bytes.as_slice())?;
            header.check_compatible(map, params).map_err(|e| match e {
                TablesError::Mismatch(diff) => CliError::Mismatch(format!("{} does not fit:\n{diff}", path.display())),
                other => other.into(),
            })?;
            Ok(read_tables(bytes.as_slice())?)
        }
        None => Planner::solve(map, params).map_err(|e| CliError::Validation(e.to_string())),
    }
}

fn default_output(input: Option<&Path>, fallback: &str, extension: &str) -> PathBuf {
    let stem =
        input.and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| fallback.into());
    PathBuf::from(format!("{stem}.{extension}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?))
}

fn cmd_precompute(args: PrecomputeArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.config)?;
    if args.config.print_config {
        print_config(&resolved);
        return Ok(());
    }
    let map = require_map(&resolved)?;
    let params = resolved.config.planner;
    params.validate_for(&map).map_err(|e| CliError::Validation(e.to_string()))?;
    let began = Instant::now();
    let result = precompute(&map, &params).map_err(|e| CliError::Validation(e.to_string()))?;
    let elapsed = began.elapsed();
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let out = resolved.out.clone().unwrap_or_else(|| default_output(resolved.map.as_deref(), "map", "tables"));
    let mut file = create(&out)?;
    write_tables(&mut file, &result.planner).map_err(|e| io_error(&out, e))?;
    file.flush().map_err(|e| io_error(&out, e))?;

    println!("map {}×{}, {} goals, hash {}", map.width(), map.height(), map.goal_count(), map.hash());
    for (i, h) in result.planner.hypotheses().iter().enumerate() {
        println!("G{}: {} sweeps", i + 1, h.values.sweeps);
    }
    println!("wall time {:.3} s", elapsed.as_secs_f64());
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.config)?;
    if args.config.print_config {
        print_config(&resolved);
        return Ok(());
    }
    let scenario =
        resolved.loaded_scenario.as_ref().ok_or_else(|| CliError::Validation("replay needs --scenario".into()))?;
    let map = require_map(&resolved)?;
    let planner = Arc::new(planner_for(&resolved, &map)?);
    let start = scenario.start_pose().map_err(|e| CliError::Validation(e.to_string()))?;
    let actions = scenario.actions().map_err(|e| CliError::Validation(e.to_string()))?;
    let session = run_actions(planner, resolved.config.hmm, start, &actions, resolved.mode, resolved.seed)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let trace = Trace::from_session(&session);

    let out =
        resolved.out.clone().unwrap_or_else(|| default_output(resolved.scenario.as_deref(), "scenario", "trace.jsonl"));
    let mut file = create(&out)?;
    write_trace(&mut file, &trace)?;
    file.flush().map_err(|e| io_error(&out, e))?;

    let labels = DesireState::all(map.goal_count());
    println!("{} steps, trace written to {}", trace.records.len(), out.display());
    println!("final estimate: {}", format_estimate(&labels, session.estimate()));
    if args.summary {
        let initial = resolved.config.hmm.initial(map.goal_count());
        print!("{}", summarize(&labels, &initial, &trace.records));
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.config)?;
    if args.config.print_config {
        print_config(&resolved);
        return Ok(());
    }
    let file = File::open(&args.trace).map_err(|e| io_error(&args.trace, e))?;
    let trace = read_trace(BufReader::new(file))?;
    let h = &trace.header;
    let labels = DesireState::all(h.goal_count);
    println!("trace {}", args.trace.display());
    println!("map hash {}", h.map_hash);
    println!("start {}, mode {}, seed {}", h.start, h.mode, h.seed);
    println!("{} steps", trace.records.len());
    let initial = h.config.hmm.initial(h.goal_count);
    let last = trace.final_estimate().unwrap_or(&initial);
    println!("final estimate: {}", format_estimate(&labels, last));
    if args.summary {
        print!("{}", summarize(&labels, &initial, &trace.records));
    }

    // Re-verify when a map or tables are available.
    if resolved.map.is_none() && resolved.tables.is_none() {
        return Ok(());
    }
    let planner = match &resolved.map {
        Some(path) => {
            let map = load_map(path)?;
            if map.hash() != h.map_hash {
                return Err(CliError::Mismatch(format!(
                    "map hash: trace {} != {} ({})",
                    h.map_hash,
                    map.hash(),
                    path.display()
                )));
            }
            let from_trace = Resolved { config: h.config, ..resolved };
            planner_for(&from_trace, &map)?
        }
        None => {
            let path = resolved.tables.as_deref().expect("checked above");
            let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
            let header = read_header(&mut bytes.as_slice())?;
            if header.map_hash != h.map_hash {
                return Err(CliError::Mismatch(format!(
                    "map hash: trace {} != tables {}",
                    h.map_hash, header.map_hash
                )));
            }
            let planner = read_tables(bytes.as_slice())?;
            planner
                .map()
                .hash()
                .eq(&h.map_hash)
                .then_some(())
                .ok_or_else(|| CliError::Mismatch("embedded map differs from its hash".into()))?;
            header.check_compatible(planner.map(), &h.config.planner).map_err(|e| CliError::Mismatch(e.to_string()))?;
            planner
        }
    };
    let replayed = replay_trace(Arc::new(planner), &trace)?;
    match first_divergence(&trace.records, &replayed.records) {
        None => {
            println!("verified: replay reproduces all {} records", trace.records.len());
            Ok(())
        }
        Some(step) => Err(CliError::Mismatch(format!("replay diverges from the trace at step {step}"))),
    }
}

fn first_divergence(a: &[StepRecord], b: &[StepRecord]) -> Option<usize> {
    if let Some(i) = a.iter().zip(b).position(|(x, y)| x != y) {
        return Some(i + 1);
    }
    (a.len() != b.len()).then(|| a.len().min(b.len()) + 1)
}

fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.config)?;
    if args.config.print_config {
        print_config(&resolved);
        return Ok(());
    }
    let map = require_map(&resolved)?;
    let start = match (args.start, &resolved.loaded_scenario) {
        (Some((x, y, h)), _) => Pose::new(x, y, Heading::new(h).expect("range checked by the parser")),
        (None, Some(s)) => s.start_pose().map_err(|e| CliError::Validation(e.to_string()))?,
        (None, None) => return Err(CliError::Validation("serve needs --start or --scenario".into())),
    };
    if !map.is_free(start.cell()) {
        return Err(CliError::Validation(format!("start pose {start} is out of bounds or occupied")));
    }
    let planner = Arc::new(planner_for(&resolved, &map)?);
    let settings = SessionSettings {
        hmm: resolved.config.hmm,
        start,
        mode: resolved.mode,
        seed: resolved.seed,
        trace_dir: args.trace_dir,
        ui_dir: args.ui_dir,
    };
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async move {
        let server = service::Server::bind(&addr, planner, settings)
            .await
            .map_err(|e| CliError::Io(format!("cannot bind {addr}: {e}")))?;
        println!("listening on http://{}", server.local_addr());
        server.run(service::shutdown_signal()).await.map_err(|e| CliError::Io(e.to_string()))
    })
}

fn format_estimate(labels: &[DesireState], p: &[f64]) -> String {
    labels.iter().zip(p).map(|(l, v)| format!("{l}={v:.4}")).collect::<Vec<_>>().join(" ")
}

fn leader(p: &[f64]) -> usize {
    (0..p.len()).fold(0, |best, i| if p[i] > p[best] { i } else { best })
}

/// Peak probability per desire, and the steps at which the leading desire changes.
pub fn summarize(labels: &[DesireState], initial: &[f64], records: &[StepRecord]) -> String {
    let mut out = String::new();
    let series: Vec<&[f64]> = std::iter::once(initial).chain(records.iter().map(|r| r.estimate.as_slice())).collect();
    let _ = writeln!(out, "peak probabilities:");
    for (s, label) in labels.iter().enumerate() {
        let (step, peak) =
            series
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (t, p)| if p[s] > acc.1 { (t, p[s]) } else { acc });
        let _ = writeln!(out, "  {label}: {peak:.4} at step {step}");
    }
    let _ = writeln!(out, "desire switches:");
    let mut current = leader(series[0]);
    let _ = writeln!(out, "  step 0: {}", labels[current]);
    for (t, p) in series.iter().enumerate().skip(1) {
        let now = leader(p);
        if now != current {
            let _ = writeln!(out, "  step {t}: {} -> {}", labels[current], labels[now]);
            current = now;
        }
    }
    out
}

/// Reports a failure on stderr and returns its exit status.
pub fn report(e: &CliError) -> ExitCode {
    let _ = writeln!(io::stderr(), "error: {e}");
    e.exit_code()
}
