//! Command-line surface. Every model parameter is a flag with an
//! `INTENTGRID_*` environment fallback; values are range-checked while parsing.

use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use intentgrid_core::{FilterKind, ParamOverrides, RewardFloor, StepMode};

#[derive(Debug, Parser)]
#[command(name = "intentgrid", version, about = "Infer an agent's goal from its moves on a grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve every goal hypothesis of a map and write the tables file.
    Precompute(PrecomputeArgs),
    /// Run a scenario's scripted actions and write the step trace.
    Replay(ReplayArgs),
    /// Serve live sessions over a websocket, plus the browser UI.
    Serve(ServeArgs),
    /// Summarize a trace file and optionally re-verify it.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Print peak probabilities and the steps where the leading desire changes.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, env = "INTENTGRID_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "INTENTGRID_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Start pose as `x,y,heading` (heading index 0..8); overrides the scenario's.
    #[arg(long, env = "INTENTGRID_START", value_parser = parse_start)]
    pub start: Option<(usize, usize, u8)>,
    /// Directory for per-session trace files.
    #[arg(long, env = "INTENTGRID_TRACE_DIR", default_value = "traces")]
    pub trace_dir: PathBuf,
    /// Static UI bundle to serve at `/`; a built-in page is used when absent.
    #[arg(long, env = "INTENTGRID_UI_DIR")]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Trace file written by `replay` or `serve`.
    pub trace: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Print peak probabilities and the steps where the leading desire changes.
    #[arg(long)]
    pub summary: bool,
}

/// Inputs, outputs and model parameters shared by every subcommand.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Map file; overrides the scenario's map.
    #[arg(long, env = "INTENTGRID_MAP")]
    pub map: Option<PathBuf>,
    /// Scenario file (TOML).
    #[arg(long, env = "INTENTGRID_SCENARIO")]
    pub scenario: Option<PathBuf>,
    /// Precomputed tables to load instead of solving.
    #[arg(long, env = "INTENTGRID_TABLES")]
    pub tables: Option<PathBuf>,
    /// Output path: tables for `precompute`, trace for `replay`.
    #[arg(long, env = "INTENTGRID_OUT")]
    pub out: Option<PathBuf>,
    /// Seed for stochastic realization [default: scenario's, else 0].
    #[arg(long, env = "INTENTGRID_SEED")]
    pub seed: Option<u64>,
    /// `deterministic` or `stochastic` [default: scenario's, else deterministic].
    #[arg(long, env = "INTENTGRID_MODE")]
    pub mode: Option<StepMode>,
    /// Print the fully resolved configuration as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Model parameters. Unset flags fall back to the scenario, then to defaults.
#[derive(Debug, Args, Default, Clone)]
#[command(next_help_heading = "Model parameters")]
pub struct ModelArgs {
    /// Discount factor, in (0, 1) [default: 0.95].
    #[arg(long, env = "INTENTGRID_GAMMA", value_parser = open_unit)]
    pub gamma: Option<f64>,
    /// Value-iteration stop threshold on the summed change, > 0 [default: 0.01].
    #[arg(long, env = "INTENTGRID_ETA", value_parser = positive)]
    pub eta: Option<f64>,
    /// Probability of each veer, in (0, 0.5) [default: 0.1].
    #[arg(long, env = "INTENTGRID_EPS_MOVE", value_parser = eps_move)]
    pub eps_move: Option<f64>,
    /// Per-step cost added to the angle penalty, ≥ 0 [default: 0.1].
    #[arg(long, env = "INTENTGRID_EPS_REWARD", value_parser = non_negative)]
    pub eps_reward: Option<f64>,
    /// Visible-cell discount in path search, in (0, 1) [default: 0.001].
    #[arg(long, env = "INTENTGRID_EPS_ASTAR", value_parser = open_unit)]
    pub eps_astar: Option<f64>,
    /// Half-angle of the vision cone in radians, in (0, π] [default: π/2].
    #[arg(long, env = "INTENTGRID_FOV_HALF_ANGLE", value_parser = fov)]
    pub fov_half_angle: Option<f64>,
    /// Reward for hidden or unreachable goals: `eps-pi` or `pi` [default: eps-pi].
    #[arg(long, env = "INTENTGRID_REWARD_FLOOR")]
    pub reward_floor: Option<RewardFloor>,
    /// Sweep cap for value iteration [default: 100000].
    #[arg(long, env = "INTENTGRID_MAX_SWEEPS", value_parser = clap::value_parser!(usize))]
    pub max_sweeps: Option<usize>,
    /// Goal → unknown desire transition probability, in [0, 1] [default: 0.2].
    #[arg(long, env = "INTENTGRID_HMM_ALPHA", value_parser = probability)]
    pub hmm_alpha: Option<f64>,
    /// Unknown → each goal transition probability at three goals, in [0, 1] [default: 0.1].
    #[arg(long, env = "INTENTGRID_HMM_BETA", value_parser = probability)]
    pub hmm_beta: Option<f64>,
    /// Unknown desire self-transition probability, in [0, 1] [default: 0.65].
    #[arg(long, env = "INTENTGRID_HMM_GAMMA", value_parser = probability)]
    pub hmm_gamma: Option<f64>,
    /// Irrational → unknown transition probability, in [0, 1] [default: 0.1].
    #[arg(long, env = "INTENTGRID_HMM_DELTA", value_parser = probability)]
    pub hmm_delta: Option<f64>,
    /// Emission weight for rational behavior, > 0 [default: 0.55].
    #[arg(long, env = "INTENTGRID_C_RATIONAL", value_parser = positive)]
    pub c_rational: Option<f64>,
    /// Emission weight for the unknown desire, > 0 [default: 0.1].
    #[arg(long, env = "INTENTGRID_C_UNKNOWN", value_parser = positive)]
    pub c_unknown: Option<f64>,
    /// Rationality threshold on φ, in [0, 1] [default: 0.5].
    #[arg(long, env = "INTENTGRID_PHI_THRESHOLD", value_parser = probability)]
    pub phi_threshold: Option<f64>,
    /// Number of recent observations averaged into φ [default: 3].
    #[arg(long, env = "INTENTGRID_PHI_WINDOW", value_parser = clap::value_parser!(usize))]
    pub phi_window: Option<usize>,
    /// Desire estimate: `viterbi` or `forward` [default: viterbi].
    #[arg(long, env = "INTENTGRID_FILTER")]
    pub filter: Option<FilterKind>,
}

impl ModelArgs {
    pub fn overrides(&self) -> ParamOverrides {
        ParamOverrides {
            gamma: self.gamma,
            eta: self.eta,
            eps_move: self.eps_move,
            eps_reward: self.eps_reward,
            eps_astar: self.eps_astar,
            fov_half_angle: self.fov_half_angle,
            reward_floor: self.reward_floor,
            max_sweeps: self.max_sweeps,
            hmm_alpha: self.hmm_alpha,
            hmm_beta: self.hmm_beta,
            hmm_gamma: self.hmm_gamma,
            hmm_delta: self.hmm_delta,
            c_rational: self.c_rational,
            c_unknown: self.c_unknown,
            phi_threshold: self.phi_threshold,
            phi_window: self.phi_window,
            filter: self.filter,
        }
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 1)"))
    }
}

fn eps_move(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v < 0.5 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 0.5)"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must not be negative"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} must lie in [0, 1]"))
    }
}

fn fov(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v <= PI {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, π]"))
    }
}

fn parse_start(s: &str) -> Result<(usize, usize, u8), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y, h] = parts[..] else {
        return Err(format!("`{s}` is not `x,y,heading`"));
    };
    let bad = |what: &str| format!("`{s}`: {what} is not a non-negative integer");
    let heading: u8 = h.parse().map_err(|_| bad("heading"))?;
    if heading >= 8 {
        return Err(format!("`{s}`: heading must be 0..8"));
    }
    Ok((x.parse().map_err(|_| bad("x"))?, y.parse().map_err(|_| bad("y"))?, heading))
}
