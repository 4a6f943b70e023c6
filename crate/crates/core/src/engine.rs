//! Session orchestration: offline precompute, action realization and the
//! per-step observation → emission → estimate loop.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::gridworld::{compute_visibility, Cell, GridMap, Pose};
use crate::intent::{
    emission_row, observe, rationality_phi, DesireFilter, DesireState, HmmParams, IntentError, ObservationVector,
};
use crate::pathing::modified_astar;
use crate::planner::{build_transition, Action, Planner, PlannerError, PlannerParams, TransitionRow, UnknownAction};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Intent(#[from] IntentError),
    #[error("start pose {0} is out of bounds or occupied")]
    InvalidStart(Pose),
    #[error("action {index}: {source}")]
    BadAction {
        index: usize,
        #[source]
        source: UnknownAction,
    },
}

/// Result of the offline precompute.
#[derive(Debug, Clone)]
pub struct Precompute {
    pub planner: Planner,
    /// Non-fatal findings, e.g. goals unreachable from part of the map.
    pub warnings: Vec<String>,
}

/// Solves every goal hypothesis of `map`.
pub fn precompute(map: &GridMap, params: &PlannerParams) -> Result<Precompute, PlannerError> {
    let planner = Planner::solve(map, params)?;
    let warnings = unreachable_goal_warnings(map);
    Ok(Precompute { planner, warnings })
}

fn unreachable_goal_warnings(map: &GridMap) -> Vec<String> {
    let mut warnings = Vec::new();
    for (i, goal) in map.goals().iter().enumerate() {
        let reach = flood_fill(map, *goal);
        let cut_off = map.free_cells().filter(|c| !reach[map.index(*c)]).count();
        if cut_off > 0 {
            warnings.push(format!(
                "goal {} at {goal} is unreachable from {cut_off} free cells; their states get the floor reward",
                i + 1
            ));
        }
    }
    warnings
}

fn flood_fill(map: &GridMap, from: Cell) -> Vec<bool> {
    let mut seen = vec![false; map.cell_count()];
    let mut stack = vec![from];
    seen[map.index(from)] = true;
    while let Some(c) = stack.pop() {
        for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
            if let Some(n) = map.free_at(c.x as i64 + dx, c.y as i64 + dy) {
                if !seen[map.index(n)] {
                    seen[map.index(n)] = true;
                    stack.push(n);
                }
            }
        }
    }
    seen
}

/// How an intended action turns into motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// The most probable realization is always taken.
    #[default]
    Deterministic,
    /// The realization is sampled from the transition row.
    Stochastic,
}

impl FromStr for StepMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(StepMode::Deterministic),
            "stochastic" => Ok(StepMode::Stochastic),
            other => Err(format!("unknown mode {other:?}; expected deterministic or stochastic")),
        }
    }
}

impl fmt::Display for StepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepMode::Deterministic => "deterministic",
            StepMode::Stochastic => "stochastic",
        })
    }
}

/// Everything that happened in one simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub intended: Action,
    pub realized: Action,
    pub pose_before: Pose,
    pub pose_after: Pose,
    /// Normalized action quality per hypothesis.
    pub observation: Vec<f64>,
    pub phi: f64,
    pub emission: Vec<f64>,
    /// Desire probabilities after this step: goals, unknown, irrational.
    pub estimate: Vec<f64>,
    /// Most probable hidden-state sequence up to this step.
    pub best_path: Vec<DesireState>,
    /// Whether the observed action is consistent with each hypothesis.
    pub consistent: Vec<bool>,
}

/// One agent's run through the pipeline.
#[derive(Debug, Clone)]
pub struct Session {
    planner: Arc<Planner>,
    hmm: HmmParams,
    mode: StepMode,
    seed: u64,
    start: Pose,
    pose: Pose,
    filter: DesireFilter,
    recent: VecDeque<ObservationVector>,
    rng: ChaCha8Rng,
    history: Vec<StepRecord>,
}

impl Session {
    pub fn new(
        planner: Arc<Planner>,
        hmm: HmmParams,
        start: Pose,
        mode: StepMode,
        seed: u64,
    ) -> Result<Self, EngineError> {
        if !planner.map().is_valid_pose(&start) {
            return Err(EngineError::InvalidStart(start));
        }
        let filter = DesireFilter::new(hmm, planner.hypothesis_count())?;
        Ok(Self {
            planner,
            hmm,
            mode,
            seed,
            start,
            pose: start,
            filter,
            recent: VecDeque::with_capacity(hmm.phi_window),
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: Vec::new(),
        })
    }

    pub fn planner(&self) -> &Arc<Planner> {
        &self.planner
    }

    pub fn map(&self) -> &GridMap {
        self.planner.map()
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn start(&self) -> Pose {
        self.start
    }

    pub fn mode(&self) -> StepMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig { planner: *self.planner.params(), hmm: self.hmm }
    }

    pub fn estimate(&self) -> &[f64] {
        self.filter.estimate()
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn best_path(&self) -> Vec<DesireState> {
        self.filter.best_path()
    }

    /// Returns to the start pose with the initial desire distribution and
    /// a freshly seeded generator.
    pub fn reset(&mut self) {
        self.pose = self.start;
        self.filter.reset();
        self.recent.clear();
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.history.clear();
    }

    fn realize(&mut self, intended: Action) -> Action {
        let row = build_transition(self.planner.map(), &self.pose, intended, self.planner.params().eps_move);
        match self.mode {
            StepMode::Deterministic => row.most_likely(),
            StepMode::Stochastic => sample_realization(&row, &mut self.rng),
        }
    }

    /// Performs one intended action and advances the desire estimate.
    pub fn step(&mut self, intended: Action) -> Result<&StepRecord, EngineError> {
        let before = self.pose;
        let realized = self.realize(intended);
        let after = realized.apply(self.planner.map(), &before).expect("realized actions are never blocked");
        // A live operator's choice is the intent; a sampled run is observed through its motion.
        let observed = match self.mode {
            StepMode::Deterministic => intended,
            StepMode::Stochastic => realized,
        };
        let obs = observe(&self.planner, &before, observed);
        if self.recent.len() == self.hmm.phi_window {
            self.recent.pop_front();
        }
        self.recent.push_back(obs.clone());
        let phi = rationality_phi(&self.recent);
        let emission = emission_row(&obs, phi, &self.hmm);
        let estimate = self.filter.push(&emission)?.to_vec();
        let consistent =
            (0..self.planner.hypothesis_count()).map(|h| self.planner.is_consistent(h, &before, observed)).collect();
        self.pose = after;
        self.history.push(StepRecord {
            step: self.history.len() + 1,
            intended,
            realized,
            pose_before: before,
            pose_after: after,
            observation: obs.values,
            phi,
            emission,
            estimate,
            best_path: self.filter.best_path(),
            consistent,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// What the agent sees and the planned path to every goal from the current pose.
    pub fn overlay(&self) -> Overlay {
        overlay_for(self.planner.map(), &self.pose, self.planner.params().fov_half_angle)
    }
}

/// Draws a realized action from a transition row with one uniform sample.
pub fn sample_realization<R: Rng + ?Sized>(row: &TransitionRow, rng: &mut R) -> Action {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = Action::Stay;
    for a in Action::ALL {
        let p = row.prob(a);
        if p <= 0.0 {
            continue;
        }
        last = a;
        acc += p;
        if u < acc {
            return a;
        }
    }
    last
}

/// Visible cells and per-goal optimal paths for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub visible: Vec<Cell>,
    /// One entry per goal; `None` when the goal is unreachable.
    pub paths: Vec<Option<Vec<Cell>>>,
}

pub fn overlay_for(map: &GridMap, pose: &Pose, fov_half_angle: f64) -> Overlay {
    let vis = compute_visibility(map, pose, fov_half_angle);
    let paths = map.goals().iter().map(|g| modified_astar(map, pose.cell(), *g, &vis).map(|p| p.cells)).collect();
    Overlay { visible: vis.visible_cells().collect(), paths }
}

/// Parses action names, reporting the first invalid one.
pub fn parse_actions<S: AsRef<str>>(names: &[S]) -> Result<Vec<Action>, EngineError> {
    names
        .iter()
        .enumerate()
        .map(|(index, n)| n.as_ref().parse().map_err(|source| EngineError::BadAction { index, source }))
        .collect()
}

/// Runs a fixed action list and returns the step records.
pub fn run_actions(
    planner: Arc<Planner>,
    hmm: HmmParams,
    start: Pose,
    actions: &[Action],
    mode: StepMode,
    seed: u64,
) -> Result<Session, EngineError> {
    let mut session = Session::new(planner, hmm, start, mode, seed)?;
    for a in actions {
        session.step(*a)?;
    }
    Ok(session)
}
