//! Per-goal MDP: stochastic transitions, orientation-based rewards, value
//! iteration and the action-value queries built on top of it.
//!
//! States are poses `(x, y, heading)` indexed densely in row-major
//! `(y, x, heading)` order. Occupied cells keep a slot in every dense array
//! but are never reached and always hold zero.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{compute_visibility, Cell, GridMap, Heading, Pose, DEFAULT_FOV_HALF_ANGLE};
use crate::pathing::{check_eps_astar, heading_error, modified_astar, path_orientation, PathError, DEFAULT_EPS_ASTAR};

/// Two action values closer than this are treated as equal.
pub const Q_TIE_TOLERANCE: f64 = 1e-9;

/// Agent actions, in the fixed order used by every table and row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    TurnCw,
    TurnCcw,
    Stay,
}

impl Action {
    pub const COUNT: usize = 7;
    pub const ALL: [Action; 7] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::TurnCw, Action::TurnCcw, Action::Stay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "Up",
            Action::Down => "Down",
            Action::Left => "Left",
            Action::Right => "Right",
            Action::TurnCw => "TurnCW",
            Action::TurnCcw => "TurnCCW",
            Action::Stay => "Stay",
        }
    }

    /// Short symbol: `^ v < > R L S`.
    pub fn symbol(self) -> char {
        ['^', 'v', '<', '>', 'R', 'L', 'S'][self.index()]
    }

    pub fn is_move(self) -> bool {
        matches!(self, Action::Up | Action::Down | Action::Left | Action::Right)
    }

    /// Cell displacement of a movement action.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            _ => (0, 0),
        }
    }

    /// Pose reached by performing this action, or `None` if a move is blocked.
    pub fn apply(self, map: &GridMap, pose: &Pose) -> Option<Pose> {
        match self {
            Action::TurnCw => Some(Pose { heading: pose.heading.turn_cw(), ..*pose }),
            Action::TurnCcw => Some(Pose { heading: pose.heading.turn_ccw(), ..*pose }),
            Action::Stay => Some(*pose),
            _ => {
                let (dx, dy) = self.offset();
                map.free_at(pose.x as i64 + dx, pose.y as i64 + dy).map(|c| Pose::new(c.x, c.y, pose.heading))
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown action {0:?}; expected one of Up, Down, Left, Right, TurnCW (R), TurnCCW (L), Stay (S)")]
pub struct UnknownAction(pub String);

impl FromStr for Action {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let action = match s.trim() {
            "Up" | "up" | "^" => Action::Up,
            "Down" | "down" | "v" => Action::Down,
            "Left" | "left" | "<" => Action::Left,
            "Right" | "right" | ">" => Action::Right,
            "TurnCW" | "TurnCw" | "turncw" | "R" => Action::TurnCw,
            "TurnCCW" | "TurnCcw" | "turnccw" | "L" => Action::TurnCcw,
            "Stay" | "stay" | "S" => Action::Stay,
            _ => return Err(UnknownAction(s.to_owned())),
        };
        Ok(action)
    }
}

impl TryFrom<String> for Action {
    type Error = UnknownAction;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        a.name().to_owned()
    }
}

/// Realization probabilities over the seven actions for one intended action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRow(pub [f64; Action::COUNT]);

impl TransitionRow {
    pub fn prob(&self, realized: Action) -> f64 {
        self.0[realized.index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Most probable realization; ties go to the earlier action.
    pub fn most_likely(&self) -> Action {
        let mut best = 0;
        for i in 1..Action::COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }
}

/// Unblocked realization row for an intended action.
pub fn nominal_row(intended: Action, eps_move: f64) -> TransitionRow {
    let e = eps_move;
    let m = 1.0 - 2.0 * e;
    TransitionRow(match intended {
        Action::Up => [m, 0.0, e, e, 0.0, 0.0, 0.0],
        Action::Down => [0.0, m, e, e, 0.0, 0.0, 0.0],
        Action::Left => [e, e, m, 0.0, 0.0, 0.0, 0.0],
        Action::Right => [e, e, 0.0, m, 0.0, 0.0, 0.0],
        Action::TurnCw => [0.0, 0.0, 0.0, 0.0, 1.0 - e, 0.0, e],
        Action::TurnCcw => [0.0, 0.0, 0.0, 0.0, 0.0, 1.0 - e, e],
        Action::Stay => [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    })
}

/// Realization row at `state`: probability of any blocked move is folded into `Stay`.
pub fn build_transition(map: &GridMap, state: &Pose, intended: Action, eps_move: f64) -> TransitionRow {
    let mut row = nominal_row(intended, eps_move);
    for action in Action::ALL.into_iter().filter(|a| a.is_move()) {
        let i = action.index();
        if row.0[i] != 0.0 && action.apply(map, state).is_none() {
            row.0[Action::Stay.index()] += row.0[i];
            row.0[i] = 0.0;
        }
    }
    row
}

/// What the reward assigns when the goal path cannot be seen or reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardFloor {
    /// `−(ε + π)`, the value the orientation formula gives for a hidden path.
    #[default]
    EpsPi,
    /// Exactly `−π`.
    Pi,
}

impl FromStr for RewardFloor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eps-pi" => Ok(RewardFloor::EpsPi),
            "pi" => Ok(RewardFloor::Pi),
            other => Err(format!("unknown reward floor {other:?}; expected eps-pi or pi")),
        }
    }
}

impl fmt::Display for RewardFloor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardFloor::EpsPi => "eps-pi",
            RewardFloor::Pi => "pi",
        })
    }
}

/// Parameters of the offline precompute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub gamma: f64,
    pub eta: f64,
    pub eps_move: f64,
    pub eps_reward: f64,
    pub eps_astar: f64,
    pub fov_half_angle: f64,
    pub reward_floor: RewardFloor,
    pub max_sweeps: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            eta: 0.01,
            eps_move: 0.1,
            eps_reward: 0.1,
            eps_astar: DEFAULT_EPS_ASTAR,
            fov_half_angle: DEFAULT_FOV_HALF_ANGLE,
            reward_floor: RewardFloor::EpsPi,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("hypothesis {index} does not exist (map has {count} goals)")]
    NoSuchGoal { index: usize, count: usize },
    #[error("value iteration did not converge within {sweeps} sweeps (last change {residual})")]
    NotConverged { sweeps: usize, residual: f64 },
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::InvalidParam(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma = {} must lie in (0, 1)", self.gamma));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return bad(format!("eta = {} must be positive", self.eta));
        }
        if !(self.eps_move > 0.0 && self.eps_move < 0.5) {
            return bad(format!("eps_move = {} must lie in (0, 0.5)", self.eps_move));
        }
        if !(self.eps_reward >= 0.0 && self.eps_reward.is_finite()) {
            return bad(format!("eps_reward = {} must be non-negative", self.eps_reward));
        }
        if !(self.eps_astar > 0.0 && self.eps_astar < 1.0) {
            return bad(format!("eps_astar = {} must lie in (0, 1)", self.eps_astar));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= PI) {
            return bad(format!("fov_half_angle = {} must lie in (0, π]", self.fov_half_angle));
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be positive".into());
        }
        Ok(())
    }

    /// Validation including the map-dependent bound on `eps_astar`.
    pub fn validate_for(&self, map: &GridMap) -> Result<(), PlannerError> {
        self.validate()?;
        check_eps_astar(map, self.eps_astar)?;
        Ok(())
    }

    fn floor_reward(&self) -> f64 {
        match self.reward_floor {
            RewardFloor::EpsPi => -(self.eps_reward + PI),
            RewardFloor::Pi => -PI,
        }
    }
}

/// Dense index of a pose in `(y, x, heading)` row-major order.
pub fn state_index(width: usize, pose: &Pose) -> usize {
    (pose.y * width + pose.x) * Heading::COUNT + pose.heading.index()
}

pub fn state_count(map: &GridMap) -> usize {
    map.cell_count() * Heading::COUNT
}

/// Inverse of [`state_index`].
pub fn pose_at(width: usize, index: usize) -> Pose {
    let cell = index / Heading::COUNT;
    Pose::new(cell % width, cell / width, Heading::wrapping((index % Heading::COUNT) as i64))
}

/// All valid poses of a map in dense-index order.
pub fn free_poses(map: &GridMap) -> impl Iterator<Item = Pose> + '_ {
    map.free_cells().flat_map(|c| Heading::all().map(move |h| Pose::new(c.x, c.y, h)))
}

/// Immediate reward `R(H_i, S)` for every state, dense.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    pub goal: Cell,
    width: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn from_dense(goal: Cell, width: usize, values: Vec<f64>) -> Self {
        Self { goal, width, values }
    }

    pub fn get(&self, pose: &Pose) -> f64 {
        self.values[state_index(self.width, pose)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Reward of a single pose for a goal, from an already computed visibility field.
pub fn state_reward(
    map: &GridMap,
    pose: &Pose,
    visibility: &crate::gridworld::VisibilityField,
    goal: Cell,
    params: &PlannerParams,
) -> f64 {
    if pose.cell() == goal {
        return PI;
    }
    let Some(path) = modified_astar(map, pose.cell(), goal, visibility) else {
        return params.floor_reward();
    };
    let orientation = path_orientation(pose, &path, visibility);
    if orientation.visible_count == 0 {
        return params.floor_reward();
    }
    -(params.eps_reward + heading_error(pose, &orientation))
}

/// Rewards for hypothesis `goal_index` (0-based). Other goals are plain free tiles.
pub fn compute_rewards(map: &GridMap, goal_index: usize, params: &PlannerParams) -> Result<RewardTable, PlannerError> {
    Ok(compute_all_rewards_for(map, &[goal_index], params)?.remove(0))
}

/// Rewards for every hypothesis; each pose's visibility is computed once.
pub fn compute_all_rewards(map: &GridMap, params: &PlannerParams) -> Result<Vec<RewardTable>, PlannerError> {
    let all: Vec<usize> = (0..map.goal_count()).collect();
    compute_all_rewards_for(map, &all, params)
}

fn compute_all_rewards_for(
    map: &GridMap,
    goal_indices: &[usize],
    params: &PlannerParams,
) -> Result<Vec<RewardTable>, PlannerError> {
    params.validate_for(map)?;
    for &index in goal_indices {
        if index >= map.goal_count() {
            return Err(PlannerError::NoSuchGoal { index, count: map.goal_count() });
        }
    }
    let n = state_count(map);
    let mut tables: Vec<Vec<f64>> = vec![vec![0.0; n]; goal_indices.len()];
    for pose in free_poses(map) {
        let visibility = compute_visibility(map, &pose, params.fov_half_angle);
        let s = state_index(map.width(), &pose);
        for (table, &gi) in tables.iter_mut().zip(goal_indices) {
            table[s] = state_reward(map, &pose, &visibility, map.goals()[gi], params);
        }
    }
    Ok(tables
        .into_iter()
        .zip(goal_indices)
        .map(|(values, &gi)| RewardTable::from_dense(map.goals()[gi], map.width(), values))
        .collect())
}

/// Converged state values for one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub gamma: f64,
    pub sweeps: usize,
    width: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn from_dense(gamma: f64, sweeps: usize, width: usize, values: Vec<f64>) -> Self {
        Self { gamma, sweeps, width, values }
    }

    pub fn get(&self, pose: &Pose) -> f64 {
        self.values[state_index(self.width, pose)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Sparse successor lists for every `(state, intended action)` pair.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    width: usize,
    eps_move: f64,
    /// Start offsets into `outcomes`, one per `(state, action)` plus a sentinel.
    offsets: Vec<usize>,
    outcomes: Vec<(usize, f64)>,
}

impl TransitionModel {
    pub fn new(map: &GridMap, eps_move: f64) -> Self {
        let n = state_count(map);
        let mut offsets = Vec::with_capacity(n * Action::COUNT + 1);
        let mut outcomes = Vec::with_capacity(n * Action::COUNT * 3);
        for s in 0..n {
            let pose = pose_at(map.width(), s);
            for intended in Action::ALL {
                offsets.push(outcomes.len());
                if !map.is_valid_pose(&pose) {
                    continue;
                }
                let row = build_transition(map, &pose, intended, eps_move);
                for realized in Action::ALL {
                    let p = row.prob(realized);
                    if p > 0.0 {
                        let next = realized.apply(map, &pose).expect("blocked moves carry no probability");
                        outcomes.push((state_index(map.width(), &next), p));
                    }
                }
            }
        }
        offsets.push(outcomes.len());
        Self { width: map.width(), eps_move, offsets, outcomes }
    }

    pub fn eps_move(&self) -> f64 {
        self.eps_move
    }

    pub fn state_count(&self) -> usize {
        self.offsets.len().saturating_sub(1) / Action::COUNT
    }

    /// `(successor index, probability)` pairs for an intended action.
    pub fn outcomes(&self, state: usize, action: Action) -> &[(usize, f64)] {
        let k = state * Action::COUNT + action.index();
        &self.outcomes[self.offsets[k]..self.offsets[k + 1]]
    }

    fn q(&self, rewards: &[f64], values: &[f64], gamma: f64, state: usize, action: Action) -> f64 {
        self.outcomes(state, action).iter().map(|&(next, p)| p * (rewards[next] + gamma * values[next])).sum()
    }

    fn is_valid(&self, state: usize) -> bool {
        // Invalid states have no outcomes, not even for Stay.
        !self.outcomes(state, Action::Stay).is_empty()
    }
}

/// Synchronous value iteration from `V ≡ 0` until the summed absolute change
/// of one sweep drops below `eta`.
pub fn value_iteration(
    model: &TransitionModel,
    rewards: &RewardTable,
    params: &PlannerParams,
) -> Result<ValueTable, PlannerError> {
    params.validate()?;
    let n = model.state_count();
    let valid: Vec<usize> = (0..n).filter(|&s| model.is_valid(s)).collect();
    let r = rewards.as_slice();
    let mut current = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=params.max_sweeps {
        residual = 0.0;
        for &s in &valid {
            let best = Action::ALL
                .into_iter()
                .map(|a| model.q(r, &current, params.gamma, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            residual += (best - current[s]).abs();
            next[s] = best;
        }
        std::mem::swap(&mut current, &mut next);
        if residual < params.eta {
            return Ok(ValueTable::from_dense(params.gamma, sweep, model.width, current));
        }
    }
    Err(PlannerError::NotConverged { sweeps: params.max_sweeps, residual })
}

/// Expected value gain of `action` in `state`: `Σ P(S'|S,a)·(R(S') + γ·V(S'))`.
pub fn action_value(
    model: &TransitionModel,
    values: &ValueTable,
    rewards: &RewardTable,
    state: &Pose,
    action: Action,
) -> f64 {
    let s = state_index(model.width, state);
    model.q(rewards.as_slice(), values.as_slice(), values.gamma, s, action)
}

/// Action values of all seven actions, in action order.
pub fn action_values(
    model: &TransitionModel,
    values: &ValueTable,
    rewards: &RewardTable,
    state: &Pose,
) -> [f64; Action::COUNT] {
    Action::ALL.map(|a| action_value(model, values, rewards, state, a))
}

/// Index of the best action. Values within [`Q_TIE_TOLERANCE`] of the maximum
/// count as ties: `Stay` wins a tie it takes part in, otherwise the earliest
/// action does.
pub fn argmax_action(q: &[f64; Action::COUNT]) -> Action {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stay = Action::Stay.index();
    if q[stay] >= max - Q_TIE_TOLERANCE {
        return Action::Stay;
    }
    let i = q.iter().position(|v| *v >= max - Q_TIE_TOLERANCE).unwrap_or(0);
    Action::ALL[i]
}

/// Index of the worst action; ties go to the earliest action.
pub fn argmin_action(q: &[f64; Action::COUNT]) -> Action {
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let i = q.iter().position(|v| *v <= min + Q_TIE_TOLERANCE).unwrap_or(0);
    Action::ALL[i]
}

pub fn optimal_action(model: &TransitionModel, values: &ValueTable, rewards: &RewardTable, state: &Pose) -> Action {
    argmax_action(&action_values(model, values, rewards, state))
}

pub fn worst_action(model: &TransitionModel, values: &ValueTable, rewards: &RewardTable, state: &Pose) -> Action {
    argmin_action(&action_values(model, values, rewards, state))
}

/// Whether `action` gains at least as much value as staying put.
pub fn is_consistent(
    model: &TransitionModel,
    values: &ValueTable,
    rewards: &RewardTable,
    state: &Pose,
    action: Action,
) -> bool {
    let q = action_value(model, values, rewards, state, action);
    let stay = action_value(model, values, rewards, state, Action::Stay);
    q >= stay - Q_TIE_TOLERANCE
}

/// Rewards and values of one goal hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisTables {
    pub goal_index: usize,
    pub rewards: RewardTable,
    pub values: ValueTable,
}

/// The solved MDP for every goal of a map.
#[derive(Debug, Clone)]
pub struct Planner {
    map: GridMap,
    params: PlannerParams,
    model: TransitionModel,
    hypotheses: Vec<HypothesisTables>,
}

impl Planner {
    /// Computes rewards and runs value iteration for every goal.
    pub fn solve(map: &GridMap, params: &PlannerParams) -> Result<Self, PlannerError> {
        params.validate_for(map)?;
        let model = TransitionModel::new(map, params.eps_move);
        let rewards = compute_all_rewards(map, params)?;
        let mut hypotheses = Vec::with_capacity(rewards.len());
        for (goal_index, rewards) in rewards.into_iter().enumerate() {
            let values = value_iteration(&model, &rewards, params)?;
            hypotheses.push(HypothesisTables { goal_index, rewards, values });
        }
        Ok(Self { map: map.clone(), params: *params, model, hypotheses })
    }

    /// Reassembles a planner from stored tables.
    pub fn from_tables(map: &GridMap, params: &PlannerParams, hypotheses: Vec<HypothesisTables>) -> Self {
        Self { map: map.clone(), params: *params, model: TransitionModel::new(map, params.eps_move), hypotheses }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn params(&self) -> &PlannerParams {
        &self.params
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    pub fn hypotheses(&self) -> &[HypothesisTables] {
        &self.hypotheses
    }

    pub fn hypothesis_count(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn action_values(&self, hypothesis: usize, state: &Pose) -> [f64; Action::COUNT] {
        let h = &self.hypotheses[hypothesis];
        action_values(&self.model, &h.values, &h.rewards, state)
    }

    pub fn action_value(&self, hypothesis: usize, state: &Pose, action: Action) -> f64 {
        let h = &self.hypotheses[hypothesis];
        action_value(&self.model, &h.values, &h.rewards, state, action)
    }

    pub fn optimal_action(&self, hypothesis: usize, state: &Pose) -> Action {
        argmax_action(&self.action_values(hypothesis, state))
    }

    pub fn worst_action(&self, hypothesis: usize, state: &Pose) -> Action {
        argmin_action(&self.action_values(hypothesis, state))
    }

    pub fn is_consistent(&self, hypothesis: usize, state: &Pose, action: Action) -> bool {
        let h = &self.hypotheses[hypothesis];
        is_consistent(&self.model, &h.values, &h.rewards, state, action)
    }
}
