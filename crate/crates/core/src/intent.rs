//! Desire estimation: an HMM over goal desires plus "unknown" and
//! "irrational" states, fed with emission rows derived from how good each
//! observed action is under every goal hypothesis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::Pose;
use crate::planner::{argmax_action, argmin_action, Action, Planner};

/// Denominators below this mean every action is equally good.
pub const DEGENERATE_SPREAD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntentError {
    #[error("invalid HMM parameter: {0}")]
    InvalidParam(String),
    #[error("emission row has {found} entries, expected {expected}")]
    RowLength { expected: usize, found: usize },
    #[error("emission row is not a valid likelihood row: {0:?}")]
    BadRow(Vec<f64>),
    #[error("trellis collapsed to zero at step {step}")]
    Collapsed { step: usize },
}

/// A hidden desire state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesireState {
    /// Desire for goal `i` (0-based).
    Goal(usize),
    Unknown,
    Irrational,
}

impl DesireState {
    /// States in trellis order: goals, then unknown, then irrational.
    pub fn all(goal_count: usize) -> Vec<DesireState> {
        (0..goal_count).map(DesireState::Goal).chain([DesireState::Unknown, DesireState::Irrational]).collect()
    }

    pub fn index(self, goal_count: usize) -> usize {
        match self {
            DesireState::Goal(i) => i,
            DesireState::Unknown => goal_count,
            DesireState::Irrational => goal_count + 1,
        }
    }

    pub fn from_index(index: usize, goal_count: usize) -> DesireState {
        match index {
            i if i < goal_count => DesireState::Goal(i),
            i if i == goal_count => DesireState::Unknown,
            _ => DesireState::Irrational,
        }
    }
}

impl fmt::Display for DesireState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesireState::Goal(i) => write!(f, "G{}", i + 1),
            DesireState::Unknown => f.write_str("G?"),
            DesireState::Irrational => f.write_str("Gx"),
        }
    }
}

/// How per-step desire probabilities are obtained from the trellis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// Normalized max-product (Viterbi) trellis.
    #[default]
    Viterbi,
    /// Normalized sum-product forward probabilities.
    Forward,
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "viterbi" => Ok(FilterKind::Viterbi),
            "forward" => Ok(FilterKind::Forward),
            other => Err(format!("unknown filter {other:?}; expected viterbi or forward")),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Viterbi => "viterbi",
            FilterKind::Forward => "forward",
        })
    }
}

/// HMM constants. The defaults reproduce the three-goal model exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    /// Goal desire → unknown.
    pub alpha: f64,
    /// Unknown → each goal, for three goals. The total `3β` is spread evenly over K goals.
    pub beta: f64,
    /// Unknown → unknown.
    pub gamma: f64,
    /// Irrational → unknown.
    pub delta: f64,
    /// Unknown-state emission constant when the agent looks rational.
    pub c_rational: f64,
    /// Unknown-state emission constant when it does not.
    pub c_unknown: f64,
    /// `φ` above this selects the rational emission branch.
    pub phi_threshold: f64,
    /// Number of recent observations averaged into `φ`.
    pub phi_window: usize,
    pub filter: FilterKind,
}

impl Default for HmmParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 0.1,
            gamma: 0.65,
            delta: 0.1,
            c_rational: 0.55,
            c_unknown: 0.1,
            phi_threshold: 0.5,
            phi_window: 3,
            filter: FilterKind::Viterbi,
        }
    }
}

impl HmmParams {
    fn unknown_to_irrational(&self) -> f64 {
        1.0 - 3.0 * self.beta - self.gamma
    }

    pub fn validate(&self) -> Result<(), IntentError> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(IntentError::InvalidParam(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        prob("alpha", self.alpha)?;
        prob("beta", self.beta)?;
        prob("gamma", self.gamma)?;
        prob("delta", self.delta)?;
        prob("phi_threshold", self.phi_threshold)?;
        let rest = self.unknown_to_irrational();
        if rest < -1e-12 {
            return Err(IntentError::InvalidParam(format!(
                "3·beta + gamma = {} exceeds 1",
                3.0 * self.beta + self.gamma
            )));
        }
        if !(self.c_rational > 0.0 && self.c_unknown > 0.0) {
            return Err(IntentError::InvalidParam("emission constants must be positive".into()));
        }
        if self.phi_window == 0 {
            return Err(IntentError::InvalidParam("phi_window must be positive".into()));
        }
        Ok(())
    }

    /// Row-stochastic transition matrix over `K + 2` desire states.
    pub fn transition_matrix(&self, goal_count: usize) -> Vec<Vec<f64>> {
        let k = goal_count;
        let n = k + 2;
        let (unknown, irrational) = (k, k + 1);
        let mut t = vec![vec![0.0; n]; n];
        for (i, row) in t.iter_mut().enumerate().take(k) {
            row[i] = 1.0 - self.alpha;
            row[unknown] = self.alpha;
        }
        let to_goal = 3.0 * self.beta / k as f64;
        t[unknown][..k].fill(to_goal);
        t[unknown][unknown] = self.gamma;
        t[unknown][irrational] = self.unknown_to_irrational().max(0.0);
        t[irrational][unknown] = self.delta;
        t[irrational][irrational] = 1.0 - self.delta;
        t
    }

    /// Initial distribution: all mass on the unknown state.
    pub fn initial(&self, goal_count: usize) -> Vec<f64> {
        let mut pi = vec![0.0; goal_count + 2];
        pi[goal_count] = 1.0;
        pi
    }
}

/// Normalized quality of one action under each hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub state: Pose,
    pub action: Action,
    pub values: Vec<f64>,
}

/// Scores `action` at `state` against every hypothesis: 1 for the best
/// action, 0 for the worst, linear in the action value between them.
pub fn observe(planner: &Planner, state: &Pose, action: Action) -> ObservationVector {
    let values = (0..planner.hypothesis_count())
        .map(|h| {
            let q = planner.action_values(h, state);
            let best = q[argmax_action(&q).index()];
            let worst = q[argmin_action(&q).index()];
            normalized_gain(q[action.index()], best, worst)
        })
        .collect();
    ObservationVector { state: *state, action, values }
}

/// `(q − worst) / (best − worst)`, clamped to `[0, 1]`; 1 when the spread is degenerate.
pub fn normalized_gain(q: f64, best: f64, worst: f64) -> f64 {
    let spread = best - worst;
    if spread < DEGENERATE_SPREAD {
        return 1.0;
    }
    ((q - worst) / spread).clamp(0.0, 1.0)
}

/// Rationality indicator: the largest per-hypothesis mean over the given observations.
pub fn rationality_phi<'a>(history: impl IntoIterator<Item = &'a ObservationVector>) -> f64 {
    let mut sums: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for obs in history {
        if sums.is_empty() {
            sums = vec![0.0; obs.values.len()];
        }
        for (s, v) in sums.iter_mut().zip(&obs.values) {
            *s += v;
        }
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    sums.iter().map(|s| s / count as f64).fold(f64::NEG_INFINITY, f64::max)
}

/// Emission likelihood row over the `K + 2` desire states, normalized to sum 1.
pub fn emission_row(obs: &ObservationVector, phi: f64, params: &HmmParams) -> Vec<f64> {
    let mut row: Vec<f64> = if phi > params.phi_threshold {
        obs.values.iter().map(|o| o.tanh()).chain([params.c_rational.tanh(), 0.0]).collect()
    } else {
        obs.values.iter().map(|o| (o / 2.0).tanh()).chain([params.c_unknown.tanh(), (1.0 - phi).tanh()]).collect()
    };
    let zeta: f64 = row.iter().sum();
    for v in &mut row {
        *v /= zeta;
    }
    row
}

/// Online desire filter. Holds the rescaled trellis and its back-pointers.
#[derive(Debug, Clone)]
pub struct DesireFilter {
    params: HmmParams,
    goal_count: usize,
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
    /// Normalized trellis columns; `steps[0]` is the initial distribution.
    steps: Vec<Vec<f64>>,
    /// Normalized max-product columns, kept for decoding even in forward mode.
    viterbi: Vec<f64>,
    back: Vec<Vec<usize>>,
}

impl DesireFilter {
    pub fn new(params: HmmParams, goal_count: usize) -> Result<Self, IntentError> {
        params.validate()?;
        if goal_count == 0 {
            return Err(IntentError::InvalidParam("at least one goal is required".into()));
        }
        let initial = params.initial(goal_count);
        Ok(Self {
            params,
            goal_count,
            transition: params.transition_matrix(goal_count),
            steps: vec![initial.clone()],
            viterbi: initial.clone(),
            initial,
            back: Vec::new(),
        })
    }

    pub fn params(&self) -> &HmmParams {
        &self.params
    }

    pub fn state_count(&self) -> usize {
        self.goal_count + 2
    }

    pub fn goal_count(&self) -> usize {
        self.goal_count
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Number of emission rows consumed so far.
    pub fn len(&self) -> usize {
        self.back.len()
    }

    pub fn is_empty(&self) -> bool {
        self.back.is_empty()
    }

    /// Current desire probabilities.
    pub fn estimate(&self) -> &[f64] {
        self.steps.last().expect("initial column always present")
    }

    /// Desire probabilities after every step, starting with the initial distribution.
    pub fn history(&self) -> &[Vec<f64>] {
        &self.steps
    }

    /// Consumes one emission row and returns the new estimate.
    pub fn push(&mut self, emission: &[f64]) -> Result<&[f64], IntentError> {
        let n = self.state_count();
        if emission.len() != n {
            return Err(IntentError::RowLength { expected: n, found: emission.len() });
        }
        if emission.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(IntentError::BadRow(emission.to_vec()));
        }
        let step = self.back.len() + 1;

        let mut column = vec![0.0; n];
        let mut pointers = vec![0; n];
        for (s, (cell, ptr)) in column.iter_mut().zip(&mut pointers).enumerate() {
            let (best_prev, best) = (0..n)
                .map(|p| (p, self.viterbi[p] * self.transition[p][s]))
                .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            *cell = emission[s] * best;
            *ptr = best_prev;
        }
        normalize(&mut column).ok_or(IntentError::Collapsed { step })?;

        let estimate = match self.params.filter {
            FilterKind::Viterbi => column.clone(),
            FilterKind::Forward => {
                let prev = self.estimate();
                let mut fwd: Vec<f64> = (0..n)
                    .map(|s| emission[s] * (0..n).map(|p| prev[p] * self.transition[p][s]).sum::<f64>())
                    .collect();
                normalize(&mut fwd).ok_or(IntentError::Collapsed { step })?;
                fwd
            }
        };

        self.viterbi = column;
        self.back.push(pointers);
        self.steps.push(estimate);
        Ok(self.estimate())
    }

    /// Most probable hidden-state sequence for steps `1..=t`.
    pub fn best_path(&self) -> Vec<DesireState> {
        let Some(last) = argmax(&self.viterbi) else {
            return Vec::new();
        };
        let mut path = vec![last; self.back.len()];
        let mut state = last;
        for t in (0..self.back.len()).rev() {
            path[t] = state;
            state = self.back[t][state];
        }
        path.into_iter().map(|i| DesireState::from_index(i, self.goal_count)).collect()
    }

    /// Forgets all evidence.
    pub fn reset(&mut self) {
        self.steps = vec![self.initial.clone()];
        self.viterbi = self.initial.clone();
        self.back.clear();
    }
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let total: f64 = v.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return None;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
    Some(())
}

fn argmax(v: &[f64]) -> Option<usize> {
    if v.is_empty() {
        return None;
    }
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    Some(best)
}

/// Runs the filter over a whole sequence of emission rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesireEstimate {
    /// Probabilities per step, starting with the initial distribution.
    pub probabilities: Vec<Vec<f64>>,
    pub best_path: Vec<DesireState>,
}

pub fn estimate_desires(
    params: &HmmParams,
    goal_count: usize,
    emissions: &[Vec<f64>],
) -> Result<DesireEstimate, IntentError> {
    let mut filter = DesireFilter::new(*params, goal_count)?;
    for e in emissions {
        filter.push(e)?;
    }
    Ok(DesireEstimate { probabilities: filter.history().to_vec(), best_path: filter.best_path() })
}
