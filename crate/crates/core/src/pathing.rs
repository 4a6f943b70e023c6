//! Visibility-biased A* and the average orientation of the visible path.
//!
//! Entering a visible tile costs `1 − ε` instead of `1`, and the Manhattan
//! heuristic is lowered by `ε` on visible tiles. With `ε·W·H < 1/2` every
//! cost of the form `steps − ε·visible` orders exactly like the pair
//! `(steps, −visible)`, so the search keeps the two counts as integers and
//! compares them lexicographically. This is the same ordering the real-valued
//! costs would give, without floating-point ties.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{angle_diff, wrap_angle, Cell, GridMap, Pose, VisibilityField};

pub const DEFAULT_EPS_ASTAR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("eps_astar = {eps} must lie in (0, 1) and satisfy eps·W·H < 1/2 (bound {bound})")]
    EpsOutOfRange { eps: f64, bound: f64 },
}

/// Largest admissible `eps_astar` for a map: the discount may only break
/// ties among step-count-optimal paths.
pub fn eps_astar_bound(map: &GridMap) -> f64 {
    1.0 / (2.0 * map.cell_count() as f64)
}

pub fn check_eps_astar(map: &GridMap, eps: f64) -> Result<(), PathError> {
    let bound = eps_astar_bound(map);
    if eps > 0.0 && eps < 1.0 && eps < bound {
        Ok(())
    } else {
        Err(PathError::EpsOutOfRange { eps, bound })
    }
}

/// Heuristic matrix entry: Manhattan distance, reduced by `eps` on visible tiles.
pub fn visibility_heuristic(cell: Cell, goal: Cell, visibility: &VisibilityField, eps: f64) -> f64 {
    let d = cell.manhattan(goal) as f64;
    if visibility.is_visible(cell) {
        d - eps
    } else {
        d
    }
}

/// A 4-connected path, excluding the start cell and ending at the goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub cells: Vec<Cell>,
}

impl Path {
    pub fn step_count(&self) -> usize {
        self.cells.len()
    }

    pub fn visible_count(&self, visibility: &VisibilityField) -> usize {
        self.cells.iter().filter(|c| visibility.is_visible(**c)).count()
    }

    /// Total discounted movement cost of the path.
    pub fn cost(&self, visibility: &VisibilityField, eps: f64) -> f64 {
        self.step_count() as f64 - eps * self.visible_count(visibility) as f64
    }
}

/// Cost `steps − ε·visible`, kept as exact integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cost {
    steps: usize,
    visible: usize,
}

impl Cost {
    const ZERO: Cost = Cost { steps: 0, visible: 0 };

    fn add(self, steps: usize, visible: usize) -> Cost {
        Cost { steps: self.steps + steps, visible: self.visible + visible }
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.steps.cmp(&other.steps).then_with(|| other.visible.cmp(&self.visible))
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Entry {
    f: Cost,
    h: Cost,
    index: usize,
    g: Cost,
}

/// Visibility-biased A* from `start` to `goal`.
///
/// Returns `None` when the goal is unreachable. Ties on `f` are broken by
/// `h`, then by row-major cell index, so the result is deterministic. Nodes
/// are re-opened when a cheaper route is found because the discounted
/// heuristic is not consistent.
pub fn modified_astar(map: &GridMap, start: Cell, goal: Cell, visibility: &VisibilityField) -> Option<Path> {
    if !map.is_free(start) || !map.is_free(goal) {
        return None;
    }
    if start == goal {
        return Some(Path { cells: Vec::new() });
    }

    let n = map.cell_count();
    let heuristic = |c: Cell| Cost { steps: c.manhattan(goal), visible: visibility.is_visible(c) as usize };

    let mut best: Vec<Option<Cost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut open = BinaryHeap::new();

    let start_idx = map.index(start);
    best[start_idx] = Some(Cost::ZERO);
    let h0 = heuristic(start);
    open.push(Reverse(Entry { f: Cost::ZERO.add(h0.steps, h0.visible), h: h0, index: start_idx, g: Cost::ZERO }));

    let goal_idx = map.index(goal);
    while let Some(Reverse(entry)) = open.pop() {
        if best[entry.index] != Some(entry.g) {
            continue;
        }
        if entry.index == goal_idx {
            return Some(Path { cells: backtrack(map, &parent, start_idx, goal_idx) });
        }
        let cell = map.cell_at(entry.index);
        for next in neighbours(map, cell) {
            let vis = visibility.is_visible(next) as usize;
            let g = entry.g.add(1, vis);
            let idx = map.index(next);
            if best[idx].is_some_and(|b| b <= g) {
                continue;
            }
            best[idx] = Some(g);
            parent[idx] = entry.index;
            let h = heuristic(next);
            open.push(Reverse(Entry { f: g.add(h.steps, h.visible), h, index: idx, g }));
        }
    }
    None
}

fn neighbours(map: &GridMap, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
    let (x, y) = (cell.x as i64, cell.y as i64);
    [(0, -1), (0, 1), (-1, 0), (1, 0)].into_iter().filter_map(move |(dx, dy)| map.free_at(x + dx, y + dy))
}

fn backtrack(map: &GridMap, parent: &[usize], start: usize, goal: usize) -> Vec<Cell> {
    let mut cells = Vec::new();
    let mut at = goal;
    while at != start {
        cells.push(map.cell_at(at));
        at = parent[at];
    }
    cells.reverse();
    cells
}

/// Average orientation of the visible part of a path, seen from the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOrientation {
    pub theta_goal: f64,
    pub visible_count: usize,
}

/// Circular mean of the bearings to the visible path cells, or the
/// direction behind the agent when none is visible.
pub fn path_orientation(pose: &Pose, path: &Path, visibility: &VisibilityField) -> PathOrientation {
    let origin = pose.cell();
    let (mut sin_sum, mut cos_sum, mut n) = (0.0, 0.0, 0);
    for cell in path.cells.iter().filter(|c| visibility.is_visible(**c)) {
        let theta = origin.bearing_to(*cell);
        sin_sum += theta.sin();
        cos_sum += theta.cos();
        n += 1;
    }
    let theta_goal = if n > 0 {
        wrap_angle(sin_sum.atan2(cos_sum))
    } else {
        wrap_angle(pose.heading.angle() + std::f64::consts::PI)
    };
    PathOrientation { theta_goal, visible_count: n }
}

/// Angular error between the agent's heading and the path orientation, in `[0, π]`.
pub fn heading_error(pose: &Pose, orientation: &PathOrientation) -> f64 {
    angle_diff(orientation.theta_goal, pose.heading.angle())
}
