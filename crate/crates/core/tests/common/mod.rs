//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's algorithms; only its plain data
//! types are shared so results can be compared.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::PathBuf;

use intentgrid_core::{Action, Cell, GridMap, Heading, Pose, RewardTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Random map with roughly `density` walls and `goals` distinct free goals.
/// Retries until enough free cells exist.
pub fn random_map(rng: &mut ChaCha8Rng, width: usize, height: usize, density: f64, goals: usize) -> GridMap {
    loop {
        let occupied: Vec<bool> = (0..width * height).map(|_| rng.random_bool(density)).collect();
        let mut free: Vec<Cell> =
            (0..width * height).filter(|&i| !occupied[i]).map(|i| Cell::new(i % width, i / width)).collect();
        if free.len() < goals + 1 {
            continue;
        }
        let mut chosen = Vec::new();
        for _ in 0..goals {
            let i = rng.random_range(0..free.len());
            chosen.push(free.swap_remove(i));
        }
        return GridMap::new(width, height, occupied, chosen).expect("generated map is valid");
    }
}

pub fn random_free_cell(rng: &mut ChaCha8Rng, map: &GridMap) -> Cell {
    let free: Vec<Cell> = map.free_cells().collect();
    free[rng.random_range(0..free.len())]
}

pub fn random_pose(rng: &mut ChaCha8Rng, map: &GridMap) -> Pose {
    let c = random_free_cell(rng, map);
    Pose::new(c.x, c.y, Heading::new(rng.random_range(0..8)).unwrap())
}

fn free(map: &GridMap, x: i64, y: i64) -> bool {
    x >= 0
        && y >= 0
        && (x as usize) < map.width()
        && (y as usize) < map.height()
        && !map.is_occupied(Cell::new(x as usize, y as usize))
}

/// Breadth-first 4-connected distance, `None` when unreachable.
pub fn bfs_distance(map: &GridMap, from: Cell, to: Cell) -> Option<usize> {
    bfs_all(map, from)[to.y * map.width() + to.x]
}

/// Distances from `from` to every cell.
pub fn bfs_all(map: &GridMap, from: Cell) -> Vec<Option<usize>> {
    let w = map.width();
    let mut dist = vec![None; w * map.height()];
    if map.is_occupied(from) {
        return dist;
    }
    dist[from.y * w + from.x] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        let d = dist[c.y * w + c.x].unwrap();
        for (dx, dy) in [(0i64, -1i64), (0, 1), (-1, 0), (1, 0)] {
            let (x, y) = (c.x as i64 + dx, c.y as i64 + dy);
            if free(map, x, y) && dist[y as usize * w + x as usize].is_none() {
                dist[y as usize * w + x as usize] = Some(d + 1);
                queue.push_back(Cell::new(x as usize, y as usize));
            }
        }
    }
    dist
}

/// Largest number of `visible` cells on any shortest path, counting every
/// cell after the start. Dynamic programming over the BFS layers.
pub fn max_visible_on_shortest(map: &GridMap, from: Cell, to: Cell, visible: &[bool]) -> Option<usize> {
    let w = map.width();
    let dist = bfs_all(map, from);
    let total = dist[to.y * w + to.x]?;
    let mut best: Vec<Option<usize>> = vec![None; dist.len()];
    best[from.y * w + from.x] = Some(0);
    for d in 1..=total {
        let next: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] == Some(d)).collect();
        for i in next {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let mut b = None;
            for (dx, dy) in [(0i64, -1i64), (0, 1), (-1, 0), (1, 0)] {
                let (px, py) = (x + dx, y + dy);
                if free(map, px, py) {
                    let p = py as usize * w + px as usize;
                    if dist[p] == Some(d - 1) {
                        if let Some(v) = best[p] {
                            b = b.max(Some(v + visible[i] as usize));
                        }
                    }
                }
            }
            best[i] = b;
        }
    }
    best[to.y * w + to.x]
}

/// Unit heading vector with y pointing north, scaled to integers.
fn heading_vector(h: Heading) -> (i64, i64) {
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)][h.index()]
}

/// Whether the open segment between the doubled-coordinate points `a` and
/// `b` meets the open unit square of `cell`. Exact rational arithmetic.
fn segment_hits_cell(a: (i64, i64), b: (i64, i64), cell: Cell) -> bool {
    // Parameter interval (lo, hi) as fractions num/den with den > 0.
    let mut lo = (0i64, 1i64);
    let mut hi = (1i64, 1i64);
    let lt = |p: (i64, i64), q: (i64, i64)| p.0 * q.1 < q.0 * p.1;
    let axes = [(a.0, b.0, 2 * cell.x as i64), (a.1, b.1, 2 * cell.y as i64)];
    for (p0, p1, min) in axes {
        let max = min + 2;
        let d = p1 - p0;
        if d == 0 {
            if !(min < p0 && p0 < max) {
                return false;
            }
            continue;
        }
        let (mut t1, mut t2) = ((min - p0, d), (max - p0, d));
        if d < 0 {
            t1 = (-t1.0, -t1.1);
            t2 = (-t2.0, -t2.1);
            std::mem::swap(&mut t1, &mut t2);
        }
        if lt(lo, t1) {
            lo = t1;
        }
        if lt(t2, hi) {
            hi = t2;
        }
    }
    lt(lo, hi)
}

/// Cells whose centers lie strictly between the two endpoint centers.
pub fn centers_on_segment(from: Cell, to: Cell) -> Vec<Cell> {
    let (dx, dy) = (to.x as i64 - from.x as i64, to.y as i64 - from.y as i64);
    let g = gcd(dx.unsigned_abs(), dy.unsigned_abs()) as i64;
    (1..g.max(1))
        .map(|k| Cell::new((from.x as i64 + k * dx / g) as usize, (from.y as i64 + k * dy / g) as usize))
        .collect()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Brute-force visibility: every free cell whose center segment meets no
/// wall square and, unless `all_around`, lies in the closed half-plane ahead.
pub fn brute_visible(map: &GridMap, pose: &Pose, all_around: bool) -> Vec<bool> {
    let (hx, hy) = heading_vector(pose.heading);
    let from = pose.cell();
    let a = (2 * from.x as i64 + 1, 2 * from.y as i64 + 1);
    map.cells()
        .map(|c| {
            if c == from {
                return true;
            }
            if map.is_occupied(c) {
                return false;
            }
            let (vx, vy) = (c.x as i64 - from.x as i64, from.y as i64 - c.y as i64);
            if !all_around && hx * vx + hy * vy < 0 {
                return false;
            }
            let b = (2 * c.x as i64 + 1, 2 * c.y as i64 + 1);
            map.cells().filter(|&o| map.is_occupied(o)).all(|o| !segment_hits_cell(a, b, o))
        })
        .collect()
}

/// Nominal realization probabilities written out independently,
/// in action order Up, Down, Left, Right, TurnCW, TurnCCW, Stay.
pub fn reference_row(intended: Action, eps: f64) -> [f64; 7] {
    let m = 1.0 - 2.0 * eps;
    match intended {
        Action::Up => [m, 0.0, eps, eps, 0.0, 0.0, 0.0],
        Action::Down => [0.0, m, eps, eps, 0.0, 0.0, 0.0],
        Action::Left => [eps, eps, m, 0.0, 0.0, 0.0, 0.0],
        Action::Right => [eps, eps, 0.0, m, 0.0, 0.0, 0.0],
        Action::TurnCw => [0.0, 0.0, 0.0, 0.0, 1.0 - eps, 0.0, eps],
        Action::TurnCcw => [0.0, 0.0, 0.0, 0.0, 0.0, 1.0 - eps, eps],
        Action::Stay => [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    }
}

pub const ACTIONS: [Action; 7] =
    [Action::Up, Action::Down, Action::Left, Action::Right, Action::TurnCw, Action::TurnCcw, Action::Stay];

/// Successor pose of a realized action, `None` when it walks into a wall.
pub fn reference_successor(map: &GridMap, pose: &Pose, realized: Action) -> Option<Pose> {
    let h = pose.heading.index() as i64;
    let (dx, dy, dh) = match realized {
        Action::Up => (0, -1, 0),
        Action::Down => (0, 1, 0),
        Action::Left => (-1, 0, 0),
        Action::Right => (1, 0, 0),
        Action::TurnCw => (0, 0, -1),
        Action::TurnCcw => (0, 0, 1),
        Action::Stay => (0, 0, 0),
    };
    let (x, y) = (pose.x as i64 + dx, pose.y as i64 + dy);
    if !free(map, x, y) {
        return None;
    }
    Some(Pose::new(x as usize, y as usize, Heading::new((h + dh).rem_euclid(8) as u8).unwrap()))
}

/// Row with blocked movement folded into Stay.
pub fn reference_transition(map: &GridMap, pose: &Pose, intended: Action, eps: f64) -> [f64; 7] {
    let mut row = reference_row(intended, eps);
    for i in 0..4 {
        if row[i] > 0.0 && reference_successor(map, pose, ACTIONS[i]).is_none() {
            row[6] += row[i];
            row[i] = 0.0;
        }
    }
    row
}

/// Dense MDP over every free pose: `p[s][a][s']`.
pub struct DenseMdp {
    pub poses: Vec<Pose>,
    pub p: Vec<Vec<Vec<f64>>>,
}

impl DenseMdp {
    pub fn new(map: &GridMap, eps: f64) -> Self {
        let poses: Vec<Pose> =
            map.free_cells().flat_map(|c| (0..8).map(move |h| Pose::new(c.x, c.y, Heading::new(h).unwrap()))).collect();
        let index = |q: &Pose| poses.iter().position(|p| p == q).unwrap();
        let n = poses.len();
        let mut p = vec![vec![vec![0.0; n]; 7]; n];
        for (s, pose) in poses.iter().enumerate() {
            for (a, &intended) in ACTIONS.iter().enumerate() {
                let row = reference_transition(map, pose, intended, eps);
                for (r, &prob) in row.iter().enumerate() {
                    if prob > 0.0 {
                        let next = reference_successor(map, pose, ACTIONS[r]).unwrap();
                        p[s][a][index(&next)] += prob;
                    }
                }
            }
        }
        Self { poses, p }
    }

    pub fn rewards(&self, table: &RewardTable) -> Vec<f64> {
        self.poses.iter().map(|p| table.get(p)).collect()
    }

    pub fn q(&self, r: &[f64], v: &[f64], gamma: f64, s: usize, a: usize) -> f64 {
        self.p[s][a].iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(t, &p)| p * (r[t] + gamma * v[t])).sum()
    }

    /// Synchronous value iteration from zero until the summed change drops below `eta`.
    pub fn value_iteration(&self, r: &[f64], gamma: f64, eta: f64) -> (Vec<f64>, usize) {
        let n = self.poses.len();
        let mut v = vec![0.0; n];
        for sweep in 1.. {
            let next: Vec<f64> =
                (0..n).map(|s| (0..7).map(|a| self.q(r, &v, gamma, s, a)).fold(f64::NEG_INFINITY, f64::max)).collect();
            let change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = next;
            if change < eta {
                return (v, sweep);
            }
        }
        unreachable!()
    }
}

/// Exhaustive max-product decoding over every hidden sequence.
///
/// Returns the best sequence and, for each step `t`, the normalized best
/// joint probability of any sequence ending in each state.
pub fn viterbi_by_enumeration(initial: &[f64], t: &[Vec<f64>], emissions: &[Vec<f64>]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let n = initial.len();
    let len = emissions.len();
    let mut columns = vec![vec![0.0f64; n]; len];
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut seq = vec![0usize; len];
    let total = n.pow(len as u32);
    for code in 0..total {
        let mut c = code;
        for slot in seq.iter_mut().rev() {
            *slot = c % n;
            c /= n;
        }
        // The start state is hidden too; take the best one.
        let mut prob = (0..n).map(|s0| initial[s0] * t[s0][seq[0]]).fold(0.0, f64::max) * emissions[0][seq[0]];
        for step in 0..len {
            if step > 0 {
                prob *= t[seq[step - 1]][seq[step]] * emissions[step][seq[step]];
            }
            let cell = &mut columns[step][seq[step]];
            *cell = cell.max(prob);
        }
        if prob > best.0 {
            best = (prob, seq.clone());
        }
    }
    for col in &mut columns {
        let z: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= z);
    }
    (best.1, columns)
}
