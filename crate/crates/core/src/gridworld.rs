//! Occupancy grid, agent pose and line-of-sight visibility.
//!
//! Coordinates: `x` grows east, `y` grows south, row 0 is the northern edge.
//! Headings are multiples of π/4 measured counterclockwise from east, so
//! heading index 2 (π/2) faces north, i.e. towards decreasing `y`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest number of goals the single-character map format can label.
pub const MAX_GOALS: usize = 9;

/// Default half-angle of the vision cone (a 180° field of view).
pub const DEFAULT_FOV_HALF_ANGLE: f64 = PI / 2.0;

/// Slack used when comparing a bearing against the cone boundary, so that
/// cells lying exactly on the boundary are consistently included.
const CONE_SLACK: f64 = 1e-12;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta.rem_euclid(TAU);
    // rem_euclid can return exactly TAU for tiny negative inputs.
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Absolute angular difference, taking periodicity into account. Result in `[0, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// A grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// Bearing from `self` to `other` in the heading frame (east = 0, north = π/2).
    pub fn bearing_to(self, other: Cell) -> f64 {
        let dx = other.x as f64 - self.x as f64;
        let dy = other.y as f64 - self.y as f64;
        wrap_angle((-dy).atan2(dx))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// One of the eight discrete orientations `k·π/4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Heading(u8);

impl Heading {
    pub const COUNT: usize = 8;
    pub const EAST: Heading = Heading(0);
    pub const NORTH: Heading = Heading(2);
    pub const WEST: Heading = Heading(4);
    pub const SOUTH: Heading = Heading(6);

    pub fn new(index: u8) -> Option<Self> {
        (index < Self::COUNT as u8).then_some(Self(index))
    }

    /// Builds a heading from any integer, wrapping modulo 8.
    pub fn wrapping(index: i64) -> Self {
        Self(index.rem_euclid(Self::COUNT as i64) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn angle(self) -> f64 {
        self.0 as f64 * PI / 4.0
    }

    /// Clockwise turn: heading index decreases by one.
    pub fn turn_cw(self) -> Self {
        Self::wrapping(self.0 as i64 - 1)
    }

    /// Counterclockwise turn: heading index increases by one.
    pub fn turn_ccw(self) -> Self {
        Self::wrapping(self.0 as i64 + 1)
    }

    pub fn all() -> impl Iterator<Item = Heading> {
        (0..Self::COUNT as u8).map(Heading)
    }
}

impl TryFrom<u8> for Heading {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Heading::new(value).ok_or_else(|| format!("heading index {value} out of range 0..8"))
    }
}

impl From<Heading> for u8 {
    fn from(h: Heading) -> u8 {
        h.0
    }
}

/// Agent state: position and heading. This is the MDP state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub heading: Heading,
}

impl Pose {
    pub const fn new(x: usize, y: usize, heading: Heading) -> Self {
        Self { x, y, heading }
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}π/4)", self.x, self.y, self.heading.index())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line {line}, column {column}: unexpected character {found:?}")]
    BadCharacter { line: usize, column: usize, found: char },
    #[error("line {line}: row has {found} cells, expected {expected}")]
    RaggedRow { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: goal {label} already defined")]
    DuplicateGoal { line: usize, column: usize, label: u8 },
    #[error("line {line}, column {column}: goal {label} placed on an occupied cell")]
    GoalOnOccupied { line: usize, column: usize, label: u8 },
    #[error("line {line}, column {column}: goal {label} at ({x}, {y}) is outside the map")]
    GoalOutOfBounds { line: usize, column: usize, label: u8, x: usize, y: usize },
    #[error("line {line}: malformed directive: {reason}")]
    BadDirective { line: usize, reason: String },
    #[error("goal labels must run 1..=K without gaps; goal {missing} is missing")]
    GoalGap { missing: u8 },
    #[error("map has no goals")]
    NoGoals,
    #[error("invalid map: {0}")]
    Invalid(String),
}

/// Occupancy grid with an ordered list of goal cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
    goals: Vec<Cell>,
}

impl GridMap {
    /// Builds a map, checking every invariant.
    pub fn new(width: usize, height: usize, occupied: Vec<bool>, goals: Vec<Cell>) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::Empty);
        }
        if occupied.len() != width * height {
            return Err(MapError::Invalid(format!(
                "occupancy has {} cells, expected {}",
                occupied.len(),
                width * height
            )));
        }
        if goals.is_empty() {
            return Err(MapError::NoGoals);
        }
        if goals.len() > MAX_GOALS {
            return Err(MapError::Invalid(format!("{} goals exceed the maximum of {MAX_GOALS}", goals.len())));
        }
        for (i, g) in goals.iter().enumerate() {
            if g.x >= width || g.y >= height {
                return Err(MapError::Invalid(format!("goal {} at {g} is out of bounds", i + 1)));
            }
            if occupied[g.y * width + g.x] {
                return Err(MapError::Invalid(format!("goal {} at {g} is occupied", i + 1)));
            }
            if goals[..i].contains(g) {
                return Err(MapError::Invalid(format!("goal {} at {g} duplicates another goal", i + 1)));
            }
        }
        Ok(Self { width, height, occupied, goals })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goals(&self) -> &[Cell] {
        &self.goals
    }

    pub fn goal_count(&self) -> usize {
        self.goals.len()
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height && !self.is_occupied(cell)
    }

    /// The free cell at signed coordinates, if there is one.
    pub fn free_at(&self, x: i64, y: i64) -> Option<Cell> {
        if !self.in_bounds(x, y) {
            return None;
        }
        let cell = Cell::new(x as usize, y as usize);
        (!self.is_occupied(cell)).then_some(cell)
    }

    pub fn is_valid_pose(&self, pose: &Pose) -> bool {
        self.is_free(pose.cell())
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(|i| self.cell_at(i))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|c| !self.is_occupied(*c))
    }

    /// Canonical ASCII rendering; `parse_map(map.to_ascii())` yields `map`.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let cell = Cell::new(x, y);
                let ch = match self.goals.iter().position(|g| *g == cell) {
                    Some(i) => char::from(b'1' + i as u8),
                    None if self.is_occupied(cell) => '#',
                    None => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// Rows of the canonical rendering, without line terminators.
    pub fn rows(&self) -> Vec<String> {
        self.to_ascii().lines().map(str::to_owned).collect()
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_ascii().as_bytes()))
    }
}

/// Parses the ASCII map format.
///
/// Grid lines use `#` for occupied cells, `.` for free cells and `1`..`9` for
/// goal cells. After the grid, optional directive lines of the form
/// `@goal <label> <x> <y>` place a goal by coordinates. Blank lines are
/// ignored.
pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let mut width = 0;
    let mut rows: Vec<Vec<bool>> = Vec::new();
    let mut labelled: [Option<Cell>; MAX_GOALS] = [None; MAX_GOALS];
    let mut directives = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('@') {
            directives.push((line_no, line));
            continue;
        }
        if !directives.is_empty() {
            return Err(MapError::BadDirective { line: line_no, reason: "grid rows must precede directives".into() });
        }
        let y = rows.len();
        let mut row = Vec::with_capacity(line.len());
        for (col, ch) in line.chars().enumerate() {
            match ch {
                '#' => row.push(true),
                '.' => row.push(false),
                '1'..='9' => {
                    let label = ch as u8 - b'0';
                    let slot = &mut labelled[label as usize - 1];
                    if slot.is_some() {
                        return Err(MapError::DuplicateGoal { line: line_no, column: col + 1, label });
                    }
                    *slot = Some(Cell::new(col, y));
                    row.push(false);
                }
                other => return Err(MapError::BadCharacter { line: line_no, column: col + 1, found: other }),
            }
        }
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(MapError::RaggedRow { line: line_no, expected: width, found: row.len() });
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(MapError::Empty);
    }
    let height = rows.len();
    let occupied: Vec<bool> = rows.into_iter().flatten().collect();

    for (line_no, line) in directives {
        apply_goal_directive(line_no, line, width, height, &occupied, &mut labelled)?;
    }

    let count = labelled.iter().rposition(Option::is_some).map_or(0, |i| i + 1);
    if count == 0 {
        return Err(MapError::NoGoals);
    }
    let mut goals = Vec::with_capacity(count);
    for (i, slot) in labelled[..count].iter().enumerate() {
        match slot {
            Some(c) => goals.push(*c),
            None => return Err(MapError::GoalGap { missing: i as u8 + 1 }),
        }
    }
    GridMap::new(width, height, occupied, goals)
}

fn apply_goal_directive(
    line_no: usize,
    line: &str,
    width: usize,
    height: usize,
    occupied: &[bool],
    labelled: &mut [Option<Cell>; MAX_GOALS],
) -> Result<(), MapError> {
    let bad = |reason: &str| MapError::BadDirective { line: line_no, reason: reason.to_owned() };
    let mut parts = line.split_whitespace();
    if parts.next() != Some("@goal") {
        return Err(bad("unknown directive, expected `@goal <label> <x> <y>`"));
    }
    let fields: Vec<&str> = parts.collect();
    if fields.len() != 3 {
        return Err(bad("expected `@goal <label> <x> <y>`"));
    }
    let label: u8 = fields[0]
        .parse()
        .ok()
        .filter(|l| (1..=MAX_GOALS as u8).contains(l))
        .ok_or_else(|| bad("goal label must be 1..9"))?;
    let x: usize = fields[1].parse().map_err(|_| bad("x is not a number"))?;
    let y: usize = fields[2].parse().map_err(|_| bad("y is not a number"))?;
    // Column of the label token, 1-based.
    let column = line.find(fields[0]).map_or(1, |p| p + 1);
    if x >= width || y >= height {
        return Err(MapError::GoalOutOfBounds { line: line_no, column, label, x, y });
    }
    if occupied[y * width + x] {
        return Err(MapError::GoalOnOccupied { line: line_no, column, label });
    }
    let cell = Cell::new(x, y);
    let slot = &mut labelled[label as usize - 1];
    if slot.is_some() || labelled.contains(&Some(cell)) {
        return Err(MapError::DuplicateGoal { line: line_no, column, label });
    }
    labelled[label as usize - 1] = Some(cell);
    Ok(())
}

/// Which cells an agent can see from a pose.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityField {
    pub source: Pose,
    pub fov_half_angle: f64,
    width: usize,
    visible: Vec<bool>,
}

impl VisibilityField {
    pub fn is_visible(&self, cell: Cell) -> bool {
        self.visible[cell.y * self.width + cell.x]
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }

    pub fn visible_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let width = self.width;
        self.visible.iter().enumerate().filter(|(_, v)| **v).map(move |(i, _)| Cell::new(i % width, i / width))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.visible
    }
}

/// Whether the bearing from `pose` to `target` lies inside the vision cone.
pub fn in_cone(pose: &Pose, target: Cell, fov_half_angle: f64) -> bool {
    let from = pose.cell();
    if from == target {
        return true;
    }
    angle_diff(from.bearing_to(target), pose.heading.angle()) <= fov_half_angle + CONE_SLACK
}

/// Center-to-center sight test: true when the segment between the two cell
/// centers passes through no occupied cell's interior. The endpoints
/// themselves are not tested; passing exactly through a lattice corner does
/// not enter either of the cells sharing that corner.
pub fn line_of_sight(map: &GridMap, from: Cell, to: Cell) -> bool {
    let dx = to.x as i64 - from.x as i64;
    let dy = to.y as i64 - from.y as i64;
    let (nx, ny) = (dx.abs(), dy.abs());
    let (sx, sy) = (dx.signum(), dy.signum());
    let (mut x, mut y) = (from.x as i64, from.y as i64);
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        // Compare the parameters at which the ray reaches the next vertical
        // and horizontal grid lines: (0.5 + ix) / nx against (0.5 + iy) / ny.
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        if ix == nx && iy == ny {
            break;
        }
        if map.is_occupied(Cell::new(x as usize, y as usize)) {
            return false;
        }
    }
    true
}

/// Computes the set of free cells visible from `pose`.
pub fn compute_visibility(map: &GridMap, pose: &Pose, fov_half_angle: f64) -> VisibilityField {
    let from = pose.cell();
    let visible = map
        .cells()
        .map(|c| {
            if c == from {
                return true;
            }
            !map.is_occupied(c) && in_cone(pose, c, fov_half_angle) && line_of_sight(map, from, c)
        })
        .collect();
    VisibilityField { source: *pose, fov_half_angle, width: map.width(), visible }
}
