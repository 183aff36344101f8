//! Risk-bounded grid planning: A* on the 8-connected grid, with cells
//! admissible only when they are statically free *and* their human-occupancy
//! probability at the mission's time is at or below a threshold δ.
//!
//! Path lengths are carried as (axial, diagonal) step counts so that two
//! paths of equal step mix compare exactly equal in floating point.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Cell, GridSpec, OccupancyGrid};
use crate::mod_map::{MoDStack, QueryError};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Why a cell (or a whole query) is untraversable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockageKind {
    /// A static obstacle is in the way regardless of threshold.
    Static,
    /// Statically fine, but the occupancy threshold δ rules it out.
    Threshold,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("occupancy grid and occupancy-probability stack use different grids")]
    SpecMismatch,
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("cell ({x}, {y}) outside the grid")]
    OutOfBounds { x: usize, y: usize },
    #[error("mission time {0} outside the probability stack's coverage")]
    TimeOutsideCoverage(f64),
    #[error("start cell untraversable ({0:?})")]
    StartBlocked(BlockageKind),
    #[error("goal cell untraversable ({0:?})")]
    GoalBlocked(BlockageKind),
    #[error("no admissible path ({0:?})")]
    Unreachable(BlockageKind),
    #[error("robot and task lists differ in length ({robots} vs {tasks})")]
    SizeMismatch { robots: usize, tasks: usize },
}

/// A planned path over grid cells: consecutive cells are 8-adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    cells: Vec<Cell>,
    axial_steps: usize,
    diagonal_steps: usize,
    resolution: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("a path needs at least one cell")]
    Empty,
    #[error("cells {0} and {1} are not 8-adjacent distinct cells")]
    NotAdjacent(usize, usize),
}

impl GridPath {
    /// Build from an explicit cell sequence, validating adjacency.
    pub fn from_cells(cells: Vec<Cell>, resolution: f64) -> Result<Self, PathError> {
        if cells.is_empty() {
            return Err(PathError::Empty);
        }
        let mut axial = 0usize;
        let mut diagonal = 0usize;
        for i in 1..cells.len() {
            let (a, b) = (cells[i - 1], cells[i]);
            let dx = a.x.abs_diff(b.x);
            let dy = a.y.abs_diff(b.y);
            match (dx, dy) {
                (1, 1) => diagonal += 1,
                (1, 0) | (0, 1) => axial += 1,
                _ => return Err(PathError::NotAdjacent(i - 1, i)),
            }
        }
        Ok(GridPath {
            cells,
            axial_steps: axial,
            diagonal_steps: diagonal,
            resolution,
        })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().unwrap()
    }

    pub fn axial_steps(&self) -> usize {
        self.axial_steps
    }

    pub fn diagonal_steps(&self) -> usize {
        self.diagonal_steps
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Metric length, reconstructed from step counts: `res·(a + √2·d)`.
    /// Equal step mixes yield bitwise-equal lengths.
    pub fn length(&self) -> f64 {
        step_length(self.axial_steps, self.diagonal_steps, self.resolution)
    }
}

/// Metric length of a path with `axial` straight and `diagonal` diagonal
/// steps on a grid with cell size `resolution`.
pub fn step_length(axial: usize, diagonal: usize, resolution: f64) -> f64 {
    resolution * (axial as f64 + SQRT_2 * diagonal as f64)
}

/// One planning query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub start: Cell,
    pub goal: Cell,
    /// Maximum tolerated occupancy probability per cell.
    pub delta: f64,
    /// Mission time; selects the probability layer.
    pub time: f64,
}

/// Octile-distance heuristic between two cells, scaled to meters.
fn octile(a: Cell, b: Cell, res: f64) -> f64 {
    let dx = a.x.abs_diff(b.x) as f64;
    let dy = a.y.abs_diff(b.y) as f64;
    let (dmin, dmax) = if dx < dy { (dx, dy) } else { (dy, dx) };
    res * ((dmax - dmin) + SQRT_2 * dmin)
}

#[derive(PartialEq)]
struct HeapEntry {
    f: f64,
    g: f64,
    idx: u32,
}

impl Eq for HeapEntry {}

// BinaryHeap pops the greatest entry; "greatest" here means lowest f, then
// highest g (deep nodes first), then lowest row-major index.
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Axial moves first, then diagonals; order matters only for parent ties.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// A* over the admissible set. Diagonal moves may cut a corner only when at
/// least one of the two adjacent axial cells is admissible. Returns the cell
/// sequence, or `None` when the goal is unreachable.
fn astar(
    spec: &GridSpec,
    admissible: &dyn Fn(Cell) -> bool,
    start: Cell,
    goal: Cell,
) -> Option<Vec<Cell>> {
    let n = spec.n_cells();
    let res = spec.resolution;
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();

    let s_idx = spec.index(start) as u32;
    let g_idx = spec.index(goal) as u32;
    dist[s_idx as usize] = 0.0;
    heap.push(HeapEntry {
        f: octile(start, goal, res),
        g: 0.0,
        idx: s_idx,
    });

    while let Some(e) = heap.pop() {
        let ei = e.idx as usize;
        if closed[ei] {
            continue;
        }
        closed[ei] = true;
        if e.idx == g_idx {
            break;
        }
        let cell = Cell::new(ei % spec.width, ei / spec.width);
        for (dx, dy) in DIRS {
            let nx = cell.x as i64 + dx;
            let ny = cell.y as i64 + dy;
            if nx < 0 || ny < 0 || nx >= spec.width as i64 || ny >= spec.height as i64 {
                continue;
            }
            let next = Cell::new(nx as usize, ny as usize);
            if !admissible(next) {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal {
                let side_a = Cell::new(nx as usize, cell.y);
                let side_b = Cell::new(cell.x, ny as usize);
                if !admissible(side_a) && !admissible(side_b) {
                    continue;
                }
            }
            let step = if diagonal { res * SQRT_2 } else { res };
            let ng = e.g + step;
            let ni = spec.index(next);
            if ng < dist[ni] {
                dist[ni] = ng;
                parent[ni] = e.idx;
                heap.push(HeapEntry {
                    f: ng + octile(next, goal, res),
                    g: ng,
                    idx: ni as u32,
                });
            }
        }
    }

    if !closed[g_idx as usize] {
        return None;
    }
    let mut cells = vec![goal];
    let mut cur = g_idx;
    while cur != s_idx {
        cur = parent[cur as usize];
        cells.push(Cell::new(
            cur as usize % spec.width,
            cur as usize / spec.width,
        ));
    }
    cells.reverse();
    Some(cells)
}

/// Breadth-first static reachability with the same corner-cutting rule,
/// ignoring the threshold. Used to diagnose *why* planning failed.
fn statically_reachable(grid: &OccupancyGrid, start: Cell, goal: Cell) -> bool {
    let spec = grid.spec();
    let free = |c: Cell| !grid.is_blocked(c);
    if !free(start) || !free(goal) {
        return false;
    }
    let mut seen = vec![false; spec.n_cells()];
    let mut queue = std::collections::VecDeque::new();
    seen[spec.index(start)] = true;
    queue.push_back(start);
    while let Some(cell) = queue.pop_front() {
        if cell == goal {
            return true;
        }
        for (dx, dy) in DIRS {
            let nx = cell.x as i64 + dx;
            let ny = cell.y as i64 + dy;
            if nx < 0 || ny < 0 || nx >= spec.width as i64 || ny >= spec.height as i64 {
                continue;
            }
            let next = Cell::new(nx as usize, ny as usize);
            if !free(next) || seen[spec.index(next)] {
                continue;
            }
            if dx != 0 && dy != 0 {
                let side_a = Cell::new(nx as usize, cell.y);
                let side_b = Cell::new(cell.x, ny as usize);
                if !free(side_a) && !free(side_b) {
                    continue;
                }
            }
            seen[spec.index(next)] = true;
            queue.push_back(next);
        }
    }
    false
}

fn endpoint_kind(grid: &OccupancyGrid, p: f64, delta: f64, cell: Cell) -> Option<BlockageKind> {
    if grid.is_blocked(cell) {
        Some(BlockageKind::Static)
    } else if p > delta {
        Some(BlockageKind::Threshold)
    } else {
        None
    }
}

/// Plan a δ-admissible shortest path at the request's mission time.
pub fn plan(
    grid: &OccupancyGrid,
    mods: &MoDStack,
    req: &PlanRequest,
) -> Result<GridPath, PlanError> {
    let spec = grid.spec();
    if spec != mods.spec() {
        return Err(PlanError::SpecMismatch);
    }
    if !req.delta.is_finite() || !(0.0..=1.0).contains(&req.delta) {
        return Err(PlanError::InvalidThreshold(req.delta));
    }
    for cell in [req.start, req.goal] {
        if !spec.contains(cell) {
            return Err(PlanError::OutOfBounds {
                x: cell.x,
                y: cell.y,
            });
        }
    }
    let layer = mods.layer_at(req.time).map_err(|e| match e {
        QueryError::TimeOutsideCoverage(t) => PlanError::TimeOutsideCoverage(t),
        QueryError::OutOfBounds { x, y } => PlanError::OutOfBounds { x, y },
    })?;
    let values = layer.values();
    let admissible =
        |c: Cell| !grid.is_blocked(c) && values[spec.index(c)] <= req.delta;

    if let Some(kind) = endpoint_kind(grid, values[spec.index(req.start)], req.delta, req.start) {
        return Err(PlanError::StartBlocked(kind));
    }
    if let Some(kind) = endpoint_kind(grid, values[spec.index(req.goal)], req.delta, req.goal) {
        return Err(PlanError::GoalBlocked(kind));
    }

    match astar(spec, &admissible, req.start, req.goal) {
        Some(cells) => Ok(GridPath::from_cells(cells, spec.resolution).expect("A* emits adjacent cells")),
        None => {
            let kind = if statically_reachable(grid, req.start, req.goal) {
                BlockageKind::Threshold
            } else {
                BlockageKind::Static
            };
            Err(PlanError::Unreachable(kind))
        }
    }
}

/// Shortest path over static obstacles only (thresholds ignored). This is
/// what distance-only baselines plan with.
pub fn plan_static(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
) -> Result<GridPath, PlanError> {
    let spec = grid.spec();
    for cell in [start, goal] {
        if !spec.contains(cell) {
            return Err(PlanError::OutOfBounds {
                x: cell.x,
                y: cell.y,
            });
        }
    }
    if grid.is_blocked(start) {
        return Err(PlanError::StartBlocked(BlockageKind::Static));
    }
    if grid.is_blocked(goal) {
        return Err(PlanError::GoalBlocked(BlockageKind::Static));
    }
    let admissible = |c: Cell| !grid.is_blocked(c);
    astar(spec, &admissible, start, goal)
        .map(|cells| GridPath::from_cells(cells, spec.resolution).expect("A* emits adjacent cells"))
        .ok_or(PlanError::Unreachable(BlockageKind::Static))
}

/// All robot-to-task paths for one mission time and threshold. Individual
/// pair failures do not abort the matrix.
#[derive(Debug)]
pub struct PlanMatrix {
    entries: Vec<Vec<Result<GridPath, PlanError>>>,
}

impl PlanMatrix {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, robot: usize, task: usize) -> &Result<GridPath, PlanError> {
        &self.entries[robot][task]
    }

    pub fn rows(&self) -> &[Vec<Result<GridPath, PlanError>>] {
        &self.entries
    }
}

pub fn plan_matrix(
    grid: &OccupancyGrid,
    mods: &MoDStack,
    robots: &[Cell],
    tasks: &[Cell],
    delta: f64,
    time: f64,
) -> Result<PlanMatrix, PlanError> {
    if robots.len() != tasks.len() {
        return Err(PlanError::SizeMismatch {
            robots: robots.len(),
            tasks: tasks.len(),
        });
    }
    let entries = robots
        .par_iter()
        .map(|&r| {
            tasks
                .iter()
                .map(|&t| {
                    plan(
                        grid,
                        mods,
                        &PlanRequest {
                            start: r,
                            goal: t,
                            delta,
                            time,
                        },
                    )
                })
                .collect()
        })
        .collect();
    Ok(PlanMatrix { entries })
}
