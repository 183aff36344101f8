//! Mission cost: a weighted blend of travel distance and expected human
//! encounters along the path.
//!
//! For a path visiting cells c_1..c_m (the start cell is free; the robot is
//! already there), the cost is
//!
//! ```text
//! cost = w0 · Σ step lengths  +  w1 · Σ p(c_k)
//! ```
//!
//! where p(c_k) is the occupancy probability of the entered cell at the
//! mission's time window. The two sums are kept separate and only combined
//! once, which keeps the cost exactly zero-encounter-reducible: with an
//! all-zero map the value is bitwise `w0 · length`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Cell, OccupancyGrid};
use crate::mod_map::{MoDStack, QueryError};
use crate::planner::{self, GridPath, PlanError, PlanMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("weights must be finite and nonnegative, got ({w0}, {w1})")]
    InvalidWeights { w0: f64, w1: f64 },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("robot and task lists differ in length ({robots} vs {tasks})")]
    SizeMismatch { robots: usize, tasks: usize },
    #[error("cell ({x}, {y}) outside the grid")]
    OutOfBounds { x: usize, y: usize },
    #[error("row {row} has {got} entries, matrix wants {want}")]
    RowLength { row: usize, got: usize, want: usize },
    #[error("non-finite cost at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Cost weights (w0: distance, w1: encounters). Nonnegative and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    w0: f64,
    w1: f64,
}

impl Weights {
    pub fn new(w0: f64, w1: f64) -> Result<Self, CostError> {
        if !(w0.is_finite() && w1.is_finite() && w0 >= 0.0 && w1 >= 0.0) {
            return Err(CostError::InvalidWeights { w0, w1 });
        }
        Ok(Weights { w0, w1 })
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }
}

impl Default for Weights {
    /// The untuned starting point: both terms weighted equally.
    fn default() -> Self {
        Weights { w0: 1.0, w1: 1.0 }
    }
}

/// Whether encounter terms use expectations or one Bernoulli realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMode {
    Expected,
    /// Each entered cell draws an encounter with its occupancy probability;
    /// draws across a matrix are consumed in row-major order from one
    /// seeded generator, so equal seeds give equal matrices.
    Sampled { seed: u64 },
}

/// Sum of occupancy probabilities over the entered cells of a path.
fn presence_sum(path: &GridPath, mods: &MoDStack, time: f64) -> Result<f64, QueryError> {
    let layer = mods.layer_at(time)?;
    let spec = mods.spec();
    let mut sum = 0.0;
    for &c in &path.cells()[1..] {
        sum += layer.value(spec, c);
    }
    Ok(sum)
}

/// Expected mission cost of a single path (Bernoulli encounters replaced by
/// their means). A single-cell path costs exactly 0.
pub fn path_cost(
    path: &GridPath,
    mods: &MoDStack,
    time: f64,
    weights: Weights,
) -> Result<f64, CostError> {
    let p_sum = presence_sum(path, mods, time)?;
    Ok(weights.w0 * path.length() + weights.w1 * p_sum)
}

fn sampled_path_cost(
    path: &GridPath,
    mods: &MoDStack,
    time: f64,
    weights: Weights,
    rng: &mut ChaCha8Rng,
) -> Result<f64, CostError> {
    let layer = mods.layer_at(time)?;
    let spec = mods.spec();
    let mut encounters = 0.0;
    for &c in &path.cells()[1..] {
        let p = layer.value(spec, c);
        if rng.random::<f64>() < p {
            encounters += 1.0;
        }
    }
    Ok(weights.w0 * path.length() + weights.w1 * encounters)
}

/// A square robot×task cost matrix; unreachable pairs carry no value.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    values: Vec<f64>,
    reachable: Vec<bool>,
}

impl CostMatrix {
    /// Build from explicit rows (`None` marks an unreachable pair).
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Result<Self, CostError> {
        let n = rows.len();
        let mut values = vec![0.0; n * n];
        let mut reachable = vec![false; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(CostError::RowLength {
                    row: i,
                    got: row.len(),
                    want: n,
                });
            }
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if !v.is_finite() {
                        return Err(CostError::NonFinite { row: i, col: j });
                    }
                    values[i * n + j] = v;
                    reachable[i * n + j] = true;
                }
            }
        }
        Ok(CostMatrix {
            n,
            values,
            reachable,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Cost of assigning robot `i` to task `j`; `None` if unreachable.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.reachable[i * self.n + j].then(|| self.values[i * self.n + j])
    }

    /// Grid CSV: one row per robot, one column per task, unreachable pairs
    /// left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("robot");
        for j in 0..self.n {
            out.push_str(&format!(",task_{j}"));
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&i.to_string());
            for j in 0..self.n {
                out.push(',');
                if let Some(v) = self.get(i, j) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregate a plan matrix into mission costs. Planning failures become
/// unreachable entries; they never abort the matrix.
pub fn cost_matrix(
    paths: &PlanMatrix,
    mods: &MoDStack,
    time: f64,
    weights: Weights,
    mode: CostMode,
) -> Result<CostMatrix, CostError> {
    let n = paths.n();
    let mut rng = match mode {
        CostMode::Expected => None,
        CostMode::Sampled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            match paths.get(i, j) {
                Ok(path) => {
                    let c = match rng.as_mut() {
                        None => path_cost(path, mods, time, weights)?,
                        Some(rng) => sampled_path_cost(path, mods, time, weights, rng)?,
                    };
                    row.push(Some(c));
                }
                Err(_) => row.push(None),
            }
        }
        rows.push(row);
    }
    CostMatrix::from_rows(rows)
}

/// Distance-only baselines for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Straight-line distance between cell centers; obstacles ignored.
    Euclidean,
    /// Length of the shortest static-obstacle path (no occupancy term).
    PathLength,
}

pub fn baseline_costs(
    robots: &[Cell],
    tasks: &[Cell],
    grid: &OccupancyGrid,
    mode: BaselineMode,
) -> Result<CostMatrix, CostError> {
    if robots.len() != tasks.len() {
        return Err(CostError::SizeMismatch {
            robots: robots.len(),
            tasks: tasks.len(),
        });
    }
    let spec = grid.spec();
    for &c in robots.iter().chain(tasks) {
        if !spec.contains(c) {
            return Err(CostError::OutOfBounds { x: c.x, y: c.y });
        }
    }
    let rows: Vec<Vec<Option<f64>>> = match mode {
        BaselineMode::Euclidean => robots
            .iter()
            .map(|&r| {
                tasks
                    .iter()
                    .map(|&t| Some(spec.center_distance(r, t)))
                    .collect()
            })
            .collect(),
        BaselineMode::PathLength => robots
            .par_iter()
            .map(|&r| {
                tasks
                    .iter()
                    .map(|&t| match planner::plan_static(grid, r, t) {
                        Ok(p) => Some(p.length()),
                        Err(PlanError::OutOfBounds { .. }) => unreachable!("checked above"),
                        Err(_) => None,
                    })
                    .collect()
            })
            .collect(),
    };
    CostMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::mod_map::{MoDLayer, MoDStack};
    use crate::planner::plan_matrix;
    use crate::trajectory::TimeWindow;
    use proptest::prelude::*;

    fn world_with_band() -> (OccupancyGrid, MoDStack) {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 8, 6).unwrap();
        let grid = OccupancyGrid::free(spec.clone());
        let mut values = vec![0.0; spec.n_cells()];
        for y in 0..6 {
            values[spec.index(Cell::new(4, y))] = 0.25;
        }
        let layer = MoDLayer::new(TimeWindow::new(0.0, 600.0).unwrap(), values);
        let mods = MoDStack::new(spec, 0, vec![layer]).unwrap();
        (grid, mods)
    }

    fn path(cells: &[(usize, usize)]) -> GridPath {
        GridPath::from_cells(
            cells.iter().map(|&(x, y)| Cell::new(x, y)).collect(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn expected_cost_hand_case() {
        let (_, mods) = world_with_band();
        // 6 axial steps, one of them entering the p=0.25 band.
        let p = path(&[(1, 2), (2, 2), (3, 2), (4, 2), (5, 2), (6, 2), (7, 2)]);
        let w = Weights::new(2.0, 4.0).unwrap();
        let c = path_cost(&p, &mods, 10.0, w).unwrap();
        assert_eq!(c, 2.0 * 6.0 + 4.0 * 0.25);
    }

    #[test]
    fn start_cell_probability_not_charged() {
        let (_, mods) = world_with_band();
        // Path starting inside the band but leaving it immediately.
        let p = path(&[(4, 2), (5, 2)]);
        let c = path_cost(&p, &mods, 0.0, Weights::default()).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn single_cell_path_costs_zero() {
        let (_, mods) = world_with_band();
        let p = path(&[(4, 2)]);
        assert_eq!(path_cost(&p, &mods, 0.0, Weights::default()).unwrap(), 0.0);
    }

    #[test]
    fn zero_crowd_reduces_to_weighted_length() {
        let spec = GridSpec::new(0.0, 0.0, 0.5, 10, 10).unwrap();
        let mods = MoDStack::uniform_zero(spec, TimeWindow::new(0.0, 10.0).unwrap());
        let p = GridPath::from_cells(
            vec![Cell::new(0, 0), Cell::new(1, 1), Cell::new(2, 1)],
            0.5,
        )
        .unwrap();
        let w = Weights::new(1.15, 0.95).unwrap();
        let c = path_cost(&p, &mods, 0.0, w).unwrap();
        assert_eq!(c, 1.15 * p.length());
    }

    #[test]
    fn sampled_mode_is_seed_deterministic_and_brackets_expectation() {
        let (grid, mods) = world_with_band();
        let robots = [Cell::new(0, 0), Cell::new(0, 5)];
        let tasks = [Cell::new(7, 0), Cell::new(7, 5)];
        let paths = plan_matrix(&grid, &mods, &robots, &tasks, 1.0, 0.0).unwrap();
        let w = Weights::default();
        let a = cost_matrix(&paths, &mods, 0.0, w, CostMode::Sampled { seed: 9 }).unwrap();
        let b = cost_matrix(&paths, &mods, 0.0, w, CostMode::Sampled { seed: 9 }).unwrap();
        assert_eq!(a, b);
        let c = cost_matrix(&paths, &mods, 0.0, w, CostMode::Sampled { seed: 10 }).unwrap();
        // With another seed the matrix may differ, but every entry stays
        // within [w0·len, w0·len + w1·cells] of its path.
        for i in 0..2 {
            for j in 0..2 {
                let p = paths.get(i, j).as_ref().unwrap();
                let lo = p.length();
                let hi = lo + p.cells().len() as f64;
                for m in [&a, &c] {
                    let v = m.get(i, j).unwrap();
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn euclidean_baseline_hand_case() {
        let spec = GridSpec::new(-0.5, -0.5, 1.0, 10, 10).unwrap();
        let grid = OccupancyGrid::free(spec);
        let m = baseline_costs(
            &[Cell::new(0, 0)],
            &[Cell::new(3, 4)],
            &grid,
            BaselineMode::Euclidean,
        )
        .unwrap();
        assert_eq!(m.get(0, 0), Some(5.0));
    }

    #[test]
    fn path_length_baseline_detours_obstacles() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 7, 7).unwrap();
        let mut grid = OccupancyGrid::free(spec.clone());
        for y in 0..6 {
            grid.set_blocked(Cell::new(3, y), true);
        }
        let m = baseline_costs(
            &[Cell::new(0, 0)],
            &[Cell::new(6, 0)],
            &grid,
            BaselineMode::PathLength,
        )
        .unwrap();
        let e = baseline_costs(
            &[Cell::new(0, 0)],
            &[Cell::new(6, 0)],
            &grid,
            BaselineMode::Euclidean,
        )
        .unwrap();
        assert!(m.get(0, 0).unwrap() > e.get(0, 0).unwrap());
        // Fully sealed goal becomes an unreachable entry, not an error.
        let mut sealed = grid.clone();
        sealed.set_blocked(Cell::new(3, 6), true);
        let m = baseline_costs(
            &[Cell::new(0, 0)],
            &[Cell::new(6, 0)],
            &sealed,
            BaselineMode::PathLength,
        )
        .unwrap();
        assert_eq!(m.get(0, 0), None);
    }

    #[test]
    fn matrix_validation_and_csv() {
        assert!(matches!(
            CostMatrix::from_rows(vec![vec![Some(1.0)], vec![Some(2.0)]]),
            Err(CostError::RowLength { .. })
        ));
        assert!(matches!(
            CostMatrix::from_rows(vec![vec![Some(f64::NAN)]]),
            Err(CostError::NonFinite { .. })
        ));
        let m = CostMatrix::from_rows(vec![
            vec![Some(1.5), None],
            vec![Some(2.0), Some(0.25)],
        ])
        .unwrap();
        assert_eq!(
            m.to_csv(),
            "robot,task_0,task_1\n0,1.5,\n1,2,0.25\n"
        );
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(Weights::new(-0.1, 1.0).is_err());
        assert!(Weights::new(1.0, f64::NAN).is_err());
        assert!(Weights::new(0.0, 0.0).is_ok());
    }

    proptest! {
        // Scaling both weights by a power of two scales the cost exactly;
        // arbitrary scalars agree to tight relative tolerance.
        #[test]
        fn cost_linear_in_weights(
            w0 in 0.0_f64..4.0,
            w1 in 0.0_f64..4.0,
            k in -3i32..4,
            lam in 0.01_f64..8.0,
        ) {
            let (_, mods) = world_with_band();
            let p = path(&[(0, 0), (1, 1), (2, 1), (3, 2), (4, 2), (5, 3)]);
            let base = path_cost(&p, &mods, 1.0, Weights::new(w0, w1).unwrap()).unwrap();
            let pow = (2.0_f64).powi(k);
            let scaled = path_cost(
                &p, &mods, 1.0,
                Weights::new(w0 * pow, w1 * pow).unwrap(),
            ).unwrap();
            prop_assert_eq!(scaled, pow * base);
            let lam_scaled = path_cost(
                &p, &mods, 1.0,
                Weights::new(w0 * lam, w1 * lam).unwrap(),
            ).unwrap();
            prop_assert!((lam_scaled - lam * base).abs() <= 1e-12 * (1.0 + lam * base.abs()));
        }

        // Expected cost is monotone in each weight.
        #[test]
        fn cost_monotone_in_weights(
            w0 in 0.0_f64..4.0,
            w1 in 0.0_f64..4.0,
            bump in 0.1_f64..2.0,
        ) {
            let (_, mods) = world_with_band();
            let p = path(&[(2, 0), (3, 1), (4, 1), (5, 2)]);
            let base = path_cost(&p, &mods, 1.0, Weights::new(w0, w1).unwrap()).unwrap();
            let up0 = path_cost(&p, &mods, 1.0, Weights::new(w0 + bump, w1).unwrap()).unwrap();
            let up1 = path_cost(&p, &mods, 1.0, Weights::new(w0, w1 + bump).unwrap()).unwrap();
            prop_assert!(up0 >= base);
            prop_assert!(up1 >= base);
        }
    }
}
