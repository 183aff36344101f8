//! Metric occupancy grids shared by the map builder, planner and simulator.
//!
//! A [`GridSpec`] fixes the world-to-cell transform: the grid origin is the
//! world position of the *lower-left corner* of cell (0, 0), cells are square
//! with side `resolution` meters, and cell (x, y) spans
//! `[origin + x*res, origin + (x+1)*res)` on each axis. Cell centers sit at
//! `origin + (x + 0.5) * res`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer cell coordinates. `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("grid dimensions must be nonzero, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("occupancy data has {got} cells, spec wants {want}")]
    DataSize { got: usize, want: usize },
    #[error("cell ({x}, {y}) outside {width}x{height} grid")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
}

/// Geometry of a grid: origin, resolution and extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GridError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::BadResolution(resolution));
        }
        if width == 0 || height == 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        Ok(GridSpec {
            origin_x,
            origin_y,
            resolution,
            width,
            height,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    /// Row-major linear index of `cell`. Callers must pass an in-bounds cell.
    pub fn index(&self, cell: Cell) -> usize {
        debug_assert!(self.contains(cell));
        cell.y * self.width + cell.x
    }

    /// Cell containing the world point, or `None` when outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        let cx = (x - self.origin_x) / self.resolution;
        let cy = (y - self.origin_y) / self.resolution;
        if cx < 0.0 || cy < 0.0 {
            return None;
        }
        let (cx, cy) = (cx.floor() as usize, cy.floor() as usize);
        let cell = Cell::new(cx, cy);
        self.contains(cell).then_some(cell)
    }

    /// World coordinates of the center of `cell`.
    pub fn center_of(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin_x + (cell.x as f64 + 0.5) * self.resolution,
            self.origin_y + (cell.y as f64 + 0.5) * self.resolution,
        )
    }

    /// Euclidean distance between two cell centers, in meters.
    pub fn center_distance(&self, a: Cell, b: Cell) -> f64 {
        let (ax, ay) = self.center_of(a);
        let (bx, by) = self.center_of(b);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }
}

/// Static obstacle map over a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    spec: GridSpec,
    blocked: Vec<bool>,
}

impl OccupancyGrid {
    /// Build from a row-major blocked mask.
    pub fn new(spec: GridSpec, blocked: Vec<bool>) -> Result<Self, GridError> {
        if blocked.len() != spec.n_cells() {
            return Err(GridError::DataSize {
                got: blocked.len(),
                want: spec.n_cells(),
            });
        }
        Ok(OccupancyGrid { spec, blocked })
    }

    /// A grid with every cell free.
    pub fn free(spec: GridSpec) -> Self {
        let blocked = vec![false; spec.n_cells()];
        OccupancyGrid { spec, blocked }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.blocked[self.spec.index(cell)]
    }

    pub fn set_blocked(&mut self, cell: Cell, value: bool) {
        let idx = self.spec.index(cell);
        self.blocked[idx] = value;
    }

    pub fn blocked_mask(&self) -> &[bool] {
        &self.blocked
    }

    pub fn n_blocked(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new(-1.0, 2.0, 0.5, 8, 4).unwrap()
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(matches!(
            GridSpec::new(0.0, 0.0, 0.0, 3, 3),
            Err(GridError::BadResolution(_))
        ));
        assert!(matches!(
            GridSpec::new(0.0, 0.0, -0.1, 3, 3),
            Err(GridError::BadResolution(_))
        ));
        assert!(matches!(
            GridSpec::new(0.0, 0.0, f64::NAN, 3, 3),
            Err(GridError::BadResolution(_))
        ));
        assert!(matches!(
            GridSpec::new(0.0, 0.0, 1.0, 0, 3),
            Err(GridError::EmptyGrid { .. })
        ));
    }

    #[test]
    fn world_cell_round_trip() {
        let s = spec();
        // Center of every cell maps back to that cell.
        for y in 0..s.height {
            for x in 0..s.width {
                let c = Cell::new(x, y);
                let (wx, wy) = s.center_of(c);
                assert_eq!(s.cell_of(wx, wy), Some(c));
            }
        }
    }

    #[test]
    fn cell_of_edges() {
        let s = spec();
        // Origin corner is inside cell (0,0); the far corner is outside.
        assert_eq!(s.cell_of(-1.0, 2.0), Some(Cell::new(0, 0)));
        assert_eq!(s.cell_of(-1.0 + 8.0 * 0.5, 2.0), None);
        assert_eq!(s.cell_of(-1.0001, 2.5), None);
        // Lower/left boundaries of interior cells belong to the upper cell.
        assert_eq!(s.cell_of(-0.5, 2.0), Some(Cell::new(1, 0)));
    }

    #[test]
    fn center_distance_is_metric_scaled() {
        let s = GridSpec::new(-0.5, -0.5, 1.0, 10, 10).unwrap();
        let d = s.center_distance(Cell::new(0, 0), Cell::new(3, 4));
        assert_eq!(d, 5.0);
    }

    #[test]
    fn occupancy_mask_checked() {
        let s = spec();
        assert!(OccupancyGrid::new(s.clone(), vec![false; 3]).is_err());
        let mut g = OccupancyGrid::free(s);
        assert!(!g.is_blocked(Cell::new(7, 3)));
        g.set_blocked(Cell::new(7, 3), true);
        assert!(g.is_blocked(Cell::new(7, 3)));
        assert_eq!(g.n_blocked(), 1);
    }
}
