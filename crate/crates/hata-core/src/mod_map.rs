//! Maps of Dynamics: per-cell, per-time-window probabilities of human
//! presence, built from recorded pedestrian trajectories.
//!
//! For each trajectory and each cell, rasterization produces the set of time
//! intervals the (kernel-dilated) trajectory spends in the cell. A layer's
//! probability for a cell is the measure of the union of all such intervals
//! across every trajectory, divided by the window length. Two pedestrians
//! covering the same interval therefore count once — occupancy is "someone
//! is here", not a traffic count.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Cell, GridSpec};
use crate::trajectory::{TimeWindow, Trajectory};

/// Default spatial dilation of trajectories, in cells (50 cm at 5 cm
/// resolution: a person occupies more than a point).
pub const DEFAULT_KERNEL_RADIUS: usize = 10;
/// Default layer duration in seconds (30 minutes).
pub const DEFAULT_LAYER_DURATION: f64 = 1800.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModError {
    #[error("layer {layer} has {got} values, grid wants {want}")]
    LayerSize { layer: usize, got: usize, want: usize },
    #[error("layer {layer} window does not follow the previous layer contiguously")]
    WindowOrder { layer: usize },
    #[error("layer duration must be positive and finite, got {0}")]
    BadDuration(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("cell ({x}, {y}) outside the map")]
    OutOfBounds { x: usize, y: usize },
    #[error("time {0} outside the stack's coverage")]
    TimeOutsideCoverage(f64),
}

/// Offsets (di, dj) of all cells whose center lies within `radius` cells of
/// the origin cell's center: a rasterized disk, the footprint one occupied
/// cell dilates to.
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let r2 = r * r;
    let mut out = Vec::new();
    for dj in -r..=r {
        for di in -r..=r {
            if di * di + dj * dj <= r2 {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Per-cell occupancy intervals of one trajectory, after kernel dilation.
/// Intervals per cell are sorted, disjoint and non-touching.
#[derive(Debug, Default)]
pub struct DwellMap {
    intervals: HashMap<Cell, Vec<(f64, f64)>>,
    /// Trajectory time spans that fell outside the grid (skipped, counted).
    pub skipped_spans: usize,
}

impl DwellMap {
    pub fn intervals(&self, cell: Cell) -> &[(f64, f64)] {
        self.intervals.get(&cell).map_or(&[], Vec::as_slice)
    }

    /// Total time the trajectory dwells in `cell`.
    pub fn total_dwell(&self, cell: Cell) -> f64 {
        self.intervals(cell).iter().map(|(a, b)| b - a).sum()
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut v: Vec<Cell> = self.intervals.keys().copied().collect();
        v.sort();
        v
    }

    fn into_intervals(self) -> HashMap<Cell, Vec<(f64, f64)>> {
        self.intervals
    }
}

/// Crossing times of grid lines `origin + k*res` strictly between `p0` and
/// `p1`, linearly interpolated in time. Lines outside the grid extent are
/// ignored (`k` clamped to `[0, count]`): travel beyond the map needs no
/// subdivision.
fn axis_crossings(
    p0: f64,
    p1: f64,
    t0: f64,
    t1: f64,
    origin: f64,
    res: f64,
    count: usize,
    out: &mut Vec<f64>,
) {
    if p0 == p1 {
        return;
    }
    let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
    let k_lo = (((lo - origin) / res).floor() as i64 + 1).max(0);
    let k_hi = (((hi - origin) / res).ceil() as i64 - 1).min(count as i64);
    for k in k_lo..=k_hi {
        let g = origin + k as f64 * res;
        if g > lo && g < hi {
            out.push(t0 + (g - p0) / (p1 - p0) * (t1 - t0));
        }
    }
}

/// Rasterize a trajectory onto the grid: walk each segment, cut it at every
/// grid-line crossing, attribute each sub-span to the cell containing its
/// midpoint (the midpoint rule keeps boundary touches unambiguous), dilate
/// by the disk kernel, and merge the per-cell interval lists.
///
/// Callers building a windowed layer should clip the trajectory first; the
/// whole input span is rasterized as-is.
pub fn rasterize_dwell(traj: &Trajectory, spec: &GridSpec, kernel_radius: usize) -> DwellMap {
    let offsets = disk_offsets(kernel_radius);
    let samples = traj.samples();
    let mut raw: HashMap<Cell, Vec<(f64, f64)>> = HashMap::new();
    let mut skipped = 0usize;

    // (cell-or-outside, start, end) spans, coalesced across segment joints.
    let mut current: Option<(Option<Cell>, f64, f64)> = None;
    let mut cuts: Vec<f64> = Vec::new();

    let flush = |span: (Option<Cell>, f64, f64),
                 raw: &mut HashMap<Cell, Vec<(f64, f64)>>,
                 skipped: &mut usize| {
        let (cell, a, b) = span;
        match cell {
            Some(c) => {
                for &(di, dj) in &offsets {
                    let nx = c.x as i64 + di;
                    let ny = c.y as i64 + dj;
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    let n = Cell::new(nx as usize, ny as usize);
                    if spec.contains(n) {
                        raw.entry(n).or_default().push((a, b));
                    }
                }
            }
            None => *skipped += 1,
        }
    };

    for pair in samples.windows(2) {
        let (s0, s1) = (pair[0], pair[1]);
        cuts.clear();
        cuts.push(s0.t);
        axis_crossings(
            s0.x, s1.x, s0.t, s1.t, spec.origin_x, spec.resolution, spec.width, &mut cuts,
        );
        axis_crossings(
            s0.y, s1.y, s0.t, s1.t, spec.origin_y, spec.resolution, spec.height, &mut cuts,
        );
        cuts.push(s1.t);
        cuts.sort_by(f64::total_cmp);
        for w in 0..cuts.len() - 1 {
            let (ta, tb) = (cuts[w], cuts[w + 1]);
            if tb <= ta {
                continue; // zero-length sliver at a corner crossing
            }
            let tm = 0.5 * (ta + tb);
            let u = (tm - s0.t) / (s1.t - s0.t);
            let x = s0.x + u * (s1.x - s0.x);
            let y = s0.y + u * (s1.y - s0.y);
            let cell = spec.cell_of(x, y);
            match &mut current {
                Some((c, _, end)) if *c == cell && *end == ta => *end = tb,
                _ => {
                    if let Some(span) = current.take() {
                        flush(span, &mut raw, &mut skipped);
                    }
                    current = Some((cell, ta, tb));
                }
            }
        }
    }
    if let Some(span) = current.take() {
        flush(span, &mut raw, &mut skipped);
    }

    let mut intervals = HashMap::with_capacity(raw.len());
    for (cell, mut list) in raw {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        intervals.insert(cell, merge_sorted(list));
    }
    DwellMap {
        intervals,
        skipped_spans: skipped,
    }
}

/// Merge a start-sorted interval list; touching intervals coalesce.
fn merge_sorted(list: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(list.len());
    for (a, b) in list {
        match out.last_mut() {
            Some((_, end)) if a <= *end => *end = end.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn union_length(sorted_disjoint: &[(f64, f64)]) -> f64 {
    sorted_disjoint.iter().map(|(a, b)| b - a).sum()
}

/// One time window's occupancy-probability field.
#[derive(Debug, Clone, PartialEq)]
pub struct MoDLayer {
    window: TimeWindow,
    values: Vec<f64>,
}

impl MoDLayer {
    pub fn new(window: TimeWindow, values: Vec<f64>) -> Self {
        MoDLayer { window, values }
    }

    pub fn window(&self) -> TimeWindow {
        self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, spec: &GridSpec, cell: Cell) -> f64 {
        self.values[spec.index(cell)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Build one layer: clip every trajectory to the window, rasterize, pool the
/// occupancy intervals of all trajectories per cell, and normalize the union
/// measure by the window duration.
pub fn build_layer(
    trajectories: &[Trajectory],
    window: TimeWindow,
    spec: &GridSpec,
    kernel_radius: usize,
) -> MoDLayer {
    let mut pooled: HashMap<Cell, Vec<(f64, f64)>> = HashMap::new();
    for traj in trajectories {
        let Some(clipped) = traj.clip_to_window(window) else {
            continue;
        };
        for (cell, ivs) in rasterize_dwell(&clipped, spec, kernel_radius).into_intervals() {
            pooled.entry(cell).or_default().extend(ivs);
        }
    }
    let mut values = vec![0.0; spec.n_cells()];
    for (cell, mut list) in pooled {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        let p = union_length(&merge_sorted(list)) / window.duration();
        values[spec.index(cell)] = p.clamp(0.0, 1.0);
    }
    MoDLayer { window, values }
}

/// A time-ordered stack of occupancy layers over one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MoDStack {
    spec: GridSpec,
    kernel_radius: usize,
    layers: Vec<MoDLayer>,
}

impl MoDStack {
    /// Validates that layers tile time contiguously and match the grid size.
    pub fn new(
        spec: GridSpec,
        kernel_radius: usize,
        layers: Vec<MoDLayer>,
    ) -> Result<Self, ModError> {
        for (i, layer) in layers.iter().enumerate() {
            if layer.values.len() != spec.n_cells() {
                return Err(ModError::LayerSize {
                    layer: i,
                    got: layer.values.len(),
                    want: spec.n_cells(),
                });
            }
            if i > 0 {
                let prev_end = layers[i - 1].window.end();
                if (layer.window.start() - prev_end).abs() > 1e-9 {
                    return Err(ModError::WindowOrder { layer: i });
                }
            }
        }
        Ok(MoDStack {
            spec,
            kernel_radius,
            layers,
        })
    }

    /// A single all-zero layer covering `window`: "no humans observed".
    pub fn uniform_zero(spec: GridSpec, window: TimeWindow) -> Self {
        let values = vec![0.0; spec.n_cells()];
        MoDStack {
            spec,
            kernel_radius: 0,
            layers: vec![MoDLayer { window, values }],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn kernel_radius(&self) -> usize {
        self.kernel_radius
    }

    pub fn layers(&self) -> &[MoDLayer] {
        &self.layers
    }

    /// Overall covered time span, `None` for an empty stack.
    pub fn coverage(&self) -> Option<(f64, f64)> {
        let first = self.layers.first()?;
        let last = self.layers.last()?;
        Some((first.window.start(), last.window.end()))
    }

    /// The layer whose window contains `time`.
    pub fn layer_at(&self, time: f64) -> Result<&MoDLayer, QueryError> {
        let idx = self
            .layers
            .partition_point(|l| l.window.start() <= time);
        if idx == 0 {
            return Err(QueryError::TimeOutsideCoverage(time));
        }
        let layer = &self.layers[idx - 1];
        if !layer.window.contains(time) {
            return Err(QueryError::TimeOutsideCoverage(time));
        }
        Ok(layer)
    }

    /// Occupancy probability of `cell` at `time`.
    pub fn query(&self, cell: Cell, time: f64) -> Result<f64, QueryError> {
        if !self.spec.contains(cell) {
            return Err(QueryError::OutOfBounds {
                x: cell.x,
                y: cell.y,
            });
        }
        Ok(self.layer_at(time)?.value(&self.spec, cell))
    }
}

/// Build a full stack over `coverage`, one layer per `layer_duration`
/// seconds. The final layer is truncated to the coverage end and normalized
/// by its own (shorter) duration.
pub fn build_stack(
    trajectories: &[Trajectory],
    coverage: TimeWindow,
    layer_duration: f64,
    spec: &GridSpec,
    kernel_radius: usize,
) -> Result<MoDStack, ModError> {
    if !(layer_duration.is_finite() && layer_duration > 0.0) {
        return Err(ModError::BadDuration(layer_duration));
    }
    let mut windows = Vec::new();
    let mut i = 0usize;
    loop {
        let start = coverage.start() + i as f64 * layer_duration;
        let remaining = coverage.end() - start;
        if remaining <= 1e-9 {
            break;
        }
        let d = layer_duration.min(remaining);
        windows.push(TimeWindow::new(start, d).expect("valid sub-window"));
        i += 1;
    }
    let layers: Vec<MoDLayer> = windows
        .into_par_iter()
        .map(|w| build_layer(trajectories, w, spec, kernel_radius))
        .collect();
    MoDStack::new(spec.clone(), kernel_radius, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Sample;
    use proptest::prelude::*;

    fn spec10() -> GridSpec {
        GridSpec::new(0.0, 0.0, 1.0, 10, 10).unwrap()
    }

    fn traj(id: u64, pts: &[(f64, f64, f64)]) -> Trajectory {
        Trajectory::new(
            id,
            pts.iter().map(|&(t, x, y)| Sample { t, x, y }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn disk_offset_counts() {
        // Lattice points inside radius r (Gauss circle numbers).
        assert_eq!(disk_offsets(0).len(), 1);
        assert_eq!(disk_offsets(1).len(), 5);
        assert_eq!(disk_offsets(2).len(), 13);
        assert_eq!(disk_offsets(10).len(), 317);
    }

    #[test]
    fn stationary_dwell_lands_in_one_cell() {
        let s = spec10();
        let t = traj(1, &[(0.0, 2.5, 3.5), (8.0, 2.5, 3.5)]);
        let d = rasterize_dwell(&t, &s, 0);
        assert_eq!(d.cells(), vec![Cell::new(2, 3)]);
        assert_eq!(d.intervals(Cell::new(2, 3)), &[(0.0, 8.0)]);
        assert_eq!(d.skipped_spans, 0);
    }

    #[test]
    fn straight_crossing_splits_time_by_length() {
        let s = spec10();
        // Constant speed 1 m/s along x through cells 0..4 at y=0.
        let t = traj(1, &[(0.0, 0.0, 0.5), (5.0, 5.0, 0.5)]);
        let d = rasterize_dwell(&t, &s, 0);
        for cx in 0..5 {
            let iv = d.intervals(Cell::new(cx, 0));
            assert_eq!(iv.len(), 1, "cell {cx}");
            let (a, b) = iv[0];
            assert!((a - cx as f64).abs() < 1e-12);
            // Last cell is reached at t=4 and the segment ends at t=5.
            let want_b = if cx == 4 { 5.0 } else { cx as f64 + 1.0 };
            assert!((b - want_b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_dilates_and_clips_at_map_edge() {
        let s = spec10();
        let t = traj(1, &[(0.0, 0.5, 0.5), (2.0, 0.5, 0.5)]);
        let d = rasterize_dwell(&t, &s, 1);
        // Radius-1 disk at the corner: (0,0),(1,0),(0,1) stay inside.
        assert_eq!(
            d.cells(),
            vec![Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 0)]
        );
    }

    #[test]
    fn outside_grid_spans_counted_not_mapped() {
        let s = spec10();
        let t = traj(1, &[(0.0, -5.0, 0.5), (10.0, 5.0, 0.5)]);
        let d = rasterize_dwell(&t, &s, 0);
        assert_eq!(d.skipped_spans, 1);
        // Inside portion still rasterized: enters the grid at x=0, t=5.
        assert_eq!(d.intervals(Cell::new(0, 0)), &[(5.0, 6.0)]);
    }

    #[test]
    fn overlapping_presence_counts_once() {
        let s = spec10();
        let w = TimeWindow::new(0.0, 1800.0).unwrap();
        // Two people in the same cell for the same 900 s.
        let a = traj(1, &[(0.0, 4.5, 4.5), (900.0, 4.5, 4.5)]);
        let b = traj(2, &[(0.0, 4.5, 4.5), (900.0, 4.5, 4.5)]);
        let layer = build_layer(&[a, b], w, &s, 0);
        assert_eq!(layer.value(&s, Cell::new(4, 4)), 0.5);
    }

    #[test]
    fn duplicate_trajectory_is_idempotent() {
        let s = spec10();
        let w = TimeWindow::new(0.0, 60.0).unwrap();
        let t = traj(1, &[(0.0, 1.2, 7.4), (30.0, 6.8, 2.2)]);
        let once = build_layer(std::slice::from_ref(&t), w, &s, 2);
        let twice = build_layer(&[t.clone(), t], w, &s, 2);
        assert_eq!(once, twice);
    }

    #[test]
    fn stack_windows_and_truncated_tail() {
        let s = spec10();
        let cov = TimeWindow::new(0.0, 2500.0).unwrap();
        // Present in the truncated last window for half its duration.
        let t = traj(1, &[(1800.0, 3.5, 3.5), (2150.0, 3.5, 3.5)]);
        let stack = build_stack(&[t], cov, 1800.0, &s, 0).unwrap();
        assert_eq!(stack.layers().len(), 2);
        assert_eq!(stack.layers()[1].window().duration(), 700.0);
        assert_eq!(stack.query(Cell::new(3, 3), 2000.0).unwrap(), 0.5);
        assert_eq!(stack.query(Cell::new(3, 3), 100.0).unwrap(), 0.0);
        assert!(matches!(
            stack.query(Cell::new(3, 3), 2500.0),
            Err(QueryError::TimeOutsideCoverage(_))
        ));
        assert!(matches!(
            stack.query(Cell::new(3, 3), -0.1),
            Err(QueryError::TimeOutsideCoverage(_))
        ));
        assert!(matches!(
            stack.query(Cell::new(30, 3), 100.0),
            Err(QueryError::OutOfBounds { .. })
        ));
        assert_eq!(stack.coverage(), Some((0.0, 2500.0)));
    }

    #[test]
    fn stack_validation() {
        let s = spec10();
        let w0 = TimeWindow::new(0.0, 10.0).unwrap();
        let w_gap = TimeWindow::new(11.0, 10.0).unwrap();
        let l0 = MoDLayer::new(w0, vec![0.0; 100]);
        let bad_len = MoDLayer::new(w0, vec![0.0; 99]);
        assert!(matches!(
            MoDStack::new(s.clone(), 0, vec![bad_len]),
            Err(ModError::LayerSize { .. })
        ));
        let l1 = MoDLayer::new(w_gap, vec![0.0; 100]);
        assert!(matches!(
            MoDStack::new(s.clone(), 0, vec![l0, l1]),
            Err(ModError::WindowOrder { layer: 1 })
        ));
    }

    proptest! {
        // Probabilities always land in [0,1], whatever the traffic.
        #[test]
        fn probabilities_bounded(
            walks in proptest::collection::vec(
                proptest::collection::vec((-2.0_f64..12.0, -2.0_f64..12.0), 2..8),
                1..5,
            ),
            dur in 5.0_f64..60.0,
            radius in 0usize..3,
        ) {
            let s = spec10();
            let w = TimeWindow::new(0.0, dur).unwrap();
            let trajs: Vec<Trajectory> = walks
                .iter()
                .enumerate()
                .map(|(i, pts)| {
                    let samples = pts
                        .iter()
                        .enumerate()
                        .map(|(k, &(x, y))| Sample { t: k as f64 * dur / 4.0, x, y })
                        .collect();
                    Trajectory::new(i as u64, samples).unwrap()
                })
                .collect();
            let layer = build_layer(&trajs, w, &s, radius);
            for &v in layer.values() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        // Dwell time per cell never exceeds the trajectory's own duration,
        // and with radius 0 total dwell over all cells never exceeds it
        // either (spans partition the timeline).
        #[test]
        fn dwell_conservation(
            pts in proptest::collection::vec((-3.0_f64..13.0, -3.0_f64..13.0), 2..10),
        ) {
            let s = spec10();
            let samples = pts
                .iter()
                .enumerate()
                .map(|(k, &(x, y))| Sample { t: k as f64, x, y })
                .collect();
            let t = Trajectory::new(0, samples).unwrap();
            let d = rasterize_dwell(&t, &s, 0);
            let mut total = 0.0;
            for c in d.cells() {
                let dw = d.total_dwell(c);
                prop_assert!(dw <= t.duration() + 1e-9);
                total += dw;
            }
            prop_assert!(total <= t.duration() + 1e-9);
        }
    }
}
