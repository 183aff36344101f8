//! Discrete-time execution of a planned fleet among recorded pedestrians.
//!
//! Robots follow their planned grid paths under a trapezoidal velocity
//! profile, sampled on a fixed `dt` lattice. Pedestrians replay their
//! recorded tracks exactly and never yield. Coordination is rule-based:
//!
//! * **Pedestrian-first.** A robot may not enter a robot–pedestrian
//!   conflict region while the pedestrian's (padded) occupancy window is
//!   pending, unless it can clear the region comfortably before the window
//!   opens. Robots moving along with the flow are exempt and simply follow.
//! * **Robot–robot.** Same-direction regions are handled by spacing alone;
//!   opposite/crossing regions are mutually exclusive, granted to the robot
//!   with the earlier free-flow entry time (ties to the lower id).
//! * **Spacing clamp.** Independent of regions, a robot never finishes a
//!   tick within the summed safety radii of any other agent; it halts
//!   instead. Robots are processed in id order against already-updated
//!   positions, so every end-of-tick pair is safe by construction.
//!
//! Blocked robots accumulate waiting time. Wait-for cycles among robots are
//! deadlocks; so is fleet-wide lack of progress for a watchdog period (time
//! legitimately spent waiting out a pedestrian window doesn't count).
//! Robots that fail — deadlock or mission timeout — freeze in place and
//! remain obstacles.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::grid::GridSpec;
use crate::planner::GridPath;
use crate::trajectory::Trajectory;

pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_TIMEOUT: f64 = 600.0;
pub const DEFAULT_ROBOT_RADIUS: f64 = 0.3;
pub const DEFAULT_PEDESTRIAN_RADIUS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Robot,
    Pedestrian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// A time-sampled agent. Robot points sit on `t = k·dt` from 0 and describe
/// the *free-flow* schedule; during execution a robot advances at most one
/// point per tick and may stall. Pedestrian points are absolute sim times.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub kind: AgentKind,
    pub id: usize,
    pub points: Vec<TimedPoint>,
    pub safety_radius: f64,
    /// Unimpeded completion time (robots); track duration (pedestrians).
    pub freeflow_time: f64,
}

/// Velocity/acceleration limits for robot motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLimits {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        MotionLimits {
            v_max: 1.0,
            a_max: 1.0,
        }
    }
}

/// Total time of a trapezoidal (or triangular, when the path is too short
/// to reach cruise speed) velocity profile over distance `l`.
pub fn profile_duration(l: f64, limits: MotionLimits) -> f64 {
    if l <= 0.0 {
        return 0.0;
    }
    let (v, a) = (limits.v_max, limits.a_max);
    let accel_dist = v * v / (2.0 * a);
    if l >= 2.0 * accel_dist {
        l / v + v / a
    } else {
        2.0 * (l / a).sqrt()
    }
}

/// Distance covered by time `t` under the profile for distance `l`.
fn profile_position(l: f64, limits: MotionLimits, t: f64) -> f64 {
    if l <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let (v, a) = (limits.v_max, limits.a_max);
    let accel_dist = v * v / (2.0 * a);
    let total = profile_duration(l, limits);
    if t >= total {
        return l;
    }
    if l >= 2.0 * accel_dist {
        let t1 = v / a;
        let t2 = total - t1;
        if t < t1 {
            0.5 * a * t * t
        } else if t < t2 {
            accel_dist + v * (t - t1)
        } else {
            l - 0.5 * a * (total - t) * (total - t)
        }
    } else {
        let half = total / 2.0;
        if t < half {
            0.5 * a * t * t
        } else {
            l - 0.5 * a * (total - t) * (total - t)
        }
    }
}

/// Sample a planned path as a robot track on the dt lattice.
pub fn profile_robot(
    path: &GridPath,
    spec: &GridSpec,
    id: usize,
    limits: MotionLimits,
    dt: f64,
    safety_radius: f64,
) -> AgentTrack {
    assert!(dt > 0.0 && limits.v_max > 0.0 && limits.a_max > 0.0);
    let centers: Vec<(f64, f64)> = path.cells().iter().map(|&c| spec.center_of(c)).collect();
    // Arc length accumulated per step from the step kind, consistent with
    // the path's own length metric.
    let res = path.resolution();
    let mut cum = vec![0.0f64];
    for w in path.cells().windows(2) {
        let diagonal = w[0].x != w[1].x && w[0].y != w[1].y;
        let step = if diagonal { res * crate::planner::SQRT_2 } else { res };
        cum.push(cum.last().unwrap() + step);
    }
    let l = *cum.last().unwrap();
    let total = profile_duration(l, limits);
    let n_ticks = if total <= 0.0 {
        0
    } else {
        (total / dt - 1e-9).ceil() as usize
    };
    let mut points = Vec::with_capacity(n_ticks + 1);
    let mut seg = 0usize;
    for k in 0..=n_ticks {
        let s = profile_position(l, limits, k as f64 * dt).min(l);
        while seg + 1 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let (x, y) = if centers.len() == 1 {
            centers[0]
        } else {
            let (a, b) = (centers[seg], centers[seg + 1]);
            let span = cum[seg + 1] - cum[seg];
            let u = ((s - cum[seg]) / span).clamp(0.0, 1.0);
            (a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1))
        };
        points.push(TimedPoint {
            t: k as f64 * dt,
            x,
            y,
        });
    }
    AgentTrack {
        kind: AgentKind::Robot,
        id,
        points,
        safety_radius,
        freeflow_time: total,
    }
}

/// Resample a recorded trajectory onto the global dt lattice (samples at
/// `k·dt` within the track's span, linearly interpolated).
pub fn pedestrian_track(traj: &Trajectory, dt: f64, id: usize, safety_radius: f64) -> AgentTrack {
    assert!(dt > 0.0);
    let k0 = (traj.start_time() / dt - 1e-9).ceil() as i64;
    let k1 = (traj.end_time() / dt + 1e-9).floor() as i64;
    let mut points = Vec::new();
    for k in k0..=k1 {
        let t = k as f64 * dt;
        let tc = t.clamp(traj.start_time(), traj.end_time());
        if let Some((x, y)) = traj.position_at(tc) {
            points.push(TimedPoint { t, x, y });
        }
    }
    let freeflow_time = match (points.first(), points.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    AgentTrack {
        kind: AgentKind::Pedestrian,
        id,
        points,
        safety_radius,
        freeflow_time,
    }
}

fn d2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// A spatio-temporal closeness region between two tracks: the bounding
/// index ranges of all sample pairs that come within the (motion-inflated)
/// sum of safety radii. `a < b` by track index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConflictRegion {
    pub a: usize,
    pub b: usize,
    pub a_entry: usize,
    pub a_exit: usize,
    pub b_entry: usize,
    pub b_exit: usize,
}

/// Largest distance between consecutive samples of a track — how far the
/// agent can move inside one tick.
fn max_step(points: &[TimedPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| d2((w[0].x, w[0].y), (w[1].x, w[1].y)).sqrt())
        .fold(0.0, f64::max)
}

/// Find conflict regions for every robot–robot and robot–pedestrian pair.
/// Close sample pairs are grouped into 8-connected components in (i, j)
/// index space; each component's bounding box is one region.
pub fn find_conflicts(tracks: &[AgentTrack]) -> Vec<ConflictRegion> {
    let mut regions = Vec::new();
    for a in 0..tracks.len() {
        for b in a + 1..tracks.len() {
            if tracks[a].kind == AgentKind::Pedestrian && tracks[b].kind == AgentKind::Pedestrian {
                continue;
            }
            let (ta, tb) = (&tracks[a], &tracks[b]);
            if ta.points.is_empty() || tb.points.is_empty() {
                continue;
            }
            // Inflate by per-tick travel so mid-tick approaches still land
            // inside a region.
            let reach =
                ta.safety_radius + tb.safety_radius + max_step(&ta.points) + max_step(&tb.points);
            let reach2 = reach * reach;

            // Spatial hash of b's samples with bucket size `reach`.
            let mut grid: std::collections::HashMap<(i64, i64), Vec<usize>> =
                std::collections::HashMap::new();
            let bucket = |x: f64, y: f64| ((x / reach).floor() as i64, (y / reach).floor() as i64);
            for (j, p) in tb.points.iter().enumerate() {
                grid.entry(bucket(p.x, p.y)).or_default().push(j);
            }
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for (i, p) in ta.points.iter().enumerate() {
                let (bx, by) = bucket(p.x, p.y);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(js) = grid.get(&(bx + dx, by + dy)) else {
                            continue;
                        };
                        for &j in js {
                            let q = &tb.points[j];
                            if d2((p.x, p.y), (q.x, q.y)) <= reach2 {
                                pairs.push((i, j));
                            }
                        }
                    }
                }
            }
            if pairs.is_empty() {
                continue;
            }
            pairs.sort_unstable();
            pairs.dedup();
            let index: std::collections::HashMap<(usize, usize), usize> =
                pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
            let mut seen = vec![false; pairs.len()];
            for start in 0..pairs.len() {
                if seen[start] {
                    continue;
                }
                // BFS over 8-neighbors in index space.
                let mut stack = vec![start];
                seen[start] = true;
                let (mut i_lo, mut i_hi) = (usize::MAX, 0usize);
                let (mut j_lo, mut j_hi) = (usize::MAX, 0usize);
                while let Some(k) = stack.pop() {
                    let (i, j) = pairs[k];
                    i_lo = i_lo.min(i);
                    i_hi = i_hi.max(i);
                    j_lo = j_lo.min(j);
                    j_hi = j_hi.max(j);
                    for di in -1i64..=1 {
                        for dj in -1i64..=1 {
                            let (ni, nj) = (i as i64 + di, j as i64 + dj);
                            if ni < 0 || nj < 0 {
                                continue;
                            }
                            if let Some(&k2) = index.get(&(ni as usize, nj as usize)) {
                                if !seen[k2] {
                                    seen[k2] = true;
                                    stack.push(k2);
                                }
                            }
                        }
                    }
                }
                regions.push(ConflictRegion {
                    a,
                    b,
                    a_entry: i_lo,
                    a_exit: i_hi,
                    b_entry: j_lo,
                    b_exit: j_hi,
                });
            }
        }
    }
    regions.sort_by_key(|r| (r.a, r.b, r.a_entry, r.b_entry));
    regions
}

/// Coordination parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimPolicy {
    /// Fleet-wide no-progress window (simulated seconds) before declaring
    /// deadlock; waiting on a pending pedestrian window doesn't count.
    pub watchdog: f64,
    /// Safety margin (seconds) a robot must clear a pedestrian region by,
    /// ahead of the window opening, to be allowed in early.
    pub entry_slack: f64,
}

impl Default for SimPolicy {
    fn default() -> Self {
        SimPolicy {
            watchdog: 30.0,
            entry_slack: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Timeout,
    Deadlock,
}

impl FailureKind {
    pub fn label(&self) -> &'static str {
        match self {
            FailureKind::Timeout => "timeout",
            FailureKind::Deadlock => "deadlock",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotOutcome {
    /// Index into the simulated track list.
    pub track: usize,
    pub id: usize,
    pub completed: bool,
    pub failure: Option<FailureKind>,
    /// Completion time for completed robots, failure time otherwise.
    pub travel_time: f64,
    pub waiting_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub robots: Vec<RobotOutcome>,
    /// Latest completion time; `None` when the fleet is empty or any robot
    /// failed.
    pub makespan: Option<f64>,
}

impl SimOutcome {
    pub fn completed_count(&self) -> usize {
        self.robots.iter().filter(|r| r.completed).count()
    }

    pub fn failure_count(&self) -> usize {
        self.robots.iter().filter(|r| r.failure.is_some()).count()
    }

    /// Mean travel time over completed robots.
    pub fn mean_travel_time(&self) -> Option<f64> {
        let done: Vec<f64> = self
            .robots
            .iter()
            .filter(|r| r.completed)
            .map(|r| r.travel_time)
            .collect();
        (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64)
    }

    pub fn mean_waiting_time(&self) -> Option<f64> {
        let done: Vec<f64> = self
            .robots
            .iter()
            .filter(|r| r.completed)
            .map(|r| r.waiting_time)
            .collect();
        (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64)
    }

    /// Per-robot rows with a fixed column order, for diff-based regression
    /// checks. The failure column is empty for robots that finished.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("robot_id,travel_time_s,waiting_time_s,failure\n");
        for r in &self.robots {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.id,
                r.travel_time,
                r.waiting_time,
                r.failure.map_or("", |f| f.label())
            ));
        }
        out
    }

    /// Fleet-level summary with a fixed key order; absent aggregates are
    /// `null` so the document stays machine-readable.
    pub fn summary_json(&self) -> String {
        let num = |v: Option<f64>| v.map_or("null".to_string(), |x| x.to_string());
        format!(
            "{{\"robots\": {}, \"completed\": {}, \"failed\": {}, \"makespan_s\": {}, \"mean_travel_s\": {}, \"mean_waiting_s\": {}}}\n",
            self.robots.len(),
            self.completed_count(),
            self.failure_count(),
            num(self.makespan),
            num(self.mean_travel_time()),
            num(self.mean_waiting_time()),
        )
    }
}

/// Per-tick positions of every track (`None` while absent), plus a hash for
/// cheap determinism comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub positions: Vec<Vec<Option<(f64, f64)>>>,
    pub dt: f64,
    pub hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub outcome: SimOutcome,
    pub trace: SimTrace,
}

enum GateKind {
    /// Mutual exclusion against another robot's index range.
    RobotMutex,
    /// Pedestrian occupancy window in absolute sim time.
    PedWindow { start: f64, end: f64 },
}

struct Gate {
    other: usize,
    my_entry: usize,
    my_exit: usize,
    other_entry: usize,
    other_exit: usize,
    kind: GateKind,
}

#[derive(Clone, Copy, PartialEq)]
enum Blocker {
    Track(usize),
    Window,
}

fn displacement(points: &[TimedPoint], lo: usize, hi: usize) -> (f64, f64) {
    let a = &points[lo.min(points.len() - 1)];
    let b = &points[hi.min(points.len() - 1)];
    (b.x - a.x, b.y - a.y)
}

/// Do the two agents move the same way through the region (cosine > 0.5)?
fn same_direction(a: (f64, f64), b: (f64, f64)) -> bool {
    let na = (a.0 * a.0 + a.1 * a.1).sqrt();
    let nb = (b.0 * b.0 + b.1 * b.1).sqrt();
    if na < 1e-9 || nb < 1e-9 {
        return false;
    }
    a.0 * b.0 + a.1 * b.1 > 0.5 * na * nb
}

/// Pedestrian lookup: present at `t`, and position (last sample at or
/// before `t`; samples are on the dt lattice).
fn ped_at(points: &[TimedPoint], t: f64) -> Option<(f64, f64)> {
    let first = points.first()?;
    let last = points.last()?;
    if t < first.t - 1e-9 || t > last.t + 1e-9 {
        return None;
    }
    let idx = points.partition_point(|p| p.t <= t + 1e-9);
    let p = &points[idx.saturating_sub(1).min(points.len() - 1)];
    Some((p.x, p.y))
}

/// Run the coordinated execution.
pub fn simulate(
    tracks: &[AgentTrack],
    regions: &[ConflictRegion],
    policy: &SimPolicy,
    timeout: f64,
    dt: f64,
) -> SimResult {
    assert!(dt > 0.0 && timeout > 0.0);
    let n = tracks.len();
    let robots: Vec<usize> = (0..n)
        .filter(|&i| tracks[i].kind == AgentKind::Robot)
        .collect();

    // Prepare gates per robot track.
    let mut gates: Vec<Vec<Gate>> = (0..n).map(|_| Vec::new()).collect();
    for r in regions {
        let (ta, tb) = (&tracks[r.a], &tracks[r.b]);
        let disp_a = displacement(&ta.points, r.a_entry, r.a_exit);
        let disp_b = displacement(&tb.points, r.b_entry, r.b_exit);
        if same_direction(disp_a, disp_b) {
            continue; // spacing clamp alone handles following traffic
        }
        match (ta.kind, tb.kind) {
            (AgentKind::Robot, AgentKind::Robot) => {
                gates[r.a].push(Gate {
                    other: r.b,
                    my_entry: r.a_entry,
                    my_exit: r.a_exit,
                    other_entry: r.b_entry,
                    other_exit: r.b_exit,
                    kind: GateKind::RobotMutex,
                });
                gates[r.b].push(Gate {
                    other: r.a,
                    my_entry: r.b_entry,
                    my_exit: r.b_exit,
                    other_entry: r.a_entry,
                    other_exit: r.a_exit,
                    kind: GateKind::RobotMutex,
                });
            }
            (AgentKind::Robot, AgentKind::Pedestrian) => {
                let start = tb.points[r.b_entry].t - dt;
                let end = tb.points[r.b_exit].t + dt;
                gates[r.a].push(Gate {
                    other: r.b,
                    my_entry: r.a_entry,
                    my_exit: r.a_exit,
                    other_entry: r.b_entry,
                    other_exit: r.b_exit,
                    kind: GateKind::PedWindow { start, end },
                });
            }
            (AgentKind::Pedestrian, AgentKind::Robot) => {
                let start = ta.points[r.a_entry].t - dt;
                let end = ta.points[r.a_exit].t + dt;
                gates[r.b].push(Gate {
                    other: r.a,
                    my_entry: r.b_entry,
                    my_exit: r.b_exit,
                    other_entry: r.a_entry,
                    other_exit: r.a_exit,
                    kind: GateKind::PedWindow { start, end },
                });
            }
            (AgentKind::Pedestrian, AgentKind::Pedestrian) => unreachable!(),
        }
    }

    struct RState {
        idx: usize,
        waiting: f64,
        done: Option<f64>,
        failed: Option<(FailureKind, f64)>,
    }
    let mut st: Vec<RState> = (0..n)
        .map(|i| RState {
            idx: 0,
            waiting: 0.0,
            done: (tracks[i].kind == AgentKind::Robot && tracks[i].points.len() <= 1)
                .then_some(0.0),
            failed: None,
        })
        .collect();

    let active = |s: &RState| s.done.is_none() && s.failed.is_none();
    let frame = |st: &[RState], t: f64| -> Vec<Option<(f64, f64)>> {
        (0..n)
            .map(|i| match tracks[i].kind {
                AgentKind::Robot => {
                    let p = &tracks[i].points[st[i].idx.min(tracks[i].points.len() - 1)];
                    Some((p.x, p.y))
                }
                AgentKind::Pedestrian => ped_at(&tracks[i].points, t),
            })
            .collect()
    };

    let mut frames = vec![frame(&st, 0.0)];
    let mut last_progress = 0.0f64;
    let mut last_ped_pending = 0.0f64;
    let max_ticks = (timeout / dt).ceil() as usize + 2;

    for k in 0..max_ticks {
        if robots.iter().all(|&i| !active(&st[i])) {
            break;
        }
        let t = k as f64 * dt;
        let t_next = (k + 1) as f64 * dt;

        // Phase A: region gates, evaluated against tick-start state.
        let mut cause: Vec<Option<Blocker>> = vec![None; n];
        for &i in &robots {
            if !active(&st[i]) {
                continue;
            }
            let idx = st[i].idx;
            for g in &gates[i] {
                let entering = idx < g.my_entry && idx + 1 >= g.my_entry;
                if !entering {
                    continue;
                }
                match g.kind {
                    GateKind::PedWindow { start, end } => {
                        if t < end - 1e-9 {
                            let transit = (g.my_exit - idx) as f64 * dt;
                            if t + transit + policy.entry_slack > start {
                                cause[i] = Some(Blocker::Window);
                            }
                        }
                    }
                    GateKind::RobotMutex => {
                        let o = &st[g.other];
                        let o_idx = o.idx;
                        let other_inside =
                            o_idx >= g.other_entry && o_idx <= g.other_exit;
                        if other_inside {
                            cause[i] = Some(Blocker::Track(g.other));
                        } else if active(o)
                            && o_idx < g.other_entry
                            && o_idx + 1 >= g.other_entry
                        {
                            // Simultaneous arrival: earlier planned entry
                            // wins; ties to the lower track index.
                            let mine = g.my_entry as f64 * dt;
                            let theirs = g.other_entry as f64 * dt;
                            if theirs < mine || (theirs == mine && g.other < i) {
                                cause[i] = Some(Blocker::Track(g.other));
                            }
                        }
                    }
                }
                if cause[i].is_some() {
                    break;
                }
            }
        }

        // Phase B: moves with the spacing clamp, ascending track order.
        // Robots are compared against already-updated positions of earlier
        // ids; pedestrians against their end-of-tick positions.
        let mut cur_pos: Vec<Option<(f64, f64)>> = frame(&st, t);
        let ped_next: Vec<Option<(f64, f64)>> = (0..n)
            .map(|i| match tracks[i].kind {
                AgentKind::Pedestrian => ped_at(&tracks[i].points, t_next),
                AgentKind::Robot => None,
            })
            .collect();
        let mut advanced = false;
        let mut ped_pending = false;
        for &i in &robots {
            if !active(&st[i]) {
                continue;
            }
            if let Some(b) = cause[i] {
                st[i].waiting += dt;
                if b == Blocker::Window {
                    ped_pending = true;
                }
                continue;
            }
            let next = tracks[i].points[st[i].idx + 1];
            let next_pos = (next.x, next.y);
            let mut clamped = None;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let other = match tracks[j].kind {
                    AgentKind::Robot => cur_pos[j],
                    AgentKind::Pedestrian => ped_next[j],
                };
                let Some(op) = other else { continue };
                let rsum = tracks[i].safety_radius + tracks[j].safety_radius;
                if d2(next_pos, op) < (rsum - 1e-9) * (rsum - 1e-9) {
                    clamped = Some(j);
                    break;
                }
            }
            if let Some(j) = clamped {
                cause[i] = Some(Blocker::Track(j));
                st[i].waiting += dt;
                continue;
            }
            st[i].idx += 1;
            cur_pos[i] = Some(next_pos);
            advanced = true;
            if st[i].idx + 1 == tracks[i].points.len() {
                st[i].done = Some(t_next);
            }
        }

        // Deadlock: cycles in the (functional) wait-for graph over robots.
        {
            let succ: Vec<Option<usize>> = (0..n)
                .map(|i| match cause[i] {
                    Some(Blocker::Track(j))
                        if tracks[j].kind == AgentKind::Robot && active(&st[i]) =>
                    {
                        Some(j)
                    }
                    _ => None,
                })
                .collect();
            let mut color = vec![0u8; n]; // 0 unseen, 1 on path, 2 done
            for &start in &robots {
                if color[start] != 0 || !active(&st[start]) {
                    continue;
                }
                let mut path: Vec<usize> = Vec::new();
                let mut cur = start;
                loop {
                    if color[cur] == 1 {
                        // Found a cycle: everything from `cur` in path.
                        let pos = path.iter().position(|&x| x == cur).unwrap();
                        for &m in &path[pos..] {
                            if active(&st[m]) {
                                st[m].failed = Some((FailureKind::Deadlock, t_next));
                            }
                        }
                        break;
                    }
                    if color[cur] == 2 {
                        break;
                    }
                    color[cur] = 1;
                    path.push(cur);
                    match succ[cur] {
                        Some(nxt) if active(&st[nxt]) => cur = nxt,
                        _ => break,
                    }
                }
                for &m in &path {
                    color[m] = 2;
                }
            }
        }

        // Watchdog and timeout.
        if advanced {
            last_progress = t_next;
        }
        if ped_pending {
            last_ped_pending = t_next;
        }
        let stall_ref = last_progress.max(last_ped_pending);
        if t_next - stall_ref >= policy.watchdog - 1e-9 {
            for &i in &robots {
                if active(&st[i]) {
                    st[i].failed = Some((FailureKind::Deadlock, t_next));
                }
            }
        }
        if t_next >= timeout - 1e-9 {
            for &i in &robots {
                if active(&st[i]) {
                    st[i].failed = Some((FailureKind::Timeout, t_next));
                }
            }
        }

        frames.push(frame(&st, t_next));
    }

    let outcomes: Vec<RobotOutcome> = robots
        .iter()
        .map(|&i| {
            let s = &st[i];
            match (s.done, s.failed) {
                (Some(t_done), _) => RobotOutcome {
                    track: i,
                    id: tracks[i].id,
                    completed: true,
                    failure: None,
                    travel_time: t_done,
                    waiting_time: s.waiting,
                },
                (None, Some((kind, t_fail))) => RobotOutcome {
                    track: i,
                    id: tracks[i].id,
                    completed: false,
                    failure: Some(kind),
                    travel_time: t_fail,
                    waiting_time: s.waiting,
                },
                (None, None) => unreachable!("loop exits only when no robot is active"),
            }
        })
        .collect();
    let makespan = if outcomes.is_empty() || outcomes.iter().any(|r| r.failure.is_some()) {
        None
    } else {
        outcomes
            .iter()
            .map(|r| r.travel_time)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    };

    let mut hasher = DefaultHasher::new();
    for f in &frames {
        for p in f {
            match p {
                Some((x, y)) => {
                    1u8.hash(&mut hasher);
                    x.to_bits().hash(&mut hasher);
                    y.to_bits().hash(&mut hasher);
                }
                None => 0u8.hash(&mut hasher),
            }
        }
    }
    SimResult {
        outcome: SimOutcome {
            robots: outcomes,
            makespan,
        },
        trace: SimTrace {
            positions: frames,
            dt,
            hash: hasher.finish(),
        },
    }
}
