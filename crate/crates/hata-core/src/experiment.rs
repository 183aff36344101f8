//! One end-to-end comparison run: plan a fleet, price the matrix, allocate,
//! and execute the allocation among recorded pedestrians.
//!
//! Three allocation methods are compared on identical scenarios:
//!
//! * `hata` — occupancy-thresholded planning plus the weighted
//!   distance/encounter cost;
//! * `path` — static shortest paths priced by length alone;
//! * `euclidean` — straight-line distances between cell centers (planning
//!   happens only afterwards, to have something to execute).
//!
//! Reported assignment time covers cost-matrix evaluation plus the solver,
//! with planning excluded; it is the median of a few repetitions of that
//! timed section, so one scheduler hiccup doesn't skew a cell.

use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::assign::{allocate, AssignError, Assignment, Objective};
use crate::cost::{
    baseline_costs, cost_matrix, BaselineMode, CostError, CostMatrix, CostMode, Weights,
};
use crate::grid::{Cell, OccupancyGrid};
use crate::mod_map::MoDStack;
use crate::planner::{plan_matrix, PlanError};
use crate::sim::{
    find_conflicts, pedestrian_track, profile_robot, simulate, MotionLimits, SimOutcome,
    SimPolicy, DEFAULT_DT, DEFAULT_PEDESTRIAN_RADIUS, DEFAULT_ROBOT_RADIUS, DEFAULT_TIMEOUT,
};
use crate::trajectory::Trajectory;

/// How many times the timed cost+allocate section repeats; the median is
/// reported.
pub const ASSIGN_TIMING_REPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Hata,
    PathLength,
    Euclidean,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Hata, Method::PathLength, Method::Euclidean];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Hata => "hata",
            Method::PathLength => "path",
            Method::Euclidean => "euclidean",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hata" => Ok(Method::Hata),
            "path" => Ok(Method::PathLength),
            "euclidean" => Ok(Method::Euclidean),
            other => Err(format!(
                "unknown method '{other}' (expected hata, path or euclidean)"
            )),
        }
    }
}

/// Execution parameters shared by every method on a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub timeout: f64,
    pub limits: MotionLimits,
    pub robot_radius: f64,
    pub pedestrian_radius: f64,
    pub policy: SimPolicy,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: DEFAULT_DT,
            timeout: DEFAULT_TIMEOUT,
            limits: MotionLimits::default(),
            robot_radius: DEFAULT_ROBOT_RADIUS,
            pedestrian_radius: DEFAULT_PEDESTRIAN_RADIUS,
            policy: SimPolicy::default(),
        }
    }
}

/// Everything a comparison run needs. Pedestrian trajectories are in
/// simulation time (seconds from mission start) and world meters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: OccupancyGrid,
    pub mods: MoDStack,
    pub robots: Vec<Cell>,
    pub tasks: Vec<Cell>,
    pub pedestrians: Vec<Trajectory>,
    pub delta: f64,
    pub weights: Weights,
    /// Mission time used for occupancy lookups while pricing.
    pub query_time: f64,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("costing failed: {0}")]
    Cost(#[from] CostError),
    #[error("allocation failed: {0}")]
    Assign(#[from] AssignError),
    #[error("assignment pairs robot {robot} with unreachable task {task}")]
    AssignedUnreachable { robot: usize, task: usize },
}

/// The results of one (scenario, method) cell.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub costs: CostMatrix,
    pub assignment: Assignment,
    pub outcome: SimOutcome,
    pub trace_hash: u64,
    /// Smallest end-of-tick center distance between two robots over the
    /// whole run; `None` with fewer than two robots.
    pub min_robot_robot_m: Option<f64>,
    /// Smallest end-of-tick robot↔pedestrian center distance; `None`
    /// without pedestrians.
    pub min_robot_ped_m: Option<f64>,
    /// Median wall time of cost evaluation + allocation, microseconds.
    pub assign_micros: f64,
    /// One-off wall time of building the plan matrix, microseconds.
    pub plan_micros: f64,
}

/// Minimum pairwise distances in a trace, split by pair kind.
fn min_separations(
    tracks: &[crate::sim::AgentTrack],
    frames: &[Vec<Option<(f64, f64)>>],
) -> (Option<f64>, Option<f64>) {
    use crate::sim::AgentKind;
    let mut min_rr: Option<f64> = None;
    let mut min_rp: Option<f64> = None;
    for frame in frames {
        for i in 0..tracks.len() {
            if tracks[i].kind != AgentKind::Robot {
                continue;
            }
            let Some(a) = frame[i] else { continue };
            for j in (i + 1)..tracks.len() {
                let Some(b) = frame[j] else { continue };
                let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                let slot = match tracks[j].kind {
                    AgentKind::Robot => &mut min_rr,
                    AgentKind::Pedestrian => &mut min_rp,
                };
                *slot = Some(slot.map_or(d, |m: f64| m.min(d)));
            }
        }
    }
    (min_rr, min_rp)
}

pub fn run_experiment(
    scenario: &Scenario,
    method: Method,
    params: &SimParams,
    objective: Objective,
) -> Result<RunRecord, ExperimentError> {
    // Execution paths: the crowd-aware method honors the scenario threshold,
    // the baselines drive the static shortest path (δ = 1 never blocks a
    // statically free cell).
    let exec_delta = match method {
        Method::Hata => scenario.delta,
        Method::PathLength | Method::Euclidean => 1.0,
    };
    let t_plan = Instant::now();
    let plans = plan_matrix(
        &scenario.grid,
        &scenario.mods,
        &scenario.robots,
        &scenario.tasks,
        exec_delta,
        scenario.query_time,
    )?;
    let plan_micros = t_plan.elapsed().as_secs_f64() * 1e6;

    let price_and_allocate = || -> Result<(CostMatrix, Assignment), ExperimentError> {
        let costs = match method {
            Method::Hata => cost_matrix(
                &plans,
                &scenario.mods,
                scenario.query_time,
                scenario.weights,
                CostMode::Expected,
            )?,
            Method::PathLength => cost_matrix(
                &plans,
                &scenario.mods,
                scenario.query_time,
                Weights::new(1.0, 0.0).expect("constant weights"),
                CostMode::Expected,
            )?,
            Method::Euclidean => baseline_costs(
                &scenario.robots,
                &scenario.tasks,
                &scenario.grid,
                BaselineMode::Euclidean,
            )?,
        };
        let assignment = allocate(&costs, objective)?;
        Ok((costs, assignment))
    };

    let mut elapsed = Vec::with_capacity(ASSIGN_TIMING_REPS);
    let mut last = None;
    for _ in 0..ASSIGN_TIMING_REPS {
        let t0 = Instant::now();
        let out = price_and_allocate()?;
        elapsed.push(t0.elapsed().as_secs_f64() * 1e6);
        last = Some(out);
    }
    elapsed.sort_by(f64::total_cmp);
    let assign_micros = elapsed[ASSIGN_TIMING_REPS / 2];
    let (costs, assignment) = last.expect("at least one timing repetition");

    let mut tracks = Vec::with_capacity(scenario.robots.len() + scenario.pedestrians.len());
    for (robot, &task) in assignment.mapping().iter().enumerate() {
        let path = plans
            .get(robot, task)
            .as_ref()
            .map_err(|_| ExperimentError::AssignedUnreachable { robot, task })?;
        tracks.push(profile_robot(
            path,
            scenario.grid.spec(),
            robot,
            params.limits,
            params.dt,
            params.robot_radius,
        ));
    }
    for (k, ped) in scenario.pedestrians.iter().enumerate() {
        tracks.push(pedestrian_track(
            ped,
            params.dt,
            scenario.robots.len() + k,
            params.pedestrian_radius,
        ));
    }
    let regions = find_conflicts(&tracks);
    let sim = simulate(&tracks, &regions, &params.policy, params.timeout, params.dt);
    let (min_robot_robot_m, min_robot_ped_m) = min_separations(&tracks, &sim.trace.positions);

    Ok(RunRecord {
        method,
        costs,
        assignment,
        outcome: sim.outcome,
        trace_hash: sim.trace.hash,
        min_robot_robot_m,
        min_robot_ped_m,
        assign_micros,
        plan_micros,
    })
}
