//! `hata run-batch`: execute the comparison sweep described by a batch file
//! — every (method × fleet × δ × window × run) cell — and leave behind raw
//! rows, aggregate tables, timings and per-run outcome exports.
//!
//! Everything except `timings.csv` is a pure function of the batch file, so
//! two runs of the same batch produce identical trees (that file carries
//! wall-clock measurements and is excluded from determinism comparisons).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;

use hata_core::assign::Objective;
use hata_core::cost::Weights;
use hata_core::experiment::{run_experiment, Method, Scenario, SimParams};
use hata_core::io::{load_scenario, write_atomic};
use hata_core::sim::{MotionLimits, SimPolicy};

use crate::gen::{corridor_scenario, open_scenario};
use crate::CliError;

pub const BATCH_FORMAT: &str = "hata-batch/1";

#[derive(Debug, Args)]
pub struct RunBatchArgs {
    /// Batch description (`hata-batch/1` TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for the result tables.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (overrides the config; 0 = one per core).
    #[arg(long)]
    pub workers: Option<usize>,
}

// ---------------------------------------------------------------------------
// Batch description

/// A named evaluation time: occupancy lookups during pricing are made at
/// `query_time` in map time.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPreset {
    pub name: String,
    pub query_time: f64,
}

/// Where the per-run scenarios come from.
#[derive(Debug, Clone)]
pub enum ScenarioTemplate {
    /// Random open map; `ped_lines` vertical walker streams (0 = obstacles
    /// instead of people).
    Open { ped_lines: usize },
    /// The corridor-with-detour family (fixed 3-robot fleet).
    Corridor,
    /// A fixed scenario file; fleets subset its robot/task lists.
    File { scenario: Box<Scenario> },
}

/// One full sweep: the cross product of methods, fleet sizes, thresholds,
/// windows and seeded runs over a scenario template.
#[derive(Debug, Clone)]
pub struct ExperimentBatch {
    pub template: ScenarioTemplate,
    pub fleet_sizes: Vec<usize>,
    pub deltas: Vec<f64>,
    pub methods: Vec<Method>,
    pub windows: Vec<WindowPreset>,
    pub runs: usize,
    pub seed_base: u64,
    pub weights: Weights,
    pub objective: Objective,
    pub params: SimParams,
    pub per_run_outcomes: bool,
}

// ---------------------------------------------------------------------------
// Config file schema

#[derive(Debug, Deserialize)]
struct BatchFile {
    format: String,
    seed_base: u64,
    runs: usize,
    fleet_sizes: Vec<usize>,
    deltas: Vec<f64>,
    methods: Vec<String>,
    #[serde(default = "default_objective")]
    objective: String,
    #[serde(default = "default_w0")]
    w0: f64,
    #[serde(default = "default_w1")]
    w1: f64,
    #[serde(default)]
    workers: usize,
    #[serde(default)]
    per_run_outcomes: bool,
    scenario: ScenarioSection,
    sim: Option<SimSection>,
    #[serde(default)]
    windows: Vec<WindowSection>,
}

fn default_objective() -> String {
    "sum".to_string()
}

fn default_w0() -> f64 {
    1.0
}

fn default_w1() -> f64 {
    1.5
}

#[derive(Debug, Deserialize)]
struct ScenarioSection {
    /// "open", "corridor" or "file".
    family: String,
    #[serde(default)]
    ped_lines: usize,
    /// Scenario file, relative to the batch file ("file" family).
    path: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(default)]
struct SimSection {
    dt: Option<f64>,
    timeout: Option<f64>,
    v_max: Option<f64>,
    a_max: Option<f64>,
    robot_radius: Option<f64>,
    pedestrian_radius: Option<f64>,
    watchdog: Option<f64>,
    entry_slack: Option<f64>,
}

impl SimSection {
    fn into_params(self) -> SimParams {
        let d = SimParams::default();
        SimParams {
            dt: self.dt.unwrap_or(d.dt),
            timeout: self.timeout.unwrap_or(d.timeout),
            limits: MotionLimits {
                v_max: self.v_max.unwrap_or(d.limits.v_max),
                a_max: self.a_max.unwrap_or(d.limits.a_max),
            },
            robot_radius: self.robot_radius.unwrap_or(d.robot_radius),
            pedestrian_radius: self.pedestrian_radius.unwrap_or(d.pedestrian_radius),
            policy: SimPolicy {
                watchdog: self.watchdog.unwrap_or(d.policy.watchdog),
                entry_slack: self.entry_slack.unwrap_or(d.policy.entry_slack),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
struct WindowSection {
    name: String,
    #[serde(default)]
    query_time: f64,
}

fn window_name_ok(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Parse and validate a batch file. Returns the batch plus the configured
/// worker count.
pub fn load_batch(path: &Path) -> Result<(ExperimentBatch, usize), CliError> {
    let bad = |msg: String| CliError::data(anyhow!("{}: {msg}", path.display()));
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::data(anyhow!("{}: {e}", path.display())))?;
    let file: BatchFile =
        toml::from_str(&text).map_err(|e| CliError::data(anyhow!("{}: {e}", path.display())))?;
    if file.format != BATCH_FORMAT {
        return Err(bad(format!(
            "expected format '{BATCH_FORMAT}', found '{}'",
            file.format
        )));
    }
    if file.runs == 0 {
        return Err(bad("runs must be at least 1".to_string()));
    }
    if file.fleet_sizes.is_empty() || file.fleet_sizes.contains(&0) {
        return Err(bad("fleet_sizes must be a nonempty list of positive counts".to_string()));
    }
    if file.deltas.is_empty()
        || file
            .deltas
            .iter()
            .any(|d| !d.is_finite() || *d <= 0.0 || *d > 1.0)
    {
        return Err(bad("deltas must be a nonempty list within (0, 1]".to_string()));
    }
    if file.methods.is_empty() {
        return Err(bad("methods must be a nonempty list".to_string()));
    }
    let methods: Vec<Method> = file
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    let objective = match file.objective.as_str() {
        "sum" => Objective::Sum,
        "minmax" => Objective::MinMax,
        other => return Err(bad(format!("unknown objective '{other}' (expected sum or minmax)"))),
    };
    let weights = Weights::new(file.w0, file.w1).map_err(|e| bad(e.to_string()))?;

    let mut windows: Vec<WindowPreset> = file
        .windows
        .iter()
        .map(|w| WindowPreset {
            name: w.name.clone(),
            query_time: w.query_time,
        })
        .collect();
    if windows.is_empty() {
        windows.push(WindowPreset {
            name: "full".to_string(),
            query_time: 0.0,
        });
    }
    for w in &windows {
        if !window_name_ok(&w.name) {
            return Err(bad(format!(
                "window name '{}' must be nonempty [A-Za-z0-9_-]",
                w.name
            )));
        }
        if !w.query_time.is_finite() {
            return Err(bad(format!("window '{}' has a non-finite query_time", w.name)));
        }
    }
    {
        let mut names: Vec<&str> = windows.iter().map(|w| w.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != windows.len() {
            return Err(bad("window names must be unique".to_string()));
        }
    }

    let mut params = file.sim.map(SimSection::into_params);
    let template = match file.scenario.family.as_str() {
        "open" => ScenarioTemplate::Open {
            ped_lines: file.scenario.ped_lines,
        },
        "corridor" => {
            if file.fleet_sizes.iter().any(|&f| f != 3) {
                return Err(bad("the corridor family runs a fixed 3-robot fleet; set fleet_sizes = [3]".to_string()));
            }
            ScenarioTemplate::Corridor
        }
        "file" => {
            let rel = file
                .scenario
                .path
                .as_ref()
                .ok_or_else(|| bad("scenario.family = \"file\" needs scenario.path".to_string()))?;
            let base = path.parent().unwrap_or(Path::new(""));
            let (scenario, file_params) =
                load_scenario(&base.join(rel)).map_err(|e| CliError::data(anyhow!(e)))?;
            let cap = scenario.robots.len().min(scenario.tasks.len());
            if let Some(&f) = file.fleet_sizes.iter().find(|&&f| f > cap) {
                return Err(bad(format!(
                    "fleet size {f} exceeds the {cap} robot/task pairs in {rel}"
                )));
            }
            params = params.or(Some(file_params));
            ScenarioTemplate::File {
                scenario: Box::new(scenario),
            }
        }
        other => return Err(bad(format!("unknown scenario family '{other}' (expected open, corridor or file)"))),
    };

    let batch = ExperimentBatch {
        template,
        fleet_sizes: file.fleet_sizes,
        deltas: file.deltas,
        methods,
        windows,
        runs: file.runs,
        seed_base: file.seed_base,
        weights,
        objective,
        params: params.unwrap_or_default(),
        per_run_outcomes: file.per_run_outcomes,
    };
    Ok((batch, file.workers))
}

// ---------------------------------------------------------------------------
// Execution

/// Indices of one cell into the batch's lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub window: usize,
    pub fleet: usize,
    pub delta: usize,
    pub method: usize,
    pub run: usize,
}

/// Everything one successful cell contributes to the tables.
#[derive(Debug, Clone)]
pub struct CellRow {
    pub n_robots: usize,
    pub n_completed: usize,
    pub n_failed: usize,
    pub mission_s: Option<f64>,
    pub waiting_s: Option<f64>,
    pub makespan_s: Option<f64>,
    pub objective_sum: f64,
    pub min_robot_robot_m: Option<f64>,
    pub min_robot_ped_m: Option<f64>,
    pub trace_hash: u64,
    pub assign_us: f64,
    pub plan_us: f64,
    /// Per-run outcome export (CSV body, JSON summary) when requested.
    pub outcome_files: Option<(String, String)>,
}

pub struct BatchOutputs {
    pub cells: Vec<(CellKey, Result<CellRow, String>)>,
    pub table: ResultsTable,
}

impl BatchOutputs {
    pub fn harness_failures(&self) -> usize {
        self.cells.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// Hata rows are keyed by their threshold; the baselines ignore δ.
pub fn method_label(method: Method, delta: f64) -> String {
    match method {
        Method::Hata => format!("hata d={delta}"),
        Method::PathLength | Method::Euclidean => method.label().to_string(),
    }
}

fn run_panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic with non-string payload".to_string()
    }
}

/// Build the scenario shared by every (δ, method) cell of one
/// (window, fleet, run) triple.
fn instantiate(
    batch: &ExperimentBatch,
    window: &WindowPreset,
    fleet: usize,
    seed: u64,
) -> Result<Scenario, String> {
    let built = catch_unwind(AssertUnwindSafe(|| match &batch.template {
        ScenarioTemplate::Open { ped_lines } => open_scenario(seed, fleet, *ped_lines, 1.0),
        ScenarioTemplate::Corridor => corridor_scenario(seed, 1.0),
        ScenarioTemplate::File { scenario } => {
            let mut scn = (**scenario).clone();
            scn.robots.truncate(fleet);
            scn.tasks.truncate(fleet);
            scn
        }
    }));
    match built {
        Ok(mut scn) => {
            scn.weights = batch.weights;
            scn.query_time = window.query_time;
            Ok(scn)
        }
        Err(payload) => Err(format!(
            "scenario generation failed: {}",
            run_panic_message(payload)
        )),
    }
}

/// Run every cell of the batch on the current rayon pool.
pub fn execute(batch: &ExperimentBatch) -> BatchOutputs {
    let (nf, nr) = (batch.fleet_sizes.len(), batch.runs);

    // Scenarios are shared across (delta, method): one per (window, fleet,
    // run), seeded with seed_base + run.
    let triples: Vec<(usize, usize, usize)> = (0..batch.windows.len())
        .flat_map(|w| (0..nf).flat_map(move |f| (0..nr).map(move |r| (w, f, r))))
        .collect();
    let scenarios: Vec<Result<Scenario, String>> = triples
        .par_iter()
        .map(|&(w, f, r)| {
            instantiate(
                batch,
                &batch.windows[w],
                batch.fleet_sizes[f],
                batch.seed_base + r as u64,
            )
        })
        .collect();
    let scenario_of = |w: usize, f: usize, r: usize| &scenarios[(w * nf + f) * nr + r];

    let mut keys: Vec<CellKey> = Vec::new();
    for window in 0..batch.windows.len() {
        for fleet in 0..nf {
            for delta in 0..batch.deltas.len() {
                for method in 0..batch.methods.len() {
                    for run in 0..nr {
                        keys.push(CellKey {
                            window,
                            fleet,
                            delta,
                            method,
                            run,
                        });
                    }
                }
            }
        }
    }

    let cells: Vec<(CellKey, Result<CellRow, String>)> = keys
        .par_iter()
        .map(|&key| {
            let row = scenario_of(key.window, key.fleet, key.run)
                .clone()
                .and_then(|mut scn| {
                    scn.delta = batch.deltas[key.delta];
                    let method = batch.methods[key.method];
                    let rec = catch_unwind(AssertUnwindSafe(|| {
                        run_experiment(&scn, method, &batch.params, batch.objective)
                    }))
                    .map_err(|p| format!("run panicked: {}", run_panic_message(p)))?
                    .map_err(|e| e.to_string())?;
                    let outcome_files = batch
                        .per_run_outcomes
                        .then(|| (rec.outcome.to_csv(), rec.outcome.summary_json()));
                    Ok(CellRow {
                        n_robots: scn.robots.len(),
                        n_completed: rec.outcome.completed_count(),
                        n_failed: rec.outcome.failure_count(),
                        mission_s: rec.outcome.mean_travel_time(),
                        waiting_s: rec.outcome.mean_waiting_time(),
                        makespan_s: rec.outcome.makespan,
                        objective_sum: rec.assignment.objective_sum(),
                        min_robot_robot_m: rec.min_robot_robot_m,
                        min_robot_ped_m: rec.min_robot_ped_m,
                        trace_hash: rec.trace_hash,
                        assign_us: rec.assign_micros,
                        plan_us: rec.plan_micros,
                        outcome_files,
                    })
                });
            (key, row)
        })
        .collect();

    let table = ResultsTable::from_cells(batch, &cells);
    BatchOutputs { cells, table }
}

// ---------------------------------------------------------------------------
// Aggregation

/// Group means per (window, δ, fleet, method), in batch list order.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub window: String,
    pub delta: f64,
    pub fleet: usize,
    pub method: Method,
    pub label: String,
    /// Successful runs contributing to the means.
    pub runs: usize,
    pub failures_pct: Option<f64>,
    pub mission_s: Option<f64>,
    pub waiting_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<AggregateRow>,
}

impl ResultsTable {
    pub fn from_cells(
        batch: &ExperimentBatch,
        cells: &[(CellKey, Result<CellRow, String>)],
    ) -> ResultsTable {
        #[derive(Default)]
        struct Acc {
            runs: usize,
            robots: usize,
            failed: usize,
            mission: Vec<f64>,
            waiting: Vec<f64>,
        }
        let mut groups: BTreeMap<(usize, usize, usize, usize), Acc> = BTreeMap::new();
        for (key, row) in cells {
            let Ok(row) = row else { continue };
            let acc = groups
                .entry((key.window, key.fleet, key.delta, key.method))
                .or_default();
            acc.runs += 1;
            acc.robots += row.n_robots;
            acc.failed += row.n_failed;
            acc.mission.extend(row.mission_s);
            acc.waiting.extend(row.waiting_s);
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let mut rows = Vec::new();
        for window in 0..batch.windows.len() {
            for fleet in 0..batch.fleet_sizes.len() {
                for delta in 0..batch.deltas.len() {
                    for method in 0..batch.methods.len() {
                        let acc = groups.remove(&(window, fleet, delta, method));
                        let acc = acc.unwrap_or_default();
                        rows.push(AggregateRow {
                            window: batch.windows[window].name.clone(),
                            delta: batch.deltas[delta],
                            fleet: batch.fleet_sizes[fleet],
                            method: batch.methods[method],
                            label: method_label(batch.methods[method], batch.deltas[delta]),
                            runs: acc.runs,
                            failures_pct: (acc.robots > 0)
                                .then(|| 100.0 * acc.failed as f64 / acc.robots as f64),
                            mission_s: mean(&acc.mission),
                            waiting_s: mean(&acc.waiting),
                        });
                    }
                }
            }
        }
        ResultsTable { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window,delta,fleet,method,label,runs,failures_pct,mission_s,waiting_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.window,
                r.delta,
                r.fleet,
                r.method.label(),
                r.label,
                r.runs,
                opt(r.failures_pct),
                opt(r.mission_s),
                opt(r.waiting_s),
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Rendering and output

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Quote a free-text CSV field (errors can contain commas and quotes).
fn csv_quote(s: &str) -> String {
    let cleaned = s.replace('\n', "; ").replace('\r', "");
    format!("\"{}\"", cleaned.replace('"', "\"\""))
}

pub fn render_raw_runs(batch: &ExperimentBatch, out: &BatchOutputs) -> String {
    let mut csv = String::from(
        "window,delta,fleet,run,seed,method,n_robots,n_completed,n_failed,mission_s,waiting_s,makespan_s,objective_sum,min_robot_robot_m,min_robot_ped_m,trace_hash\n",
    );
    for (key, row) in &out.cells {
        let Ok(r) = row else { continue };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:016x}\n",
            batch.windows[key.window].name,
            batch.deltas[key.delta],
            batch.fleet_sizes[key.fleet],
            key.run,
            batch.seed_base + key.run as u64,
            batch.methods[key.method].label(),
            r.n_robots,
            r.n_completed,
            r.n_failed,
            opt(r.mission_s),
            opt(r.waiting_s),
            opt(r.makespan_s),
            r.objective_sum,
            opt(r.min_robot_robot_m),
            opt(r.min_robot_ped_m),
            r.trace_hash,
        ));
    }
    csv
}

pub fn render_timings(batch: &ExperimentBatch, out: &BatchOutputs) -> String {
    let mut csv = String::from("window,delta,fleet,run,method,assign_us,plan_us\n");
    for (key, row) in &out.cells {
        let Ok(r) = row else { continue };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            batch.windows[key.window].name,
            batch.deltas[key.delta],
            batch.fleet_sizes[key.fleet],
            key.run,
            batch.methods[key.method].label(),
            r.assign_us,
            r.plan_us,
        ));
    }
    csv
}

pub fn render_failures(batch: &ExperimentBatch, out: &BatchOutputs) -> String {
    let mut csv = String::from("window,delta,fleet,run,seed,method,error\n");
    for (key, row) in &out.cells {
        let Err(msg) = row else { continue };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            batch.windows[key.window].name,
            batch.deltas[key.delta],
            batch.fleet_sizes[key.fleet],
            key.run,
            batch.seed_base + key.run as u64,
            batch.methods[key.method].label(),
            csv_quote(msg),
        ));
    }
    csv
}

fn cell_stem(batch: &ExperimentBatch, key: &CellKey) -> String {
    format!(
        "{}_f{}_d{}_{}_r{}",
        batch.windows[key.window].name,
        batch.fleet_sizes[key.fleet],
        batch.deltas[key.delta],
        batch.methods[key.method].label(),
        key.run,
    )
}

fn write_outputs(dir: &Path, batch: &ExperimentBatch, out: &BatchOutputs) -> Result<(), CliError> {
    let io_err = |e: hata_core::io::IoError| CliError::runtime(anyhow!(e));
    write_atomic(&dir.join("raw_runs.csv"), render_raw_runs(batch, out).as_bytes())
        .map_err(io_err)?;
    write_atomic(&dir.join("timings.csv"), render_timings(batch, out).as_bytes())
        .map_err(io_err)?;
    write_atomic(
        &dir.join("results_table.csv"),
        out.table.to_csv().as_bytes(),
    )
    .map_err(io_err)?;
    write_atomic(
        &dir.join("harness_failures.csv"),
        render_failures(batch, out).as_bytes(),
    )
    .map_err(io_err)?;
    if batch.per_run_outcomes {
        let runs_dir = dir.join("runs");
        for (key, row) in &out.cells {
            let Ok(r) = row else { continue };
            let Some((csv, json)) = &r.outcome_files else {
                continue;
            };
            let stem = cell_stem(batch, key);
            write_atomic(&runs_dir.join(format!("{stem}.csv")), csv.as_bytes()).map_err(io_err)?;
            write_atomic(&runs_dir.join(format!("{stem}.json")), json.as_bytes())
                .map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn run(args: &RunBatchArgs) -> Result<(), CliError> {
    let (batch, cfg_workers) = load_batch(&args.config)?;
    let workers = args.workers.unwrap_or(cfg_workers);
    let outputs = if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::runtime(anyhow!(e)))?;
        pool.install(|| execute(&batch))
    } else {
        execute(&batch)
    };
    write_outputs(&args.out, &batch, &outputs)?;
    println!(
        "batch complete: {} cells, {} harness failures, {} aggregate rows -> {}",
        outputs.cells.len(),
        outputs.harness_failures(),
        outputs.table.rows.len(),
        args.out.display(),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_batch() -> ExperimentBatch {
        ExperimentBatch {
            template: ScenarioTemplate::Open { ped_lines: 0 },
            fleet_sizes: vec![2],
            deltas: vec![0.6],
            methods: vec![Method::PathLength],
            windows: vec![WindowPreset {
                name: "full".to_string(),
                query_time: 0.0,
            }],
            runs: 3,
            seed_base: 50,
            weights: Weights::new(1.0, 1.5).unwrap(),
            objective: Objective::Sum,
            params: SimParams::default(),
            per_run_outcomes: false,
        }
    }

    #[test]
    fn one_cell_three_runs_three_rows_one_aggregate() {
        let batch = tiny_batch();
        let out = execute(&batch);
        assert_eq!(out.cells.len(), 3);
        assert_eq!(out.harness_failures(), 0);
        let raw = render_raw_runs(&batch, &out);
        assert_eq!(raw.lines().count(), 4); // header + 3 rows
        assert_eq!(out.table.rows.len(), 1);
        let agg = &out.table.rows[0];
        assert_eq!(agg.runs, 3);
        assert_eq!(agg.label, "path");

        // The aggregate is the hand-computed mean of the raw mission column.
        let missions: Vec<f64> = raw
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(9).unwrap().parse::<f64>().unwrap())
            .collect();
        let mean = missions.iter().sum::<f64>() / missions.len() as f64;
        assert!((agg.mission_s.unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn raw_rows_are_seed_deterministic() {
        let batch = tiny_batch();
        let a = render_raw_runs(&batch, &execute(&batch));
        let b = render_raw_runs(&batch, &execute(&batch));
        assert_eq!(a, b);
        assert!(a.contains(",50,path,"));
    }

    #[test]
    fn labels_carry_delta_only_for_hata() {
        assert_eq!(method_label(Method::Hata, 0.65), "hata d=0.65");
        assert_eq!(method_label(Method::PathLength, 0.65), "path");
        assert_eq!(method_label(Method::Euclidean, 0.5), "euclidean");
    }

    #[test]
    fn cell_stems_are_filesystem_safe() {
        let batch = tiny_batch();
        let stem = cell_stem(
            &batch,
            &CellKey {
                window: 0,
                fleet: 0,
                delta: 0,
                method: 0,
                run: 2,
            },
        );
        assert_eq!(stem, "full_f2_d0.6_path_r2");
    }

    #[test]
    fn csv_quoting_escapes_quotes_and_newlines() {
        assert_eq!(csv_quote("plain"), "\"plain\"");
        assert_eq!(csv_quote("a \"b\",\nc"), "\"a \"\"b\"\",; c\"");
    }
}
