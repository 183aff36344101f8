//! `hata report`: fold one or more batch output directories into the
//! comparison tables — failure rate, mission time and waiting time per
//! method and fleet size — plus plot-ready assignment-time and
//! total-execution-time series.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;

use hata_core::io::write_atomic;

use crate::CliError;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Batch output directories (each holding raw_runs.csv and timings.csv).
    #[arg(required = true)]
    pub batch_dirs: Vec<PathBuf>,
    /// Output directory for the report tables.
    #[arg(long)]
    pub out: PathBuf,
}

// ---------------------------------------------------------------------------
// Input parsing

#[derive(Debug, Clone)]
struct RawRow {
    window: String,
    label: Label,
    fleet: usize,
    n_robots: usize,
    n_failed: usize,
    mission_s: Option<f64>,
    waiting_s: Option<f64>,
    makespan_s: Option<f64>,
}

#[derive(Debug, Clone)]
struct TimingRow {
    label: Label,
    fleet: usize,
    assign_us: f64,
}

/// A method row key: baselines collapse over δ, hata keeps one row per δ.
#[derive(Debug, Clone, PartialEq)]
enum Label {
    Euclidean,
    Path,
    Hata(f64),
}

impl Label {
    fn parse(method: &str, delta: f64, ctx: &RowCtx) -> Result<Label, CliError> {
        match method {
            "euclidean" => Ok(Label::Euclidean),
            "path" => Ok(Label::Path),
            "hata" => Ok(Label::Hata(delta)),
            other => Err(ctx.bad(format!("unknown method '{other}'"))),
        }
    }

    /// Sort rank: euclidean, path, then hata by ascending δ.
    fn rank(&self) -> (u8, f64) {
        match self {
            Label::Euclidean => (0, 0.0),
            Label::Path => (1, 0.0),
            Label::Hata(d) => (2, *d),
        }
    }

    fn text(&self) -> String {
        match self {
            Label::Euclidean => "euclidean".to_string(),
            Label::Path => "path".to_string(),
            Label::Hata(d) => format!("hata d={d}"),
        }
    }
}

/// Where a parse error happened, for messages that name the file.
struct RowCtx {
    file: String,
    line: usize,
}

impl RowCtx {
    fn bad(&self, msg: String) -> CliError {
        CliError::data(anyhow!("{}: line {}: {msg}", self.file, self.line))
    }
}

/// Map required column names to their indices; a deleted column is reported
/// by name against the offending file.
fn header_index(file: &str, header: &str, required: &[&str]) -> Result<Vec<usize>, CliError> {
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    required
        .iter()
        .map(|name| {
            cols.iter().position(|c| c == name).ok_or_else(|| {
                CliError::data(anyhow!("{file}: missing column '{name}'"))
            })
        })
        .collect()
}

fn split_row<'a>(text: &'a str, idx: &[usize], ctx: &RowCtx) -> Result<Vec<&'a str>, CliError> {
    let fields: Vec<&str> = text.trim_end().split(',').collect();
    let need = idx.iter().max().copied().unwrap_or(0);
    if fields.len() <= need {
        return Err(ctx.bad(format!(
            "expected at least {} fields, found {}",
            need + 1,
            fields.len()
        )));
    }
    Ok(idx.iter().map(|&i| fields[i]).collect())
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, ctx: &RowCtx) -> Result<T, CliError> {
    s.parse::<T>()
        .map_err(|_| ctx.bad(format!("bad {what} value '{s}'")))
}

fn parse_opt(s: &str, what: &str, ctx: &RowCtx) -> Result<Option<f64>, CliError> {
    if s.is_empty() {
        return Ok(None);
    }
    parse_num::<f64>(s, what, ctx).map(Some)
}

fn parse_raw_runs(file: &str, text: &str) -> Result<Vec<RawRow>, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::data(anyhow!("{file}: empty file")))?;
    let idx = header_index(
        file,
        header,
        &[
            "window", "delta", "fleet", "method", "n_robots", "n_failed", "mission_s",
            "waiting_s", "makespan_s",
        ],
    )?;
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ctx = RowCtx {
            file: file.to_string(),
            line: k + 2,
        };
        let f = split_row(line, &idx, &ctx)?;
        let delta: f64 = parse_num(f[1], "delta", &ctx)?;
        rows.push(RawRow {
            window: f[0].to_string(),
            label: Label::parse(f[3], delta, &ctx)?,
            fleet: parse_num(f[2], "fleet", &ctx)?,
            n_robots: parse_num(f[4], "n_robots", &ctx)?,
            n_failed: parse_num(f[5], "n_failed", &ctx)?,
            mission_s: parse_opt(f[6], "mission_s", &ctx)?,
            waiting_s: parse_opt(f[7], "waiting_s", &ctx)?,
            makespan_s: parse_opt(f[8], "makespan_s", &ctx)?,
        });
    }
    Ok(rows)
}

fn parse_timings(file: &str, text: &str) -> Result<Vec<TimingRow>, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::data(anyhow!("{file}: empty file")))?;
    let idx = header_index(file, header, &["delta", "fleet", "method", "assign_us"])?;
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ctx = RowCtx {
            file: file.to_string(),
            line: k + 2,
        };
        let f = split_row(line, &idx, &ctx)?;
        let delta: f64 = parse_num(f[0], "delta", &ctx)?;
        rows.push(TimingRow {
            label: Label::parse(f[2], delta, &ctx)?,
            fleet: parse_num(f[1], "fleet", &ctx)?,
            assign_us: parse_num(f[3], "assign_us", &ctx)?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Aggregation

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Distinct labels in presentation order (euclidean, path, hata by δ).
fn label_order(rows: &[RawRow]) -> Vec<Label> {
    let mut labels: Vec<Label> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label) {
            labels.push(r.label.clone());
        }
    }
    labels.sort_by(|a, b| {
        let (ra, rb) = (a.rank(), b.rank());
        ra.0.cmp(&rb.0).then(ra.1.total_cmp(&rb.1))
    });
    labels
}

fn fleet_order(rows: &[RawRow]) -> Vec<usize> {
    let fleets: BTreeSet<usize> = rows.iter().map(|r| r.fleet).collect();
    fleets.into_iter().collect()
}

/// One wide method × fleet table; `cell` folds the group's rows into a value.
fn wide_table(
    rows: &[RawRow],
    labels: &[Label],
    fleets: &[usize],
    mut cell: impl FnMut(&[&RawRow]) -> Option<f64>,
) -> String {
    let mut out = String::from("label");
    for f in fleets {
        out.push_str(&format!(",fleet_{f}"));
    }
    out.push('\n');
    for label in labels {
        out.push_str(&label.text());
        for &fleet in fleets {
            let group: Vec<&RawRow> = rows
                .iter()
                .filter(|r| r.label == *label && r.fleet == fleet)
                .collect();
            out.push(',');
            out.push_str(&opt(cell(&group)));
        }
        out.push('\n');
    }
    out
}

fn failure_pct(group: &[&RawRow]) -> Option<f64> {
    let robots: usize = group.iter().map(|r| r.n_robots).sum();
    let failed: usize = group.iter().map(|r| r.n_failed).sum();
    (robots > 0).then(|| 100.0 * failed as f64 / robots as f64)
}

fn per_window_times(rows: &[RawRow], labels: &[Label], fleets: &[usize]) -> String {
    let windows: BTreeSet<&str> = rows.iter().map(|r| r.window.as_str()).collect();
    let mut out = String::from("window,fleet,label,mission_s,waiting_s\n");
    for window in windows {
        for &fleet in fleets {
            for label in labels {
                let group: Vec<&RawRow> = rows
                    .iter()
                    .filter(|r| r.window == window && r.fleet == fleet && r.label == *label)
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let missions: Vec<f64> = group.iter().filter_map(|r| r.mission_s).collect();
                let waits: Vec<f64> = group.iter().filter_map(|r| r.waiting_s).collect();
                out.push_str(&format!(
                    "{window},{fleet},{},{},{}\n",
                    label.text(),
                    opt(mean(&missions)),
                    opt(mean(&waits)),
                ));
            }
        }
    }
    out
}

/// Per-label series over fleet size: median assignment time (ms, planning
/// excluded) and mean total execution time (s).
fn timing_series(
    raw: &[RawRow],
    timings: &[TimingRow],
    labels: &[Label],
    fleets: &[usize],
) -> String {
    let mut out = String::from("label,fleet,assign_ms,exec_s\n");
    for label in labels {
        for &fleet in fleets {
            let assigns: Vec<f64> = timings
                .iter()
                .filter(|t| t.label == *label && t.fleet == fleet)
                .map(|t| t.assign_us / 1000.0)
                .collect();
            let execs: Vec<f64> = raw
                .iter()
                .filter(|r| r.label == *label && r.fleet == fleet)
                .filter_map(|r| r.makespan_s)
                .collect();
            if assigns.is_empty() && execs.is_empty() {
                continue;
            }
            out.push_str(&format!(
                "{},{fleet},{},{}\n",
                label.text(),
                opt(median(&assigns)),
                opt(mean(&execs)),
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Entry point

pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    let mut raw: Vec<RawRow> = Vec::new();
    let mut timings: Vec<TimingRow> = Vec::new();
    for dir in &args.batch_dirs {
        for (name, sink) in [("raw_runs.csv", true), ("timings.csv", false)] {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::data(anyhow!("{}: {e}", path.display())))?;
            let file = path.display().to_string();
            if sink {
                raw.extend(parse_raw_runs(&file, &text)?);
            } else {
                timings.extend(parse_timings(&file, &text)?);
            }
        }
    }
    if raw.is_empty() {
        return Err(CliError::data(anyhow!(
            "no raw runs found in the given batch directories"
        )));
    }

    let labels = label_order(&raw);
    let fleets = fleet_order(&raw);
    let tables: [(&str, String); 5] = [
        (
            "failure_rates.csv",
            wide_table(&raw, &labels, &fleets, failure_pct),
        ),
        (
            "mission_times.csv",
            wide_table(&raw, &labels, &fleets, |g| {
                mean(&g.iter().filter_map(|r| r.mission_s).collect::<Vec<_>>())
            }),
        ),
        (
            "waiting_times.csv",
            wide_table(&raw, &labels, &fleets, |g| {
                mean(&g.iter().filter_map(|r| r.waiting_s).collect::<Vec<_>>())
            }),
        ),
        (
            "per_window_times.csv",
            per_window_times(&raw, &labels, &fleets),
        ),
        (
            "timing_series.csv",
            timing_series(&raw, &timings, &labels, &fleets),
        ),
    ];
    for (name, body) in &tables {
        write_atomic(&args.out.join(name), body.as_bytes())
            .map_err(|e| CliError::runtime(anyhow!(e)))?;
    }
    println!(
        "report: {} raw rows, {} methods, fleets {:?} -> {}",
        raw.len(),
        labels.len(),
        fleets,
        args.out.display(),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAW: &str = "\
window,delta,fleet,run,seed,method,n_robots,n_completed,n_failed,mission_s,waiting_s,makespan_s,objective_sum,min_robot_robot_m,min_robot_ped_m,trace_hash
full,0.65,2,0,9,hata,2,2,0,10,1,12,5,2.5,,0000000000000001
full,0.65,2,1,10,hata,2,1,1,14,3,,5,2.5,,0000000000000002
full,0.65,2,0,9,path,2,2,0,9,4,13,4,2.5,,0000000000000003
full,0.65,2,1,10,path,2,2,0,11,6,15,4,2.5,,0000000000000004
";

    const TIMINGS: &str = "\
window,delta,fleet,run,method,assign_us,plan_us
full,0.65,2,0,hata,250,900
full,0.65,2,1,hata,250,900
full,0.65,2,0,path,250,900
full,0.65,2,1,path,750,900
";

    #[test]
    fn failure_table_is_grouped_percentage() {
        let raw = parse_raw_runs("raw_runs.csv", RAW).unwrap();
        let labels = label_order(&raw);
        let fleets = fleet_order(&raw);
        assert_eq!(fleets, vec![2]);
        let csv = wide_table(&raw, &labels, &fleets, failure_pct);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "label,fleet_2");
        // path first (baseline order), then hata.
        assert_eq!(lines[1], "path,0");
        assert_eq!(lines[2], "hata d=0.65,25");
    }

    #[test]
    fn mission_means_skip_empty_cells() {
        let raw = parse_raw_runs("raw_runs.csv", RAW).unwrap();
        let labels = label_order(&raw);
        let fleets = fleet_order(&raw);
        let csv = wide_table(&raw, &labels, &fleets, |g| {
            mean(&g.iter().filter_map(|r| r.mission_s).collect::<Vec<_>>())
        });
        assert!(csv.contains("hata d=0.65,12")); // (10 + 14) / 2
        assert!(csv.contains("path,10"));
    }

    #[test]
    fn timing_series_uses_median_assign_and_mean_exec() {
        let raw = parse_raw_runs("raw_runs.csv", RAW).unwrap();
        let timings = parse_timings("timings.csv", TIMINGS).unwrap();
        let labels = label_order(&raw);
        let fleets = fleet_order(&raw);
        let csv = timing_series(&raw, &timings, &labels, &fleets);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "label,fleet,assign_ms,exec_s");
        assert_eq!(lines[1], "path,2,0.5,14"); // median(0.25,0.75), mean(13,15)
        assert_eq!(lines[2], "hata d=0.65,2,0.25,12"); // makespan None skipped
    }

    #[test]
    fn deleted_column_is_named() {
        let broken = RAW.replace("mission_s,", "");
        let err = parse_raw_runs("some/raw_runs.csv", &broken).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("some/raw_runs.csv"), "{msg}");
        assert!(msg.contains("mission_s"), "{msg}");
    }

    #[test]
    fn bad_row_is_located() {
        let broken = RAW.replace("full,0.65,2,1,10,path", "full,oops,2,1,10,path");
        let err = parse_raw_runs("raw_runs.csv", &broken).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 5"), "{msg}");
        assert!(msg.contains("delta"), "{msg}");
    }

    #[test]
    fn median_of_even_set_averages_middles() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[2.0, 1.0, 3.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }
}
