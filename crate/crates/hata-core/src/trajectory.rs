//! Pedestrian track ingest: delimited-text parsing, per-person grouping, and
//! clipping to time windows.
//!
//! Input logs are one detection per line (the ATC dataset layout is the
//! built-in preset: comma-separated, millimeter positions, epoch-second
//! timestamps). Malformed rows never abort a parse; they are returned as
//! per-line rejects so callers can audit data quality.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One detection row after unit conversion (positions/velocity in meters).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub timestamp: f64,
    pub person_id: u64,
    pub x: f64,
    pub y: f64,
    /// Ground speed in m/s, when the source format carries it.
    pub velocity: Option<f64>,
    /// Motion direction in radians, when the source format carries it.
    pub motion_angle: Option<f64>,
}

/// A single (time, position) sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("a trajectory needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("timestamps must be strictly increasing (violated at sample {0})")]
    NonMonotonic(usize),
    #[error("non-finite sample value at index {0}")]
    NonFinite(usize),
}

/// A time-ordered polyline for one person.
///
/// Invariants (enforced at construction): at least two samples, strictly
/// increasing timestamps, all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    person_id: u64,
    samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new(person_id: u64, samples: Vec<Sample>) -> Result<Self, TrajectoryError> {
        if samples.len() < 2 {
            return Err(TrajectoryError::TooShort(samples.len()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(TrajectoryError::NonFinite(i));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(TrajectoryError::NonMonotonic(i));
            }
        }
        Ok(Trajectory { person_id, samples })
    }

    pub fn person_id(&self) -> u64 {
        self.person_id
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Linearly interpolated position at `t`, or `None` outside the track's
    /// time span.
    pub fn position_at(&self, t: f64) -> Option<(f64, f64)> {
        if t < self.start_time() || t > self.end_time() {
            return None;
        }
        let s = self.sample_at(t);
        Some((s.x, s.y))
    }

    /// Interpolated sample at `t`; caller guarantees `t` is within the span.
    /// Hits an existing sample exactly when `t` equals its timestamp.
    fn sample_at(&self, t: f64) -> Sample {
        // Index of the first sample with timestamp >= t.
        let hi = self.samples.partition_point(|s| s.t < t);
        if hi == 0 {
            return self.samples[0];
        }
        let b = self.samples[hi.min(self.samples.len() - 1)];
        if b.t == t {
            return b;
        }
        let a = self.samples[hi - 1];
        let u = (t - a.t) / (b.t - a.t);
        Sample {
            t,
            x: a.x + u * (b.x - a.x),
            y: a.y + u * (b.y - a.y),
        }
    }

    /// Restrict the track to a time window.
    ///
    /// Keeps samples strictly inside the overlap and adds interpolated
    /// boundary samples where the track crosses the window edges, so dwell
    /// time inside the window is preserved exactly. The boundary sample at
    /// the window end carries timestamp `window.end()` even though the
    /// window interval is half-open; it marks where presence stops. Returns
    /// `None` when the overlap is empty or instantaneous.
    pub fn clip_to_window(&self, window: TimeWindow) -> Option<Trajectory> {
        let lo = self.start_time().max(window.start());
        let hi = self.end_time().min(window.end());
        if lo >= hi {
            return None;
        }
        let mut out = vec![self.sample_at(lo)];
        out.extend(
            self.samples
                .iter()
                .copied()
                .filter(|s| s.t > lo && s.t < hi),
        );
        out.push(self.sample_at(hi));
        Some(Trajectory {
            person_id: self.person_id,
            samples: out,
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("window duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("window start must be finite, got {0}")]
    BadStart(f64),
}

/// Half-open time interval `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub struct TimeWindow {
    start: f64,
    duration: f64,
}

#[derive(Serialize, Deserialize)]
struct WindowRepr {
    start: f64,
    duration: f64,
}

impl TryFrom<WindowRepr> for TimeWindow {
    type Error = WindowError;
    fn try_from(r: WindowRepr) -> Result<Self, WindowError> {
        TimeWindow::new(r.start, r.duration)
    }
}

impl From<TimeWindow> for WindowRepr {
    fn from(w: TimeWindow) -> WindowRepr {
        WindowRepr {
            start: w.start,
            duration: w.duration,
        }
    }
}

impl TimeWindow {
    pub fn new(start: f64, duration: f64) -> Result<Self, WindowError> {
        if !start.is_finite() {
            return Err(WindowError::BadStart(start));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(WindowError::BadDuration(duration));
        }
        Ok(TimeWindow { start, duration })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }
}

/// Column indices into a delimited row. Only the first four are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: usize,
    pub person_id: usize,
    pub x: usize,
    pub y: usize,
    #[serde(default)]
    pub z: Option<usize>,
    #[serde(default)]
    pub velocity: Option<usize>,
    #[serde(default)]
    pub motion_angle: Option<usize>,
    #[serde(default)]
    pub facing_angle: Option<usize>,
}

/// How to read (and write back) a delimited tracking log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatDescriptor {
    pub delimiter: char,
    /// Multiplier taking source position/velocity units to meters (ATC logs
    /// are in millimeters, so 0.001).
    pub position_scale: f64,
    pub columns: ColumnMap,
}

impl FormatDescriptor {
    /// The ATC pedestrian dataset layout:
    /// `time,id,x,y,z,velocity,motion_angle,facing_angle`, millimeters.
    pub fn atc() -> Self {
        FormatDescriptor {
            delimiter: ',',
            position_scale: 0.001,
            columns: ColumnMap {
                timestamp: 0,
                person_id: 1,
                x: 2,
                y: 3,
                z: Some(4),
                velocity: Some(5),
                motion_angle: Some(6),
                facing_angle: Some(7),
            },
        }
    }

    /// Minimal meters-native layout: `time,id,x,y`.
    pub fn plain() -> Self {
        FormatDescriptor {
            delimiter: ',',
            position_scale: 1.0,
            columns: ColumnMap {
                timestamp: 0,
                person_id: 1,
                x: 2,
                y: 3,
                z: None,
                velocity: None,
                motion_angle: None,
                facing_angle: None,
            },
        }
    }

    fn n_fields(&self) -> usize {
        let c = &self.columns;
        let mut n = c.timestamp.max(c.person_id).max(c.x).max(c.y);
        for i in [c.z, c.velocity, c.motion_angle, c.facing_angle].into_iter().flatten() {
            n = n.max(i);
        }
        n + 1
    }
}

/// A rejected input line and why it was rejected. `line` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

/// Outcome of a parse: accepted records plus an audit trail of rejects.
#[derive(Debug, Default)]
pub struct ParseReport {
    pub records: Vec<TrackRecord>,
    pub rejects: Vec<RejectedRow>,
}

fn field<'a>(fields: &[&'a str], idx: usize) -> Result<&'a str, String> {
    fields
        .get(idx)
        .copied()
        .ok_or_else(|| format!("missing column {idx}"))
}

fn num(fields: &[&str], idx: usize, name: &str) -> Result<f64, String> {
    let raw = field(fields, idx)?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("{name}: not a number: {raw:?}"))?;
    if !v.is_finite() {
        return Err(format!("{name}: non-finite value"));
    }
    Ok(v)
}

fn parse_row(fields: &[&str], fmt: &FormatDescriptor) -> Result<TrackRecord, String> {
    let c = &fmt.columns;
    let timestamp = num(fields, c.timestamp, "timestamp")?;
    let raw_id = field(fields, c.person_id)?;
    let person_id: u64 = raw_id
        .trim()
        .parse()
        .map_err(|_| format!("person_id: not an unsigned integer: {raw_id:?}"))?;
    let x = num(fields, c.x, "x")? * fmt.position_scale;
    let y = num(fields, c.y, "y")? * fmt.position_scale;
    if let Some(i) = c.z {
        num(fields, i, "z")?; // validated, then discarded: planning is planar
    }
    let velocity = match c.velocity {
        Some(i) => {
            let v = num(fields, i, "velocity")? * fmt.position_scale;
            if v < 0.0 {
                return Err(format!("velocity: negative value {v}"));
            }
            Some(v)
        }
        None => None,
    };
    let motion_angle = match c.motion_angle {
        Some(i) => Some(num(fields, i, "motion_angle")?),
        None => None,
    };
    if let Some(i) = c.facing_angle {
        num(fields, i, "facing_angle")?;
    }
    Ok(TrackRecord {
        timestamp,
        person_id,
        x,
        y,
        velocity,
        motion_angle,
    })
}

/// Parse a delimited tracking log. Read failures are I/O errors; malformed
/// rows land in [`ParseReport::rejects`] with their 1-based line number.
/// Blank lines are skipped.
pub fn parse_tracks<R: BufRead>(reader: R, fmt: &FormatDescriptor) -> io::Result<ParseReport> {
    let mut report = ParseReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(fmt.delimiter).collect();
        match parse_row(&fields, fmt) {
            Ok(rec) => report.records.push(rec),
            Err(reason) => report.rejects.push(RejectedRow {
                line: lineno,
                reason,
            }),
        }
    }
    Ok(report)
}

/// Write records back out in the descriptor's layout, converting positions
/// and velocity back to source units. Columns the descriptor does not map to
/// a record field are written as `0`. With `position_scale == 1` a
/// parse/write/parse round trip reproduces the records exactly.
pub fn write_tracks<W: Write>(
    mut w: W,
    records: &[TrackRecord],
    fmt: &FormatDescriptor,
) -> io::Result<()> {
    let n = fmt.n_fields();
    let c = &fmt.columns;
    let delim = fmt.delimiter.to_string();
    for rec in records {
        let mut fields = vec!["0".to_string(); n];
        fields[c.timestamp] = rec.timestamp.to_string();
        fields[c.person_id] = rec.person_id.to_string();
        fields[c.x] = (rec.x / fmt.position_scale).to_string();
        fields[c.y] = (rec.y / fmt.position_scale).to_string();
        if let (Some(i), Some(v)) = (c.velocity, rec.velocity) {
            fields[i] = (v / fmt.position_scale).to_string();
        }
        if let (Some(i), Some(a)) = (c.motion_angle, rec.motion_angle) {
            fields[i] = a.to_string();
        }
        writeln!(w, "{}", fields.join(&delim))?;
    }
    Ok(())
}

/// Result of grouping detections into per-person trajectories.
#[derive(Debug)]
pub struct GroupedTracks {
    /// Trajectories sorted by person id.
    pub trajectories: Vec<Trajectory>,
    /// Persons discarded for having fewer than 2 usable samples.
    pub dropped_persons: usize,
}

/// Group detections by person id and sort each person's samples by time.
///
/// When one person has several records with the *same* timestamp, the record
/// appearing last in the input wins. Persons with fewer than two distinct
/// timestamps are dropped (and counted). The result is independent of input
/// order whenever (person_id, timestamp) pairs are unique.
pub fn group_trajectories(records: &[TrackRecord]) -> GroupedTracks {
    let mut by_person: BTreeMap<u64, Vec<Sample>> = BTreeMap::new();
    for rec in records {
        by_person.entry(rec.person_id).or_default().push(Sample {
            t: rec.timestamp,
            x: rec.x,
            y: rec.y,
        });
    }
    let mut trajectories = Vec::new();
    let mut dropped = 0usize;
    for (person_id, mut samples) in by_person {
        // Stable sort keeps input order within equal timestamps, so the
        // keep-last rule below honors the original file order.
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut dedup: Vec<Sample> = Vec::with_capacity(samples.len());
        for s in samples {
            match dedup.last_mut() {
                Some(last) if last.t == s.t => *last = s,
                _ => dedup.push(s),
            }
        }
        match Trajectory::new(person_id, dedup) {
            Ok(t) => trajectories.push(t),
            Err(_) => dropped += 1,
        }
    }
    GroupedTracks {
        trajectories,
        dropped_persons: dropped,
    }
}
