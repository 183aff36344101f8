//! On-disk formats: PGM rasters for maps and occupancy layers, small TOML
//! manifests tying them together, and scenario files.
//!
//! Everything written here is deterministic — equal inputs produce
//! byte-identical files — and goes through an atomic temp-file/rename so
//! partially written artifacts never survive a crash.
//!
//! * Static map: 8-bit binary PGM (any value above half of maxval is free
//!   space) plus a `hata-grid/1` TOML sidecar carrying origin/resolution.
//! * Occupancy stack: a directory with a `hata-mod-stack/1` manifest and one
//!   16-bit PGM per layer, probabilities quantized to `round(p·65535)`.
//! * Scenario: a `hata-scenario/1` TOML referencing the map, optional stack
//!   and optional pedestrian log by relative path.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::Weights;
use crate::experiment::{Scenario, SimParams};
use crate::grid::{Cell, GridSpec, OccupancyGrid};
use crate::mod_map::{MoDLayer, MoDStack};
use crate::sim::{MotionLimits, SimPolicy};
use crate::trajectory::{
    group_trajectories, parse_tracks, FormatDescriptor, ParseReport, TimeWindow,
};

pub const GRID_FORMAT: &str = "hata-grid/1";
pub const STACK_FORMAT: &str = "hata-mod-stack/1";
pub const SCENARIO_FORMAT: &str = "hata-scenario/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{}: {detail}", path.display())]
    Malformed { path: PathBuf, detail: String },
    #[error("{}: expected format '{expected}', found '{got}'", path.display())]
    WrongFormat {
        path: PathBuf,
        expected: &'static str,
        got: String,
    },
}

fn malformed(path: &Path, detail: impl std::fmt::Display) -> IoError {
    IoError::Malformed {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// Write `bytes` to `path` via a temp file in the same directory plus an
/// atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PGM

/// A decoded binary PGM raster, pixels row-major top-down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub pixels: Vec<u16>,
}

/// Encode a binary (P5) PGM. Pixels wider than 8 bits go out big-endian.
pub fn encode_pgm(width: usize, height: usize, maxval: u32, pixels: &[u16]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    assert!((1..=65535).contains(&maxval), "maxval range");
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(pixels.iter().map(|&p| p as u8));
    } else {
        for &p in pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

pub fn write_pgm(
    path: &Path,
    width: usize,
    height: usize,
    maxval: u32,
    pixels: &[u16],
) -> Result<(), IoError> {
    write_atomic(path, &encode_pgm(width, height, maxval, pixels))
}

/// Decode a binary PGM; header comments (`#` to end of line) are skipped.
pub fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Pgm, IoError> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<String, IoError> {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed(path, format!("truncated header: missing {what}"))),
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    if magic != "P5" {
        return Err(malformed(path, format!("not a binary PGM (magic {magic:?})")));
    }
    let parse = |s: String, what: &str| -> Result<usize, IoError> {
        s.parse::<usize>()
            .map_err(|_| malformed(path, format!("bad {what}: {s:?}")))
    };
    let width = parse(token("width")?, "width")?;
    let height = parse(token("height")?, "height")?;
    let maxval = parse(token("maxval")?, "maxval")? as u32;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(malformed(
            path,
            format!("unusable dimensions {width}x{height} maxval {maxval}"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed(path, "missing raster separator")),
    }
    let n = width * height;
    let wide = maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| malformed(path, format!("raster too short: want {need} bytes")))?;
    let pixels: Vec<u16> = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm, IoError> {
    decode_pgm(path, &fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Static map

#[derive(Debug, Serialize, Deserialize)]
struct GridSidecar {
    format: String,
    resolution: f64,
    origin: [f64; 2],
}

fn sidecar_path(pgm_path: &Path) -> PathBuf {
    pgm_path.with_extension("toml")
}

/// Write an occupancy map as an 8-bit PGM (white free, black blocked) plus
/// its geometry sidecar next to it.
pub fn write_grid(pgm_path: &Path, grid: &OccupancyGrid) -> Result<(), IoError> {
    let spec = grid.spec();
    let pixels: Vec<u16> = grid
        .blocked_mask()
        .iter()
        .map(|&b| if b { 0 } else { 255 })
        .collect();
    write_pgm(pgm_path, spec.width, spec.height, 255, &pixels)?;
    let sidecar = GridSidecar {
        format: GRID_FORMAT.to_string(),
        resolution: spec.resolution,
        origin: [spec.origin_x, spec.origin_y],
    };
    let text = toml::to_string(&sidecar).expect("sidecar serializes");
    write_atomic(&sidecar_path(pgm_path), text.as_bytes())
}

pub fn read_grid(pgm_path: &Path) -> Result<OccupancyGrid, IoError> {
    let pgm = read_pgm(pgm_path)?;
    let side = sidecar_path(pgm_path);
    let text = fs::read_to_string(&side)?;
    let sidecar: GridSidecar = toml::from_str(&text).map_err(|e| malformed(&side, e))?;
    if sidecar.format != GRID_FORMAT {
        return Err(IoError::WrongFormat {
            path: side,
            expected: GRID_FORMAT,
            got: sidecar.format,
        });
    }
    let spec = GridSpec::new(
        sidecar.origin[0],
        sidecar.origin[1],
        sidecar.resolution,
        pgm.width,
        pgm.height,
    )
    .map_err(|e| malformed(&side, e))?;
    let half = pgm.maxval / 2;
    let blocked: Vec<bool> = pgm.pixels.iter().map(|&v| (v as u32) <= half).collect();
    OccupancyGrid::new(spec, blocked).map_err(|e| malformed(pgm_path, e))
}

// ---------------------------------------------------------------------------
// Occupancy stack

#[derive(Debug, Serialize, Deserialize)]
struct StackManifest {
    format: String,
    kernel_radius: usize,
    grid: GridMeta,
    layers: Vec<LayerMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridMeta {
    resolution: f64,
    origin: [f64; 2],
    width: usize,
    height: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerMeta {
    file: String,
    start: f64,
    duration: f64,
}

const LAYER_MAXVAL: u32 = 65535;

/// Write a stack as `<dir>/stack.toml` plus one 16-bit PGM per layer.
pub fn write_mod_stack(dir: &Path, stack: &MoDStack) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let spec = stack.spec();
    let mut layers = Vec::with_capacity(stack.layers().len());
    for (i, layer) in stack.layers().iter().enumerate() {
        let file = format!("layer_{i:03}.pgm");
        let pixels: Vec<u16> = layer
            .values()
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * LAYER_MAXVAL as f64).round() as u16)
            .collect();
        write_pgm(&dir.join(&file), spec.width, spec.height, LAYER_MAXVAL, &pixels)?;
        layers.push(LayerMeta {
            file,
            start: layer.window().start(),
            duration: layer.window().duration(),
        });
    }
    let manifest = StackManifest {
        format: STACK_FORMAT.to_string(),
        kernel_radius: stack.kernel_radius(),
        grid: GridMeta {
            resolution: spec.resolution,
            origin: [spec.origin_x, spec.origin_y],
            width: spec.width,
            height: spec.height,
        },
        layers,
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    write_atomic(&dir.join("stack.toml"), text.as_bytes())
}

pub fn read_mod_stack(dir: &Path) -> Result<MoDStack, IoError> {
    let manifest_path = dir.join("stack.toml");
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: StackManifest =
        toml::from_str(&text).map_err(|e| malformed(&manifest_path, e))?;
    if manifest.format != STACK_FORMAT {
        return Err(IoError::WrongFormat {
            path: manifest_path,
            expected: STACK_FORMAT,
            got: manifest.format,
        });
    }
    let spec = GridSpec::new(
        manifest.grid.origin[0],
        manifest.grid.origin[1],
        manifest.grid.resolution,
        manifest.grid.width,
        manifest.grid.height,
    )
    .map_err(|e| malformed(&manifest_path, e))?;
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for meta in &manifest.layers {
        let layer_path = dir.join(&meta.file);
        let pgm = read_pgm(&layer_path)?;
        if pgm.width != spec.width || pgm.height != spec.height {
            return Err(malformed(
                &layer_path,
                format!(
                    "layer is {}x{}, manifest says {}x{}",
                    pgm.width, pgm.height, spec.width, spec.height
                ),
            ));
        }
        let window = TimeWindow::new(meta.start, meta.duration)
            .map_err(|e| malformed(&manifest_path, e))?;
        let denom = pgm.maxval as f64;
        let values: Vec<f64> = pgm.pixels.iter().map(|&v| v as f64 / denom).collect();
        layers.push(MoDLayer::new(window, values));
    }
    MoDStack::new(spec, manifest.kernel_radius, layers).map_err(|e| malformed(&manifest_path, e))
}

// ---------------------------------------------------------------------------
// Track logs

/// Resolve a named track format preset.
pub fn track_format(name: &str) -> Option<FormatDescriptor> {
    match name {
        "plain" => Some(FormatDescriptor::plain()),
        "atc" => Some(FormatDescriptor::atc()),
        _ => None,
    }
}

pub fn load_tracks(path: &Path, fmt: &FormatDescriptor) -> Result<ParseReport, IoError> {
    let file = fs::File::open(path)?;
    Ok(parse_tracks(BufReader::new(file), fmt)?)
}

// ---------------------------------------------------------------------------
// Scenario

fn default_tracks_format() -> String {
    "plain".to_string()
}

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    format: String,
    map: String,
    mods: Option<String>,
    tracks: Option<String>,
    #[serde(default = "default_tracks_format")]
    tracks_format: String,
    delta: f64,
    #[serde(default = "one")]
    w0: f64,
    #[serde(default = "one")]
    w1: f64,
    #[serde(default)]
    query_time: f64,
    robots: Vec<[usize; 2]>,
    tasks: Vec<[usize; 2]>,
    #[serde(default)]
    sim: SimSection,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
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

/// Load a scenario file; referenced paths resolve relative to its directory.
/// Without a stack the scenario assumes no humans were ever observed.
pub fn load_scenario(path: &Path) -> Result<(Scenario, SimParams), IoError> {
    let text = fs::read_to_string(path)?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| malformed(path, e))?;
    if file.format != SCENARIO_FORMAT {
        return Err(IoError::WrongFormat {
            path: path.to_path_buf(),
            expected: SCENARIO_FORMAT,
            got: file.format,
        });
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let grid = read_grid(&base.join(&file.map))?;
    let mods = match &file.mods {
        Some(rel) => {
            let stack = read_mod_stack(&base.join(rel))?;
            if stack.spec() != grid.spec() {
                return Err(malformed(
                    path,
                    "occupancy stack geometry does not match the map",
                ));
            }
            stack
        }
        None => {
            let horizon = file.query_time.abs() + 1e6;
            let window = TimeWindow::new(file.query_time.min(0.0) - 1.0, horizon)
                .expect("positive horizon");
            MoDStack::uniform_zero(grid.spec().clone(), window)
        }
    };
    let pedestrians = match &file.tracks {
        Some(rel) => {
            let fmt = track_format(&file.tracks_format).ok_or_else(|| {
                malformed(path, format!("unknown tracks_format {:?}", file.tracks_format))
            })?;
            let track_path = base.join(rel);
            let report = load_tracks(&track_path, &fmt)?;
            group_trajectories(&report.records).trajectories
        }
        None => Vec::new(),
    };
    let weights = Weights::new(file.w0, file.w1).map_err(|e| malformed(path, e))?;
    let to_cells = |pairs: &[[usize; 2]]| pairs.iter().map(|p| Cell::new(p[0], p[1])).collect();
    let scenario = Scenario {
        grid,
        mods,
        robots: to_cells(&file.robots),
        tasks: to_cells(&file.tasks),
        pedestrians,
        delta: file.delta,
        weights,
        query_time: file.query_time,
    };
    Ok((scenario, file.sim.into_params()))
}

/// Render a scenario's companion files and manifest into `dir` so a run can
/// be reproduced or inspected later. Returns the manifest path.
pub fn write_scenario(
    dir: &Path,
    scenario: &Scenario,
    params: &SimParams,
) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir)?;
    write_grid(&dir.join("map.pgm"), &scenario.grid)?;
    write_mod_stack(&dir.join("mods"), &scenario.mods)?;
    let mut text = String::new();
    let _ = writeln!(text, "format = \"{SCENARIO_FORMAT}\"");
    let _ = writeln!(text, "map = \"map.pgm\"");
    let _ = writeln!(text, "mods = \"mods\"");
    if !scenario.pedestrians.is_empty() {
        let records: Vec<crate::trajectory::TrackRecord> = scenario
            .pedestrians
            .iter()
            .flat_map(|traj| {
                traj.samples().iter().map(|s| crate::trajectory::TrackRecord {
                    timestamp: s.t,
                    person_id: traj.person_id(),
                    x: s.x,
                    y: s.y,
                    velocity: None,
                    motion_angle: None,
                })
            })
            .collect();
        let mut log = Vec::new();
        crate::trajectory::write_tracks(&mut log, &records, &FormatDescriptor::plain())?;
        write_atomic(&dir.join("peds.csv"), &log)?;
        let _ = writeln!(text, "tracks = \"peds.csv\"");
        let _ = writeln!(text, "tracks_format = \"plain\"");
    }
    let _ = writeln!(text, "delta = {}", scenario.delta);
    let _ = writeln!(text, "w0 = {}", scenario.weights.w0());
    let _ = writeln!(text, "w1 = {}", scenario.weights.w1());
    let _ = writeln!(text, "query_time = {}", scenario.query_time);
    let fmt_cells = |cells: &[Cell]| {
        let inner: Vec<String> = cells.iter().map(|c| format!("[{}, {}]", c.x, c.y)).collect();
        format!("[{}]", inner.join(", "))
    };
    let _ = writeln!(text, "robots = {}", fmt_cells(&scenario.robots));
    let _ = writeln!(text, "tasks = {}", fmt_cells(&scenario.tasks));
    let _ = writeln!(text);
    let _ = writeln!(text, "[sim]");
    let _ = writeln!(text, "dt = {}", params.dt);
    let _ = writeln!(text, "timeout = {}", params.timeout);
    let _ = writeln!(text, "v_max = {}", params.limits.v_max);
    let _ = writeln!(text, "a_max = {}", params.limits.a_max);
    let _ = writeln!(text, "robot_radius = {}", params.robot_radius);
    let _ = writeln!(text, "pedestrian_radius = {}", params.pedestrian_radius);
    let _ = writeln!(text, "watchdog = {}", params.policy.watchdog);
    let _ = writeln!(text, "entry_slack = {}", params.policy.entry_slack);
    let manifest = dir.join("scenario.toml");
    write_atomic(&manifest, text.as_bytes())?;
    Ok(manifest)
}
