//! `hata build-mods`: turn a pedestrian tracking log into an occupancy
//! stack on disk.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;

use hata_core::grid::GridSpec;
use hata_core::io;
use hata_core::mod_map::{build_stack, DEFAULT_KERNEL_RADIUS, DEFAULT_LAYER_DURATION};
use hata_core::trajectory::{group_trajectories, TimeWindow};

use crate::CliError;

#[derive(Debug, Args)]
pub struct BuildModsArgs {
    /// Tracking log (delimited text).
    #[arg(long)]
    pub tracks: PathBuf,
    /// Input layout: `plain` (time,id,x,y in meters) or `atc`.
    #[arg(long, default_value = "plain")]
    pub format: String,
    /// Output directory for the stack.
    #[arg(long)]
    pub out: PathBuf,
    /// Take grid geometry from an existing map (PGM + sidecar).
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Grid origin x in meters (with --origin-y/--resolution/--width/--height).
    #[arg(long)]
    pub origin_x: Option<f64>,
    #[arg(long)]
    pub origin_y: Option<f64>,
    /// Cell size in meters.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Grid width in cells.
    #[arg(long)]
    pub width: Option<usize>,
    /// Grid height in cells.
    #[arg(long)]
    pub height: Option<usize>,
    /// Seconds covered by each layer.
    #[arg(long, default_value_t = DEFAULT_LAYER_DURATION)]
    pub layer_duration: f64,
    /// Dilation disk radius in cells.
    #[arg(long, default_value_t = DEFAULT_KERNEL_RADIUS)]
    pub kernel_radius: usize,
    /// Coverage start time (defaults to the earliest sample).
    #[arg(long)]
    pub start: Option<f64>,
    /// Coverage end time (defaults to the latest sample).
    #[arg(long)]
    pub end: Option<f64>,
}

pub fn run(args: &BuildModsArgs) -> Result<(), CliError> {
    let spec = match (&args.map, args.resolution) {
        (Some(map), _) => io::read_grid(map).map_err(CliError::data)?.spec().clone(),
        (None, Some(res)) => {
            let (ox, oy, w, h) = match (args.origin_x, args.origin_y, args.width, args.height) {
                (Some(ox), Some(oy), Some(w), Some(h)) => (ox, oy, w, h),
                _ => {
                    return Err(CliError::Usage(anyhow!(
                        "grid geometry needs either --map or all of \
                         --origin-x --origin-y --resolution --width --height"
                    )))
                }
            };
            GridSpec::new(ox, oy, res, w, h).map_err(CliError::data)?
        }
        (None, None) => {
            return Err(CliError::Usage(anyhow!(
                "grid geometry needs either --map or all of \
                 --origin-x --origin-y --resolution --width --height"
            )))
        }
    };

    let fmt = io::track_format(&args.format)
        .ok_or_else(|| CliError::Usage(anyhow!("unknown --format {:?}", args.format)))?;
    let report = io::load_tracks(&args.tracks, &fmt).map_err(CliError::data)?;
    if !report.rejects.is_empty() {
        eprintln!(
            "warning: {} malformed rows skipped (first: line {}: {})",
            report.rejects.len(),
            report.rejects[0].line,
            report.rejects[0].reason
        );
    }
    let grouped = group_trajectories(&report.records);
    if grouped.dropped_persons > 0 {
        eprintln!(
            "warning: {} persons dropped (fewer than two usable samples)",
            grouped.dropped_persons
        );
    }

    if grouped.trajectories.is_empty() {
        eprintln!("warning: no usable trajectories; all layers will be zero");
    }
    let span = grouped
        .trajectories
        .iter()
        .map(|t| (t.start_time(), t.end_time()))
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
    let start = args.start.or(span.map(|s| s.0));
    let end = args.end.or(span.map(|s| s.1));
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) => (s, e),
        // Empty log with missing bounds: still emit one layer's worth.
        (s, e) => {
            let s = s.unwrap_or(0.0);
            (s, e.unwrap_or(s + args.layer_duration))
        }
    };
    let coverage = TimeWindow::new(start, end - start)
        .map_err(|e| CliError::data(anyhow!("coverage [{start}, {end}): {e}")))?;

    let stack = build_stack(
        &grouped.trajectories,
        coverage,
        args.layer_duration,
        &spec,
        args.kernel_radius,
    )
    .map_err(CliError::data)?;
    io::write_mod_stack(&args.out, &stack).map_err(CliError::runtime)?;

    let max_p = stack
        .layers()
        .iter()
        .map(|l| l.max_value())
        .fold(0.0f64, f64::max);
    println!(
        "wrote {} layers to {} ({} pedestrians, max p = {:.4})",
        stack.layers().len(),
        args.out.display(),
        grouped.trajectories.len(),
        max_p
    );
    Ok(())
}
