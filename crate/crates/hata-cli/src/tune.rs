//! `hata tune`: Bayesian-optimize the two cost weights against a scalar
//! objective — a synthetic quadratic bowl for calibration, or the real
//! allocate-and-simulate loop on a scenario.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use serde::Deserialize;

use hata_core::assign::Objective;
use hata_core::bo::{
    empirical_sigma2, posterior_surface_csv, trace_to_csv, tune_weights, CandidateGrid,
    SignalVariance, TuneConfig, TuneError, TuneOutcome,
};
use hata_core::cost::Weights;
use hata_core::experiment::{run_experiment, Method, Scenario, SimParams};
use hata_core::gp::{GpModel, KernelParams, MaternNu};
use hata_core::io::{load_scenario, write_atomic};

use crate::CliError;

pub const TUNE_FORMAT: &str = "hata-tune/1";

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Tuning configuration (`hata-tune/1` TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (tuned.toml, trace.csv, posterior.csv).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
struct TuneFile {
    format: String,
    /// "quadratic" or "scenario".
    objective: String,
    #[serde(default)]
    quadratic: QuadraticSection,
    scenario: Option<ScenarioSection>,
    #[serde(default)]
    search: SearchSection,
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct QuadraticSection {
    target: [f64; 2],
}

impl Default for QuadraticSection {
    fn default() -> Self {
        QuadraticSection { target: [1.0, 1.0] }
    }
}

#[derive(Debug, Deserialize)]
struct ScenarioSection {
    path: String,
    /// Seconds charged per failed robot on top of the mean travel time.
    #[serde(default = "default_penalty")]
    failure_penalty: f64,
}

fn default_penalty() -> f64 {
    600.0
}

#[derive(Debug, Deserialize, Default)]
#[serde(default)]
struct SearchSection {
    initial: Option<[f64; 2]>,
    w_min: Option<f64>,
    w_max: Option<f64>,
    step: Option<f64>,
    nu: Option<f64>,
    ell: Option<f64>,
    beta: Option<f64>,
    noise: Option<f64>,
    /// Fixed signal variance; omit (or set 0) for the empirical default.
    sigma2: Option<f64>,
    stop_threshold: Option<f64>,
    max_evals: Option<usize>,
}

impl SearchSection {
    fn into_config(self, source: &Path) -> Result<TuneConfig, CliError> {
        let bad = |e: TuneError| CliError::data(anyhow!("{}: {e}", source.display()));
        let mut cfg = TuneConfig::default();
        if let Some(init) = self.initial {
            cfg.initial = init;
        }
        if self.w_min.is_some() || self.w_max.is_some() || self.step.is_some() {
            let w_min = self.w_min.unwrap_or(0.0);
            let w_max = self.w_max.unwrap_or(3.0);
            let step = self.step.unwrap_or(0.05);
            cfg.acquisition.grid = CandidateGrid::new(w_min, w_max, w_min, w_max, step).map_err(bad)?;
        }
        if let Some(nu) = self.nu {
            cfg.nu = MaternNu::try_from_f64(nu)
                .map_err(|e| CliError::data(anyhow!("{}: {e}", source.display())))?;
        }
        if let Some(ell) = self.ell {
            cfg.ell = ell;
        }
        if let Some(beta) = self.beta {
            cfg.acquisition.beta = beta;
        }
        if let Some(noise) = self.noise {
            cfg.noise_var = noise;
        }
        match self.sigma2 {
            Some(s) if s > 0.0 => cfg.signal_variance = SignalVariance::Fixed(s),
            _ => cfg.signal_variance = SignalVariance::Empirical,
        }
        if let Some(st) = self.stop_threshold {
            cfg.acquisition.stop_threshold = st;
        }
        if let Some(cap) = self.max_evals {
            cfg.max_evaluations = cap;
        }
        Ok(cfg)
    }
}

/// Mean completed travel time plus a penalty per failed robot.
fn scenario_objective(
    scenario: &Scenario,
    params: &SimParams,
    penalty: f64,
    w0: f64,
    w1: f64,
) -> Result<f64, String> {
    let weights = Weights::new(w0, w1).map_err(|e| e.to_string())?;
    let scn = Scenario {
        weights,
        ..scenario.clone()
    };
    let rec =
        run_experiment(&scn, Method::Hata, params, Objective::Sum).map_err(|e| e.to_string())?;
    let travel = rec.outcome.mean_travel_time().unwrap_or(0.0);
    Ok(travel + penalty * rec.outcome.failure_count() as f64)
}

pub fn run(args: &TuneArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::data(anyhow!("{}: {e}", args.config.display())))?;
    let file: TuneFile = toml::from_str(&text)
        .map_err(|e| CliError::data(anyhow!("{}: {e}", args.config.display())))?;
    if file.format != TUNE_FORMAT {
        return Err(CliError::data(anyhow!(
            "{}: expected format '{TUNE_FORMAT}', found '{}'",
            args.config.display(),
            file.format
        )));
    }
    let config = file.search.into_config(&args.config)?;

    let outcome = match file.objective.as_str() {
        "quadratic" => {
            let [a, b] = file.quadratic.target;
            tune_weights(&config, |w0, w1| {
                Ok((w0 - a) * (w0 - a) + (w1 - b) * (w1 - b))
            })
        }
        "scenario" => {
            let section = file.scenario.as_ref().ok_or_else(|| {
                CliError::data(anyhow!(
                    "{}: objective = \"scenario\" needs a [scenario] section",
                    args.config.display()
                ))
            })?;
            let base = args.config.parent().unwrap_or(Path::new(""));
            let (scenario, params) =
                load_scenario(&base.join(&section.path)).map_err(CliError::data)?;
            tune_weights(&config, |w0, w1| {
                scenario_objective(&scenario, &params, section.failure_penalty, w0, w1)
            })
        }
        other => {
            return Err(CliError::data(anyhow!(
                "{}: unknown objective {other:?} (expected quadratic or scenario)",
                args.config.display()
            )))
        }
    };

    match outcome {
        Ok(out) => {
            write_outputs(&args.out, &config, &out)
                .map_err(|e| CliError::runtime(anyhow!("{}: {e}", args.out.display())))?;
            println!(
                "tuned weights: w0 = {}, w1 = {} (error {}, {} evaluations, stop: {:?})",
                out.best_weights[0],
                out.best_weights[1],
                out.best_error.map_or("n/a".to_string(), |e| e.to_string()),
                out.trace.len(),
                out.stop
            );
            Ok(())
        }
        Err(TuneError::EvaluatorFailed {
            w0,
            w1,
            message,
            trace,
        }) => {
            // Keep the partial trace around for inspection, then fail.
            write_atomic(&args.out.join("trace.csv"), trace_to_csv(&trace).as_bytes())
                .map_err(|e| CliError::runtime(anyhow!("{}: {e}", args.out.display())))?;
            Err(CliError::runtime(anyhow!(
                "objective failed at ({w0}, {w1}): {message} (partial trace kept)"
            )))
        }
        Err(e) => Err(CliError::runtime(anyhow!(e))),
    }
}

fn write_outputs(out_dir: &Path, config: &TuneConfig, outcome: &TuneOutcome) -> anyhow::Result<()> {
    write_atomic(
        &out_dir.join("trace.csv"),
        trace_to_csv(&outcome.trace).as_bytes(),
    )?;

    // Refit the posterior from the trace so the surface can be exported.
    if !outcome.trace.is_empty() {
        let sigma2 = match config.signal_variance {
            SignalVariance::Fixed(s) => s,
            SignalVariance::Empirical => {
                let ys: Vec<f64> = outcome.trace.iter().map(|s| s.error).collect();
                empirical_sigma2(&ys)
            }
        };
        let kp = KernelParams::new(sigma2, config.ell, config.nu)?;
        let mut model = GpModel::new(kp, config.noise_var)?;
        for step in &outcome.trace {
            model.observe([step.w0, step.w1], step.error)?;
        }
        let surface = posterior_surface_csv(&model, &config.acquisition.grid)?;
        write_atomic(&out_dir.join("posterior.csv"), surface.as_bytes())?;
    }

    let mut tuned = String::new();
    tuned.push_str("format = \"hata-tune-result/1\"\n");
    tuned.push_str(&format!("w0 = {}\n", outcome.best_weights[0]));
    tuned.push_str(&format!("w1 = {}\n", outcome.best_weights[1]));
    if let Some(err) = outcome.best_error {
        tuned.push_str(&format!("best_error = {err}\n"));
    }
    tuned.push_str(&format!("evaluations = {}\n", outcome.trace.len()));
    tuned.push_str(&format!("stop = \"{:?}\"\n", outcome.stop));
    write_atomic(&out_dir.join("tuned.toml"), tuned.as_bytes())?;
    Ok(())
}
