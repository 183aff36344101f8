//! Bayesian optimization of the two cost weights against a black-box
//! fleet-performance objective (lower is better).
//!
//! A Matérn GP models the objective over a fixed candidate grid. Each round
//! evaluates the acquisition minimizer — a lower-confidence bound
//! `mu − sqrt(beta)·sigma` — observes the objective there, and stops when
//! the posterior is confident everywhere (max std below a threshold) or the
//! evaluation budget runs out.
//!
//! The GP is conditioned about the empirical mean of the observations, so
//! the proposal sequence does not change when a constant is added to every
//! objective value; only the objective's *shape* matters.

use thiserror::Error;

use crate::gp::{GpError, GpModel, KernelParams, MaternNu};

/// Stock exploration factor.
pub const DEFAULT_BETA: f64 = 150.0;
/// Stock kernel length scale for weight tuning.
pub const DEFAULT_ELL: f64 = 0.08;
/// Stock convergence threshold on the max posterior std.
pub const DEFAULT_STOP_THRESHOLD: f64 = 0.08;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("objective evaluation failed at ({w0}, {w1}): {message}")]
    EvaluatorFailed {
        w0: f64,
        w1: f64,
        message: String,
        /// Steps completed before the failure.
        trace: Vec<TuneStep>,
    },
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("candidate grid is invalid: {0}")]
    BadGrid(String),
    #[error("acquisition parameters must be finite and nonnegative (beta={beta}, stop={stop})")]
    BadAcquisition { beta: f64, stop: f64 },
}

/// A regular rectangle of candidate weight pairs, iterated w0-major
/// (w0 outer, w1 inner). Ties in the acquisition resolve to the earliest
/// grid point in this order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    w0_min: f64,
    w0_max: f64,
    w1_min: f64,
    w1_max: f64,
    step: f64,
}

impl CandidateGrid {
    pub fn new(
        w0_min: f64,
        w0_max: f64,
        w1_min: f64,
        w1_max: f64,
        step: f64,
    ) -> Result<Self, TuneError> {
        let all_finite = [w0_min, w0_max, w1_min, w1_max, step]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || step <= 0.0 || w0_max < w0_min || w1_max < w1_min {
            return Err(TuneError::BadGrid(format!(
                "w0 in [{w0_min}, {w0_max}], w1 in [{w1_min}, {w1_max}], step {step}"
            )));
        }
        Ok(CandidateGrid {
            w0_min,
            w0_max,
            w1_min,
            w1_max,
            step,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        let count = |min: f64, max: f64| ((max - min) / self.step + 1e-9).floor() as usize + 1;
        let n0 = count(self.w0_min, self.w0_max);
        let n1 = count(self.w1_min, self.w1_max);
        let mut pts = Vec::with_capacity(n0 * n1);
        for i in 0..n0 {
            let w0 = self.w0_min + i as f64 * self.step;
            for j in 0..n1 {
                pts.push([w0, self.w1_min + j as f64 * self.step]);
            }
        }
        pts
    }
}

impl Default for CandidateGrid {
    /// `[0, 3]²` in steps of 0.05 — 61×61 candidates.
    fn default() -> Self {
        CandidateGrid::new(0.0, 3.0, 0.0, 3.0, 0.05).expect("default grid is valid")
    }
}

/// Acquisition settings: exploration factor, candidate set, stop threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    pub beta: f64,
    pub grid: CandidateGrid,
    /// Converged when the max posterior std over the grid drops below this.
    pub stop_threshold: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            beta: DEFAULT_BETA,
            grid: CandidateGrid::default(),
            stop_threshold: DEFAULT_STOP_THRESHOLD,
        }
    }
}

impl AcquisitionConfig {
    fn validate(&self) -> Result<(), TuneError> {
        if !(self.beta.is_finite() && self.beta >= 0.0)
            || !(self.stop_threshold.is_finite() && self.stop_threshold >= 0.0)
        {
            return Err(TuneError::BadAcquisition {
                beta: self.beta,
                stop: self.stop_threshold,
            });
        }
        Ok(())
    }
}

/// The acquisition's pick plus the posterior summary used for stopping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionChoice {
    pub point: [f64; 2],
    /// Lower-confidence-bound value at the chosen point.
    pub value: f64,
    pub max_posterior_std: f64,
}

/// Pick the next candidate: the grid point minimizing `mu − sqrt(beta)·sigma`
/// under the mean-centered posterior. Earlier grid points win exact ties.
pub fn ucb_next(model: &GpModel, config: &AcquisitionConfig) -> Result<AcquisitionChoice, TuneError> {
    config.validate()?;
    let points = config.grid.points();
    let ybar = model.targets().iter().sum::<f64>() / model.len().max(1) as f64;
    let post = model.posterior_about_mean(ybar, &points)?;
    let root_beta = config.beta.sqrt();
    let mut best: Option<AcquisitionChoice> = None;
    let mut max_std = 0.0f64;
    for (p, (mu, var)) in points.into_iter().zip(post) {
        let sd = var.sqrt();
        max_std = max_std.max(sd);
        let lcb = mu - root_beta * sd;
        if best.as_ref().is_none_or(|b| lcb < b.value) {
            best = Some(AcquisitionChoice {
                point: p,
                value: lcb,
                max_posterior_std: 0.0,
            });
        }
    }
    let mut choice = best.expect("grid has at least one point");
    choice.max_posterior_std = max_std;
    Ok(choice)
}

/// How the kernel's signal variance is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalVariance {
    /// Population variance of the observations so far (unit variance until
    /// the observations actually spread).
    Empirical,
    Fixed(f64),
}

/// Full tuning configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub initial: [f64; 2],
    pub nu: MaternNu,
    pub ell: f64,
    pub signal_variance: SignalVariance,
    pub noise_var: f64,
    pub acquisition: AcquisitionConfig,
    /// Total evaluation budget, including the initial point. Zero means
    /// "don't evaluate anything": the initial weights come back untouched.
    pub max_evaluations: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            initial: [1.0, 1.0],
            nu: MaternNu::FiveHalves,
            ell: DEFAULT_ELL,
            signal_variance: SignalVariance::Empirical,
            noise_var: 1e-4,
            acquisition: AcquisitionConfig::default(),
            max_evaluations: 60,
        }
    }
}

/// One completed evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneStep {
    pub iteration: usize,
    pub w0: f64,
    pub w1: f64,
    pub error: f64,
    /// Max posterior std over the grid after absorbing this observation.
    pub max_posterior_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Posterior uncertainty fell below the stop threshold everywhere.
    Converged,
    /// The evaluation budget ran out.
    EvaluationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    /// Best *observed* weights (smallest error; earliest wins ties).
    pub best_weights: [f64; 2],
    /// Error at the best weights; `None` when nothing was evaluated.
    pub best_error: Option<f64>,
    pub trace: Vec<TuneStep>,
    pub stop: StopReason,
}

/// Population variance of the observations, floored at unit variance until
/// the observations actually spread. This is the signal variance the tuner
/// runs with under [`SignalVariance::Empirical`].
pub fn empirical_sigma2(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    if var > 1e-12 {
        var
    } else {
        1.0
    }
}

/// Tune the weights against `evaluate` (a fleet-error measure; lower is
/// better). Evaluator failures abort tuning but return the completed steps
/// inside the error.
pub fn tune_weights<F>(config: &TuneConfig, mut evaluate: F) -> Result<TuneOutcome, TuneError>
where
    F: FnMut(f64, f64) -> Result<f64, String>,
{
    config.acquisition.validate()?;
    let sigma2 = match config.signal_variance {
        SignalVariance::Fixed(v) => v,
        SignalVariance::Empirical => 1.0,
    };
    let kernel = KernelParams::new(sigma2, config.ell, config.nu)?;
    let mut model = GpModel::new(kernel, config.noise_var)?;

    let mut trace: Vec<TuneStep> = Vec::new();
    let mut stop = StopReason::EvaluationCap;
    let mut next = config.initial;

    for iteration in 0..config.max_evaluations {
        let (w0, w1) = (next[0], next[1]);
        let fail = |message: String, trace: &[TuneStep]| TuneError::EvaluatorFailed {
            w0,
            w1,
            message,
            trace: trace.to_vec(),
        };
        let y = evaluate(w0, w1).map_err(|m| fail(m, &trace))?;
        if !y.is_finite() {
            return Err(fail(format!("non-finite objective value {y}"), &trace));
        }
        model.observe([w0, w1], y)?;
        if config.signal_variance == SignalVariance::Empirical {
            model.set_sigma2(empirical_sigma2(model.targets()))?;
        }
        let choice = ucb_next(&model, &config.acquisition)?;
        trace.push(TuneStep {
            iteration,
            w0,
            w1,
            error: y,
            max_posterior_std: choice.max_posterior_std,
        });
        if choice.max_posterior_std < config.acquisition.stop_threshold {
            stop = StopReason::Converged;
            break;
        }
        next = choice.point;
    }

    let best = trace
        .iter()
        .fold(None::<&TuneStep>, |acc, s| match acc {
            Some(b) if b.error <= s.error => Some(b),
            _ => Some(s),
        });
    Ok(match best {
        Some(b) => TuneOutcome {
            best_weights: [b.w0, b.w1],
            best_error: Some(b.error),
            trace,
            stop,
        },
        None => TuneOutcome {
            best_weights: config.initial,
            best_error: None,
            trace,
            stop,
        },
    })
}

/// CSV view of a tuning trace.
pub fn trace_to_csv(trace: &[TuneStep]) -> String {
    let mut out = String::from("iteration,w0,w1,error,max_posterior_std\n");
    for s in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.iteration, s.w0, s.w1, s.error, s.max_posterior_std
        ));
    }
    out
}

/// Mean/std posterior surface over the candidate grid (centered the same
/// way the acquisition is), as CSV rows `w0,w1,mean,std`.
pub fn posterior_surface_csv(model: &GpModel, grid: &CandidateGrid) -> Result<String, TuneError> {
    let points = grid.points();
    let ybar = model.targets().iter().sum::<f64>() / model.len().max(1) as f64;
    let post = model.posterior_about_mean(ybar, &points)?;
    let mut out = String::from("w0,w1,mean,std\n");
    for (p, (mu, var)) in points.into_iter().zip(post) {
        out.push_str(&format!("{},{},{},{}\n", p[0], p[1], mu, var.sqrt()));
    }
    Ok(out)
}
