//! Alternating gradient descent on the negative log-likelihood.
//!
//! Each iteration takes a gradient step in `theta` at the current
//! `(theta, gamma)`, then a gradient step in `gamma` at the *updated*
//! `theta`. The loss is biconvex, so each block step is a step on a convex
//! function, but the joint problem has spurious local minima; `restarts`
//! runs the recursion from several random starting points and keeps the one
//! with the lowest final loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ModelParams, PreferenceDataset};

/// How a parameter block is initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Fixed(Vec<f64>),
    Uniform { lo: f64, hi: f64 },
}

impl Init {
    fn validate(&self, what: &str, dim: usize) -> Result<()> {
        match self {
            Init::Fixed(v) if v.len() != dim => Err(Error::InvalidArgument(format!(
                "{what} init has length {}, expected {dim}",
                v.len()
            ))),
            Init::Fixed(v) if v.iter().any(|x| !x.is_finite()) => Err(Error::InvalidArgument(
                format!("{what} init has non-finite entries"),
            )),
            Init::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(Error::InvalidArgument(format!(
                    "{what} init uniform({lo}, {hi}) needs finite lo < hi"
                )))
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Init::Fixed(v) => v.clone(),
            Init::Uniform { lo, hi } => (0..dim).map(|_| rng.random_range(*lo..*hi)).collect(),
        }
    }

    fn is_random(&self) -> bool {
        matches!(self, Init::Uniform { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub max_iters: usize,
    pub init_theta: Init,
    pub init_gamma: Init,
    pub seed: u64,
    /// Stop once both block gradient norms fall to this level. Zero disables.
    pub grad_tol: f64,
    pub box_theta: Option<f64>,
    pub box_gamma: Option<f64>,
    /// Independent random starts; the lowest final loss wins.
    pub restarts: usize,
    /// With several starts, run each for this many iterations and continue
    /// only the lowest-loss one to `max_iters`. The continued run is
    /// identical to an uninterrupted run from the same start.
    #[serde(default)]
    pub screen_iters: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eta1: 0.1,
            eta2: 0.08,
            max_iters: 2000,
            init_theta: Init::Uniform { lo: -1.0, hi: 1.0 },
            init_gamma: Init::Uniform { lo: -1.0, hi: 1.0 },
            seed: 0,
            grad_tol: 0.0,
            box_theta: None,
            box_gamma: None,
            restarts: 1,
            screen_iters: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, d1: usize, d2: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.eta1.is_finite() && self.eta1 > 0.0) {
            return bad(format!("eta1 must be positive, got {}", self.eta1));
        }
        if !(self.eta2.is_finite() && self.eta2 > 0.0) {
            return bad(format!("eta2 must be positive, got {}", self.eta2));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.grad_tol.is_finite() && self.grad_tol >= 0.0) {
            return bad(format!("grad_tol must be nonnegative, got {}", self.grad_tol));
        }
        if let Some(b) = self.box_theta {
            if !(b.is_finite() && b > 0.0) {
                return bad(format!("box_theta must be positive, got {b}"));
            }
        }
        if let Some(b) = self.box_gamma {
            // the box constrains ||(1, gamma)||_inf, which is at least 1
            if !(b.is_finite() && b >= 1.0) {
                return bad(format!("box_gamma must be at least 1, got {b}"));
            }
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.screen_iters == Some(0) {
            return bad("screen_iters must be at least 1".into());
        }
        self.init_theta.validate("theta", d1)?;
        self.init_gamma.validate("gamma", d2)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Loss after the iteration's updates.
    pub loss: f64,
    /// Norm of the theta-gradient used by the iteration.
    pub grad_theta_norm: f64,
    /// Norm of the gamma-gradient used by the iteration.
    pub grad_gamma_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub iterations_run: usize,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub final_loss: f64,
    /// Final loss of every restart, in the order they ran.
    pub restart_losses: Vec<f64>,
    /// Index into `restart_losses` of the returned run.
    pub chosen_restart: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn clip(v: &mut [f64], bound: Option<f64>) {
    if let Some(b) = bound {
        for x in v {
            *x = x.clamp(-b, b);
        }
    }
}

struct Run {
    params: ModelParams,
    trace: Vec<TraceRecord>,
    converged: bool,
    final_loss: f64,
    snapshots: Vec<ModelParams>,
}

/// Iterations `first..=last` from `start`. Checkpoints outside the range
/// are ignored.
fn run_once(
    data: &PreferenceDataset,
    config: &FitConfig,
    start: ModelParams,
    checkpoints: &[usize],
    first: usize,
    last: usize,
) -> Result<Run> {
    let mut params = start;
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(last + 1 - first);
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = checkpoints.partition_point(|&c| c < first);
    let mut converged = false;
    let diverged = |iteration: usize, p: &ModelParams| Error::Divergence {
        iteration,
        theta: p.theta.clone(),
        gamma: p.gamma.clone(),
    };

    for t in first..=last {
        let (loss, g_theta) = model::loss_and_grad_theta(&params, data)?;
        if !loss.is_finite() {
            return Err(diverged(t - 1, &params));
        }
        if let Some(last) = trace.last_mut() {
            last.loss = loss;
        }
        for (th, g) in params.theta.iter_mut().zip(&g_theta) {
            *th -= config.eta1 * g;
        }
        clip(&mut params.theta, config.box_theta);

        let g_gamma = model::grad_gamma(&params, data)?;
        for (ga, g) in params.gamma.iter_mut().zip(&g_gamma) {
            *ga -= config.eta2 * g;
        }
        clip(&mut params.gamma, config.box_gamma);
        if !params.is_finite() {
            return Err(diverged(t, &params));
        }

        let record = TraceRecord {
            loss: f64::NAN,
            grad_theta_norm: norm(&g_theta),
            grad_gamma_norm: norm(&g_gamma),
        };
        trace.push(record);
        while next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == t {
            snapshots.push(params.clone());
            next_checkpoint += 1;
        }
        if config.grad_tol > 0.0
            && record.grad_theta_norm.max(record.grad_gamma_norm) <= config.grad_tol
        {
            converged = true;
            break;
        }
    }

    let final_loss = model::neg_log_likelihood(&params, data)?;
    if !final_loss.is_finite() {
        return Err(diverged(first - 1 + trace.len(), &params));
    }
    if let Some(record) = trace.last_mut() {
        record.loss = final_loss;
    }
    // an early stop holds its final parameters for the remaining checkpoints
    while next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] <= last {
        snapshots.push(params.clone());
        next_checkpoint += 1;
    }
    Ok(Run {
        params,
        trace,
        converged,
        final_loss,
        snapshots,
    })
}

/// Runs the alternating recursion. Deterministic for a given `(data, config)`.
pub fn alternating_fit(data: &PreferenceDataset, config: &FitConfig) -> Result<FitResult> {
    alternating_fit_with_checkpoints(data, config, &[]).map(|(r, _)| r)
}

/// As [`alternating_fit`], additionally returning the chosen run's
/// parameters after each iteration count in `checkpoints` (sorted, each in
/// `1..=max_iters`). Runs that stop early report their final parameters for
/// later checkpoints.
pub fn alternating_fit_with_checkpoints(
    data: &PreferenceDataset,
    config: &FitConfig,
    checkpoints: &[usize],
) -> Result<(FitResult, Vec<ModelParams>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate(data.d1(), data.d2())?;
    if checkpoints.windows(2).any(|w| w[0] > w[1])
        || checkpoints.iter().any(|&c| c == 0 || c > config.max_iters)
    {
        return Err(Error::InvalidArgument(format!(
            "checkpoints must be sorted and within 1..={}",
            config.max_iters
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let random_init = config.init_theta.is_random() || config.init_gamma.is_random();
    let restarts = if random_init { config.restarts } else { 1 };

    let screen = config
        .screen_iters
        .filter(|&s| restarts > 1 && s < config.max_iters);
    let phase_end = screen.unwrap_or(config.max_iters);

    let mut best: Option<(usize, Run)> = None;
    let mut restart_losses = Vec::with_capacity(restarts);
    for k in 0..restarts {
        let start = ModelParams::new(
            config.init_theta.draw(data.d1(), &mut rng),
            config.init_gamma.draw(data.d2(), &mut rng),
        );
        let run = run_once(data, config, start, checkpoints, 1, phase_end)?;
        restart_losses.push(run.final_loss);
        let better = match &best {
            None => true,
            Some((_, b)) => run.final_loss < b.final_loss,
        };
        if better {
            best = Some((k, run));
        }
    }
    let (chosen_restart, mut run) = best.expect("at least one restart");
    if phase_end < config.max_iters {
        if run.converged {
            while run.snapshots.len() < checkpoints.len() {
                run.snapshots.push(run.params.clone());
            }
        } else {
            let rest = run_once(
                data,
                config,
                run.params.clone(),
                checkpoints,
                phase_end + 1,
                config.max_iters,
            )?;
            run.trace.extend(rest.trace);
            run.snapshots.extend(rest.snapshots);
            run.params = rest.params;
            run.converged = rest.converged;
            run.final_loss = rest.final_loss;
        }
    }
    Ok((
        FitResult {
            params: run.params,
            iterations_run: run.trace.len(),
            trace: run.trace,
            converged: run.converged,
            final_loss: run.final_loss,
            restart_losses,
            chosen_restart,
        },
        run.snapshots,
    ))
}

/// True when the moving average of the loss over `window` consecutive
/// iterations never increases.
pub fn loss_trace_monotone_check(result: &FitResult, window: usize) -> Result<bool> {
    let trace = &result.trace;
    if trace.is_empty() {
        return Err(Error::InvalidArgument("trace is empty".into()));
    }
    if window == 0 || window > trace.len() {
        return Err(Error::InvalidArgument(format!(
            "window {window} must be within 1..={}",
            trace.len()
        )));
    }
    let mut sum: f64 = trace[..window].iter().map(|r| r.loss).sum();
    let mut prev = sum / window as f64;
    for i in window..trace.len() {
        sum += trace[i].loss - trace[i - window].loss;
        let avg = sum / window as f64;
        // rolling sums drift by a few ulps; compare at that resolution
        if avg > prev + 4.0 * f64::EPSILON * prev.abs().max(1.0) {
            return Ok(false);
        }
        prev = avg;
    }
    Ok(true)
}
