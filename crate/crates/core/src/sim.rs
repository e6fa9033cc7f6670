//! Synthetic preference data and Monte-Carlo studies.
//!
//! The generator draws `s ~ N(0,1)`, `a0 ~ N(0,1)`, `a1 ~ N(0,2)` (variance
//! 2) and `x ~ N(0,1)`, with `phi(s,a) = (s^2 a, a^2 s, a s)`, `psi0 = x` and
//! `psi = (x^3, x^2)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bon::{self, Candidate, Variant};
use crate::error::{Error, Result};
use crate::inference::{
    self, gamma_component_ci, reward_ci, theta_component_ci, InferenceArtifact,
};
use crate::model::{self, ModelParams, PreferenceDataset, QueryFeatures};
use crate::optimizer::{alternating_fit, alternating_fit_with_checkpoints, FitConfig};

pub const THETA_STAR: [f64; 3] = [0.25, 0.5, 1.0 / 3.0];
pub const GAMMA_STAR: [f64; 2] = [0.5, 1.0 / 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub seed: u64,
    pub theta_star: Vec<f64>,
    pub gamma_star: Vec<f64>,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n: 600,
            seed: 0,
            theta_star: THETA_STAR.to_vec(),
            gamma_star: GAMMA_STAR.to_vec(),
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        self.truth().check_dims(3, 2)?;
        if !self.truth().is_finite() {
            return Err(Error::InvalidArgument("true parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn truth(&self) -> ModelParams {
        ModelParams::new(self.theta_star.clone(), self.gamma_star.clone())
    }

    fn with(&self, n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            ..self.clone()
        }
    }
}

/// Reward features of prompt `s` and answer `a`.
pub fn phi(s: f64, a: f64) -> [f64; 3] {
    [s * s * a, a * a * s, a * s]
}

pub fn reward_features(s: f64, a: f64) -> QueryFeatures {
    QueryFeatures::new(phi(s, a).to_vec())
}

pub fn generate(spec: &SimSpec) -> Result<PreferenceDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = PreferenceDataset::with_dims(3, 2)?;
    let (theta, gamma) = (&spec.theta_star, &spec.gamma_star);
    for _ in 0..spec.n {
        let s: f64 = StandardNormal.sample(&mut rng);
        let a0: f64 = StandardNormal.sample(&mut rng);
        let a1 = std::f64::consts::SQRT_2 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let x: f64 = StandardNormal.sample(&mut rng);
        let (p1, p0) = (phi(s, a1), phi(s, a0));
        let z = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
        let psi = [x * x * x, x * x];
        let scale = x + model::dot(gamma, &psi);
        let prob = model::sigmoid(scale * model::dot(theta, &z));
        let y = u8::from(rng.random::<f64>() < prob);
        data.push_parts(x, &psi, &z, y)?;
    }
    Ok(data)
}

/// Fit settings for simulation studies: five starts screened for 2000
/// iterations, the best continued until the gradient norm drops below 1e-5
/// (at most 100000 iterations).
pub fn study_fit_config() -> FitConfig {
    FitConfig {
        restarts: 5,
        screen_iters: Some(2000),
        grad_tol: 1e-5,
        max_iters: 100_000,
        ..FitConfig::default()
    }
}

/// Seeds for trial `trial` of a study: one for the data, one for the fit,
/// one for anything else the trial draws. Independent of worker count.
pub fn trial_seeds(seed: u64, trial: usize) -> [u64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    [rng.next_u64(), rng.next_u64(), rng.next_u64()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Count failing trials and leave them out instead of aborting.
    pub skip_failures: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            skip_failures: false,
        }
    }
}

/// Runs `f` over `0..trials` and returns the results in trial order.
fn run_trials<T, F>(trials: usize, opts: StudyOptions, f: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let outcomes: Vec<Result<T>> = if opts.workers == 1 {
        (0..trials).map(&f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| (0..trials).into_par_iter().map(&f).collect())
    };
    let mut ok = Vec::with_capacity(trials);
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(v) => ok.push(v),
            Err(e) if opts.skip_failures => {
                let _ = e;
                failures += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(Error::InvalidArgument(format!("all {trials} trials failed")));
    }
    Ok((ok, failures))
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("slope needs two or more paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log slope needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean_se(&lx).0, mean_se(&ly).0);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageTarget {
    /// Every component of theta and gamma, averaged.
    ThetaVector,
    RewardAt { s: f64, a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n: usize,
    /// Trials that contributed.
    pub trials: usize,
    pub failures: usize,
    pub alpha: f64,
    pub target: CoverageTarget,
    pub coverage_rate: f64,
    pub coverage_se: f64,
    pub avg_length: f64,
    pub length_se: f64,
    /// Theta components first, then gamma. One entry for reward targets.
    pub component_coverage: Vec<f64>,
    pub component_length: Vec<f64>,
}

/// Per-component (covered, length) for one fitted trial.
fn target_hits(
    artifact: &InferenceArtifact,
    truth: &ModelParams,
    target: CoverageTarget,
    alpha: f64,
) -> Result<Vec<(bool, f64)>> {
    match target {
        CoverageTarget::ThetaVector => {
            let mut out = Vec::with_capacity(truth.theta.len() + truth.gamma.len());
            for (i, t) in truth.theta.iter().enumerate() {
                let ci = theta_component_ci(artifact, i, alpha)?;
                out.push((ci.contains(*t), ci.width()));
            }
            for (i, g) in truth.gamma.iter().enumerate() {
                let ci = gamma_component_ci(artifact, i, alpha)?;
                out.push((ci.contains(*g), ci.width()));
            }
            Ok(out)
        }
        CoverageTarget::RewardAt { s, a } => {
            let q = reward_features(s, a);
            let ci = reward_ci(artifact, &q, alpha)?;
            Ok(vec![(ci.contains(model::dot(&truth.theta, q.as_slice())), ci.width())])
        }
    }
}

/// Fits a fresh dataset for trial `trial` and builds its artifact.
pub fn fit_trial(spec: &SimSpec, fit: &FitConfig, trial: usize) -> Result<InferenceArtifact> {
    let [data_seed, fit_seed, _] = trial_seeds(spec.seed, trial);
    let data = generate(&spec.with(spec.n, data_seed))?;
    let cfg = FitConfig {
        seed: fit_seed,
        ..fit.clone()
    };
    let result = alternating_fit(&data, &cfg)?;
    inference::infer(&result.params, &data)
}

pub fn coverage_study(
    spec: &SimSpec,
    fit: &FitConfig,
    trials: usize,
    alpha: f64,
    targets: &[CoverageTarget],
    opts: StudyOptions,
) -> Result<Vec<CoverageReport>> {
    spec.validate()?;
    fit.validate(3, 2)?;
    inference::critical_value(alpha)?;
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no coverage targets given".into()));
    }
    let truth = spec.truth();
    let (outcomes, failures) = run_trials(trials, opts, |t| {
        let artifact = fit_trial(spec, fit, t)?;
        targets
            .iter()
            .map(|&target| target_hits(&artifact, &truth, target, alpha))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut reports = Vec::with_capacity(targets.len());
    for (k, &target) in targets.iter().enumerate() {
        let per_trial: Vec<&Vec<(bool, f64)>> = outcomes.iter().map(|o| &o[k]).collect();
        let dim = per_trial[0].len();
        let cov: Vec<f64> = per_trial
            .iter()
            .map(|h| h.iter().filter(|x| x.0).count() as f64 / dim as f64)
            .collect();
        let len: Vec<f64> = per_trial
            .iter()
            .map(|h| h.iter().map(|x| x.1).sum::<f64>() / dim as f64)
            .collect();
        let component_coverage = (0..dim)
            .map(|j| per_trial.iter().filter(|h| h[j].0).count() as f64 / per_trial.len() as f64)
            .collect();
        let component_length = (0..dim)
            .map(|j| per_trial.iter().map(|h| h[j].1).sum::<f64>() / per_trial.len() as f64)
            .collect();
        let (coverage_rate, coverage_se) = mean_se(&cov);
        let (avg_length, length_se) = mean_se(&len);
        reports.push(CoverageReport {
            n: spec.n,
            trials: outcomes.len(),
            failures,
            alpha,
            target,
            coverage_rate,
            coverage_se,
            avg_length,
            length_se,
            component_coverage,
            component_length,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    /// `(n, T)` points, n-major.
    pub grid: Vec<(usize, usize)>,
    /// Mean of `|theta_T - theta*|^2 + |gamma_T - gamma*|^2` per point.
    pub errors: Vec<f64>,
    pub error_se: Vec<f64>,
    pub trials: usize,
    pub failures: usize,
}

impl ErrorCurve {
    pub fn error_at(&self, n: usize, t: usize) -> Option<f64> {
        self.grid
            .iter()
            .position(|&p| p == (n, t))
            .map(|i| self.errors[i])
    }
}

fn sq_error(p: &ModelParams, truth: &ModelParams) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    d(&p.theta, &truth.theta) + d(&p.gamma, &truth.gamma)
}

/// One fit of `max(t_grid)` iterations per trial and sample size; smaller
/// iteration counts are read off checkpoints of the same run.
pub fn error_curves(
    spec: &SimSpec,
    fit: &FitConfig,
    n_grid: &[usize],
    t_grid: &[usize],
    trials: usize,
    opts: StudyOptions,
) -> Result<ErrorCurve> {
    spec.validate()?;
    if n_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::InvalidArgument("error curve grids must be nonempty".into()));
    }
    let mut ts = t_grid.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let cfg = FitConfig {
        max_iters: *ts.last().unwrap(),
        ..fit.clone()
    };
    cfg.validate(3, 2)?;
    let truth = spec.truth();

    let mut grid = Vec::new();
    let mut errors = Vec::new();
    let mut error_se = Vec::new();
    let mut used = usize::MAX;
    let mut failures = 0;
    for &n in n_grid {
        let at_n = spec.with(n, spec.seed);
        at_n.validate()?;
        let (rows, failed) = run_trials(trials, opts, |t| {
            let [data_seed, fit_seed, _] = trial_seeds(at_n.seed ^ n as u64, t);
            let data = generate(&at_n.with(n, data_seed))?;
            let c = FitConfig {
                seed: fit_seed,
                ..cfg.clone()
            };
            let (_, snaps) = alternating_fit_with_checkpoints(&data, &c, &ts)?;
            Ok(snaps.iter().map(|p| sq_error(p, &truth)).collect::<Vec<_>>())
        })?;
        failures += failed;
        used = used.min(rows.len());
        for (j, &t) in ts.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let (m, se) = mean_se(&col);
            grid.push((n, t));
            errors.push(m);
            error_se.push(se);
        }
    }
    Ok(ErrorCurve {
        grid,
        errors,
        error_se,
        trials: used,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Smallest eigenvalue of `(1/n) sum sigma^2 z z^T`.
    pub lambda_phi: f64,
    /// Smallest eigenvalue of `(1/n) sum (theta^T z)^2 psi psi^T`.
    pub lambda_psi: f64,
    /// Spectral norm of `(1/n) sum mu (1 - mu) sigma (theta^T z) psi z^T`.
    pub m_norm: f64,
}

pub fn assumption_diagnostics(data: &PreferenceDataset, params: &ModelParams) -> Result<Diagnostics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.check_dims(data.d1(), data.d2())?;
    let (d1, d2) = (data.d1(), data.d2());
    let mut a = DMatrix::zeros(d1, d1);
    let mut b = DMatrix::zeros(d2, d2);
    for s in data.iter() {
        let sigma = model::scale_value(params, s)?;
        let u = model::dot(&params.theta, s.z);
        model::accumulate_outer(&mut a, sigma * sigma, s.z, s.z);
        model::accumulate_outer(&mut b, u * u, s.psi, s.psi);
    }
    let n = data.len() as f64;
    let min_eig = |m: DMatrix<f64>| {
        SymmetricEigen::new(model::symmetrize(m / n))
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    let cross = inference::empirical_info(params, data)?.gamma_theta;
    Ok(Diagnostics {
        lambda_phi: min_eig(a),
        lambda_psi: min_eig(b),
        m_norm: cross.singular_values().max(),
    })
}

/// Candidate sets for the best-of-N sweep.
///
/// Each prompt has `reliable` answers close to the span of the reward
/// direction and `decoys` that extrapolate far along directions the reward
/// ignores. Rewards sit at `-gap` below the prompt's best answer, with gaps
/// log-uniform on `[gap_min, gap_max]`; the first reliable answer has gap 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonSweepConfig {
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub prompts: usize,
    pub reliable: usize,
    pub decoys: usize,
    pub tau_reliable: f64,
    pub tau_decoy: f64,
    pub gap_min: f64,
    pub gap_max: f64,
    pub alpha: f64,
}

impl Default for BonSweepConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![200, 400, 800, 1600, 3200, 6400],
            trials: 40,
            prompts: 100,
            reliable: 4,
            decoys: 4,
            tau_reliable: 0.1,
            tau_decoy: 1.5,
            gap_min: 1e-3,
            gap_max: 1.0,
            alpha: 0.05,
        }
    }
}

impl BonSweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid must be nonempty with positive entries");
        }
        if self.trials == 0 || self.prompts == 0 || self.reliable == 0 {
            return bad("trials, prompts and reliable must be positive");
        }
        if !(self.tau_reliable >= 0.0 && self.tau_decoy >= 0.0)
            || !self.tau_reliable.is_finite()
            || !self.tau_decoy.is_finite()
        {
            return bad("tau values must be finite and nonnegative");
        }
        if !(self.gap_min > 0.0 && self.gap_min <= self.gap_max && self.gap_max.is_finite()) {
            return bad("gaps need 0 < gap_min <= gap_max");
        }
        inference::critical_value(self.alpha).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonSweep {
    pub n_grid: Vec<usize>,
    pub variants: Vec<Variant>,
    /// `mean[v][k]`: mean suboptimality of variant `v` at `n_grid[k]`.
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub trials: usize,
    pub failures: usize,
}

/// Orthonormal basis of the complement of `v` in R^3.
fn complement_basis(v: &[f64]) -> [[f64; 3]; 2] {
    let norm = model::dot(v, v).sqrt();
    let e = [v[0] / norm, v[1] / norm, v[2] / norm];
    let mut basis = Vec::with_capacity(2);
    for k in 0..3 {
        let mut w = [0.0; 3];
        w[k] = 1.0;
        for b in std::iter::once(&e).chain(basis.iter()) {
            let c = model::dot(&w, b);
            for i in 0..3 {
                w[i] -= c * b[i];
            }
        }
        let len = model::dot(&w, &w).sqrt();
        if len > 1e-8 {
            basis.push([w[0] / len, w[1] / len, w[2] / len]);
        }
        if basis.len() == 2 {
            break;
        }
    }
    [basis[0], basis[1]]
}

pub fn sweep_candidates(theta_star: &[f64], cfg: &BonSweepConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<Candidate>> {
    let tt = model::dot(theta_star, theta_star);
    let dir: Vec<f64> = theta_star.iter().map(|t| t / tt).collect();
    let basis = complement_basis(theta_star);
    let (lg0, lg1) = (cfg.gap_min.ln(), cfg.gap_max.ln());
    (0..cfg.prompts)
        .map(|_| {
            (0..cfg.reliable + cfg.decoys)
                .map(|j| {
                    let gap = if j == 0 {
                        0.0
                    } else if lg0 == lg1 {
                        cfg.gap_min
                    } else {
                        rng.random_range(lg0..lg1).exp()
                    };
                    let tau = if j < cfg.reliable { cfg.tau_reliable } else { cfg.tau_decoy };
                    let w0: f64 = StandardNormal.sample(rng);
                    let w1: f64 = StandardNormal.sample(rng);
                    let phi = (0..3)
                        .map(|i| -gap * dir[i] + tau * (w0 * basis[0][i] + w1 * basis[1][i]))
                        .collect();
                    Candidate::new(format!("c{j:03}"), phi)
                })
                .collect()
        })
        .collect()
}

/// Mean suboptimality of plain and pessimistic best-of-N over sample sizes.
pub fn bon_sweep(
    spec: &SimSpec,
    fit: &FitConfig,
    cfg: &BonSweepConfig,
    opts: StudyOptions,
) -> Result<BonSweep> {
    spec.validate()?;
    fit.validate(3, 2)?;
    cfg.validate()?;
    let variants = vec![Variant::Bon, Variant::Pbon];
    let mut mean = vec![Vec::new(); variants.len()];
    let mut se = vec![Vec::new(); variants.len()];
    let (mut used, mut failures) = (usize::MAX, 0);
    for &n in &cfg.n_grid {
        let at_n = spec.with(n, spec.seed ^ (n as u64).rotate_left(32));
        let (rows, failed) = run_trials(cfg.trials, opts, |t| {
            let artifact = fit_trial(&at_n, fit, t)?;
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seeds(at_n.seed, t)[2]);
            let sets = sweep_candidates(&at_n.theta_star, cfg, &mut rng);
            variants
                .iter()
                .map(|&v| {
                    let picks = sets
                        .iter()
                        .map(|c| bon::select(&artifact, c, v, 0.0, cfg.alpha))
                        .collect::<Result<Vec<_>>>()?;
                    bon::suboptimality(&at_n.theta_star, &sets, &picks)
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        failures += failed;
        used = used.min(rows.len());
        for v in 0..variants.len() {
            let col: Vec<f64> = rows.iter().map(|r| r[v]).collect();
            let (m, s) = mean_se(&col);
            mean[v].push(m);
            se[v].push(s);
        }
    }
    Ok(BonSweep {
        n_grid: cfg.n_grid.clone(),
        variants,
        mean,
        se,
        trials: used,
        failures,
    })
}
