//! The `hetpref` command line.
//!
//! Settings resolve in this order: command-line flag, then the `--config`
//! file (flat `key = value` lines, `#` comments, keys spelled like the long
//! flags with `_` for `-`), then `HETPREF_SEED` for the seed, then the
//! built-in default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use crate::bon::{self, Candidate, Variant};
use crate::error::{Error, Result};
use crate::hypothesis::{reward_diff_test, VarianceMode};
use crate::inference;
use crate::io;
use crate::model::QueryFeatures;
use crate::optimizer::{alternating_fit, FitConfig, FitResult, Init};
use crate::sim::{self, BonSweepConfig, CoverageTarget, SimSpec, StudyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hetpref", version, about = "Heterogeneous-preference reward learning")]
struct Cli {
    /// Flat key = value settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; falls back to HETPREF_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Result path, `-` for stdout (default).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic data and Monte-Carlo studies.
    Simulate(SimulateArgs),
    /// Alternating gradient descent on a dataset.
    Fit(FitCmd),
    /// Covariance estimates from a fit.
    Infer(InferCmd),
    /// Reward-difference test between two answers.
    Test(TestCmd),
    /// Best-of-N selection over candidate sets.
    Bon(BonCmd),
}

#[derive(Debug, Args, Default)]
struct FitArgs {
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    /// Iteration count T.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// With restarts, iterations each start gets before only the best
    /// continues; 0 turns screening off.
    #[arg(long)]
    screen_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Random initialization is uniform on [init_lo, init_hi].
    #[arg(long, allow_hyphen_values = true)]
    init_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    init_hi: Option<f64>,
    #[arg(long)]
    box_theta: Option<f64>,
    #[arg(long)]
    box_gamma: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// dataset, coverage, error-curve or bon-sweep.
    #[arg(long)]
    study: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Leave failed trials out instead of aborting.
    #[arg(long)]
    skip_failures: bool,
    /// Reward evaluation points as `s:a` pairs, comma separated.
    #[arg(long)]
    eval_points: Option<String>,
    /// Sample sizes for error-curve and bon-sweep.
    #[arg(long)]
    n_grid: Option<String>,
    /// Iteration counts for error-curve.
    #[arg(long)]
    t_grid: Option<String>,
    /// Prompts per trial for bon-sweep.
    #[arg(long)]
    prompts: Option<usize>,
    /// Tidy x,y,series CSV for plotting.
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct FitCmd {
    /// Dataset CSV, `-` for stdin.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct InferCmd {
    #[arg(long)]
    data: Option<PathBuf>,
    /// FitResult JSON written by `fit`.
    #[arg(long)]
    fit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestCmd {
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Features of the first answer, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    q0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    q1: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// independent or dependent.
    #[arg(long)]
    variance: Option<String>,
}

#[derive(Debug, Args)]
struct BonCmd {
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// JSON array of candidate sets, one per prompt.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            column: "*".into(),
            reason: "expected key = value".into(),
        })?;
        let key = k.trim().replace('-', "_");
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                column: key,
                reason: "key given twice".into(),
            });
        }
    }
    Ok(map)
}

/// Merges flags with the config file and records what was used.
struct Settings {
    file: BTreeMap<String, String>,
    echo: BTreeMap<String, String>,
}

impl Settings {
    fn from_file(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            echo: BTreeMap::new(),
        }
    }

    fn lookup<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| invalid(format!("config key {key} = {raw:?}: {e}"))),
            None => Ok(None),
        }
    }

    fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.echo.insert(key.into(), v.to_string());
        Ok(v)
    }

    fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?;
        if let Some(x) = &v {
            self.echo.insert(key.into(), x.to_string());
        }
        Ok(v)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = flag.or_else(|| self.file.get(key).map(PathBuf::from));
        if let Some(p) = &v {
            self.echo.insert(key.into(), p.display().to_string());
        }
        Ok(v)
    }

    fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        let p = self
            .path(key, flag)?
            .ok_or_else(|| invalid(format!("missing input: --{} is required", key.replace('_', "-"))))?;
        if p.as_os_str() != "-" && !p.exists() {
            return Err(invalid(format!("missing input: {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = if flag {
            true
        } else {
            self.lookup::<bool>(key, None)?.unwrap_or(false)
        };
        self.echo.insert(key.into(), v.to_string());
        Ok(v)
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for k in self.file.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(invalid(format!("unknown config key {k:?}")));
            }
        }
        Ok(())
    }
}

const GLOBAL_KEYS: &[&str] = &["seed", "out", "manifest", "verbose"];
const FIT_KEYS: &[&str] = &[
    "eta1", "eta2", "iters", "restarts", "screen_iters", "grad_tol", "init_lo", "init_hi", "box_theta",
    "box_gamma",
];

fn fit_config(s: &mut Settings, a: FitArgs, seed: u64, d: FitConfig) -> Result<FitConfig> {
    let screen = s.get("screen_iters", a.screen_iters, d.screen_iters.unwrap_or(0))?;
    let lo = s.get("init_lo", a.init_lo, -1.0)?;
    let hi = s.get("init_hi", a.init_hi, 1.0)?;
    Ok(FitConfig {
        eta1: s.get("eta1", a.eta1, d.eta1)?,
        eta2: s.get("eta2", a.eta2, d.eta2)?,
        max_iters: s.get("iters", a.iters, d.max_iters)?,
        init_theta: Init::Uniform { lo, hi },
        init_gamma: Init::Uniform { lo, hi },
        seed,
        grad_tol: s.get("grad_tol", a.grad_tol, d.grad_tol)?,
        box_theta: s.get_opt("box_theta", a.box_theta)?,
        box_gamma: s.get_opt("box_gamma", a.box_gamma)?,
        restarts: s.get("restarts", a.restarts, d.restarts)?,
        screen_iters: (screen > 0).then_some(screen),
    })
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    raw.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|e| invalid(format!("{what}: {x:?}: {e}")))
        })
        .collect()
}

fn parse_points(raw: &str) -> Result<Vec<CoverageTarget>> {
    raw.split(',')
        .map(|p| {
            let (s, a) = p
                .split_once(':')
                .ok_or_else(|| invalid(format!("eval point {p:?} is not s:a")))?;
            let num = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("eval point {p:?} is not numeric")))
            };
            Ok(CoverageTarget::RewardAt {
                s: num(s)?,
                a: num(a)?,
            })
        })
        .collect()
}

type PlotRows = Vec<(f64, f64, String)>;

struct Outcome {
    /// Result JSON, or `None` when the command wrote its own output.
    json: Option<serde_json::Value>,
    plot: Option<(PathBuf, PlotRows)>,
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn simulate(a: SimulateArgs, s: &mut Settings, seed: u64, out: &Path, verbose: bool) -> Result<Outcome> {
    let mut allowed: Vec<&str> = GLOBAL_KEYS.to_vec();
    allowed.extend(FIT_KEYS);
    allowed.extend([
        "study", "n", "trials", "alpha", "workers", "skip_failures", "eval_points", "n_grid",
        "t_grid", "prompts", "emit_plot_data",
    ]);
    s.reject_unknown(&allowed)?;
    let study = s.get("study", a.study, "coverage".to_string())?;
    let n = s.get("n", a.n, 600usize)?;
    let spec = SimSpec {
        n,
        seed,
        ..SimSpec::default()
    };
    spec.validate()?;
    let plot_path = s.path("emit_plot_data", a.emit_plot_data)?;

    if study == "dataset" {
        let data = sim::generate(&spec)?;
        io::write_dataset(&data, out)?;
        return Ok(Outcome {
            json: None,
            plot: None,
        });
    }

    let fit = fit_config(s, a.fit, seed, sim::study_fit_config())?;
    fit.validate(3, 2)?;
    let opts = StudyOptions {
        workers: s.get("workers", a.workers, 1usize)?,
        skip_failures: s.flag("skip_failures", a.skip_failures)?,
    };
    let alpha = s.get("alpha", a.alpha, 0.05)?;
    inference::critical_value(alpha)?;
    let mut rows = PlotRows::new();
    let json = match study.as_str() {
        "coverage" => {
            let trials = s.get("trials", a.trials, 2000usize)?;
            let points = s.get(
                "eval_points",
                a.eval_points,
                "0.5:0.25,0.5:0.5,1:0.25,1:1".to_string(),
            )?;
            let mut targets = vec![CoverageTarget::ThetaVector];
            targets.extend(parse_points(&points)?);
            if verbose {
                eprintln!("coverage study: n = {n}, {trials} trials");
            }
            let reports = sim::coverage_study(&spec, &fit, trials, alpha, &targets, opts)?;
            for r in &reports {
                let name = match r.target {
                    CoverageTarget::ThetaVector => "parameters".to_string(),
                    CoverageTarget::RewardAt { s, a } => format!("reward({s},{a})"),
                };
                rows.push((r.n as f64, r.coverage_rate, format!("coverage:{name}")));
                rows.push((r.n as f64, r.avg_length, format!("length:{name}")));
            }
            to_json(&reports)?
        }
        "error-curve" => {
            let trials = s.get("trials", a.trials, 100usize)?;
            let ns: Vec<usize> =
                parse_list(&s.get("n_grid", a.n_grid, "200,400,600,1200".to_string())?, "n_grid")?;
            let ts: Vec<usize> =
                parse_list(&s.get("t_grid", a.t_grid, "1,10,100,500,1000,2000".to_string())?, "t_grid")?;
            let curve = sim::error_curves(&spec, &fit, &ns, &ts, trials, opts)?;
            for (&(n, t), e) in curve.grid.iter().zip(&curve.errors) {
                rows.push((n as f64, *e, format!("T={t}")));
            }
            to_json(&curve)?
        }
        "bon-sweep" => {
            let d = BonSweepConfig::default();
            let n_grid = match s.get_opt::<String>("n_grid", a.n_grid)? {
                Some(raw) => parse_list(&raw, "n_grid")?,
                None => d.n_grid.clone(),
            };
            let cfg = BonSweepConfig {
                n_grid,
                trials: s.get("trials", a.trials, d.trials)?,
                prompts: s.get("prompts", a.prompts, d.prompts)?,
                alpha,
                ..d
            };
            let sweep = sim::bon_sweep(&spec, &fit, &cfg, opts)?;
            for (v, means) in sweep.variants.iter().zip(&sweep.mean) {
                for (n, m) in sweep.n_grid.iter().zip(means) {
                    rows.push((*n as f64, *m, v.name().to_string()));
                }
            }
            to_json(&sweep)?
        }
        other => {
            return Err(invalid(format!(
                "unknown study {other:?}; expected dataset, coverage, error-curve or bon-sweep"
            )))
        }
    };
    Ok(Outcome {
        json: Some(json),
        plot: plot_path.map(|p| (p, rows)),
    })
}

fn fit_cmd(a: FitCmd, s: &mut Settings, seed: u64) -> Result<Outcome> {
    let mut allowed: Vec<&str> = GLOBAL_KEYS.to_vec();
    allowed.extend(FIT_KEYS);
    allowed.extend(["data", "emit_plot_data"]);
    s.reject_unknown(&allowed)?;
    let data_path = s.required_path("data", a.data)?;
    let plot_path = s.path("emit_plot_data", a.emit_plot_data)?;
    let cfg = fit_config(s, a.fit, seed, FitConfig::default())?;
    let data = io::read_dataset(&data_path)?;
    cfg.validate(data.d1(), data.d2())?;
    let result = alternating_fit(&data, &cfg)?;
    let rows = result
        .trace
        .iter()
        .enumerate()
        .map(|(i, r)| ((i + 1) as f64, r.loss, "loss".to_string()))
        .collect();
    Ok(Outcome {
        json: Some(to_json(&result)?),
        plot: plot_path.map(|p| (p, rows)),
    })
}

fn infer_cmd(a: InferCmd, s: &mut Settings, out: &Path) -> Result<Outcome> {
    let mut allowed: Vec<&str> = GLOBAL_KEYS.to_vec();
    allowed.extend(["data", "fit"]);
    s.reject_unknown(&allowed)?;
    let fit_path = s.required_path("fit", a.fit)?;
    let data_path = s.required_path("data", a.data)?;
    let fit: FitResult = io::read_json(&fit_path)?;
    let data = io::read_dataset(&data_path)?;
    let artifact = inference::infer(&fit.params, &data)?;
    io::write_artifact(&artifact, out)?;
    Ok(Outcome {
        json: None,
        plot: None,
    })
}

fn features(raw: &str, what: &str) -> Result<QueryFeatures> {
    Ok(QueryFeatures::new(parse_list(raw, what)?))
}

fn test_cmd(a: TestCmd, s: &mut Settings) -> Result<Outcome> {
    let mut allowed: Vec<&str> = GLOBAL_KEYS.to_vec();
    allowed.extend(["artifact", "q0", "q1", "alpha", "variance"]);
    s.reject_unknown(&allowed)?;
    let artifact_path = s.required_path("artifact", a.artifact)?;
    let q0 = s
        .get_opt::<String>("q0", a.q0)?
        .ok_or_else(|| invalid("missing input: --q0 is required"))?;
    let q1 = s
        .get_opt::<String>("q1", a.q1)?
        .ok_or_else(|| invalid("missing input: --q1 is required"))?;
    let alpha = s.get("alpha", a.alpha, 0.05)?;
    let mode = match s.get("variance", a.variance, "independent".to_string())?.as_str() {
        "independent" => VarianceMode::Independent,
        "dependent" => VarianceMode::DependentUpperBound,
        other => return Err(invalid(format!("variance must be independent or dependent, got {other:?}"))),
    };
    let (q0, q1) = (features(&q0, "q0")?, features(&q1, "q1")?);
    inference::critical_value(alpha)?;
    let artifact = io::read_artifact(&artifact_path)?;
    let outcome = reward_diff_test(&artifact, &q0, &q1, alpha, mode)?;
    Ok(Outcome {
        json: Some(to_json(&outcome)?),
        plot: None,
    })
}

fn bon_cmd(a: BonCmd, s: &mut Settings) -> Result<Outcome> {
    let mut allowed: Vec<&str> = GLOBAL_KEYS.to_vec();
    allowed.extend(["artifact", "candidates", "variant", "beta", "alpha"]);
    s.reject_unknown(&allowed)?;
    let artifact_path = s.required_path("artifact", a.artifact)?;
    let cand_path = s.required_path("candidates", a.candidates)?;
    let variant: Variant = s.get("variant", a.variant, "PBoN".to_string())?.parse()?;
    let beta = s.get("beta", a.beta, 0.0)?;
    let alpha = s.get("alpha", a.alpha, 0.05)?;
    inference::critical_value(alpha)?;
    let sets: Vec<Vec<Candidate>> = io::read_json(&cand_path)?;
    if sets.is_empty() {
        return Err(invalid("candidate file holds no prompts"));
    }
    let artifact = io::read_artifact(&artifact_path)?;
    let picks = sets
        .iter()
        .map(|c| bon::select(&artifact, c, variant, beta, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome {
        json: Some(to_json(&picks)?),
        plot: None,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    subcommand: &'a str,
    seed: u64,
    settings: &'a BTreeMap<String, String>,
    status: &'a str,
    error: Option<String>,
}

#[derive(Serialize)]
struct Timing {
    started_unix_seconds: f64,
    wall_seconds: f64,
}

fn manifest_paths(out: &Path, manifest: Option<PathBuf>) -> (PathBuf, PathBuf) {
    let m = manifest.unwrap_or_else(|| {
        if out.as_os_str() == "-" {
            PathBuf::from("hetpref.manifest.json")
        } else {
            PathBuf::from(format!("{}.manifest.json", out.display()))
        }
    });
    let stem = m.to_string_lossy();
    let t = PathBuf::from(match stem.strip_suffix(".manifest.json") {
        Some(base) => format!("{base}.timing.json"),
        None => format!("{stem}.timing.json"),
    });
    (m, t)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let started = SystemTime::now();
    let clock = Instant::now();
    let file = match cli.config.as_deref().map(parse_config).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let mut settings = Settings::from_file(file);
    let env_seed = std::env::var("HETPREF_SEED").ok();
    let seed = match (|| -> Result<(u64, PathBuf)> {
        let env = env_seed
            .map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| invalid(format!("HETPREF_SEED = {v:?} is not a u64")))
            })
            .transpose()?;
        let file_seed = settings.lookup::<u64>("seed", cli.seed)?;
        let seed = file_seed.or(env).unwrap_or(0);
        settings.echo.insert("seed".into(), seed.to_string());
        let out = settings.path("out", cli.out.clone())?.unwrap_or_else(|| PathBuf::from("-"));
        Ok((seed, out))
    })() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let (seed, out) = seed;
    let manifest_override = settings.path("manifest", cli.manifest.clone()).ok().flatten();
    let verbose = cli.verbose > 0;

    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Fit(_) => "fit",
        Command::Infer(_) => "infer",
        Command::Test(_) => "test",
        Command::Bon(_) => "bon",
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, &mut settings, seed, &out, verbose),
        Command::Fit(a) => fit_cmd(a, &mut settings, seed),
        Command::Infer(a) => infer_cmd(a, &mut settings, &out),
        Command::Test(a) => test_cmd(a, &mut settings),
        Command::Bon(a) => bon_cmd(a, &mut settings),
    }
    .and_then(|o| {
        if let Some(json) = &o.json {
            io::write_json(json, &out)?;
        }
        if let Some((path, rows)) = &o.plot {
            io::write_plot_csv(rows, path)?;
        }
        Ok(())
    });

    let (status, code, error) = match &result {
        Ok(()) => ("ok", EXIT_OK, None),
        Err(e) => {
            eprintln!("error: {e}");
            ("failed", exit_code(e), Some(e.to_string()))
        }
    };
    let (manifest_path, timing_path) = manifest_paths(&out, manifest_override);
    let manifest = Manifest {
        tool: "hetpref",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name,
        seed,
        settings: &settings.echo,
        status,
        error,
    };
    let timing = Timing {
        started_unix_seconds: started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    if let Err(e) = io::write_json(&manifest, &manifest_path)
        .and_then(|_| io::write_json(&timing, &timing_path))
    {
        eprintln!("warning: could not write manifest: {e}");
    }
    code
}
