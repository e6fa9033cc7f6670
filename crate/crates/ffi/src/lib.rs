//! C interface to `hetpref`.
//!
//! Every fallible function returns an [`HpStatus`]; on anything other than
//! `HP_STATUS_OK` the message is available from [`hp_last_error`] on the
//! same thread. Objects are opaque handles created by `hp_*_new`/`read`
//! style functions and released with the matching `hp_*_free`. Matrices are
//! passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hetpref::bon::{select, Candidate, Variant};
use hetpref::hypothesis::{reward_diff_test, VarianceMode, Verdict};
use hetpref::inference::{infer, reward_ci, ConfidenceInterval, InferenceArtifact};
use hetpref::model::{ModelParams, PreferenceDataset, PreferenceSample, QueryFeatures};
use hetpref::optimizer::{alternating_fit, FitConfig, FitResult, Init};
use hetpref::sim::{generate, SimSpec};
use hetpref::{io, normal_quantile, pessimistic_reward, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    EmptyDataset = 4,
    /// Divergence, a singular information matrix or a negative variance.
    Numerical = 5,
    Io = 6,
    /// Malformed, tampered or unsupported file contents.
    Format = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpVarianceMode {
    Independent = 0,
    DependentUpperBound = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpVerdict {
    Win = 0,
    Loss = 1,
    Tie = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpVariant {
    Bon = 0,
    Pbon = 1,
    BonKl = 2,
    PbonKl = 3,
    BonWd = 4,
    PbonWd = 5,
    BonL = 6,
    PbonL = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpInterval {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    pub alpha: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpTestResult {
    pub diff_point: f64,
    pub interval: HpInterval,
    pub verdict: HpVerdict,
}

/// Fitting options. Starting points are drawn uniformly from
/// `[init_lo, init_hi]`. `screen_iters = 0` disables screening and a
/// non-positive box bound disables that projection.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpFitConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub screen_iters: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub init_lo: f64,
    pub init_hi: f64,
    pub box_theta: f64,
    pub box_gamma: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpFitSummary {
    pub iterations_run: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub chosen_restart: usize,
}

/// Preference data.
pub struct HpDataset(PreferenceDataset);

/// Result of a fit.
pub struct HpFit(FitResult);

/// Fitted parameters with their covariance estimates.
pub struct HpArtifact(InferenceArtifact);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> HpStatus {
    match err {
        Error::DimensionMismatch { .. } => HpStatus::DimensionMismatch,
        Error::EmptyDataset => HpStatus::EmptyDataset,
        Error::InvalidSample { .. } | Error::InvalidArgument(_) => HpStatus::InvalidArgument,
        Error::Io { .. } => HpStatus::Io,
        e if e.is_numerical() => HpStatus::Numerical,
        _ => HpStatus::Format,
    }
}

struct Fail(HpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            HpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            HpStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn area(rows: usize, cols: usize) -> Result<usize, Fail> {
    rows
        .checked_mul(cols)
        .ok_or_else(|| Fail(HpStatus::InvalidArgument, format!("{rows} x {cols} elements overflow")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(HpStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

fn interval(ci: ConfidenceInterval) -> HpInterval {
    HpInterval {
        lower: ci.lower,
        upper: ci.upper,
        point: ci.point,
        alpha: ci.alpha,
    }
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// in bytes, excluding the terminator. Returns 0 after a successful call.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let k = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        e.len()
    })
}

/// Standard normal quantile for `p` in (0, 1).
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_normal_quantile(p: f64, out: *mut f64) -> HpStatus {
    guard(|| write(out, normal_quantile(p)?))
}

/// Builds a dataset from columns: `psi0` and `y` have `n` entries, `psi`
/// is `n x d2` and `z` is `n x d1`.
///
/// # Safety
/// Each array must be valid for the stated number of elements and `out`
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_new(
    n: usize,
    d1: usize,
    d2: usize,
    psi0: *const f64,
    psi: *const f64,
    z: *const f64,
    y: *const u8,
    out: *mut *mut HpDataset,
) -> HpStatus {
    guard(|| {
        let psi0 = slice(psi0, n, "psi0")?;
        let psi = slice(psi, area(n, d2)?, "psi")?;
        let z = slice(z, area(n, d1)?, "z")?;
        let y = slice(y, n, "y")?;
        let rows = (0..n).map(|i| PreferenceSample {
            psi0: psi0[i],
            psi: psi[i * d2..(i + 1) * d2].to_vec(),
            z: z[i * d1..(i + 1) * d1].to_vec(),
            y: y[i],
        });
        put(out, HpDataset(PreferenceDataset::from_samples(d1, d2, rows)?))
    })
}

/// Draws `n` comparisons from the built-in simulation design.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_simulate(n: usize, seed: u64, out: *mut *mut HpDataset) -> HpStatus {
    guard(|| {
        let spec = SimSpec {
            n,
            seed,
            ..SimSpec::default()
        };
        put(out, HpDataset(generate(&spec)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_read(path: *const c_char, out: *mut *mut HpDataset) -> HpStatus {
    guard(|| put(out, HpDataset(io::read_dataset(path_arg(path)?)?)))
}

/// # Safety
/// `data` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_write(data: *const HpDataset, path: *const c_char) -> HpStatus {
    guard(|| Ok(io::write_dataset(&get(data, "dataset")?.0, path_arg(path)?)?))
}

/// # Safety
/// `data` must come from this library; the outputs must be null or valid
/// for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_shape(
    data: *const HpDataset,
    n: *mut usize,
    d1: *mut usize,
    d2: *mut usize,
) -> HpStatus {
    guard(|| {
        let d = &get(data, "dataset")?.0;
        for (p, v) in [(n, d.len()), (d1, d.d1()), (d2, d.d2())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `data` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_free(data: *mut HpDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Default fitting options: single start, 2000 iterations.
#[no_mangle]
pub extern "C" fn hp_fit_config_default() -> HpFitConfig {
    let d = FitConfig::default();
    HpFitConfig {
        eta1: d.eta1,
        eta2: d.eta2,
        max_iters: d.max_iters,
        restarts: d.restarts,
        screen_iters: d.screen_iters.unwrap_or(0),
        seed: d.seed,
        grad_tol: d.grad_tol,
        init_lo: -1.0,
        init_hi: 1.0,
        box_theta: 0.0,
        box_gamma: 0.0,
    }
}

fn fit_config(c: &HpFitConfig) -> FitConfig {
    let bound = |b: f64| (b > 0.0).then_some(b);
    let init = Init::Uniform {
        lo: c.init_lo,
        hi: c.init_hi,
    };
    FitConfig {
        eta1: c.eta1,
        eta2: c.eta2,
        max_iters: c.max_iters,
        init_theta: init.clone(),
        init_gamma: init,
        seed: c.seed,
        grad_tol: c.grad_tol,
        box_theta: bound(c.box_theta),
        box_gamma: bound(c.box_gamma),
        restarts: c.restarts,
        screen_iters: (c.screen_iters > 0).then_some(c.screen_iters),
    }
}

/// Fits the model. `config` may be null for the defaults.
///
/// # Safety
/// `data` must come from this library, `config` must be null or valid and
/// `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_fit(data: *const HpDataset, config: *const HpFitConfig, out: *mut *mut HpFit) -> HpStatus {
    guard(|| {
        let data = &get(data, "dataset")?.0;
        let cfg = match config.as_ref() {
            Some(c) => fit_config(c),
            None => FitConfig::default(),
        };
        put(out, HpFit(alternating_fit(data, &cfg)?))
    })
}

/// Copies the fitted `theta` (`len` must equal d1) and `gamma` (d2).
///
/// # Safety
/// `fit` must come from this library; each output must be valid for its
/// length.
#[no_mangle]
pub unsafe extern "C" fn hp_fit_params(
    fit: *const HpFit,
    theta: *mut f64,
    theta_len: usize,
    gamma: *mut f64,
    gamma_len: usize,
) -> HpStatus {
    guard(|| {
        let p = &get(fit, "fit")?.0.params;
        copy_params(p, theta, theta_len, gamma, gamma_len)
    })
}

unsafe fn copy_params(
    p: &ModelParams,
    theta: *mut f64,
    theta_len: usize,
    gamma: *mut f64,
    gamma_len: usize,
) -> Result<(), Fail> {
    for (src, dst, len, name) in [(&p.theta, theta, theta_len, "theta"), (&p.gamma, gamma, gamma_len, "gamma")] {
        if len != src.len() {
            return Err(Fail(
                HpStatus::DimensionMismatch,
                format!("{name} buffer has length {len}, expected {}", src.len()),
            ));
        }
        if dst.is_null() {
            return Err(null(name));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
    }
    Ok(())
}

/// # Safety
/// `fit` must come from this library and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_fit_summary(fit: *const HpFit, out: *mut HpFitSummary) -> HpStatus {
    guard(|| {
        let f = &get(fit, "fit")?.0;
        write(
            out,
            HpFitSummary {
                iterations_run: f.iterations_run,
                converged: f.converged,
                final_loss: f.final_loss,
                chosen_restart: f.chosen_restart,
            },
        )
    })
}

/// # Safety
/// `fit` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_fit_free(fit: *mut HpFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Covariance estimates at the fitted parameters.
///
/// # Safety
/// `data` and `fit` must come from this library and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_infer(data: *const HpDataset, fit: *const HpFit, out: *mut *mut HpArtifact) -> HpStatus {
    guard(|| {
        let data = &get(data, "dataset")?.0;
        let fit = &get(fit, "fit")?.0;
        put(out, HpArtifact(infer(&fit.params, data)?))
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_artifact_read(path: *const c_char, out: *mut *mut HpArtifact) -> HpStatus {
    guard(|| put(out, HpArtifact(io::read_artifact(path_arg(path)?)?)))
}

/// # Safety
/// `artifact` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hp_artifact_write(artifact: *const HpArtifact, path: *const c_char) -> HpStatus {
    guard(|| Ok(io::write_artifact(&get(artifact, "artifact")?.0, path_arg(path)?)?))
}

/// # Safety
/// `artifact` must come from this library; the outputs must be null or
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_artifact_shape(
    artifact: *const HpArtifact,
    n: *mut usize,
    d1: *mut usize,
    d2: *mut usize,
) -> HpStatus {
    guard(|| {
        let a = &get(artifact, "artifact")?.0;
        for (p, v) in [(n, a.n()), (d1, a.d1()), (d2, a.d2())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// As [`hp_fit_params`].
#[no_mangle]
pub unsafe extern "C" fn hp_artifact_params(
    artifact: *const HpArtifact,
    theta: *mut f64,
    theta_len: usize,
    gamma: *mut f64,
    gamma_len: usize,
) -> HpStatus {
    guard(|| {
        let p = get(artifact, "artifact")?.0.params();
        copy_params(p, theta, theta_len, gamma, gamma_len)
    })
}

/// # Safety
/// `artifact` must be null or come from this library, and is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_artifact_free(artifact: *mut HpArtifact) {
    if !artifact.is_null() {
        drop(Box::from_raw(artifact));
    }
}

/// Level `1 - alpha` interval for the reward with features `phi`.
///
/// # Safety
/// `artifact` must come from this library, `phi` valid for `len` elements
/// and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_reward_ci(
    artifact: *const HpArtifact,
    phi: *const f64,
    len: usize,
    alpha: f64,
    out: *mut HpInterval,
) -> HpStatus {
    guard(|| {
        let a = &get(artifact, "artifact")?.0;
        let q = QueryFeatures::new(slice(phi, len, "phi")?.to_vec());
        write(out, interval(reward_ci(a, &q, alpha)?))
    })
}

/// Lower confidence bound of the reward.
///
/// # Safety
/// As [`hp_reward_ci`].
#[no_mangle]
pub unsafe extern "C" fn hp_pessimistic_reward(
    artifact: *const HpArtifact,
    phi: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> HpStatus {
    guard(|| {
        let a = &get(artifact, "artifact")?.0;
        let q = QueryFeatures::new(slice(phi, len, "phi")?.to_vec());
        write(out, pessimistic_reward(a, &q, alpha)?)
    })
}

/// Tests whether the answer with features `phi0` beats the one with `phi1`.
///
/// # Safety
/// `artifact` must come from this library, `phi0` and `phi1` valid for
/// `len` elements and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_reward_diff_test(
    artifact: *const HpArtifact,
    phi0: *const f64,
    phi1: *const f64,
    len: usize,
    alpha: f64,
    mode: HpVarianceMode,
    out: *mut HpTestResult,
) -> HpStatus {
    guard(|| {
        let a = &get(artifact, "artifact")?.0;
        let q0 = QueryFeatures::new(slice(phi0, len, "phi0")?.to_vec());
        let q1 = QueryFeatures::new(slice(phi1, len, "phi1")?.to_vec());
        let mode = match mode {
            HpVarianceMode::Independent => VarianceMode::Independent,
            HpVarianceMode::DependentUpperBound => VarianceMode::DependentUpperBound,
        };
        let t = reward_diff_test(a, &q0, &q1, alpha, mode)?;
        let verdict = match t.verdict {
            Verdict::Win => HpVerdict::Win,
            Verdict::Loss => HpVerdict::Loss,
            Verdict::Tie => HpVerdict::Tie,
        };
        write(
            out,
            HpTestResult {
                diff_point: t.diff_point,
                interval: interval(t.ci),
                verdict,
            },
        )
    })
}

/// Picks one of `k` candidates whose features are the rows of the `k x d1`
/// matrix `phis`. `penalties` (KL or Wasserstein variants) and `lengths`
/// (length variants) may be null when the variant does not use them.
/// Writes the chosen row index to `chosen`.
///
/// # Safety
/// `artifact` must come from this library, `phis` valid for `k * d1`
/// elements, `penalties` and `lengths` null or valid for `k` elements and
/// `chosen` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn hp_bon_select(
    artifact: *const HpArtifact,
    phis: *const f64,
    k: usize,
    d1: usize,
    penalties: *const f64,
    lengths: *const u32,
    variant: HpVariant,
    beta: f64,
    alpha: f64,
    chosen: *mut usize,
) -> HpStatus {
    guard(|| {
        let a = &get(artifact, "artifact")?.0;
        let phis = slice(phis, area(k, d1)?, "phis")?;
        let penalties = if penalties.is_null() { None } else { Some(slice(penalties, k, "penalties")?) };
        let lengths = if lengths.is_null() { None } else { Some(slice(lengths, k, "lengths")?) };
        let candidates: Vec<Candidate> = (0..k)
            .map(|i| Candidate {
                id: i.to_string(),
                phi: QueryFeatures::new(phis[i * d1..(i + 1) * d1].to_vec()),
                penalty: penalties.map(|p| p[i]),
                length: lengths.map(|l| l[i]),
            })
            .collect();
        let variant = match variant {
            HpVariant::Bon => Variant::Bon,
            HpVariant::Pbon => Variant::Pbon,
            HpVariant::BonKl => Variant::BonKl,
            HpVariant::PbonKl => Variant::PbonKl,
            HpVariant::BonWd => Variant::BonWd,
            HpVariant::PbonWd => Variant::PbonWd,
            HpVariant::BonL => Variant::BonL,
            HpVariant::PbonL => Variant::PbonL,
        };
        let pick = select(a, &candidates, variant, beta, alpha)?;
        let index = pick.chosen_id.parse().expect("ids are row indices");
        write(chosen, index)
    })
}
