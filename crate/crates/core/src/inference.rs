//! Plug-in uncertainty quantification for the fitted parameters.
//!
//! The empirical information blocks are evaluated at the fitted parameters,
//! and the covariance of each block is the inverse of its Schur complement:
//!
//! ```text
//! S2_theta = [I_tt - I_gt' I_gg^-1 I_gt]^-1
//! S2_gamma = [I_gg - I_gt I_tt^-1 I_gt']^-1
//! ```
//!
//! With `n` samples, `sqrt(phi' S2_theta phi / n)` is the standard error of
//! the fitted reward `theta' phi`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{self, accumulate_outer, symmetrize, ModelParams, PreferenceDataset, QueryFeatures};
pub use crate::quantile::normal_quantile;

/// Jitter levels tried, in order, when a block fails to factor.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Quadratic forms this far below zero are treated as rounding noise.
const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Empirical information blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrices {
    /// d1 x d1
    pub theta_theta: DMatrix<f64>,
    /// d2 x d2
    pub gamma_gamma: DMatrix<f64>,
    /// d2 x d1
    pub gamma_theta: DMatrix<f64>,
}

impl InfoMatrices {
    /// The stacked (d1 + d2) square matrix with `theta` first.
    pub fn full(&self) -> DMatrix<f64> {
        let d1 = self.theta_theta.nrows();
        let d2 = self.gamma_gamma.nrows();
        let mut m = DMatrix::zeros(d1 + d2, d1 + d2);
        m.view_mut((0, 0), (d1, d1)).copy_from(&self.theta_theta);
        m.view_mut((d1, d1), (d2, d2)).copy_from(&self.gamma_gamma);
        m.view_mut((d1, 0), (d2, d1)).copy_from(&self.gamma_theta);
        m.view_mut((0, d1), (d1, d2))
            .copy_from(&self.gamma_theta.transpose());
        m
    }
}

/// Information estimators at `params`. The cross block is the expected
/// form: the residual term of the observed Hessian is dropped.
pub fn empirical_info(params: &ModelParams, data: &PreferenceDataset) -> Result<InfoMatrices> {
    let w = model::weights(params, data)?;
    let (d1, d2) = (data.d1(), data.d2());
    let mut tt = DMatrix::zeros(d1, d1);
    let mut gg = DMatrix::zeros(d2, d2);
    let mut gt = DMatrix::zeros(d2, d1);
    for (s, &(weight, scale, diff)) in data.iter().zip(&w) {
        accumulate_outer(&mut tt, weight * scale * scale, s.z, s.z);
        accumulate_outer(&mut gg, weight * diff * diff, s.psi, s.psi);
        accumulate_outer(&mut gt, weight * scale * diff, s.psi, s.z);
    }
    let inv_n = 1.0 / data.len() as f64;
    Ok(InfoMatrices {
        theta_theta: symmetrize(tt * inv_n),
        gamma_gamma: symmetrize(gg * inv_n),
        gamma_theta: gt * inv_n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurCovariances {
    pub s2_theta: DMatrix<f64>,
    pub s2_gamma: DMatrix<f64>,
    /// Ridge added to both diagonal blocks, zero when none was needed.
    pub jitter_used: f64,
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::<f64, Dyn>::new(m.clone()).map(|c| symmetrize(c.inverse()))
}

fn with_ridge(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    if eps == 0.0 {
        return m.clone();
    }
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += eps;
    }
    out
}

fn schur_at(info: &InfoMatrices, eps: f64) -> std::result::Result<(DMatrix<f64>, DMatrix<f64>), &'static str> {
    let tt = with_ridge(&info.theta_theta, eps);
    let gg = with_ridge(&info.gamma_gamma, eps);
    let gt = &info.gamma_theta;
    let tt_inv = spd_inverse(&tt).ok_or("theta-theta information")?;
    let gg_inv = spd_inverse(&gg).ok_or("gamma-gamma information")?;
    let theta_schur = symmetrize(&tt - gt.transpose() * &gg_inv * gt);
    let gamma_schur = symmetrize(&gg - gt * &tt_inv * gt.transpose());
    let s2_theta = spd_inverse(&theta_schur).ok_or("theta Schur complement")?;
    let s2_gamma = spd_inverse(&gamma_schur).ok_or("gamma Schur complement")?;
    Ok((s2_theta, s2_gamma))
}

/// Schur-complement covariances, climbing [`JITTER_LADDER`] until every
/// factorization succeeds.
pub fn schur_covariances(info: &InfoMatrices) -> Result<SchurCovariances> {
    let (d1, d2) = (info.theta_theta.nrows(), info.gamma_gamma.nrows());
    if info.theta_theta.ncols() != d1
        || info.gamma_gamma.ncols() != d2
        || info.gamma_theta.shape() != (d2, d1)
    {
        return Err(Error::InvalidArgument(
            "information blocks have inconsistent shapes".into(),
        ));
    }
    if info
        .theta_theta
        .iter()
        .chain(info.gamma_gamma.iter())
        .chain(info.gamma_theta.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidArgument(
            "information blocks contain non-finite entries".into(),
        ));
    }
    let mut failed = "";
    for eps in JITTER_LADDER {
        match schur_at(info, eps) {
            Ok((s2_theta, s2_gamma)) => {
                return Ok(SchurCovariances {
                    s2_theta,
                    s2_gamma,
                    jitter_used: eps,
                })
            }
            Err(block) => failed = block,
        }
    }
    Err(Error::Singular {
        block: failed,
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Everything needed to build intervals without the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceArtifact {
    params: ModelParams,
    n: usize,
    s2_theta: DMatrix<f64>,
    s2_gamma: DMatrix<f64>,
    jitter_used: f64,
}

fn check_spd(name: &'static str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            what: name,
            expected: dim,
            actual: m.nrows(),
        });
    }
    let scale = m.amax().max(1.0);
    for i in 0..dim {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "{name} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) || Cholesky::<f64, Dyn>::new(m.clone()).is_none() {
        return Err(Error::InvalidArgument(format!(
            "{name} is not positive definite"
        )));
    }
    Ok(())
}

impl InferenceArtifact {
    pub fn new(
        params: ModelParams,
        n: usize,
        s2_theta: DMatrix<f64>,
        s2_gamma: DMatrix<f64>,
        jitter_used: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        if !params.is_finite() {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        if !(jitter_used.is_finite() && jitter_used >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "jitter must be nonnegative, got {jitter_used}"
            )));
        }
        check_spd("s2_theta", &s2_theta, params.theta.len())?;
        check_spd("s2_gamma", &s2_gamma, params.gamma.len())?;
        Ok(Self {
            params,
            n,
            s2_theta,
            s2_gamma,
            jitter_used,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s2_theta(&self) -> &DMatrix<f64> {
        &self.s2_theta
    }

    pub fn s2_gamma(&self) -> &DMatrix<f64> {
        &self.s2_gamma
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn d1(&self) -> usize {
        self.params.theta.len()
    }

    pub fn d2(&self) -> usize {
        self.params.gamma.len()
    }

    /// `phi' S2_theta phi`, the asymptotic variance of `sqrt(n)` times the
    /// reward error at `phi`.
    pub fn reward_variance(&self, q: &QueryFeatures) -> Result<f64> {
        self.check_query(q)?;
        let phi = DVector::from_column_slice(q.as_slice());
        let v = phi.dot(&(&self.s2_theta * &phi));
        if v < -NEGATIVE_TOLERANCE {
            return Err(Error::NegativeVariance { value: v });
        }
        Ok(v.max(0.0))
    }

    /// Standard error of the fitted reward at `phi`.
    pub fn reward_se(&self, q: &QueryFeatures) -> Result<f64> {
        Ok((self.reward_variance(q)? / self.n as f64).sqrt())
    }

    pub(crate) fn check_query(&self, q: &QueryFeatures) -> Result<()> {
        if q.len() != self.d1() {
            return Err(Error::DimensionMismatch {
                what: "phi",
                expected: self.d1(),
                actual: q.len(),
            });
        }
        if q.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("phi has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Empirical information at the fit, then the Schur covariances.
pub fn infer(params: &ModelParams, data: &PreferenceDataset) -> Result<InferenceArtifact> {
    let info = empirical_info(params, data)?;
    let cov = schur_covariances(&info)?;
    InferenceArtifact::new(
        params.clone(),
        data.len(),
        cov.s2_theta,
        cov.s2_gamma,
        cov.jitter_used,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub point: f64,
}

impl ConfidenceInterval {
    /// `point -/+ z_{1 - alpha/2} * se`
    pub fn symmetric(point: f64, se: f64, alpha: f64) -> Result<Self> {
        let half = critical_value(alpha)? * se;
        Ok(Self {
            lower: point - half,
            upper: point + half,
            alpha,
            point,
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Two-sided critical value `z_{1 - alpha/2}`.
pub fn critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    normal_quantile(1.0 - alpha / 2.0)
}

/// Fitted reward `theta' phi`.
pub fn reward_point(params: &ModelParams, q: &QueryFeatures) -> Result<f64> {
    if q.len() != params.theta.len() {
        return Err(Error::DimensionMismatch {
            what: "phi",
            expected: params.theta.len(),
            actual: q.len(),
        });
    }
    Ok(model::dot(&params.theta, q.as_slice()))
}

pub fn reward_ci(artifact: &InferenceArtifact, q: &QueryFeatures, alpha: f64) -> Result<ConfidenceInterval> {
    let point = reward_point(artifact.params(), q)?;
    let se = artifact.reward_se(q)?;
    ConfidenceInterval::symmetric(point, se, alpha)
}

pub fn gamma_component_ci(artifact: &InferenceArtifact, index: usize, alpha: f64) -> Result<ConfidenceInterval> {
    if index >= artifact.d2() {
        return Err(Error::InvalidArgument(format!(
            "gamma index {index} out of range for d2 = {}",
            artifact.d2()
        )));
    }
    let se = (artifact.s2_gamma[(index, index)] / artifact.n as f64).sqrt();
    ConfidenceInterval::symmetric(artifact.params.gamma[index], se, alpha)
}

/// Interval for one component of `theta`, i.e. the reward CI at `e_index`.
pub fn theta_component_ci(artifact: &InferenceArtifact, index: usize, alpha: f64) -> Result<ConfidenceInterval> {
    if index >= artifact.d1() {
        return Err(Error::InvalidArgument(format!(
            "theta index {index} out of range for d1 = {}",
            artifact.d1()
        )));
    }
    let se = (artifact.s2_theta[(index, index)] / artifact.n as f64).sqrt();
    ConfidenceInterval::symmetric(artifact.params.theta[index], se, alpha)
}
