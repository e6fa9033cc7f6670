//! The scale-heterogeneity preference model.
//!
//! An annotator with context `x` compares answers `a0` and `a1` to a prompt
//! `s`. With `z = phi(s, a1) - phi(s, a0)` and the rationality scale
//! `sigma(x) = psi0(x) + gamma' psi(x)`, the probability that `a1` is
//! preferred is `mu(sigma(x) * theta' z)` with `mu` the logistic function.
//! A scale of one everywhere recovers the ordinary Bradley-Terry-Luce model;
//! a non-positive scale models an annotator who is noisy or adversarial.
//!
//! Everything here is a pure function of its inputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest probability the loss will take a log of. Terms beyond it are
/// clamped and reported as saturated.
pub const PROB_FLOOR: f64 = 1e-300;

/// One pairwise comparison with pre-encoded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSample {
    pub psi0: f64,
    pub psi: Vec<f64>,
    pub z: Vec<f64>,
    /// 1 when the second answer was preferred.
    pub y: u8,
}

impl PreferenceSample {
    pub fn view(&self) -> SampleView<'_> {
        SampleView {
            psi0: self.psi0,
            psi: &self.psi,
            z: &self.z,
            y: self.y,
        }
    }
}

/// Borrowed view of a sample stored inside a [`PreferenceDataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleView<'a> {
    pub psi0: f64,
    pub psi: &'a [f64],
    pub z: &'a [f64],
    pub y: u8,
}

impl SampleView<'_> {
    pub fn to_owned(&self) -> PreferenceSample {
        PreferenceSample {
            psi0: self.psi0,
            psi: self.psi.to_vec(),
            z: self.z.to_vec(),
            y: self.y,
        }
    }
}

/// A validated collection of comparisons sharing dimensions `(d1, d2)`.
///
/// Rows are stored column-flattened so the gradient loops walk contiguous
/// memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    d1: usize,
    d2: usize,
    psi0: Vec<f64>,
    psi: Vec<f64>,
    z: Vec<f64>,
    y: Vec<u8>,
}

impl PreferenceDataset {
    /// An empty dataset. It must receive at least one sample before any
    /// likelihood computation accepts it.
    pub fn with_dims(d1: usize, d2: usize) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got d1 = {d1}, d2 = {d2}"
            )));
        }
        Ok(Self {
            d1,
            d2,
            psi0: Vec::new(),
            psi: Vec::new(),
            z: Vec::new(),
            y: Vec::new(),
        })
    }

    pub fn from_samples<I>(d1: usize, d2: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = PreferenceSample>,
    {
        let mut data = Self::with_dims(d1, d2)?;
        for sample in samples {
            data.push(sample)?;
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(data)
    }

    pub fn push(&mut self, sample: PreferenceSample) -> Result<()> {
        self.push_parts(sample.psi0, &sample.psi, &sample.z, sample.y)
    }

    pub(crate) fn push_parts(&mut self, psi0: f64, psi: &[f64], z: &[f64], y: u8) -> Result<()> {
        let index = self.len();
        if psi.len() != self.d2 {
            return Err(Error::InvalidSample {
                index,
                reason: format!("psi has length {}, expected {}", psi.len(), self.d2),
            });
        }
        if z.len() != self.d1 {
            return Err(Error::InvalidSample {
                index,
                reason: format!("z has length {}, expected {}", z.len(), self.d1),
            });
        }
        if y > 1 {
            return Err(Error::InvalidSample {
                index,
                reason: format!("label must be 0 or 1, got {y}"),
            });
        }
        if !psi0.is_finite() || psi.iter().chain(z).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample {
                index,
                reason: "non-finite feature value".into(),
            });
        }
        self.psi0.push(psi0);
        self.psi.extend_from_slice(psi);
        self.z.extend_from_slice(z);
        self.y.push(y);
        Ok(())
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn sample(&self, i: usize) -> SampleView<'_> {
        SampleView {
            psi0: self.psi0[i],
            psi: &self.psi[i * self.d2..(i + 1) * self.d2],
            z: &self.z[i * self.d1..(i + 1) * self.d1],
            y: self.y[i],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = SampleView<'_>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }
}

/// Reward parameter `theta` (length d1) and rationality parameter `gamma`
/// (length d2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self { theta, gamma }
    }

    pub fn zeros(d1: usize, d2: usize) -> Self {
        Self::new(vec![0.0; d1], vec![0.0; d2])
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.gamma).all(|v| v.is_finite())
    }

    pub fn check_dims(&self, d1: usize, d2: usize) -> Result<()> {
        if self.theta.len() != d1 {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: d1,
                actual: self.theta.len(),
            });
        }
        if self.gamma.len() != d2 {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                expected: d2,
                actual: self.gamma.len(),
            });
        }
        Ok(())
    }

    fn check_against(&self, data: &PreferenceDataset) -> Result<()> {
        self.check_dims(data.d1(), data.d2())
    }
}

/// Feature vector `phi(s, a)` of one prompt/answer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryFeatures(pub Vec<f64>);

impl QueryFeatures {
    pub fn new(phi: Vec<f64>) -> Self {
        Self(phi)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for QueryFeatures {
    fn from(phi: Vec<f64>) -> Self {
        Self(phi)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function, branching on the sign so `exp` never overflows.
#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(v))` without cancellation or overflow.
#[inline]
pub fn log_sigmoid(v: f64) -> f64 {
    -((-v).max(0.0) + (-v.abs()).exp().ln_1p())
}

/// Per-sample quantities shared by the loss, gradients and Hessians.
#[derive(Debug, Clone, Copy)]
struct Logit {
    /// sigma(x)
    scale: f64,
    /// theta' z
    reward_diff: f64,
    /// mu(scale * reward_diff)
    prob: f64,
    /// mu (1 - mu)
    weight: f64,
    /// negative log-likelihood contribution (possibly clamped)
    loss: f64,
    saturated: bool,
}

#[inline]
fn evaluate(params: &ModelParams, s: SampleView<'_>) -> Logit {
    let scale = s.psi0 + dot(&params.gamma, s.psi);
    let reward_diff = dot(&params.theta, s.z);
    let v = scale * reward_diff;
    let e = (-v.abs()).exp();
    let denom = 1.0 + e;
    let prob = if v >= 0.0 { 1.0 / denom } else { e / denom };
    let weight = e / (denom * denom);
    // -log mu(v) = softplus(-v); -log(1 - mu(v)) = softplus(v)
    let signed = if s.y == 1 { -v } else { v };
    let mut loss = signed.max(0.0) + e.ln_1p();
    let ceiling = -PROB_FLOOR.ln();
    let saturated = loss > ceiling;
    if saturated {
        loss = ceiling;
    }
    Logit {
        scale,
        reward_diff,
        prob,
        weight,
        loss,
        saturated,
    }
}

fn check_sample(params: &ModelParams, s: SampleView<'_>) -> Result<()> {
    if s.z.len() != params.theta.len() {
        return Err(Error::DimensionMismatch {
            what: "z",
            expected: params.theta.len(),
            actual: s.z.len(),
        });
    }
    if s.psi.len() != params.gamma.len() {
        return Err(Error::DimensionMismatch {
            what: "psi",
            expected: params.gamma.len(),
            actual: s.psi.len(),
        });
    }
    Ok(())
}

/// Rationality scale `psi0 + gamma' psi`. May be zero or negative.
pub fn scale_value(params: &ModelParams, sample: SampleView<'_>) -> Result<f64> {
    check_sample(params, sample)?;
    Ok(sample.psi0 + dot(&params.gamma, sample.psi))
}

/// Probability that the second answer is preferred.
pub fn preference_prob(params: &ModelParams, sample: SampleView<'_>) -> Result<f64> {
    check_sample(params, sample)?;
    Ok(evaluate(params, sample).prob)
}

/// Loss value plus the indices of samples whose probability underflowed
/// against their label and were clamped at [`PROB_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub saturated: Vec<usize>,
}

pub fn neg_log_likelihood(params: &ModelParams, data: &PreferenceDataset) -> Result<f64> {
    Ok(loss_report(params, data)?.value)
}

pub fn loss_report(params: &ModelParams, data: &PreferenceDataset) -> Result<LossReport> {
    data.check_nonempty()?;
    params.check_against(data)?;
    let mut total = 0.0;
    let mut saturated = Vec::new();
    for (i, s) in data.iter().enumerate() {
        let l = evaluate(params, s);
        total += l.loss;
        if l.saturated {
            saturated.push(i);
        }
    }
    Ok(LossReport {
        value: total / data.len() as f64,
        saturated,
    })
}

/// Loss and theta-gradient from a single pass over the data.
pub fn loss_and_grad_theta(
    params: &ModelParams,
    data: &PreferenceDataset,
) -> Result<(f64, Vec<f64>)> {
    data.check_nonempty()?;
    params.check_against(data)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; data.d1()];
    for s in data.iter() {
        let l = evaluate(params, s);
        loss += l.loss;
        let coef = (f64::from(s.y) - l.prob) * l.scale;
        for (g, zj) in grad.iter_mut().zip(s.z) {
            *g += coef * zj;
        }
    }
    let inv_n = 1.0 / data.len() as f64;
    for g in &mut grad {
        *g *= -inv_n;
    }
    Ok((loss * inv_n, grad))
}

/// `-(1/n) sum (y - mu) sigma z`
pub fn grad_theta(params: &ModelParams, data: &PreferenceDataset) -> Result<Vec<f64>> {
    loss_and_grad_theta(params, data).map(|(_, g)| g)
}

/// `-(1/n) sum (y - mu) (theta' z) psi`
pub fn grad_gamma(params: &ModelParams, data: &PreferenceDataset) -> Result<Vec<f64>> {
    data.check_nonempty()?;
    params.check_against(data)?;
    let mut grad = vec![0.0; data.d2()];
    for s in data.iter() {
        let l = evaluate(params, s);
        let coef = (f64::from(s.y) - l.prob) * l.reward_diff;
        for (g, pj) in grad.iter_mut().zip(s.psi) {
            *g += coef * pj;
        }
    }
    let inv_n = 1.0 / data.len() as f64;
    for g in &mut grad {
        *g *= -inv_n;
    }
    Ok(grad)
}

/// The three blocks of the Hessian of the negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlocks {
    /// d1 x d1, positive semidefinite
    pub theta_theta: DMatrix<f64>,
    /// d2 x d2, positive semidefinite
    pub gamma_gamma: DMatrix<f64>,
    /// d2 x d1 cross block, derivative of the gamma-gradient in theta
    pub gamma_theta: DMatrix<f64>,
}

pub fn hessian_blocks(params: &ModelParams, data: &PreferenceDataset) -> Result<HessianBlocks> {
    data.check_nonempty()?;
    params.check_against(data)?;
    let (d1, d2) = (data.d1(), data.d2());
    let mut tt = DMatrix::zeros(d1, d1);
    let mut gg = DMatrix::zeros(d2, d2);
    let mut gt = DMatrix::zeros(d2, d1);
    for s in data.iter() {
        let l = evaluate(params, s);
        let a = l.weight * l.scale * l.scale;
        let b = l.weight * l.reward_diff * l.reward_diff;
        // residual term survives in the observed cross block
        let c = -(f64::from(s.y) - l.prob - l.weight * l.scale * l.reward_diff);
        accumulate_outer(&mut tt, a, s.z, s.z);
        accumulate_outer(&mut gg, b, s.psi, s.psi);
        accumulate_outer(&mut gt, c, s.psi, s.z);
    }
    let inv_n = 1.0 / data.len() as f64;
    Ok(HessianBlocks {
        theta_theta: symmetrize(tt * inv_n),
        gamma_gamma: symmetrize(gg * inv_n),
        gamma_theta: gt * inv_n,
    })
}

pub(crate) fn accumulate_outer(m: &mut DMatrix<f64>, coef: f64, left: &[f64], right: &[f64]) {
    if coef == 0.0 {
        return;
    }
    for (i, li) in left.iter().enumerate() {
        let ci = coef * li;
        for (j, rj) in right.iter().enumerate() {
            m[(i, j)] += ci * rj;
        }
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Per-sample `(weight, scale, reward_diff)` used by the information
/// estimators.
pub(crate) fn weights(params: &ModelParams, data: &PreferenceDataset) -> Result<Vec<(f64, f64, f64)>> {
    data.check_nonempty()?;
    params.check_against(data)?;
    Ok(data
        .iter()
        .map(|s| {
            let l = evaluate(params, s);
            (l.weight, l.scale, l.reward_diff)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(psi0: f64, psi: Vec<f64>, z: Vec<f64>, y: u8) -> PreferenceDataset {
        let d1 = z.len();
        let d2 = psi.len();
        PreferenceDataset::from_samples(d1, d2, [PreferenceSample { psi0, psi, z, y }]).unwrap()
    }

    #[test]
    fn scale_examples() {
        let s = PreferenceSample {
            psi0: 1.0,
            psi: vec![0.7, -2.0],
            z: vec![1.0],
            y: 1,
        };
        let p = ModelParams::new(vec![0.0], vec![0.0, 0.0]);
        assert_eq!(scale_value(&p, s.view()).unwrap(), 1.0);

        let p = ModelParams::new(vec![0.0], vec![0.5, 1.0 / 3.0]);
        let s = PreferenceSample {
            psi0: 1.0,
            psi: vec![1.0, 1.0],
            z: vec![1.0],
            y: 1,
        };
        assert!((scale_value(&p, s.view()).unwrap() - 11.0 / 6.0).abs() < 1e-15);

        // x = -1 with psi(x) = (x^3, x^2), psi0(x) = x
        let x: f64 = -1.0;
        let s = PreferenceSample {
            psi0: x,
            psi: vec![x.powi(3), x.powi(2)],
            z: vec![1.0],
            y: 0,
        };
        assert!((scale_value(&p, s.view()).unwrap() + 7.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn scale_dimension_error_names_lengths() {
        let p = ModelParams::new(vec![0.0], vec![0.0, 0.0, 0.0]);
        let s = PreferenceSample {
            psi0: 1.0,
            psi: vec![1.0, 1.0],
            z: vec![1.0],
            y: 1,
        };
        match scale_value(&p, s.view()) {
            Err(Error::DimensionMismatch {
                expected, actual, ..
            }) => assert_eq!((expected, actual), (3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn probability_examples() {
        let p = ModelParams::new(vec![0.0, 0.0], vec![1.0]);
        let s = PreferenceSample {
            psi0: 3.0,
            psi: vec![2.0],
            z: vec![1.0, -4.0],
            y: 1,
        };
        assert_eq!(preference_prob(&p, s.view()).unwrap(), 0.5);

        // zero scale
        let p = ModelParams::new(vec![5.0, 1.0], vec![-1.0]);
        let s = PreferenceSample {
            psi0: 2.0,
            psi: vec![2.0],
            z: vec![1.0, -4.0],
            y: 1,
        };
        assert_eq!(preference_prob(&p, s.view()).unwrap(), 0.5);

        let p = ModelParams::new(vec![3f64.ln()], vec![0.0]);
        let s = PreferenceSample {
            psi0: 1.0,
            psi: vec![0.0],
            z: vec![1.0],
            y: 1,
        };
        assert!((preference_prob(&p, s.view()).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        for v in [-1e4, -745.0, -700.0, 0.0, 700.0, 1e4] {
            let p = sigmoid(v);
            assert!((0.0..=1.0).contains(&p));
            assert!(log_sigmoid(v).is_finite());
        }
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-12);
        assert!(sigmoid(-30.0) > 0.0 && sigmoid(30.0) < 1.0);
    }

    #[test]
    fn nll_examples() {
        let d = one(1.0, vec![0.0], vec![0.0], 1);
        let p = ModelParams::new(vec![1.0], vec![0.0]);
        assert!((neg_log_likelihood(&p, &d).unwrap() - 2f64.ln()).abs() < 1e-15);

        let d = PreferenceDataset::from_samples(
            1,
            1,
            [0u8, 1].map(|y| PreferenceSample {
                psi0: 1.0,
                psi: vec![0.0],
                z: vec![0.0],
                y,
            }),
        )
        .unwrap();
        assert!((neg_log_likelihood(&p, &d).unwrap() - 2f64.ln()).abs() < 1e-15);

        let d = one(1.0, vec![0.0], vec![1.0], 1);
        let p = ModelParams::new(vec![3f64.ln()], vec![0.0]);
        assert!((neg_log_likelihood(&p, &d).unwrap() - 0.287_682_072_451_780_9).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = PreferenceDataset::with_dims(1, 1).unwrap();
        let p = ModelParams::zeros(1, 1);
        assert!(matches!(neg_log_likelihood(&p, &d), Err(Error::EmptyDataset)));
        assert!(matches!(grad_theta(&p, &d), Err(Error::EmptyDataset)));
        assert!(matches!(hessian_blocks(&p, &d), Err(Error::EmptyDataset)));
        assert!(matches!(
            PreferenceDataset::from_samples(1, 1, []),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn invalid_samples_rejected() {
        let mut d = PreferenceDataset::with_dims(1, 1).unwrap();
        let bad_label = PreferenceSample {
            psi0: 1.0,
            psi: vec![0.0],
            z: vec![0.0],
            y: 2,
        };
        assert!(matches!(d.push(bad_label), Err(Error::InvalidSample { index: 0, .. })));
        let nan = PreferenceSample {
            psi0: f64::NAN,
            psi: vec![0.0],
            z: vec![0.0],
            y: 0,
        };
        assert!(d.push(nan).is_err());
        let short = PreferenceSample {
            psi0: 1.0,
            psi: vec![],
            z: vec![0.0],
            y: 0,
        };
        assert!(d.push(short).is_err());
    }

    #[test]
    fn extreme_logit_loss_is_clamped_and_flagged() {
        let d = one(1.0, vec![0.0], vec![1.0], 0);
        let p = ModelParams::new(vec![1e4], vec![0.0]);
        let report = loss_report(&p, &d).unwrap();
        assert_eq!(report.saturated, vec![0]);
        assert!((report.value + PROB_FLOOR.ln()).abs() < 1e-9);

        let p = ModelParams::new(vec![600.0], vec![0.0]);
        let report = loss_report(&p, &d).unwrap();
        assert!(report.saturated.is_empty());
        assert!((report.value - 600.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_examples() {
        let d = one(1.0, vec![0.0], vec![1.0], 1);
        let p = ModelParams::new(vec![0.0], vec![0.0]);
        assert!((grad_theta(&p, &d).unwrap()[0] + 0.5).abs() < 1e-15);

        let d = one(0.0, vec![1.0], vec![1.0], 1);
        let p = ModelParams::new(vec![1.0], vec![0.0]);
        assert!((grad_gamma(&p, &d).unwrap()[0] + 0.5).abs() < 1e-15);

        // theta = 0 kills the gamma gradient
        let d = one(0.3, vec![1.0, -2.0], vec![1.0, 4.0], 1);
        let p = ModelParams::new(vec![0.0, 0.0], vec![0.4, 0.1]);
        assert_eq!(grad_gamma(&p, &d).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn cross_block_counterexample() {
        // d1 = d2 = 1, z = (2, 1), psi = (1, 2), y = (1, 1), theta = 0, psi0 = 0
        let d = PreferenceDataset::from_samples(
            1,
            1,
            [(2.0, 1.0), (1.0, 2.0)].map(|(z, psi)| PreferenceSample {
                psi0: 0.0,
                psi: vec![psi],
                z: vec![z],
                y: 1,
            }),
        )
        .unwrap();
        let p = ModelParams::new(vec![0.0], vec![0.7]);
        let h = hessian_blocks(&p, &d).unwrap();
        assert!((h.gamma_theta[(0, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(h.gamma_gamma[(0, 0)], 0.0);
        let det = h.theta_theta[(0, 0)] * h.gamma_gamma[(0, 0)] - h.gamma_theta[(0, 0)].powi(2);
        assert!(det < 0.0);
    }

    #[test]
    fn balanced_labels_at_zero_theta_zero_cross_blocks() {
        let d = PreferenceDataset::from_samples(
            2,
            1,
            [0u8, 1].map(|y| PreferenceSample {
                psi0: 1.0,
                psi: vec![1.5],
                z: vec![1.0, -1.0],
                y,
            }),
        )
        .unwrap();
        let h = hessian_blocks(&ModelParams::new(vec![0.0, 0.0], vec![0.2]), &d).unwrap();
        assert!(h.gamma_gamma.iter().all(|v| *v == 0.0));
        assert!(h.gamma_theta.iter().all(|v| *v == 0.0));
    }
}
