//! Comparing the rewards of two answers to the same prompt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{reward_point, ConfidenceInterval, InferenceArtifact};
use crate::model::QueryFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The first answer is significantly better.
    Win,
    /// The first answer is significantly worse.
    Loss,
    Tie,
}

impl Verdict {
    /// Strict inequalities: an interval touching zero is a tie.
    pub fn from_interval(ci: &ConfidenceInterval) -> Self {
        if ci.lower > 0.0 {
            Verdict::Win
        } else if ci.upper < 0.0 {
            Verdict::Loss
        } else {
            Verdict::Tie
        }
    }
}

/// How the variance of the reward difference is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Sum of the two reward variances; answers from unrelated sources.
    Independent,
    /// `(sd0 + sd1)^2`, an upper bound valid under any dependence.
    DependentUpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// Fitted `r(a0) - r(a1)`.
    pub diff_point: f64,
    pub ci: ConfidenceInterval,
    pub verdict: Verdict,
    pub variance_mode: VarianceMode,
}

pub fn reward_diff_test(
    artifact: &InferenceArtifact,
    q0: &QueryFeatures,
    q1: &QueryFeatures,
    alpha: f64,
    mode: VarianceMode,
) -> Result<TestOutcome> {
    let params = artifact.params();
    let diff_point = reward_point(params, q0)? - reward_point(params, q1)?;
    let v0 = artifact.reward_variance(q0)?;
    let v1 = artifact.reward_variance(q1)?;
    let var = match mode {
        VarianceMode::Independent => v0 + v1,
        VarianceMode::DependentUpperBound => (v0.sqrt() + v1.sqrt()).powi(2),
    };
    let se = (var / artifact.n() as f64).sqrt();
    let ci = ConfidenceInterval::symmetric(diff_point, se, alpha)?;
    Ok(TestOutcome {
        diff_point,
        ci,
        verdict: Verdict::from_interval(&ci),
        variance_mode: mode,
    })
}

/// Wins count one, ties one half.
pub fn win_rate(outcomes: &[TestOutcome]) -> Result<f64> {
    win_rate_of(outcomes.iter().map(|o| o.verdict))
}

pub fn win_rate_of(verdicts: impl IntoIterator<Item = Verdict>) -> Result<f64> {
    let (mut score, mut total) = (0.0, 0usize);
    for v in verdicts {
        total += 1;
        score += match v {
            Verdict::Win => 1.0,
            Verdict::Tie => 0.5,
            Verdict::Loss => 0.0,
        };
    }
    if total == 0 {
        return Err(Error::InvalidArgument("win rate of an empty list".into()));
    }
    Ok(score / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use nalgebra::DMatrix;

    fn scalar_artifact(theta: f64, s2: f64, n: usize) -> InferenceArtifact {
        InferenceArtifact::new(
            ModelParams::new(vec![theta], vec![0.0]),
            n,
            DMatrix::from_element(1, 1, s2),
            DMatrix::identity(1, 1),
            0.0,
        )
        .unwrap()
    }

    fn ci(lower: f64, upper: f64) -> ConfidenceInterval {
        ConfidenceInterval {
            lower,
            upper,
            alpha: 0.05,
            point: 0.5 * (lower + upper),
        }
    }

    #[test]
    fn identical_answers_tie() {
        let a = scalar_artifact(1.3, 2.0, 50);
        let q: QueryFeatures = vec![0.7].into();
        for alpha in [0.01, 0.05, 0.5, 0.99] {
            let t = reward_diff_test(&a, &q, &q, alpha, VarianceMode::Independent).unwrap();
            assert_eq!(t.diff_point, 0.0);
            assert_eq!(t.verdict, Verdict::Tie);
        }
    }

    #[test]
    fn scalar_example() {
        let a = scalar_artifact(1.0, 1.0, 400);
        let t = reward_diff_test(
            &a,
            &vec![2.0].into(),
            &vec![0.0].into(),
            0.05,
            VarianceMode::Independent,
        )
        .unwrap();
        assert_eq!(t.diff_point, 2.0);
        assert!((t.ci.lower - 1.804).abs() < 1e-3);
        assert!((t.ci.upper - 2.196).abs() < 1e-3);
        assert_eq!(t.verdict, Verdict::Win);
    }

    #[test]
    fn reported_intervals() {
        assert_eq!(Verdict::from_interval(&ci(-1.138, 1.183)), Verdict::Tie);
        assert_eq!(Verdict::from_interval(&ci(0.384, 2.708)), Verdict::Win);
        assert_eq!(Verdict::from_interval(&ci(-2.0, -0.1)), Verdict::Loss);
        assert_eq!(Verdict::from_interval(&ci(0.0, 1.0)), Verdict::Tie);
        assert_eq!(Verdict::from_interval(&ci(-1.0, 0.0)), Verdict::Tie);
    }

    #[test]
    fn win_rate_examples() {
        use Verdict::*;
        assert_eq!(win_rate_of([Tie, Tie, Tie]).unwrap(), 0.5);
        assert_eq!(win_rate_of([Win, Loss]).unwrap(), 0.5);
        assert_eq!(win_rate_of([Win, Win, Tie, Loss]).unwrap(), 0.625);
        assert!(win_rate(&[]).is_err());
    }
}
