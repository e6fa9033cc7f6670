//! Best-of-N answer selection, optionally pessimistic and regularized.
//!
//! Pessimistic variants score a candidate by the lower confidence bound of
//! its reward rather than the point estimate. That bound equals the minimum
//! of `theta' phi` over the confidence ellipsoid around the fitted `theta`,
//! so a candidate whose reward is poorly determined is discounted.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{reward_ci, reward_point, InferenceArtifact};
use crate::model::{self, QueryFeatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub phi: QueryFeatures,
    /// Precomputed KL or Wasserstein distance to the reference policy.
    pub penalty: Option<f64>,
    /// Answer length `|a|`.
    pub length: Option<u32>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, phi: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            phi: phi.into(),
            penalty: None,
            length: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "BoN")]
    Bon,
    #[serde(rename = "PBoN")]
    Pbon,
    #[serde(rename = "BoN_KL")]
    BonKl,
    #[serde(rename = "PBoN_KL")]
    PbonKl,
    #[serde(rename = "BoN_WD")]
    BonWd,
    #[serde(rename = "PBoN_WD")]
    PbonWd,
    #[serde(rename = "BoN_L")]
    BonL,
    #[serde(rename = "PBoN_L")]
    PbonL,
}

enum Regularizer {
    None,
    Penalty,
    InverseLength,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Bon,
        Variant::Pbon,
        Variant::BonKl,
        Variant::PbonKl,
        Variant::BonWd,
        Variant::PbonWd,
        Variant::BonL,
        Variant::PbonL,
    ];

    pub fn is_pessimistic(self) -> bool {
        matches!(
            self,
            Variant::Pbon | Variant::PbonKl | Variant::PbonWd | Variant::PbonL
        )
    }

    fn regularizer(self) -> Regularizer {
        match self {
            Variant::Bon | Variant::Pbon => Regularizer::None,
            Variant::BonKl | Variant::PbonKl | Variant::BonWd | Variant::PbonWd => {
                Regularizer::Penalty
            }
            Variant::BonL | Variant::PbonL => Regularizer::InverseLength,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bon => "BoN",
            Variant::Pbon => "PBoN",
            Variant::BonKl => "BoN_KL",
            Variant::PbonKl => "PBoN_KL",
            Variant::BonWd => "BoN_WD",
            Variant::PbonWd => "PBoN_WD",
            Variant::BonL => "BoN_L",
            Variant::PbonL => "PBoN_L",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown BoN variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub id: String,
    pub point_reward: f64,
    pub lower_bound: f64,
    pub regularizer_term: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonSelection {
    pub chosen_id: String,
    /// One entry per candidate, in input order.
    pub scores: Vec<CandidateScore>,
    pub variant: Variant,
    pub beta: f64,
    pub alpha: f64,
}

/// Lower confidence bound of the reward at `phi`.
pub fn pessimistic_reward(artifact: &InferenceArtifact, q: &QueryFeatures, alpha: f64) -> Result<f64> {
    Ok(reward_ci(artifact, q, alpha)?.lower)
}

pub fn select(
    artifact: &InferenceArtifact,
    candidates: &[Candidate],
    variant: Variant,
    beta: f64,
    alpha: f64,
) -> Result<BonSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must be finite and nonnegative, got {beta}"
        )));
    }
    let mut seen = HashSet::new();
    let mut scores = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate candidate id {:?}", c.id)));
        }
        let ci = reward_ci(artifact, &c.phi, alpha)?;
        let reg = match variant.regularizer() {
            Regularizer::None => 0.0,
            Regularizer::Penalty => match c.penalty {
                Some(p) if p.is_finite() && p >= 0.0 => p,
                Some(p) => {
                    return Err(Error::InvalidArgument(format!(
                        "candidate {:?} has invalid penalty {p}",
                        c.id
                    )))
                }
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "{variant} needs a penalty for candidate {:?}",
                        c.id
                    )))
                }
            },
            Regularizer::InverseLength => match c.length {
                Some(len) if len > 0 => 1.0 / f64::from(len),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "{variant} needs a positive length for candidate {:?}",
                        c.id
                    )))
                }
            },
        };
        let base = if variant.is_pessimistic() {
            ci.lower
        } else {
            ci.point
        };
        scores.push(CandidateScore {
            id: c.id.clone(),
            point_reward: ci.point,
            lower_bound: ci.lower,
            regularizer_term: reg,
            objective: base - beta * reg,
        });
    }
    let chosen = scores
        .iter()
        .reduce(|best, s| {
            if s.objective > best.objective || (s.objective == best.objective && s.id < best.id) {
                s
            } else {
                best
            }
        })
        .expect("nonempty");
    Ok(BonSelection {
        chosen_id: chosen.id.clone(),
        scores: scores.clone(),
        variant,
        beta,
        alpha,
    })
}

/// Mean gap between the best true reward in each candidate set and the true
/// reward of the selected candidate.
pub fn suboptimality(
    true_theta: &[f64],
    candidates_per_prompt: &[Vec<Candidate>],
    selections: &[BonSelection],
) -> Result<f64> {
    if candidates_per_prompt.is_empty() || candidates_per_prompt.len() != selections.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidate sets but {} selections",
            candidates_per_prompt.len(),
            selections.len()
        )));
    }
    let mut total = 0.0;
    for (set, sel) in candidates_per_prompt.iter().zip(selections) {
        let mut best = f64::NEG_INFINITY;
        let mut chosen = None;
        for c in set {
            if c.phi.len() != true_theta.len() {
                return Err(Error::DimensionMismatch {
                    what: "phi",
                    expected: true_theta.len(),
                    actual: c.phi.len(),
                });
            }
            let r = model::dot(true_theta, c.phi.as_slice());
            best = best.max(r);
            if c.id == sel.chosen_id {
                chosen = Some(r);
            }
        }
        let chosen = chosen.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "selected id {:?} is not in its candidate set",
                sel.chosen_id
            ))
        })?;
        total += best - chosen;
    }
    Ok(total / selections.len() as f64)
}

/// Fitted reward, re-exported for callers that only deal with candidates.
pub fn point_reward(artifact: &InferenceArtifact, q: &QueryFeatures) -> Result<f64> {
    reward_point(artifact.params(), q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use nalgebra::DMatrix;

    fn artifact(theta: Vec<f64>, s2: DMatrix<f64>, n: usize) -> InferenceArtifact {
        InferenceArtifact::new(
            ModelParams::new(theta, vec![0.0]),
            n,
            s2,
            DMatrix::identity(1, 1),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn pessimistic_examples() {
        let a = artifact(vec![1.0, 0.0], DMatrix::identity(2, 2), 100);
        assert_eq!(pessimistic_reward(&a, &vec![0.0, 0.0].into(), 0.05).unwrap(), 0.0);
        let r = pessimistic_reward(&a, &vec![1.0, 0.0].into(), 0.05).unwrap();
        assert!((r - (1.0 - 0.195_996_398_454_005_4)).abs() < 1e-12);
        assert!((r - 0.804).abs() < 1e-3);
    }

    #[test]
    fn single_candidate_always_chosen() {
        let a = artifact(vec![1.0, 0.0], DMatrix::identity(2, 2), 100);
        for v in [Variant::Bon, Variant::Pbon] {
            let s = select(&a, &[Candidate::new("only", vec![-5.0, 3.0])], v, 0.0, 0.05).unwrap();
            assert_eq!(s.chosen_id, "only");
        }
    }

    #[test]
    fn zero_beta_reduces_to_plain_variants() {
        let a = artifact(vec![0.7, -0.4], DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]), 50);
        let cands: Vec<Candidate> = (0..6)
            .map(|i| {
                let mut c = Candidate::new(format!("c{i}"), vec![i as f64 * 0.3 - 0.7, (i * i) as f64 * 0.1]);
                c.penalty = Some(i as f64);
                c.length = Some(10 + i);
                c
            })
            .collect();
        for (plain, regs) in [
            (Variant::Bon, [Variant::BonKl, Variant::BonWd, Variant::BonL]),
            (Variant::Pbon, [Variant::PbonKl, Variant::PbonWd, Variant::PbonL]),
        ] {
            let want = select(&a, &cands, plain, 0.0, 0.05).unwrap().chosen_id;
            for r in regs {
                assert_eq!(select(&a, &cands, r, 0.0, 0.05).unwrap().chosen_id, want);
            }
        }
    }

    #[test]
    fn pessimism_prefers_certain_candidate() {
        // equal point rewards; the variance is largest along the first axis
        let s2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 0.25]));
        let a = artifact(vec![1.0, 1.0, 1.0], s2, 100);
        let cands = vec![
            Candidate::new("a", vec![1.0, 0.0, 0.0]),
            Candidate::new("b", vec![0.0, 1.0, 0.0]),
            Candidate::new("c", vec![0.0, 0.0, 1.0]),
        ];
        assert_eq!(select(&a, &cands, Variant::Bon, 0.0, 0.05).unwrap().chosen_id, "a");
        assert_eq!(select(&a, &cands, Variant::Pbon, 0.0, 0.05).unwrap().chosen_id, "c");
    }

    #[test]
    fn regularizers_enter_objective() {
        let a = artifact(vec![1.0], DMatrix::identity(1, 1), 10_000);
        let mut short = Candidate::new("short", vec![1.0]);
        short.length = Some(1);
        short.penalty = Some(2.0);
        let mut long = Candidate::new("long", vec![0.9]);
        long.length = Some(100);
        long.penalty = Some(0.0);
        let cands = [short, long];
        assert_eq!(select(&a, &cands, Variant::Bon, 1.0, 0.05).unwrap().chosen_id, "short");
        assert_eq!(select(&a, &cands, Variant::BonL, 1.0, 0.05).unwrap().chosen_id, "long");
        let kl = select(&a, &cands, Variant::PbonKl, 1.0, 0.05).unwrap();
        assert_eq!(kl.chosen_id, "long");
        assert_eq!(kl.scores[0].regularizer_term, 2.0);
        assert!((kl.scores[0].objective - (kl.scores[0].lower_bound - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn missing_fields_rejected() {
        let a = artifact(vec![1.0], DMatrix::identity(1, 1), 10);
        let c = [Candidate::new("x", vec![1.0])];
        for v in [Variant::BonKl, Variant::PbonWd, Variant::BonL, Variant::PbonL] {
            assert!(select(&a, &c, v, 1.0, 0.05).is_err());
        }
        assert!(select(&a, &[], Variant::Bon, 0.0, 0.05).is_err());
        let dup = [Candidate::new("x", vec![1.0]), Candidate::new("x", vec![2.0])];
        assert!(select(&a, &dup, Variant::Bon, 0.0, 0.05).is_err());
    }

    #[test]
    fn ties_break_to_smallest_id() {
        let a = artifact(vec![1.0], DMatrix::identity(1, 1), 10);
        let cands = [
            Candidate::new("zeta", vec![1.0]),
            Candidate::new("alpha", vec![1.0]),
            Candidate::new("mid", vec![1.0]),
        ];
        assert_eq!(select(&a, &cands, Variant::Pbon, 0.0, 0.05).unwrap().chosen_id, "alpha");
    }

    #[test]
    fn suboptimality_examples() {
        let a = artifact(vec![1.0], DMatrix::identity(1, 1), 10);
        let sets = vec![
            vec![Candidate::new("p", vec![1.0]), Candidate::new("q", vec![0.7])],
            vec![Candidate::new("r", vec![-1.0]), Candidate::new("s", vec![2.0])],
        ];
        let oracle: Vec<_> = sets
            .iter()
            .map(|s| select(&a, s, Variant::Bon, 0.0, 0.05).unwrap())
            .collect();
        assert_eq!(suboptimality(&[1.0], &sets, &oracle).unwrap(), 0.0);

        let mut worse = oracle[0].clone();
        worse.chosen_id = "q".into();
        let gap = suboptimality(&[1.0], &sets[..1], &[worse]).unwrap();
        assert!((gap - 0.3).abs() < 1e-15);

        assert!(suboptimality(&[1.0], &sets, &oracle[..1]).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("best".parse::<Variant>().is_err());
    }
}
