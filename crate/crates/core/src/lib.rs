//! Reward learning from pairwise preferences whose annotators differ in how
//! decisively they choose.
//!
//! Preferences follow `P(y = 1) = mu(sigma(x) * theta' z)` with a per-sample
//! rationality scale `sigma(x) = psi0 + gamma' psi(x)`. The crate fits
//! `(theta, gamma)` by alternating gradient descent, estimates their
//! covariance from the empirical information matrix, and builds confidence
//! intervals, reward-difference tests and pessimistic best-of-N selection on
//! top.

pub mod bon;
pub mod cli;
pub mod error;
pub mod hypothesis;
pub mod inference;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod quantile;
pub mod sim;

pub use bon::{pessimistic_reward, select, suboptimality, BonSelection, Candidate, Variant};
pub use error::{Error, Result};
pub use hypothesis::{reward_diff_test, win_rate, TestOutcome, VarianceMode, Verdict};
pub use inference::{
    empirical_info, gamma_component_ci, infer, reward_ci, reward_point, schur_covariances,
    theta_component_ci, ConfidenceInterval, InferenceArtifact,
};
pub use model::{
    grad_gamma, grad_theta, hessian_blocks, neg_log_likelihood, ModelParams, PreferenceDataset,
    PreferenceSample, QueryFeatures,
};
pub use optimizer::{alternating_fit, FitConfig, FitResult, Init};
pub use quantile::normal_quantile;
