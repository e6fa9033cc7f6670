use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use hetpref::bon::{pessimistic_reward, select, Candidate, Variant};
use hetpref::hypothesis::{reward_diff_test, win_rate_of, VarianceMode, Verdict};
use hetpref::inference::{empirical_info, reward_ci, reward_point, InferenceArtifact};
use hetpref::io::{read_dataset_from, write_dataset_to, ArtifactFile};
use hetpref::model::{
    grad_gamma, hessian_blocks, log_sigmoid, neg_log_likelihood, sigmoid, ModelParams,
    PreferenceDataset, PreferenceSample, QueryFeatures,
};
use hetpref::normal_quantile;

fn sample(d1: usize, d2: usize) -> impl Strategy<Value = PreferenceSample> {
    (
        -3.0..3.0f64,
        prop::collection::vec(-3.0..3.0f64, d2),
        prop::collection::vec(-3.0..3.0f64, d1),
        0u8..=1,
    )
        .prop_map(|(psi0, psi, z, y)| PreferenceSample { psi0, psi, z, y })
}

fn problem() -> impl Strategy<Value = (PreferenceDataset, ModelParams)> {
    (1usize..4, 1usize..3).prop_flat_map(|(d1, d2)| {
        (
            prop::collection::vec(sample(d1, d2), 1..30),
            prop::collection::vec(-2.0..2.0f64, d1),
            prop::collection::vec(-2.0..2.0f64, d2),
        )
            .prop_map(move |(rows, theta, gamma)| {
                (
                    PreferenceDataset::from_samples(d1, d2, rows).unwrap(),
                    ModelParams::new(theta, gamma),
                )
            })
    })
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn spd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, d * d).prop_map(move |v| {
        let a = DMatrix::from_vec(d, d, v);
        let m = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        (&m + m.transpose()) * 0.5
    })
}

fn artifact() -> impl Strategy<Value = InferenceArtifact> {
    (1usize..4).prop_flat_map(|d1| {
        (
            prop::collection::vec(-2.0..2.0f64, d1),
            spd(d1),
            10usize..5000,
        )
            .prop_map(|(theta, s2, n)| {
                InferenceArtifact::new(
                    ModelParams::new(theta, vec![0.0]),
                    n,
                    s2,
                    DMatrix::identity(1, 1),
                    0.0,
                )
                .unwrap()
            })
    })
}

fn query(d: usize) -> impl Strategy<Value = QueryFeatures> {
    prop::collection::vec(-2.0..2.0f64, d).prop_map(QueryFeatures::new)
}

proptest! {
    #[test]
    fn sigmoid_bounds_and_symmetry(v in -800.0..800.0f64) {
        let p = sigmoid(v);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + sigmoid(-v) - 1.0).abs() < 1e-15);
        prop_assert!(log_sigmoid(v) <= 0.0);
        prop_assert!(log_sigmoid(v).is_finite());
    }

    #[test]
    fn loss_is_finite_and_nonnegative((data, p) in problem()) {
        let l = neg_log_likelihood(&p, &data).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn flipping_labels_and_theta_preserves_loss((data, p) in problem()) {
        let flipped = PreferenceDataset::from_samples(
            data.d1(),
            data.d2(),
            data.iter().map(|s| {
                let mut o = s.to_owned();
                o.y = 1 - o.y;
                o
            }),
        )
        .unwrap();
        let neg = ModelParams::new(p.theta.iter().map(|t| -t).collect(), p.gamma.clone());
        let a = neg_log_likelihood(&p, &data).unwrap();
        let b = neg_log_likelihood(&neg, &flipped).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn diagonal_hessian_blocks_are_psd((data, p) in problem()) {
        let h = hessian_blocks(&p, &data).unwrap();
        prop_assert!(min_eig(&h.theta_theta) >= -1e-10 * h.theta_theta.amax().max(1.0));
        prop_assert!(min_eig(&h.gamma_gamma) >= -1e-10 * h.gamma_gamma.amax().max(1.0));
    }

    #[test]
    fn information_is_psd((data, p) in problem()) {
        let full = empirical_info(&p, &data).unwrap().full();
        prop_assert!(min_eig(&full) >= -1e-10 * full.amax().max(1.0));
    }

    #[test]
    fn zero_theta_zeroes_gamma_gradient((data, p) in problem()) {
        let zero = ModelParams::new(vec![0.0; data.d1()], p.gamma.clone());
        prop_assert!(grad_gamma(&zero, &data).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn quantile_is_odd_and_increasing(p in 1e-12..0.5f64, dp in 1e-9..0.1f64) {
        // an exactly complementary pair
        let upper = 1.0 - p;
        let p = 1.0 - upper;
        let q = normal_quantile(p).unwrap();
        let back = normal_quantile(upper).unwrap();
        prop_assert!((q + back).abs() <= 1e-12 * q.abs(), "{} vs {}", q, back);
        let p2 = (p + dp).min(1.0 - 1e-12);
        prop_assert!(normal_quantile(p2).unwrap() > q);
    }

    #[test]
    fn reward_ci_shape(a in artifact(), seed in any::<u64>(), alpha in 0.001..0.5f64) {
        let q = QueryFeatures::new((0..a.d1()).map(|i| ((seed >> (8 * i)) as u8 as f64 - 128.0) / 64.0).collect());
        let ci = reward_ci(&a, &q, alpha).unwrap();
        let point = reward_point(a.params(), &q).unwrap();
        prop_assert!(ci.lower <= point && point <= ci.upper);
        prop_assert!(((ci.upper - point) - (point - ci.lower)).abs() <= 1e-12 * (1.0 + point.abs()));
        prop_assert!(pessimistic_reward(&a, &q, alpha).unwrap() <= point);
        // more samples, narrower interval by sqrt(4)
        let wide = InferenceArtifact::new(a.params().clone(), a.n() * 4, a.s2_theta().clone(), a.s2_gamma().clone(), 0.0).unwrap();
        let narrow = reward_ci(&wide, &q, alpha).unwrap();
        prop_assert!((ci.width() - 2.0 * narrow.width()).abs() <= 1e-12 * ci.width().max(1e-300));
    }

    #[test]
    fn verdict_agrees_with_interval(a in artifact(), s0 in any::<u64>(), s1 in any::<u64>(), dep in any::<bool>()) {
        let mk = |s: u64| QueryFeatures::new((0..a.d1()).map(|i| ((s >> (8 * i)) as u8 as f64 - 128.0) / 32.0).collect());
        let mode = if dep { VarianceMode::DependentUpperBound } else { VarianceMode::Independent };
        let t = reward_diff_test(&a, &mk(s0), &mk(s1), 0.05, mode).unwrap();
        let expected = if t.ci.lower > 0.0 { Verdict::Win } else if t.ci.upper < 0.0 { Verdict::Loss } else { Verdict::Tie };
        prop_assert_eq!(t.verdict, expected);
        let ind = reward_diff_test(&a, &mk(s0), &mk(s1), 0.05, VarianceMode::Independent).unwrap();
        let bound = reward_diff_test(&a, &mk(s0), &mk(s1), 0.05, VarianceMode::DependentUpperBound).unwrap();
        prop_assert!(bound.ci.width() >= ind.ci.width() * (1.0 - 1e-12));
    }

    #[test]
    fn win_rate_in_unit_interval(v in prop::collection::vec(0u8..3, 1..50)) {
        let verdicts = v.iter().map(|k| [Verdict::Win, Verdict::Tie, Verdict::Loss][*k as usize]);
        let r = win_rate_of(verdicts).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn selection_ignores_candidate_order(
        a in artifact(),
        phis in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 1..8),
        pessimistic in any::<bool>(),
        rot in 0usize..8,
    ) {
        let d1 = a.d1();
        let cands: Vec<Candidate> = phis.iter().enumerate()
            .map(|(i, p)| Candidate::new(format!("c{i}"), p[..d1].to_vec()))
            .collect();
        let variant = if pessimistic { Variant::Pbon } else { Variant::Bon };
        let first = select(&a, &cands, variant, 0.0, 0.05).unwrap();
        let mut rotated = cands.clone();
        rotated.rotate_left(rot % cands.len());
        let second = select(&a, &rotated, variant, 0.0, 0.05).unwrap();
        prop_assert_eq!(&first.chosen_id, &second.chosen_id);
        let best = first.scores.iter().find(|s| s.id == first.chosen_id).unwrap().objective;
        prop_assert!(first.scores.iter().all(|s| s.objective <= best));
    }

    #[test]
    fn dataset_text_round_trip((data, _p) in problem()) {
        let mut buf = Vec::new();
        write_dataset_to(&data, &mut buf, "mem").unwrap();
        let back = read_dataset_from(&mut buf.as_slice(), "mem").unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn artifact_json_round_trip(a in artifact()) {
        let text = serde_json::to_string(&ArtifactFile::from_artifact(&a)).unwrap();
        let back: ArtifactFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.into_artifact().unwrap(), a);
    }

    #[test]
    fn query_dimension_checked(a in artifact(), q in query(5)) {
        prop_assert!(reward_ci(&a, &q, 0.05).is_err());
    }
}
