mod common;

use common::*;
use gcncluster::data::{EmbeddingSet, LabelSet, Partition, Trial, TrialList};
use gcncluster::metrics::{cosine_scores, eer, min_dcf, pairwise_prf, DcfParams, PrfResult, TrialScores};
use gcncluster::Error;
use proptest::prelude::*;

fn scores(tgt: &[f64], non: &[f64]) -> TrialScores {
    TrialScores {
        target_scores: tgt.to_vec(),
        nontarget_scores: non.to_vec(),
    }
}

#[test]
fn prf_examples() {
    let truth = LabelSet::new(vec![0, 0, 1, 1]).unwrap();
    let perfect = pairwise_prf(&Partition::from_raw(&[5, 5, 2, 2]), &truth).unwrap();
    assert_eq!((perfect.precision, perfect.recall, perfect.f_score), (1.0, 1.0, 1.0));
    let lumped = pairwise_prf(&Partition::from_raw(&[0, 0, 0, 0]), &truth).unwrap();
    assert_eq!((lumped.tp_pairs, lumped.pred_pairs, lumped.truth_pairs), (2, 6, 2));
    assert!((lumped.precision - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(lumped.recall, 1.0);
    assert!((lumped.f_score - 0.5).abs() < 1e-15);
    // all singletons against all singletons has no pairs at all
    let none = pairwise_prf(&Partition::from_raw(&[0, 1, 2]), &LabelSet::new(vec![0, 1, 2]).unwrap()).unwrap();
    assert_eq!((none.precision, none.recall, none.f_score), (1.0, 1.0, 1.0));
    assert!(matches!(pairwise_prf(&Partition::from_raw(&[0, 0]), &truth), Err(Error::Shape(_))));
}

#[test]
fn pooled_counts_add_up() {
    let a = PrfResult::from_counts(2, 6, 2);
    let b = PrfResult::from_counts(3, 3, 5);
    let p = PrfResult::pooled([&a, &b]);
    assert_eq!((p.tp_pairs, p.pred_pairs, p.truth_pairs), (5, 9, 7));
}

#[test]
fn eer_and_dcf_edge_cases() {
    let sep = scores(&[0.8, 0.9], &[0.1, 0.2]);
    assert_eq!(eer(&sep).unwrap(), 0.0);
    assert_eq!(min_dcf(&sep, DcfParams::default()).unwrap(), 0.0);
    assert_eq!(eer(&scores(&[0.1, 0.2], &[0.8, 0.9])).unwrap(), 1.0);
    // identical scores everywhere give chance level
    assert_eq!(eer(&scores(&[0.5, 0.5], &[0.5, 0.5, 0.5])).unwrap(), 0.5);
    assert!(matches!(eer(&scores(&[], &[0.1])), Err(Error::Config(_))));
    assert!(matches!(eer(&scores(&[f64::NAN], &[0.1])), Err(Error::Numerical(_))));
    for p_target in [0.0, 1.0, -0.5] {
        let params = DcfParams {
            p_target,
            ..DcfParams::default()
        };
        assert!(matches!(min_dcf(&sep, params), Err(Error::Domain { .. })));
    }
    let free = DcfParams {
        c_fa: 0.0,
        ..DcfParams::default()
    };
    assert!(matches!(min_dcf(&sep, free), Err(Error::Config(_))));
}

#[test]
fn cosine_scores_split_by_target_flag() {
    let e = EmbeddingSet::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]]).unwrap();
    let trials = TrialList::new(vec![
        Trial {
            enroll: 0,
            test: 1,
            target: true,
        },
        Trial {
            enroll: 0,
            test: 2,
            target: false,
        },
        Trial {
            enroll: 1,
            test: 2,
            target: false,
        },
    ])
    .unwrap();
    let s = cosine_scores(&e, &trials).unwrap();
    assert_eq!(s.target_scores, vec![0.6]);
    assert_eq!(s.nontarget_scores, vec![0.0, 0.8]);
    let bad = TrialList::new(vec![
        Trial {
            enroll: 0,
            test: 3,
            target: true,
        },
        Trial {
            enroll: 0,
            test: 1,
            target: false,
        },
    ])
    .unwrap();
    assert!(matches!(cosine_scores(&e, &bad), Err(Error::Bounds { index: 3, .. })));
}

/// Scores on a dyadic grid so affine maps with power-of-two slopes are exact.
fn grid_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let one = (-32i32..32).prop_map(|v| v as f64 / 16.0);
    (prop::collection::vec(one.clone(), 1..40), prop::collection::vec(one, 1..60))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn prf_matches_brute_force(pairs in prop::collection::vec((0usize..6, 0usize..6), 1..120)) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let got = pairwise_prf(&Partition::from_raw(&pred), &LabelSet::compact(&truth)).unwrap();
        let (tp, pp, tt) = brute_pair_counts(&pred, &truth);
        prop_assert_eq!((got.tp_pairs, got.pred_pairs, got.truth_pairs), (tp, pp, tt));
        prop_assert_eq!(got.precision, ratio_or_one(tp, pp));
        prop_assert_eq!(got.recall, ratio_or_one(tp, tt));
        let (p, r) = (got.precision, got.recall);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        prop_assert!((got.f_score - f).abs() < 1e-15);
    }

    #[test]
    fn prf_ignores_cluster_names(pairs in prop::collection::vec((0usize..6, 0usize..6), 1..80), shift in 1usize..50) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let truth = LabelSet::compact(&truth);
        let renamed: Vec<usize> = pred.iter().map(|&c| (5 - c) * 7 + shift).collect();
        prop_assert_eq!(
            pairwise_prf(&Partition::from_raw(&pred), &truth).unwrap(),
            pairwise_prf(&Partition::from_raw(&renamed), &truth).unwrap()
        );
    }

    #[test]
    fn refining_never_raises_recall(pairs in prop::collection::vec((0usize..4, 0usize..5, any::<bool>()), 1..80)) {
        let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let truth = LabelSet::compact(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        // split every predicted cluster by a coin flip
        let finer: Vec<usize> = pairs.iter().map(|p| 2 * p.0 + p.2 as usize).collect();
        let coarse = pairwise_prf(&Partition::from_raw(&pred), &truth).unwrap();
        let fine = pairwise_prf(&Partition::from_raw(&finer), &truth).unwrap();
        prop_assert!(fine.tp_pairs <= coarse.tp_pairs && fine.pred_pairs <= coarse.pred_pairs);
        prop_assert_eq!(fine.truth_pairs, coarse.truth_pairs);
        prop_assert!(fine.recall <= coarse.recall);
    }

    #[test]
    fn eer_and_dcf_match_threshold_sweep(tgt in prop::collection::vec(-1.0f64..1.0, 1..50),
                                         non in prop::collection::vec(-1.0f64..1.0, 1..80),
                                         p in 0.001f64..0.999) {
        let s = scores(&tgt, &non);
        let e = eer(&s).unwrap();
        prop_assert_eq!(e, eer_oracle(&tgt, &non));
        prop_assert!((0.0..=1.0).contains(&e));
        let params = DcfParams { p_target: p, c_miss: 1.0, c_fa: 1.0 };
        let d = min_dcf(&s, params).unwrap();
        prop_assert!((d - min_dcf_oracle(&tgt, &non, p, 1.0, 1.0)).abs() <= 1e-12 * d.max(1.0));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
    }

    #[test]
    fn tied_scores_match_the_oracle((tgt, non) in grid_scores()) {
        let s = scores(&tgt, &non);
        prop_assert_eq!(eer(&s).unwrap(), eer_oracle(&tgt, &non));
        prop_assert_eq!(min_dcf(&s, DcfParams::default()).unwrap(), min_dcf_oracle(&tgt, &non, 0.01, 1.0, 1.0));
    }

    #[test]
    fn increasing_maps_leave_eer_and_dcf_unchanged((tgt, non) in grid_scores(), shift in -4i32..4) {
        let map = |v: &Vec<f64>| v.iter().map(|x| 4.0 * x + shift as f64).collect::<Vec<f64>>();
        let (a, b) = (scores(&tgt, &non), scores(&map(&tgt), &map(&non)));
        prop_assert_eq!(eer(&a).unwrap(), eer(&b).unwrap());
        prop_assert_eq!(min_dcf(&a, DcfParams::default()).unwrap(), min_dcf(&b, DcfParams::default()).unwrap());
    }

    #[test]
    fn negating_and_swapping_preserves_eer(tgt in prop::collection::vec(-1.0f64..1.0, 1..40),
                                           non in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<f64>>();
        let a = eer(&scores(&tgt, &non)).unwrap();
        let b = eer(&scores(&neg(&non), &neg(&tgt))).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
