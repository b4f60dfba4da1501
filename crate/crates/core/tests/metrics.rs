mod oracles;

use mavit_core::metrics::{acer, apcer_bpcer, eer_threshold, evaluate, hter, tpr_at_fpr, ScoreSet, ThresholdPolicy};
use oracles::{metric_mismatch, random_pairs};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn all_metrics_match_exhaustive_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..200 {
        let n = [20, 50, 100][case % 3];
        let pairs = random_pairs(&mut rng, n, case % 2 == 0);
        assert_eq!(metric_mismatch(&pairs), None, "case {case}");
    }
}

#[test]
fn flipped_labels_complement_hter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs = random_pairs(&mut rng, 60, false);
    let flipped: Vec<(f64, u8)> = pairs.iter().map(|&(s, y)| (s, 1 - y)).collect();
    let (a, b) = (
        ScoreSet::from_pairs(&pairs).unwrap(),
        ScoreSet::from_pairs(&flipped).unwrap(),
    );
    // no score equals the threshold, so every decision flips
    for t in [0.3131, 0.5077, 0.7919] {
        assert!(pairs.iter().all(|p| p.0 != t));
        assert!((hter(&b, t).unwrap() - (1.0 - hter(&a, t).unwrap())).abs() < 1e-12);
    }
}

#[test]
fn evaluate_uses_the_dev_threshold_on_test() {
    let dev = ScoreSet::from_pairs(&[(0.1, 0), (0.4, 0), (0.6, 1), (0.9, 1)]).unwrap();
    let test = ScoreSet::from_pairs(&[(0.45, 0), (0.55, 0), (0.2, 1), (0.8, 1)]).unwrap();
    let r = evaluate(&dev, &test, ThresholdPolicy::Eer, 1e-4).unwrap();
    assert_eq!(r.threshold, 0.5);
    assert_eq!(r.eer, 0.0);
    assert_eq!((r.apcer, r.bpcer), (0.5, 0.5));
    assert_eq!(r.acer, 0.5);
    assert_eq!(r.hter, 0.5);
    let keys: Vec<&str> = r.entries().iter().map(|e| e.0).collect();
    assert_eq!(
        keys,
        ["apcer", "bpcer", "acer", "eer", "hter", "tpr_at_fpr", "threshold"]
    );
    let strict = evaluate(&dev, &test, ThresholdPolicy::BpcerTarget(0.01), 1e-4).unwrap();
    assert_eq!(strict.threshold, 0.5);
}

#[test]
fn published_acer_arithmetic() {
    assert!((acer(0.78, 0.83) - 0.805).abs() < 1e-12);
    assert!((acer(3.80, 1.00) - 2.40).abs() < 1e-12);
}

fn pair_strategy() -> impl Strategy<Value = Vec<(f64, u8)>> {
    prop::collection::vec((0.0f64..1.0, 0u8..2), 2..60).prop_map(|mut v| {
        v[0].1 = 0;
        v[1].1 = 1;
        v
    })
}

proptest! {
    #[test]
    fn error_rates_are_monotone_in_threshold(pairs in pair_strategy(), a in -0.1f64..1.1, b in -0.1f64..1.1) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let set = ScoreSet::from_pairs(&pairs).unwrap();
        let (apcer_lo, bpcer_lo) = apcer_bpcer(&set, lo).unwrap();
        let (apcer_hi, bpcer_hi) = apcer_bpcer(&set, hi).unwrap();
        prop_assert!(bpcer_hi >= bpcer_lo);
        prop_assert!(apcer_hi <= apcer_lo);
    }

    #[test]
    fn rank_metrics_ignore_monotone_transforms(pairs in pair_strategy()) {
        let warp = |s: f64| (3.0 * s).exp() - 7.0;
        let warped: Vec<(f64, u8)> = pairs.iter().map(|&(s, y)| (warp(s), y)).collect();
        let (a, b) = (ScoreSet::from_pairs(&pairs).unwrap(), ScoreSet::from_pairs(&warped).unwrap());
        let (ta, ea) = eer_threshold(&a).unwrap();
        let (tb, eb) = eer_threshold(&b).unwrap();
        prop_assert_eq!(ea, eb);
        // the chosen thresholds split the samples identically
        for (&(s, _), &(w, _)) in pairs.iter().zip(&warped) {
            prop_assert_eq!(s >= ta, w >= tb);
        }
        prop_assert_eq!(tpr_at_fpr(&a, 0.1).unwrap(), tpr_at_fpr(&b, 0.1).unwrap());
    }

    #[test]
    fn acer_is_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assert_eq!(acer(a, b), acer(b, a));
    }
}
