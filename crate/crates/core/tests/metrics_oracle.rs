//! Optimized metrics against the brute-force references on random grids.

mod common;

use common::*;
use promac::metrics::{e_measure, evaluate, f_beta_adaptive, mae, miou, s_measure, MetricReport};
use promac::{BinaryMask, SoftMask};
use proptest::prelude::*;

fn case(seed: u64, h: usize, w: usize) -> (SoftMask, BinaryMask) {
    let mut r = rng(seed);
    let gt = random_gt(&mut r, h, w);
    let pred = if seed.is_multiple_of(3) {
        noisy_copy(&mut r, &gt, 0.5)
    } else {
        random_pred(&mut r, h, w)
    };
    (pred, gt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn all_measures_match_references(seed in any::<u64>(), h in 2usize..=16, w in 2usize..=16) {
        let (pred, gt) = case(seed, h, w);
        prop_assert!((mae(&pred, &gt).unwrap() - mae_oracle(&pred, &gt)).abs() <= 1e-9);
        match (f_beta_adaptive(&pred, &gt), f_oracle(&pred, &gt)) {
            (Ok(f), Some(o)) => prop_assert!((f - o).abs() <= 1e-9, "F {f} vs {o}"),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "F {got:?} vs {want:?}"),
        }
        let (e, eo) = (e_measure(&pred, &gt).unwrap(), e_oracle(&pred, &gt));
        prop_assert!((e - eo).abs() <= 1e-9, "E {e} vs {eo}");
        let (s, so) = (s_measure(&pred, &gt).unwrap(), s_oracle(&pred, &gt));
        prop_assert!((s - so).abs() <= 1e-6, "S {s} vs {so}");
    }

    #[test]
    fn scores_stay_in_unit_range(seed in any::<u64>(), h in 1usize..=16, w in 1usize..=16) {
        let (pred, gt) = case(seed, h.max(2), w.max(2));
        let m = evaluate("x", &pred, &gt).unwrap();
        for v in [m.mae, m.e_phi, m.s_alpha].into_iter().chain(m.f_beta) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{m:?}");
        }
    }
}

#[test]
fn perfect_and_inverted_predictions() {
    let gt = BinaryMask::from_fn(12, 9, |x, y| x > 2 && y > 4).unwrap();
    let perfect = gt.to_soft();
    assert_eq!(mae(&perfect, &gt).unwrap(), 0.0);
    assert_eq!(f_beta_adaptive(&perfect, &gt).unwrap(), 1.0);
    assert_eq!(e_measure(&perfect, &gt).unwrap(), 1.0);
    assert!((s_measure(&perfect, &gt).unwrap() - 1.0).abs() < 1e-9);

    let inverted = SoftMask::from_fn(12, 9, |x, y| if gt.get(x, y) { 0.0 } else { 1.0 }).unwrap();
    assert_eq!(mae(&inverted, &gt).unwrap(), 1.0);
    assert_eq!(f_beta_adaptive(&inverted, &gt).unwrap(), 0.0);
    assert!(s_measure(&inverted, &gt).unwrap() < 0.1);
}

#[test]
fn empty_ground_truth_skips_f_only() {
    let gt = BinaryMask::empty(8, 8).unwrap();
    let pred = SoftMask::filled(8, 8, 0.25).unwrap();
    assert!(f_beta_adaptive(&pred, &gt).is_err());
    let m = evaluate("blank", &pred, &gt).unwrap();
    assert!(m.f_beta.is_none());
    assert!((m.s_alpha - 0.75).abs() < 1e-12);
    let other = evaluate("full", &gt.to_soft(), &BinaryMask::from_fn(8, 8, |x, _| x < 4).unwrap()).unwrap();
    let report = MetricReport::from_images(vec![m, other]).unwrap();
    assert_eq!(report.f_beta_skipped, 1);
    // an all-zero prediction thresholds at 0, so every pixel counts as
    // foreground: precision 0.5, recall 1
    assert!((report.f_beta - 1.3 * 0.5 / (0.3 * 0.5 + 1.0)).abs() < 1e-12);
}

#[test]
fn miou_by_counting() {
    let a = BinaryMask::from_fn(10, 10, |x, _| x < 5).unwrap();
    let b = BinaryMask::from_fn(10, 10, |x, _| x < 4).unwrap();
    let c = BinaryMask::from_fn(10, 10, |_, y| y < 2).unwrap();
    // 40/50 and 20/20
    let got = miou(&[b, c.clone()], &[a, c]).unwrap();
    assert!((got - (0.8 + 1.0) / 2.0).abs() < 1e-12);
}

#[test]
fn shape_mismatch_is_an_error() {
    let gt = BinaryMask::empty(4, 4).unwrap();
    let pred = SoftMask::zeros(4, 5).unwrap();
    assert!(mae(&pred, &gt).is_err());
    assert!(e_measure(&pred, &gt).is_err());
    assert!(s_measure(&pred, &gt).is_err());
}
