use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn prob(h: usize, w: usize, v: &[f32]) -> ProbabilityMap {
    ProbabilityMap::new(h, w, v.to_vec()).unwrap()
}

fn mask(h: usize, w: usize, v: &[u8]) -> BinaryMask {
    BinaryMask::new(h, w, v.to_vec()).unwrap()
}

fn half_plane(n: usize) -> BinaryMask {
    BinaryMask::from_fn(n, n, |_, c| u8::from(c < n / 2)).unwrap()
}

#[test]
fn mae_examples() {
    let y = mask(2, 2, &[1, 0, 0, 1]);
    assert_eq!(mae(&y.to_probability(), &y).unwrap(), 0.0);
    assert_eq!(mae(&y.inverted().to_probability(), &y).unwrap(), 1.0);
    assert_eq!(mae(&ProbabilityMap::filled(2, 2, 0.5).unwrap(), &y).unwrap(), 0.5);
    let q = prob(2, 2, &[0.9, 0.1, 0.4, 0.8]);
    assert!((mae(&q, &y).unwrap() - 0.2).abs() < 1e-7);
}

#[test]
fn shape_mismatch_is_an_error() {
    let q = ProbabilityMap::filled(2, 3, 0.5).unwrap();
    let y = BinaryMask::filled(3, 2, 1).unwrap();
    assert!(matches!(mae(&q, &y), Err(Error::ShapeMismatch { .. })));
    assert!(evaluate_pair(&q, &y, 0.5).is_err());
}

#[test]
fn confusion_hand_count() {
    let q = prob(1, 4, &[1.0, 1.0, 0.0, 0.0]);
    let y = mask(1, 4, &[1, 0, 0, 0]);
    let c = confusion(&q, &y, 0.5).unwrap();
    assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 2, fn_: 0 });
    assert!((c.dice() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(c.iou(), 0.5);
    assert_eq!(c.acc(), 0.75);
    assert!((c.ber() - 1.0 / 6.0).abs() < 1e-15);
}

#[test]
fn confusion_extremes() {
    let y = mask(2, 2, &[1, 1, 0, 0]);
    let q = y.to_probability();
    assert_eq!((dice(&q, &y, 0.5).unwrap(), iou(&q, &y, 0.5).unwrap()), (1.0, 1.0));
    assert_eq!((acc(&q, &y, 0.5).unwrap(), ber(&q, &y, 0.5).unwrap()), (1.0, 0.0));
    let inv = y.inverted().to_probability();
    assert_eq!((ber(&inv, &y, 0.5).unwrap(), acc(&inv, &y, 0.5).unwrap()), (1.0, 0.0));

    let empty = BinaryMask::filled(2, 2, 0).unwrap();
    let none = ProbabilityMap::filled(2, 2, 0.0).unwrap();
    assert_eq!(dice(&none, &empty, 0.5).unwrap(), 1.0);
    assert_eq!(iou(&none, &empty, 0.5).unwrap(), 1.0);
    assert_eq!(ber(&none, &empty, 0.5).unwrap(), 0.0);
}

#[test]
fn max_f_examples() {
    let y = half_plane(8);
    assert_eq!(max_f(&y.to_probability(), &y).unwrap(), 1.0);
    let ones = BinaryMask::filled(4, 4, 1).unwrap();
    assert_eq!(max_f(&ProbabilityMap::filled(4, 4, 0.6).unwrap(), &ones).unwrap(), 1.0);
    let empty = BinaryMask::filled(4, 4, 0).unwrap();
    assert!(matches!(
        max_f(&ProbabilityMap::filled(4, 4, 0.6).unwrap(), &empty),
        Err(Error::EmptyForeground)
    ));
}

#[test]
fn sweep_level_is_exact_at_threshold_values() {
    for k in 0..256 {
        let t = f_threshold(k);
        assert_eq!(sweep_level(t, 256, f_threshold), Some(k));
        let t = e_threshold(k);
        assert_eq!(sweep_level(t, 256, e_threshold), Some(k));
    }
    assert_eq!(sweep_level(0.001, 256, e_threshold), None);
}

#[test]
fn e_measure_examples() {
    let y = half_plane(8);
    assert_eq!(e_measure(&y.to_probability(), &y).unwrap(), 1.0);
    let e = e_measure(&y.inverted().to_probability(), &y).unwrap();
    assert!(e.abs() < 1e-12, "{e}");

    // Degenerate ground truth: the score is the agreeing fraction.
    let empty = BinaryMask::filled(2, 2, 0).unwrap();
    let q = prob(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert_eq!(e_measure(&q, &empty).unwrap(), 0.75);
    let full = BinaryMask::filled(2, 2, 1).unwrap();
    assert_eq!(e_measure(&q, &full).unwrap(), 0.25);
}

#[test]
fn s_measure_examples() {
    let y = BinaryMask::from_fn(8, 8, |r, c| u8::from(r > 2 && c < 5)).unwrap();
    assert_eq!(s_measure(&y.to_probability(), &y).unwrap(), 1.0);
    let s = s_measure(&ProbabilityMap::filled(8, 8, 0.5).unwrap(), &y).unwrap();
    assert!(s > 0.0 && s < 1.0, "{s}");

    let empty = BinaryMask::filled(3, 3, 0).unwrap();
    let q = ProbabilityMap::filled(3, 3, 0.25).unwrap();
    assert_eq!(s_measure(&q, &empty).unwrap(), 0.75);
}

#[test]
fn centroid_rounds_half_away() {
    // Foreground columns 0 and 1: mean 0.5 -> 1 (0-based) -> split 2.
    let gt = [1u8, 1, 0, 0];
    assert_eq!(centroid_split(&gt, 1, 4), (2, 1));
}

#[test]
fn weighted_f_examples() {
    let y = half_plane(32);
    assert_eq!(weighted_f(&y.to_probability(), &y).unwrap(), 1.0);
    // Complement prediction: 0.073564877223453 at 32x32 from a numpy/scipy
    // evaluation of the same definition; it shrinks toward 0 as size grows.
    let wf = weighted_f(&y.inverted().to_probability(), &y).unwrap();
    assert!((wf - 0.073_564_877_223_453).abs() < 1e-9, "{wf}");
    let y64 = half_plane(64);
    let wf64 = weighted_f(&y64.inverted().to_probability(), &y64).unwrap();
    assert!(wf64 < 0.05 && wf64 < wf);

    let checker = BinaryMask::from_fn(16, 16, |r, c| ((r + c) % 2) as u8).unwrap();
    let perfect = weighted_f(&checker.to_probability(), &checker).unwrap();
    let mut flipped = checker.to_probability().into_data();
    flipped[7 * 16 + 8] = 1.0 - flipped[7 * 16 + 8];
    let one_off = weighted_f(&ProbabilityMap::new(16, 16, flipped).unwrap(), &checker).unwrap();
    assert!(one_off < perfect);
}

#[test]
fn perfect_fixture_is_ideal() {
    let y = BinaryMask::from_fn(24, 24, |r, c| u8::from((r as i32 - 10).pow(2) + (c as i32 - 12).pow(2) < 40)).unwrap();
    let m = evaluate_pair(&y.to_probability(), &y, DEFAULT_THRESHOLD).unwrap();
    assert_eq!(m.report().unwrap(), MetricReport::IDEAL);
}

#[test]
fn dataset_aggregation() {
    let y = half_plane(8);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = ProbabilityMap::from_fn(8, 8, |_, _| rng.gen_range(0.0..1.0)).unwrap();
    let single = evaluate_pair(&q, &y, 0.5).unwrap();
    let (one, _) = evaluate_dataset(&[(q.clone(), y.clone())], 0.5).unwrap();
    assert_eq!(one.report, single.report().unwrap());
    let (two, _) = evaluate_dataset(&[(q.clone(), y.clone()), (q.clone(), y.clone())], 0.5).unwrap();
    assert_eq!(two.report, one.report);

    assert!(matches!(evaluate_dataset(&[], 0.5), Err(Error::EmptyInput(_))));
}

#[test]
fn dataset_mae_is_arithmetic_mean() {
    let y = BinaryMask::filled(10, 10, 0).unwrap();
    let a = ProbabilityMap::from_fn(10, 10, |r, _| if r < 2 { 0.1 } else { 0.0 }).unwrap();
    let b = ProbabilityMap::from_fn(10, 10, |r, _| if r < 4 { 0.1 } else { 0.0 }).unwrap();
    let (rep, per) = evaluate_dataset(&[(a, y.clone()), (b, y)], 0.5).unwrap();
    assert!((per[0].mae - 0.02).abs() < 1e-8 && (per[1].mae - 0.04).abs() < 1e-8);
    assert!((rep.report.mae - 0.03).abs() < 1e-8);
    assert_eq!(rep.excluded, 2);
}

proptest! {
    #[test]
    fn flipping_pixels_never_helps(seed in any::<u64>(), k in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = BinaryMask::from_fn(8, 8, |_, _| u8::from(rng.gen_bool(0.5))).unwrap();
        let perfect = y.to_probability();
        let mut data = perfect.data().to_vec();
        for _ in 0..k {
            let i = rng.gen_range(0..64);
            data[i] = 1.0 - data[i];
        }
        let noisy = ProbabilityMap::new(8, 8, data).unwrap();
        let c0 = confusion(&perfect, &y, 0.5).unwrap();
        let c1 = confusion(&noisy, &y, 0.5).unwrap();
        prop_assert!(c1.dice() <= c0.dice());
        prop_assert!(c1.iou() <= c0.iou());
        prop_assert!(c1.acc() <= c0.acc());
        prop_assert!(mae(&noisy, &y).unwrap() >= mae(&perfect, &y).unwrap());
    }

    #[test]
    fn scores_stay_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = BinaryMask::from_fn(9, 7, |_, _| u8::from(rng.gen_bool(0.3))).unwrap();
        let q = ProbabilityMap::from_fn(9, 7, |_, _| rng.gen_range(0.0..=1.0)).unwrap();
        let m = evaluate_pair(&q, &y, 0.5).unwrap();
        for v in [m.e_measure, m.s_measure, m.mae, m.dice, m.iou, m.ber, m.acc] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let Some(r) = m.report() {
            prop_assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
