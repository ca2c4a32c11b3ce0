use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::data::{Mask, Volume};
use crate::rng::{Purpose, SeedStream};
use crate::Error;

fn rng(seed: u64) -> crate::rng::Substream {
    SeedStream::new(seed).substream(Purpose::Auxiliary, 0, 0)
}

fn random_volume(seed: u64, dims: [usize; 3]) -> Volume {
    let mut s = rng(seed);
    let n = dims.iter().product();
    Volume::new(dims, [1.0; 3], (0..n).map(|_| s.uniform_in(-1.0, 1.0) as f32).collect()).unwrap()
}

fn random_set(seed: u64, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    let mut s = rng(seed);
    (0..n).map(|_| (0..d).map(|_| s.normal() + shift).collect()).collect()
}

#[test]
fn masked_mse_hand_example() {
    assert_eq!(masked_mse_values(&[1.0, 2.0], &[1.0, 0.0], &[0, 1]).unwrap(), 4.0);
    let real = Volume::new([1, 1, 2], [1.0; 3], vec![0.5, 1.0]).unwrap();
    let syn = Volume::new([1, 1, 2], [1.0; 3], vec![0.5, 0.0]).unwrap();
    let m = Mask::new([1, 1, 2], vec![0, 1]).unwrap();
    assert_eq!(masked_mse(&real, &syn, &m).unwrap(), 1.0);
    assert_eq!(masked_mse(&real, &real, &m).unwrap(), 0.0);
    let empty = Mask::new([1, 1, 2], vec![0, 0]).unwrap();
    assert!(matches!(masked_mse(&real, &syn, &empty), Err(Error::DegenerateMask(_))));
}

proptest! {
    #[test]
    fn masked_mse_matches_triple_loop(seed in 0u64..10_000) {
        let real = random_volume(seed, [4; 3]);
        let syn = random_volume(seed + 1, [4; 3]);
        let mut s = rng(seed + 2);
        let mut bits: Vec<u8> = (0..64).map(|_| s.below(2) as u8).collect();
        bits[s.below(64) as usize] = 1;
        let m = Mask::new([4; 3], bits.clone()).unwrap();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    let i = (z * 4 + y) * 4 + x;
                    let w = bits[i] as f64;
                    let d = real.values()[i] as f64 - syn.values()[i] as f64;
                    num += w * d * d;
                    den += w;
                }
            }
        }
        prop_assert!((masked_mse(&real, &syn, &m).unwrap() - num / den).abs() <= 1e-10);
    }

    #[test]
    fn fid_is_symmetric_and_zero_on_itself(seed in 0u64..1000, n in 3usize..12, d in 1usize..6) {
        let a = random_set(seed, n, d, 0.0);
        let b = random_set(seed + 7, n + 1, d, 0.5);
        prop_assert!(fid(&a, &a).unwrap() <= 1e-6);
        prop_assert!((fid(&a, &b).unwrap() - fid(&b, &a).unwrap()).abs() <= 1e-8);
        prop_assert!(mmd(&a, &a, RbfKernel::default()).unwrap().value.abs() <= 1e-9);
    }

    #[test]
    fn dice_is_symmetric_and_bounded(seed in 0u64..10_000) {
        let mut s = rng(seed);
        let p = Mask::new([2, 3, 4], (0..24).map(|_| s.below(2) as u8).collect()).unwrap();
        let t = Mask::new([2, 3, 4], (0..24).map(|_| s.below(2) as u8).collect()).unwrap();
        let d = dice(&p, &t).unwrap();
        prop_assert_eq!(d, dice(&t, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d == 1.0, p == t);
    }

    #[test]
    fn sqrtm_squares_back(seed in 0u64..1000, d in 1usize..12) {
        let mut s = rng(seed);
        let g = DMatrix::from_fn(d, d + 2, |_, _| s.normal());
        let sigma = &g * g.transpose();
        let r = sqrtm_psd(&sigma);
        prop_assert!((&r * &r - &sigma).norm() / sigma.norm() <= 1e-8);
    }

    #[test]
    fn mds_round_trips_planar_points(seed in 0u64..1000, n in 3usize..15) {
        let mut s = rng(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![s.uniform_in(-5.0, 5.0), s.uniform_in(-5.0, 5.0)]).collect();
        let d = pairwise_distances(&pts);
        let e = mds_embed(&d).unwrap();
        for i in 0..n {
            for j in 0..n {
                let de = ((e[i][0] - e[j][0]).powi(2) + (e[i][1] - e[j][1]).powi(2)).sqrt();
                prop_assert!((de - d[i][j]).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn constant_volume_features() {
    let v = Volume::constant([32; 3], 0.25).unwrap();
    let f = extract_features(&v).unwrap();
    // 8 octants × (mean, std, min, max) + 16 histogram bins + 4³ + 2³ + 1³ blocks.
    assert_eq!(f.values.len(), 8 * 4 + 16 + 64 + 8 + 1);
    assert_eq!(f.values.len(), HandcraftedExtractor.dim());
    assert_eq!(f.extractor_id, HANDCRAFTED_ID);
    for o in 0..8 {
        assert!((f.values[4 * o] - 0.25).abs() < 1e-12);
        assert!(f.values[4 * o + 1].abs() < 1e-12);
    }
    let hist = &f.values[32..48];
    assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // 0.25 lies in bin floor(1.25 / 2 · 16) = 10.
    assert_eq!(hist[10], 1.0);
    assert!(f.values[48..].iter().all(|&b| (b - 0.25).abs() < 1e-12));
}

#[test]
fn features_are_deterministic_and_resolution_independent_in_length() {
    let a = random_volume(3, [32; 3]);
    assert_eq!(extract_features(&a).unwrap(), extract_features(&a.clone()).unwrap());
    assert_eq!(extract_features(&random_volume(4, [10, 7, 5])).unwrap().values.len(), 121);
    assert!(matches!(extract_features(&random_volume(4, [3, 8, 8])), Err(Error::InputDomain(_))));
}

#[test]
fn fid_analytic_mean_shift() {
    let d = 5;
    let mut s = rng(9);
    let g = DMatrix::from_fn(d, d, |_, _| s.normal());
    let cov = &g * g.transpose();
    let mu = DVector::from_fn(d, |_, _| s.normal());
    let v = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0, 0.5]);
    let got = fid_from_stats(&mu, &cov, &(&mu + &v), &cov).unwrap();
    assert!((got - v.norm_squared()).abs() <= 1e-6, "{got}");
    let a = random_set(1, 6, 3, 0.0);
    assert!(fid(&a, &a).unwrap() <= 1e-6);
    assert!(matches!(fid(&a[..1], &a), Err(Error::InsufficientData { .. })));
}

#[test]
fn mmd_hand_expanded_kernel_sums() {
    let a = vec![vec![0.0], vec![1.0]];
    let b = vec![vec![2.0], vec![3.0]];
    let k = |d: f64| (-d * d / 2.0).exp();
    // Paired U-statistic: both ordered pairs give the same h.
    let want = k(1.0) + k(1.0) - k(3.0) - k(1.0);
    let got = mmd(&a, &b, RbfKernel { bandwidth: Some(1.0) }).unwrap();
    assert!((got.value - want).abs() < 1e-15);
    assert_eq!(got.bandwidth, 1.0);

    let c = vec![vec![0.0], vec![1.0], vec![4.0]];
    let within_a = k(1.0);
    let within_c = (k(1.0) + k(4.0) + k(3.0)) / 3.0;
    let cross = (k(0.0) + k(1.0) + k(4.0) + k(1.0) + k(0.0) + k(3.0)) / 6.0;
    let got = mmd(&a, &c, RbfKernel { bandwidth: Some(1.0) }).unwrap();
    assert!((got.value - (within_a + within_c - 2.0 * cross)).abs() < 1e-15);
}

#[test]
fn mmd_median_bandwidth_and_degenerate_sets() {
    let a = vec![vec![0.0], vec![1.0]];
    let b = vec![vec![3.0], vec![4.0]];
    // Distances over the union: 1, 3, 4, 2, 3, 1 → median 2.5.
    assert_eq!(mmd(&a, &b, RbfKernel::default()).unwrap().bandwidth, 2.5);
    let same = vec![vec![1.0, 1.0]; 3];
    let m = mmd(&same, &same, RbfKernel::default()).unwrap();
    assert!(m.degenerate);
    assert_eq!(m.value, 0.0);
}

fn mask8(bits: u8) -> Mask {
    Mask::new([2; 3], (0..8).map(|i| (bits >> i) & 1).collect()).unwrap()
}

#[test]
fn segmentation_metrics_on_every_2x2x2_pair() {
    for pb in 0..=255u8 {
        for tb in 0..=255u8 {
            if pb % 4 != 0 || tb % 4 != 0 {
                continue;
            }
            let (p, t) = (mask8(pb), mask8(tb));
            let (mut tp, mut fp, mut tn, mut fnn) = (0, 0, 0, 0);
            for i in 0..8 {
                match ((pb >> i) & 1, (tb >> i) & 1) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 0) => tn += 1,
                    _ => fnn += 1,
                }
            }
            assert_eq!(confusion(&p, &t).unwrap(), Confusion { tp, fp, tn, fn_: fnn });
            let d = if tp + fp + fnn == 0 { 1.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fnn) as f64 };
            assert_eq!(dice(&p, &t).unwrap(), d);
            match sensitivity(&p, &t) {
                Ok(v) => assert_eq!(v, tp as f64 / (tp + fnn) as f64),
                Err(e) => assert!(tp + fnn == 0 && e == Error::EmptyTruth),
            }
            match specificity(&p, &t) {
                Ok(v) => assert_eq!(v, tn as f64 / (tn + fp) as f64),
                Err(e) => assert!(tn + fp == 0 && e == Error::EmptyNegatives),
            }
        }
    }
}

#[test]
fn segmentation_examples() {
    let p = mask8(0b0000_1111);
    let t = mask8(0b0011_1100);
    assert_eq!(dice(&p, &t).unwrap(), 0.5);
    assert_eq!(dice(&p, &p).unwrap(), 1.0);
    assert_eq!(sensitivity(&p, &p).unwrap(), 1.0);
    let q = mask8(0b1111_0000);
    assert_eq!(dice(&p, &q).unwrap(), 0.0);
    assert_eq!(sensitivity(&p, &q).unwrap(), 0.0);
    assert_eq!(dice(&mask8(0), &mask8(0)).unwrap(), 1.0);
    let other = Mask::new([1, 1, 8], vec![0; 8]).unwrap();
    assert!(matches!(dice(&p, &other), Err(Error::Shape { .. })));
}

#[test]
fn mds_examples_and_errors() {
    let zero = vec![vec![0.0; 4]; 4];
    assert!(mds_embed(&zero).unwrap().iter().all(|p| p[0] == 0.0 && p[1] == 0.0));
    let tri = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    let e = mds_embed(&tri).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let de = ((e[i][0] - e[j][0]).powi(2) + (e[i][1] - e[j][1]).powi(2)).sqrt();
                assert!((de - 1.0).abs() < 1e-6);
            }
        }
    }
    let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
    assert!(matches!(mds_embed(&asym), Err(Error::InputDomain(_))));
    let neg = vec![vec![0.0, -1.0], vec![-1.0, 0.0]];
    assert!(matches!(mds_embed(&neg), Err(Error::InputDomain(_))));
}

#[test]
fn ellipse_fit_recovers_circles_and_rotated_ellipses() {
    for r in [0.01, 1.0, 37.0] {
        let pts: Vec<[f64; 2]> = (0..24).map(|i| {
            let a = i as f64 * 0.2618;
            [3.0 + r * a.cos(), -2.0 + r * a.sin()]
        }).collect();
        let e = fit_ellipse(&pts).unwrap();
        assert!((e.semi_axes[0] - r).abs() <= 1e-3 * r.max(1.0), "{e:?}");
        assert!((e.semi_axes[1] - r).abs() <= 1e-3 * r.max(1.0), "{e:?}");
    }
    let truth = Ellipse::new([1.0, 2.0], [3.0, 1.0], 0.6).unwrap();
    let pts: Vec<[f64; 2]> = (0..7).map(|i| truth.point_at(i as f64 * 0.9)).collect();
    let e = fit_ellipse(&pts).unwrap();
    for (a, b) in e.center.iter().chain(&e.semi_axes).zip(truth.center.iter().chain(&truth.semi_axes)) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!((e.angle - 0.6).abs() < 1e-6);
}

#[test]
fn ellipse_fit_rejects_degenerate_input() {
    let four = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    assert!(matches!(fit_ellipse(&four), Err(Error::FitDegenerate(_))));
    let line: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
    assert!(matches!(fit_ellipse(&line), Err(Error::FitDegenerate(_))));
}

#[test]
fn ellipse_overlap_examples() {
    let e = Ellipse::new([0.5, -1.0], [2.0, 0.7], 0.3).unwrap();
    let o = ellipse_overlap(&e, &e, DEFAULT_OVERLAP_SAMPLES, 1).unwrap();
    assert!((o.fraction_of_a - 1.0).abs() <= 0.01);
    assert!((o.area - e.area()).abs() <= 0.02 * e.area());
    let far = Ellipse::new([100.0, 100.0], [1.0, 1.0], 0.0).unwrap();
    let o = ellipse_overlap(&e, &far, DEFAULT_OVERLAP_SAMPLES, 1).unwrap();
    assert_eq!((o.area, o.fraction_of_a, o.fraction_of_b), (0.0, 0.0, 0.0));
    assert_eq!(ellipse_overlap(&e, &far, 1000, 5).unwrap(), ellipse_overlap(&e, &far, 1000, 5).unwrap());
}

#[test]
fn fold_aggregation() {
    assert_eq!(aggregate_folds(&[0.3, 0.3, 0.3]).unwrap(), (0.3, 0.0));
    let (m, h) = aggregate_folds(&[0.0, 1.0]).unwrap();
    assert_eq!(m, 0.5);
    assert!((h - 1.96 * (0.5f64.sqrt() / 2.0f64.sqrt())).abs() < 1e-15);
    let (m, h) = aggregate_folds(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    assert!((m - 0.3).abs() < 1e-15);
    assert!((h - 0.138_592_929_112_563_32).abs() < 1e-12);
    assert!(matches!(aggregate_folds(&[1.0]), Err(Error::InsufficientData { .. })));
}

#[test]
fn identical_sets_score_zero() {
    let vols: Vec<Volume> = (0..4).map(|s| random_volume(s, [8; 3])).collect();
    let refs: Vec<&Volume> = vols.iter().collect();
    let lung = Mask::filled([8; 3], true);
    let pairs: Vec<PairedSample> = vols.iter().map(|v| PairedSample { real: v, synthetic: v, lung: &lung }).collect();
    let fold = evaluate_fold(&refs, &refs, &pairs, &HandcraftedExtractor, RbfKernel::default()).unwrap();
    assert!(fold.fid <= 1e-6);
    assert!(fold.mmd.abs() <= 1e-9);
    assert_eq!(fold.mse, 0.0);
    let report = MetricReport::from_folds(vec![fold.clone(), fold], HANDCRAFTED_ID, RbfKernel::default()).unwrap();
    assert_eq!(report.fid.ci95, Some(0.0));
    assert_eq!(report.folds.len(), 2);
    assert_eq!(report.mmd_estimator, "unbiased");
}
