//! LLR classifier properties against dense and structural oracles.

mod common;

use common::*;
use kroncov::classifier::*;
use kroncov::estimator::{KronCovModel, KronFactor, Parity};
use kroncov::synth::{make_ground_truth, simulate_split, ScenarioSpec};
use kroncov::{ClassLabel, FeatureTrack, KronError, SpaceTimeDims, SpatialGrid};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn dense_loglik(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x - mean;
    let inv = cov.clone().try_inverse().unwrap();
    let n = x.len() as f64;
    -0.5 * d.dot(&(inv * &d)) - 0.5 * cov.determinant().ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn loglik_matches_dense_inverse() {
    let mut r = rng(1);
    for n in [1usize, 2, 6, 17, 40, 64] {
        for _ in 0..3 {
            let cov = random_spd(n, &mut r);
            let mean = gaussian_matrix(n, 1, &mut r).column(0).into_owned();
            let x = gaussian_matrix(n, 1, &mut r).column(0).into_owned();
            let fast = GaussianDensity::new(mean.clone(), cov.clone()).unwrap().loglik(&x).unwrap();
            let slow = dense_loglik(&x, &mean, &cov);
            assert!((fast - slow).abs() <= 1e-8 * slow.abs().max(1.0), "n={n}: {fast} vs {slow}");
        }
    }
}

#[test]
fn loglik_of_structured_model_matches_dense() {
    let m = rank_one_truth(4, 3, 0.6, 3);
    let mut r = rng(4);
    let x = DVector::from_fn(12, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal));
    let fast = gaussian_loglik(&x, &m).unwrap();
    let slow = dense_loglik(&x, m.mean(), &m.covariance());
    assert!((fast - slow).abs() <= 1e-8 * slow.abs());
}

fn grid22() -> SpatialGrid {
    SpatialGrid::new(vec![2, 2]).unwrap()
}

fn random_track(id: &str, frames: usize, seed: u64) -> FeatureTrack<f64> {
    let mut r = rng(seed);
    let frames = (0..frames)
        .map(|_| DVector::from_fn(4, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    FeatureTrack::new(id, Some(ClassLabel::One), grid22(), frames).unwrap()
}

fn sym_factor(offsets: Vec<f64>, s: DMatrix<f64>) -> KronFactor<f64> {
    KronFactor::new(Parity::Symmetric, offsets, s).unwrap()
}

/// Full-grid model that is block-diagonal over features {0,1} and {2,3},
/// plus the matching models of each half.
fn block_diagonal_models(t: usize, a: f64, b: f64, shift: f64, seed: u64) -> [KronCovModel<f64>; 3] {
    let mut r = rng(seed);
    let sa = random_spd(2, &mut r);
    let sb = random_spd(2, &mut r);
    let ta: Vec<f64> = (0..2 * t - 1).map(|k| a.powi((k as i32 - t as i32 + 1).abs())).collect();
    let tb: Vec<f64> = (0..2 * t - 1).map(|k| b.powi((k as i32 - t as i32 + 1).abs())).collect();
    let ua = DVector::from_vec(vec![0.3, 0.4]);
    let ub = DVector::from_vec(vec![0.5, 0.2]);
    let mut big_a = DMatrix::zeros(4, 4);
    big_a.view_mut((0, 0), (2, 2)).copy_from(&sa);
    let mut big_b = DMatrix::zeros(4, 4);
    big_b.view_mut((2, 2), (2, 2)).copy_from(&sb);
    let frame_mean = [shift, -shift, 0.5 * shift, 0.0];
    let mean = |idx: &[usize]| DVector::from_fn(idx.len() * t, |k, _| frame_mean[idx[k % idx.len()]]);
    let full = KronCovModel::new(
        SpaceTimeDims::new(4, t).unwrap(),
        mean(&[0, 1, 2, 3]),
        vec![sym_factor(ta.clone(), big_a), sym_factor(tb.clone(), big_b)],
        DVector::from_vec(vec![0.3, 0.4, 0.5, 0.2]),
    )
    .unwrap();
    let dims2 = SpaceTimeDims::new(2, t).unwrap();
    let left = KronCovModel::new(dims2, mean(&[0, 1]), vec![sym_factor(ta, sa)], ua).unwrap();
    let right = KronCovModel::new(dims2, mean(&[2, 3]), vec![sym_factor(tb, sb)], ub).unwrap();
    [full, left, right]
}

fn two_level_set(t: usize) -> ClassModelSet<f64> {
    let [f0, l0, r0] = block_diagonal_models(t, 0.3, 0.5, 0.0, 10);
    let [f1, l1, r1] = block_diagonal_models(t, 0.7, 0.2, 0.4, 11);
    let tree = build_block_tree(&grid22(), 2).unwrap();
    assert_eq!(tree.blocks()[1], vec![0, 1]);
    ClassModelSet::new(grid22(), t, tree, vec![[f0, f1], [l0, l1], [r0, r1]]).unwrap()
}

#[test]
fn block_llrs_add_up_on_block_diagonal_truth() {
    let set = two_level_set(3);
    for seed in 0..10 {
        let track = random_track("x", 12, seed);
        let llr = track_llr_vector(&track, &set, 3).unwrap();
        assert!((llr[0] - (llr[1] + llr[2])).abs() <= 1e-8 * llr[0].abs().max(1.0), "{llr:?}");
    }
}

#[test]
fn llr_is_antisymmetric_under_class_swap() {
    let set = two_level_set(2);
    let swapped_models: Vec<[KronCovModel<f64>; 2]> =
        set.models().iter().map(|[a, b]| [b.clone(), a.clone()]).collect();
    let swapped = ClassModelSet::new(grid22(), 2, set.tree().clone(), swapped_models).unwrap();
    for seed in 0..5 {
        let track = random_track("x", 7, seed);
        let a = track_llr_vector(&track, &set, 2).unwrap();
        let b = track_llr_vector(&track, &swapped, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x, -*y);
        }
    }
}

#[test]
fn single_window_llr_is_density_difference() {
    let set = two_level_set(2);
    let track = random_track("x", 3, 1); // one window, one frame dropped
    let llr = track_llr_vector(&track, &set, 2).unwrap();
    let x = track.multiframe(0, 2, None);
    let [m0, m1] = &set.models()[0];
    let direct = gaussian_loglik(&x, m1).unwrap() - gaussian_loglik(&x, m0).unwrap();
    assert!((llr[0] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
}

#[test]
fn identical_classes_give_zero_scores() {
    let [f, l, r] = block_diagonal_models(2, 0.4, 0.4, 0.2, 5);
    let tree = build_block_tree(&grid22(), 2).unwrap();
    let set = ClassModelSet::new(grid22(), 2, tree, vec![[f.clone(), f], [l.clone(), l], [r.clone(), r]]).unwrap();
    let track = random_track("x", 8, 2);
    assert_eq!(track_llr_vector(&track, &set, 2).unwrap(), vec![0.0; 3]);
    let single = ClassModelSet::new(
        grid22(),
        2,
        build_block_tree(&grid22(), 1).unwrap(),
        vec![set.models()[0].clone()],
    )
    .unwrap();
    assert_eq!(classify_overall(&track, &single, 2).unwrap().score, 0.0);
}

#[test]
fn zero_classifier_picks_class_zero() {
    let clf = LlrClassifier::new(two_level_set(2), vec![0.0; 3], 0.0, 2).unwrap();
    let s = clf.classify_track(&random_track("x", 4, 3)).unwrap();
    assert_eq!(s.score, 0.0);
    assert_eq!(s.label, ClassLabel::Zero);
}

#[test]
fn overall_equals_unit_weight_single_level() {
    let set = two_level_set(2);
    let single = ClassModelSet::new(
        grid22(),
        2,
        build_block_tree(&grid22(), 1).unwrap(),
        vec![set.models()[0].clone()],
    )
    .unwrap();
    let clf = LlrClassifier::overall(single.clone(), 2).unwrap();
    for seed in 0..5 {
        let track = random_track("x", 9, seed);
        let a = clf.classify_track(&track).unwrap();
        let b = classify_overall(&track, &set, 2).unwrap();
        let c = classify_overall(&track, &single, 2).unwrap();
        assert_eq!(a.score, b.score);
        assert_eq!(a, c);
    }
}

#[test]
fn label_invariant_to_positive_rescaling_and_block_order() {
    let set = two_level_set(2);
    let weights = vec![0.3, 1.2, 0.05];
    let clf = LlrClassifier::new(set.clone(), weights.clone(), -0.7, 2).unwrap();
    // swap the two level-1 blocks
    let blocks = set.tree().blocks();
    let tree = BlockTree::from_blocks(4, 2, vec![blocks[0].clone(), blocks[2].clone(), blocks[1].clone()]).unwrap();
    let m = set.models();
    let permuted = ClassModelSet::new(grid22(), 2, tree, vec![m[0].clone(), m[2].clone(), m[1].clone()]).unwrap();
    let clf_perm = LlrClassifier::new(permuted, vec![weights[0], weights[2], weights[1]], -0.7, 2).unwrap();
    for seed in 0..20 {
        let track = random_track("x", 6, seed);
        let base = clf.classify_track(&track).unwrap();
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let scaled = LlrClassifier::new(set.clone(), weights.iter().map(|w| w * c).collect(), -0.7 * c, 2).unwrap();
            assert_eq!(scaled.classify_track(&track).unwrap().label, base.label);
        }
        let p = clf_perm.classify_track(&track).unwrap();
        assert!((p.score - base.score).abs() <= 1e-12 * base.score.abs().max(1.0));
        assert_eq!(p.label, base.label);
    }
}

#[test]
fn logistic_weights_nonnegative_and_bounded_rounds() {
    let mut r = rng(8);
    for trial in 0..10 {
        let n = 40;
        let b = 7;
        let labels: Vec<ClassLabel> = (0..n).map(|i| ClassLabel::from_index(i % 2).unwrap()).collect();
        let coef: Vec<f64> = (0..b).map(|_| r.random_range(-1.0..1.0)).collect();
        let feats = DMatrix::from_fn(n, b, |i, j| {
            let y = (i % 2) as f64 * 2.0 - 1.0;
            coef[j] * y + r.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let fit = fit_nonneg_logistic(&feats, &labels, None).unwrap();
        assert!(fit.weights.iter().all(|&w| w >= 0.0), "trial {trial}");
        assert!(fit.rounds <= b, "trial {trial}: {} rounds", fit.rounds);
    }
}

#[test]
fn logistic_needs_two_tracks_per_class() {
    let labels = [ClassLabel::Zero, ClassLabel::One, ClassLabel::One];
    assert!(matches!(
        fit_nonneg_logistic(&DMatrix::<f64>::zeros(3, 1), &labels, None),
        Err(KronError::InsufficientSamples { .. })
    ));
}

fn scenario(separation: f64) -> ScenarioSpec {
    ScenarioSpec {
        grid: SpatialGrid::new(vec![2, 3]).unwrap(),
        window: 4,
        rank: 1,
        mean_separation: separation,
        decay: [0.2, 0.7],
        noise_floor: 0.3,
        seed: 4,
    }
}

#[test]
fn trained_classifier_separates_distinct_classes() {
    let spec = scenario(3.0);
    let truth = make_ground_truth::<f64>(&spec).unwrap();
    let split = simulate_split(&truth, &spec.grid, 60, 60, 16, 1).unwrap();
    let mut cfg = TrainConfig::new(4);
    cfg.levels = 2;
    let clf = train_classifier(&split.train, &spec.grid, &cfg).unwrap();
    assert!(clf.weights().iter().all(|&w| w >= 0.0));
    let correct = split
        .test
        .iter()
        .filter(|t| clf.classify_track(t).unwrap().label == t.label.unwrap())
        .count();
    assert!(correct as f64 / 60.0 > 0.9, "{correct}/60");
}

#[test]
fn training_errors_name_the_block() {
    let spec = scenario(1.0);
    let truth = make_ground_truth::<f64>(&spec).unwrap();
    let split = simulate_split(&truth, &spec.grid, 3, 0, 4, 1).unwrap();
    let cfg = TrainConfig::new(4);
    let err = train_classifier(&split.train, &spec.grid, &TrainConfig { levels: 2, ..cfg }).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, KronError::InsufficientSamples { .. }) && msg.contains("block 0"), "{msg}");
    assert!(build_block_tree(&spec.grid, 4).is_err());
}

#[test]
fn short_tracks_are_rejected_when_scoring() {
    let set = two_level_set(3);
    let err = track_llr_vector(&random_track("short", 2, 1), &set, 3).unwrap_err();
    assert!(matches!(err, KronError::TrackTooShort { frames: 2, window: 3, .. }));
}

#[test]
fn single_precision_pipeline_runs() {
    let spec = scenario(3.0);
    let truth = make_ground_truth::<f32>(&spec).unwrap();
    let split = simulate_split(&truth, &spec.grid, 40, 20, 12, 2).unwrap();
    let mut cfg = TrainConfig::<f32>::new(2);
    cfg.levels = 2;
    let clf = train_classifier(&split.train, &spec.grid, &cfg).unwrap();
    let correct = split
        .test
        .iter()
        .filter(|t| clf.classify_track(t).unwrap().label == t.label.unwrap())
        .count();
    assert!(correct >= 16, "{correct}/20");
}
