//! File format round trips and malformed inputs.

mod common;

use common::*;
use kroncov::classifier::{train_classifier, TrainConfig};
use kroncov::estimator::{fit_dc_kronpca, FitConfig, KronCovModel};
use kroncov::shrinkage::shrink;
use kroncov::io_formats::*;
use kroncov::synth::{make_ground_truth, simulate_split, ScenarioSpec};
use kroncov::{ClassLabel, FeatureTrack, KronError, SpaceTimeDims, SpatialGrid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn wild_value(r: &mut impl Rng) -> f64 {
    match r.random_range(0..6) {
        0 => r.random_range(-1.0..1.0) * 1e-300,
        1 => r.random_range(-1.0..1.0) * 1e300,
        2 => -0.0,
        3 => f64::MIN_POSITIVE * r.random_range(0.0..1.0), // subnormal
        _ => r.sample(rand_distr::StandardNormal),
    }
}

fn random_tracks(n: usize, seed: u64) -> Vec<FeatureTrack<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let grid = SpatialGrid::new(vec![r.random_range(1..4), r.random_range(1..4)]).unwrap();
            let frames = (0..r.random_range(1..6))
                .map(|_| DVector::from_fn(grid.size(), |_, _| wild_value(&mut r)))
                .collect();
            let label = [None, Some(ClassLabel::Zero), Some(ClassLabel::One)][i % 3];
            FeatureTrack::new(format!("trk-{i}"), label, grid, frames).unwrap()
        })
        .collect()
}

fn bits(t: &FeatureTrack<f64>) -> Vec<u64> {
    t.frames.iter().flat_map(|f| f.iter().map(|x| x.to_bits())).collect()
}

#[test]
fn tracks_round_trip_bit_exact() {
    let tracks = random_tracks(50, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ftrk");
    write_tracks(&path, &tracks).unwrap();
    let back: Vec<FeatureTrack<f64>> = read_tracks(&path).unwrap();
    assert_eq!(back.len(), tracks.len());
    for (a, b) in tracks.iter().zip(&back) {
        assert_eq!((&a.track_id, a.label, &a.grid), (&b.track_id, b.label, &b.grid));
        assert_eq!(bits(a), bits(b));
    }
    // writing again reproduces the same bytes
    assert_eq!(format_tracks(&back), std::fs::read_to_string(&path).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_finite_value_round_trips(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..20)) {
        let grid = SpatialGrid::flat(values.len()).unwrap();
        let t = FeatureTrack::new("a", None, grid, vec![DVector::from_vec(values)]).unwrap();
        let back: Vec<FeatureTrack<f64>> = parse_tracks(&format_tracks(std::slice::from_ref(&t))).unwrap();
        prop_assert_eq!(bits(&back[0]), bits(&t));
    }
}

#[test]
fn empty_track_file_parses_to_nothing() {
    assert!(parse_tracks::<f64>("").unwrap().is_empty());
    assert!(format_tracks::<f64>(&[]).is_empty());
}

#[test]
fn malformed_tracks_report_line_numbers() {
    let good = "ftrk 1 p=2 grid=1x2 id=a label=1\n0.5 1.5\n";
    assert_eq!(parse_tracks::<f64>(good).unwrap().len(), 1);
    let cases = [
        ("ftrk 1 p=3 grid=1x2 id=a label=1\n0.5 1.5\n", 1),
        ("ftrk 1 p=2 grid=1x2 id=a label=1\n0.5 1.5 2\n", 2),
        ("ftrk 1 p=2 grid=1x2 id=a label=1\n0.5 nan\n", 2),
        ("ftrk 1 p=2 grid=1x2 id=a label=1\n0.5 inf\n", 2),
        ("0.5 1.5\n", 1),
        ("ftrk 1 p=2 grid=1x2 id=a label=1\n0.5 1.5\nftrk 1 p=2 grid=1x2 id=b label=0\n", 3),
        ("ftrk 1 p=2 grid=1x2 id=a label=7\n0.5 1.5\n", 1),
    ];
    for (text, line) in cases {
        match parse_tracks::<f64>(text) {
            Err(KronError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?} gave {other:?}"),
        }
    }
    assert!(matches!(
        parse_tracks::<f64>("ftrk 2 p=2 grid=1x2 id=a label=1\n0.5 1.5\n"),
        Err(KronError::UnsupportedVersion { found: 2, .. })
    ));
}

fn fitted_model(rank: usize, seed: u64) -> KronCovModel<f64> {
    let truth = rank_one_truth(4, 3, 0.5, seed);
    let data = draw_samples(&truth, 300, seed + 1);
    let m = fit_dc_kronpca(&data, &FitConfig::with_rank(rank)).unwrap();
    shrink(&m, 0.2).unwrap().with_psd_floor(1e-6).unwrap()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn model_round_trip_reconstructs_covariance() {
    let m = fitted_model(2, 5);
    assert!(m.rank() >= 1);
    let text = model_to_string(&m).unwrap();
    let ModelFile::Model(back) = parse_model_document::<f64>(&text).unwrap() else {
        panic!("wrong kind")
    };
    assert!(max_abs_diff(&m.covariance(), &back.covariance()) <= 1e-12);
    assert_eq!(back.rank(), m.rank());
    assert_eq!(back.rho(), m.rho());
    assert_eq!(back.eig_floor_applied(), m.eig_floor_applied());
    assert_eq!(model_to_string(&back).unwrap(), text);
}

#[test]
fn diagonal_only_model_round_trips() {
    let dims = SpaceTimeDims::new(3, 2).unwrap();
    let m = KronCovModel::<f64>::new(dims, DVector::zeros(6), vec![], DVector::from_vec(vec![1.0, 2.0, 0.5])).unwrap();
    let ModelFile::Model(back) = parse_model_document::<f64>(&model_to_string(&m).unwrap()).unwrap() else {
        panic!("wrong kind")
    };
    assert_eq!(back.rank(), 0);
    assert_eq!(back.covariance(), m.covariance());
}

fn small_classifier() -> kroncov::classifier::LlrClassifier<f64> {
    let spec = ScenarioSpec {
        grid: SpatialGrid::new(vec![2, 2]).unwrap(),
        window: 2,
        rank: 1,
        mean_separation: 1.0,
        decay: [0.3, 0.6],
        noise_floor: 0.5,
        seed: 9,
    };
    let truth = make_ground_truth::<f64>(&spec).unwrap();
    let split = simulate_split(&truth, &spec.grid, 30, 0, 6, 2).unwrap();
    let mut cfg = TrainConfig::new(2);
    cfg.levels = 2;
    train_classifier(&split.train, &spec.grid, &cfg).unwrap()
}

#[test]
fn classifier_round_trip_preserves_scores() {
    let clf = small_classifier();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    write_model(&path, &ModelFile::Classifier(clf.clone())).unwrap();
    let ModelFile::Classifier(back) = read_model::<f64>(&path).unwrap() else {
        panic!("wrong kind")
    };
    assert_eq!(back.weights(), clf.weights());
    assert_eq!(back.intercept(), clf.intercept());
    for (a, b) in clf.models().models().iter().zip(back.models().models()) {
        for c in 0..2 {
            assert!(max_abs_diff(&a[c].covariance(), &b[c].covariance()) <= 1e-12);
        }
    }
    let mut r = rng(3);
    for i in 0..20 {
        let frames = (0..5).map(|_| DVector::from_fn(4, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal))).collect();
        let t = FeatureTrack::new(format!("x{i}"), None, SpatialGrid::new(vec![2, 2]).unwrap(), frames).unwrap();
        let (x, y) = (clf.classify_track(&t).unwrap(), back.classify_track(&t).unwrap());
        assert!((x.score - y.score).abs() <= 1e-9 * x.score.abs().max(1.0), "{} vs {}", x.score, y.score);
    }
    assert_eq!(classifier_to_string(&back).unwrap(), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn overflowing_tracks_are_reported_not_scored() {
    let clf = small_classifier();
    let x = DVector::from_vec(vec![1e300, -1e300, 1e300, 1e300]);
    let t = FeatureTrack::new("big", None, SpatialGrid::new(vec![2, 2]).unwrap(), vec![x.clone(), x]).unwrap();
    assert!(matches!(clf.classify_track(&t), Err(KronError::NonFinite(_))));
}

#[test]
fn truncated_model_files_are_rejected() {
    let text = classifier_to_string(&small_classifier()).unwrap();
    for cut in [text.len() / 4, text.len() / 2, text.len() - 10] {
        let err = parse_model_document::<f64>(&text[..cut]).unwrap_err();
        assert!(matches!(err, KronError::Format(_)), "{err}");
    }
    assert!(matches!(parse_model_document::<f64>(""), Err(KronError::Format(_))));
}

#[test]
fn model_version_mismatch_is_reported() {
    let text = model_to_string(&fitted_model(1, 2)).unwrap();
    let bumped = text.replacen("version = 1", "version = 2", 1);
    assert_ne!(bumped, text);
    assert!(matches!(
        parse_model_document::<f64>(&bumped),
        Err(KronError::UnsupportedVersion { found: 2, supported: 1 })
    ));
}

#[test]
fn inconsistent_counts_are_rejected() {
    let text = model_to_string(&fitted_model(1, 2)).unwrap();
    let rank_line = text.lines().find(|l| l.starts_with("rank = ")).unwrap();
    let broken = text.replacen(rank_line, "rank = 5", 1);
    assert!(matches!(parse_model_document::<f64>(&broken), Err(KronError::Format(_))));
}

#[test]
fn results_round_trip() {
    let rows = vec![
        ResultsRow { track_id: "a".into(), true_label: Some(ClassLabel::One), predicted_label: ClassLabel::One, score: 1.25, llrs: vec![0.5, -1e-300] },
        ResultsRow { track_id: "b".into(), true_label: None, predicted_label: ClassLabel::Zero, score: -3.0, llrs: vec![-0.0, 2.0] },
    ];
    let mut buf = Vec::new();
    write_results(&mut buf, &rows, 2).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("track_id,true_label,predicted_label,score,llr_0,llr_1\n"));
    let back: Vec<ResultsRow<f64>> = read_results(buf.as_slice()).unwrap();
    assert_eq!(back, rows);
    let mut empty = Vec::new();
    write_results::<f64, _>(&mut empty, &[], 0).unwrap();
    assert_eq!(String::from_utf8(empty).unwrap(), "track_id,true_label,predicted_label,score\n");
}
