use rayon::prelude::*;

use kroncov::classifier::{classify_overall, train_classifier, LlrClassifier, TrainConfig};
use kroncov::synth::{derive_seed, make_ground_truth, simulate_split, GroundTruth};
use kroncov::{FeatureTrack64, KronError};

use crate::args::Method;
use crate::scenario::Scenario;
use crate::CliError;

/// One Monte Carlo cell result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub window: usize,
    pub n: usize,
    pub trial: usize,
    /// NaN when the cell failed.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub scenario: Scenario,
    pub ns: Vec<usize>,
    pub windows: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Training configuration; its window is replaced per cell.
    pub train: TrainConfig<f64>,
}

/// Seed of the train/test draw for training size `n` and trial `trial`.
pub fn trial_seed(seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(seed, n as u64), trial as u64)
}

/// Fraction of evaluated tracks labeled correctly. Tracks shorter than the
/// window are not counted.
pub fn accuracy<F>(tracks: &[FeatureTrack64], mut classify: F) -> Result<f64, KronError>
where
    F: FnMut(&FeatureTrack64) -> Result<kroncov::ClassLabel, KronError>,
{
    let (mut correct, mut total) = (0usize, 0usize);
    for t in tracks {
        match classify(t) {
            Ok(label) => {
                total += 1;
                correct += usize::from(Some(label) == t.label);
            }
            Err(KronError::TrackTooShort { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if total == 0 {
        return Err(KronError::InsufficientSamples {
            context: "test tracks at least one window long".into(),
            required: 1,
            found: 0,
        });
    }
    Ok(correct as f64 / total as f64)
}

fn run_cell(
    plan: &SweepPlan,
    truth: &GroundTruth<f64>,
    n: usize,
    trial: usize,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let grid = &plan.scenario.spec.grid;
    let split = simulate_split(
        truth,
        grid,
        n,
        plan.n_test,
        plan.scenario.frames,
        trial_seed(plan.seed, n, trial),
    );
    let logistic = plan.methods.contains(&Method::LogisticLlr);
    for &window in &plan.windows {
        let mut cfg = plan.train;
        cfg.window = window;
        cfg.stride = window;
        cfg.overall = !logistic;
        let result = split
            .as_ref()
            .map_err(|e| KronError::InvalidParameter(e.to_string()))
            .and_then(|s| {
                let clf = train_classifier(&s.train, grid, &cfg)?;
                evaluate(&clf, &s.test, &plan.methods)
            });
        let accs = match result {
            Ok(a) => a,
            Err(e) => {
                log::error!("sweep cell n={n} T={window} trial={trial} failed: {e}");
                vec![f64::NAN; plan.methods.len()]
            }
        };
        for (&method, accuracy) in plan.methods.iter().zip(accs) {
            rows.push(SweepRow {
                method,
                window,
                n,
                trial,
                accuracy,
            });
        }
    }
    rows
}

fn evaluate(clf: &LlrClassifier<f64>, test: &[FeatureTrack64], methods: &[Method]) -> Result<Vec<f64>, KronError> {
    methods
        .iter()
        .map(|m| match m {
            Method::LogisticLlr => accuracy(test, |t| Ok(clf.classify_track(t)?.label)),
            Method::OverallLlr => accuracy(test, |t| Ok(classify_overall(t, clf.models(), clf.stride())?.label)),
        })
        .collect()
}

/// Runs every `(n, trial)` cell, in parallel on the current rayon pool, and
/// returns rows sorted by `(method, T, n, trial)`.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>, CliError> {
    if plan.methods.is_empty() || plan.windows.is_empty() || plan.ns.is_empty() || plan.trials == 0 {
        return Err(CliError::Usage("sweep needs at least one method, window, n and trial".into()));
    }
    let truth = make_ground_truth::<f64>(&plan.scenario.spec)?;
    let cells: Vec<(usize, usize)> = plan
        .ns
        .iter()
        .flat_map(|&n| (0..plan.trials).map(move |t| (n, t)))
        .collect();
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .flat_map_iter(|&(n, trial)| run_cell(plan, &truth, n, trial))
        .collect();
    rows.sort_by_key(|r| (r.method, r.window, r.n, r.trial));
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,T,n,trial,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:?}\n",
            r.method.name(),
            r.window,
            r.n,
            r.trial,
            r.accuracy
        ));
    }
    out
}

/// Mean accuracy over the non-NaN trials of one `(method, T, n)` cell.
pub fn cell_mean(rows: &[SweepRow], method: Method, window: usize, n: usize) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.window == window && r.n == n && !r.accuracy.is_nan())
        .map(|r| r.accuracy)
        .collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}
