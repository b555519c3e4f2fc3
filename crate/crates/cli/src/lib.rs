//! Command-line front end: `simulate`, `fit`, `classify`, `eval`, `sweep` and
//! `inspect` subcommands over the `kroncov` library.

pub mod args;
pub mod scenario;
pub mod sweep;

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Parser;
use nalgebra::SymmetricEigen;
use thiserror::Error;

use kroncov::classifier::{classify_overall, train_classifier, LlrClassifier, TrainConfig};
use kroncov::estimator::{FitConfig, KronCovModel};
use kroncov::io_formats::{
    read_model, read_results_file, read_tracks, write_model, write_results_file, ModelFile, ResultsRow,
};
use kroncov::synth::{derive_seed, make_ground_truth, simulate_split};
use kroncov::{ClassLabel, FeatureTrack64, KronError};

use args::{Cli, ClassifyArgs, Command, EvalArgs, FitArgs, InspectArgs, ModelArgs, SimulateArgs, SweepArgs};
use scenario::Scenario;
use sweep::{rows_to_csv, run_sweep, SweepPlan};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Kron(#[from] KronError),
    #[error("{path}: {source}")]
    File { path: String, source: KronError },
}

impl CliError {
    /// 1 usage, 2 data or validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Kron(e) | CliError::File { source: e, .. } => {
                if e.is_numerical() {
                    3
                } else {
                    2
                }
            }
        }
    }
}

fn at(path: &Path) -> impl FnOnce(KronError) -> CliError + '_ {
    move |source| CliError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

fn check_input(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", path.display())))
    }
}

/// The directory an output file goes into must already exist.
fn check_output(path: &Path) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if path.is_dir() {
        return Err(CliError::Usage(format!("{}: is a directory", path.display())));
    }
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: directory {} does not exist", path.display(), dir.display())))
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| at(path)(KronError::Io(e)))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let scenario = Scenario::from_args(&a.scenario, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| at(&a.out)(KronError::Io(e)))?;
    let truth = make_ground_truth::<f64>(&scenario.spec)?;
    let sample_seed = derive_seed(a.seed, 1);
    let split = simulate_split(&truth, &scenario.spec.grid, a.n_train, a.n_test, scenario.frames, sample_seed)?;
    let train = a.out.join("train.ftrk");
    let test = a.out.join("test.ftrk");
    kroncov::io_formats::write_tracks(&train, &split.train).map_err(at(&train))?;
    kroncov::io_formats::write_tracks(&test, &split.test).map_err(at(&test))?;
    write_file(&a.out.join("scenario.txt"), &scenario.describe(a.n_train, a.n_test, sample_seed))?;
    println!(
        "wrote {} train and {} test tracks (grid {}, p={}, {} frames, seed {}) to {}",
        split.train.len(),
        split.test.len(),
        scenario.spec.grid,
        scenario.spec.grid.size(),
        scenario.frames,
        a.seed,
        a.out.display()
    );
    for (i, j) in truth.jitter.iter().enumerate() {
        if *j > 0.0 {
            println!("class {i}: U raised by {j:?} to make the covariance positive definite");
        }
    }
    Ok(())
}

/// Training configuration from the shared model flags.
pub fn train_config(m: &ModelArgs, window: usize, stride: Option<usize>, overall: bool) -> Result<TrainConfig<f64>, CliError> {
    if window == 0 {
        return Err(CliError::Usage("--T must be at least 1".into()));
    }
    if let Some(r) = m.rho {
        if !(0.0..=1.0).contains(&r) {
            return Err(CliError::Usage(format!("--rho must lie in [0, 1], got {r}")));
        }
    }
    let mut cfg = TrainConfig::new(window);
    cfg.stride = stride.unwrap_or(window);
    if cfg.stride == 0 {
        return Err(CliError::Usage("--stride must be at least 1".into()));
    }
    cfg.levels = if overall { 1 } else { m.levels };
    cfg.overall = overall;
    cfg.rho = m.rho;
    cfg.fit = match (m.rank, m.beta) {
        (_, Some(b)) if !(b >= 0.0) => return Err(CliError::Usage(format!("--beta must be >= 0, got {b}"))),
        (_, Some(b)) => FitConfig::with_beta(b),
        (Some(0), None) => return Err(CliError::Usage("--rank must be at least 1".into())),
        (Some(r), None) => FitConfig::with_rank(r),
        (None, None) => FitConfig::default(),
    };
    cfg.fit.refine = !m.no_refine;
    Ok(cfg)
}

fn load_tracks(path: &Path) -> Result<Vec<FeatureTrack64>, CliError> {
    read_tracks(path).map_err(at(path))
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let cfg = train_config(&a.model_args, a.window, a.stride, a.overall)?;
    check_input(&a.train)?;
    check_output(&a.model)?;
    let tracks = load_tracks(&a.train)?;
    let Some(first) = tracks.first() else {
        return Err(CliError::Data(format!("{}: no tracks", a.train.display())));
    };
    let grid = first.grid.clone();
    let clf = train_classifier(&tracks, &grid, &cfg)?;
    write_model(&a.model, &ModelFile::Classifier(clf.clone())).map_err(at(&a.model))?;
    println!(
        "fitted {} blocks x 2 classes on {} tracks (grid {grid}, T={}, levels {})",
        clf.models().num_blocks(),
        tracks.len(),
        cfg.window,
        cfg.levels
    );
    println!("weights={:?} intercept={:?}", clf.weights(), clf.intercept());
    Ok(())
}

fn load_classifier(path: &Path) -> Result<LlrClassifier<f64>, CliError> {
    match read_model(path).map_err(at(path))? {
        ModelFile::Classifier(c) => Ok(c),
        ModelFile::Model(_) => Err(CliError::Data(format!(
            "{} holds a single covariance model, not a classifier",
            path.display()
        ))),
    }
}

/// Classifies every track; returns result rows and the ids of skipped
/// (too short) tracks.
pub fn classify_tracks(
    clf: &LlrClassifier<f64>,
    tracks: &[FeatureTrack64],
    overall: bool,
) -> Result<(Vec<ResultsRow<f64>>, Vec<String>), CliError> {
    let model_grid = clf.models().grid();
    let mut rows = Vec::with_capacity(tracks.len());
    let mut skipped = Vec::new();
    for t in tracks {
        if &t.grid != model_grid {
            return Err(CliError::Data(format!(
                "track '{}' has grid {} (p={}) but the model expects grid {} (p={})",
                t.track_id,
                t.grid,
                t.grid.size(),
                model_grid,
                model_grid.size()
            )));
        }
        let scored = if overall {
            classify_overall(t, clf.models(), clf.stride())
        } else {
            clf.classify_track(t)
        };
        match scored {
            Ok(s) => rows.push(ResultsRow {
                track_id: t.track_id.clone(),
                true_label: t.label,
                predicted_label: s.label,
                score: s.score,
                llrs: s.llrs,
            }),
            Err(KronError::TrackTooShort { .. }) => skipped.push(t.track_id.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((rows, skipped))
}

fn cmd_classify(a: &ClassifyArgs) -> Result<(), CliError> {
    check_input(&a.model)?;
    check_input(&a.test)?;
    check_output(&a.out)?;
    let clf = load_classifier(&a.model)?;
    let tracks = load_tracks(&a.test)?;
    let (rows, skipped) = classify_tracks(&clf, &tracks, a.overall)?;
    let columns = if a.overall { 1 } else { clf.models().num_blocks() };
    write_results_file(&a.out, &rows, columns).map_err(at(&a.out))?;
    println!("classified {} tracks, skipped {}", rows.len(), skipped.len());
    if !skipped.is_empty() {
        eprintln!(
            "skipped tracks shorter than T={}: {}",
            clf.models().window(),
            skipped.join(" ")
        );
    }
    Ok(())
}

/// Accuracy summary of labeled results.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; 2]; 2],
}

impl EvalReport {
    pub fn from_rows(rows: &[ResultsRow<f64>]) -> Result<Self, CliError> {
        let mut confusion = [[0usize; 2]; 2];
        for r in rows {
            let truth = r
                .true_label
                .ok_or_else(|| CliError::Data(format!("track '{}' has no true label", r.track_id)))?;
            confusion[truth.index()][r.predicted_label.index()] += 1;
        }
        Ok(Self { confusion })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        (self.confusion[0][0] + self.confusion[1][1]) as f64 / self.total() as f64
    }

    pub fn class_accuracy(&self, class: ClassLabel) -> f64 {
        let row = self.confusion[class.index()];
        row[class.index()] as f64 / (row[0] + row[1]) as f64
    }

    pub fn render(&self) -> String {
        let c = &self.confusion;
        format!(
            "tracks={}\naccuracy={:?}\naccuracy_class0={:?}\naccuracy_class1={:?}\nconfusion true0_pred0={} true0_pred1={} true1_pred0={} true1_pred1={}\n",
            self.total(),
            self.accuracy(),
            self.class_accuracy(ClassLabel::Zero),
            self.class_accuracy(ClassLabel::One),
            c[0][0],
            c[0][1],
            c[1][0],
            c[1][1]
        )
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    check_input(&a.results)?;
    let header = fs::read_to_string(&a.results)
        .map_err(|e| at(&a.results)(KronError::Io(e)))?
        .lines()
        .next()
        .unwrap_or("")
        .to_string();
    if !header.split(',').any(|h| h == "true_label") {
        return Err(CliError::Data(format!(
            "{}: no true_label column to evaluate against",
            a.results.display()
        )));
    }
    let rows = read_results_file::<f64>(&a.results).map_err(at(&a.results))?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no result rows", a.results.display())));
    }
    print!("{}", EvalReport::from_rows(&rows)?.render());
    Ok(())
}

/// Applies `KRONCOV_THREADS` to the global rayon pool.
fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("KRONCOV_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("KRONCOV_THREADS must be a positive integer, got '{v}'")))?;
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    configure_threads()?;
    check_output(&a.out)?;
    let scenario = Scenario::from_args(&a.scenario, a.seed)?;
    let train = train_config(&a.model_args, 1, None, false)?;
    let mut methods = a.methods.clone();
    methods.sort();
    methods.dedup();
    let plan = SweepPlan {
        scenario,
        ns: a.n.clone(),
        windows: a.windows.clone(),
        methods: methods.clone(),
        trials: a.trials,
        n_test: a.n_test,
        seed: a.seed,
        train,
    };
    let rows = run_sweep(&plan)?;
    write_file(&a.out, &rows_to_csv(&rows))?;
    for &m in &methods {
        for &t in &a.windows {
            for &n in &a.n {
                println!(
                    "method={} T={t} n={n} mean_accuracy={:.4}",
                    m.name(),
                    sweep::cell_mean(&rows, m, t, n)
                );
            }
        }
    }
    Ok(())
}

fn model_summary(out: &mut String, m: &KronCovModel<f64>) {
    use std::fmt::Write as _;
    let eig = SymmetricEigen::new(m.covariance()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let _ = writeln!(out, "    separation_rank={}", m.rank());
    if let Some(d) = m.diagnostics() {
        let _ = writeln!(out, "    singular_values={:?}", d.singular_values);
        let _ = writeln!(
            out,
            "    beta={:?} requested_rank={} rank_attained={} iterations={} converged={}",
            d.beta,
            d.requested_rank.map_or("-".to_string(), |r| r.to_string()),
            d.rank_attained,
            d.iterations,
            d.converged
        );
    }
    let _ = writeln!(out, "    rho={:?}", m.rho());
    let _ = writeln!(out, "    min_eigenvalue={lo:?} max_eigenvalue={hi:?}");
    let _ = writeln!(
        out,
        "    eigenvalue_floor_applied={} ({} corrections)",
        m.eig_floor_applied(),
        m.floor_corrections().len()
    );
    let tt = m.dims().t();
    for (i, f) in m.factors().iter().enumerate() {
        let row: Vec<f64> = f.temporal_offsets()[tt - 1..].to_vec();
        let _ = writeln!(
            out,
            "    factor {i}: {} T_first_row={:?} S_trace={:?}",
            f.parity().as_str(),
            row,
            f.spatial().trace()
        );
    }
}

/// Text report of a model file.
pub fn inspect_report(file: &ModelFile<f64>) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    match file {
        ModelFile::Model(m) => {
            let _ = writeln!(out, "model p={} T={}", m.dims().p(), m.dims().t());
            model_summary(&mut out, m);
        }
        ModelFile::Classifier(c) => {
            let models = c.models();
            let _ = writeln!(
                out,
                "classifier grid={} T={} stride={} levels={} blocks={}",
                models.grid(),
                models.window(),
                c.stride(),
                models.tree().levels(),
                models.num_blocks()
            );
            let _ = writeln!(out, "intercept={:?}", c.intercept());
            for (j, (pair, block)) in models.models().iter().zip(models.tree().blocks()).enumerate() {
                let _ = writeln!(
                    out,
                    "block {j} level={} features={} weight={:?}",
                    models.tree().level_of(j),
                    block.len(),
                    c.weights()[j]
                );
                for (k, m) in pair.iter().enumerate() {
                    let _ = writeln!(out, "  class {k}:");
                    model_summary(&mut out, m);
                }
            }
        }
    }
    out
}

fn cmd_inspect(a: &InspectArgs) -> Result<(), CliError> {
    check_input(&a.model)?;
    let file = read_model::<f64>(&a.model).map_err(at(&a.model))?;
    print!("{}", inspect_report(&file));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: ClassLabel, p: ClassLabel) -> ResultsRow<f64> {
        ResultsRow { track_id: "t".into(), true_label: Some(t), predicted_label: p, score: 0.0, llrs: vec![] }
    }

    #[test]
    fn eval_report_counts() {
        use ClassLabel::{One, Zero};
        let r = EvalReport::from_rows(&[row(Zero, Zero), row(Zero, One), row(One, One), row(One, One)]).unwrap();
        assert_eq!(r.confusion, [[1, 1], [0, 2]]);
        assert_eq!(r.accuracy(), 0.75);
        assert_eq!(r.class_accuracy(Zero), 0.5);
        assert!(r.render().contains("accuracy=0.75\n"));
        let mut unlabeled = row(Zero, Zero);
        unlabeled.true_label = None;
        assert!(matches!(EvalReport::from_rows(&[unlabeled]), Err(CliError::Data(_))));
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::from(KronError::Parse { line: 1, msg: String::new() }).exit_code(), 2);
        assert_eq!(CliError::from(KronError::Numerical(String::new())).exit_code(), 3);
        assert_eq!(run(["kroncov", "fit"]), 1);
    }

    #[test]
    fn train_config_validates_knobs() {
        let args = |rank, beta, rho| ModelArgs { rank, beta, levels: 4, rho, no_refine: false };
        assert!(train_config(&args(None, None, None), 0, None, false).is_err());
        assert!(train_config(&args(Some(0), None, None), 4, None, false).is_err());
        assert!(train_config(&args(None, Some(-1.0), None), 4, None, false).is_err());
        assert!(train_config(&args(None, None, Some(2.0)), 4, None, false).is_err());
        assert!(train_config(&args(None, None, None), 4, Some(0), false).is_err());
        let cfg = train_config(&args(None, None, None), 4, None, true).unwrap();
        assert_eq!((cfg.levels, cfg.stride, cfg.overall), (1, 4, true));
    }
}
