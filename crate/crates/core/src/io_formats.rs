//! Text formats for feature tracks, fitted models and classification results.
//!
//! Tracks use the line-oriented `ftrk` format:
//!
//! ```text
//! ftrk 1 p=4 grid=2x2 id=track-7 label=1
//! 0.5 -1.25 3.0 0.0
//! 0.75 -1.0 2.5 0.125
//!
//! ftrk 1 p=4 grid=2x2 id=track-8 label=?
//! ...
//! ```
//!
//! Models and classifiers are TOML documents ending in an `# end` marker line,
//! so a truncated file is rejected rather than half-read. Floats are written
//! in shortest round-trip form, which makes every write byte-deterministic.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classifier::{BlockTree, ClassModelSet, LlrClassifier, TrainConfig};
use crate::error::{KronError, Result};
use crate::estimator::{
    FitConfig, FitDiagnostics, FloorCorrection, KronCovModel, KronFactor, Parity, Penalty, SolverOptions,
};
use crate::kron_algebra::SpaceTimeDims;
use crate::scalar::Real;
use crate::track::{ClassLabel, FeatureTrack, SpatialGrid};

pub const TRACK_FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "kroncov-model";
const END_MARKER: &str = "# end";

fn parse_err(line: usize, msg: impl Into<String>) -> KronError {
    KronError::Parse {
        line,
        msg: msg.into(),
    }
}

// ---------------------------------------------------------------- tracks

/// Serializes tracks in `ftrk` format.
pub fn format_tracks<S: Real>(tracks: &[FeatureTrack<S>]) -> String {
    let mut out = String::new();
    for (i, t) in tracks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let label = t.label.map_or("?".to_string(), |l| l.to_string());
        let _ = writeln!(
            out,
            "ftrk {TRACK_FORMAT_VERSION} p={} grid={} id={} label={label}",
            t.p(),
            t.grid,
            t.track_id
        );
        for frame in &t.frames {
            for (k, x) in frame.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{x:?}");
            }
            out.push('\n');
        }
    }
    out
}

struct Header {
    line: usize,
    p: usize,
    grid: SpatialGrid,
    id: String,
    label: Option<ClassLabel>,
}

fn parse_header(line_no: usize, line: &str) -> Result<Header> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some("ftrk") {
        return Err(parse_err(line_no, "expected a track header starting with 'ftrk'"));
    }
    let version: u32 = tokens
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(line_no, "missing or malformed format version"))?;
    if version != TRACK_FORMAT_VERSION {
        return Err(KronError::UnsupportedVersion {
            found: version,
            supported: TRACK_FORMAT_VERSION,
        });
    }
    let (mut p, mut grid, mut id, mut label) = (None, None, None, None);
    for tok in tokens {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, format!("header field '{tok}' is not key=value")))?;
        match key {
            "p" => {
                p = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| parse_err(line_no, format!("bad feature count '{value}'")))?,
                )
            }
            "grid" => grid = Some(SpatialGrid::parse(value).map_err(|e| parse_err(line_no, e.to_string()))?),
            "id" if !value.is_empty() => id = Some(value.to_string()),
            "label" => {
                label = Some(match value {
                    "0" => Some(ClassLabel::Zero),
                    "1" => Some(ClassLabel::One),
                    "?" => None,
                    _ => return Err(parse_err(line_no, format!("label must be 0, 1 or ?, got '{value}'"))),
                })
            }
            _ => return Err(parse_err(line_no, format!("unexpected header field '{tok}'"))),
        }
    }
    let missing = |name: &str| parse_err(line_no, format!("header is missing '{name}='"));
    let p = p.ok_or_else(|| missing("p"))?;
    let grid = grid.ok_or_else(|| missing("grid"))?;
    if grid.size() != p {
        return Err(parse_err(
            line_no,
            format!("grid {grid} has {} cells but p={p}", grid.size()),
        ));
    }
    Ok(Header {
        line: line_no,
        p,
        grid,
        id: id.ok_or_else(|| missing("id"))?,
        label: label.ok_or_else(|| missing("label"))?,
    })
}

/// Parses `ftrk` text. Errors name the 1-based line number.
pub fn parse_tracks<S: Real>(text: &str) -> Result<Vec<FeatureTrack<S>>> {
    let mut tracks = Vec::new();
    let mut current: Option<(Header, Vec<DVector<S>>)> = None;
    let finish = |cur: Option<(Header, Vec<DVector<S>>)>, tracks: &mut Vec<FeatureTrack<S>>| -> Result<()> {
        if let Some((h, frames)) = cur {
            if frames.is_empty() {
                return Err(parse_err(h.line, format!("track '{}' has no frames", h.id)));
            }
            let track = FeatureTrack::new(h.id, h.label, h.grid, frames).map_err(|e| parse_err(h.line, e.to_string()))?;
            tracks.push(track);
        }
        Ok(())
    };
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(current.take(), &mut tracks)?;
            continue;
        }
        if line.starts_with("ftrk") {
            finish(current.take(), &mut tracks)?;
            current = Some((parse_header(line_no, line)?, Vec::new()));
            continue;
        }
        let Some((header, frames)) = current.as_mut() else {
            return Err(parse_err(line_no, "frame data outside a track (missing header)"));
        };
        let values: Vec<&str> = line.split_ascii_whitespace().collect();
        if values.len() != header.p {
            return Err(parse_err(
                line_no,
                format!("expected {} values, found {}", header.p, values.len()),
            ));
        }
        let mut frame = DVector::zeros(header.p);
        for (k, v) in values.iter().enumerate() {
            let x: S = v
                .parse()
                .map_err(|_| parse_err(line_no, format!("value {} ('{v}') is not a number", k + 1)))?;
            if !x.is_finite_value() {
                return Err(parse_err(line_no, format!("value {} ('{v}') is not finite", k + 1)));
            }
            frame[k] = x;
        }
        frames.push(frame);
    }
    finish(current.take(), &mut tracks)?;
    Ok(tracks)
}

pub fn read_tracks<S: Real>(path: impl AsRef<Path>) -> Result<Vec<FeatureTrack<S>>> {
    parse_tracks(&fs::read_to_string(path)?)
}

pub fn write_tracks<S: Real>(path: impl AsRef<Path>, tracks: &[FeatureTrack<S>]) -> Result<()> {
    fs::write(path, format_tracks(tracks))?;
    Ok(())
}

// ---------------------------------------------------------------- models

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorDoc {
    parity: String,
    /// First row of `T_i`: offsets `0, 1, ..., T-1`.
    temporal_row: Vec<f64>,
    /// First column of `T_i`: offsets `0, -1, ..., -(T-1)`.
    temporal_col: Vec<f64>,
    /// Lower triangle of `S_i`, row by row.
    spatial_lower: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FloorDoc {
    delta: f64,
    direction: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsDoc {
    beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    requested_rank: Option<usize>,
    rank_attained: bool,
    singular_values: Vec<f64>,
    iterations: usize,
    converged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    p: usize,
    t: usize,
    rank: usize,
    rho: f64,
    mean: Vec<f64>,
    u: Vec<f64>,
    floor_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<DiagnosticsDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    factors: Vec<FactorDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    floor: Vec<FloorDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitDoc {
    /// `"rank"` or `"beta"`.
    penalty: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    tol: f64,
    max_iter: usize,
    clamp_u: bool,
    refine: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainDoc {
    window: usize,
    stride: usize,
    levels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    eps_rel: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    overall: bool,
    fit: FitDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockDoc {
    features: Vec<usize>,
    class0: ModelDoc,
    class1: ModelDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierDoc {
    grid: String,
    window: usize,
    stride: usize,
    levels: usize,
    block_count: usize,
    intercept: f64,
    weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    training: Option<TrainDoc>,
    blocks: Vec<BlockDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classifier: Option<ClassifierDoc>,
}

/// Contents of a model file.
#[derive(Debug, Clone)]
pub enum ModelFile<S: Real> {
    Model(KronCovModel<S>),
    Classifier(LlrClassifier<S>),
}

fn to_f64<S: Real>(xs: impl IntoIterator<Item = S>) -> Vec<f64> {
    xs.into_iter().map(|x| x.as_f64()).collect()
}

fn from_f64<S: Real>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::lit(x)).collect()
}

fn model_doc<S: Real>(m: &KronCovModel<S>) -> ModelDoc {
    let dims = m.dims();
    let (p, tt) = (dims.p(), dims.t());
    let factors = m
        .factors()
        .iter()
        .map(|f| {
            let c = f.temporal_offsets();
            let s = f.spatial();
            FactorDoc {
                parity: f.parity().as_str().to_string(),
                temporal_row: to_f64((0..tt).map(|j| c[tt - 1 + j])),
                temporal_col: to_f64((0..tt).map(|j| c[tt - 1 - j])),
                spatial_lower: to_f64((0..p).flat_map(|i| (0..=i).map(move |k| s[(i, k)]))),
            }
        })
        .collect();
    ModelDoc {
        p,
        t: tt,
        rank: m.rank(),
        rho: m.rho().as_f64(),
        mean: to_f64(m.mean().iter().copied()),
        u: to_f64(m.u().iter().copied()),
        floor_count: m.floor_corrections().len(),
        diagnostics: m.diagnostics().map(|d| DiagnosticsDoc {
            beta: d.beta.as_f64(),
            requested_rank: d.requested_rank,
            rank_attained: d.rank_attained,
            singular_values: to_f64(d.singular_values.iter().copied()),
            iterations: d.iterations,
            converged: d.converged,
        }),
        factors,
        floor: m
            .floor_corrections()
            .iter()
            .map(|c| FloorDoc {
                delta: c.delta.as_f64(),
                direction: to_f64(c.direction.iter().copied()),
            })
            .collect(),
    }
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(KronError::Format(format!("{what}: expected {expected} values, found {found}")));
    }
    Ok(())
}

fn model_from_doc<S: Real>(d: &ModelDoc) -> Result<KronCovModel<S>> {
    let dims = SpaceTimeDims::new(d.p, d.t)?;
    let (p, tt) = (d.p, d.t);
    check_len("factor count", d.rank, d.factors.len())?;
    check_len("floor correction count", d.floor_count, d.floor.len())?;
    let mut factors = Vec::with_capacity(d.factors.len());
    for (i, f) in d.factors.iter().enumerate() {
        let parity = match f.parity.as_str() {
            "symmetric" => Parity::Symmetric,
            "antisymmetric" => Parity::Antisymmetric,
            other => return Err(KronError::Format(format!("factor {i}: unknown parity '{other}'"))),
        };
        check_len("temporal first row", tt, f.temporal_row.len())?;
        check_len("temporal first column", tt, f.temporal_col.len())?;
        check_len("spatial lower triangle", p * (p + 1) / 2, f.spatial_lower.len())?;
        if f.temporal_row[0] != f.temporal_col[0] {
            return Err(KronError::Format(format!(
                "factor {i}: temporal first row and column disagree on the diagonal"
            )));
        }
        let mut offsets = vec![S::zero(); 2 * tt - 1];
        for j in 0..tt {
            offsets[tt - 1 + j] = S::lit(f.temporal_row[j]);
            offsets[tt - 1 - j] = S::lit(f.temporal_col[j]);
        }
        let sign = if parity == Parity::Symmetric { 1.0 } else { -1.0 };
        let mut spatial = DMatrix::zeros(p, p);
        let mut idx = 0;
        for r in 0..p {
            for c in 0..=r {
                let v = f.spatial_lower[idx];
                idx += 1;
                spatial[(r, c)] = S::lit(v);
                if r != c {
                    spatial[(c, r)] = S::lit(sign * v);
                }
            }
        }
        let factor = KronFactor::new(parity, offsets.clone(), spatial.clone())?;
        if factor.temporal_offsets() != offsets.as_slice() || factor.spatial() != &spatial {
            return Err(KronError::Format(format!(
                "factor {i} does not have the symmetry of its declared parity"
            )));
        }
        factors.push(factor);
    }
    check_len("model mean", dims.pt(), d.mean.len())?;
    check_len("model U", p, d.u.len())?;
    let floor = d
        .floor
        .iter()
        .map(|c| {
            check_len("floor direction", dims.pt(), c.direction.len())?;
            Ok(FloorCorrection {
                delta: S::lit(c.delta),
                direction: DVector::from_vec(from_f64(&c.direction)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = d.diagnostics.as_ref().map(|g| FitDiagnostics {
        beta: S::lit(g.beta),
        requested_rank: g.requested_rank,
        rank_attained: g.rank_attained,
        singular_values: from_f64(&g.singular_values),
        iterations: g.iterations,
        converged: g.converged,
    });
    let all_finite = d.mean.iter().chain(&d.u).chain(std::iter::once(&d.rho)).all(|x| x.is_finite());
    if !all_finite {
        return Err(KronError::NonFinite("model document".into()));
    }
    KronCovModel::from_parts(
        dims,
        DVector::from_vec(from_f64(&d.mean)),
        factors,
        DVector::from_vec(from_f64(&d.u)),
        S::lit(d.rho),
        floor,
        diagnostics,
    )
}

fn fit_doc<S: Real>(f: &FitConfig<S>) -> FitDoc {
    let (penalty, target_rank, beta) = match f.penalty {
        Penalty::TargetRank(r) => ("rank", Some(r), None),
        Penalty::Beta(b) => ("beta", None, Some(b.as_f64())),
    };
    FitDoc {
        penalty: penalty.to_string(),
        target_rank,
        beta,
        tol: f.solver.tol,
        max_iter: f.solver.max_iter,
        clamp_u: f.clamp_u,
        refine: f.refine,
    }
}

fn fit_from_doc<S: Real>(d: &FitDoc) -> Result<FitConfig<S>> {
    let mut cfg = match (d.penalty.as_str(), d.target_rank, d.beta) {
        ("rank", Some(r), None) => FitConfig::with_rank(r),
        ("beta", None, Some(b)) => FitConfig::with_beta(S::lit(b)),
        _ => {
            return Err(KronError::Format(
                "fit penalty must be 'rank' with target_rank or 'beta' with beta".into(),
            ))
        }
    };
    cfg.solver = SolverOptions {
        tol: d.tol,
        max_iter: d.max_iter,
    };
    cfg.clamp_u = d.clamp_u;
    cfg.refine = d.refine;
    Ok(cfg)
}

fn train_doc<S: Real>(c: &TrainConfig<S>) -> TrainDoc {
    TrainDoc {
        window: c.window,
        stride: c.stride,
        levels: c.levels,
        rho: c.rho.map(|r| r.as_f64()),
        eps_rel: c.eps_rel.as_f64(),
        lambda: c.lambda.map(|l| l.as_f64()),
        overall: c.overall,
        fit: fit_doc(&c.fit),
    }
}

fn train_from_doc<S: Real>(d: &TrainDoc) -> Result<TrainConfig<S>> {
    Ok(TrainConfig {
        window: d.window,
        stride: d.stride,
        levels: d.levels,
        fit: fit_from_doc(&d.fit)?,
        rho: d.rho.map(S::lit),
        eps_rel: S::lit(d.eps_rel),
        lambda: d.lambda.map(S::lit),
        overall: d.overall,
    })
}

fn classifier_doc<S: Real>(c: &LlrClassifier<S>) -> ClassifierDoc {
    let models = c.models();
    let tree = models.tree();
    ClassifierDoc {
        grid: models.grid().to_string(),
        window: models.window(),
        stride: c.stride(),
        levels: tree.levels(),
        block_count: tree.len(),
        intercept: c.intercept().as_f64(),
        weights: to_f64(c.weights().iter().copied()),
        training: c.training().map(train_doc),
        blocks: tree
            .blocks()
            .iter()
            .zip(models.models())
            .map(|(features, [m0, m1])| BlockDoc {
                features: features.clone(),
                class0: model_doc(m0),
                class1: model_doc(m1),
            })
            .collect(),
    }
}

fn classifier_from_doc<S: Real>(d: &ClassifierDoc) -> Result<LlrClassifier<S>> {
    let grid = SpatialGrid::parse(&d.grid).map_err(|e| KronError::Format(e.to_string()))?;
    check_len("block count", d.block_count, d.blocks.len())?;
    check_len("block weights", d.block_count, d.weights.len())?;
    let tree = BlockTree::from_blocks(grid.size(), d.levels, d.blocks.iter().map(|b| b.features.clone()).collect())?;
    let models = d
        .blocks
        .iter()
        .map(|b| Ok([model_from_doc(&b.class0)?, model_from_doc(&b.class1)?]))
        .collect::<Result<Vec<_>>>()?;
    let set = ClassModelSet::new(grid, d.window, tree, models)?;
    let mut c = LlrClassifier::new(set, from_f64(&d.weights), S::lit(d.intercept), d.stride)?;
    if let Some(t) = &d.training {
        c = c.with_training(train_from_doc(t)?);
    }
    Ok(c)
}

fn render(doc: &Document) -> Result<String> {
    let mut text = toml::to_string(doc).map_err(|e| KronError::Format(e.to_string()))?;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(END_MARKER);
    text.push('\n');
    Ok(text)
}

/// Serializes a single covariance model.
pub fn model_to_string<S: Real>(model: &KronCovModel<S>) -> Result<String> {
    render(&Document {
        format: MODEL_MAGIC.into(),
        version: MODEL_FORMAT_VERSION,
        kind: "model".into(),
        model: Some(model_doc(model)),
        classifier: None,
    })
}

/// Serializes a trained classifier with all its block models.
pub fn classifier_to_string<S: Real>(classifier: &LlrClassifier<S>) -> Result<String> {
    render(&Document {
        format: MODEL_MAGIC.into(),
        version: MODEL_FORMAT_VERSION,
        kind: "classifier".into(),
        model: None,
        classifier: Some(classifier_doc(classifier)),
    })
}

/// Parses a model document. Truncated or inconsistent documents are
/// rejected as a whole.
pub fn parse_model_document<S: Real>(text: &str) -> Result<ModelFile<S>> {
    if text.trim_end().lines().last().map(str::trim) != Some(END_MARKER) {
        return Err(KronError::Format(format!(
            "missing '{END_MARKER}' marker; the file is truncated or not a model file"
        )));
    }
    let value: toml::Table = text.parse().map_err(|e: toml::de::Error| KronError::Format(e.to_string()))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_MAGIC) {
        return Err(KronError::Format(format!("not a {MODEL_MAGIC} document")));
    }
    let version = value.get("version").and_then(|v| v.as_integer()).unwrap_or(-1);
    if version != MODEL_FORMAT_VERSION as i64 {
        return Err(KronError::UnsupportedVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let doc: Document = toml::from_str(text).map_err(|e| KronError::Format(e.to_string()))?;
    match (doc.kind.as_str(), &doc.model, &doc.classifier) {
        ("model", Some(m), None) => Ok(ModelFile::Model(model_from_doc(m)?)),
        ("classifier", None, Some(c)) => Ok(ModelFile::Classifier(classifier_from_doc(c)?)),
        (kind, _, _) => Err(KronError::Format(format!(
            "document kind '{kind}' does not match its contents"
        ))),
    }
}

pub fn read_model<S: Real>(path: impl AsRef<Path>) -> Result<ModelFile<S>> {
    parse_model_document(&fs::read_to_string(path)?)
}

/// Writes a model or classifier. Concurrent writes to one path are not
/// coordinated.
pub fn write_model<S: Real>(path: impl AsRef<Path>, file: &ModelFile<S>) -> Result<()> {
    let text = match file {
        ModelFile::Model(m) => model_to_string(m)?,
        ModelFile::Classifier(c) => classifier_to_string(c)?,
    };
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- results

/// One classified track.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow<S: Real> {
    pub track_id: String,
    pub true_label: Option<ClassLabel>,
    pub predicted_label: ClassLabel,
    pub score: S,
    /// Per-block LLRs; every row of one file has the same count.
    pub llrs: Vec<S>,
}

fn label_field(l: Option<ClassLabel>) -> String {
    l.map_or(String::new(), |l| l.to_string())
}

/// Writes results as CSV with header
/// `track_id,true_label,predicted_label,score[,llr_0..]`.
pub fn write_results<S: Real, W: Write>(out: W, rows: &[ResultsRow<S>], llr_columns: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(out));
    let csv_err = |e: csv::Error| KronError::Io(std::io::Error::other(e));
    let mut header: Vec<String> = ["track_id", "true_label", "predicted_label", "score"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..llr_columns).map(|j| format!("llr_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        if r.llrs.len() != llr_columns {
            return Err(KronError::Shape {
                what: "LLR columns",
                expected: llr_columns.to_string(),
                found: format!("{} (track '{}')", r.llrs.len(), r.track_id),
            });
        }
        let mut rec = vec![
            r.track_id.clone(),
            label_field(r.true_label),
            r.predicted_label.to_string(),
            format!("{:?}", r.score),
        ];
        rec.extend(r.llrs.iter().map(|x| format!("{x:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_file<S: Real>(path: impl AsRef<Path>, rows: &[ResultsRow<S>], llr_columns: usize) -> Result<()> {
    write_results(fs::File::create(path)?, rows, llr_columns)
}

/// Reads a results CSV. A missing or empty `true_label` column yields
/// `None` labels.
pub fn read_results<S: Real, R: Read>(input: R) -> Result<Vec<ResultsRow<S>>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("track_id").ok_or_else(|| parse_err(1, "missing column 'track_id'"))?;
    let pred_col = col("predicted_label").ok_or_else(|| parse_err(1, "missing column 'predicted_label'"))?;
    let score_col = col("score").ok_or_else(|| parse_err(1, "missing column 'score'"))?;
    let truth_col = col("true_label");
    let llr_cols: Vec<usize> = (0..).map_while(|j| col(&format!("llr_{j}"))).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let label = |s: &str| match s {
            "0" => Ok(Some(ClassLabel::Zero)),
            "1" => Ok(Some(ClassLabel::One)),
            "" | "?" => Ok(None),
            _ => Err(parse_err(line, format!("bad label '{s}'"))),
        };
        let number = |s: &str| -> Result<S> {
            s.parse::<S>()
                .ok()
                .filter(|x| x.is_finite_value())
                .ok_or_else(|| parse_err(line, format!("'{s}' is not a finite number")))
        };
        let predicted_label =
            label(field(pred_col))?.ok_or_else(|| parse_err(line, "missing predicted label"))?;
        rows.push(ResultsRow {
            track_id: field(id_col).to_string(),
            true_label: truth_col.map(|c| label(field(c))).transpose()?.flatten(),
            predicted_label,
            score: number(field(score_col))?,
            llrs: llr_cols.iter().map(|&c| number(field(c))).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

pub fn read_results_file<S: Real>(path: impl AsRef<Path>) -> Result<Vec<ResultsRow<S>>> {
    read_results(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_track(id: &str, label: Option<ClassLabel>) -> FeatureTrack<f64> {
        let grid = SpatialGrid::new(vec![1, 3]).unwrap();
        let frames = vec![
            DVector::from_vec(vec![0.1, -2.5, 1e-300]),
            DVector::from_vec(vec![1.0 / 3.0, 7.0, -0.0]),
        ];
        FeatureTrack::new(id, label, grid, frames).unwrap()
    }

    #[test]
    fn tracks_round_trip_exactly() {
        let tracks = vec![sample_track("a", Some(ClassLabel::One)), sample_track("b", None)];
        let text = format_tracks(&tracks);
        assert!(text.starts_with("ftrk 1 p=3 grid=1x3 id=a label=1\n"));
        assert!(text.contains("id=b label=?"));
        let back: Vec<FeatureTrack<f64>> = parse_tracks(&text).unwrap();
        assert_eq!(back, tracks);
    }

    #[test]
    fn grid_mismatch_names_line() {
        let err = parse_tracks::<f64>("ftrk 1 p=5 grid=2x2 id=x label=0\n1 2 3 4 5\n").unwrap_err();
        assert!(matches!(err, KronError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn wrong_field_count_names_line() {
        let err = parse_tracks::<f64>("ftrk 1 p=2 grid=2 id=x label=0\n1 2\n1 2 3\n").unwrap_err();
        assert!(matches!(err, KronError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn nonfinite_rejected() {
        let err = parse_tracks::<f64>("ftrk 1 p=2 grid=2 id=x label=0\n1 NaN\n").unwrap_err();
        assert!(matches!(err, KronError::Parse { line: 2, .. }), "{err}");
        let err = parse_tracks::<f64>("ftrk 1 p=1 grid=1 id=x label=0\ninf\n").unwrap_err();
        assert!(matches!(err, KronError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_version_and_headers() {
        assert!(matches!(
            parse_tracks::<f64>("ftrk 2 p=1 grid=1 id=x label=0\n1\n"),
            Err(KronError::UnsupportedVersion { found: 2, .. })
        ));
        assert!(parse_tracks::<f64>("ftrk 1 p=1 grid=1 label=0\n1\n").is_err());
        assert!(parse_tracks::<f64>("ftrk 1 p=1 grid=1 id=x label=2\n1\n").is_err());
        assert!(parse_tracks::<f64>("1 2\n").is_err());
        assert!(parse_tracks::<f64>("ftrk 1 p=1 grid=1 id=x label=0\n\n").is_err());
    }

    #[test]
    fn empty_input_has_no_tracks() {
        assert!(parse_tracks::<f64>("").unwrap().is_empty());
    }

    #[test]
    fn results_round_trip() {
        let rows = vec![
            ResultsRow {
                track_id: "t1".into(),
                true_label: Some(ClassLabel::One),
                predicted_label: ClassLabel::Zero,
                score: -0.25,
                llrs: vec![1.5, -3.0],
            },
            ResultsRow {
                track_id: "t2".into(),
                true_label: None,
                predicted_label: ClassLabel::One,
                score: 1e-20,
                llrs: vec![0.0, 2.0],
            },
        ];
        let mut buf = Vec::new();
        write_results(&mut buf, &rows, 2).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("track_id,true_label,predicted_label,score,llr_0,llr_1\n"));
        let back: Vec<ResultsRow<f64>> = read_results(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }
}
