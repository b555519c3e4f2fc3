//! Gaussian log-likelihood-ratio classifiers on multiframe features.
//!
//! The spatial grid is recursively bisected into a dyadic block tree. Each
//! block gets one covariance model per class, fitted on the block's features
//! across `T` frames. A track's per-block LLRs are summed over its windows and
//! combined with nonnegative logistic weights.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{KronError, Result};
use crate::estimator::{fit_dc_kronpca, FitConfig, KronCovModel, SampleSet, DEFAULT_EPS_REL};
use crate::kron_algebra::SpaceTimeDims;
use crate::scalar::Real;
use crate::shrinkage::{ledoit_wolf_rho, shrink};
use crate::track::{ClassLabel, FeatureTrack, SpatialGrid};

/// Gradient-norm stopping tolerance of the logistic solver.
pub const LOGISTIC_GRAD_TOL: f64 = 1e-8;
const LOGISTIC_MAX_ITER: usize = 200;

/// Nested feature blocks, level by level. Block 0 is the full grid; level `l`
/// holds blocks `2^l - 1 .. 2^(l+1) - 1`, each the half of its parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTree {
    levels: usize,
    blocks: Vec<Vec<usize>>,
}

impl BlockTree {
    /// Rebuilds a tree from stored blocks, checking the nesting invariants.
    pub fn from_blocks(p: usize, levels: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if levels == 0 || levels >= usize::BITS as usize || blocks.len() != (1 << levels) - 1 {
            return Err(KronError::InvalidParameter(format!(
                "block tree with {levels} levels must have 2^levels - 1 blocks, got {}",
                blocks.len()
            )));
        }
        for l in 0..levels {
            let mut seen = vec![false; p];
            for b in &blocks[(1 << l) - 1..(1 << (l + 1)) - 1] {
                if b.is_empty() {
                    return Err(KronError::InvalidParameter("empty feature block".into()));
                }
                for &i in b {
                    if i >= p || seen[i] {
                        return Err(KronError::InvalidParameter(format!(
                            "level {l} blocks do not partition {p} features"
                        )));
                    }
                    seen[i] = true;
                }
            }
            if seen.iter().any(|&s| !s) {
                return Err(KronError::InvalidParameter(format!(
                    "level {l} blocks do not cover {p} features"
                )));
            }
        }
        Ok(Self { levels, blocks })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Feature indices of every block, sorted ascending within a block.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Level of block `j`.
    pub fn level_of(&self, j: usize) -> usize {
        (usize::BITS - (j + 1).leading_zeros() - 1) as usize
    }
}

/// Splits the grid `levels - 1` times. Each split halves a block along its
/// longest axis (ties go to the first axis); the first half gets `len / 2`
/// cells.
pub fn build_block_tree(grid: &SpatialGrid, levels: usize) -> Result<BlockTree> {
    if levels == 0 {
        return Err(KronError::InvalidParameter("block tree needs at least one level".into()));
    }
    let full: Vec<(usize, usize)> = grid.extents().iter().map(|&e| (0, e)).collect();
    let mut boxes = vec![full];
    let mut level_start = 0;
    for level in 1..levels {
        let parents = boxes[level_start..].to_vec();
        level_start = boxes.len();
        for b in parents {
            let (axis, len) = b
                .iter()
                .map(|(lo, hi)| hi - lo)
                .enumerate()
                .fold((0, 0), |best, (a, len)| if len > best.1 { (a, len) } else { best });
            if len < 2 {
                return Err(KronError::InvalidParameter(format!(
                    "grid {grid} cannot be split into {levels} levels: level {level} would contain an empty block"
                )));
            }
            let mid = b[axis].0 + len / 2;
            let mut lo = b.clone();
            lo[axis].1 = mid;
            let mut hi = b;
            hi[axis].0 = mid;
            boxes.push(lo);
            boxes.push(hi);
        }
    }
    let blocks = boxes.iter().map(|b| box_indices(grid, b)).collect();
    Ok(BlockTree { levels, blocks })
}

fn box_indices(grid: &SpatialGrid, b: &[(usize, usize)]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut coord: Vec<usize> = b.iter().map(|r| r.0).collect();
    loop {
        out.push(grid.flat_index(&coord));
        let mut axis = coord.len();
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            coord[axis] += 1;
            if coord[axis] < b[axis].1 {
                break;
            }
            coord[axis] = b[axis].0;
        }
    }
}

/// A Gaussian density with a precomputed Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianDensity<S: Real> {
    mean: DVector<S>,
    chol: Cholesky<S, Dyn>,
    half_logdet: S,
}

impl<S: Real> GaussianDensity<S> {
    pub fn new(mean: DVector<S>, cov: DMatrix<S>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(KronError::Shape {
                what: "covariance",
                expected: format!("{0}x{0}", mean.len()),
                found: format!("{}x{}", cov.nrows(), cov.ncols()),
            });
        }
        let chol = Cholesky::new(cov).ok_or_else(|| {
            KronError::NotPositiveDefinite("Cholesky factorization failed; apply an eigenvalue floor".into())
        })?;
        let half_logdet = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        Ok(Self {
            mean,
            chol,
            half_logdet,
        })
    }

    pub fn from_model(model: &KronCovModel<S>) -> Result<Self> {
        Self::new(model.mean().clone(), model.covariance())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `-½ (x-μ)ᵀ Σ⁻¹ (x-μ) - ½ log det Σ - (n/2) log 2π`.
    pub fn loglik(&self, x: &DVector<S>) -> Result<S> {
        if x.len() != self.dim() {
            return Err(KronError::Shape {
                what: "sample",
                expected: self.dim().to_string(),
                found: x.len().to_string(),
            });
        }
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&(x - &self.mean))
            .ok_or_else(|| KronError::Numerical("triangular solve failed".into()))?;
        let two_pi = S::two_pi();
        Ok(-S::lit(0.5) * z.norm_squared() - self.half_logdet - S::count(self.dim()) * S::lit(0.5) * two_pi.ln())
    }
}

/// Log-density of `x` under a model.
pub fn gaussian_loglik<S: Real>(x: &DVector<S>, model: &KronCovModel<S>) -> Result<S> {
    GaussianDensity::from_model(model)?.loglik(x)
}

/// Per-class, per-block models sharing one grid, window and block tree.
#[derive(Debug, Clone)]
pub struct ClassModelSet<S: Real> {
    grid: SpatialGrid,
    window: usize,
    tree: BlockTree,
    models: Vec<[KronCovModel<S>; 2]>,
    densities: Vec<[GaussianDensity<S>; 2]>,
}

impl<S: Real> ClassModelSet<S> {
    pub fn new(grid: SpatialGrid, window: usize, tree: BlockTree, models: Vec<[KronCovModel<S>; 2]>) -> Result<Self> {
        if models.len() != tree.len() {
            return Err(KronError::Shape {
                what: "block model count",
                expected: tree.len().to_string(),
                found: models.len().to_string(),
            });
        }
        let mut densities = Vec::with_capacity(models.len());
        for (j, (pair, block)) in models.iter().zip(tree.blocks()).enumerate() {
            let dims = SpaceTimeDims::new(block.len(), window)?;
            for m in pair {
                if m.dims() != dims {
                    return Err(KronError::Shape {
                        what: "block model dims",
                        expected: format!("{dims:?}"),
                        found: format!("{:?} (block {j})", m.dims()),
                    });
                }
            }
            let density = |k: usize| {
                GaussianDensity::from_model(&pair[k]).map_err(|e| match e {
                    KronError::NotPositiveDefinite(msg) => {
                        KronError::NotPositiveDefinite(format!("block {j}, class {k}: {msg}"))
                    }
                    other => other,
                })
            };
            densities.push([density(0)?, density(1)?]);
        }
        Ok(Self {
            grid,
            window,
            tree,
            models,
            densities,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    /// `[class 0, class 1]` models of every block.
    pub fn models(&self) -> &[[KronCovModel<S>; 2]] {
        &self.models
    }

    pub fn num_blocks(&self) -> usize {
        self.models.len()
    }

    /// LLR of one window restricted to block `j`.
    pub fn window_llr(&self, j: usize, x: &DVector<S>) -> Result<S> {
        let [d0, d1] = &self.densities[j];
        Ok(d1.loglik(x)? - d0.loglik(x)?)
    }
}

/// Training parameters of the block LLR classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<S: Real> {
    /// Frames per multiframe sample.
    pub window: usize,
    /// Frames between consecutive window starts.
    pub stride: usize,
    pub levels: usize,
    pub fit: FitConfig<S>,
    /// Shrinkage weight used instead of the Ledoit-Wolf estimate.
    pub rho: Option<S>,
    pub eps_rel: S,
    /// L2 penalty of the logistic combiner; `1 / n_tracks` when unset.
    pub lambda: Option<S>,
    /// Train only the full-grid block with unit weight and zero intercept.
    pub overall: bool,
}

impl<S: Real> TrainConfig<S> {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            stride: window,
            levels: 4,
            fit: FitConfig::default(),
            rho: None,
            eps_rel: S::lit(DEFAULT_EPS_REL),
            lambda: None,
            overall: false,
        }
    }
}

/// Fits one block model: structured fit, shrinkage, eigenvalue floor.
pub fn fit_block_model<S: Real>(data: &SampleSet<S>, cfg: &TrainConfig<S>) -> Result<KronCovModel<S>> {
    let fitted = fit_dc_kronpca(data, &cfg.fit)?;
    let rho = match cfg.rho {
        Some(r) => r,
        None => ledoit_wolf_rho(data)?,
    };
    shrink(&fitted, rho)?.with_psd_floor(cfg.eps_rel)
}

/// Fits every block model of both classes. Tracks shorter than the window
/// are skipped with a warning; unlabeled tracks are rejected.
pub fn train_class_models<S: Real>(
    tracks: &[FeatureTrack<S>],
    grid: &SpatialGrid,
    cfg: &TrainConfig<S>,
) -> Result<ClassModelSet<S>> {
    let levels = if cfg.overall { 1 } else { cfg.levels };
    let tree = build_block_tree(grid, levels)?;
    let windows = class_windows(tracks, grid, cfg.window, cfg.stride)?;
    let mut models = Vec::with_capacity(tree.len());
    for (j, block) in tree.blocks().iter().enumerate() {
        let dims = SpaceTimeDims::new(block.len(), cfg.window)?;
        let mut pair = Vec::with_capacity(2);
        for (k, class_windows) in windows.iter().enumerate() {
            let samples: Vec<DVector<S>> = class_windows
                .iter()
                .map(|&(t, start)| tracks[t].multiframe(start, cfg.window, Some(block)))
                .collect();
            if samples.len() < 2 {
                return Err(KronError::InsufficientSamples {
                    context: format!("block {j} ({} features), class {k}", block.len()),
                    required: 2,
                    found: samples.len(),
                });
            }
            let data = SampleSet::new(dims, samples)?;
            let model = fit_block_model(&data, cfg).map_err(|e| match e {
                KronError::InsufficientSamples { required, found, .. } => KronError::InsufficientSamples {
                    context: format!("block {j} ({} features), class {k}", block.len()),
                    required,
                    found,
                },
                other => other,
            })?;
            pair.push(model);
        }
        let m1 = pair.pop().expect("two classes");
        let m0 = pair.pop().expect("two classes");
        models.push([m0, m1]);
    }
    ClassModelSet::new(grid.clone(), cfg.window, tree, models)
}

/// `(track, window start)` pairs per class.
fn class_windows<S: Real>(
    tracks: &[FeatureTrack<S>],
    grid: &SpatialGrid,
    window: usize,
    stride: usize,
) -> Result<[Vec<(usize, usize)>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    for (t, track) in tracks.iter().enumerate() {
        check_grid(track, grid)?;
        let label = track.label.ok_or_else(|| {
            KronError::InvalidParameter(format!("training track '{}' has no label", track.track_id))
        })?;
        match track.window_starts(window, stride) {
            Ok(starts) => out[label.index()].extend(starts.into_iter().map(|s| (t, s))),
            Err(KronError::TrackTooShort { .. }) => {
                log::warn!(
                    "skipping track '{}': {} frames is shorter than the window {window}",
                    track.track_id,
                    track.len()
                );
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn check_grid<S: Real>(track: &FeatureTrack<S>, grid: &SpatialGrid) -> Result<()> {
    if &track.grid != grid {
        return Err(KronError::Shape {
            what: "track grid",
            expected: format!("{grid} (model)"),
            found: format!("{} (track '{}')", track.grid, track.track_id),
        });
    }
    Ok(())
}

/// Per-block LLRs of a track, summed over its windows.
pub fn track_llr_vector<S: Real>(track: &FeatureTrack<S>, models: &ClassModelSet<S>, stride: usize) -> Result<Vec<S>> {
    track_llr_prefix(track, models, stride, models.num_blocks())
}

/// LLRs of the first `count` blocks only.
fn track_llr_prefix<S: Real>(
    track: &FeatureTrack<S>,
    models: &ClassModelSet<S>,
    stride: usize,
    count: usize,
) -> Result<Vec<S>> {
    check_grid(track, models.grid())?;
    let window = models.window();
    let starts = track.window_starts(window, stride)?;
    let mut llr = vec![S::zero(); count];
    for (j, block) in models.tree().blocks()[..count].iter().enumerate() {
        for &s in &starts {
            llr[j] += models.window_llr(j, &track.multiframe(s, window, Some(block)))?;
        }
    }
    if let Some(j) = llr.iter().position(|x| !x.is_finite_value()) {
        return Err(KronError::NonFinite(format!(
            "LLR of block {j} for track '{}' (feature values overflow the model)",
            track.track_id
        )));
    }
    Ok(llr)
}

/// Nonnegative logistic combining weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit<S: Real> {
    pub weights: Vec<S>,
    pub intercept: S,
    /// Number of fits performed by the clamp-and-refit loop.
    pub rounds: usize,
    /// True when every weight was clamped and uniform weights were used.
    pub fallback: bool,
}

/// Fits `P(class 1) = σ(b + wᵀx)` with an L2 penalty on `w`, then repeatedly
/// drops blocks with negative weight and refits until all weights are
/// nonnegative. Each row of `features` is one track.
pub fn fit_nonneg_logistic<S: Real>(
    features: &DMatrix<S>,
    labels: &[ClassLabel],
    lambda: Option<S>,
) -> Result<LogisticFit<S>> {
    let (n, b) = features.shape();
    if labels.len() != n {
        return Err(KronError::Shape {
            what: "label count",
            expected: n.to_string(),
            found: labels.len().to_string(),
        });
    }
    for k in [ClassLabel::Zero, ClassLabel::One] {
        let count = labels.iter().filter(|&&l| l == k).count();
        if count < 2 {
            return Err(KronError::InsufficientSamples {
                context: format!("logistic combiner, class {k}"),
                required: 2,
                found: count,
            });
        }
    }
    if features.iter().any(|x| !x.is_finite_value()) {
        return Err(KronError::NonFinite("LLR features".into()));
    }
    let lambda = lambda.map_or(1.0 / n as f64, |l| l.as_f64());
    if !(lambda >= 0.0) {
        return Err(KronError::InvalidParameter(format!("L2 penalty must be >= 0, got {lambda}")));
    }
    let x = DMatrix::from_fn(n, b, |i, j| features[(i, j)].as_f64());
    let y: Vec<f64> = labels.iter().map(|l| l.index() as f64).collect();

    let mut active: Vec<usize> = (0..b).collect();
    let mut rounds = 0;
    while !active.is_empty() {
        rounds += 1;
        let sub = DMatrix::from_fn(n, active.len(), |i, c| x[(i, active[c])]);
        let (w, intercept) = newton_logistic(&sub, &y, lambda, None)?;
        if w.iter().all(|&v| v >= 0.0) {
            let mut weights = vec![S::zero(); b];
            for (c, &j) in active.iter().enumerate() {
                weights[j] = S::lit(w[c]);
            }
            return Ok(LogisticFit {
                weights,
                intercept: S::lit(intercept),
                rounds,
                fallback: false,
            });
        }
        active = active.iter().zip(&w).filter(|(_, &v)| v >= 0.0).map(|(&j, _)| j).collect();
    }
    log::warn!("every block weight was clamped to zero; falling back to uniform weights");
    let uniform = 1.0 / b.max(1) as f64;
    let offset: Vec<f64> = (0..n).map(|i| x.row(i).sum() * uniform).collect();
    let (_, intercept) = newton_logistic(&DMatrix::zeros(n, 0), &y, lambda, Some(&offset))?;
    Ok(LogisticFit {
        weights: vec![S::lit(uniform); b],
        intercept: S::lit(intercept),
        rounds,
        fallback: true,
    })
}

/// Damped Newton on the mean log-loss plus `λ/2 ‖w‖²` (intercept unpenalized).
fn newton_logistic(x: &DMatrix<f64>, y: &[f64], lambda: f64, offset: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
    let (n, b) = x.shape();
    let nf = n as f64;
    let design = DMatrix::from_fn(n, b + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let off = |i: usize| offset.map_or(0.0, |o| o[i]);
    let objective = |theta: &DVector<f64>| {
        let eta = &design * theta;
        let loss: f64 = (0..n)
            .map(|i| {
                let z = eta[i] + off(i);
                // log(1 + e^z) - y z, computed stably
                z.max(0.0) + (-z.abs()).exp().ln_1p() - y[i] * z
            })
            .sum::<f64>()
            / nf;
        loss + 0.5 * lambda * theta.rows(1, b).norm_squared()
    };
    let mut theta = DVector::zeros(b + 1);
    let mut f = objective(&theta);
    for _ in 0..LOGISTIC_MAX_ITER {
        let eta = &design * &theta;
        let mut grad = DVector::zeros(b + 1);
        let mut hess = DMatrix::zeros(b + 1, b + 1);
        for i in 0..n {
            let prob = 1.0 / (1.0 + (-(eta[i] + off(i))).exp());
            let row = design.row(i).transpose();
            grad.axpy((prob - y[i]) / nf, &row, 1.0);
            hess.ger(prob * (1.0 - prob) / nf, &row, &row, 1.0);
        }
        for j in 1..=b {
            grad[j] += lambda * theta[j];
            hess[(j, j)] += lambda;
        }
        if grad.norm() <= LOGISTIC_GRAD_TOL {
            break;
        }
        let step = newton_step(&hess, &grad)?;
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &theta - &step * t;
            let fc = objective(&cand);
            if fc <= f - 1e-4 * t * slope {
                theta = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let w = theta.rows(1, b).iter().copied().collect();
    Ok((w, theta[0]))
}

fn newton_step(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let dim = hess.nrows();
    let scale = hess.diagonal().amax().max(1.0);
    let mut ridge = 0.0;
    for _ in 0..20 {
        let h = hess + DMatrix::identity(dim, dim) * ridge;
        if let Some(c) = Cholesky::new(h) {
            return Ok(c.solve(grad));
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 10.0 };
    }
    Err(KronError::Numerical("logistic Hessian is not positive definite".into()))
}

/// Decision of a classifier on one track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackScore<S: Real> {
    pub label: ClassLabel,
    pub score: S,
    pub llrs: Vec<S>,
}

/// Class 1 iff the score is strictly positive.
pub fn label_for_score<S: Real>(score: S) -> ClassLabel {
    if score > S::zero() {
        ClassLabel::One
    } else {
        ClassLabel::Zero
    }
}

/// Block models with nonnegative combining weights.
#[derive(Debug, Clone)]
pub struct LlrClassifier<S: Real> {
    models: ClassModelSet<S>,
    weights: Vec<S>,
    intercept: S,
    stride: usize,
    training: Option<TrainConfig<S>>,
}

impl<S: Real> LlrClassifier<S> {
    pub fn new(models: ClassModelSet<S>, weights: Vec<S>, intercept: S, stride: usize) -> Result<Self> {
        if weights.len() != models.num_blocks() {
            return Err(KronError::Shape {
                what: "block weights",
                expected: models.num_blocks().to_string(),
                found: weights.len().to_string(),
            });
        }
        if weights.iter().any(|w| !(*w >= S::zero()) || !w.is_finite_value()) || !intercept.is_finite_value() {
            return Err(KronError::InvalidParameter(
                "block weights must be finite and nonnegative, intercept finite".into(),
            ));
        }
        if stride == 0 {
            return Err(KronError::InvalidParameter("stride must be positive".into()));
        }
        Ok(Self {
            models,
            weights,
            intercept,
            stride,
            training: None,
        })
    }

    /// Records the configuration the classifier was trained with.
    pub fn with_training(mut self, cfg: TrainConfig<S>) -> Self {
        self.training = Some(cfg);
        self
    }

    pub fn training(&self) -> Option<&TrainConfig<S>> {
        self.training.as_ref()
    }

    /// Single full-grid block, weight 1, intercept 0.
    pub fn overall(models: ClassModelSet<S>, stride: usize) -> Result<Self> {
        if models.tree().levels() != 1 {
            return Err(KronError::InvalidParameter(
                "the overall classifier uses a one-level block tree".into(),
            ));
        }
        Self::new(models, vec![S::one()], S::zero(), stride)
    }

    pub fn models(&self) -> &ClassModelSet<S> {
        &self.models
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn intercept(&self) -> S {
        self.intercept
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn classify_track(&self, track: &FeatureTrack<S>) -> Result<TrackScore<S>> {
        let llrs = track_llr_vector(track, &self.models, self.stride)?;
        let score = self.intercept + llrs.iter().zip(&self.weights).map(|(&l, &w)| w * l).sum::<S>();
        Ok(TrackScore {
            label: label_for_score(score),
            score,
            llrs,
        })
    }
}

/// Quadratic classifier from the full-grid block (block 0) alone, with unit
/// weight and zero intercept.
pub fn classify_overall<S: Real>(track: &FeatureTrack<S>, models: &ClassModelSet<S>, stride: usize) -> Result<TrackScore<S>> {
    let llrs = track_llr_prefix(track, models, stride, 1)?;
    let score = llrs[0];
    Ok(TrackScore {
        label: label_for_score(score),
        score,
        llrs,
    })
}

/// Trains the block models and, unless `cfg.overall`, the logistic weights
/// on the training tracks' own LLRs.
pub fn train_classifier<S: Real>(
    tracks: &[FeatureTrack<S>],
    grid: &SpatialGrid,
    cfg: &TrainConfig<S>,
) -> Result<LlrClassifier<S>> {
    let models = train_class_models(tracks, grid, cfg)?;
    if cfg.overall {
        return Ok(LlrClassifier::overall(models, cfg.stride)?.with_training(*cfg));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for track in tracks {
        match track_llr_vector(track, &models, cfg.stride) {
            Ok(llr) => {
                rows.push(llr);
                labels.push(track.label.expect("labels checked during model training"));
            }
            Err(KronError::TrackTooShort { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let b = models.num_blocks();
    let features = DMatrix::from_fn(rows.len(), b, |i, j| rows[i][j]);
    let fit = fit_nonneg_logistic(&features, &labels, cfg.lambda)?;
    Ok(LlrClassifier::new(models, fit.weights, fit.intercept, cfg.stride)?.with_training(*cfg))
}
