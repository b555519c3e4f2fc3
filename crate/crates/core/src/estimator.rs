//! Diagonally corrected, block-Toeplitz Kronecker PCA covariance fitting.
//!
//! The sample covariance is rearranged and collapsed over block offsets, then a
//! low-rank matrix is fitted to the collapsed data with a nuclear-norm penalty
//! while the entries belonging to the covariance diagonal are treated as
//! missing. The diagonal is then absorbed by `I ⊗ diag(U)`.
//!
//! The low-rank solve is soft-impute: repeatedly fill the masked entries with
//! the current iterate and apply singular value thresholding at `beta / 2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{KronError, Result};
use crate::kron_algebra::{
    build_diag_mask, compose_from_offsets, rearrange, toeplitz_collapse, toeplitz_embed,
    toeplitz_from_offsets, DiagMask, SpaceTimeDims, ToeplitzCollapsed,
};
use crate::scalar::{eps_tol, Real};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Default relative Frobenius change at which soft-impute stops.
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;
/// Bisection steps used when choosing the penalty for a target rank.
pub const BETA_BISECTION_STEPS: usize = 40;
/// Default relative eigenvalue floor, as a fraction of the mean eigenvalue.
pub const DEFAULT_EPS_REL: f64 = 1e-6;
/// Floor used when the trace is not positive.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// `n` multiframe samples of length `pT`.
#[derive(Debug, Clone)]
pub struct SampleSet<S: Real> {
    dims: SpaceTimeDims,
    samples: Vec<DVector<S>>,
}

impl<S: Real> SampleSet<S> {
    pub fn new(dims: SpaceTimeDims, samples: Vec<DVector<S>>) -> Result<Self> {
        for (i, x) in samples.iter().enumerate() {
            if x.len() != dims.pt() {
                return Err(KronError::Shape {
                    what: "multiframe sample",
                    expected: dims.pt().to_string(),
                    found: format!("{} (sample {i})", x.len()),
                });
            }
        }
        Ok(Self { dims, samples })
    }

    pub fn dims(&self) -> SpaceTimeDims {
        self.dims
    }

    pub fn samples(&self) -> &[DVector<S>] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub(crate) fn check_usable(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(KronError::InsufficientSamples {
                context: "covariance estimation".into(),
                required: 2,
                found: self.n(),
            });
        }
        if let Some(i) = self
            .samples
            .iter()
            .position(|x| x.iter().any(|v| !v.is_finite_value()))
        {
            return Err(KronError::NonFinite(format!("sample {i}")));
        }
        Ok(())
    }
}

/// Sample mean and the `1/n`-normalized sample covariance.
pub fn sample_mean_cov<S: Real>(data: &SampleSet<S>) -> Result<(DVector<S>, DMatrix<S>)> {
    data.check_usable()?;
    let d = data.dims.pt();
    let n = S::count(data.n());
    let mut mean = DVector::zeros(d);
    for x in &data.samples {
        mean += x;
    }
    mean /= n;
    let mut centered = DMatrix::zeros(d, data.n());
    for (j, x) in data.samples.iter().enumerate() {
        centered.set_column(j, &(x - &mean));
    }
    let mut scm = &centered * centered.transpose() / n;
    symmetrize_in_place(&mut scm);
    Ok((mean, scm))
}

pub(crate) fn symmetrize_in_place<S: Real>(m: &mut DMatrix<S>) {
    let n = m.nrows();
    let half = S::lit(0.5);
    for i in 0..n {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Singular values of `m`, sorted in decreasing order.
pub fn singular_values<S: Real>(m: &DMatrix<S>) -> Result<Vec<S>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let svd = m
        .clone()
        .try_svd(false, false, S::default_epsilon(), 0)
        .ok_or_else(|| KronError::Numerical("SVD failed to converge".into()))?;
    let mut sv: Vec<S> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sv)
}

/// Singular triples of `m` sorted by decreasing singular value.
fn sorted_svd<S: Real>(m: &DMatrix<S>) -> Result<Vec<(S, DVector<S>, DVector<S>)>> {
    if m.iter().any(|x| !x.is_finite_value()) {
        return Err(KronError::Numerical("non-finite entry entering SVD".into()));
    }
    if let Some(triples) = diagonal_svd(m) {
        return Ok(triples);
    }
    let svd = m
        .clone()
        .try_svd(true, true, S::default_epsilon(), 0)
        .ok_or_else(|| KronError::Numerical("SVD failed to converge".into()))?;
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut triples: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, u.column(i).into_owned(), vt.row(i).transpose()))
        .collect();
    triples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(triples)
}

/// Closed-form SVD of a matrix with no off-diagonal entries. Avoids the
/// rounding a general SVD introduces, so thresholding such input is exact.
fn diagonal_svd<S: Real>(m: &DMatrix<S>) -> Option<Vec<(S, DVector<S>, DVector<S>)>> {
    let off_diagonal = m.iter().enumerate().any(|(k, &x)| k % m.nrows() != k / m.nrows() && x != S::zero());
    if off_diagonal {
        return None;
    }
    let (r, c) = m.shape();
    let mut triples: Vec<_> = (0..r.min(c))
        .map(|i| {
            let d = m[(i, i)];
            let sign = if d < S::zero() { -S::one() } else { S::one() };
            let mut u = DVector::zeros(r);
            u[i] = sign;
            let mut v = DVector::zeros(c);
            v[i] = S::one();
            (d.abs(), u, v)
        })
        .collect();
    triples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    Some(triples)
}

/// Soft-thresholds singular values and returns the result together with the
/// thresholded singular values (decreasing).
fn svt_with_values<S: Real>(z: &DMatrix<S>, tau: S) -> Result<(DMatrix<S>, Vec<S>)> {
    let triples = sorted_svd(z)?;
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    let mut values = Vec::with_capacity(triples.len());
    for (s, u, v) in &triples {
        let shrunk = (*s - tau).max(S::zero());
        values.push(shrunk);
        if shrunk > S::zero() {
            out.ger(shrunk, u, v, S::one());
        }
    }
    Ok((out, values))
}

/// Singular value thresholding: the proximal operator of `tau * ‖·‖_*`,
/// `argmin_X ½‖X − Z‖_F² + tau‖X‖_*`.
pub fn svt<S: Real>(z: &DMatrix<S>, tau: S) -> Result<DMatrix<S>> {
    if tau < S::zero() {
        return Err(KronError::InvalidParameter(format!(
            "SVT threshold must be nonnegative, got {tau}"
        )));
    }
    if tau == S::zero() {
        return Ok(z.clone());
    }
    svt_with_values(z, tau).map(|(m, _)| m)
}

/// Relative rank cutoff: [`RANK_TOL`], or a few hundred ulps when the scalar
/// type cannot resolve that.
fn rank_cut<S: Real>() -> S {
    S::lit(RANK_TOL).max(eps_tol(256.0))
}

fn numeric_rank<S: Real>(values: &[S]) -> usize {
    let max = values.iter().copied().fold(S::zero(), S::max);
    if max <= S::zero() {
        return 0;
    }
    let cut = max * rank_cut::<S>();
    values.iter().filter(|&&v| v > cut).count()
}

/// Stopping rule shared by soft-impute runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(KronError::InvalidParameter(format!(
                "solver needs tol > 0 and max_iter >= 1 (got tol={}, max_iter={})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Output of [`soft_impute`].
#[derive(Debug, Clone)]
pub struct SoftImputeResult<S: Real> {
    pub solution: ToeplitzCollapsed<S>,
    pub rank: usize,
    /// Singular values of the solution, decreasing.
    pub singular_values: Vec<S>,
    /// Objective `‖M̃∘(B − R̃)‖_F² + beta‖R̃‖_*` after each iteration.
    pub objective_trace: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `min ‖M̃∘(B − R̃)‖_F² + beta‖R̃‖_*` by soft-impute from `R̃ = 0`.
///
/// Hitting `max_iter` is reported through `converged = false`, not an error.
pub fn soft_impute<S: Real>(
    b: &ToeplitzCollapsed<S>,
    mask: &DiagMask<S>,
    beta: S,
    opts: SolverOptions,
) -> Result<SoftImputeResult<S>> {
    opts.validate()?;
    if mask.dims != b.dims() {
        return Err(KronError::Shape {
            what: "mask",
            expected: format!("{:?}", b.dims()),
            found: format!("{:?}", mask.dims),
        });
    }
    if !(beta >= S::zero()) || !beta.is_finite_value() {
        return Err(KronError::InvalidParameter(format!(
            "beta must be finite and nonnegative, got {beta}"
        )));
    }
    let m = &mask.collapsed_mask;
    let observed = m.component_mul(b.data());
    let missing = m.map(|x| S::one() - x);
    let tau = beta * S::lit(0.5);
    let tol = S::lit(opts.tol);

    let mut current = DMatrix::zeros(observed.nrows(), observed.ncols());
    let mut values = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let z = &observed + missing.component_mul(&current);
        let (next, sv) = svt_with_values(&z, tau)?;
        if next.iter().any(|x| !x.is_finite_value()) {
            return Err(KronError::Numerical("NaN in soft-impute iterate".into()));
        }
        let resid = (&observed - m.component_mul(&next)).norm_squared();
        trace.push(resid + beta * sv.iter().copied().sum::<S>());
        let delta = (&next - &current).norm();
        let base = current.norm();
        current = next;
        values = sv;
        if delta == S::zero() || (base > S::zero() && delta / base < tol) {
            converged = true;
            break;
        }
    }
    Ok(SoftImputeResult {
        solution: ToeplitzCollapsed::from_matrix(b.dims(), current)?,
        rank: numeric_rank(&values),
        singular_values: values,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Penalty chosen by [`select_beta_for_rank`].
#[derive(Debug, Clone)]
pub struct BetaSelection<S: Real> {
    pub beta: S,
    pub rank: usize,
    /// False when no tested penalty produced exactly the requested rank.
    pub attained: bool,
    pub result: SoftImputeResult<S>,
}

/// Finds, by bisection on `[0, 2σ_max(M̃∘B)]`, the smallest penalty whose
/// solution has rank at most `target`, i.e. the least shrinkage that still
/// yields the requested separation rank.
pub fn select_beta_for_rank<S: Real>(
    b: &ToeplitzCollapsed<S>,
    mask: &DiagMask<S>,
    target: usize,
    opts: SolverOptions,
) -> Result<BetaSelection<S>> {
    let dims = b.dims();
    let max_rank = dims.offsets().min(dims.p() * dims.p());
    if target == 0 || target > max_rank {
        return Err(KronError::InvalidParameter(format!(
            "target rank {target} outside [1, {max_rank}]"
        )));
    }
    let at_zero = soft_impute(b, mask, S::zero(), opts)?;
    if at_zero.rank <= target {
        return Ok(BetaSelection {
            beta: S::zero(),
            rank: at_zero.rank,
            attained: at_zero.rank == target,
            result: at_zero,
        });
    }
    let sigma_max = singular_values(&mask.collapsed_mask.component_mul(b.data()))?
        .first()
        .copied()
        .unwrap_or_else(S::zero);
    let mut lo = (S::zero(), at_zero);
    let mut hi_beta = S::lit(2.0) * sigma_max;
    let mut hi = soft_impute(b, mask, hi_beta, opts)?;
    for _ in 0..BETA_BISECTION_STEPS {
        let mid = (lo.0 + hi_beta) * S::lit(0.5);
        let res = soft_impute(b, mask, mid, opts)?;
        if res.rank > target {
            lo = (mid, res);
        } else {
            hi_beta = mid;
            hi = res;
        }
    }
    if hi.rank == target {
        return Ok(BetaSelection {
            beta: hi_beta,
            rank: hi.rank,
            attained: true,
            result: hi,
        });
    }
    log::warn!(
        "rank {target} not attained: bracket ranks {} (beta={}) and {} (beta={})",
        lo.1.rank,
        lo.0,
        hi.rank,
        hi_beta
    );
    if lo.1.rank - target < target - hi.rank {
        Ok(BetaSelection {
            beta: lo.0,
            rank: lo.1.rank,
            attained: false,
            result: lo.1,
        })
    } else {
        Ok(BetaSelection {
            beta: hi_beta,
            rank: hi.rank,
            attained: false,
            result: hi,
        })
    }
}

/// Output of [`refine_fixed_rank`].
#[derive(Debug, Clone)]
pub struct RefineResult<S: Real> {
    pub solution: ToeplitzCollapsed<S>,
    pub singular_values: Vec<S>,
    /// Masked residual `‖M̃∘(B − R̃)‖_F²` after each iteration; nonincreasing.
    pub residual_trace: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
}

/// Rank-constrained polish of a soft-impute solution ("hard-impute"): fill the
/// masked entries with the current iterate and truncate to the leading `rank`
/// singular triples, without shrinking them. Removes the nuclear-norm
/// shrinkage bias while keeping the rank the penalty selected.
pub fn refine_fixed_rank<S: Real>(
    b: &ToeplitzCollapsed<S>,
    mask: &DiagMask<S>,
    init: &ToeplitzCollapsed<S>,
    rank: usize,
    opts: SolverOptions,
) -> Result<RefineResult<S>> {
    opts.validate()?;
    if mask.dims != b.dims() || init.dims() != b.dims() {
        return Err(KronError::Shape {
            what: "refinement inputs",
            expected: format!("{:?}", b.dims()),
            found: format!("{:?} / {:?}", mask.dims, init.dims()),
        });
    }
    let m = &mask.collapsed_mask;
    let observed = m.component_mul(b.data());
    let missing = m.map(|x| S::one() - x);
    let tol = S::lit(opts.tol);
    let mut current = init.data().clone();
    let mut values = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let z = &observed + missing.component_mul(&current);
        let mut next = DMatrix::zeros(z.nrows(), z.ncols());
        values.clear();
        for (s, u, v) in sorted_svd(&z)?.into_iter().take(rank) {
            next.ger(s, &u, &v, S::one());
            values.push(s);
        }
        trace.push((&observed - m.component_mul(&next)).norm_squared());
        let delta = (&next - &current).norm();
        let base = current.norm();
        current = next;
        if delta == S::zero() || (base > S::zero() && delta / base < tol) {
            converged = true;
            break;
        }
    }
    Ok(RefineResult {
        solution: ToeplitzCollapsed::from_matrix(b.dims(), current)?,
        singular_values: values,
        residual_trace: trace,
        iterations,
        converged,
    })
}

/// Least-squares `U`: the mean over frames of the residual diagonal.
pub fn solve_diag_u<S: Real>(
    scm: &DMatrix<S>,
    lowrank: &DMatrix<S>,
    dims: SpaceTimeDims,
) -> Result<DVector<S>> {
    for (what, m) in [("scm", scm), ("low-rank estimate", lowrank)] {
        if m.shape() != (dims.pt(), dims.pt()) {
            return Err(KronError::Shape {
                what,
                expected: format!("{0}x{0}", dims.pt()),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
    }
    let (p, tt) = (dims.p(), dims.t());
    Ok(DVector::from_fn(p, |i, _| {
        (0..tt)
            .map(|t| {
                let k = t * p + i;
                scm[(k, k)] - lowrank[(k, k)]
            })
            .sum::<S>()
            / S::count(tt)
    }))
}

/// Symmetry class of a Kronecker term. Both kinds give a symmetric product:
/// symmetric ⊗ symmetric, or antisymmetric ⊗ antisymmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Symmetric,
    Antisymmetric,
}

impl Parity {
    fn sign<S: Real>(self) -> S {
        match self {
            Parity::Symmetric => S::one(),
            Parity::Antisymmetric => -S::one(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Symmetric => "symmetric",
            Parity::Antisymmetric => "antisymmetric",
        }
    }
}

/// One `T_i ⊗ S_i` term. `T_i` is stored by its offset coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct KronFactor<S: Real> {
    parity: Parity,
    temporal: Vec<S>,
    spatial: DMatrix<S>,
}

impl<S: Real> KronFactor<S> {
    /// Builds a term, forcing the declared symmetry on both factors.
    pub fn new(parity: Parity, temporal: Vec<S>, spatial: DMatrix<S>) -> Result<Self> {
        if temporal.len() % 2 == 0 || !spatial.is_square() {
            return Err(KronError::Shape {
                what: "Kronecker factor",
                expected: "2T-1 offsets and square spatial factor".into(),
                found: format!(
                    "{} offsets, {}x{} spatial",
                    temporal.len(),
                    spatial.nrows(),
                    spatial.ncols()
                ),
            });
        }
        let sign = parity.sign::<S>();
        let half = S::lit(0.5);
        let n = temporal.len();
        let mut temporal_sym = temporal.clone();
        for j in 0..n {
            temporal_sym[j] = (temporal[j] + sign * temporal[n - 1 - j]) * half;
        }
        let spatial_sym = (&spatial + spatial.transpose() * sign) * half;
        Ok(Self {
            parity,
            temporal: temporal_sym,
            spatial: spatial_sym,
        })
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Offset coefficients `c_j`, `j = -(T-1)..=T-1`, with `T[s,t] = c_{t-s}`.
    pub fn temporal_offsets(&self) -> &[S] {
        &self.temporal
    }

    pub fn temporal_matrix(&self) -> DMatrix<S> {
        toeplitz_from_offsets(&self.temporal).expect("odd length by construction")
    }

    pub fn spatial(&self) -> &DMatrix<S> {
        &self.spatial
    }

    pub(crate) fn scaled(&self, w: S) -> Self {
        Self {
            parity: self.parity,
            temporal: self.temporal.clone(),
            spatial: &self.spatial * w,
        }
    }
}

/// A rank-one eigen-correction `delta * v v^T` added by the eigenvalue floor.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorCorrection<S: Real> {
    pub delta: S,
    pub direction: DVector<S>,
}

/// Diagnostics recorded while fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics<S: Real> {
    pub beta: S,
    pub requested_rank: Option<usize>,
    pub rank_attained: bool,
    /// Singular values of the collapsed low-rank solution.
    pub singular_values: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fitted mean and covariance `Σ_i T_i ⊗ S_i + I ⊗ diag(U)`, possibly shrunk
/// and eigenvalue-floored.
#[derive(Debug, Clone, PartialEq)]
pub struct KronCovModel<S: Real> {
    dims: SpaceTimeDims,
    mean: DVector<S>,
    factors: Vec<KronFactor<S>>,
    u: DVector<S>,
    rho: S,
    floor: Vec<FloorCorrection<S>>,
    diagnostics: Option<FitDiagnostics<S>>,
}

impl<S: Real> KronCovModel<S> {
    pub fn new(
        dims: SpaceTimeDims,
        mean: DVector<S>,
        factors: Vec<KronFactor<S>>,
        u: DVector<S>,
    ) -> Result<Self> {
        Self::from_parts(dims, mean, factors, u, S::zero(), Vec::new(), None)
    }

    /// Reassembles a model, validating every shape.
    pub fn from_parts(
        dims: SpaceTimeDims,
        mean: DVector<S>,
        factors: Vec<KronFactor<S>>,
        u: DVector<S>,
        rho: S,
        floor: Vec<FloorCorrection<S>>,
        diagnostics: Option<FitDiagnostics<S>>,
    ) -> Result<Self> {
        let shape_err = |what: &'static str, expected: usize, found: usize| KronError::Shape {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        };
        if mean.len() != dims.pt() {
            return Err(shape_err("model mean", dims.pt(), mean.len()));
        }
        if u.len() != dims.p() {
            return Err(shape_err("model U", dims.p(), u.len()));
        }
        for f in &factors {
            if f.temporal.len() != dims.offsets() {
                return Err(shape_err("temporal offsets", dims.offsets(), f.temporal.len()));
            }
            if f.spatial.nrows() != dims.p() {
                return Err(shape_err("spatial factor", dims.p(), f.spatial.nrows()));
            }
        }
        for c in &floor {
            if c.direction.len() != dims.pt() {
                return Err(shape_err("floor direction", dims.pt(), c.direction.len()));
            }
        }
        if !(rho >= S::zero() && rho <= S::one()) {
            return Err(KronError::InvalidParameter(format!(
                "shrinkage weight must lie in [0, 1], got {rho}"
            )));
        }
        Ok(Self {
            dims,
            mean,
            factors,
            u,
            rho,
            floor,
            diagnostics,
        })
    }

    pub fn dims(&self) -> SpaceTimeDims {
        self.dims
    }

    pub fn mean(&self) -> &DVector<S> {
        &self.mean
    }

    pub fn factors(&self) -> &[KronFactor<S>] {
        &self.factors
    }

    /// Diagonal of `U`.
    pub fn u(&self) -> &DVector<S> {
        &self.u
    }

    pub fn rho(&self) -> S {
        self.rho
    }

    /// Separation rank: the number of Kronecker terms.
    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn floor_corrections(&self) -> &[FloorCorrection<S>] {
        &self.floor
    }

    pub fn eig_floor_applied(&self) -> bool {
        !self.floor.is_empty()
    }

    pub fn diagnostics(&self) -> Option<&FitDiagnostics<S>> {
        self.diagnostics.as_ref()
    }

    /// Low-rank part `Σ_i T_i ⊗ S_i` alone.
    pub fn lowrank(&self) -> DMatrix<S> {
        let temporal: Vec<Vec<S>> = self.factors.iter().map(|f| f.temporal.clone()).collect();
        let spatial: Vec<&DMatrix<S>> = self.factors.iter().map(|f| &f.spatial).collect();
        compose_from_offsets(
            self.dims,
            &temporal,
            &spatial,
            &DVector::zeros(self.dims.p()),
        )
    }

    /// The full `pT x pT` covariance the model represents.
    pub fn covariance(&self) -> DMatrix<S> {
        let temporal: Vec<Vec<S>> = self.factors.iter().map(|f| f.temporal.clone()).collect();
        let spatial: Vec<&DMatrix<S>> = self.factors.iter().map(|f| &f.spatial).collect();
        let mut sigma = compose_from_offsets(self.dims, &temporal, &spatial, &self.u);
        for c in &self.floor {
            sigma.ger(c.delta, &c.direction, &c.direction, S::one());
        }
        sigma
    }

    /// Replaces the stored parts after shrinkage toward `m I` with weight `rho`.
    pub(crate) fn shrunk(&self, rho: S, m: S) -> Self {
        let keep = S::one() - rho;
        Self {
            dims: self.dims,
            mean: self.mean.clone(),
            factors: self.factors.iter().map(|f| f.scaled(keep)).collect(),
            u: self.u.map(|x| keep * x + rho * m),
            rho,
            floor: self
                .floor
                .iter()
                .map(|c| FloorCorrection {
                    delta: keep * c.delta,
                    direction: c.direction.clone(),
                })
                .collect(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Returns a copy whose covariance has every eigenvalue at least
    /// `eps_rel * trace / (pT)`. The clamp is stored as rank-one corrections so
    /// the factored form stays intact.
    pub fn with_psd_floor(&self, eps_rel: S) -> Result<Self> {
        let sigma = self.covariance();
        let floor = floor_value(&sigma, eps_rel, self.dims.pt());
        let eig = sigma.symmetric_eigen();
        let mut out = self.clone();
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < floor {
                out.floor.push(FloorCorrection {
                    delta: floor - lambda,
                    direction: eig.eigenvectors.column(i).into_owned(),
                });
            }
        }
        Ok(out)
    }
}

fn floor_value<S: Real>(sigma: &DMatrix<S>, eps_rel: S, n: usize) -> S {
    let trace = sigma.trace();
    if trace > S::zero() {
        eps_rel * trace / S::count(n)
    } else {
        S::lit(ABSOLUTE_FLOOR)
    }
}

/// Clamps eigenvalues of a symmetric matrix from below at
/// `eps_rel * trace / n` (or [`ABSOLUTE_FLOOR`] when the trace is not
/// positive). Inputs already above the floor are returned unchanged.
pub fn psd_floor<S: Real>(sigma: &DMatrix<S>, eps_rel: S) -> Result<DMatrix<S>> {
    if !sigma.is_square() {
        return Err(KronError::Shape {
            what: "psd_floor input",
            expected: "square".into(),
            found: format!("{}x{}", sigma.nrows(), sigma.ncols()),
        });
    }
    if !(eps_rel > S::zero()) {
        return Err(KronError::InvalidParameter(format!(
            "eps_rel must be positive, got {eps_rel}"
        )));
    }
    let asym = (sigma - sigma.transpose()).norm();
    if asym > eps_tol::<S>(1e3) * sigma.norm() {
        return Err(KronError::NotSymmetric);
    }
    let n = sigma.nrows();
    let floor = floor_value(sigma, eps_rel, n);
    let eig = sigma.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return Ok(sigma.clone());
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    symmetrize_in_place(&mut out);
    Ok(out)
}

/// How the nuclear-norm penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty<S: Real> {
    /// Fixed `beta >= 0`.
    Beta(S),
    /// Penalty searched so the solution has this separation rank.
    TargetRank(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig<S: Real> {
    pub penalty: Penalty<S>,
    pub solver: SolverOptions,
    /// Clamp `U` at zero. Off by default: the unclamped value is the exact
    /// least-squares solution and definiteness is restored later.
    pub clamp_u: bool,
    /// Polish the penalized solution at its selected rank with
    /// [`refine_fixed_rank`]. On by default.
    pub refine: bool,
}

impl<S: Real> FitConfig<S> {
    pub fn with_beta(beta: S) -> Self {
        Self {
            penalty: Penalty::Beta(beta),
            solver: SolverOptions::default(),
            clamp_u: false,
            refine: true,
        }
    }

    pub fn with_rank(rank: usize) -> Self {
        Self {
            penalty: Penalty::TargetRank(rank),
            solver: SolverOptions::default(),
            clamp_u: false,
            refine: true,
        }
    }
}

impl<S: Real> Default for FitConfig<S> {
    fn default() -> Self {
        Self::with_rank(2)
    }
}

/// Splits a collapsed solution into symmetric and antisymmetric Kronecker
/// terms. Row `j` pairs with row `-j`, and column `(i, k)` with `(k, i)`.
fn extract_factors<S: Real>(
    rt: &ToeplitzCollapsed<S>,
    max_sigma: S,
) -> Result<Vec<(S, KronFactor<S>)>> {
    let dims = rt.dims();
    let (p, tt) = (dims.p(), dims.t());
    let data = rt.data();
    let rows = dims.offsets();
    let flip_col = |c: usize| (c / p) + p * (c % p);
    let quarter = S::lit(0.25);
    let cut = max_sigma * rank_cut::<S>();
    let mut out = Vec::new();
    for parity in [Parity::Symmetric, Parity::Antisymmetric] {
        let sign = parity.sign::<S>();
        let part = DMatrix::from_fn(rows, p * p, |r, c| {
            let (rf, cf) = (rows - 1 - r, flip_col(c));
            (data[(r, c)] + sign * data[(rf, c)] + sign * data[(r, cf)] + data[(rf, cf)]) * quarter
        });
        if part.iter().all(|&x| x == S::zero()) {
            continue;
        }
        for (sigma, u, v) in sorted_svd(&part)? {
            if !(sigma > cut) {
                break;
            }
            let root = sigma.sqrt();
            let temporal: Vec<S> = (0..rows)
                .map(|r| {
                    let m = dims.offset_multiplicity(dims.row_offset(r));
                    root * u[r] / S::count(m).sqrt()
                })
                .collect();
            let spatial = DMatrix::from_fn(p, p, |i, k| root * v[i + p * k]);
            out.push((sigma, KronFactor::new(parity, temporal, spatial)?));
        }
    }
    debug_assert!(out.iter().all(|(_, f)| f.temporal.len() == 2 * tt - 1));
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

/// Fits the model from a precomputed mean and sample covariance.
pub fn fit_from_scm<S: Real>(
    dims: SpaceTimeDims,
    mean: DVector<S>,
    scm: &DMatrix<S>,
    cfg: &FitConfig<S>,
) -> Result<KronCovModel<S>> {
    let b = toeplitz_collapse(&rearrange(scm, dims)?);
    let mask = build_diag_mask::<S>(dims);
    let (beta, requested_rank, attained, result) = match cfg.penalty {
        Penalty::Beta(beta) => (beta, None, true, soft_impute(&b, &mask, beta, cfg.solver)?),
        Penalty::TargetRank(r) => {
            let max_rank = dims.offsets().min(dims.p() * dims.p());
            let effective = r.min(max_rank);
            if effective < r {
                log::debug!("target rank {r} exceeds the maximum {max_rank} for {dims:?}; using {effective}");
            }
            let sel = select_beta_for_rank(&b, &mask, effective, cfg.solver)?;
            (sel.beta, Some(r), sel.attained, sel.result)
        }
    };
    let penalized_rank = result.rank;
    let (solution, singular_values, iterations, converged) = if cfg.refine && penalized_rank > 0 {
        let refined = refine_fixed_rank(&b, &mask, &result.solution, penalized_rank, cfg.solver)?;
        (
            refined.solution,
            refined.singular_values,
            result.iterations + refined.iterations,
            result.converged && refined.converged,
        )
    } else {
        (result.solution, result.singular_values, result.iterations, result.converged)
    };
    let max_sigma = singular_values.first().copied().unwrap_or_else(S::zero);
    let factors: Vec<KronFactor<S>> = extract_factors(&solution, max_sigma)?
        .into_iter()
        .map(|(_, f)| f)
        .collect();
    let diagnostics = FitDiagnostics {
        beta,
        requested_rank,
        rank_attained: attained,
        singular_values,
        iterations,
        converged,
    };
    let mut model = KronCovModel::from_parts(
        dims,
        mean,
        factors,
        DVector::zeros(dims.p()),
        S::zero(),
        Vec::new(),
        Some(diagnostics),
    )?;
    let mut u = solve_diag_u(scm, &model.lowrank(), dims)?;
    if cfg.clamp_u {
        u.apply(|x| *x = x.max(S::zero()));
    }
    model.u = u;
    Ok(model)
}

/// Fits the diagonally corrected block-Toeplitz Kronecker model to samples.
pub fn fit_dc_kronpca<S: Real>(data: &SampleSet<S>, cfg: &FitConfig<S>) -> Result<KronCovModel<S>> {
    let (mean, scm) = sample_mean_cov(data)?;
    fit_from_scm(data.dims(), mean, &scm, cfg)
}

/// The low-rank estimate `R^{-1}(P*(R̃))` without factorization.
pub fn lowrank_from_collapsed<S: Real>(rt: &ToeplitzCollapsed<S>) -> DMatrix<S> {
    crate::kron_algebra::derearrange(&toeplitz_embed(rt))
}
