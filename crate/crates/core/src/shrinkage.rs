//! Ledoit-Wolf shrinkage toward a scaled identity.
//!
//! The weight is computed from the sample covariance statistics and then
//! applied to the structured estimate, with the target scaled by the trace of
//! that estimate: `(1 - rho) Σ + rho (tr Σ / pT) I`.

use nalgebra::DMatrix;

use crate::error::{KronError, Result};
use crate::estimator::{sample_mean_cov, KronCovModel, SampleSet};
use crate::scalar::Real;

/// A shrunk covariance matrix.
#[derive(Debug, Clone)]
pub struct ShrinkageResult<S: Real> {
    pub rho: S,
    /// `trace / pT` of the matrix before shrinkage.
    pub target_scale: S,
    pub sigma: DMatrix<S>,
}

/// Ledoit-Wolf weight from demeaned samples.
///
/// With `S` the sample covariance, `m = tr(S)/d`, `d² = ‖S − mI‖²/d` and
/// `b̄² = Σ_i ‖x_i x_iᵀ − S‖² / (n² d)`, the weight is `min(b̄², d²)/d²`,
/// or 1 when `d² = 0`.
pub fn ledoit_wolf_rho<S: Real>(data: &SampleSet<S>) -> Result<S> {
    let (mean, scm) = sample_mean_cov(data)?;
    let d = data.dims().pt();
    let dn = S::count(d);
    let m = scm.trace() / dn;
    let mut dev = scm.clone();
    for i in 0..d {
        dev[(i, i)] -= m;
    }
    let d2 = dev.norm_squared() / dn;
    if !(d2 > S::zero()) {
        return Ok(S::one());
    }
    let scm_sq = scm.norm_squared();
    let mut b_sum = S::zero();
    for x in data.samples() {
        let c = x - &mean;
        let len2 = c.norm_squared();
        let quad = c.dot(&(&scm * &c));
        // ‖c cᵀ − S‖² = ‖c‖⁴ − 2 cᵀ S c + ‖S‖²
        b_sum += (len2 * len2 - S::lit(2.0) * quad + scm_sq).max(S::zero());
    }
    let n = S::count(data.n());
    let b2_bar = b_sum / (n * n * dn);
    let rho = b2_bar.min(d2) / d2;
    Ok(rho.max(S::zero()).min(S::one()))
}

fn check_rho<S: Real>(rho: S) -> Result<()> {
    if !(rho >= S::zero() && rho <= S::one()) {
        return Err(KronError::InvalidParameter(format!(
            "shrinkage weight must lie in [0, 1], got {rho}"
        )));
    }
    Ok(())
}

/// Shrinks a plain covariance matrix toward `(tr Σ / n) I`.
pub fn shrink_matrix<S: Real>(sigma: &DMatrix<S>, rho: S) -> Result<ShrinkageResult<S>> {
    check_rho(rho)?;
    let n = sigma.nrows();
    let m = sigma.trace() / S::count(n);
    let mut out = sigma * (S::one() - rho);
    for i in 0..n {
        out[(i, i)] += rho * m;
    }
    Ok(ShrinkageResult {
        rho,
        target_scale: m,
        sigma: out,
    })
}

/// Shrinks a fitted model. The result keeps its factored form: spatial
/// factors and floor corrections scale by `1 - rho` and `U` moves toward `m`.
pub fn shrink<S: Real>(model: &KronCovModel<S>, rho: S) -> Result<KronCovModel<S>> {
    check_rho(rho)?;
    let dims = model.dims();
    let m = model.covariance().trace() / S::count(dims.pt());
    Ok(model.shrunk(rho, m))
}
