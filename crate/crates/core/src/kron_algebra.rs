//! Block rearrangement, Toeplitz collapse/embed operators, diagonal masks and
//! Kronecker reconstruction for space-time covariances.
//!
//! A `pT x pT` covariance is viewed as a `T x T` grid of `p x p` blocks.
//! Block `(s, t)` (0-based) lands in row `k = s + T*t` of the rearranged
//! `T^2 x p^2` matrix, as the column-major vectorization of the block. Under
//! this convention `rearrange(A ⊗ B) = vec(A) vec(B)^T`, so a sum of `r`
//! Kronecker products rearranges to a rank-`r` matrix.
//!
//! The collapse operator sums the rows that share a block offset `j = t - s`
//! with weight `1/sqrt(T - |j|)`, producing a `(2T-1) x p^2` matrix whose row
//! `j + T - 1` belongs to offset `j`. Its adjoint (embed) copies each collapsed
//! row back to every rearranged row with that offset, with the same weight.

use nalgebra::{DMatrix, DVector};

use crate::error::{KronError, Result};
use crate::scalar::{eps_tol, Real};

/// Spatial size `p` and temporal window `T` of a multiframe process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceTimeDims {
    p: usize,
    t: usize,
}

impl SpaceTimeDims {
    pub fn new(p: usize, t: usize) -> Result<Self> {
        if p == 0 || t == 0 {
            return Err(KronError::InvalidDims(format!(
                "p and T must be at least 1 (got p={p}, T={t})"
            )));
        }
        Ok(Self { p, t })
    }

    /// Number of spatial features per frame.
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Temporal window length in frames.
    #[inline]
    pub fn t(&self) -> usize {
        self.t
    }

    /// Length of a multiframe vector, `p * T`.
    #[inline]
    pub fn pt(&self) -> usize {
        self.p * self.t
    }

    /// Number of distinct block offsets, `2T - 1`.
    #[inline]
    pub fn offsets(&self) -> usize {
        2 * self.t - 1
    }

    /// Row of the rearranged matrix holding block `(s, t)`.
    #[inline]
    pub fn rearranged_row(&self, s: usize, t: usize) -> usize {
        s + self.t * t
    }

    /// Row of the collapsed matrix for block offset `j = t - s`.
    #[inline]
    pub fn offset_row(&self, j: isize) -> usize {
        (j + self.t as isize - 1) as usize
    }

    /// Inverse of [`offset_row`](Self::offset_row).
    #[inline]
    pub fn row_offset(&self, row: usize) -> isize {
        row as isize - (self.t as isize - 1)
    }

    /// Number of blocks sharing offset `j`, i.e. `T - |j|`.
    #[inline]
    pub fn offset_multiplicity(&self, j: isize) -> usize {
        self.t - j.unsigned_abs()
    }

    fn check_square(&self, m: &DMatrix<impl Real>, what: &'static str) -> Result<()> {
        let n = self.pt();
        if m.nrows() != n || m.ncols() != n {
            return Err(KronError::Shape {
                what,
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(())
    }
}

/// A `T^2 x p^2` rearranged covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedMatrix<S: Real> {
    dims: SpaceTimeDims,
    data: DMatrix<S>,
}

impl<S: Real> RearrangedMatrix<S> {
    pub fn from_matrix(dims: SpaceTimeDims, data: DMatrix<S>) -> Result<Self> {
        let (r, c) = (dims.t() * dims.t(), dims.p() * dims.p());
        if data.shape() != (r, c) {
            return Err(KronError::Shape {
                what: "rearranged matrix",
                expected: format!("{r}x{c}"),
                found: format!("{}x{}", data.nrows(), data.ncols()),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> SpaceTimeDims {
        self.dims
    }

    pub fn data(&self) -> &DMatrix<S> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<S> {
        self.data
    }
}

/// A `(2T-1) x p^2` Toeplitz-collapsed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCollapsed<S: Real> {
    dims: SpaceTimeDims,
    data: DMatrix<S>,
}

impl<S: Real> ToeplitzCollapsed<S> {
    pub fn from_matrix(dims: SpaceTimeDims, data: DMatrix<S>) -> Result<Self> {
        let (r, c) = (dims.offsets(), dims.p() * dims.p());
        if data.shape() != (r, c) {
            return Err(KronError::Shape {
                what: "collapsed matrix",
                expected: format!("{r}x{c}"),
                found: format!("{}x{}", data.nrows(), data.ncols()),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> SpaceTimeDims {
        self.dims
    }

    pub fn data(&self) -> &DMatrix<S> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<S> {
        self.data
    }
}

/// Masks removing the global covariance diagonal from the low-rank fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagMask<S: Real> {
    pub dims: SpaceTimeDims,
    /// `T^2 x p^2` 0/1 mask over the rearranged matrix.
    pub full_mask: DMatrix<S>,
    /// `(2T-1) x p^2` 0/1 mask over the collapsed matrix.
    pub collapsed_mask: DMatrix<S>,
}

/// Rearranges a `pT x pT` block matrix into `T^2 x p^2` form.
pub fn rearrange<S: Real>(m: &DMatrix<S>, dims: SpaceTimeDims) -> Result<RearrangedMatrix<S>> {
    dims.check_square(m, "rearrange input")?;
    let (p, tt) = (dims.p(), dims.t());
    let mut out = DMatrix::zeros(tt * tt, p * p);
    for t in 0..tt {
        for s in 0..tt {
            let k = dims.rearranged_row(s, t);
            for j in 0..p {
                for i in 0..p {
                    out[(k, i + p * j)] = m[(s * p + i, t * p + j)];
                }
            }
        }
    }
    Ok(RearrangedMatrix { dims, data: out })
}

/// Inverse of [`rearrange`].
pub fn derearrange<S: Real>(r: &RearrangedMatrix<S>) -> DMatrix<S> {
    let dims = r.dims;
    let (p, tt) = (dims.p(), dims.t());
    let mut out = DMatrix::zeros(dims.pt(), dims.pt());
    for t in 0..tt {
        for s in 0..tt {
            let k = dims.rearranged_row(s, t);
            for j in 0..p {
                for i in 0..p {
                    out[(s * p + i, t * p + j)] = r.data[(k, i + p * j)];
                }
            }
        }
    }
    out
}

/// Sums rearranged rows by block offset with weight `1/sqrt(T - |j|)`.
pub fn toeplitz_collapse<S: Real>(a: &RearrangedMatrix<S>) -> ToeplitzCollapsed<S> {
    let dims = a.dims;
    let tt = dims.t();
    let mut out = DMatrix::zeros(dims.offsets(), a.data.ncols());
    for t in 0..tt {
        for s in 0..tt {
            let j = t as isize - s as isize;
            let row = dims.offset_row(j);
            let k = dims.rearranged_row(s, t);
            let mut dst = out.row_mut(row);
            dst += a.data.row(k);
        }
    }
    for row in 0..dims.offsets() {
        let m = dims.offset_multiplicity(dims.row_offset(row));
        let w = S::one() / S::count(m).sqrt();
        out.row_mut(row).scale_mut(w);
    }
    ToeplitzCollapsed { dims, data: out }
}

/// Adjoint of [`toeplitz_collapse`]; also its right inverse.
pub fn toeplitz_embed<S: Real>(c: &ToeplitzCollapsed<S>) -> RearrangedMatrix<S> {
    let dims = c.dims;
    let tt = dims.t();
    let mut out = DMatrix::zeros(tt * tt, c.data.ncols());
    for t in 0..tt {
        for s in 0..tt {
            let j = t as isize - s as isize;
            let w = S::one() / S::count(dims.offset_multiplicity(j)).sqrt();
            let k = dims.rearranged_row(s, t);
            out.row_mut(k)
                .copy_from(&(c.data.row(dims.offset_row(j)) * w));
        }
    }
    RearrangedMatrix { dims, data: out }
}

/// Builds the masks that hide the `pT` diagonal entries of the covariance.
pub fn build_diag_mask<S: Real>(dims: SpaceTimeDims) -> DiagMask<S> {
    let (p, tt) = (dims.p(), dims.t());
    let mut full = DMatrix::from_element(tt * tt, p * p, S::one());
    for s in 0..tt {
        let k = dims.rearranged_row(s, s);
        for i in 0..p {
            full[(k, i + p * i)] = S::zero();
        }
    }
    let rearranged = RearrangedMatrix {
        dims,
        data: full.clone(),
    };
    let collapsed = toeplitz_collapse(&rearranged)
        .into_inner()
        .map(|x| if x > S::zero() { S::one() } else { S::zero() });
    DiagMask {
        dims,
        full_mask: full,
        collapsed_mask: collapsed,
    }
}

/// Builds a `T x T` Toeplitz matrix from its offset coefficients.
///
/// `coeffs[j + T - 1]` is the value on offset `j = col - row`.
pub fn toeplitz_from_offsets<S: Real>(coeffs: &[S]) -> Result<DMatrix<S>> {
    if coeffs.len() % 2 == 0 {
        return Err(KronError::InvalidDims(format!(
            "Toeplitz offset vector must have odd length 2T-1, got {}",
            coeffs.len()
        )));
    }
    let tt = coeffs.len().div_ceil(2);
    Ok(DMatrix::from_fn(tt, tt, |s, t| {
        coeffs[(t as isize - s as isize + tt as isize - 1) as usize]
    }))
}

/// Reads the offset coefficients of a Toeplitz matrix, or `None` when some
/// diagonal is not constant to within a few ulps of the largest entry.
pub fn toeplitz_offsets<S: Real>(m: &DMatrix<S>) -> Option<Vec<S>> {
    if !m.is_square() || m.nrows() == 0 {
        return None;
    }
    let tt = m.nrows();
    let scale = m.amax();
    let tol = eps_tol::<S>(64.0) * scale;
    let mut coeffs = Vec::with_capacity(2 * tt - 1);
    for j in -(tt as isize - 1)..(tt as isize) {
        let (s0, t0) = if j < 0 { ((-j) as usize, 0) } else { (0, j as usize) };
        let c = m[(s0, t0)];
        let len = tt - j.unsigned_abs();
        for d in 1..len {
            if (m[(s0 + d, t0 + d)] - c).abs() > tol {
                return None;
            }
        }
        coeffs.push(c);
    }
    Some(coeffs)
}

/// Composes `Σ_i T_i ⊗ S_i + I_T ⊗ diag(u)`.
///
/// Every `T_i` must be `T x T` Toeplitz and every `S_i` must be `p x p`.
pub fn kron_compose<S: Real>(
    dims: SpaceTimeDims,
    factors: &[(DMatrix<S>, DMatrix<S>)],
    u: &DVector<S>,
) -> Result<DMatrix<S>> {
    let (p, tt) = (dims.p(), dims.t());
    if u.len() != p {
        return Err(KronError::Shape {
            what: "diagonal correction U",
            expected: p.to_string(),
            found: u.len().to_string(),
        });
    }
    let mut offsets = Vec::with_capacity(factors.len());
    for (index, (tf, sf)) in factors.iter().enumerate() {
        if tf.shape() != (tt, tt) {
            return Err(KronError::Shape {
                what: "temporal factor",
                expected: format!("{tt}x{tt}"),
                found: format!("{}x{}", tf.nrows(), tf.ncols()),
            });
        }
        if sf.shape() != (p, p) {
            return Err(KronError::Shape {
                what: "spatial factor",
                expected: format!("{p}x{p}"),
                found: format!("{}x{}", sf.nrows(), sf.ncols()),
            });
        }
        offsets.push(toeplitz_offsets(tf).ok_or(KronError::NotToeplitz { index })?);
    }
    let spatial: Vec<&DMatrix<S>> = factors.iter().map(|(_, s)| s).collect();
    Ok(compose_from_offsets(dims, &offsets, &spatial, u))
}

/// Composition from already-validated offset coefficients.
pub(crate) fn compose_from_offsets<S: Real>(
    dims: SpaceTimeDims,
    temporal: &[Vec<S>],
    spatial: &[&DMatrix<S>],
    u: &DVector<S>,
) -> DMatrix<S> {
    let (p, tt) = (dims.p(), dims.t());
    let mut out = DMatrix::zeros(dims.pt(), dims.pt());
    for row in 0..dims.offsets() {
        let j = dims.row_offset(row);
        let mut block = DMatrix::<S>::zeros(p, p);
        for (c, s) in temporal.iter().zip(spatial) {
            block += *s * c[row];
        }
        if j == 0 {
            for i in 0..p {
                block[(i, i)] += u[i];
            }
        }
        for s in 0..tt {
            let t = s as isize + j;
            if t < 0 || t >= tt as isize {
                continue;
            }
            let t = t as usize;
            out.view_mut((s * p, t * p), (p, p)).copy_from(&block);
        }
    }
    out
}

/// Largest elementwise deviation between diagonal-aligned blocks, i.e. how far
/// `m` is from block-Toeplitz.
pub fn block_toeplitz_defect<S: Real>(m: &DMatrix<S>, dims: SpaceTimeDims) -> S {
    let (p, tt) = (dims.p(), dims.t());
    let mut worst = S::zero();
    for s in 0..tt.saturating_sub(1) {
        for t in 0..tt - 1 {
            let a = m.view((s * p, t * p), (p, p));
            let b = m.view(((s + 1) * p, (t + 1) * p), (p, p));
            worst = worst.max((a - b).amax());
        }
    }
    worst
}
