//! Synthetic two-class space-time Gaussian scenarios.
//!
//! Each class covariance is `Σ_i T_i ⊗ S_i + I ⊗ diag(U)` with temporal factors
//! `T_i[s,t] = a_i^|t-s|`, `a_i = decay^(i+1)`, where the decay is class-specific.
//! Spatial factors are shared random SPD matrices. Class means differ along a
//! random spatial direction and are constant over frames.
//!
//! Tracks are stationary Gaussian sequences: the first window is drawn from
//! the window covariance, and every later frame from its conditional law given
//! the previous `T - 1` frames. Every `T`-frame window then has exactly the
//! model covariance.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`); each track uses stream
//! `track_index` of a generator seeded with the caller's seed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{KronError, Result};
use crate::estimator::{KronCovModel, KronFactor, Parity};
use crate::kron_algebra::SpaceTimeDims;
use crate::scalar::Real;
use crate::track::{ClassLabel, FeatureTrack, SpatialGrid};

/// Parameters of a synthetic two-class scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub grid: SpatialGrid,
    /// Window length of the generated process.
    pub window: usize,
    /// True separation rank.
    pub rank: usize,
    /// Distance between the class means.
    pub mean_separation: f64,
    /// AR-style temporal correlation of each class, in `[0, 1)`.
    pub decay: [f64; 2],
    /// Value of every entry of `U`.
    pub noise_floor: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn dims(&self) -> Result<SpaceTimeDims> {
        SpaceTimeDims::new(self.grid.size(), self.window)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims()?;
        let bad = |msg: String| Err(KronError::InvalidParameter(msg));
        if self.rank == 0 {
            return bad("scenario rank must be at least 1".into());
        }
        if !(self.mean_separation >= 0.0) || !self.mean_separation.is_finite() {
            return bad(format!("mean separation must be >= 0, got {}", self.mean_separation));
        }
        if !(self.noise_floor >= 0.0) || !self.noise_floor.is_finite() {
            return bad(format!("noise floor must be >= 0, got {}", self.noise_floor));
        }
        for d in self.decay {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("temporal decay must lie in [0, 1), got {d}"));
            }
        }
        Ok(())
    }
}

/// Ground-truth class models plus the jitter (if any) added to `U` to make
/// them positive definite.
#[derive(Debug, Clone)]
pub struct GroundTruth<S: Real> {
    pub models: [KronCovModel<S>; 2],
    pub jitter: [f64; 2],
}

/// SplitMix64 step, used to derive independent seeds from one base seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal<S: Real>(rng: &mut ChaCha8Rng) -> S {
    S::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Builds both class models of a scenario.
pub fn make_ground_truth<S: Real>(spec: &ScenarioSpec) -> Result<GroundTruth<S>> {
    spec.validate()?;
    let dims = spec.dims()?;
    let (p, tt) = (dims.p(), dims.t());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut spatial = Vec::with_capacity(spec.rank);
    for i in 0..spec.rank {
        let g = DMatrix::<S>::from_fn(p, p, |_, _| normal(&mut rng));
        let weight = S::lit(0.5f64.powi(i as i32));
        let mut s = &g * g.transpose() / S::count(p);
        for d in 0..p {
            s[(d, d)] += S::lit(0.1);
        }
        spatial.push(s * weight);
    }
    let mut direction = DVector::<S>::from_fn(p, |_, _| normal(&mut rng));
    let norm = direction.norm();
    if norm > S::zero() {
        direction /= norm;
    }
    let half_sep = S::lit(spec.mean_separation * 0.5);

    let mut models = Vec::with_capacity(2);
    let mut jitter = [0.0; 2];
    for class in 0..2 {
        let sign = if class == 0 { -S::one() } else { S::one() };
        let frame_mean = &direction * (sign * half_sep);
        let mean = DVector::from_fn(dims.pt(), |k, _| frame_mean[k % p]);
        let factors = spatial
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let a = spec.decay[class].powi(i as i32 + 1);
                let coeffs = (0..2 * tt - 1)
                    .map(|r| S::lit(a.powi((r as i32 - (tt as i32 - 1)).abs())))
                    .collect();
                KronFactor::new(Parity::Symmetric, coeffs, s.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut u_level = spec.noise_floor;
        let mut model = KronCovModel::new(
            dims,
            mean.clone(),
            factors.clone(),
            DVector::from_element(p, S::lit(u_level)),
        )?;
        let scale = (model.covariance().trace().as_f64() / dims.pt() as f64).max(1.0);
        let mut step = 1e-8 * scale;
        while model.covariance().cholesky().is_none() {
            u_level += step;
            jitter[class] = u_level - spec.noise_floor;
            step *= 10.0;
            if step > 1e6 * scale {
                return Err(KronError::NotPositiveDefinite(
                    "scenario covariance could not be made positive definite".into(),
                ));
            }
            model = KronCovModel::new(
                dims,
                mean.clone(),
                factors.clone(),
                DVector::from_element(p, S::lit(u_level)),
            )?;
        }
        models.push(model);
    }
    let m1 = models.pop().expect("two classes");
    let m0 = models.pop().expect("two classes");
    Ok(GroundTruth {
        models: [m0, m1],
        jitter,
    })
}

/// Precomputed sequential sampler for a stationary block-Toeplitz model.
pub struct TrackSampler<S: Real> {
    dims: SpaceTimeDims,
    mean: DVector<S>,
    window_chol: Cholesky<S, Dyn>,
    /// Regression of the newest frame on the previous `T - 1` frames.
    regression: DMatrix<S>,
    cond_chol: Option<Cholesky<S, Dyn>>,
}

impl<S: Real> TrackSampler<S> {
    pub fn new(model: &KronCovModel<S>) -> Result<Self> {
        let dims = model.dims();
        let (p, tt) = (dims.p(), dims.t());
        let sigma = model.covariance();
        let window_chol = sigma.clone().cholesky().ok_or_else(|| {
            KronError::NotPositiveDefinite("window covariance of the sampling model".into())
        })?;
        if tt == 1 {
            return Ok(Self {
                dims,
                mean: model.mean().clone(),
                window_chol,
                regression: DMatrix::zeros(p, 0),
                cond_chol: None,
            });
        }
        let q = (tt - 1) * p;
        let past = sigma.view((0, 0), (q, q)).into_owned();
        let cross = sigma.view((q, 0), (p, q)).into_owned();
        let newest = sigma.view((q, q), (p, p)).into_owned();
        let past_chol = past.cholesky().ok_or_else(|| {
            KronError::NotPositiveDefinite("leading blocks of the block-Toeplitz extension".into())
        })?;
        // cross * past^{-1}, via past^{-1} cross^T
        let regression = past_chol.solve(&cross.transpose()).transpose();
        let mut cond = newest - &regression * cross.transpose();
        crate::estimator::symmetrize_in_place(&mut cond);
        let cond_chol = cond.cholesky().ok_or_else(|| {
            KronError::NotPositiveDefinite(
                "conditional covariance of the block-Toeplitz extension".into(),
            )
        })?;
        Ok(Self {
            dims,
            mean: model.mean().clone(),
            window_chol,
            regression,
            cond_chol: Some(cond_chol),
        })
    }

    /// Draws `frames` consecutive frames.
    pub fn sample_frames(&self, frames: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<S>>> {
        let (p, tt) = (self.dims.p(), self.dims.t());
        if frames < tt {
            return Err(KronError::InvalidParameter(format!(
                "tracks need at least T={tt} frames, got {frames}"
            )));
        }
        let z = DVector::<S>::from_fn(self.dims.pt(), |_, _| normal(rng));
        let first = &self.mean + self.window_chol.l() * z;
        let mut out: Vec<DVector<S>> = (0..tt)
            .map(|f| first.rows(f * p, p).into_owned())
            .collect();
        if let Some(cond) = &self.cond_chol {
            let q = (tt - 1) * p;
            let past_mean = self.mean.rows(0, q);
            let new_mean = self.mean.rows(q, p);
            while out.len() < frames {
                let start = out.len() + 1 - tt;
                let past = DVector::from_fn(q, |k, _| out[start + k / p][k % p]);
                let z = DVector::<S>::from_fn(p, |_, _| normal(rng));
                let next = new_mean + &self.regression * (past - past_mean) + cond.l() * z;
                out.push(next);
            }
        } else {
            while out.len() < frames {
                let z = DVector::<S>::from_fn(p, |_, _| normal(rng));
                out.push(&self.mean + self.window_chol.l() * z);
            }
        }
        Ok(out)
    }
}

/// Draws `n_tracks` tracks of `frames` frames from `model`. Track `i` uses
/// ChaCha8 stream `i` of `seed`; ids are `<prefix>-<i>`.
pub fn sample_tracks<S: Real>(
    model: &KronCovModel<S>,
    grid: &SpatialGrid,
    label: Option<ClassLabel>,
    n_tracks: usize,
    frames: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<FeatureTrack<S>>> {
    if grid.size() != model.dims().p() {
        return Err(KronError::Shape {
            what: "sampling grid",
            expected: model.dims().p().to_string(),
            found: grid.size().to_string(),
        });
    }
    let sampler = TrackSampler::new(model)?;
    (0..n_tracks)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let frames = sampler.sample_frames(frames, &mut rng)?;
            FeatureTrack::new(format!("{id_prefix}-{i:05}"), label, grid.clone(), frames)
        })
        .collect()
}

/// Balanced labeled train and test sets drawn from a scenario.
#[derive(Debug, Clone)]
pub struct SyntheticSplit<S: Real> {
    pub train: Vec<FeatureTrack<S>>,
    pub test: Vec<FeatureTrack<S>>,
}

/// Draws `n_train` and `n_test` tracks split evenly between the classes
/// (class 1 receives the odd track), interleaved by class. `seed` selects the
/// sampling streams independently of the scenario's own seed.
pub fn simulate_split<S: Real>(
    truth: &GroundTruth<S>,
    grid: &SpatialGrid,
    n_train: usize,
    n_test: usize,
    frames: usize,
    seed: u64,
) -> Result<SyntheticSplit<S>> {
    let mut sets = Vec::with_capacity(2);
    for (split, (n, name)) in [(n_train, "train"), (n_test, "test")].into_iter().enumerate() {
        let counts = [n / 2, n - n / 2];
        let mut per_class = Vec::with_capacity(2);
        for (class, &count) in counts.iter().enumerate() {
            let label = ClassLabel::from_index(class);
            let stream_seed = derive_seed(seed, (split * 2 + class) as u64);
            per_class.push(sample_tracks(
                &truth.models[class],
                grid,
                label,
                count,
                frames,
                stream_seed,
                &format!("{name}-c{class}"),
            )?);
        }
        let mut merged = Vec::with_capacity(n);
        let mut iters: Vec<_> = per_class.into_iter().map(|v| v.into_iter()).collect();
        loop {
            let mut any = false;
            for it in iters.iter_mut() {
                if let Some(t) = it.next() {
                    merged.push(t);
                    any = true;
                }
            }
            if !any {
                break;
            }
        }
        sets.push(merged);
    }
    let test = sets.pop().expect("two splits");
    let train = sets.pop().expect("two splits");
    Ok(SyntheticSplit { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kron_algebra::{block_toeplitz_defect, rearrange};

    fn spec() -> ScenarioSpec {
        ScenarioSpec {
            grid: SpatialGrid::new(vec![2, 4]).unwrap(),
            window: 4,
            rank: 1,
            mean_separation: 1.0,
            decay: [0.3, 0.7],
            noise_floor: 0.2,
            seed: 7,
        }
    }

    #[test]
    fn identical_classes_without_separation() {
        let mut s = spec();
        s.mean_separation = 0.0;
        s.decay = [0.5, 0.5];
        let gt = make_ground_truth::<f64>(&s).unwrap();
        assert_eq!(gt.models[0], gt.models[1]);
    }

    #[test]
    fn zero_decay_is_white() {
        let mut s = spec();
        s.decay = [0.0, 0.0];
        s.rank = 2;
        let gt = make_ground_truth::<f64>(&s).unwrap();
        for f in gt.models[0].factors() {
            assert_eq!(f.temporal_matrix(), DMatrix::identity(4, 4));
        }
    }

    #[test]
    fn structure_of_truth() {
        let gt = make_ground_truth::<f64>(&spec()).unwrap();
        let m = &gt.models[1];
        let dims = m.dims();
        let sigma = m.covariance();
        assert_eq!(block_toeplitz_defect(&sigma, dims), 0.0);
        let mut low = sigma.clone();
        for i in 0..dims.pt() {
            low[(i, i)] -= m.u()[i % dims.p()];
        }
        let sv = crate::estimator::singular_values(rearrange(&low, dims).unwrap().data()).unwrap();
        assert!(sv[1] < 1e-12 * sv[0], "{sv:?}");
        assert!(sigma.cholesky().is_some());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec();
        s.decay = [1.0, 0.2];
        assert!(make_ground_truth::<f64>(&s).is_err());
        let mut s = spec();
        s.rank = 0;
        assert!(make_ground_truth::<f64>(&s).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let gt = make_ground_truth::<f64>(&spec()).unwrap();
        let g = spec().grid;
        let a = sample_tracks(&gt.models[0], &g, None, 3, 9, 11, "t").unwrap();
        let b = sample_tracks(&gt.models[0], &g, None, 3, 9, 11, "t").unwrap();
        let c = sample_tracks(&gt.models[0], &g, None, 3, 9, 12, "t").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a[0].frames, a[1].frames);
        assert!(sample_tracks(&gt.models[0], &g, None, 1, 3, 11, "t").is_err());
    }

    #[test]
    fn split_is_balanced() {
        let gt = make_ground_truth::<f64>(&spec()).unwrap();
        let split = simulate_split(&gt, &spec().grid, 5, 4, 6, 3).unwrap();
        assert_eq!(split.train.len(), 5);
        assert_eq!(split.test.len(), 4);
        let ones = split.train.iter().filter(|t| t.label == Some(ClassLabel::One)).count();
        assert_eq!(ones, 3);
        let ids: std::collections::HashSet<_> =
            split.train.iter().chain(&split.test).map(|t| t.track_id.clone()).collect();
        assert_eq!(ids.len(), 9);
    }
}
