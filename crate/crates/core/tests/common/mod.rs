#![allow(dead_code)]

use kroncov::estimator::{KronCovModel, KronFactor, Parity, SampleSet};
use kroncov::synth::TrackSampler;
use kroncov::SpaceTimeDims;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random SPD `p x p` matrix.
pub fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian_matrix(p, p, rng);
    &g * g.transpose() / p as f64 + DMatrix::identity(p, p) * 0.2
}

/// Kronecker product computed entry by entry.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = b.shape();
    DMatrix::from_fn(a.nrows() * p, a.ncols() * q, |i, j| a[(i / p, j / q)] * b[(i % p, j % q)])
}

/// `T₁ ⊗ S₁ + I ⊗ diag(u)` with `T₁[s,t] = a^|s-t|`.
pub fn rank_one_truth(p: usize, t: usize, a: f64, seed: u64) -> KronCovModel<f64> {
    let mut r = rng(seed);
    let dims = SpaceTimeDims::new(p, t).unwrap();
    let offsets: Vec<f64> = (0..2 * t - 1).map(|k| a.powi((k as i32 - t as i32 + 1).abs())).collect();
    let s = random_spd(p, &mut r);
    let u = DVector::from_fn(p, |_, _| 0.2 + 0.3 * r.random::<f64>());
    let f = KronFactor::new(Parity::Symmetric, offsets, s).unwrap();
    KronCovModel::new(dims, DVector::zeros(p * t), vec![f], u).unwrap()
}

/// `n` independent draws of `N(mean, Σ_model)`.
pub fn draw_samples(model: &KronCovModel<f64>, n: usize, seed: u64) -> SampleSet<f64> {
    let dims = model.dims();
    let sampler = TrackSampler::new(model).unwrap();
    let mut r = rng(seed);
    let samples = (0..n)
        .map(|_| {
            let frames = sampler.sample_frames(dims.t(), &mut r).unwrap();
            DVector::from_fn(dims.pt(), |k, _| frames[k / dims.p()][k % dims.p()])
        })
        .collect();
    SampleSet::new(dims, samples).unwrap()
}

pub fn rel_err(a: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (a - truth).norm() / truth.norm()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
