//! Space-time covariance estimation with diagonally corrected, block-Toeplitz
//! Kronecker PCA, Ledoit-Wolf shrinkage, and Gaussian log-likelihood-ratio
//! classifiers built on the fitted models.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below name the `f64` instantiations used by the command line tool.

pub mod classifier;
pub mod error;
pub mod estimator;
pub mod io_formats;
pub mod kron_algebra;
pub mod scalar;
pub mod shrinkage;
pub mod synth;
pub mod track;

pub use error::{KronError, Result};
pub use kron_algebra::SpaceTimeDims;
pub use scalar::Real;
pub use track::{ClassLabel, FeatureTrack, SpatialGrid};

pub type KronCovModel64 = estimator::KronCovModel<f64>;
pub type KronCovModel32 = estimator::KronCovModel<f32>;
pub type SampleSet64 = estimator::SampleSet<f64>;
pub type FeatureTrack64 = track::FeatureTrack<f64>;
