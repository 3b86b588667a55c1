//! Wasserstein distances between Gaussian measures: closed forms,
//! Fréchet expansions of the distance functional, central limit theorems for
//! the empirical estimators, and the inference procedures built on them.

pub mod error;
pub mod frechet;
pub mod gw;
pub mod inference;
pub mod limitlaw;
pub mod precise;
pub mod rng;
pub mod stats;
pub mod symmat;

pub use error::{Error, Result};
pub use frechet::{d2_gw, d_gw, d_gw_one_sample, taylor_orders, GwExpansion, PerturbationPair, ScalarFunction};
pub use gw::{empirical_gaussian, gw2, gw_hat, gw_hat2, w2_empirical_1d, GaussianMeasure, SampleSet};
pub use precise::gw2_extended;
pub use symmat::{EigenDecomposition, Matrix, SpdMatrix, SymMatrix, Vector};
