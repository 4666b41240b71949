//! Sliced Wasserstein regression for multivariate distributional responses.
//!
//! The crate slices multivariate distributions into families of 1-D
//! distributions (Radon transform for grids, projections for point clouds),
//! measures them with slice-averaged Wasserstein distances, and fits global
//! and local Fréchet regression models either directly in the distribution
//! space (SAW, by particle gradient descent) or slice-by-slice followed by a
//! regularized filtered back-projection (SWW). A Monte Carlo harness
//! reproduces the simulation benchmarks at desk scale.

pub mod dataset;
pub mod density;
pub mod domain;
pub mod error;
pub mod frechet;
pub mod inversion;
pub mod metrics;
pub mod regressors;
pub mod seeds;
pub mod simulation;
pub mod slicing;
pub mod transform;

pub use domain::{AngleGrid, DensityGrid, Domain, PointCloud, RegressionDataset, Responses};
pub use error::{Error, Result};
