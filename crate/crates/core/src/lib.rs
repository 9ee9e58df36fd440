//! Out-sample estimation of extreme directional multivariate quantiles.
//!
//! The pipeline rotates a sample so that the analysis direction becomes the
//! diagonal, fits marginal heavy tails with the moment estimator, estimates
//! the joint tail dependence by exceedance counting and extrapolates
//! quantile points along a grid of angles before rotating back. A
//! multivariate t model supplies simulated data and closed-form targets.

// `!(x > 0.0)` deliberately also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod error;
pub mod evt;
pub mod geometry;
mod quadrature;
pub mod quantile;
pub mod sample;
pub mod stdf;
pub mod tmodel;

pub use bootstrap::{select_k, BootstrapConfig, KSelection};
pub use error::{DmqError, Result};
pub use evt::{fit_tails, TailFit};
pub use geometry::{rotation_for, Direction, RotationMatrix};
pub use quantile::{
    estimate_surface, flag_outliers, theta_grid, EstimateOptions, KChoice, QuantileSurface,
    SurfaceEstimator, SurfacePoint, ThetaGrid,
};
pub use sample::Sample;
pub use stdf::StdfContext;
pub use tmodel::TParams;
