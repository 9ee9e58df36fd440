//! Empirical stable tail dependence function and the radius estimator.

use serde::Serialize;

use crate::error::{DmqError, Result};
use crate::evt::{fit_tails, TailFit};
use crate::sample::Sample;

/// Rotated sample plus the tail fit whose normalization defines the
/// exceedance thresholds.
#[derive(Debug, Clone)]
pub struct StdfContext<'a> {
    sample: &'a Sample,
    fit: TailFit,
}

/// One evaluation of the radius function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub count: usize,
    pub floored: bool,
}

impl<'a> StdfContext<'a> {
    pub fn new(sample: &'a Sample, fit: TailFit) -> Result<Self> {
        if fit.n != sample.nrows() {
            return Err(DmqError::InvalidArgument(format!(
                "tail fit built on {} rows but sample has {}",
                fit.n,
                sample.nrows()
            )));
        }
        if fit.dim() != sample.dim() {
            return Err(DmqError::DimensionMismatch {
                expected: sample.dim(),
                got: fit.dim(),
            });
        }
        Ok(Self { sample, fit })
    }

    /// Context whose thresholds come from a separate fit at `k_rho`.
    pub fn with_k(sample: &'a Sample, k_rho: usize) -> Result<Self> {
        let fit = fit_tails(sample, k_rho)?;
        Self::new(sample, fit)
    }

    pub fn fit(&self) -> &TailFit {
        &self.fit
    }

    pub fn sample(&self) -> &Sample {
        self.sample
    }

    /// Rows with at least one coordinate above `a_j x_j + b_j`.
    pub fn exceedance_count(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.sample.dim() {
            return Err(DmqError::DimensionMismatch {
                expected: self.sample.dim(),
                got: x.len(),
            });
        }
        let thresholds: Vec<f64> = x
            .iter()
            .zip(self.fit.a_j.iter().zip(&self.fit.b_j))
            .map(|(x, (a, b))| a * x + b)
            .collect();
        Ok(self
            .sample
            .rows()
            .filter(|r| r.iter().zip(&thresholds).any(|(v, t)| v > t))
            .count())
    }

    /// `-ln G_hat(x)`: the exceedance count divided by `k`.
    pub fn empirical_neg_log_g(&self, x: &[f64]) -> Result<f64> {
        Ok(self.exceedance_count(x)? as f64 / self.fit.k as f64)
    }

    /// Radius estimate at an interior angle. Requires `theta_j > 0`.
    pub fn rho_hat(&self, theta: &[f64]) -> Result<RhoEstimate> {
        if let Some(j) = theta.iter().position(|&t| !(t > 0.0)) {
            return Err(DmqError::InvalidArgument(format!(
                "theta component {j} = {} is not in the interior",
                theta[j]
            )));
        }
        self.rho_hat_closed(theta)
    }

    /// Like [`rho_hat`](Self::rho_hat) but also accepts zero components,
    /// which place the corresponding threshold at `b_j - a_j / gamma_j`.
    pub fn rho_hat_closed(&self, theta: &[f64]) -> Result<RhoEstimate> {
        self.fit.require_heavy_tails()?;
        if theta.len() != self.sample.dim() {
            return Err(DmqError::DimensionMismatch {
                expected: self.sample.dim(),
                got: theta.len(),
            });
        }
        let x: Vec<f64> = theta
            .iter()
            .zip(&self.fit.gamma_j)
            .map(|(t, g)| (t.powf(*g) - 1.0) / g)
            .collect();
        let count = self.exceedance_count(&x)?;
        let k = self.fit.k as f64;
        Ok(if count == 0 {
            RhoEstimate {
                value: 1.0 / k,
                count,
                floored: true,
            }
        } else {
            RhoEstimate {
                value: count as f64 / k,
                count,
                floored: false,
            }
        })
    }
}
