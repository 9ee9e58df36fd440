//! Marginal order statistics and the moment tail-index estimator.
//!
//! All functions take one marginal sorted in ascending order. With `n`
//! values, `X_{n-k:n}` is `sorted[n - k - 1]` and the top `k` values are
//! `sorted[n - k..]`.

use serde::Serialize;

use crate::error::{DmqError, Result};
use crate::sample::Sample;

/// Per-marginal ascending order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalOrderStats {
    sorted: Vec<Vec<f64>>,
    n: usize,
}

impl MarginalOrderStats {
    pub fn from_sample(sample: &Sample) -> Self {
        let sorted = (0..sample.dim())
            .map(|j| {
                let mut col = sample.column(j);
                col.sort_by(f64::total_cmp);
                col
            })
            .collect();
        Self {
            sorted,
            n: sample.nrows(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.sorted.len()
    }

    pub fn marginal(&self, j: usize) -> &[f64] {
        &self.sorted[j]
    }
}

/// First and second log-moments of the top `k` spacings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMoments {
    pub m1: f64,
    pub m2: f64,
    pub threshold: f64,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 1 || k + 1 > n {
        return Err(DmqError::InvalidArgument(format!(
            "k = {k} outside [1, n - 1] for n = {n}"
        )));
    }
    Ok(())
}

/// Computes both log-moments in one pass over the top `k` values.
pub fn log_moments(sorted: &[f64], k: usize) -> Result<LogMoments> {
    let n = sorted.len();
    check_k(n, k)?;
    let threshold = sorted[n - k - 1];
    if !(threshold > 0.0) {
        return Err(DmqError::NonPositiveThreshold {
            marginal: 0,
            threshold,
        });
    }
    let ln_t = threshold.ln();
    let (s1, s2) = sorted[n - k..].iter().fold((0.0, 0.0), |(s1, s2), &x| {
        let l = x.ln() - ln_t;
        (s1 + l, s2 + l * l)
    });
    Ok(LogMoments {
        m1: s1 / k as f64,
        m2: s2 / k as f64,
        threshold,
    })
}

/// `M^(r)_k = (1/k) sum_{i<k} (ln X_{n-i:n} - ln X_{n-k:n})^r` for `r` in {1, 2}.
pub fn log_moment(sorted: &[f64], k: usize, r: u32) -> Result<f64> {
    let m = log_moments(sorted, k)?;
    match r {
        1 => Ok(m.m1),
        2 => Ok(m.m2),
        _ => Err(DmqError::InvalidArgument(format!(
            "log-moment order must be 1 or 2, got {r}"
        ))),
    }
}

fn gamma_from_moments(m: &LogMoments) -> Result<f64> {
    if m.m2 == 0.0 {
        return Err(DmqError::DegenerateMoments {
            marginal: 0,
            reason: "second log-moment is zero".into(),
        });
    }
    let ratio = m.m1 * m.m1 / m.m2;
    let denom = 1.0 - ratio;
    if denom.abs() <= 1e-12 {
        return Err(DmqError::DegenerateMoments {
            marginal: 0,
            reason: format!("(M1)^2 / M2 = {ratio} is one"),
        });
    }
    Ok(m.m1 + 1.0 - 0.5 / denom)
}

/// Moment estimator `M1 + 1 - 1/2 (1 - M1^2/M2)^-1`.
pub fn gamma_moment(sorted: &[f64], k: usize) -> Result<f64> {
    gamma_from_moments(&log_moments(sorted, k)?)
}

/// Arithmetic mean of the marginal tail indexes.
pub fn joint_gamma(gammas: &[f64]) -> Result<f64> {
    if gammas.is_empty() {
        return Err(DmqError::InvalidArgument("no marginal tail indexes".into()));
    }
    if gammas.iter().any(|g| !g.is_finite()) {
        return Err(DmqError::InvalidArgument("non-finite tail index".into()));
    }
    Ok(gammas.iter().sum::<f64>() / gammas.len() as f64)
}

fn scale_from_moments(m: &LogMoments, gamma: f64) -> Result<(f64, f64)> {
    if !(m.m1 > 0.0) {
        return Err(DmqError::DegenerateMoments {
            marginal: 0,
            reason: "first log-moment is zero; scale undefined".into(),
        });
    }
    let a = m.threshold * m.m1 * f64::max(1.0, 1.0 - gamma);
    Ok((a, m.threshold))
}

/// Normalization pair `(a, b)` with `b = X_{n-k:n}` and
/// `a = b * M1 * max(1, 1 - gamma)`.
pub fn norm_sequences(sorted: &[f64], k: usize, gamma: f64) -> Result<(f64, f64)> {
    scale_from_moments(&log_moments(sorted, k)?, gamma)
}

/// Marginal and joint tail fit at a fixed `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub k: usize,
    #[serde(rename = "gamma_marginal")]
    pub gamma_j: Vec<f64>,
    pub gamma: f64,
    #[serde(rename = "a")]
    pub a_j: Vec<f64>,
    #[serde(rename = "b")]
    pub b_j: Vec<f64>,
    pub n: usize,
}

impl TailFit {
    pub fn dim(&self) -> usize {
        self.gamma_j.len()
    }

    /// `max - min` of the marginal indexes exceeds half their mean.
    ///
    /// A cheap stand-in for a formal test of equal marginal tail indexes.
    pub fn gamma_disparity(&self) -> bool {
        let max = self.gamma_j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.gamma_j.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min > 0.5 * self.gamma.abs()
    }

    /// Rejects fits that cannot be used for heavy-tail extrapolation.
    pub fn require_heavy_tails(&self) -> Result<()> {
        match self.gamma_j.iter().position(|&g| !(g > 0.0)) {
            Some(j) => Err(DmqError::NonPositiveGamma {
                marginal: j,
                gamma: self.gamma_j[j],
            }),
            None => Ok(()),
        }
    }
}

/// Fits every marginal of an already rotated sample at `k`.
pub fn fit_tails(rotated: &Sample, k: usize) -> Result<TailFit> {
    fit_order_stats(&MarginalOrderStats::from_sample(rotated), k)
}

pub fn fit_order_stats(stats: &MarginalOrderStats, k: usize) -> Result<TailFit> {
    let n = stats.n();
    if k < 2 || k + 1 > n {
        return Err(DmqError::InvalidArgument(format!(
            "k = {k} outside [2, n - 1] for n = {n}"
        )));
    }
    let d = stats.dim();
    let mut gamma_j = Vec::with_capacity(d);
    let mut a_j = Vec::with_capacity(d);
    let mut b_j = Vec::with_capacity(d);
    for j in 0..d {
        let fit = log_moments(stats.marginal(j), k)
            .and_then(|m| {
                let g = gamma_from_moments(&m)?;
                let (a, b) = scale_from_moments(&m, g)?;
                Ok((g, a, b))
            })
            .map_err(|e| e.on_marginal(j))?;
        gamma_j.push(fit.0);
        a_j.push(fit.1);
        b_j.push(fit.2);
    }
    let gamma = joint_gamma(&gamma_j)?;
    let fit = TailFit {
        k,
        gamma_j,
        gamma,
        a_j,
        b_j,
        n,
    };
    if fit.gamma_disparity() {
        log::warn!(
            "marginal tail indexes {:?} differ by more than half their mean {}",
            fit.gamma_j,
            fit.gamma
        );
    }
    Ok(fit)
}
