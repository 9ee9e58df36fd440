//! Angle grids, out-sample quantile points and surface assembly.
//!
//! In rotated coordinates the quantile point at angle `theta` and level
//! `alpha` is
//!
//! ```text
//! x_j = a_j ((k rho(theta) theta_j / (n alpha))^g_j - 1) / g_j + b_j
//! ```
//!
//! and the surface in original coordinates is obtained with `R_u'`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{select_k, BootstrapConfig, KSelection};
use crate::error::{DmqError, Result};
use crate::evt::{fit_tails, TailFit};
use crate::geometry::{rotation_for, Direction, RotationMatrix};
use crate::sample::Sample;
use crate::stdf::{RhoEstimate, StdfContext};

pub const DEFAULT_GRID_M: usize = 64;
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_MIN_ROWS: usize = 50;

/// Unit vectors with positive components, from `d - 1` spherical angles in
/// `[delta, pi/2 - delta]`, `m` equally spaced values per angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    angles: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    m: usize,
    delta: f64,
}

impl ThetaGrid {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Spherical angles of each point, same order as [`points`](Self::points).
    pub fn angles(&self) -> &[Vec<f64>] {
        &self.angles
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Maps `d - 1` angles to a unit vector:
/// `theta_1 = cos p_1, theta_2 = sin p_1 cos p_2, ..., theta_d = prod sin p_i`.
pub fn spherical_to_unit(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len() + 1);
    let mut sin_prod = 1.0;
    for &a in angles {
        out.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    out.push(sin_prod);
    out
}

pub fn theta_grid(d: usize, m: usize, delta: f64) -> Result<ThetaGrid> {
    if d < 2 {
        return Err(DmqError::InvalidArgument(format!("grid dimension {d} < 2")));
    }
    if m < 2 {
        return Err(DmqError::InvalidArgument(format!("grid resolution {m} < 2")));
    }
    if !(delta > 0.0 && delta < std::f64::consts::FRAC_PI_4) {
        return Err(DmqError::InvalidArgument(format!(
            "grid margin {delta} outside (0, pi/4)"
        )));
    }
    let step = (FRAC_PI_2 - 2.0 * delta) / (m - 1) as f64;
    let axis: Vec<f64> = (0..m).map(|i| delta + i as f64 * step).collect();
    let total = m.pow((d - 1) as u32);
    let mut angles = Vec::with_capacity(total);
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        // First angle varies slowest.
        let mut rem = flat;
        let mut idx = vec![0usize; d - 1];
        for slot in idx.iter_mut().rev() {
            *slot = rem % m;
            rem /= m;
        }
        let a: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
        points.push(spherical_to_unit(&a));
        angles.push(a);
    }
    Ok(ThetaGrid {
        angles,
        points,
        m,
        delta,
    })
}

/// One estimated point of the surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub theta: Vec<f64>,
    pub x_rotated: Vec<f64>,
    pub x_original: Vec<f64>,
    pub rho: f64,
    pub floored: bool,
}

/// Estimated quantile surface at level `alpha` in direction `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSurface {
    pub alpha: f64,
    pub direction: Direction,
    pub k: usize,
    pub points: Vec<SurfacePoint>,
    pub fit: TailFit,
    /// Offset subtracted before estimation and re-added to `x_original`.
    pub center: Option<Vec<f64>>,
    pub selection: Option<KSelection>,
    pub warnings: Vec<String>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DmqError::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Extrapolated point in rotated coordinates.
pub fn quantile_point(fit: &TailFit, rho: f64, theta: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    fit.require_heavy_tails()?;
    if theta.len() != fit.dim() {
        return Err(DmqError::DimensionMismatch {
            expected: fit.dim(),
            got: theta.len(),
        });
    }
    if !(rho > 0.0) {
        return Err(DmqError::InvalidArgument(format!("rho = {rho} must be positive")));
    }
    let scale = fit.k as f64 * rho / (fit.n as f64 * alpha);
    theta
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let base = scale * t;
            if !(base > 0.0) || !base.is_finite() {
                return Err(DmqError::InvalidArgument(format!(
                    "extrapolation base {base} for component {j} must be positive"
                )));
            }
            let g = fit.gamma_j[j];
            Ok(fit.a_j[j] * (base.powf(g) - 1.0) / g + fit.b_j[j])
        })
        .collect()
}

/// How `k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KChoice {
    Fixed(usize),
    Auto(BootstrapConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub k: KChoice,
    /// Separate sample fraction for the radius estimator; `None` uses `k`.
    pub k_rho: Option<usize>,
    pub min_rows: usize,
    /// Subtract the componentwise median before estimation.
    pub center: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            k: KChoice::Auto(BootstrapConfig::default()),
            k_rho: None,
            min_rows: DEFAULT_MIN_ROWS,
            center: false,
        }
    }
}

/// Outcome of inverting the estimator at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailLevel {
    pub alpha_z: f64,
    /// `None` when the point is below every marginal threshold region.
    pub theta: Option<Vec<f64>>,
    pub extremal: bool,
    pub floored: bool,
}

/// Per-row outlier decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierFlag {
    pub alpha_z: f64,
    pub flagged: bool,
}

/// Rotated sample with its fit, ready to evaluate points and levels.
#[derive(Debug, Clone)]
pub struct SurfaceEstimator {
    rotation: RotationMatrix,
    rotated: Sample,
    fit: TailFit,
    rho_fit: TailFit,
    center: Option<Vec<f64>>,
    selection: Option<KSelection>,
    warnings: Vec<String>,
}

impl SurfaceEstimator {
    pub fn new(sample: &Sample, u: &Direction, options: &EstimateOptions) -> Result<Self> {
        if sample.dim() != u.dim() {
            return Err(DmqError::DimensionMismatch {
                expected: sample.dim(),
                got: u.dim(),
            });
        }
        if sample.nrows() < options.min_rows {
            return Err(DmqError::InvalidArgument(format!(
                "sample has {} rows; at least {} required",
                sample.nrows(),
                options.min_rows
            )));
        }
        let rotation = rotation_for(u)?;
        let (centered, center) = if options.center {
            let med = sample.componentwise_median();
            (sample.shifted(&med)?, Some(med))
        } else {
            (sample.clone(), None)
        };
        let rotated = rotation.rotate_sample(&centered)?;
        check_upper_thresholds(&rotated, sample)?;

        let mut warnings = Vec::new();
        let (k, selection) = match options.k {
            KChoice::Fixed(k) => (k, None),
            KChoice::Auto(cfg) => {
                let sel = select_k(&rotated, &cfg)?;
                warnings.extend(sel.warnings.iter().cloned());
                (sel.k_hat, Some(sel))
            }
        };
        let fit = fit_tails(&rotated, k)?;
        if fit.gamma_disparity() {
            warnings.push(format!(
                "marginal tail indexes {:?} differ by more than half their mean {}",
                fit.gamma_j, fit.gamma
            ));
        }
        fit.require_heavy_tails()?;
        let rho_fit = match options.k_rho {
            Some(kr) if kr != k => {
                let f = fit_tails(&rotated, kr)?;
                f.require_heavy_tails()?;
                f
            }
            _ => fit.clone(),
        };
        Ok(Self {
            rotation,
            rotated,
            fit,
            rho_fit,
            center,
            selection,
            warnings,
        })
    }

    pub fn fit(&self) -> &TailFit {
        &self.fit
    }

    pub fn rotation(&self) -> &RotationMatrix {
        &self.rotation
    }

    pub fn rotated_sample(&self) -> &Sample {
        &self.rotated
    }

    pub fn selection(&self) -> Option<&KSelection> {
        self.selection.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn center(&self) -> Option<&[f64]> {
        self.center.as_deref()
    }

    fn context(&self) -> StdfContext<'_> {
        StdfContext::new(&self.rotated, self.rho_fit.clone())
            .expect("fit was built on the rotated sample")
    }

    pub fn rho_hat(&self, theta: &[f64]) -> Result<RhoEstimate> {
        self.context().rho_hat(theta)
    }

    fn uncenter(&self, mut x: Vec<f64>) -> Vec<f64> {
        if let Some(c) = &self.center {
            x.iter_mut().zip(c).for_each(|(v, o)| *v += o);
        }
        x
    }

    fn center_point(&self, z: &[f64]) -> Vec<f64> {
        match &self.center {
            Some(c) => z.iter().zip(c).map(|(v, o)| v - o).collect(),
            None => z.to_vec(),
        }
    }

    pub fn point(&self, theta: &[f64], alpha: f64) -> Result<SurfacePoint> {
        let rho = self.rho_hat(theta)?;
        let x_rotated = quantile_point(&self.fit, rho.value, theta, alpha)?;
        let x_original = self.uncenter(self.rotation.apply_transpose(&x_rotated)?);
        Ok(SurfacePoint {
            theta: theta.to_vec(),
            x_rotated,
            x_original,
            rho: rho.value,
            floored: rho.floored,
        })
    }

    pub fn surface(&self, grid: &ThetaGrid, alpha: f64) -> Result<QuantileSurface> {
        check_alpha(alpha)?;
        let points: Vec<SurfacePoint> = grid
            .points()
            .par_iter()
            .map(|theta| self.point(theta, alpha))
            .collect::<Result<_>>()?;
        let mut warnings = self.warnings.clone();
        let floored = points.iter().filter(|p| p.floored).count();
        if floored > 0 {
            warnings.push(format!(
                "{floored} of {} radius estimates had no exceedances and were floored at 1/k",
                points.len()
            ));
        }
        Ok(QuantileSurface {
            alpha,
            direction: self.rotation.direction().clone(),
            k: self.fit.k,
            points,
            fit: self.fit.clone(),
            center: self.center.clone(),
            selection: self.selection.clone(),
            warnings,
        })
    }

    /// Estimated exceedance level of `z` (original coordinates).
    pub fn tail_level(&self, z: &[f64]) -> Result<TailLevel> {
        let zc = self.center_point(z);
        let zr = self.rotation.apply(&zc)?;
        let fit = &self.fit;
        let w: Vec<f64> = zr
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let g = fit.gamma_j[j];
                let arg = 1.0 + g * (v - fit.b_j[j]) / fit.a_j[j];
                arg.max(0.0).powf(1.0 / g)
            })
            .collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Ok(TailLevel {
                alpha_z: 1.0,
                theta: None,
                extremal: false,
                floored: false,
            });
        }
        let theta: Vec<f64> = w.iter().map(|v| v / norm).collect();
        let rho = self.context().rho_hat_closed(&theta)?;
        // Near the threshold boundary the extrapolation exceeds one; a level
        // is a probability, so it is capped.
        let alpha_z = (fit.k as f64 / fit.n as f64 * rho.value / norm).min(1.0);
        Ok(TailLevel {
            alpha_z,
            theta: Some(theta),
            extremal: true,
            floored: rho.floored,
        })
    }

    pub fn flag(&self, sample: &Sample, alpha: f64) -> Result<Vec<OutlierFlag>> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(DmqError::InvalidArgument(format!("alpha = {alpha} outside (0, 1]")));
        }
        let rows: Vec<&[f64]> = sample.rows().collect();
        rows.par_iter()
            .map(|z| {
                let level = self.tail_level(z)?;
                Ok(OutlierFlag {
                    alpha_z: level.alpha_z,
                    flagged: level.extremal && level.alpha_z < alpha,
                })
            })
            .collect()
    }
}

fn check_upper_thresholds(rotated: &Sample, original: &Sample) -> Result<()> {
    // The largest rotated value must be positive for any threshold to be.
    let bad: Vec<usize> = (0..rotated.dim())
        .filter(|&j| rotated.rows().all(|r| r[j] <= 0.0))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(DmqError::NeedsCentering {
            marginals: bad,
            suggested_center: original.componentwise_median(),
        })
    }
}

/// Full pipeline: rotate, choose `k`, fit tails, evaluate the grid and
/// rotate back.
pub fn estimate_surface(
    sample: &Sample,
    u: &Direction,
    alpha: f64,
    grid: &ThetaGrid,
    options: &EstimateOptions,
) -> Result<QuantileSurface> {
    check_alpha(alpha)?;
    SurfaceEstimator::new(sample, u, options)
        .map_err(|e| recenter_hint(e, sample))?
        .surface(grid, alpha)
}

fn recenter_hint(err: DmqError, sample: &Sample) -> DmqError {
    match err {
        DmqError::NonPositiveThreshold { marginal, .. } => DmqError::NeedsCentering {
            marginals: vec![marginal],
            suggested_center: sample.componentwise_median(),
        },
        other => other,
    }
}

/// Tail level of a single point.
pub fn tail_level(
    sample: &Sample,
    u: &Direction,
    z: &[f64],
    options: &EstimateOptions,
) -> Result<TailLevel> {
    SurfaceEstimator::new(sample, u, options)?.tail_level(z)
}

/// Flags every row with estimated level below `alpha`.
pub fn flag_outliers(
    sample: &Sample,
    u: &Direction,
    alpha: f64,
    options: &EstimateOptions,
) -> Result<Vec<OutlierFlag>> {
    SurfaceEstimator::new(sample, u, options)
        .map_err(|e| recenter_hint(e, sample))?
        .flag(sample, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tmodel::{sample_t, TParams};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn fixed(k: usize) -> EstimateOptions {
        EstimateOptions {
            k: KChoice::Fixed(k),
            ..EstimateOptions::default()
        }
    }

    fn t_sample(n: usize, seed: u64) -> Sample {
        let p = TParams::from_slices(&[0.0, 0.0], &[5.0, 0.1, 0.1, 1.0], 3.0).unwrap();
        sample_t(&p, n, seed).unwrap()
    }

    #[test]
    fn grid_polar_map_limits() {
        let g = theta_grid(2, 3, 1e-12).unwrap();
        let expect = [[1.0, 0.0], [FRAC_1_SQRT_2, FRAC_1_SQRT_2], [0.0, 1.0]];
        for (p, e) in g.points().iter().zip(expect) {
            assert!((p[0] - e[0]).abs() < 1e-11 && (p[1] - e[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn grid_counts_and_norms() {
        let g = theta_grid(3, 2, 0.01).unwrap();
        assert_eq!(g.len(), 4);
        let g = theta_grid(4, 5, 0.05).unwrap();
        assert_eq!(g.len(), 125);
        for p in g.points() {
            let n: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
        assert!(theta_grid(2, 1, 0.01).is_err());
        assert!(theta_grid(2, 4, 0.0).is_err());
        assert!(theta_grid(2, 4, 1.0).is_err());
    }

    #[test]
    fn grid_refinement_shares_points_bitwise() {
        let coarse = theta_grid(2, 9, 0.01).unwrap();
        let fine = theta_grid(2, 17, 0.01).unwrap();
        for (i, p) in coarse.points().iter().enumerate() {
            assert_eq!(p, &fine.points()[2 * i]);
        }
    }

    fn toy_fit() -> TailFit {
        TailFit {
            k: 10,
            gamma_j: vec![0.5, 0.5],
            gamma: 0.5,
            a_j: vec![1.0, 1.0],
            b_j: vec![2.0, 2.0],
            n: 1000,
        }
    }

    #[test]
    fn quantile_point_examples() {
        let fit = toy_fit();
        let x = quantile_point(&fit, 1.0, &[1.0, 1.0], 0.001).unwrap();
        let expected = (10f64.sqrt() - 1.0) / 0.5 + 2.0;
        assert!((x[0] - expected).abs() < 1e-12);
        assert!((x[0] - 6.3246).abs() < 1e-4);
        // Base of one returns the threshold.
        let x = quantile_point(&fit, 1.0, &[1.0, 1.0], 0.01).unwrap();
        assert_eq!(x[0], 2.0);
    }

    #[test]
    fn quantile_point_errors() {
        let mut fit = toy_fit();
        assert!(quantile_point(&fit, 1.0, &[1.0, 1.0], 0.0).is_err());
        assert!(quantile_point(&fit, 0.0, &[1.0, 1.0], 0.01).is_err());
        assert!(quantile_point(&fit, 1.0, &[1.0, 0.0], 0.01).is_err());
        fit.gamma_j[0] = -0.2;
        assert!(matches!(
            quantile_point(&fit, 1.0, &[1.0, 1.0], 0.01),
            Err(DmqError::NonPositiveGamma { marginal: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn quantile_point_monotone(
            g in 0.05f64..1.5,
            a in 0.1f64..5.0,
            rho in 0.2f64..3.0,
            alpha in 1e-6f64..0.5,
            t in 0.05f64..1.0,
        ) {
            let fit = TailFit { k: 50, gamma_j: vec![g, g], gamma: g, a_j: vec![a, a], b_j: vec![1.0, 1.0], n: 2000 };
            let theta = [t, (1.0 - t * t).max(1e-4).sqrt()];
            let x = quantile_point(&fit, rho, &theta, alpha).unwrap();
            let x_half = quantile_point(&fit, rho, &theta, alpha / 2.0).unwrap();
            let x_rho = quantile_point(&fit, rho * 1.5, &theta, alpha).unwrap();
            for j in 0..2 {
                prop_assert!(x_half[j] > x[j]);
                prop_assert!(x_rho[j] > x[j]);
            }
        }
    }

    #[test]
    fn identity_direction_reproduces_points() {
        let s = t_sample(3000, 1).shifted(&[-20.0, -20.0]).unwrap();
        let e = Direction::e(2).unwrap();
        let grid = theta_grid(2, 8, 0.01).unwrap();
        let surf = estimate_surface(&s, &e, 1.0 / 3000.0, &grid, &fixed(100)).unwrap();
        let ctx = StdfContext::new(&s, surf.fit.clone()).unwrap();
        for p in &surf.points {
            let rho = ctx.rho_hat(&p.theta).unwrap();
            let x = quantile_point(&surf.fit, rho.value, &p.theta, surf.alpha).unwrap();
            assert_eq!(p.x_rotated, x);
            assert_eq!(p.x_original, x);
        }
    }

    #[test]
    fn quasi_orthogonal_invariance() {
        let s = t_sample(2000, 2);
        let u = Direction::new(vec![0.9, 0.3]).unwrap();
        let r = rotation_for(&u).unwrap();
        let grid = theta_grid(2, 6, 0.01).unwrap();
        let alpha = 1.0 / 2000.0;
        let direct = estimate_surface(&s, &u, alpha, &grid, &fixed(80)).unwrap();
        let pre = r.rotate_sample(&s).unwrap();
        let via_e = estimate_surface(&pre, &Direction::e(2).unwrap(), alpha, &grid, &fixed(80)).unwrap();
        for (a, b) in direct.points.iter().zip(&via_e.points) {
            assert_eq!(a.x_rotated, b.x_rotated);
            assert_eq!(a.x_original, r.apply_transpose(&b.x_original).unwrap());
        }
        for p in &direct.points {
            let back = r.apply_transpose(&p.x_rotated).unwrap();
            for (x, y) in back.iter().zip(&p.x_original) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn surface_monotone_in_alpha() {
        let s = t_sample(2000, 3);
        let u = Direction::e(2).unwrap();
        let est = SurfaceEstimator::new(&s, &u, &fixed(100)).unwrap();
        let grid = theta_grid(2, 10, 0.01).unwrap();
        let lo = est.surface(&grid, 1e-4).unwrap();
        let hi = est.surface(&grid, 1e-3).unwrap();
        for (a, b) in lo.points.iter().zip(&hi.points) {
            assert!(a.x_rotated.iter().zip(&b.x_rotated).all(|(x, y)| x > y));
        }
    }

    #[test]
    fn needs_centering_error() {
        let s = t_sample(500, 4).shifted(&[100.0, 100.0]).unwrap();
        let err = estimate_surface(
            &s,
            &Direction::e(2).unwrap(),
            0.001,
            &theta_grid(2, 4, 0.01).unwrap(),
            &fixed(20),
        )
        .unwrap_err();
        match err {
            DmqError::NeedsCentering { suggested_center, .. } => {
                assert!((suggested_center[0] + 100.0).abs() < 2.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string_mentions_recenter());
    }

    fn err_string_mentions_recenter() -> bool {
        DmqError::NeedsCentering {
            marginals: vec![0],
            suggested_center: vec![0.0],
        }
        .to_string()
        .contains("recenter")
    }

    #[test]
    fn centering_recovers_shifted_surface() {
        let base = t_sample(2000, 5);
        let shifted = base.shifted(&[50.0, 50.0]).unwrap();
        let opts = EstimateOptions {
            center: true,
            ..fixed(80)
        };
        let grid = theta_grid(2, 5, 0.01).unwrap();
        let e = Direction::e(2).unwrap();
        let a = estimate_surface(&shifted, &e, 1e-3, &grid, &opts).unwrap();
        let b = estimate_surface(&base, &e, 1e-3, &grid, &opts).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            for (x, y) in p.x_original.iter().zip(&q.x_original) {
                assert!((x - (y - 50.0)).abs() < 1e-8 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn too_few_rows() {
        let s = t_sample(30, 6);
        assert!(SurfaceEstimator::new(&s, &Direction::e(2).unwrap(), &fixed(5)).is_err());
    }

    #[test]
    fn tail_level_inverts_surface_points() {
        let s = t_sample(5000, 7);
        let u = Direction::new(vec![0.95, 0.2]).unwrap();
        let est = SurfaceEstimator::new(&s, &u, &fixed(150)).unwrap();
        let grid = theta_grid(2, 12, 0.01).unwrap();
        let alpha = 1.0 / 5000.0;
        for p in est.surface(&grid, alpha).unwrap().points {
            let lvl = est.tail_level(&p.x_original).unwrap();
            assert!(lvl.extremal);
            let th = lvl.theta.unwrap();
            let rho_z = est.rho_hat(&th).unwrap().value;
            if rho_z == p.rho {
                assert!((lvl.alpha_z - alpha).abs() <= 1e-9 * alpha, "{} vs {alpha}", lvl.alpha_z);
            }
        }
    }

    #[test]
    fn tail_level_outward_monotone() {
        let s = t_sample(3000, 8);
        let u = Direction::new(vec![0.6, 0.8]).unwrap();
        let est = SurfaceEstimator::new(&s, &u, &fixed(120)).unwrap();
        let outward = est.rotation().apply_transpose(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        let mut rng_state = 12345u64;
        for _ in 0..200 {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let i = (rng_state >> 33) as usize % s.nrows();
            let z = s.row(i).to_vec();
            let mut prev = est.tail_level(&z).unwrap().alpha_z;
            for step in 1..6 {
                let t = step as f64 * 0.7;
                let zt: Vec<f64> = z.iter().zip(&outward).map(|(a, o)| a + t * o).collect();
                let cur = est.tail_level(&zt).unwrap().alpha_z;
                assert!(cur <= prev * (1.0 + 1e-12), "{cur} > {prev}");
                prev = cur;
            }
        }
    }

    #[test]
    fn tail_level_of_far_point_below_k_over_n() {
        let s = t_sample(4000, 9);
        let e = Direction::e(2).unwrap();
        let est = SurfaceEstimator::new(&s, &e, &fixed(100)).unwrap();
        let best = s
            .rows()
            .max_by(|a, b| (a[0] + a[1]).total_cmp(&(b[0] + b[1])))
            .unwrap();
        let lvl = est.tail_level(best).unwrap();
        assert!(lvl.alpha_z < 100.0 / 4000.0, "{}", lvl.alpha_z);
        let below = est.tail_level(&[-50.0, -50.0]).unwrap();
        assert!(!below.extremal);
        assert!(below.alpha_z > 100.0 / 4000.0);
    }

    #[test]
    fn flags_alpha_one_and_duplicates() {
        let base = t_sample(1000, 10);
        let mut rows = base.to_rows();
        rows.push(rows[0].clone());
        let s = Sample::from_rows(&rows).unwrap();
        let flags = flag_outliers(&s, &Direction::e(2).unwrap(), 1.0, &fixed(50)).unwrap();
        assert_eq!(flags[0], flags[1000]);
        let est = SurfaceEstimator::new(&s, &Direction::e(2).unwrap(), &fixed(50)).unwrap();
        for (f, row) in flags.iter().zip(s.rows()) {
            if !est.tail_level(row).unwrap().extremal {
                assert!(!f.flagged);
            }
        }
        assert!(flags.iter().any(|f| !f.flagged));
        let flags = flag_outliers(&s, &Direction::e(2).unwrap(), 0.01, &fixed(50)).unwrap();
        assert_eq!(flags[0], flags[1000]);
    }

    #[test]
    fn separate_radius_fraction() {
        let s = t_sample(3000, 11);
        let e = Direction::e(2).unwrap();
        let a = SurfaceEstimator::new(&s, &e, &fixed(100)).unwrap();
        let b = SurfaceEstimator::new(
            &s,
            &e,
            &EstimateOptions {
                k_rho: Some(200),
                ..fixed(100)
            },
        )
        .unwrap();
        assert_eq!(a.fit(), b.fit());
        let th = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
        assert_ne!(a.rho_hat(&th).unwrap(), b.rho_hat(&th).unwrap());
    }
}
