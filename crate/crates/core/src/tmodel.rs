//! Multivariate Student t model: simulation source and analytical oracle.
//!
//! The rotated model `R X` is again t with location `R mu`, scale
//! `R Sigma R'` and the same degrees of freedom, so every directional
//! quantity has a closed form up to low-dimensional t integrals. The tail
//! dependence of a t vector with correlation `r` and `nu` degrees of freedom
//! on Fréchet margins is
//!
//! ```text
//! l(z) = sum_j z_j^-1 T_{nu+1}^{d-1}( sqrt((nu+1)/(1-r_ij^2)) ((z_i/z_j)^(1/nu) - r_ij); i != j )
//! ```
//!
//! where the `(d-1)`-dimensional t has the partial correlations given `j`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{DmqError, Result};
use crate::geometry::{rotation_for, Direction, RotationMatrix};
use crate::quadrature::integrate;
use crate::sample::Sample;

/// Absolute tolerance of the bivariate t CDF quadrature.
pub const BIVARIATE_CDF_TOL: f64 = 1e-8;

const BISECTION_STEPS: usize = 200;
const BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TParams {
    mu: Vec<f64>,
    sigma: DMatrix<f64>,
    nu: f64,
}

impl TParams {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>, nu: f64) -> Result<Self> {
        let d = mu.len();
        if d == 0 || sigma.nrows() != d || sigma.ncols() != d {
            return Err(DmqError::InvalidParams(format!(
                "location has {d} entries but scale is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(DmqError::InvalidParams(format!("degrees of freedom {nu} must be positive")));
        }
        for i in 0..d {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(DmqError::InvalidParams("scale matrix is not symmetric".into()));
                }
            }
        }
        let eig = SymmetricEigen::new(sigma.clone());
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(DmqError::InvalidParams(format!(
                "scale matrix is not positive definite (eigenvalues {:?})",
                eig.eigenvalues.as_slice()
            )));
        }
        Ok(Self { mu, sigma, nu })
    }

    /// Row-major construction helper.
    pub fn from_slices(mu: &[f64], sigma_row_major: &[f64], nu: f64) -> Result<Self> {
        let d = mu.len();
        if sigma_row_major.len() != d * d {
            return Err(DmqError::InvalidParams(format!(
                "scale needs {} entries, got {}",
                d * d,
                sigma_row_major.len()
            )));
        }
        Self::new(mu.to_vec(), DMatrix::from_row_slice(d, d, sigma_row_major), nu)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Common tail index `1 / nu`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.nu
    }

    /// Second-order index `-2 / nu`.
    pub fn second_order(&self) -> f64 {
        -2.0 / self.nu
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else {
                self.sigma[(i, j)] / (self.sigma[(i, i)] * self.sigma[(j, j)]).sqrt()
            }
        })
    }

    /// Symmetric square root of the scale matrix.
    pub fn sqrt_sigma(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.sigma.clone());
        let root = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.sqrt()));
        &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
    }
}

/// `n` draws of `mu + Sigma^(1/2) N / sqrt(S / nu)` with `S ~ chi^2(nu)`.
pub fn sample_t(params: &TParams, n: usize, seed: u64) -> Result<Sample> {
    let d = params.dim();
    let root = params.sqrt_sigma();
    let chi = ChiSquared::new(params.nu)
        .map_err(|e| DmqError::InvalidParams(format!("chi-square: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let s: f64 = chi.sample(&mut rng);
        let w = (s / params.nu).sqrt();
        for i in 0..d {
            let lin: f64 = (0..d).map(|l| root[(i, l)] * z[l]).sum();
            data.push(params.mu[i] + lin / w);
        }
    }
    Sample::from_flat(data, d)
}

/// Parameters of `R X`: `(R mu, R Sigma R', nu)`, re-symmetrized.
pub fn rotate_elliptical(params: &TParams, r: &RotationMatrix) -> Result<TParams> {
    if r.dim() != params.dim() {
        return Err(DmqError::DimensionMismatch {
            expected: params.dim(),
            got: r.dim(),
        });
    }
    let m = r.matrix();
    let s = m * &params.sigma * m.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let mu = r.apply(&params.mu)?;
    Ok(TParams {
        mu,
        sigma: s,
        nu: params.nu,
    })
}

/// Leading eigenvector of `sigma`, first component made positive.
pub fn fpc_direction(sigma: &DMatrix<f64>) -> Result<Direction> {
    if sigma.nrows() != sigma.ncols() || sigma.nrows() < 2 {
        return Err(DmqError::InvalidArgument("scale matrix must be square with d >= 2".into()));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if (l1 - l2) <= 1e-10 * l1.abs() {
        return Err(DmqError::Numerical(format!(
            "leading eigenvalue {l1} is not simple (next {l2}); principal direction undefined"
        )));
    }
    let mut v: Vec<f64> = eig.eigenvectors.column(order[0]).iter().cloned().collect();
    if v[0] < 0.0 {
        v.iter_mut().for_each(|c| *c = -*c);
    }
    Direction::new(v)
}

fn t_cdf_1d(x: f64, nu: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn ln_t_density_const(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln()
}

fn t_cdf_2d(x1: f64, x2: f64, r: f64, nu: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(DmqError::InvalidArgument(format!("correlation {r} must lie in (-1, 1)")));
    }
    if x1 == f64::NEG_INFINITY || x2 == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if x1 == f64::INFINITY {
        return Ok(t_cdf_1d(x2, nu));
    }
    if x2 == f64::INFINITY {
        return Ok(t_cdf_1d(x1, nu));
    }
    let c = ln_t_density_const(nu);
    let one_m_r2 = 1.0 - r * r;
    // X2 | X1 = s is t(nu + 1) with location r s and
    // scale^2 = (1 - r^2)(nu + s^2)/(nu + 1). Substituting s = tan(phi)
    // keeps the integration range finite.
    let integrand = |phi: f64| {
        let s = phi.tan();
        let s2 = s * s;
        let dens = (c - 0.5 * (nu + 1.0) * (1.0 + s2 / nu).ln()).exp() * (1.0 + s2);
        let scale = (one_m_r2 * (nu + s2) / (nu + 1.0)).sqrt();
        dens * t_cdf_1d((x2 - r * s) / scale, nu + 1.0)
    };
    let v = integrate(integrand, -std::f64::consts::FRAC_PI_2, x1.atan(), BIVARIATE_CDF_TOL * 0.1)?;
    Ok(v.clamp(0.0, 1.0))
}

/// CDF of a standard (unit-scale) t in dimension 1 or 2.
pub fn t_cdf(x: &[f64], corr: &DMatrix<f64>, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(DmqError::InvalidParams(format!("degrees of freedom {nu} must be positive")));
    }
    match x.len() {
        1 => Ok(t_cdf_1d(x[0], nu)),
        2 => {
            if corr.nrows() != 2 || corr.ncols() != 2 {
                return Err(DmqError::DimensionMismatch {
                    expected: 2,
                    got: corr.nrows(),
                });
            }
            t_cdf_2d(x[0], x[1], corr[(0, 1)], nu)
        }
        d => Err(DmqError::UnsupportedDimension(d)),
    }
}

/// Tail dependence function of the t copula on Fréchet margins, `d` in {2, 3}.
pub fn t_stdf(z: &[f64], corr: &DMatrix<f64>, nu: f64) -> Result<f64> {
    let d = z.len();
    if !(2..=3).contains(&d) {
        return Err(DmqError::UnsupportedDimension(d));
    }
    if corr.nrows() != d || corr.ncols() != d {
        return Err(DmqError::DimensionMismatch {
            expected: d,
            got: corr.nrows(),
        });
    }
    if let Some(j) = z.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(DmqError::InvalidArgument(format!(
            "z component {j} = {} must be positive and finite",
            z[j]
        )));
    }
    for i in 0..d {
        for j in 0..i {
            if !(corr[(i, j)].abs() < 1.0) {
                return Err(DmqError::Numerical(format!(
                    "correlation r_{i}{j} = {} is comonotone-degenerate",
                    corr[(i, j)]
                )));
            }
        }
    }
    let nu1 = nu + 1.0;
    let arg = |i: usize, j: usize| {
        let r = corr[(i, j)];
        (nu1 / (1.0 - r * r)).sqrt() * ((z[i] / z[j]).powf(1.0 / nu) - r)
    };
    let mut total = 0.0;
    for j in 0..d {
        let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
        let mass = if d == 2 {
            t_cdf_1d(arg(others[0], j), nu1)
        } else {
            let (i, l) = (others[0], others[1]);
            let (rij, rlj) = (corr[(i, j)], corr[(l, j)]);
            let partial =
                (corr[(i, l)] - rij * rlj) / ((1.0 - rij * rij).sqrt() * (1.0 - rlj * rlj).sqrt());
            t_cdf_2d(arg(i, j), arg(l, j), partial, nu1)?
        };
        total += mass / z[j];
    }
    Ok(total)
}

/// Radius function of the rotated model at an interior angle.
pub fn theoretical_rho(theta: &[f64], params: &TParams, u: &Direction) -> Result<f64> {
    let rotated = rotate_elliptical(params, &rotation_for(u)?)?;
    rho_of_rotated(theta, &rotated)
}

fn rho_of_rotated(theta: &[f64], rotated: &TParams) -> Result<f64> {
    if let Some(j) = theta.iter().position(|&t| !(t > 0.0)) {
        return Err(DmqError::InvalidArgument(format!(
            "theta component {j} = {} is on the boundary; the radius diverges there",
            theta[j]
        )));
    }
    t_stdf(theta, &rotated.correlation(), rotated.nu)
}

/// Upper `1/t` quantile of a univariate standard t by bisection.
fn t_upper_quantile(t: f64, nu: f64) -> Result<f64> {
    let target = 1.0 - 1.0 / t;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while t_cdf_1d(lo, nu) > target {
        lo *= 2.0;
        if lo < -1e300 {
            return Err(DmqError::Numerical("quantile bracket diverged".into()));
        }
    }
    while t_cdf_1d(hi, nu) < target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(DmqError::Numerical("quantile bracket diverged".into()));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if t_cdf_1d(mid, nu) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECTION_TOL * mid.abs().max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(DmqError::Numerical(format!(
        "quantile inversion at level {target} did not converge in {BISECTION_STEPS} steps"
    )))
}

/// `b_j(t) = F_j^-1(1 - 1/t)` and `a_j(t) = b_j(t) / nu`.
pub fn theoretical_norm_sequences(params: &TParams, j: usize, t: f64) -> Result<(f64, f64)> {
    if j >= params.dim() {
        return Err(DmqError::InvalidArgument(format!("marginal {j} out of range")));
    }
    if !(t > 1.0) {
        return Err(DmqError::InvalidArgument(format!("t = {t} must exceed 1")));
    }
    let q = t_upper_quantile(t, params.nu)?;
    let b = params.mu[j] + params.sigma[(j, j)].sqrt() * q;
    if !(b > 0.0) {
        return Err(DmqError::NonPositiveThreshold {
            marginal: j,
            threshold: b,
        });
    }
    Ok((params.gamma() * b, b))
}

/// Asymptotic quantile point `x~` in rotated coordinates.
pub fn asymptotic_quantile(
    params: &TParams,
    u: &Direction,
    alpha: f64,
    theta: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let rotated = rotate_elliptical(params, &rotation_for(u)?)?;
    asymptotic_quantile_rotated(&rotated, alpha, theta, t)
}

pub(crate) fn asymptotic_quantile_rotated(
    rotated: &TParams,
    alpha: f64,
    theta: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DmqError::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")));
    }
    let rho = rho_of_rotated(theta, rotated)?;
    let g = rotated.gamma();
    (0..rotated.dim())
        .map(|j| {
            let (a, b) = theoretical_norm_sequences(rotated, j, t)?;
            Ok(a * ((rho * theta[j] / (t * alpha)).powf(g) - 1.0) / g + b)
        })
        .collect()
}

/// `||x~ - x^|| / ||x~||`.
pub fn relative_error(x_tilde: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_tilde.len() != x_hat.len() {
        return Err(DmqError::DimensionMismatch {
            expected: x_tilde.len(),
            got: x_hat.len(),
        });
    }
    let norm = x_tilde.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(DmqError::InvalidArgument("reference point has zero norm".into()));
    }
    let diff = x_tilde
        .iter()
        .zip(x_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Theoretical radius and asymptotic quantile at every grid angle.
pub fn oracle_surface(
    params: &TParams,
    u: &Direction,
    alpha: f64,
    grid: &crate::quantile::ThetaGrid,
    t: f64,
) -> Result<Vec<crate::quantile::SurfacePoint>> {
    let r = rotation_for(u)?;
    let rotated = rotate_elliptical(params, &r)?;
    grid.points()
        .iter()
        .map(|theta| {
            let rho = rho_of_rotated(theta, &rotated)?;
            let x_rotated = asymptotic_quantile_rotated(&rotated, alpha, theta, t)?;
            let x_original = r.apply_transpose(&x_rotated)?;
            Ok(crate::quantile::SurfacePoint {
                theta: theta.clone(),
                x_rotated,
                x_original,
                rho,
                floored: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn reference_2d() -> TParams {
        TParams::from_slices(&[0.0, 0.0], &[5.0, 0.1, 0.1, 1.0], 3.0).unwrap()
    }

    fn reference_3d() -> TParams {
        TParams::from_slices(
            &[0.0; 3],
            &[5.0, 2.44, -1.88, 2.44, 2.12, 0.04, -1.88, 0.04, 2.36],
            4.0,
        )
        .unwrap()
    }

    fn identity(d: usize) -> DMatrix<f64> {
        DMatrix::identity(d, d)
    }

    #[test]
    fn params_validation() {
        assert!(TParams::from_slices(&[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0], 3.0).is_err());
        assert!(TParams::from_slices(&[0.0, 0.0], &[1.0, 0.5, 0.4, 1.0], 3.0).is_err());
        assert!(TParams::from_slices(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 0.0).is_err());
        let p = reference_2d();
        assert_eq!(p.gamma(), 1.0 / 3.0);
        assert_eq!(p.second_order(), -2.0 / 3.0);
    }

    #[test]
    fn univariate_cdf_values() {
        let c = identity(1);
        assert_eq!(t_cdf(&[0.0], &c, 4.0).unwrap(), 0.5);
        // Closed form for nu = 4: 1/2 + x (x^2 + 6) / (2 (x^2 + 4)^1.5).
        let exact = 0.5 + 2.0 * 10.0 / (2.0 * 8f64.powf(1.5));
        let v = t_cdf(&[2.0], &c, 4.0).unwrap();
        assert!((v - exact).abs() < 1e-12);
        assert!((v - 0.9419).abs() < 1e-4);
    }

    #[test]
    fn bivariate_cdf_zero_correlation() {
        let c = identity(2);
        // Zero correlation is not independence for finite nu: the shared
        // chi-square mixing couples the margins.
        let joint = t_cdf(&[2.0, 2.0], &c, 4.0).unwrap();
        let product = t_cdf_1d(2.0, 4.0).powi(2);
        assert!(joint - product > 1e-3);
        // In the Gaussian limit the factorization holds.
        for &(a, b) in &[(0.3, -1.2), (2.0, 2.0), (-0.5, 1.7)] {
            let nu = 1e7;
            let joint = t_cdf(&[a, b], &c, nu).unwrap();
            let product = t_cdf_1d(a, nu) * t_cdf_1d(b, nu);
            assert!((joint - product).abs() < 1e-7, "{joint} vs {product}");
        }
        assert!(t_cdf(&[0.0, 0.0, 0.0], &identity(3), 4.0).is_err());
    }

    #[test]
    fn bivariate_cdf_reference_values() {
        // Orthant probability P(X1 <= 0, X2 <= 0) = 1/4 + asin(r) / (2 pi)
        // holds for every elliptical law.
        for &r in &[-0.7, 0.0, 0.3, 0.9] {
            let c = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
            let v = t_cdf(&[0.0, 0.0], &c, 3.0).unwrap();
            let exact = 0.25 + r.asin() / (2.0 * std::f64::consts::PI);
            assert!((v - exact).abs() < 1e-8, "r = {r}: {v} vs {exact}");
        }
        // Large upper limit recovers the univariate margin.
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let v = t_cdf(&[1.3, 1e6], &c, 5.0).unwrap();
        assert!((v - t_cdf_1d(1.3, 5.0)).abs() < 1e-8);
    }

    #[test]
    fn stdf_hand_value() {
        let v = t_stdf(&[1.0, 1.0], &identity(2), 3.0).unwrap();
        let expected = 2.0 * t_cdf_1d(2.0, 4.0);
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 1.8839).abs() < 1e-4);
    }

    #[test]
    fn stdf_rejects_bad_inputs() {
        let comonotone = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(t_stdf(&[1.0, 1.0], &comonotone, 3.0).is_err());
        assert!(matches!(
            t_stdf(&[1.0; 4], &identity(4), 3.0),
            Err(DmqError::UnsupportedDimension(4))
        ));
        assert!(t_stdf(&[1.0, 0.0], &identity(2), 3.0).is_err());
    }

    #[test]
    fn stdf_symmetric_under_permutation() {
        let p = reference_3d();
        let c = p.correlation();
        let z = [0.7, 1.3, 2.1];
        let perm = [2usize, 0, 1];
        let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        let cp = DMatrix::from_fn(3, 3, |a, b| c[(perm[a], perm[b])]);
        let a = t_stdf(&z, &c, 4.0).unwrap();
        let b = t_stdf(&zp, &cp, 4.0).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn theoretical_rho_examples() {
        let p = TParams::from_slices(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 3.0).unwrap();
        let e = Direction::e(2).unwrap();
        let rho = theoretical_rho(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &p, &e).unwrap();
        assert!((rho - 2f64.sqrt() * 2.0 * t_cdf_1d(2.0, 4.0)).abs() < 1e-12);
        assert!((rho - 2.664).abs() < 1e-3);

        let near = TParams::from_slices(&[0.0, 0.0], &[1.0, 0.999999, 0.999999, 1.0], 3.0).unwrap();
        let rho = theoretical_rho(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &near, &e).unwrap();
        assert!((rho - 2f64.sqrt()).abs() < 1e-2, "rho = {rho}");
        assert!(theoretical_rho(&[1.0, 0.0], &p, &e).is_err());
    }

    #[test]
    fn fpc_reference_values() {
        let u = fpc_direction(reference_2d().sigma()).unwrap();
        assert!((u.components()[0] - 0.9997).abs() < 1e-3);
        assert!((u.components()[1] - 0.025).abs() < 1e-3);
        let u = fpc_direction(reference_3d().sigma()).unwrap();
        for (a, b) in u.components().iter().zip([0.8417, 0.4202, -0.3392]) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
        let diag = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        assert!(matches!(fpc_direction(&diag), Err(DmqError::InvalidDirection(_))));
        assert!(fpc_direction(&identity(2)).is_err());
    }

    #[test]
    fn rotate_elliptical_reference_values() {
        let p = reference_2d();
        let u = fpc_direction(p.sigma()).unwrap();
        let rot = rotate_elliptical(&p, &rotation_for(&u).unwrap()).unwrap();
        let expected = [3.0001, 2.0025, 2.0025, 2.9999];
        for (a, b) in rot.sigma().transpose().as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
        assert!((rot.sigma().trace() - p.sigma().trace()).abs() < 1e-10);

        let same = rotate_elliptical(&p, &rotation_for(&Direction::e(2).unwrap()).unwrap()).unwrap();
        assert_eq!(same, p);
    }

    #[test]
    fn rotate_elliptical_preserves_eigenvalues() {
        let p = reference_3d();
        let u = Direction::new(vec![0.2, -0.7, 0.5]).unwrap();
        let rot = rotate_elliptical(&p, &rotation_for(&u).unwrap()).unwrap();
        let mut a: Vec<f64> = SymmetricEigen::new(p.sigma().clone()).eigenvalues.iter().cloned().collect();
        let mut b: Vec<f64> = SymmetricEigen::new(rot.sigma().clone()).eigenvalues.iter().cloned().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn norm_sequence_examples() {
        let p = TParams::from_slices(&[0.0], &[1.0], 3.0).unwrap();
        let (a, b) = theoretical_norm_sequences(&p, 0, 1000.0).unwrap();
        assert!((b - 10.2145).abs() < 1e-3, "b = {b}");
        assert!((a - b / 3.0).abs() < 1e-12);
        assert!(theoretical_norm_sequences(&p, 0, 2.0).is_err());
        let p4 = TParams::from_slices(&[0.0], &[4.0], 3.0).unwrap();
        let (_, b4) = theoretical_norm_sequences(&p4, 0, 1000.0).unwrap();
        assert!((b4 - 2.0 * b).abs() < 1e-8);
    }

    #[test]
    fn asymptotic_quantile_fixed_point() {
        let p = reference_2d();
        let e = Direction::e(2).unwrap();
        let theta = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
        let rho = theoretical_rho(&theta, &p, &e).unwrap();
        let t = 100.0;
        let alpha = rho * theta[0] / t;
        let x = asymptotic_quantile(&p, &e, alpha, &theta, t).unwrap();
        let (_, b0) = theoretical_norm_sequences(&p, 0, t).unwrap();
        assert!((x[0] - b0).abs() < 1e-9);
    }

    #[test]
    fn relative_error_examples() {
        let x = [3.0, 4.0];
        assert_eq!(relative_error(&x, &x).unwrap(), 0.0);
        assert!((relative_error(&x, &[6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_error(&x, &[3.0 + 1e-3, 4.0]).unwrap() - 1e-3 / 5.0).abs() < 1e-15);
        assert!(relative_error(&[0.0, 0.0], &x).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_centered() {
        let p = TParams::from_slices(&[1.0, -2.0], &[2.0, 0.5, 0.5, 1.0], 4.0).unwrap();
        let a = sample_t(&p, 1000, 5).unwrap();
        let b = sample_t(&p, 1000, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_t(&p, 1000, 6).unwrap();
        assert_ne!(a, c);
        let s = sample_t(&p, 100_000, 1).unwrap();
        let (mean, _) = s.mean_and_covariance();
        assert!((mean[0] - 1.0).abs() < 0.03 && (mean[1] + 2.0).abs() < 0.03, "{mean:?}");
    }

    #[test]
    fn gaussian_limit_covariance() {
        let p = TParams::from_slices(&[0.0, 0.0], &[2.0, 0.6, 0.6, 1.0], 1e6).unwrap();
        let s = sample_t(&p, 100_000, 2).unwrap();
        let (_, cov) = s.mean_and_covariance();
        for (a, b) in cov.iter().zip([2.0, 0.6, 0.6, 1.0]) {
            assert!((a - b).abs() < 0.05, "{cov:?}");
        }
    }

    #[test]
    fn empirical_correlation_converges() {
        let p = reference_3d();
        let s = sample_t(&p, 100_000, 8).unwrap();
        let (_, cov) = s.mean_and_covariance();
        let c = p.correlation();
        for i in 0..3 {
            for j in 0..3 {
                let emp = cov[i * 3 + j] / (cov[i * 3 + i] * cov[j * 3 + j]).sqrt();
                assert!((emp - c[(i, j)]).abs() < 0.02, "({i},{j}) {emp} vs {}", c[(i, j)]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn stdf_homogeneity_and_bounds(
            z in prop::collection::vec(0.05f64..20.0, 3),
            c in 0.01f64..100.0,
            three in any::<bool>(),
        ) {
            let p = if three { reference_3d() } else { reference_2d() };
            let d = p.dim();
            let corr = p.correlation();
            let z = &z[..d];
            let l = t_stdf(z, &corr, p.nu()).unwrap();
            let cz: Vec<f64> = z.iter().map(|v| v * c).collect();
            let lc = t_stdf(&cz, &corr, p.nu()).unwrap();
            prop_assert!((c * lc - l).abs() <= 1e-8 * l);
            let inv: Vec<f64> = z.iter().map(|v| 1.0 / v).collect();
            let max = inv.iter().cloned().fold(0.0, f64::max);
            let sum: f64 = inv.iter().sum();
            prop_assert!(l >= max * (1.0 - 1e-9) && l <= sum * (1.0 + 1e-9));
        }
    }
}
