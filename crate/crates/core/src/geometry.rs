//! Directions, QR-oriented rotations and the orthant partial order.
//!
//! A direction `u` is turned into a unique rotation `R_u` with `R_u u = e`,
//! where `e = (1, ..., 1)' / sqrt(d)`. Uniqueness comes from fixing the QR
//! factors of two reference matrices to have a positive triangular diagonal:
//!
//! ```text
//! M_u = [u, sgn(u_2) e_2, ..., sgn(u_d) e_d] = Q_u T_u
//! M_e = [e, e_2, ..., e_d]                   = Q_e T_e
//! R_u = Q_e Q_u'
//! ```

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::error::{DmqError, Result};

/// Components smaller than this in absolute value are treated as zero.
pub const NON_NULL_THRESHOLD: f64 = 1e-8;

const RCOND_FLOOR: f64 = 1e-12;

/// Unit vector with non-null components.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `components` to unit Euclidean norm and validates it.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(DmqError::InvalidDirection(format!(
                "dimension must be at least 2, got {}",
                components.len()
            )));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(DmqError::InvalidDirection("non-finite component".into()));
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(DmqError::InvalidDirection("zero vector".into()));
        }
        let unit: Vec<f64> = components.iter().map(|c| c / norm).collect();
        if let Some((i, c)) = unit
            .iter()
            .enumerate()
            .find(|(_, c)| c.abs() < NON_NULL_THRESHOLD)
        {
            return Err(DmqError::InvalidDirection(format!(
                "component {i} = {c:e} is null (|u_i| < {NON_NULL_THRESHOLD:e}); \
                 boundary directions are not supported"
            )));
        }
        Ok(Self(unit))
    }

    /// The diagonal direction `e = (1, ..., 1) / sqrt(d)`.
    pub fn e(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }

    /// The anti-diagonal direction `-e`.
    pub fn neg_e(d: usize) -> Result<Self> {
        Self::new(vec![-1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Orthogonal matrix with positive-diagonal QR orientation, mapping its
/// source direction onto `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMatrix {
    matrix: DMatrix<f64>,
    source: Direction,
}

impl RotationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn direction(&self) -> &Direction {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(DmqError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// `R x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(self.apply_unchecked(x))
    }

    /// `R' x`, the inverse rotation.
    pub fn apply_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let d = self.dim();
        Ok((0..d)
            .map(|i| (0..d).map(|l| self.matrix[(l, i)] * x[l]).sum())
            .collect())
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|l| self.matrix[(i, l)] * x[l]).sum())
            .collect()
    }

    /// `R'` as a rotation matrix. Its source direction is left as the
    /// original one; the transpose is used only to undo a rotation.
    pub fn transpose(&self) -> RotationMatrix {
        RotationMatrix {
            matrix: self.matrix.transpose(),
            source: self.source.clone(),
        }
    }

    /// Rotates every row of `points`.
    pub fn rotate_sample(&self, points: &crate::Sample) -> Result<crate::Sample> {
        self.check_dim(points.dim())?;
        let data = points
            .rows()
            .flat_map(|r| self.apply_unchecked(r))
            .collect();
        crate::Sample::from_flat(data, points.dim())
    }

    /// `x ⪯_u y` iff `R x <= R y` componentwise.
    pub fn leq(&self, x: &[f64], y: &[f64]) -> Result<bool> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        Ok(self.apply_unchecked(&diff).iter().all(|&c| c >= 0.0))
    }
}

/// Householder QR with the sign convention `diag(T) > 0`.
///
/// Fails when `M` is not square or its reciprocal condition number is at or
/// below `1e-12`.
pub fn qr_positive_diag(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let describe = || format!("{}x{} matrix {:?}", m.nrows(), m.ncols(), m.as_slice());
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(DmqError::Factorization {
            matrix: describe(),
            reason: "matrix must be square and non-empty".into(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DmqError::Factorization {
            matrix: describe(),
            reason: "non-finite entry".into(),
        });
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin / smax <= RCOND_FLOOR {
        return Err(DmqError::Factorization {
            matrix: describe(),
            reason: format!("singular or near-singular (rcond = {:e})", smin / smax.max(f64::MIN_POSITIVE)),
        });
    }

    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut t = qr.r();
    for i in 0..t.nrows() {
        if t[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            t.row_mut(i).neg_mut();
        }
    }
    Ok((q, t))
}

fn reference_matrix(u: &[f64]) -> DMatrix<f64> {
    let d = u.len();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, 0)] = u[i];
    }
    for j in 1..d {
        m[(j, j)] = if u[j] < 0.0 { -1.0 } else { 1.0 };
    }
    m
}

/// The unique QR-oriented rotation `R_u = Q_e Q_u'`.
pub fn rotation_for(u: &Direction) -> Result<RotationMatrix> {
    let d = u.dim();
    let e = Direction::e(d)?;
    let m_u = reference_matrix(u.components());
    let m_e = reference_matrix(e.components());
    // Identical reference matrices give Q_u = Q_e; return the exact identity
    // rather than a product carrying rounding noise.
    if m_u == m_e {
        return Ok(RotationMatrix {
            matrix: DMatrix::identity(d, d),
            source: u.clone(),
        });
    }
    let (q_u, _) = qr_positive_diag(&m_u)?;
    let (q_e, _) = qr_positive_diag(&m_e)?;
    Ok(RotationMatrix {
        matrix: q_e * q_u.transpose(),
        source: u.clone(),
    })
}

/// Applies `r` to every point.
pub fn rotate(r: &RotationMatrix, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    points.iter().map(|p| r.apply(p)).collect()
}

/// `x ⪯_u y`.
pub fn orthant_leq(x: &[f64], y: &[f64], u: &Direction) -> Result<bool> {
    rotation_for(u)?.leq(x, y)
}

/// Whether `z` lies in the closed QR oriented orthant with the given vertex.
pub fn in_oriented_orthant(vertex: &[f64], z: &[f64], u: &Direction) -> Result<bool> {
    orthant_leq(vertex, z, u)
}
