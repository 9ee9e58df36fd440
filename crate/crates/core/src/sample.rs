//! Dense row-major storage for an `n x d` sample.

use crate::error::{DmqError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Sample {
    pub fn from_flat(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(DmqError::InvalidArgument("sample dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(d) {
            return Err(DmqError::InvalidArgument(format!(
                "flat buffer of length {} is not a multiple of dimension {}",
                data.len(),
                d
            )));
        }
        let n = data.len() / d;
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| DmqError::InvalidArgument("empty sample".into()))?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(DmqError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, d)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Copy of column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    /// Subtract `offset` from every row.
    pub fn shifted(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.d {
            return Err(DmqError::DimensionMismatch {
                expected: self.d,
                got: offset.len(),
            });
        }
        let data = self
            .rows()
            .flat_map(|r| r.iter().zip(offset).map(|(x, o)| x - o))
            .collect();
        Ok(Self {
            data,
            n: self.n,
            d: self.d,
        })
    }

    /// Componentwise median (mean of the two middle values for even `n`).
    pub fn componentwise_median(&self) -> Vec<f64> {
        (0..self.d)
            .map(|j| {
                let mut col = self.column(j);
                col.sort_by(f64::total_cmp);
                let n = col.len();
                if n % 2 == 1 {
                    col[n / 2]
                } else {
                    0.5 * (col[n / 2 - 1] + col[n / 2])
                }
            })
            .collect()
    }

    /// Componentwise mean and the unbiased covariance matrix (row-major).
    pub fn mean_and_covariance(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let n = self.n as f64;
        let mut mean = vec![0.0; d];
        for r in self.rows() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = vec![0.0; d * d];
        for r in self.rows() {
            for a in 0..d {
                let da = r[a] - mean[a];
                for b in 0..d {
                    cov[a * d + b] += da * (r[b] - mean[b]);
                }
            }
        }
        let denom = (self.n.max(2) - 1) as f64;
        cov.iter_mut().for_each(|c| *c /= denom);
        (mean, cov)
    }
}
