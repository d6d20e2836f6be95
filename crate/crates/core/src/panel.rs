use serde::{Deserialize, Serialize};

use crate::error::{Result, TvVarError};
use crate::linalg::Matrix;

/// A `d`-variate series of `T` in-sample rows preceded by `presample` rows of
/// initial conditions, stored oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedPanel {
    d: usize,
    presample: usize,
    /// `(presample + T) x d`, row-major.
    data: Vec<f64>,
    labels: Vec<String>,
}

impl ObservedPanel {
    /// `rows` is `(presample + T) x d`, oldest first.
    pub fn new(rows: Vec<Vec<f64>>, presample: usize, labels: Vec<String>) -> Result<Self> {
        let d = labels.len();
        if d == 0 {
            return Err(TvVarError::Dimension("panel needs at least one series".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(TvVarError::Dimension(format!(
                    "row {r} has {} values, expected {d}",
                    row.len()
                )));
            }
            for (c, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(TvVarError::NonFinite { row: r, col: c });
                }
                data.push(*v);
            }
        }
        if rows.len() <= presample + 1 {
            return Err(TvVarError::TooShort {
                t: rows.len().saturating_sub(presample),
                minimum: 2,
            });
        }
        Ok(ObservedPanel {
            d,
            presample,
            data,
            labels,
        })
    }

    pub fn from_matrix(m: &Matrix, presample: usize) -> Result<Self> {
        let labels = (1..=m.ncols()).map(|i| format!("x{i}")).collect();
        let rows = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Self::new(rows, presample, labels)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Effective sample length `T`.
    pub fn len(&self) -> usize {
        self.data.len() / self.d - self.presample
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn presample(&self) -> usize {
        self.presample
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total_rows(&self) -> usize {
        self.data.len() / self.d
    }

    /// Observation `x_t` for `t` in `-presample+1 ..= T`.
    #[inline]
    pub fn x(&self, t: isize) -> &[f64] {
        let r = (t + self.presample as isize - 1) as usize;
        &self.data[r * self.d..(r + 1) * self.d]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.d..(r + 1) * self.d]
    }

    /// Rescaled time of in-sample observation `t` (1-based).
    pub fn tau(&self, t: usize) -> f64 {
        t as f64 / self.len() as f64
    }

    /// Moves the first `k` in-sample rows into the presample block.
    pub fn with_presample(&self, presample: usize) -> Result<Self> {
        if presample > self.total_rows() - 2 {
            return Err(TvVarError::TooShort {
                t: self.total_rows().saturating_sub(presample),
                minimum: 2,
            });
        }
        Ok(ObservedPanel {
            d: self.d,
            presample,
            data: self.data.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Panel usable with lag `p`: when fewer than `p` presample rows exist the
    /// first in-sample rows become initial conditions and `T` shrinks.
    pub fn aligned_for_lag(&self, p: usize) -> Result<Self> {
        if self.presample >= p {
            Ok(self.clone())
        } else {
            self.with_presample(p)
        }
    }

    /// In-sample rows as a `T x d` matrix.
    pub fn in_sample(&self) -> Matrix {
        let t = self.len();
        Matrix::from_fn(t, self.d, |i, j| self.x(i as isize + 1)[j])
    }

    /// Rough estimability guard, `T >= 20 (dp + 1)`.
    pub fn estimable(&self, p: usize) -> bool {
        self.len() >= 20 * (self.d * p + 1)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// Per-lag regressor design: `z_{t-1} = [1, x_{t-1}', …, x_{t-p}']'` and
/// `x_t` for `t = 1..T`, in contiguous buffers.
#[derive(Debug, Clone)]
pub struct Design {
    pub d: usize,
    pub p: usize,
    /// `m = dp + 1`.
    pub m: usize,
    pub len: usize,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    /// Packed upper triangle of `z z'` per observation.
    pub zz: Vec<f64>,
    /// `z x'` per observation, `m x d` row-major.
    pub zx: Vec<f64>,
}

impl Design {
    pub fn new(panel: &ObservedPanel, p: usize) -> Result<Self> {
        if p > panel.presample() {
            return Err(TvVarError::Config(format!(
                "lag {p} needs {p} presample rows, panel has {}",
                panel.presample()
            )));
        }
        let d = panel.dim();
        let m = d * p + 1;
        let len = panel.len();
        let np = m * (m + 1) / 2;
        let mut z = Vec::with_capacity(len * m);
        let mut x = Vec::with_capacity(len * d);
        let mut zz = Vec::with_capacity(len * np);
        let mut zx = Vec::with_capacity(len * m * d);
        for t in 1..=len as isize {
            let start = z.len();
            z.push(1.0);
            for j in 1..=p as isize {
                z.extend_from_slice(panel.x(t - j));
            }
            x.extend_from_slice(panel.x(t));
            let zr = &z[start..start + m];
            for a in 0..m {
                for b in a..m {
                    zz.push(zr[a] * zr[b]);
                }
            }
            let xr = panel.x(t);
            for a in 0..m {
                for c in 0..d {
                    zx.push(zr[a] * xr[c]);
                }
            }
        }
        Ok(Design {
            d,
            p,
            m,
            len,
            z,
            x,
            zz,
            zx,
        })
    }

    #[inline]
    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn packed_len(&self) -> usize {
        self.m * (self.m + 1) / 2
    }
}
