//! Particle storage.
//!
//! [`Particles`] is a dense row-major `N x d` block, one row per particle, so
//! that a particle's coordinates are a contiguous slice. [`Ensemble`] pairs
//! positions with momenta and the current time.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Particles {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Particles {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_flat(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Usage(format!(
                "particle block needs n >= 1 and d >= 1, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::Usage(format!(
                "expected {} values for {n}x{d} particles, got {}",
                n * d,
                data.len()
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Usage(format!(
                    "row {i} has dimension {}, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(n, d, data)
    }

    /// Convenience constructor for scalar (d = 1) particles.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.len(), 1, values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn rows_mut(&mut self) -> impl ExactSizeIterator<Item = &mut [f64]> {
        self.data.chunks_exact_mut(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Particles) -> bool {
        self.n == other.n && self.d == other.d
    }

    /// Index of the first particle with a non-finite coordinate.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| k / self.d)
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        for r in self.rows() {
            for (mk, x) in m.iter_mut().zip(r) {
                *mk += x;
            }
        }
        m / self.n as f64
    }

    /// Unbiased empirical covariance (divisor `N - 1`). Requires `N >= 2`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.n < 2 {
            return Err(Error::Usage(format!(
                "empirical covariance needs at least 2 particles, got {}",
                self.n
            )));
        }
        Ok(self.covariance_about(&self.mean()))
    }

    pub(crate) fn covariance_about(&self, mean: &DVector<f64>) -> DMatrix<f64> {
        let d = self.d;
        let mut cov = DMatrix::zeros(d, d);
        let mut centered = vec![0.0; d];
        for r in self.rows() {
            for k in 0..d {
                centered[k] = r[k] - mean[k];
            }
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        let denom = (self.n - 1) as f64;
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        cov
    }

    /// Coordinate `k` of every particle.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn translated(&self, shift: &[f64]) -> Particles {
        let mut out = self.clone();
        for r in out.rows_mut() {
            for (x, s) in r.iter_mut().zip(shift) {
                *x += s;
            }
        }
        out
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Particles {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Particles {
            n: self.n,
            d: self.d,
            data,
        }
    }
}

/// Positions, momenta and time of the interacting particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub positions: Particles,
    pub momenta: Particles,
    pub time: f64,
}

impl Ensemble {
    pub fn new(positions: Particles, momenta: Particles, time: f64) -> Result<Self> {
        if !positions.same_shape(&momenta) {
            return Err(Error::Usage(format!(
                "positions are {}x{} but momenta are {}x{}",
                positions.len(),
                positions.dim(),
                momenta.len(),
                momenta.dim()
            )));
        }
        if positions.is_empty() || positions.dim() == 0 {
            return Err(Error::Usage("ensemble needs N >= 1 and d >= 1".into()));
        }
        if let Some(i) = positions.first_non_finite() {
            return Err(Error::Usage(format!("position of particle {i} is not finite")));
        }
        if let Some(i) = momenta.first_non_finite() {
            return Err(Error::Usage(format!("momentum of particle {i} is not finite")));
        }
        if !time.is_finite() {
            return Err(Error::Usage(format!("time must be finite, got {time}")));
        }
        Ok(Self {
            positions,
            momenta,
            time,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }
}
