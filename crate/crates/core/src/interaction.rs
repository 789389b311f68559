//! Empirical approximations of the interaction term `I(x) ~ grad log rho_t(x)`.
//!
//! Three estimators are provided, all computed from the particle positions
//! alone:
//!
//! * **Gaussian closure**: `I(x) = -Sigma^-1 (x - m)` with the empirical mean
//!   `m` and unbiased covariance `Sigma` of the ensemble.
//! * **Diffusion map**: with `g(x, y) = exp(-|x - y|^2 / (4 eps))` and the
//!   data-dependent kernel `k(x, y) = g(x, y) / sqrt(sum_l g(y, X_l))`,
//!
//!   ```text
//!   I(X_i) = (1/eps) sum_j k(X_i, X_j) (X_j - X_i) / sum_j k(X_i, X_j)
//!   ```
//! * **Density estimation**: the same weighted difference with the raw kernel
//!   `g` and prefactor `1/(2 eps)`.
//!
//! Kernel sums run over every particle including `j = i`. The `N x N` kernel
//! matrix is built once per evaluation and reused for both the normalization
//! and the weighted sums. Each row is reduced sequentially in index order, so
//! results do not depend on how rows are scheduled.

use nalgebra::DMatrix;

use crate::ensemble::Particles;
use crate::error::{Error, Result};

/// Above this dimension squared distances use `|x|^2 + |y|^2 - 2 x.y`.
const EXPANDED_DISTANCE_MIN_DIM: usize = 9;

/// Default covariance jitter relative to `trace(Sigma) / d`.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionKind {
    None,
    Gaussian,
    DiffusionMap { epsilon: f64 },
    DensityEstimation { epsilon: f64 },
}

impl InteractionKind {
    pub fn name(&self) -> &'static str {
        match self {
            InteractionKind::None => "none",
            InteractionKind::Gaussian => "gaussian",
            InteractionKind::DiffusionMap { .. } => "dm",
            InteractionKind::DensityEstimation { .. } => "de",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            InteractionKind::DiffusionMap { epsilon } | InteractionKind::DensityEstimation { epsilon } => {
                Some(*epsilon)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionApproximator {
    kind: InteractionKind,
    /// Absolute covariance jitter; `None` selects `1e-9 * trace(Sigma) / d`.
    jitter: Option<f64>,
}

impl InteractionApproximator {
    pub fn new(kind: InteractionKind, jitter: Option<f64>) -> Result<Self> {
        if let Some(eps) = kind.epsilon() {
            check_epsilon(eps)?;
        }
        if let Some(j) = jitter {
            if !(j >= 0.0) || !j.is_finite() {
                return Err(Error::Domain(format!("jitter must be finite and >= 0, got {j}")));
            }
        }
        Ok(Self { kind, jitter })
    }

    pub fn none() -> Self {
        Self {
            kind: InteractionKind::None,
            jitter: None,
        }
    }

    pub fn gaussian() -> Self {
        Self {
            kind: InteractionKind::Gaussian,
            jitter: None,
        }
    }

    pub fn diffusion_map(epsilon: f64) -> Result<Self> {
        Self::new(InteractionKind::DiffusionMap { epsilon }, None)
    }

    pub fn density_estimation(epsilon: f64) -> Result<Self> {
        Self::new(InteractionKind::DensityEstimation { epsilon }, None)
    }

    pub fn kind(&self) -> InteractionKind {
        self.kind
    }

    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    pub fn is_none(&self) -> bool {
        self.kind == InteractionKind::None
    }

    /// Evaluates the selected estimator at every particle.
    pub fn apply(&self, positions: &Particles) -> Result<Particles> {
        match self.kind {
            InteractionKind::None => Ok(Particles::zeros(positions.len(), positions.dim())),
            InteractionKind::Gaussian => gaussian_interaction(positions, self.jitter),
            InteractionKind::DiffusionMap { epsilon } => diffusion_map_interaction(positions, epsilon),
            InteractionKind::DensityEstimation { epsilon } => density_estimation_interaction(positions, epsilon),
        }
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel bandwidth epsilon must be > 0, got {eps}")))
    }
}

fn check_finite(positions: &Particles) -> Result<()> {
    match positions.first_non_finite() {
        Some(i) => Err(Error::Numerical(format!("position of particle {i} is not finite"))),
        None => Ok(()),
    }
}

/// `-(Sigma + jitter I)^-1 (X_i - m)` for every particle.
pub fn gaussian_interaction(positions: &Particles, jitter: Option<f64>) -> Result<Particles> {
    let n = positions.len();
    let d = positions.dim();
    if n < 2 {
        return Err(Error::Usage(format!(
            "Gaussian interaction needs at least 2 particles, got {n}"
        )));
    }
    check_finite(positions)?;
    let mean = positions.mean();
    let mut cov = positions.covariance_about(&mean);
    let jitter = jitter.unwrap_or_else(|| DEFAULT_RELATIVE_JITTER * cov.trace() / d as f64);
    for k in 0..d {
        cov[(k, k)] += jitter;
    }
    let precision = invert_spd(&cov)?;

    let mut out = Particles::zeros(n, d);
    if d == 1 {
        let p = precision[(0, 0)];
        for (x, o) in positions.rows().zip(out.rows_mut()) {
            o[0] = -p * (x[0] - mean[0]);
        }
        return Ok(out);
    }
    let mut centered = vec![0.0; d];
    for (x, o) in positions.rows().zip(out.rows_mut()) {
        for k in 0..d {
            centered[k] = x[k] - mean[k];
        }
        for a in 0..d {
            let mut v = 0.0;
            for b in 0..d {
                v += precision[(a, b)] * centered[b];
            }
            o[a] = -v;
        }
    }
    Ok(out)
}

fn invert_spd(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = cov.clone().cholesky();
    match chol {
        Some(c) => Ok(c.inverse()),
        None => {
            let min_eig = cov.clone().symmetric_eigen().eigenvalues.min();
            Err(Error::Numerical(format!(
                "regularized empirical covariance is singular (smallest eigenvalue {min_eig:e})"
            )))
        }
    }
}

/// Symmetric Gaussian kernel matrix `g(X_i, X_j) = exp(-|X_i - X_j|^2 / (4 eps))`,
/// stored row-major.
pub fn gaussian_kernel_matrix(positions: &Particles, epsilon: f64) -> Vec<f64> {
    let n = positions.len();
    let d = positions.dim();
    let scale = -1.0 / (4.0 * epsilon);
    let mut g = vec![0.0; n * n];
    let norms: Vec<f64> = if d >= EXPANDED_DISTANCE_MIN_DIM {
        positions.rows().map(|r| r.iter().map(|v| v * v).sum()).collect()
    } else {
        Vec::new()
    };
    for i in 0..n {
        g[i * n + i] = 1.0;
        let xi = positions.row(i);
        for j in (i + 1)..n {
            let xj = positions.row(j);
            let sq = if d >= EXPANDED_DISTANCE_MIN_DIM {
                let dot: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                (norms[i] + norms[j] - 2.0 * dot).max(0.0)
            } else {
                xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum()
            };
            let v = (sq * scale).exp();
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    g
}

/// Row `i` of the output is `prefactor * sum_j w_ij (X_j - X_i) / sum_j w_ij`
/// where `w_ij = g_ij * col_weight[j]`.
fn weighted_difference(
    positions: &Particles,
    g: &[f64],
    col_weight: Option<&[f64]>,
    prefactor: f64,
    epsilon: f64,
) -> Result<Particles> {
    let n = positions.len();
    let d = positions.dim();
    let mut out = Particles::zeros(n, d);
    let mut acc = vec![0.0; d];
    for i in 0..n {
        let xi = positions.row(i);
        let grow = &g[i * n..(i + 1) * n];
        acc.iter_mut().for_each(|v| *v = 0.0);
        let mut den = 0.0;
        for j in 0..n {
            let w = match col_weight {
                Some(cw) => grow[j] * cw[j],
                None => grow[j],
            };
            den += w;
            let xj = positions.row(j);
            for k in 0..d {
                acc[k] += w * (xj[k] - xi[k]);
            }
        }
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::Numerical(format!(
                "kernel normalization for particle {i} underflowed (sum = {den:e}); \
                 try a larger epsilon than {epsilon}"
            )));
        }
        let o = out.row_mut(i);
        for k in 0..d {
            o[k] = prefactor * acc[k] / den;
        }
    }
    Ok(out)
}

/// Diffusion-map estimate of `grad log rho` at every particle.
pub fn diffusion_map_interaction(positions: &Particles, epsilon: f64) -> Result<Particles> {
    check_epsilon(epsilon)?;
    check_finite(positions)?;
    let n = positions.len();
    let g = gaussian_kernel_matrix(positions, epsilon);
    // Column sums equal row sums since g is symmetric.
    let mut inv_sqrt_col = Vec::with_capacity(n);
    for j in 0..n {
        let s: f64 = g[j * n..(j + 1) * n].iter().sum();
        inv_sqrt_col.push(1.0 / s.sqrt());
    }
    weighted_difference(positions, &g, Some(&inv_sqrt_col), 1.0 / epsilon, epsilon)
}

/// Kernel-density estimate of `grad log rho` at every particle.
pub fn density_estimation_interaction(positions: &Particles, epsilon: f64) -> Result<Particles> {
    check_epsilon(epsilon)?;
    check_finite(positions)?;
    let g = gaussian_kernel_matrix(positions, epsilon);
    weighted_difference(positions, &g, None, 1.0 / (2.0 * epsilon), epsilon)
}
