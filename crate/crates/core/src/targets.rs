//! Target and initial distributions.
//!
//! A target `rho_inf` enters the dynamics only through its potential
//! `f = -log rho_inf` and the gradient `grad f`. The [`Potential`] trait is
//! that interface; [`Target`] is the closed set of targets the experiments
//! use (a Gaussian and a Gaussian mixture), each with exact expectations of
//! a few test functions for error measurement.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::ensemble::{Ensemble, Particles};
use crate::error::{Error, Result};
use crate::rng::Noise;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Potential `f = -log rho` of a target density.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `grad f(x)` into `out`. Dimensions are the caller's responsibility.
    fn grad_potential_into(&self, x: &[f64], out: &mut [f64]);

    /// Normalized `log rho(x)`. Dimensions are the caller's responsibility.
    fn log_density_unchecked(&self, x: &[f64]) -> f64;

    fn grad_potential(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; x.len()];
        self.grad_potential_into(x, &mut out);
        Ok(out)
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_density_unchecked(x))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Usage(format!(
                "point has dimension {}, target has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Gradient at every row of `positions`.
    fn grad_potential_rows(&self, positions: &Particles) -> Result<Particles> {
        if positions.dim() != self.dim() {
            return Err(Error::Usage(format!(
                "particles have dimension {}, target has dimension {}",
                positions.dim(),
                self.dim()
            )));
        }
        let mut out = Particles::zeros(positions.len(), positions.dim());
        for (x, g) in positions.rows().zip(out.rows_mut()) {
            self.grad_potential_into(x, g);
        }
        Ok(out)
    }
}

/// Test functions `psi` whose expectation under the target is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    /// `psi(x) = x 1{x >= 0}`
    HalfRectifiedIdentity,
    Mean,
    SecondMoment,
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::HalfRectifiedIdentity => {
                if x >= 0.0 {
                    x
                } else {
                    0.0
                }
            }
            TestFunction::Mean => x,
            TestFunction::SecondMoment => x * x,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::HalfRectifiedIdentity => "half_rectified_identity",
            TestFunction::Mean => "mean",
            TestFunction::SecondMoment => "second_moment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "half_rectified_identity" => Some(TestFunction::HalfRectifiedIdentity),
            "mean" => Some(TestFunction::Mean),
            "second_moment" => Some(TestFunction::SecondMoment),
            _ => None,
        }
    }

    /// Empirical average of `psi` over the first coordinate of every particle.
    pub fn empirical_mean(&self, positions: &Particles) -> f64 {
        let sum: f64 = positions.rows().map(|r| self.eval(r[0])).sum();
        sum / positions.len() as f64
    }

    /// Exact expectation under `N(mu, var)`.
    fn gaussian_expectation(&self, mu: f64, var: f64) -> f64 {
        match self {
            TestFunction::HalfRectifiedIdentity => {
                let sigma = var.sqrt();
                let z = mu / sigma;
                mu * std_normal_cdf(z) + sigma * std_normal_pdf(z)
            }
            TestFunction::Mean => mu,
            TestFunction::SecondMoment => mu * mu + var,
        }
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Multivariate normal `N(mean, cov)` with cached factorization.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

/// Gaussian target `N(x_bar, Q)` with potential `1/2 (x - x_bar)^T Q^-1 (x - x_bar)`.
pub type GaussianTarget = Gaussian;

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Usage(format!("{what} must be square")));
    }
    let scale = m.amax().max(1.0);
    for a in 0..m.nrows() {
        for b in 0..a {
            if (m[(a, b)] - m[(b, a)]).abs() > 1e-12 * scale {
                return Err(Error::Domain(format!("{what} is not symmetric")));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} has non-finite entries")));
    }
    Ok(())
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Usage("Gaussian needs dimension >= 1".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Usage(format!(
                "covariance is {}x{}, mean has dimension {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("mean has non-finite entries".into()));
        }
        check_symmetric(&cov, "covariance")?;
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::Domain("covariance is not positive definite".into())
        })?;
        let chol_lower = chol.l();
        let log_det: f64 = 2.0 * chol_lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
            chol_lower,
            precision,
            log_norm: -0.5 * d as f64 * LN_2PI - 0.5 * log_det,
        })
    }

    /// One-dimensional `N(mean, var)`.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean], DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det_cov(&self) -> f64 {
        -2.0 * self.log_norm - self.dim() as f64 * LN_2PI
    }

    fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut q = 0.0;
        for a in 0..d {
            let da = x[a] - self.mean[a];
            let mut row = 0.0;
            for b in 0..d {
                row += self.precision[(a, b)] * (x[b] - self.mean[b]);
            }
            q += da * row;
        }
        q
    }

    pub fn sample_into<N: Noise + ?Sized>(&self, noise: &mut N, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| noise.standard_normal()).collect();
        for a in 0..d {
            let mut v = self.mean[a];
            for b in 0..=a {
                v += self.chol_lower[(a, b)] * z[b];
            }
            out[a] = v;
        }
    }

    pub fn sample_n<N: Noise + ?Sized>(&self, n: usize, noise: &mut N) -> Result<Particles> {
        if n == 0 {
            return Err(Error::Usage("sample count must be >= 1".into()));
        }
        let mut out = Particles::zeros(n, self.dim());
        for r in out.rows_mut() {
            self.sample_into(noise, r);
        }
        Ok(out)
    }

    pub fn exact_expectation(&self, psi: TestFunction) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::Capability(format!(
                "closed-form expectation of {} is only available in d = 1",
                psi.name()
            )));
        }
        Ok(psi.gaussian_expectation(self.mean[0], self.cov[(0, 0)]))
    }
}

impl Potential for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn grad_potential_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        if d == 1 {
            out[0] = self.precision[(0, 0)] * (x[0] - self.mean[0]);
            return;
        }
        for a in 0..d {
            let mut v = 0.0;
            for b in 0..d {
                v += self.precision[(a, b)] * (x[b] - self.mean[b]);
            }
            out[a] = v;
        }
    }

    fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.quad_form(x)
    }
}

/// Finite Gaussian mixture `sum_k w_k N(mu_k, Q_k)`.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTarget {
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl GaussianMixtureTarget {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::Usage(format!(
                "mixture has {} weights and {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("mixture weights must be > 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}, not 1")));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::Usage("mixture components differ in dimension".into()));
        }
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            components,
        })
    }

    /// `1/2 N(-m, sigma2) + 1/2 N(m, sigma2)` in one dimension.
    pub fn symmetric_1d(m: f64, sigma2: f64) -> Result<Self> {
        Self::new(
            vec![0.5, 0.5],
            vec![Gaussian::scalar(-m, sigma2)?, Gaussian::scalar(m, sigma2)?],
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    fn max_log_term(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| lw + c.log_density_unchecked(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sample_into<N: Noise + ?Sized>(&self, u: f64, noise: &mut N, out: &mut [f64]) {
        let mut acc = 0.0;
        let last = self.components.len() - 1;
        for (k, (w, c)) in self.weights.iter().zip(&self.components).enumerate() {
            acc += w;
            if u < acc || k == last {
                c.sample_into(noise, out);
                return;
            }
        }
    }

    pub fn exact_expectation(&self, psi: TestFunction) -> Result<f64> {
        let mut total = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            total += w * c.exact_expectation(psi)?;
        }
        Ok(total)
    }
}

impl Potential for GaussianMixtureTarget {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Responsibility form `sum_k r_k(x) Q_k^-1 (x - mu_k)`, with the
    /// responsibilities normalized through a log-sum-exp.
    fn grad_potential_into(&self, x: &[f64], out: &mut [f64]) {
        let mx = self.max_log_term(x);
        let mut z = 0.0;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut g = vec![0.0; x.len()];
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let r = (lw + c.log_density_unchecked(x) - mx).exp();
            z += r;
            c.grad_potential_into(x, &mut g);
            for (o, gk) in out.iter_mut().zip(&g) {
                *o += r * gk;
            }
        }
        out.iter_mut().for_each(|v| *v /= z);
    }

    fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let mx = self.max_log_term(x);
        let s: f64 = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| (lw + c.log_density_unchecked(x) - mx).exp())
            .sum();
        mx + s.ln()
    }
}

#[derive(Debug, Clone)]
pub enum Target {
    Gaussian(GaussianTarget),
    Mixture(GaussianMixtureTarget),
}

impl Target {
    pub fn exact_expectation(&self, psi: TestFunction) -> Result<f64> {
        match self {
            Target::Gaussian(g) => g.exact_expectation(psi),
            Target::Mixture(m) => m.exact_expectation(psi),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianTarget> {
        match self {
            Target::Gaussian(g) => Some(g),
            Target::Mixture(_) => None,
        }
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        match self {
            Target::Gaussian(g) => g.sample_into(rng, &mut out),
            Target::Mixture(m) => {
                let u: f64 = rng.random();
                m.sample_into(u, rng, &mut out)
            }
        }
        out
    }
}

impl Potential for Target {
    fn dim(&self) -> usize {
        match self {
            Target::Gaussian(g) => Potential::dim(g),
            Target::Mixture(m) => m.dim(),
        }
    }

    fn grad_potential_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Target::Gaussian(g) => g.grad_potential_into(x, out),
            Target::Mixture(m) => m.grad_potential_into(x, out),
        }
    }

    fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Target::Gaussian(g) => g.log_density_unchecked(x),
            Target::Mixture(m) => m.log_density_unchecked(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `E[f(X)]` under the target, with its standard error.
pub fn monte_carlo_expectation<F, R>(target: &Target, f: F, n: usize, rng: &mut R) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64,
    R: rand::Rng,
{
    if n < 2 {
        return Err(Error::Usage("Monte Carlo needs at least 2 draws".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n {
        let v = f(&target.sample(rng));
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
    })
}

/// Convex potential `phi_0` whose gradient gives the initial momenta.
#[derive(Debug, Clone)]
pub enum Phi0 {
    /// `phi_0(x) = slope . x + offset`
    Linear { slope: Vec<f64>, offset: f64 },
    /// `phi_0(x) = 1/2 x^T A x` with `A` positive semidefinite.
    Quadratic(DMatrix<f64>),
}

/// Initial law `rho_0 = N(mean, cov)` and the momentum map `grad phi_0`.
#[derive(Debug, Clone)]
pub struct GaussianInitial {
    dist: Gaussian,
    phi0: Phi0,
}

impl GaussianInitial {
    pub fn new(dist: Gaussian, phi0: Phi0) -> Result<Self> {
        let d = dist.dim();
        match &phi0 {
            Phi0::Linear { slope, offset } => {
                if slope.len() != d {
                    return Err(Error::Usage(format!(
                        "phi0 slope has dimension {}, expected {d}",
                        slope.len()
                    )));
                }
                if slope.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
                    return Err(Error::Domain("phi0 coefficients must be finite".into()));
                }
            }
            Phi0::Quadratic(a) => {
                if a.nrows() != d || a.ncols() != d {
                    return Err(Error::Usage(format!("phi0 matrix must be {d}x{d}")));
                }
                check_symmetric(a, "phi0 matrix")?;
                let min_eig = a.clone().symmetric_eigen().eigenvalues.min();
                if min_eig < -1e-12 * a.amax().max(1.0) {
                    return Err(Error::Domain(format!(
                        "phi0 matrix is not positive semidefinite (smallest eigenvalue {min_eig:e})"
                    )));
                }
            }
        }
        Ok(Self { dist, phi0 })
    }

    pub fn dist(&self) -> &Gaussian {
        &self.dist
    }

    pub fn phi0(&self) -> &Phi0 {
        &self.phi0
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    pub fn sample_initial<N: Noise + ?Sized>(&self, n: usize, noise: &mut N) -> Result<Particles> {
        self.dist.sample_n(n, noise)
    }

    /// `grad phi_0(x)`.
    pub fn initial_momentum(&self, x: &[f64]) -> Vec<f64> {
        match &self.phi0 {
            Phi0::Linear { slope, .. } => slope.clone(),
            Phi0::Quadratic(a) => (0..a.nrows())
                .map(|r| (0..a.ncols()).map(|c| a[(r, c)] * x[c]).sum())
                .collect(),
        }
    }

    pub fn initial_momenta(&self, positions: &Particles) -> Particles {
        let mut out = Particles::zeros(positions.len(), positions.dim());
        for (x, y) in positions.rows().zip(out.rows_mut()) {
            y.copy_from_slice(&self.initial_momentum(x));
        }
        out
    }

    /// Samples positions and attaches `Y_0 = grad phi_0(X_0)` at time `t0`.
    pub fn initial_ensemble<N: Noise + ?Sized>(&self, n: usize, t0: f64, noise: &mut N) -> Result<Ensemble> {
        let x = self.sample_initial(n, noise)?;
        let y = self.initial_momenta(&x);
        Ensemble::new(x, y, t0)
    }
}
