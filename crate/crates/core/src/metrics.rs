//! Run diagnostics: KL estimates, the Lyapunov energy, the 1-d Gaussian
//! transport map, mean-squared error over runs, power-law slopes and timing
//! summaries. Also the per-iteration [`RunRecord`] and its CSV encoding.

use std::fmt::Write as _;

use crate::ensemble::{Ensemble, Particles};
use crate::error::{Error, Result};
use crate::interaction::DEFAULT_RELATIVE_JITTER;
use crate::schedule::ScalingSchedule;
use crate::targets::{GaussianTarget, Potential};

pub const CSV_HEADER: &str = "iter,t,kl,lyapunov,mse,wall_nanos";

/// Minimum grid mass for the KDE-based KL estimate.
pub const KDE_MIN_MASS: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iteration: usize,
    pub time_t: f64,
    pub kl_estimate: Option<f64>,
    pub lyapunov: Option<f64>,
    pub mse_contrib: Option<f64>,
    pub wall_nanos: u64,
    pub config_digest: String,
}

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            fmt_f64(self.time_t),
            fmt_opt(self.kl_estimate),
            fmt_opt(self.lyapunov),
            fmt_opt(self.mse_contrib),
            self.wall_nanos
        )
    }
}

/// CSV document (header plus one row per record).
pub fn records_to_csv<'a, I: IntoIterator<Item = &'a RunRecord>>(records: I) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

fn gaussian_fit_1d_or_nd(positions: &Particles) -> Result<(nalgebra::DVector<f64>, nalgebra::DMatrix<f64>)> {
    let mean = positions.mean();
    let cov = positions.covariance_about(&mean);
    Ok((mean, cov))
}

/// KL divergence `KL(N(m, Sigma) || target)` of the Gaussian fitted to the
/// particles (unbiased covariance).
pub fn kl_gaussian_fit(positions: &Particles, target: &GaussianTarget) -> Result<f64> {
    let d = positions.dim();
    let n = positions.len();
    if d != target.dim() {
        return Err(Error::Usage(format!(
            "particles have dimension {d}, target has dimension {}",
            target.dim()
        )));
    }
    if n < d + 2 {
        return Err(Error::Usage(format!(
            "Gaussian-fit KL needs at least d + 2 = {} particles, got {n}",
            d + 2
        )));
    }
    let (m, mut sigma) = gaussian_fit_1d_or_nd(positions)?;
    let chol = match sigma.clone().cholesky() {
        Some(c) => c,
        None => {
            let j = DEFAULT_RELATIVE_JITTER * sigma.trace() / d as f64;
            for k in 0..d {
                sigma[(k, k)] += j;
            }
            sigma.clone().cholesky().ok_or_else(|| {
                Error::Numerical("empirical covariance is degenerate even after jitter".into())
            })?
        }
    };
    let log_det_sigma: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let q_inv = target.precision();
    let trace = (q_inv * &sigma).trace();
    let diff = target.mean() - &m;
    let maha = (diff.transpose() * q_inv * &diff)[(0, 0)];
    let kl = 0.5 * (trace + maha - d as f64 + target.log_det_cov() - log_det_sigma);
    // Round-off can push an exact match marginally below zero.
    Ok(kl.max(0.0))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Silverman's rule of thumb `0.9 min(sd, IQR / 1.34) n^(-1/5)` on the first coordinate.
pub fn silverman_bandwidth(positions: &Particles) -> Result<f64> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::Usage("bandwidth rule needs at least 2 particles".into()));
    }
    let mut xs = positions.column(0);
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    xs.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&xs, 0.75) - quantile_sorted(&xs, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::Numerical(format!("degenerate ensemble gives bandwidth {h}")))
    }
}

/// `KL(rho_hat || target)` with `rho_hat` a Gaussian KDE of the particles,
/// integrated by the trapezoid rule on a grid covering the data. d = 1 only.
pub fn kl_kde<P: Potential + ?Sized>(positions: &Particles, target: &P, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Domain(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    if positions.dim() != 1 || target.dim() != 1 {
        return Err(Error::Capability("KDE-based KL is implemented for d = 1 only".into()));
    }
    if let Some(i) = positions.first_non_finite() {
        return Err(Error::Numerical(format!("position of particle {i} is not finite")));
    }
    let mut xs = positions.column(0);
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let lo = xs[0] - 9.0 * bandwidth;
    let hi = xs[n - 1] + 9.0 * bandwidth;
    let step_target = bandwidth / 20.0;
    let cells = (((hi - lo) / step_target).ceil() as usize).clamp(2000, 400_000);
    let dx = (hi - lo) / cells as f64;

    let norm = 1.0 / (n as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let cutoff = 9.0 * bandwidth;
    let inv_h = 1.0 / bandwidth;
    let (mut mass, mut kl) = (0.0, 0.0);
    let mut start = 0usize;
    for k in 0..=cells {
        let x = lo + k as f64 * dx;
        while start < n && xs[start] < x - cutoff {
            start += 1;
        }
        let mut s = 0.0;
        for &xi in &xs[start..] {
            if xi > x + cutoff {
                break;
            }
            let z = (x - xi) * inv_h;
            s += (-0.5 * z * z).exp();
        }
        let rho = s * norm;
        let w = if k == 0 || k == cells { 0.5 * dx } else { dx };
        mass += w * rho;
        if rho > 0.0 {
            kl += w * rho * (rho.ln() - target.log_density_unchecked(&[x]));
        }
    }
    if mass < KDE_MIN_MASS {
        return Err(Error::Coverage {
            mass,
            required: KDE_MIN_MASS,
        });
    }
    Ok(kl)
}

/// Affine map `x -> shift + scale * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub shift: f64,
    pub scale: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.shift + self.scale * x
    }
}

/// Optimal transport map from `N(m, var)` to the 1-d Gaussian target:
/// `T(x) = x_bar + sqrt(Q / var) (x - m)`.
pub fn ot_map_gaussian_1d(m: f64, var: f64, target: &GaussianTarget) -> Result<AffineMap> {
    if target.dim() != 1 {
        return Err(Error::Capability("closed-form transport map needs d = 1".into()));
    }
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Domain(format!("source variance must be > 0, got {var}")));
    }
    let q = target.cov()[(0, 0)];
    let scale = (q / var).sqrt();
    Ok(AffineMap {
        shift: target.mean()[0] - scale * m,
        scale,
    })
}

fn empirical_moments_1d(positions: &Particles) -> Result<(f64, f64)> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::Usage("need at least 2 particles for empirical moments".into()));
    }
    let xs = positions.as_slice();
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((m, var))
}

/// Lyapunov energy
/// `(1/N) sum_i 1/2 |X_i + e^{-gamma_t} Y_i - T(X_i)|^2 + e^{beta_t} gap`
/// with `T` the Gaussian transport map fitted to the ensemble's moments and
/// `gap = F(rho_t) - F(rho_inf)`, where `F(rho_inf) = 0` for relative entropy.
pub fn lyapunov_energy(
    ens: &Ensemble,
    schedule: &ScalingSchedule,
    target: &GaussianTarget,
    functional_gap: f64,
) -> Result<f64> {
    if ens.dim() != 1 {
        return Err(Error::Capability("Lyapunov energy is evaluated in d = 1 only".into()));
    }
    let (m, var) = empirical_moments_1d(&ens.positions)?;
    let t_map = ot_map_gaussian_1d(m, var, target)?;
    let w = schedule.inv_exp_gamma(ens.time)?;
    let transport: f64 = ens
        .positions
        .as_slice()
        .iter()
        .zip(ens.momenta.as_slice())
        .map(|(&x, &y)| 0.5 * (x + w * y - t_map.apply(x)).powi(2))
        .sum::<f64>()
        / ens.len() as f64;
    Ok(transport + schedule.exp_beta(ens.time)? * functional_gap)
}

/// Finite-difference proxy of `E[(X + e^{-gamma} Y - T_t(X)) . dT_t/dt(X)]`
/// between two consecutive d = 1 ensembles, with `dT/dt` taken at fixed `x`.
pub fn transport_assumption_proxy(prev: &Ensemble, next: &Ensemble, schedule: &ScalingSchedule, target: &GaussianTarget) -> Result<f64> {
    let dt = next.time - prev.time;
    if !(dt > 0.0) {
        return Err(Error::Usage("ensembles must be in increasing time order".into()));
    }
    let (m0, v0) = empirical_moments_1d(&prev.positions)?;
    let (m1, v1) = empirical_moments_1d(&next.positions)?;
    let t0 = ot_map_gaussian_1d(m0, v0, target)?;
    let t1 = ot_map_gaussian_1d(m1, v1, target)?;
    let w = schedule.inv_exp_gamma(next.time)?;
    let s: f64 = next
        .positions
        .as_slice()
        .iter()
        .zip(next.momenta.as_slice())
        .map(|(&x, &y)| (x + w * y - t1.apply(x)) * (t1.apply(x) - t0.apply(x)) / dt)
        .sum();
    Ok(s / next.len() as f64)
}

/// Per-run estimates `(1/N) sum_i psi(X_i)` and the exact value they target.
#[derive(Debug, Clone, PartialEq)]
pub struct MseAccumulator {
    estimates: Vec<f64>,
    truth: f64,
}

impl MseAccumulator {
    pub fn new(truth: f64) -> Self {
        Self {
            estimates: Vec::new(),
            truth,
        }
    }

    pub fn with_estimates(truth: f64, estimates: Vec<f64>) -> Self {
        Self { estimates, truth }
    }

    pub fn push(&mut self, estimate: f64) {
        self.estimates.push(estimate);
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn truth(&self) -> f64 {
        self.truth
    }

    pub fn mse(&self) -> Result<f64> {
        if self.estimates.is_empty() {
            return Err(Error::Usage("MSE of an empty accumulator".into()));
        }
        if !self.truth.is_finite() {
            return Err(Error::Domain(format!("reference value is not finite: {}", self.truth)));
        }
        let s: f64 = self.estimates.iter().map(|e| (e - self.truth).powi(2)).sum();
        Ok(s / self.estimates.len() as f64)
    }
}

/// Least-squares slope of `log value` against `log t` over points with
/// `t_lo <= t <= t_hi`.
pub fn rate_slope(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < 10 {
        return Err(Error::Usage(format!(
            "slope fit needs at least 10 points in [{}, {}], got {}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    loglog_slope(&pts)
}

/// Least-squares slope of `log y` against `log x` over all points; needs at
/// least two distinct abscissae.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if let Some((t, v)) = points.iter().find(|(t, v)| !(*v > 0.0) || !(*t > 0.0)) {
        return Err(Error::Domain(format!("non-positive point ({t}, {v}) in slope fit")));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(t, v)| (t.ln(), v.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Usage("slope fit needs at least two distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Upper envelope `max_{s >= t} value(s)`, which smooths out oscillatory dips
/// before a slope fit.
pub fn upper_envelope(series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = series.to_vec();
    let mut running = f64::NEG_INFINITY;
    for p in out.iter_mut().rev() {
        running = running.max(p.1);
        p.1 = running;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSummary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Mean, median and 95th percentile of per-iteration wall time in
/// nanoseconds, excluding the setup record (iteration 0).
pub fn wall_time_per_iteration(records: &[RunRecord]) -> Result<TimingSummary> {
    if records.len() < 2 {
        return Err(Error::Usage("timing summary needs at least 2 iterations".into()));
    }
    let mut v: Vec<f64> = records
        .iter()
        .filter(|r| r.iteration != 0)
        .map(|r| r.wall_nanos as f64)
        .collect();
    if v.is_empty() {
        return Err(Error::Usage("no timed iterations after setup".into()));
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    Ok(TimingSummary {
        mean,
        p50: quantile_sorted(&v, 0.5),
        p95: quantile_sorted(&v, 0.95),
    })
}
