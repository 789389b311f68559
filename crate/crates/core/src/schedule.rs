//! Ideal-scaling schedule for the accelerated flow.
//!
//! With exponent `p >= 2`, scale `C > 0` the time-varying parameters are
//!
//! ```text
//! alpha(t) = log p - log t
//! beta(t)  = p log t + log C
//! gamma(t) = p log t
//! ```
//!
//! and the Hamiltonian dynamics only ever need two combinations of them:
//! the velocity coefficient `exp(alpha - gamma) = p / t^(p+1)` and the force
//! coefficient `exp(alpha + beta + gamma) = C p t^(2p-1)`. Both are evaluated
//! through their closed forms.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSchedule {
    p: f64,
    c: f64,
    t0: f64,
}

impl Default for ScalingSchedule {
    fn default() -> Self {
        Self {
            p: 2.0,
            c: 0.625,
            t0: 1.0,
        }
    }
}

impl ScalingSchedule {
    pub fn new(p: f64, c: f64, t0: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::Domain(format!("exponent p must be >= 2, got {p}")));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("scale C must be > 0, got {c}")));
        }
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::Domain(format!("start time t0 must be > 0, got {t0}")));
        }
        Ok(Self { p, c, t0 })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    fn check_time(t: f64) -> Result<()> {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("time must be finite and > 0, got {t}")))
        }
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.p.ln() - t.ln())
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.p * t.ln() + self.c.ln())
    }

    pub fn gamma(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.p * t.ln())
    }

    /// `exp(alpha - gamma) = p / t^(p+1)`, multiplies the momentum in the position equation.
    pub fn velocity_coeff(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.p / t.powf(self.p + 1.0))
    }

    /// `exp(alpha + beta + gamma) = C p t^(2p-1)`, multiplies the force in the momentum equation.
    pub fn force_coeff(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.c * self.p * t.powf(2.0 * self.p - 1.0))
    }

    /// `exp(-gamma) = t^(-p)`, the momentum weight inside the Lyapunov energy.
    pub fn inv_exp_gamma(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(t.powf(-self.p))
    }

    /// `exp(beta) = C t^p`, the weight on the functional gap inside the Lyapunov energy.
    pub fn exp_beta(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.c * t.powf(self.p))
    }
}
