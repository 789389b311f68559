//! Time steppers.
//!
//! * [`AcceleratedFlow`] integrates the interacting particle system
//!
//!   ```text
//!   dX/dt = p / t^(p+1) * Y
//!   dY/dt = -C p t^(2p-1) * (grad f(X) + I(X))
//!   ```
//!
//!   with the kick-drift-kick staging: half kick at `t + dt/2`, drift, fresh
//!   force at the new positions, second half kick. The drift uses either the
//!   pre-kick momentum ([`XUpdate::PaperVerbatim`]) or the half-kicked one
//!   ([`XUpdate::HalfStep`], the leapfrog).
//! * [`nesterov_ode_step`] is the same staging for a single point with no
//!   interaction.
//! * [`langevin_step`], [`underdamped_step`] and
//!   [`deterministic_first_order_step`] are the Euler-Maruyama baselines.
//!
//! Every stepper checks the new state for non-finite coordinates and fails
//! with [`Error::Divergence`] instead of propagating NaN.

use crate::ensemble::{Ensemble, Particles};
use crate::error::{Error, Result};
use crate::interaction::InteractionApproximator;
use crate::rng::Noise;
use crate::schedule::ScalingSchedule;
use crate::targets::Potential;

/// Which momentum the position drift uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XUpdate {
    /// `X_{k+1} = X_k + v(t_{k+1/2}) Y_k dt`
    PaperVerbatim,
    /// `X_{k+1} = X_k + v(t_{k+1/2}) Y_{k+1/2} dt` (leapfrog)
    HalfStep,
}

impl XUpdate {
    pub fn name(&self) -> &'static str {
        match self {
            XUpdate::PaperVerbatim => "paper",
            XUpdate::HalfStep => "halfstep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceleratedStepperConfig {
    pub schedule: ScalingSchedule,
    pub dt: f64,
    pub x_update: XUpdate,
    pub approx: InteractionApproximator,
}

impl AcceleratedStepperConfig {
    pub fn new(
        schedule: ScalingSchedule,
        dt: f64,
        x_update: XUpdate,
        approx: InteractionApproximator,
    ) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self {
            schedule,
            dt,
            x_update,
            approx,
        })
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("step size dt must be > 0, got {dt}")))
    }
}

fn check_finite(what: &str, p: &Particles, iteration: usize) -> Result<()> {
    match p.first_non_finite() {
        Some(i) => Err(Error::Divergence {
            iteration,
            detail: format!("{what} of particle {i} is not finite"),
        }),
        None => Ok(()),
    }
}

fn check_target_dim<P: Potential + ?Sized>(target: &P, p: &Particles) -> Result<()> {
    if p.dim() != target.dim() {
        return Err(Error::Usage(format!(
            "particles have dimension {}, target has dimension {}",
            p.dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// `grad f(X_i) + I(X_i)` for every particle; the interaction is skipped
/// entirely when it is `none`.
pub fn total_force<P: Potential + ?Sized>(
    target: &P,
    approx: &InteractionApproximator,
    positions: &Particles,
) -> Result<Particles> {
    let mut force = target.grad_potential_rows(positions)?;
    if !approx.is_none() {
        let inter = approx.apply(positions)?;
        for (f, i) in force.as_mut_slice().iter_mut().zip(inter.as_slice()) {
            *f += i;
        }
    }
    Ok(force)
}

struct Staged {
    positions: Particles,
    momenta: Particles,
    time: f64,
    force: Particles,
}

/// One kick-drift-kick step given the force at the current positions.
#[allow(clippy::too_many_arguments)]
fn staged_step<F>(
    positions: &Particles,
    momenta: &Particles,
    time: f64,
    force: &Particles,
    schedule: &ScalingSchedule,
    dt: f64,
    x_update: XUpdate,
    mut force_at: F,
) -> Result<Staged>
where
    F: FnMut(&Particles) -> Result<Particles>,
{
    let t_half = time + 0.5 * dt;
    let fc = schedule.force_coeff(t_half)?;
    let vc = schedule.velocity_coeff(t_half)?;

    let mut y_half = momenta.clone();
    for (y, f) in y_half.as_mut_slice().iter_mut().zip(force.as_slice()) {
        *y -= 0.5 * fc * f * dt;
    }

    let drift = match x_update {
        XUpdate::PaperVerbatim => momenta,
        XUpdate::HalfStep => &y_half,
    };
    let mut x_next = positions.clone();
    for (x, y) in x_next.as_mut_slice().iter_mut().zip(drift.as_slice()) {
        *x += vc * y * dt;
    }
    check_finite("position", &x_next, 1)?;

    let force_next = force_at(&x_next)?;
    let mut y_next = y_half;
    for (y, f) in y_next.as_mut_slice().iter_mut().zip(force_next.as_slice()) {
        *y -= 0.5 * fc * f * dt;
    }
    check_finite("momentum", &y_next, 1)?;

    Ok(Staged {
        positions: x_next,
        momenta: y_next,
        time: t_half + 0.5 * dt,
        force: force_next,
    })
}

/// One full iteration of the accelerated particle flow as a pure function.
///
/// Evaluates the interaction twice: at the current positions and at the new
/// ones. Long runs should use [`AcceleratedFlow`], which carries the second
/// evaluation over to the next step.
pub fn accelerated_step<P: Potential + ?Sized>(
    ens: &Ensemble,
    cfg: &AcceleratedStepperConfig,
    target: &P,
) -> Result<Ensemble> {
    check_target_dim(target, &ens.positions)?;
    let force = total_force(target, &cfg.approx, &ens.positions)?;
    let s = staged_step(
        &ens.positions,
        &ens.momenta,
        ens.time,
        &force,
        &cfg.schedule,
        cfg.dt,
        cfg.x_update,
        |x| total_force(target, &cfg.approx, x),
    )?;
    Ok(Ensemble {
        positions: s.positions,
        momenta: s.momenta,
        time: s.time,
    })
}

/// One step of the deterministic accelerated ODE for a single point, with the
/// same staging as the particle flow and no interaction.
pub fn nesterov_ode_step<P: Potential + ?Sized>(
    x: &[f64],
    y: &[f64],
    t: f64,
    schedule: &ScalingSchedule,
    target: &P,
    dt: f64,
    x_update: XUpdate,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    check_dt(dt)?;
    if t < schedule.t0() {
        return Err(Error::Domain(format!(
            "time {t} precedes the schedule start {}",
            schedule.t0()
        )));
    }
    let xs = Particles::from_flat(1, x.len(), x.to_vec())?;
    let ys = Particles::from_flat(1, y.len(), y.to_vec())?;
    check_target_dim(target, &xs)?;
    let force = target.grad_potential_rows(&xs)?;
    let s = staged_step(&xs, &ys, t, &force, schedule, dt, x_update, |p| {
        target.grad_potential_rows(p)
    })?;
    Ok((s.positions.into_vec(), s.momenta.into_vec(), s.time))
}

/// Stateful integrator for the accelerated flow.
///
/// Holds the force at the current positions so each iteration costs one
/// interaction evaluation; construction performs the initial one.
pub struct AcceleratedFlow<'a, P: Potential + ?Sized> {
    cfg: AcceleratedStepperConfig,
    target: &'a P,
    ensemble: Ensemble,
    force: Particles,
    iteration: usize,
    evaluations: usize,
}

impl<'a, P: Potential + ?Sized> AcceleratedFlow<'a, P> {
    pub fn new(ensemble: Ensemble, cfg: AcceleratedStepperConfig, target: &'a P) -> Result<Self> {
        check_target_dim(target, &ensemble.positions)?;
        if ensemble.time < cfg.schedule.t0() {
            return Err(Error::Domain(format!(
                "ensemble time {} precedes the schedule start {}",
                ensemble.time,
                cfg.schedule.t0()
            )));
        }
        let force = total_force(target, &cfg.approx, &ensemble.positions)?;
        Ok(Self {
            cfg,
            target,
            ensemble,
            force,
            iteration: 0,
            evaluations: usize::from(!cfg.approx.is_none()),
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let k = self.iteration + 1;
        let target = self.target;
        let approx = self.cfg.approx;
        let s = staged_step(
            &self.ensemble.positions,
            &self.ensemble.momenta,
            self.ensemble.time,
            &self.force,
            &self.cfg.schedule,
            self.cfg.dt,
            self.cfg.x_update,
            |x| total_force(target, &approx, x),
        )
        .map_err(|e| e.at_iteration(k))?;
        self.ensemble = Ensemble {
            positions: s.positions,
            momenta: s.momenta,
            time: s.time,
        };
        self.force = s.force;
        self.iteration = k;
        if !approx.is_none() {
            self.evaluations += 1;
        }
        Ok(())
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn into_ensemble(self) -> Ensemble {
        self.ensemble
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &AcceleratedStepperConfig {
        &self.cfg
    }

    /// Number of interaction evaluations performed so far.
    pub fn interaction_evaluations(&self) -> usize {
        self.evaluations
    }
}

/// Runs `k` iterations of the accelerated flow, calling `hook` after
/// initialization (iteration 0) and after every step.
pub fn run_accelerated<P, H>(
    init: Ensemble,
    cfg: AcceleratedStepperConfig,
    target: &P,
    k: usize,
    mut hook: H,
) -> Result<Ensemble>
where
    P: Potential + ?Sized,
    H: FnMut(&AcceleratedFlow<'_, P>) -> Result<()>,
{
    if k == 0 {
        return Err(Error::Usage("iteration count K must be >= 1".into()));
    }
    let mut flow = AcceleratedFlow::new(init, cfg, target)?;
    hook(&flow)?;
    for _ in 0..k {
        flow.step()?;
        hook(&flow)?;
    }
    Ok(flow.into_ensemble())
}

/// Overdamped Langevin, Euler-Maruyama:
/// `X' = X - grad f(X) dt + sqrt(2 dt) xi`.
pub fn langevin_step<P, N>(positions: &Particles, dt: f64, target: &P, noise: &mut N) -> Result<Particles>
where
    P: Potential + ?Sized,
    N: Noise + ?Sized,
{
    check_dt(dt)?;
    check_target_dim(target, positions)?;
    let sigma = (2.0 * dt).sqrt();
    let mut out = positions.clone();
    let mut g = vec![0.0; positions.dim()];
    for x in out.rows_mut() {
        target.grad_potential_into(x, &mut g);
        for (xk, gk) in x.iter_mut().zip(&g) {
            *xk += -gk * dt + sigma * noise.standard_normal();
        }
    }
    check_finite("position", &out, 1)?;
    Ok(out)
}

/// Underdamped Langevin, Euler-Maruyama on the pair:
/// `X' = X + v dt`, `v' = v - gamma v dt - grad f(X) dt + sqrt(2 dt) xi`.
pub fn underdamped_step<P, N>(
    positions: &Particles,
    velocities: &Particles,
    dt: f64,
    gamma_friction: f64,
    target: &P,
    noise: &mut N,
) -> Result<(Particles, Particles)>
where
    P: Potential + ?Sized,
    N: Noise + ?Sized,
{
    check_dt(dt)?;
    if !(gamma_friction >= 0.0) || !gamma_friction.is_finite() {
        return Err(Error::Domain(format!(
            "friction must be finite and >= 0, got {gamma_friction}"
        )));
    }
    check_target_dim(target, positions)?;
    if !positions.same_shape(velocities) {
        return Err(Error::Usage("positions and velocities differ in shape".into()));
    }
    let sigma = (2.0 * dt).sqrt();
    let mut x_next = positions.clone();
    let mut v_next = velocities.clone();
    let mut g = vec![0.0; positions.dim()];
    for ((x, v), (xn, vn)) in positions
        .rows()
        .zip(velocities.rows())
        .zip(x_next.rows_mut().zip(v_next.rows_mut()))
    {
        target.grad_potential_into(x, &mut g);
        for k in 0..x.len() {
            xn[k] = x[k] + v[k] * dt;
            vn[k] = v[k] - gamma_friction * v[k] * dt - g[k] * dt + sigma * noise.standard_normal();
        }
    }
    check_finite("position", &x_next, 1)?;
    check_finite("velocity", &v_next, 1)?;
    Ok((x_next, v_next))
}

/// Deterministic first-order flow `X' = X - (grad f(X) + I(X)) dt`.
pub fn deterministic_first_order_step<P: Potential + ?Sized>(
    positions: &Particles,
    dt: f64,
    target: &P,
    approx: &InteractionApproximator,
) -> Result<Particles> {
    check_dt(dt)?;
    check_target_dim(target, positions)?;
    if approx.is_none() {
        return Err(Error::Usage(
            "deterministic first-order flow needs a gaussian, dm or de interaction".into(),
        ));
    }
    let force = total_force(target, approx, positions)?;
    let mut out = positions.clone();
    for (x, f) in out.as_mut_slice().iter_mut().zip(force.as_slice()) {
        *x -= f * dt;
    }
    check_finite("position", &out, 1)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LangevinKind {
    Overdamped,
    Underdamped { gamma_friction: f64 },
    DeterministicFirstOrder { approx: InteractionApproximator },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinConfig {
    pub dt: f64,
    pub kind: LangevinKind,
}

impl LangevinConfig {
    pub fn new(dt: f64, kind: LangevinKind) -> Result<Self> {
        check_dt(dt)?;
        match kind {
            LangevinKind::Underdamped { gamma_friction } if !(gamma_friction > 0.0) => {
                return Err(Error::Domain(format!("friction must be > 0, got {gamma_friction}")));
            }
            LangevinKind::DeterministicFirstOrder { approx } if approx.is_none() => {
                return Err(Error::Usage(
                    "deterministic first-order flow needs a gaussian, dm or de interaction".into(),
                ));
            }
            _ => {}
        }
        Ok(Self { dt, kind })
    }
}

/// Stateful runner for the Langevin-type baselines. Time starts at 0.
pub struct LangevinSampler<'a, P: Potential + ?Sized> {
    cfg: LangevinConfig,
    target: &'a P,
    positions: Particles,
    velocities: Option<Particles>,
    time: f64,
    iteration: usize,
}

impl<'a, P: Potential + ?Sized> LangevinSampler<'a, P> {
    /// Underdamped chains start from zero velocity.
    pub fn new(positions: Particles, cfg: LangevinConfig, target: &'a P) -> Result<Self> {
        check_target_dim(target, &positions)?;
        let velocities = match cfg.kind {
            LangevinKind::Underdamped { .. } => Some(Particles::zeros(positions.len(), positions.dim())),
            _ => None,
        };
        Ok(Self {
            cfg,
            target,
            positions,
            velocities,
            time: 0.0,
            iteration: 0,
        })
    }

    pub fn step<N: Noise + ?Sized>(&mut self, noise: &mut N) -> Result<()> {
        let k = self.iteration + 1;
        let dt = self.cfg.dt;
        match self.cfg.kind {
            LangevinKind::Overdamped => {
                self.positions =
                    langevin_step(&self.positions, dt, self.target, noise).map_err(|e| e.at_iteration(k))?;
            }
            LangevinKind::Underdamped { gamma_friction } => {
                let v = self.velocities.as_ref().expect("underdamped sampler carries velocities");
                let (x, v) = underdamped_step(&self.positions, v, dt, gamma_friction, self.target, noise)
                    .map_err(|e| e.at_iteration(k))?;
                self.positions = x;
                self.velocities = Some(v);
            }
            LangevinKind::DeterministicFirstOrder { approx } => {
                self.positions = deterministic_first_order_step(&self.positions, dt, self.target, &approx)
                    .map_err(|e| e.at_iteration(k))?;
            }
        }
        self.time += dt;
        self.iteration = k;
        Ok(())
    }

    pub fn positions(&self) -> &Particles {
        &self.positions
    }

    pub fn velocities(&self) -> Option<&Particles> {
        self.velocities.as_ref()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::Divergence { detail, .. } => Error::Divergence { iteration, detail },
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, ZeroNoise};
    use crate::targets::{Gaussian, Target};
    use approx::assert_relative_eq;

    struct Flat;

    impl Potential for Flat {
        fn dim(&self) -> usize {
            1
        }
        fn grad_potential_into(&self, _x: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn log_density_unchecked(&self, _x: &[f64]) -> f64 {
            0.0
        }
    }

    fn fig1_cfg(x_update: XUpdate, approx: InteractionApproximator) -> AcceleratedStepperConfig {
        AcceleratedStepperConfig::new(ScalingSchedule::default(), 0.1, x_update, approx).unwrap()
    }

    fn single(x: f64, y: f64) -> Ensemble {
        Ensemble::new(
            Particles::from_scalars(&[x]).unwrap(),
            Particles::from_scalars(&[y]).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn single_step_hand_trace() {
        let target = Gaussian::scalar(-5.0, 0.25).unwrap();
        let cfg = fig1_cfg(XUpdate::PaperVerbatim, InteractionApproximator::none());
        let out = accelerated_step(&single(2.0, 0.5), &cfg, &target).unwrap();

        // Independent scalar evaluation of the staged update.
        let th: f64 = 1.05;
        let fc = 0.625 * 2.0 * th.powi(3);
        let vc = 2.0 / th.powi(3);
        let y_half = 0.5 - 0.5 * fc * (4.0 * (2.0 + 5.0)) * 0.1;
        let x1 = 2.0 + vc * 0.5 * 0.1;
        let y1 = y_half - 0.5 * fc * (4.0 * (x1 + 5.0)) * 0.1;

        assert_relative_eq!(y_half, -1.526, epsilon = 1e-3);
        assert_relative_eq!(x1, 2.0864, epsilon = 1e-4);
        assert_relative_eq!(out.positions.as_slice()[0], x1, epsilon = 1e-14);
        assert_relative_eq!(out.momenta.as_slice()[0], y1, epsilon = 1e-12);
        assert_relative_eq!(out.time, 1.1, epsilon = 1e-15);
    }

    #[test]
    fn fixed_point_at_target_mean() {
        let target = Gaussian::scalar(-5.0, 0.25).unwrap();
        for xu in [XUpdate::PaperVerbatim, XUpdate::HalfStep] {
            let out = accelerated_step(&single(-5.0, 0.0), &fig1_cfg(xu, InteractionApproximator::none()), &target)
                .unwrap();
            assert_eq!(out.positions.as_slice(), &[-5.0]);
            assert_eq!(out.momenta.as_slice(), &[0.0]);
            let (x, y, _) =
                nesterov_ode_step(&[-5.0], &[0.0], 1.0, &ScalingSchedule::default(), &target, 0.1, xu).unwrap();
            assert_eq!((x[0], y[0]), (-5.0, 0.0));
        }
    }

    #[test]
    fn pure_step_and_flow_agree_and_count_evaluations() {
        let target = Target::Gaussian(Gaussian::scalar(-5.0, 0.25).unwrap());
        let init = crate::targets::GaussianInitial::new(
            Gaussian::scalar(2.0, 4.0).unwrap(),
            crate::targets::Phi0::Linear { slope: vec![0.5], offset: -1.0 },
        )
        .unwrap()
        .initial_ensemble(20, 1.0, &mut rng_from_seed(4))
        .unwrap();
        let cfg = fig1_cfg(XUpdate::HalfStep, InteractionApproximator::gaussian());
        let mut flow = AcceleratedFlow::new(init.clone(), cfg, &target).unwrap();
        let mut pure = init;
        for _ in 0..25 {
            flow.step().unwrap();
            pure = accelerated_step(&pure, &cfg, &target).unwrap();
        }
        assert_eq!(flow.ensemble(), &pure);
        assert_eq!(flow.interaction_evaluations(), 26);
    }

    #[test]
    fn run_requires_iterations() {
        let target = Gaussian::scalar(0.0, 1.0).unwrap();
        let cfg = fig1_cfg(XUpdate::HalfStep, InteractionApproximator::none());
        let r = run_accelerated(single(1.0, 0.0), cfg, &target, 0, |_| Ok(()));
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn divergence_reports_iteration() {
        // Force scale grows as t^3; a huge step blows up within a few iterations.
        let target = Gaussian::scalar(0.0, 1e-6).unwrap();
        let cfg = AcceleratedStepperConfig::new(
            ScalingSchedule::new(2.0, 1e6, 1.0).unwrap(),
            5.0,
            XUpdate::PaperVerbatim,
            InteractionApproximator::none(),
        )
        .unwrap();
        let r = run_accelerated(single(1.0, 0.0), cfg, &target, 1000, |_| Ok(()));
        match r {
            Err(Error::Divergence { iteration, .. }) => assert!(iteration >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_noise_langevin_is_gradient_descent() {
        let target = Gaussian::scalar(-5.0, 0.25).unwrap();
        let x = Particles::from_scalars(&[2.0, -4.0]).unwrap();
        let out = langevin_step(&x, 0.1, &target, &mut ZeroNoise).unwrap();
        assert_relative_eq!(out.as_slice()[0], 2.0 - 4.0 * 7.0 * 0.1, epsilon = 1e-14);
        assert_relative_eq!(out.as_slice()[1], -4.0 - 4.0 * 0.1, epsilon = 1e-14);
    }

    #[test]
    fn flat_potential_increment_variance() {
        let n = 1_000_000;
        let x = Particles::zeros(n, 1);
        let dt = 0.1;
        let out = langevin_step(&x, dt, &Flat, &mut rng_from_seed(9)).unwrap();
        let var = out.as_slice().iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var / (2.0 * dt) - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn overdamped_stationary_variance_matches_discrete_ou() {
        let target = Gaussian::scalar(0.0, 1.0).unwrap();
        let dt = 0.1;
        let mut rng = rng_from_seed(21);
        let mut x = target.sample_n(10_000, &mut rng).unwrap();
        for _ in 0..300 {
            x = langevin_step(&x, dt, &target, &mut rng).unwrap();
        }
        let var = x.covariance().unwrap()[(0, 0)];
        let expected = 1.0 / (1.0 - dt / 2.0);
        assert!((var / expected - 1.0).abs() < 0.10, "variance {var} vs {expected}");
    }

    #[test]
    fn underdamped_fixed_point_and_oscillator_energy() {
        let flat_x = Particles::from_scalars(&[3.0]).unwrap();
        let flat_v = Particles::zeros(1, 1);
        let (x, v) = underdamped_step(&flat_x, &flat_v, 0.1, 1.0, &Flat, &mut ZeroNoise).unwrap();
        assert_eq!((x.as_slice()[0], v.as_slice()[0]), (3.0, 0.0));

        // Harmonic oscillator f = x^2 / 2 without friction or noise.
        let target = Gaussian::scalar(0.0, 1.0).unwrap();
        let mut x = Particles::from_scalars(&[1.0]).unwrap();
        let mut v = Particles::zeros(1, 1);
        let energy = |x: &Particles, v: &Particles| 0.5 * (x.as_slice()[0].powi(2) + v.as_slice()[0].powi(2));
        let e0 = energy(&x, &v);
        for _ in 0..100 {
            let (xn, vn) = underdamped_step(&x, &v, 0.01, 0.0, &target, &mut ZeroNoise).unwrap();
            x = xn;
            v = vn;
        }
        // Explicit Euler multiplies this energy by exactly 1 + dt^2 per step.
        let ratio = energy(&x, &v) / e0;
        assert_relative_eq!(ratio, (1.0f64 + 1e-4).powi(100), max_relative = 1e-12);
        assert!(ratio - 1.0 < 0.011, "energy drift {}", ratio - 1.0);
        // Closed form after t = 1: x = cos 1.
        assert!((x.as_slice()[0] - 1f64.cos()).abs() < 0.01);
    }

    #[test]
    fn underdamped_stationary_position_variance() {
        let target = Gaussian::scalar(0.0, 1.0).unwrap();
        let mut rng = rng_from_seed(33);
        let n = 2000;
        let mut x = target.sample_n(n, &mut rng).unwrap();
        let mut v = Gaussian::scalar(0.0, 1.0).unwrap().sample_n(n, &mut rng).unwrap();
        for _ in 0..2000 {
            let (xn, vn) = underdamped_step(&x, &v, 0.01, 2.0, &target, &mut rng).unwrap();
            x = xn;
            v = vn;
        }
        // With unit noise the invariant law is proportional to exp(-gamma (f + v^2/2)).
        let var = x.covariance().unwrap()[(0, 0)];
        assert!((var - 0.5).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn underdamped_unit_friction_has_unit_variance() {
        let target = Gaussian::scalar(0.0, 1.0).unwrap();
        let mut rng = rng_from_seed(34);
        let n = 2000;
        let mut x = target.sample_n(n, &mut rng).unwrap();
        let mut v = target.sample_n(n, &mut rng).unwrap();
        for _ in 0..2000 {
            let (xn, vn) = underdamped_step(&x, &v, 0.01, 1.0, &target, &mut rng).unwrap();
            x = xn;
            v = vn;
        }
        let var = x.covariance().unwrap()[(0, 0)];
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn first_order_flow_is_stationary_at_matching_moments() {
        let target = Gaussian::scalar(0.0, 1.0).unwrap();
        // Mean 0, unbiased variance 1.
        let x = Particles::from_scalars(&[-1.0, 0.0, 1.0]).unwrap();
        let out =
            deterministic_first_order_step(&x, 0.01, &target, &InteractionApproximator::new(
                crate::interaction::InteractionKind::Gaussian,
                Some(0.0),
            ).unwrap())
            .unwrap();
        for (a, b) in out.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn first_order_single_particle_is_gradient_descent() {
        let target = Gaussian::scalar(-5.0, 0.25).unwrap();
        let x = Particles::from_scalars(&[2.0]).unwrap();
        let dm = InteractionApproximator::diffusion_map(0.1).unwrap();
        let out = deterministic_first_order_step(&x, 0.1, &target, &dm).unwrap();
        let gd = langevin_step(&x, 0.1, &target, &mut ZeroNoise).unwrap();
        assert_eq!(out, gd);
        let g = InteractionApproximator::gaussian();
        assert!(deterministic_first_order_step(&x, 0.1, &target, &g).is_err());
        assert!(deterministic_first_order_step(&x, 0.1, &target, &InteractionApproximator::none()).is_err());
    }

    #[test]
    fn configs_validate() {
        assert!(AcceleratedStepperConfig::new(
            ScalingSchedule::default(),
            0.0,
            XUpdate::HalfStep,
            InteractionApproximator::none()
        )
        .is_err());
        assert!(LangevinConfig::new(0.1, LangevinKind::Underdamped { gamma_friction: 0.0 }).is_err());
        assert!(LangevinConfig::new(-0.1, LangevinKind::Overdamped).is_err());
    }
}
