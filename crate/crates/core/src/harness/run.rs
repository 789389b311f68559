//! Running experiments: single seeds, multi-seed presets, the sampler
//! comparison and one-axis sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{error, info};
use rayon::prelude::*;

use super::config::{DynamicsKind, ExperimentConfig, KlMethod, Method, Preset};
use crate::dynamics::{
    nesterov_ode_step, AcceleratedFlow, AcceleratedStepperConfig, LangevinConfig, LangevinKind, LangevinSampler,
};
use crate::ensemble::{Ensemble, Particles};
use crate::error::{Error, Result};
use crate::metrics::{
    fmt_f64, kl_gaussian_fit, kl_kde, lyapunov_energy, records_to_csv, silverman_bandwidth, wall_time_per_iteration,
    MseAccumulator, RunRecord, TimingSummary,
};
use crate::rng::{rng_from_seed, SeedRng};
use crate::targets::{Potential, Target};

/// Knobs of a single simulation that sweeps and the comparison vary.
#[derive(Debug, Clone, Copy)]
pub struct RunShape {
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub kl: KlMethod,
    pub record_timing: bool,
}

impl RunShape {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            method: cfg.method,
            n: cfg.n,
            k: cfg.k,
            kl: cfg.kl,
            record_timing: cfg.record_timing,
        }
    }
}

/// Output of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    /// Diagnostics at iteration 0, before any step.
    pub initial: RunRecord,
    /// One record per iteration `1..=K`.
    pub records: Vec<RunRecord>,
    pub final_positions: Particles,
}

/// A seed that stopped early, with the records gathered up to that point.
#[derive(Debug)]
pub struct SeedFailure {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub error: Error,
}

pub type SeedResult = std::result::Result<SeedRun, SeedFailure>;

enum Sampler<'a> {
    Flow(AcceleratedFlow<'a, Target>),
    Ode(Ensemble, &'a Target, AcceleratedStepperConfig),
    Langevin(LangevinSampler<'a, Target>, SeedRng),
}

impl Sampler<'_> {
    fn step(&mut self, k: usize) -> Result<()> {
        match self {
            Sampler::Flow(f) => f.step(),
            Sampler::Ode(ens, target, cfg) => {
                let mut next = ens.clone();
                let mut time = ens.time;
                for i in 0..ens.len() {
                    let (x, y, t) = nesterov_ode_step(
                        ens.positions.row(i),
                        ens.momenta.row(i),
                        ens.time,
                        &cfg.schedule,
                        *target,
                        cfg.dt,
                        cfg.x_update,
                    )
                    .map_err(|e| e.at_iteration(k))?;
                    next.positions.row_mut(i).copy_from_slice(&x);
                    next.momenta.row_mut(i).copy_from_slice(&y);
                    time = t;
                }
                if let Some(i) = next.positions.first_non_finite().or(next.momenta.first_non_finite()) {
                    return Err(Error::Divergence {
                        iteration: k,
                        detail: format!("state of particle {i} is not finite"),
                    });
                }
                next.time = time;
                *ens = next;
                Ok(())
            }
            Sampler::Langevin(s, rng) => s.step(rng),
        }
    }

    fn positions(&self) -> &Particles {
        match self {
            Sampler::Flow(f) => &f.ensemble().positions,
            Sampler::Ode(e, ..) => &e.positions,
            Sampler::Langevin(s, _) => s.positions(),
        }
    }

    fn ensemble(&self) -> Option<&Ensemble> {
        match self {
            Sampler::Flow(f) => Some(f.ensemble()),
            Sampler::Ode(e, ..) => Some(e),
            Sampler::Langevin(..) => None,
        }
    }

    fn time(&self) -> f64 {
        match self {
            Sampler::Flow(f) => f.ensemble().time,
            Sampler::Ode(e, ..) => e.time,
            Sampler::Langevin(s, _) => s.time(),
        }
    }
}

struct Observer<'a> {
    cfg: &'a ExperimentConfig,
    target: &'a Target,
    truth: Option<f64>,
    kl: KlMethod,
    digest: String,
}

impl Observer<'_> {
    fn record(&self, sampler: &Sampler<'_>, iteration: usize, wall_nanos: u64) -> Result<RunRecord> {
        let positions = sampler.positions();
        let kl_estimate = match self.kl {
            KlMethod::GaussianFit => {
                let g = self
                    .target
                    .as_gaussian()
                    .ok_or_else(|| Error::Usage("gaussian_fit KL needs a gaussian target".into()))?;
                Some(kl_gaussian_fit(positions, g)?)
            }
            KlMethod::Kde => Some(kl_kde(positions, self.target, silverman_bandwidth(positions)?)?),
            KlMethod::None => None,
        };
        let lyapunov = match (kl_estimate, self.target.as_gaussian(), sampler.ensemble()) {
            (Some(gap), Some(g), Some(ens)) if g.dim() == 1 => {
                Some(lyapunov_energy(ens, &self.cfg.schedule, g, gap)?)
            }
            _ => None,
        };
        let mse_contrib = self
            .truth
            .map(|truth| (self.cfg.test_fn.empirical_mean(positions) - truth).powi(2));
        Ok(RunRecord {
            iteration,
            time_t: sampler.time(),
            kl_estimate,
            lyapunov,
            mse_contrib,
            wall_nanos,
            config_digest: self.digest.clone(),
        })
    }
}

fn elapsed_nanos(start: Instant, enabled: bool) -> u64 {
    if enabled {
        u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX)
    } else {
        0
    }
}

/// Exact value of the configured test function under the target, when one
/// is available in closed form.
pub fn truth(cfg: &ExperimentConfig, target: &Target) -> Option<f64> {
    if target.dim() == 1 {
        target.exact_expectation(cfg.test_fn).ok()
    } else {
        None
    }
}

/// Runs one seed. Initial positions are drawn first from the seed's
/// generator, so every method sees the same `X_0` for the same seed.
pub fn simulate(cfg: &ExperimentConfig, shape: &RunShape, seed: u64) -> SeedResult {
    let mut records = Vec::with_capacity(shape.k);
    match simulate_into(cfg, shape, seed, &mut records) {
        Ok((initial, final_positions)) => Ok(SeedRun {
            seed,
            initial,
            records,
            final_positions,
        }),
        Err(error) => Err(SeedFailure { seed, records, error }),
    }
}

fn simulate_into(
    cfg: &ExperimentConfig,
    shape: &RunShape,
    seed: u64,
    records: &mut Vec<RunRecord>,
) -> Result<(RunRecord, Particles)> {
    let target = cfg.build_target()?;
    let observer = Observer {
        cfg,
        target: &target,
        truth: truth(cfg, &target),
        kl: shape.kl,
        digest: cfg.digest(),
    };
    let mut rng = rng_from_seed(seed);
    let start = Instant::now();
    let ens = cfg.initial.initial_ensemble(shape.n, cfg.schedule.t0(), &mut rng)?;
    let stepper = || AcceleratedStepperConfig::new(cfg.schedule, cfg.dt, cfg.x_update, shape.method.interaction);
    let mut sampler = match shape.method.dynamics {
        DynamicsKind::Accelerated => Sampler::Flow(AcceleratedFlow::new(ens, stepper()?, &target)?),
        DynamicsKind::Nesterov => Sampler::Ode(ens, &target, stepper()?),
        kind => {
            let lk = match kind {
                DynamicsKind::Mcmc => LangevinKind::Overdamped,
                DynamicsKind::Hmcmc => LangevinKind::Underdamped {
                    gamma_friction: cfg.gamma_friction,
                },
                _ => LangevinKind::DeterministicFirstOrder {
                    approx: shape.method.interaction,
                },
            };
            let lc = LangevinConfig::new(cfg.dt, lk)?;
            Sampler::Langevin(LangevinSampler::new(ens.positions, lc, &target)?, rng)
        }
    };
    let initial = observer.record(&sampler, 0, elapsed_nanos(start, shape.record_timing))?;
    for k in 1..=shape.k {
        let start = Instant::now();
        sampler.step(k)?;
        let wall = elapsed_nanos(start, shape.record_timing);
        records.push(observer.record(&sampler, k, wall)?);
    }
    Ok((initial, sampler.positions().clone()))
}

/// Runs `shape` for every seed on the worker pool; results come back in
/// seed order.
pub fn simulate_seeds(cfg: &ExperimentConfig, shape: &RunShape, seeds: &[u64]) -> Vec<SeedResult> {
    seeds.par_iter().map(|&s| simulate(cfg, shape, s)).collect()
}

/// What a call to [`run_experiment`] or [`sweep`] produced.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// `(method label, seed, error message)` for every failed seed.
    pub failures: Vec<(String, u64, String)>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }

    /// 0 when every seed succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.success())
    }

    fn fail(&mut self, method: &Method, seed: u64, err: &Error) {
        error!("{} seed {seed} failed: {err}", method.label());
        self.failures.push((method.label(), seed, err.to_string()));
    }
}

fn write_file(out: &mut RunOutcome, path: PathBuf, contents: &str) -> Result<()> {
    std::fs::write(&path, contents)?;
    out.files.push(path);
    Ok(())
}

fn integrator_name(cfg: &ExperimentConfig, method: &Method) -> String {
    match method.dynamics {
        DynamicsKind::Accelerated | DynamicsKind::Nesterov => {
            format!("kick-drift-kick, x_update={}", cfg.x_update.name())
        }
        DynamicsKind::Mcmc => "euler-maruyama overdamped langevin".into(),
        DynamicsKind::Hmcmc => format!(
            "euler-maruyama underdamped langevin, gamma={}, v0=0",
            fmt_f64(cfg.gamma_friction)
        ),
        DynamicsKind::FirstOrderDet => "explicit euler first-order flow".into(),
    }
}

fn sidecar(cfg: &ExperimentConfig, method: &Method, shape: &RunShape, seed: u64, result: &SeedResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed = {seed}");
    if let Some(ms) = cfg.master_seed {
        let _ = writeln!(s, "master_seed = {ms}");
    }
    let _ = writeln!(s, "method = {}", method.label());
    let _ = writeln!(s, "integrator = {}", integrator_name(cfg, method));
    let _ = writeln!(s, "N = {}", shape.n);
    let _ = writeln!(s, "K = {}", shape.k);
    let kl = match shape.kl {
        KlMethod::Kde => "kde, silverman bandwidth per iteration".to_string(),
        other => other.name().to_string(),
    };
    let _ = writeln!(s, "kl_estimator = {kl}");
    let _ = writeln!(s, "test_fn = {}", cfg.test_fn.name());
    let _ = writeln!(s, "config_digest = {}", cfg.digest());
    let _ = writeln!(s, "resolved_config = {}", cfg.resolved_path().file_name().unwrap_or_default().to_string_lossy());
    match result {
        Ok(run) => {
            let r = &run.initial;
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(s, "iter0.t = {}", fmt_f64(r.time_t));
            let _ = writeln!(s, "iter0.kl = {}", opt(r.kl_estimate));
            let _ = writeln!(s, "iter0.lyapunov = {}", opt(r.lyapunov));
            let _ = writeln!(s, "iter0.mse = {}", opt(r.mse_contrib));
            let _ = writeln!(s, "status = ok");
        }
        Err(f) => {
            let _ = writeln!(s, "status = failed: {}", f.error);
        }
    }
    s
}

fn write_seed(
    out: &mut RunOutcome,
    cfg: &ExperimentConfig,
    stem: &str,
    method: &Method,
    shape: &RunShape,
    result: &SeedResult,
) -> Result<()> {
    let (seed, records) = match result {
        Ok(r) => (r.seed, &r.records),
        Err(f) => (f.seed, &f.records),
    };
    let dir = &cfg.output_dir;
    write_file(out, dir.join(format!("{stem}_{seed}.csv")), &records_to_csv(records))?;
    write_file(out, dir.join(format!("{stem}_{seed}.meta")), &sidecar(cfg, method, shape, seed, result))
}

/// Runs the configured experiment and writes its outputs.
///
/// Per seed this writes `<preset>_<seed>.csv` with `K` rows and a
/// `<preset>_<seed>.meta` sidecar; the comparison preset instead writes
/// `<preset>_<method>_<seed>.*` per method plus the aggregated
/// `mse_vs_K.csv`, `mse_vs_N.csv`, `mse_vs_eps.csv` and `time_vs_N.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let resolved = cfg.write_resolved()?;
    out.files.push(resolved);
    if cfg.preset == Preset::ComparisonFig3 {
        run_comparison(cfg, &mut out)?;
        return Ok(out);
    }
    let shape = RunShape::from_config(cfg);
    info!("{}: {} seeds, N={}, K={}", cfg.preset, cfg.seeds.len(), shape.n, shape.k);
    let results = simulate_seeds(cfg, &shape, &cfg.seeds);
    for r in &results {
        write_seed(&mut out, cfg, cfg.preset.name(), &cfg.method, &shape, r)?;
        if let Err(f) = r {
            out.fail(&cfg.method, f.seed, &f.error);
        }
    }
    Ok(out)
}

/// MSE over the successful seeds of the final-iteration estimate of the
/// test function, with the number of seeds used.
fn final_mse(cfg: &ExperimentConfig, results: &[SeedResult]) -> Option<(f64, usize)> {
    let target = cfg.build_target().ok()?;
    let mut acc = MseAccumulator::new(truth(cfg, &target)?);
    for run in results.iter().filter_map(|r| r.as_ref().ok()) {
        acc.push(cfg.test_fn.empirical_mean(&run.final_positions));
    }
    acc.mse().ok().map(|m| (m, acc.len()))
}

fn per_k_mse(results: &[SeedResult], k: usize) -> Vec<Option<(f64, usize)>> {
    (0..k)
        .map(|i| {
            let vals: Vec<f64> = results
                .iter()
                .filter_map(|r| r.as_ref().ok())
                .filter_map(|r| r.records.get(i).and_then(|x| x.mse_contrib))
                .collect();
            if vals.is_empty() {
                None
            } else {
                Some((vals.iter().sum::<f64>() / vals.len() as f64, vals.len()))
            }
        })
        .collect()
}

fn first_error(results: &[SeedResult]) -> String {
    results
        .iter()
        .find_map(|r| r.as_ref().err())
        .map(|f| f.error.to_string().replace([',', '\n'], ";"))
        .unwrap_or_default()
}

fn failures(results: &[SeedResult]) -> usize {
    results.iter().filter(|r| r.is_err()).count()
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn run_comparison(cfg: &ExperimentConfig, out: &mut RunOutcome) -> Result<()> {
    let spec = cfg.comparison.as_ref().expect("comparison preset carries its spec");
    let base = RunShape::from_config(cfg);

    let mut mse_k = String::from("method,k,mse,runs,failed\n");
    for method in &spec.methods {
        let shape = RunShape { method: *method, ..base };
        info!("comparison: {} over {} seeds", method.label(), cfg.seeds.len());
        let results = simulate_seeds(cfg, &shape, &cfg.seeds);
        let stem = format!("{}_{}", cfg.preset, method.file_label());
        for r in &results {
            write_seed(out, cfg, &stem, method, &shape, r)?;
            if let Err(f) = r {
                out.fail(method, f.seed, &f.error);
            }
        }
        let failed = failures(&results);
        for (i, m) in per_k_mse(&results, shape.k).into_iter().enumerate() {
            let _ = writeln!(
                mse_k,
                "{},{},{},{},{failed}",
                method.label(),
                i + 1,
                opt_cell(m.map(|v| v.0)),
                m.map_or(0, |v| v.1)
            );
        }
    }
    write_file(out, cfg.output_dir.join("mse_vs_K.csv"), &mse_k)?;

    let mut mse_n = String::from("method,N,mse,runs,failed,error\n");
    for method in &spec.methods {
        for &n in &spec.n_grid {
            let shape = RunShape { method: *method, n, ..base };
            let results = simulate_seeds(cfg, &shape, &cfg.seeds);
            for f in results.iter().filter_map(|r| r.as_ref().err()) {
                out.fail(method, f.seed, &f.error);
            }
            let m = final_mse(cfg, &results);
            let _ = writeln!(
                mse_n,
                "{},{n},{},{},{},{}",
                method.label(),
                opt_cell(m.map(|v| v.0)),
                m.map_or(0, |v| v.1),
                failures(&results),
                first_error(&results)
            );
        }
    }
    write_file(out, cfg.output_dir.join("mse_vs_N.csv"), &mse_n)?;

    let mut mse_eps = String::from("method,epsilon,mse,runs,failed,error\n");
    for method in &spec.methods {
        for &eps in &spec.eps_grid {
            let Some(m) = method.with_epsilon(eps) else { continue };
            let m = m?;
            let shape = RunShape { method: m, ..base };
            let results = simulate_seeds(cfg, &shape, &cfg.seeds);
            for f in results.iter().filter_map(|r| r.as_ref().err()) {
                out.fail(&m, f.seed, &f.error);
            }
            let v = final_mse(cfg, &results);
            let _ = writeln!(
                mse_eps,
                "{},{},{},{},{},{}",
                m.label(),
                fmt_f64(eps),
                opt_cell(v.map(|v| v.0)),
                v.map_or(0, |v| v.1),
                failures(&results),
                first_error(&results)
            );
        }
    }
    write_file(out, cfg.output_dir.join("mse_vs_eps.csv"), &mse_eps)?;

    // Timing runs one seed at a time so workers do not compete for cores.
    let mut time_n = String::from("method,N,mean_nanos,p50_nanos,p95_nanos,error\n");
    for method in &spec.methods {
        for &n in &spec.n_grid {
            let shape = RunShape {
                method: *method,
                n,
                k: spec.timing_iterations,
                kl: KlMethod::None,
                record_timing: true,
            };
            let row = match timing(cfg, &shape, cfg.seeds[0]) {
                Ok(t) => format!("{},{},{},", fmt_f64(t.mean), fmt_f64(t.p50), fmt_f64(t.p95)),
                Err(e) => {
                    out.fail(method, cfg.seeds[0], &e);
                    format!(",,,{}", e.to_string().replace([',', '\n'], ";"))
                }
            };
            let _ = writeln!(time_n, "{},{n},{row}", method.label());
        }
    }
    write_file(out, cfg.output_dir.join("time_vs_N.csv"), &time_n)?;
    Ok(())
}

/// Per-iteration wall time of one seed, excluding setup.
pub fn timing(cfg: &ExperimentConfig, shape: &RunShape, seed: u64) -> Result<TimingSummary> {
    let run = simulate(cfg, shape, seed).map_err(|f| f.error)?;
    let mut all = vec![run.initial];
    all.extend(run.records);
    wall_time_per_iteration(&all)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    K,
    Epsilon,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "N" => Some(SweepAxis::N),
            "K" => Some(SweepAxis::K),
            "epsilon" => Some(SweepAxis::Epsilon),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::N => "N",
            SweepAxis::K => "K",
            SweepAxis::Epsilon => "epsilon",
        }
    }
}

fn parse_axis_value(axis: SweepAxis, s: &str) -> Result<f64> {
    let bad = |msg: &str| Error::config("sweep.values", format!("`{s}`: {msg}"));
    match axis {
        SweepAxis::N | SweepAxis::K => {
            let v: usize = s.trim().parse().map_err(|_| bad("expected a positive integer"))?;
            if v == 0 {
                return Err(bad("must be >= 1"));
            }
            Ok(v as f64)
        }
        SweepAxis::Epsilon => {
            let v: f64 = s.trim().parse().map_err(|_| bad("expected a number"))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad("must be > 0"));
            }
            Ok(v)
        }
    }
}

/// Parses the comma-separated values of a sweep.
pub fn parse_sweep_values(axis: SweepAxis, values: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = values
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_axis_value(axis, s))
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::config("sweep.values", "no values given"));
    }
    Ok(vals)
}

pub const SWEEP_HEADER: &str = "method,axis,value,k,mse,runs,failed,mean_nanos,error";

/// Runs the experiment once per value of `axis`, holding everything else
/// fixed, and writes `sweep_<axis>.csv`.
///
/// N and epsilon sweeps give one row per method and value with the final
/// MSE. K sweeps give one row per iteration `k <= value`. A value where
/// every seed failed still gets a row, with empty numbers and the error.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<RunOutcome> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "no values given"));
    }
    let mut out = RunOutcome::default();
    out.files.push(cfg.write_resolved()?);
    let base = RunShape::from_config(cfg);
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for method in cfg.methods() {
        for &v in values {
            let shape = match axis {
                SweepAxis::N => Ok(RunShape { method, n: v as usize, ..base }),
                SweepAxis::K => Ok(RunShape { method, k: v as usize, ..base }),
                SweepAxis::Epsilon => match method.with_epsilon(v) {
                    Some(m) => m.map(|m| RunShape { method: m, ..base }),
                    None => Err(Error::Usage(format!("{} has no kernel bandwidth", method.label()))),
                },
            };
            let shape = match shape {
                Ok(s) => s,
                Err(e) => {
                    out.fail(&method, cfg.seeds[0], &e);
                    let msg = e.to_string().replace([',', '\n'], ";");
                    let _ = writeln!(
                        csv,
                        "{},{},{},,,0,{},,{msg}",
                        method.label(),
                        axis.name(),
                        axis_cell(axis, v),
                        cfg.seeds.len()
                    );
                    continue;
                }
            };
            let label = shape.method.label();
            let results = simulate_seeds(cfg, &shape, &cfg.seeds);
            for f in results.iter().filter_map(|r| r.as_ref().err()) {
                out.fail(&shape.method, f.seed, &f.error);
            }
            let failed = failures(&results);
            let err = first_error(&results);
            let nanos = mean_nanos(&results, shape.record_timing);
            let value = axis_cell(axis, v);
            match axis {
                SweepAxis::K => {
                    for (i, m) in per_k_mse(&results, shape.k).into_iter().enumerate() {
                        let _ = writeln!(
                            csv,
                            "{label},K,{value},{},{},{},{failed},{nanos},{err}",
                            i + 1,
                            opt_cell(m.map(|x| x.0)),
                            m.map_or(0, |x| x.1)
                        );
                    }
                }
                _ => {
                    let m = final_mse(cfg, &results);
                    let _ = writeln!(
                        csv,
                        "{label},{},{value},{},{},{},{failed},{nanos},{err}",
                        axis.name(),
                        shape.k,
                        opt_cell(m.map(|x| x.0)),
                        m.map_or(0, |x| x.1)
                    );
                }
            }
        }
    }
    write_file(&mut out, cfg.output_dir.join(format!("sweep_{}.csv", axis.name())), &csv)?;
    Ok(out)
}

fn axis_cell(axis: SweepAxis, v: f64) -> String {
    match axis {
        SweepAxis::Epsilon => fmt_f64(v),
        SweepAxis::N | SweepAxis::K => format!("{}", v as usize),
    }
}

fn mean_nanos(results: &[SeedResult], enabled: bool) -> String {
    if !enabled {
        return String::new();
    }
    let per_seed: Vec<f64> = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .filter_map(|r| {
            let mut all = vec![r.initial.clone()];
            all.extend(r.records.iter().cloned());
            wall_time_per_iteration(&all).ok().map(|t| t.mean)
        })
        .collect();
    if per_seed.is_empty() {
        String::new()
    } else {
        fmt_f64(per_seed.iter().sum::<f64>() / per_seed.len() as f64)
    }
}

/// Path of the per-seed CSV written by [`run_experiment`] for a
/// non-comparison preset.
pub fn seed_csv_path(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("{}_{seed}.csv", cfg.preset))
}

/// Reads a per-seed CSV back into `(iteration, t, kl, lyapunov, mse)` rows.
pub fn read_seed_csv(path: &Path) -> Result<Vec<(usize, f64, Option<f64>, Option<f64>, Option<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Numerical(format!("malformed CSV row `{line}` in {}", path.display()));
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        rows.push((
            f[0].parse().map_err(|_| bad())?,
            num(f[1])?.ok_or_else(bad)?,
            num(f[2])?,
            num(f[3])?,
            num(f[4])?,
        ));
    }
    Ok(rows)
}
