//! Experiment configuration.
//!
//! Configs are flat text files of `key = value` lines with dotted keys
//! (`schedule.C = 0.625`). Blank lines and `#` comments are ignored. A run
//! resolves its values in layers: preset defaults, then the config file, then
//! command-line overrides. Every key that is used by the resulting experiment
//! ends up in the resolved config, which is written next to the outputs and
//! can be loaded again as-is.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::dynamics::XUpdate;
use crate::error::{Error, Result};
use crate::interaction::{InteractionApproximator, InteractionKind};
use crate::rng::derive_seeds;
use crate::schedule::ScalingSchedule;
use crate::targets::{Gaussian, GaussianInitial, GaussianMixtureTarget, Phi0, Target, TestFunction};

/// Every recognised key, in the order used when writing a resolved config.
pub const KEYS: &[&str] = &[
    "preset",
    "schedule.p",
    "schedule.C",
    "schedule.t0",
    "target.kind",
    "target.mean",
    "target.cov",
    "target.m",
    "target.sigma2",
    "init.mean",
    "init.cov",
    "init.phi0",
    "interaction.kind",
    "interaction.epsilon",
    "interaction.jitter",
    "dynamics.kind",
    "dynamics.dt",
    "dynamics.K",
    "dynamics.gamma_friction",
    "dynamics.x_update",
    "N",
    "seeds",
    "master_seed",
    "runs",
    "output_dir",
    "output.record_timing",
    "metrics.kl",
    "metrics.test_fn",
    "comparison.methods",
    "comparison.N_grid",
    "comparison.eps_grid",
    "comparison.timing_iterations",
];

/// Keys left out of the config digest: they do not affect any computed value.
const UNDIGESTED: &[&str] = &["output_dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    GaussianFig1,
    MixtureFig2,
    ComparisonFig3,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::GaussianFig1,
        Preset::MixtureFig2,
        Preset::ComparisonFig3,
        Preset::Custom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::GaussianFig1 => "gaussian_fig1",
            Preset::MixtureFig2 => "mixture_fig2",
            Preset::ComparisonFig3 => "comparison_fig3",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Default values of the preset. `custom` starts from the Figure 1 setup.
    pub fn defaults(&self) -> Vec<(&'static str, &'static str)> {
        let mut v = vec![
            ("schedule.p", "2"),
            ("schedule.C", "0.625"),
            ("schedule.t0", "1"),
            ("init.mean", "2"),
            ("init.cov", "4"),
            ("init.phi0", "linear:0.5:-1"),
            ("dynamics.dt", "0.1"),
            ("dynamics.x_update", "halfstep"),
            ("dynamics.gamma_friction", "2"),
            ("interaction.jitter", "auto"),
            ("output.record_timing", "false"),
            ("metrics.kl", "auto"),
            ("metrics.test_fn", "half_rectified_identity"),
        ];
        match self {
            Preset::GaussianFig1 | Preset::Custom => v.extend([
                ("target.kind", "gaussian"),
                ("target.mean", "-5"),
                ("target.cov", "0.25"),
                ("interaction.kind", "gaussian"),
                ("dynamics.kind", "accelerated"),
                ("dynamics.K", "400"),
                ("N", "100"),
            ]),
            Preset::MixtureFig2 => v.extend([
                ("target.kind", "mixture"),
                ("target.m", "2"),
                ("target.sigma2", "0.8"),
                ("interaction.kind", "dm"),
                ("interaction.epsilon", "0.01"),
                ("dynamics.kind", "accelerated"),
                ("dynamics.K", "400"),
                ("N", "100"),
            ]),
            Preset::ComparisonFig3 => v.extend([
                ("target.kind", "mixture"),
                ("target.m", "2"),
                ("target.sigma2", "0.8"),
                ("interaction.epsilon", "0.05"),
                ("dynamics.K", "1000"),
                ("N", "100"),
                ("comparison.methods", "accelerated:dm,accelerated:de,mcmc,hmcmc"),
                ("comparison.N_grid", "250,500,1000,2000"),
                ("comparison.eps_grid", "0.001,0.003,0.01,0.03,0.1,0.3,1,3,10"),
                ("comparison.timing_iterations", "20"),
            ]),
        }
        v
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsKind {
    Accelerated,
    Nesterov,
    Mcmc,
    Hmcmc,
    FirstOrderDet,
}

impl DynamicsKind {
    pub fn name(&self) -> &'static str {
        match self {
            DynamicsKind::Accelerated => "accelerated",
            DynamicsKind::Nesterov => "nesterov",
            DynamicsKind::Mcmc => "mcmc",
            DynamicsKind::Hmcmc => "hmcmc",
            DynamicsKind::FirstOrderDet => "first_order_det",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            DynamicsKind::Accelerated,
            DynamicsKind::Nesterov,
            DynamicsKind::Mcmc,
            DynamicsKind::Hmcmc,
            DynamicsKind::FirstOrderDet,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    fn uses_interaction(&self) -> bool {
        matches!(self, DynamicsKind::Accelerated | DynamicsKind::FirstOrderDet)
    }

    fn uses_schedule(&self) -> bool {
        matches!(self, DynamicsKind::Accelerated | DynamicsKind::Nesterov)
    }
}

/// A sampler together with its interaction estimator, e.g. `accelerated:dm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Method {
    pub dynamics: DynamicsKind,
    pub interaction: InteractionApproximator,
}

impl Method {
    pub fn new(dynamics: DynamicsKind, interaction: InteractionApproximator) -> Self {
        Self { dynamics, interaction }
    }

    /// `accelerated:dm`, `mcmc`, `first_order_det:gaussian`, ...
    pub fn label(&self) -> String {
        if self.dynamics.uses_interaction() {
            format!("{}:{}", self.dynamics.name(), interaction_token(self.interaction.kind()))
        } else {
            self.dynamics.name().to_string()
        }
    }

    /// Label usable inside file names.
    pub fn file_label(&self) -> String {
        self.label().replace(':', "-")
    }

    /// Same method with the kernel bandwidth replaced; `None` when the
    /// method has no bandwidth.
    pub fn with_epsilon(&self, epsilon: f64) -> Option<Result<Self>> {
        let kind = match self.interaction.kind() {
            InteractionKind::DiffusionMap { .. } => InteractionKind::DiffusionMap { epsilon },
            InteractionKind::DensityEstimation { .. } => InteractionKind::DensityEstimation { epsilon },
            _ => return None,
        };
        Some(
            InteractionApproximator::new(kind, self.interaction.jitter())
                .map(|interaction| Method::new(self.dynamics, interaction)),
        )
    }
}

fn interaction_token(kind: InteractionKind) -> &'static str {
    match kind {
        InteractionKind::None => "none",
        InteractionKind::Gaussian => "gaussian",
        InteractionKind::DiffusionMap { .. } => "dm",
        InteractionKind::DensityEstimation { .. } => "de",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMethod {
    GaussianFit,
    Kde,
    None,
}

impl KlMethod {
    pub fn name(&self) -> &'static str {
        match self {
            KlMethod::GaussianFit => "gaussian_fit",
            KlMethod::Kde => "kde",
            KlMethod::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Gaussian { mean: Vec<f64>, cov: DMatrix<f64> },
    Mixture { m: f64, sigma2: f64 },
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::Mixture { .. } => 1,
        }
    }

    pub fn build(&self) -> Result<Target> {
        Ok(match self {
            TargetSpec::Gaussian { mean, cov } => Target::Gaussian(Gaussian::new(mean.clone(), cov.clone())?),
            TargetSpec::Mixture { m, sigma2 } => Target::Mixture(GaussianMixtureTarget::symmetric_1d(*m, *sigma2)?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonSpec {
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub timing_iterations: usize,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub schedule: ScalingSchedule,
    pub target: TargetSpec,
    pub initial: GaussianInitial,
    /// The configured sampler; for the comparison preset this is the first
    /// entry of `comparison.methods`.
    pub method: Method,
    pub dt: f64,
    pub k: usize,
    pub gamma_friction: f64,
    pub x_update: XUpdate,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub master_seed: Option<u64>,
    pub output_dir: PathBuf,
    pub record_timing: bool,
    pub kl: KlMethod,
    pub test_fn: TestFunction,
    pub comparison: Option<ComparisonSpec>,
    resolved: Vec<(String, String)>,
}

/// Where the configuration comes from, in increasing priority.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub preset: Option<String>,
    pub file: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
}

impl ConfigSource {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            ..Self::default()
        }
    }

    pub fn set(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.push((key.to_string(), value.to_string()));
        self
    }
}

/// Splits a `key=value` command-line override.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::config(s, "expected `key=value`")),
    }
}

/// Parses config text into ordered `(key, value)` pairs.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = k.trim().to_string();
        if out.iter().any(|(seen, _)| *seen == key) {
            return Err(Error::config(key, format!("duplicate key on line {}", lineno + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    from_user: bool,
}

type Layered = BTreeMap<String, Entry>;

fn check_known(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::config(key, "unknown key"))
    }
}

/// Loads, layers and validates a configuration.
pub fn load_config(src: &ConfigSource) -> Result<ExperimentConfig> {
    let file_entries = match &src.file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    for (k, _) in file_entries.iter().chain(&src.overrides) {
        check_known(k)?;
    }

    let preset_name = src
        .overrides
        .iter()
        .rev()
        .find(|(k, _)| k == "preset")
        .map(|(_, v)| v.clone())
        .or_else(|| src.preset.clone())
        .or_else(|| file_entries.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.clone()))
        .ok_or_else(|| Error::config("preset", "no preset given"))?;
    let preset = Preset::parse(&preset_name).ok_or_else(|| {
        Error::config(
            "preset",
            format!("unknown preset `{preset_name}` (expected gaussian_fig1, mixture_fig2, comparison_fig3 or custom)"),
        )
    })?;

    let mut map: Layered = BTreeMap::new();
    for (k, v) in preset.defaults() {
        map.insert(k.to_string(), Entry { value: v.to_string(), from_user: false });
    }
    for (k, v) in file_entries.into_iter().chain(src.overrides.iter().cloned()) {
        if k != "preset" {
            map.insert(k, Entry { value: v, from_user: true });
        }
    }
    map.insert("preset".into(), Entry { value: preset.name().into(), from_user: false });

    let keys: Vec<String> = map.keys().cloned().collect();
    for key in keys {
        if !applicable(&key, &map) {
            if map[&key].from_user {
                return Err(Error::config(key, "not used by this configuration"));
            }
            map.remove(&key);
        }
    }
    resolve(preset, &map)
}

fn value<'a>(map: &'a Layered, key: &str) -> Option<&'a str> {
    map.get(key).map(|e| e.value.as_str())
}

fn comparison_methods_mention(map: &Layered, needle: &str) -> bool {
    value(map, "comparison.methods").is_some_and(|v| v.split(',').any(|m| m.trim().contains(needle)))
}

fn applicable(key: &str, map: &Layered) -> bool {
    let comparison = value(map, "preset") == Some("comparison_fig3");
    let dynamics = value(map, "dynamics.kind").and_then(DynamicsKind::parse);
    let interaction = value(map, "interaction.kind");
    let uses_schedule = if comparison {
        comparison_methods_mention(map, "accelerated") || comparison_methods_mention(map, "nesterov")
    } else {
        dynamics.is_none_or(|d| d.uses_schedule())
    };
    match key {
        "target.mean" | "target.cov" => value(map, "target.kind") == Some("gaussian"),
        "target.m" | "target.sigma2" => value(map, "target.kind") == Some("mixture"),
        "interaction.kind" | "dynamics.kind" => !comparison,
        "interaction.epsilon" => {
            if comparison {
                comparison_methods_mention(map, ":dm") || comparison_methods_mention(map, ":de")
            } else {
                matches!(interaction, Some("dm" | "de"))
            }
        }
        "interaction.jitter" => {
            if comparison {
                comparison_methods_mention(map, ":gaussian")
            } else {
                interaction == Some("gaussian")
            }
        }
        "dynamics.gamma_friction" => {
            if comparison {
                comparison_methods_mention(map, "hmcmc")
            } else {
                dynamics == Some(DynamicsKind::Hmcmc)
            }
        }
        "dynamics.x_update" | "schedule.p" | "schedule.C" | "schedule.t0" => uses_schedule,
        k if k.starts_with("comparison.") => comparison,
        _ => true,
    }
}

fn require<'a>(map: &'a Layered, key: &str) -> Result<&'a str> {
    value(map, key).ok_or_else(|| Error::config(key, "missing value"))
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::config(key, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{s}` is not a non-negative integer")))
}

fn parse_u64(key: &str, s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{s}` is not a non-negative integer")))
}

fn parse_list<T>(key: &str, s: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| item(key, t))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    Ok(items)
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{s}`"))),
    }
}

/// Rows separated by `;`, entries by `,`. A single number is a 1x1 matrix.
fn parse_matrix(key: &str, s: &str, d: usize) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| parse_list(key, r, parse_f64))
        .collect::<Result<_>>()?;
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::config(key, format!("expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn parse_phi0(key: &str, s: &str, d: usize) -> Result<Phi0> {
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or("");
    let phi0 = match kind {
        "linear" => {
            let (Some(slope), Some(offset), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::config(key, "expected `linear:<slope>[,<slope>...]:<offset>`"));
            };
            Phi0::Linear {
                slope: parse_list(key, slope, parse_f64)?,
                offset: parse_f64(key, offset)?,
            }
        }
        "quadratic" => {
            let (Some(diag), None) = (parts.next(), parts.next()) else {
                return Err(Error::config(key, "expected `quadratic:<a1>[,<a2>...]`"));
            };
            let diag = parse_list(key, diag, parse_f64)?;
            if diag.len() != d {
                return Err(Error::config(key, format!("expected {d} diagonal entries")));
            }
            Phi0::Quadratic(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
        }
        "zero" => Phi0::Linear {
            slope: vec![0.0; d],
            offset: 0.0,
        },
        _ => return Err(Error::config(key, format!("unknown phi0 form `{s}` (linear, quadratic or zero)"))),
    };
    Ok(phi0)
}

fn parse_interaction(key: &str, kind: &str, map: &Layered) -> Result<InteractionApproximator> {
    let jitter = match value(map, "interaction.jitter") {
        None | Some("auto") => None,
        Some(j) => Some(parse_f64("interaction.jitter", j)?),
    };
    let epsilon = || -> Result<f64> {
        let e = parse_f64("interaction.epsilon", require(map, "interaction.epsilon")?)?;
        if e <= 0.0 {
            return Err(Error::config("interaction.epsilon", "must be > 0"));
        }
        Ok(e)
    };
    let kind = match kind {
        "none" => InteractionKind::None,
        "gaussian" => InteractionKind::Gaussian,
        "dm" => InteractionKind::DiffusionMap { epsilon: epsilon()? },
        "de" => InteractionKind::DensityEstimation { epsilon: epsilon()? },
        _ => return Err(Error::config(key, format!("unknown interaction `{kind}` (none, gaussian, dm or de)"))),
    };
    InteractionApproximator::new(kind, jitter).map_err(|e| Error::config("interaction.jitter", e.to_string()))
}

fn parse_method(key: &str, s: &str, map: &Layered) -> Result<Method> {
    let (dyn_name, inter) = match s.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (s, None),
    };
    let dynamics = DynamicsKind::parse(dyn_name)
        .ok_or_else(|| Error::config(key, format!("unknown dynamics `{dyn_name}`")))?;
    let interaction = match (dynamics.uses_interaction(), inter) {
        (true, Some(i)) => parse_interaction(key, i, map)?,
        (true, None) => return Err(Error::config(key, format!("`{s}` needs an interaction, e.g. `{s}:dm`"))),
        (false, None) => InteractionApproximator::none(),
        (false, Some(_)) => return Err(Error::config(key, format!("`{dyn_name}` takes no interaction"))),
    };
    check_method(key, &dynamics, &interaction)?;
    Ok(Method::new(dynamics, interaction))
}

fn check_method(key: &str, dynamics: &DynamicsKind, interaction: &InteractionApproximator) -> Result<()> {
    if *dynamics == DynamicsKind::FirstOrderDet && interaction.is_none() {
        return Err(Error::config(key, "first_order_det needs a gaussian, dm or de interaction"));
    }
    Ok(())
}

fn resolve(preset: Preset, map: &Layered) -> Result<ExperimentConfig> {
    for key in map.keys() {
        check_known(key)?;
    }
    let uses_schedule = map.contains_key("schedule.p");

    let schedule = if uses_schedule {
        let p = parse_f64("schedule.p", require(map, "schedule.p")?)?;
        let c = parse_f64("schedule.C", require(map, "schedule.C")?)?;
        let t0 = parse_f64("schedule.t0", require(map, "schedule.t0")?)?;
        if p < 2.0 {
            return Err(Error::config("schedule.p", format!("must be >= 2, got {p}")));
        }
        if c <= 0.0 {
            return Err(Error::config("schedule.C", format!("must be > 0, got {c}")));
        }
        if t0 <= 0.0 {
            return Err(Error::config("schedule.t0", format!("must be > 0, got {t0}")));
        }
        ScalingSchedule::new(p, c, t0).map_err(|e| Error::config("schedule", e.to_string()))?
    } else {
        ScalingSchedule::default()
    };

    let target = match require(map, "target.kind")? {
        "gaussian" => {
            let mean = parse_list("target.mean", require(map, "target.mean")?, parse_f64)?;
            let cov = parse_matrix("target.cov", require(map, "target.cov")?, mean.len())?;
            TargetSpec::Gaussian { mean, cov }
        }
        "mixture" => {
            let m = parse_f64("target.m", require(map, "target.m")?)?;
            let sigma2 = parse_f64("target.sigma2", require(map, "target.sigma2")?)?;
            if sigma2 <= 0.0 {
                return Err(Error::config("target.sigma2", "must be > 0"));
            }
            TargetSpec::Mixture { m, sigma2 }
        }
        other => return Err(Error::config("target.kind", format!("unknown target `{other}` (gaussian or mixture)"))),
    };
    let cov_key = if matches!(target, TargetSpec::Gaussian { .. }) { "target.cov" } else { "target.sigma2" };
    target.build().map_err(|e| Error::config(cov_key, e.to_string()))?;
    let d = target.dim();

    let init_mean = parse_list("init.mean", require(map, "init.mean")?, parse_f64)?;
    if init_mean.len() != d {
        return Err(Error::config("init.mean", format!("expected dimension {d}")));
    }
    let init_cov = parse_matrix("init.cov", require(map, "init.cov")?, d)?;
    let init_dist = Gaussian::new(init_mean, init_cov).map_err(|e| Error::config("init.cov", e.to_string()))?;
    let phi0 = parse_phi0("init.phi0", require(map, "init.phi0")?, d)?;
    let initial = GaussianInitial::new(init_dist, phi0).map_err(|e| Error::config("init.phi0", e.to_string()))?;

    let comparison = if preset == Preset::ComparisonFig3 {
        let methods = parse_list("comparison.methods", require(map, "comparison.methods")?, |k, s| {
            parse_method(k, s, map)
        })?;
        let n_grid = parse_list("comparison.N_grid", require(map, "comparison.N_grid")?, parse_usize)?;
        if n_grid.iter().any(|&n| n == 0) {
            return Err(Error::config("comparison.N_grid", "particle counts must be >= 1"));
        }
        let eps_grid = parse_list("comparison.eps_grid", require(map, "comparison.eps_grid")?, parse_f64)?;
        if eps_grid.iter().any(|&e| e <= 0.0) {
            return Err(Error::config("comparison.eps_grid", "bandwidths must be > 0"));
        }
        let timing_iterations = parse_usize(
            "comparison.timing_iterations",
            require(map, "comparison.timing_iterations")?,
        )?;
        if timing_iterations < 2 {
            return Err(Error::config("comparison.timing_iterations", "must be >= 2"));
        }
        Some(ComparisonSpec {
            methods,
            n_grid,
            eps_grid,
            timing_iterations,
        })
    } else {
        None
    };

    let method = match &comparison {
        Some(c) => c.methods[0],
        None => {
            let kind_s = require(map, "dynamics.kind")?;
            let dynamics = DynamicsKind::parse(kind_s).ok_or_else(|| {
                Error::config(
                    "dynamics.kind",
                    format!("unknown dynamics `{kind_s}` (accelerated, nesterov, mcmc, hmcmc or first_order_det)"),
                )
            })?;
            let interaction = parse_interaction("interaction.kind", require(map, "interaction.kind")?, map)?;
            if !dynamics.uses_interaction() && !interaction.is_none() {
                return Err(Error::config(
                    "interaction.kind",
                    format!("`{}` runs without interaction; set interaction.kind = none", dynamics.name()),
                ));
            }
            check_method("interaction.kind", &dynamics, &interaction)?;
            Method::new(dynamics, interaction)
        }
    };

    let dt = parse_f64("dynamics.dt", require(map, "dynamics.dt")?)?;
    if dt <= 0.0 {
        return Err(Error::config("dynamics.dt", format!("must be > 0, got {dt}")));
    }
    let k = parse_usize("dynamics.K", require(map, "dynamics.K")?)?;
    if k == 0 {
        return Err(Error::config("dynamics.K", "must be >= 1"));
    }
    let gamma_friction = match value(map, "dynamics.gamma_friction") {
        Some(g) => {
            let g = parse_f64("dynamics.gamma_friction", g)?;
            if g <= 0.0 {
                return Err(Error::config("dynamics.gamma_friction", "must be > 0"));
            }
            g
        }
        None => 0.0,
    };
    let x_update = match value(map, "dynamics.x_update") {
        None | Some("halfstep") => XUpdate::HalfStep,
        Some("paper") => XUpdate::PaperVerbatim,
        Some(other) => {
            return Err(Error::config("dynamics.x_update", format!("expected paper or halfstep, got `{other}`")))
        }
    };

    let n = parse_usize("N", require(map, "N")?)?;
    if n == 0 {
        return Err(Error::config("N", "must be >= 1"));
    }

    let master_seed = value(map, "master_seed").map(|s| parse_u64("master_seed", s)).transpose()?;
    let runs = value(map, "runs").map(|s| parse_usize("runs", s)).transpose()?;
    let listed = value(map, "seeds").map(|s| parse_list("seeds", s, parse_u64)).transpose()?;
    let seeds = match (master_seed, runs, listed) {
        (Some(_), None, _) => return Err(Error::config("runs", "master_seed needs runs")),
        (None, Some(_), _) => return Err(Error::config("master_seed", "runs needs master_seed")),
        (Some(_), Some(0), _) => return Err(Error::config("runs", "must be >= 1")),
        (Some(ms), Some(r), listed) => {
            let derived = derive_seeds(ms, r);
            if listed.is_some_and(|l| l != derived) {
                return Err(Error::config("seeds", "does not match the seeds derived from master_seed and runs"));
            }
            derived
        }
        (None, None, Some(l)) => l,
        (None, None, None) => return Err(Error::config("seeds", "no seeds given (set seeds or master_seed and runs)")),
    };

    let output_dir = PathBuf::from(require(map, "output_dir")?);
    let record_timing = parse_bool("output.record_timing", require(map, "output.record_timing")?)?;

    let test_fn_s = require(map, "metrics.test_fn")?;
    let test_fn = TestFunction::parse(test_fn_s).ok_or_else(|| {
        Error::config(
            "metrics.test_fn",
            format!("unknown test function `{test_fn_s}` (half_rectified_identity, mean or second_moment)"),
        )
    })?;
    let kl = match require(map, "metrics.kl")? {
        "auto" => match (&target, &comparison) {
            (_, Some(_)) => KlMethod::None,
            (TargetSpec::Gaussian { .. }, None) if n >= d + 2 => KlMethod::GaussianFit,
            (TargetSpec::Mixture { .. }, None) => KlMethod::Kde,
            _ => KlMethod::None,
        },
        "gaussian_fit" => {
            if !matches!(target, TargetSpec::Gaussian { .. }) {
                return Err(Error::config("metrics.kl", "gaussian_fit needs a gaussian target"));
            }
            KlMethod::GaussianFit
        }
        "kde" => {
            if d != 1 {
                return Err(Error::config("metrics.kl", "kde is available in one dimension only"));
            }
            KlMethod::Kde
        }
        "none" => KlMethod::None,
        other => {
            return Err(Error::config("metrics.kl", format!("expected auto, gaussian_fit, kde or none, got `{other}`")))
        }
    };

    let mut resolved: Vec<(String, String)> = Vec::new();
    for &key in KEYS {
        let v = match key {
            "preset" => preset.name().to_string(),
            "seeds" => seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            "metrics.kl" => kl.name().to_string(),
            "dynamics.x_update" if map.contains_key(key) => x_update.name().to_string(),
            _ => match value(map, key) {
                Some(v) => v.to_string(),
                None => continue,
            },
        };
        resolved.push((key.to_string(), v));
    }

    Ok(ExperimentConfig {
        preset,
        schedule,
        target,
        initial,
        method,
        dt,
        k,
        gamma_friction,
        x_update,
        n,
        seeds,
        master_seed,
        output_dir,
        record_timing,
        kl,
        test_fn,
        comparison,
        resolved,
    })
}

impl ExperimentConfig {
    /// Resolved `(key, value)` pairs in canonical order.
    pub fn resolved_pairs(&self) -> &[(String, String)] {
        &self.resolved
    }

    /// The resolved config as loadable text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the resolved values that influence results.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.resolved {
            if UNDIGESTED.contains(&k.as_str()) {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_target(&self) -> Result<Target> {
        self.target.build()
    }

    /// Methods run by this experiment: the comparison list or the single
    /// configured sampler.
    pub fn methods(&self) -> Vec<Method> {
        match &self.comparison {
            Some(c) => c.methods.clone(),
            None => vec![self.method],
        }
    }

    pub fn resolved_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.resolved.conf", self.preset))
    }

    /// Writes the resolved config into the output directory.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)?;
        let path = self.resolved_path();
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}

/// Loads a config file on its own, without a preset override.
pub fn load_config_file(path: &Path) -> Result<ExperimentConfig> {
    load_config(&ConfigSource {
        file: Some(path.to_path_buf()),
        ..ConfigSource::default()
    })
}
