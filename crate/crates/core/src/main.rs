use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use accelflow::harness::config::parse_assignment;
use accelflow::harness::run::parse_sweep_values;
use accelflow::harness::{load_config, run_experiment, sweep, ConfigSource, RunOutcome, SweepAxis};
use accelflow::Error;

/// Accelerated gradient flow samplers and their Langevin baselines.
#[derive(Parser, Debug)]
#[command(name = "accelflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a preset for every seed and write per-seed CSVs.
    Run(Common),
    /// Re-run the experiment for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary: N, K or epsilon.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `250,500,1000`.
        #[arg(long)]
        values: String,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// gaussian_fig1, mixture_fig2, comparison_fig3 or custom.
    #[arg(long)]
    preset: Option<String>,
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set schedule.C=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explicit seeds, comma-separated.
    #[arg(long, conflicts_with_all = ["master_seed", "runs"])]
    seeds: Option<String>,
    /// Master seed from which `--runs` seeds are derived.
    #[arg(long, requires = "runs")]
    master_seed: Option<u64>,
    /// Number of seeds to derive from `--master-seed`.
    #[arg(long, requires = "master_seed")]
    runs: Option<usize>,
}

impl Common {
    fn source(&self) -> accelflow::Result<ConfigSource> {
        let mut overrides = Vec::new();
        for s in &self.set {
            overrides.push(parse_assignment(s)?);
        }
        if let Some(out) = &self.out {
            overrides.push(("output_dir".into(), out.display().to_string()));
        }
        if let Some(s) = &self.seeds {
            overrides.push(("seeds".into(), s.clone()));
        }
        if let (Some(ms), Some(r)) = (self.master_seed, self.runs) {
            overrides.push(("master_seed".into(), ms.to_string()));
            overrides.push(("runs".into(), r.to_string()));
        }
        Ok(ConfigSource {
            preset: self.preset.clone(),
            file: self.config.clone(),
            overrides,
        })
    }
}

fn execute(cli: &Cli) -> accelflow::Result<RunOutcome> {
    match &cli.command {
        Command::Run(common) => {
            let cfg = load_config(&common.source()?)?;
            run_experiment(&cfg)
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load_config(&common.source()?)?;
            let axis = SweepAxis::parse(axis)
                .ok_or_else(|| Error::Config {
                    key: "sweep.axis".into(),
                    msg: format!("expected N, K or epsilon, got `{axis}`"),
                })?;
            let values = parse_sweep_values(axis, values)?;
            sweep(&cfg, axis, &values)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                log::debug!("wrote {}", f.display());
            }
            if outcome.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} seed run(s) failed", outcome.failures.len());
                ExitCode::from(1)
            }
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
