#![allow(clippy::approx_constant)]

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use povm_duals::io::{
    cmd_estimate, cmd_oracle, cmd_sample, load_shot_file, render_report, render_sample,
    write_output, DualsFile, ObservableSpec, RunConfig, StateSpec,
};
use povm_duals::InnerSolver;

/// Pauli-6 shot sampling and observable estimation with optimized dual effects.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample Pauli-6 shots from a prepared state into a shot file.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long)]
        shots: Option<usize>,
    },
    /// Estimate observables from a shot file; prints a JSON report.
    Estimate {
        /// Shot file (overrides `input` in the config).
        shot_file: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Exact expectation values and per-shot variances for a prepared state.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        state: StateArgs,
        /// JSON duals file to evaluate alongside the canonical duals.
        #[arg(long)]
        duals: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sampling seed for `sample`, split seed for `estimate`.
    #[arg(long)]
    seed: Option<u64>,
    /// Observable such as "0.5*ZZI + XIX"; repeatable.
    #[arg(long = "obs")]
    observables: Vec<String>,
    /// Write here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateKind {
    Zero,
    Tfim,
}

#[derive(Args)]
struct StateArgs {
    #[arg(long, value_enum)]
    state: Option<StateKind>,
    #[arg(long, short = 'n')]
    qubits: Option<usize>,
    /// Ising coupling.
    #[arg(long, allow_negative_numbers = true)]
    j: Option<f64>,
    /// Transverse field.
    #[arg(long, allow_negative_numbers = true)]
    h: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Lbfgs,
    Exact,
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long)]
    sweeps: Option<usize>,
    /// Report canonical-dual estimates only.
    #[arg(long)]
    no_optimize: bool,
    #[arg(long, value_enum)]
    solver: Option<Solver>,
}

impl StateArgs {
    fn any(&self) -> bool {
        self.state.is_some()
            || self.qubits.is_some()
            || self.j.is_some()
            || self.h.is_some()
            || self.dt.is_some()
            || self.steps.is_some()
    }

    fn apply(&self, base: Option<&StateSpec>) -> anyhow::Result<Option<StateSpec>> {
        if !self.any() {
            return Ok(base.cloned());
        }
        let (base_n, base_tfim) = match base {
            Some(StateSpec::Zero { n_qubits }) => (Some(*n_qubits), None),
            Some(StateSpec::Tfim {
                n_qubits,
                j,
                h,
                dt,
                steps,
            }) => (Some(*n_qubits), Some((*j, *h, *dt, *steps))),
            None => (None, None),
        };
        let Some(n_qubits) = self.qubits.or(base_n) else {
            bail!("--qubits is required to describe the state");
        };
        let kind = self.state.unwrap_or(if base_tfim.is_some() {
            StateKind::Tfim
        } else {
            StateKind::Zero
        });
        Ok(Some(match kind {
            StateKind::Zero => {
                if self.j.is_some() || self.h.is_some() || self.dt.is_some() || self.steps.is_some()
                {
                    bail!("--j, --h, --dt and --steps only apply to --state tfim");
                }
                StateSpec::Zero { n_qubits }
            }
            StateKind::Tfim => {
                let (j0, h0, dt0, s0) = base_tfim.unwrap_or((0.5236, 1.0, 0.1, 1));
                StateSpec::Tfim {
                    n_qubits,
                    j: self.j.unwrap_or(j0),
                    h: self.h.unwrap_or(h0),
                    dt: self.dt.unwrap_or(dt0),
                    steps: self.steps.unwrap_or(s0),
                }
            }
        }))
    }
}

fn base_config(common: &Common, state: &StateArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    cfg.state = state.apply(cfg.state.as_ref())?;
    if !common.observables.is_empty() {
        cfg.observables = common
            .observables
            .iter()
            .cloned()
            .map(ObservableSpec::Plain)
            .collect();
    }
    Ok(cfg)
}

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    write_output(path, text).with_context(|| match path {
        Some(p) => format!("writing {}", p.display()),
        None => "writing to stdout".into(),
    })
}

fn load_duals(path: &Path, n_qubits: usize) -> anyhow::Result<povm_duals::DualsF64> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: DualsFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    file.to_duals(n_qubits)
        .with_context(|| format!("duals in {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sample {
            common,
            state,
            shots,
        } => {
            let mut cfg = base_config(&common, &state)?;
            if let Some(s) = shots {
                cfg.shots = s;
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let data = cmd_sample(&cfg)?;
            let dest = common.output.as_deref().or(cfg.output.as_deref());
            emit(dest, &render_sample(&data))
        }
        Command::Estimate {
            shot_file,
            common,
            state,
            optimizer,
        } => {
            let mut cfg = base_config(&common, &state)?;
            if let Some(p) = shot_file {
                cfg.input = Some(p);
            }
            if let Some(s) = common.seed {
                cfg.optimizer.split_seed = s;
            }
            if let Some(n) = optimizer.sweeps {
                cfg.optimizer.n_sweeps = n;
            }
            if optimizer.no_optimize {
                cfg.optimizer.enabled = false;
            }
            match optimizer.solver {
                Some(Solver::Lbfgs) => cfg.optimizer.inner_solver = InnerSolver::Lbfgs,
                Some(Solver::Exact) => cfg.optimizer.inner_solver = InnerSolver::ExactQuadratic,
                None => {}
            }
            let Some(input) = cfg.input.clone() else {
                bail!("no shot file given")
            };
            let data =
                load_shot_file(&input).with_context(|| format!("reading {}", input.display()))?;
            let report = cmd_estimate(&cfg, &data)?;
            emit(common.output.as_deref(), &render_report(&report)?)
        }
        Command::Oracle {
            common,
            state,
            duals,
        } => {
            let mut cfg = base_config(&common, &state)?;
            if duals.is_some() {
                cfg.duals = duals;
            }
            let supplied = match (&cfg.duals, &cfg.state) {
                (Some(p), Some(s)) => Some(load_duals(p, s.n_qubits())?),
                _ => None,
            };
            let report = cmd_oracle(&cfg, supplied.as_ref())?;
            emit(common.output.as_deref(), &render_report(&report)?)
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
