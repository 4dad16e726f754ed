//! Run configuration: TOML file, overridden field by field by CLI flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::PauliObservable;
use crate::frames::{HermitianOp, ProductDualSet, QubitDualSet, QubitFrame};
use crate::optimizer::{InnerSolver, OptimizerConfig};
use crate::sampler::{trotter_evolve, StateVector, TfimParams, DEFAULT_MAX_QUBITS};

/// Prepared state. `Tfim` evolves `|0...0>` under
/// `H = -J sum Z_i Z_{i+1} + h sum X_i` on an open chain with first-order
/// Trotter steps of length `dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Zero {
        n_qubits: usize,
    },
    Tfim {
        n_qubits: usize,
        j: f64,
        h: f64,
        dt: f64,
        steps: usize,
    },
}

impl StateSpec {
    pub fn n_qubits(&self) -> usize {
        match *self {
            StateSpec::Zero { n_qubits } | StateSpec::Tfim { n_qubits, .. } => n_qubits,
        }
    }

    pub fn prepare(&self) -> Result<StateVector<f64>> {
        match *self {
            StateSpec::Zero { n_qubits } => StateVector::zero_state(n_qubits),
            StateSpec::Tfim {
                n_qubits,
                j,
                h,
                dt,
                steps,
            } => {
                let p = TfimParams {
                    n_qubits,
                    j,
                    h,
                    dt,
                    steps,
                };
                p.validate()?;
                trotter_evolve(&StateVector::zero_state(n_qubits)?, &p)
            }
        }
    }
}

/// Provenance string written into shot file headers, e.g.
/// `tfim:n=6,J=0.5236,h=1,dt=0.1,steps=2`.
impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Zero { n_qubits } => write!(f, "zero:n={n_qubits}"),
            StateSpec::Tfim {
                n_qubits,
                j,
                h,
                dt,
                steps,
            } => {
                write!(f, "tfim:n={n_qubits},J={j},h={h},dt={dt},steps={steps}")
            }
        }
    }
}

impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("state '{s}': {m}"));
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| bad("expected kind:key=value,..."))?;
        let mut fields = std::collections::BTreeMap::new();
        for kv in rest.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad("expected key=value"))?;
            if fields.insert(k, v).is_some() {
                return Err(bad(&format!("duplicate key {k}")));
            }
        }
        let mut take = |k: &str| fields.remove(k).ok_or_else(|| bad(&format!("missing {k}")));
        let count = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| bad(&format!("'{v}' is not a count")))
        };
        let real = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| bad(&format!("'{v}' is not a number")))
        };
        let spec = match kind {
            "zero" => StateSpec::Zero {
                n_qubits: count(take("n")?)?,
            },
            "tfim" => StateSpec::Tfim {
                n_qubits: count(take("n")?)?,
                j: real(take("J")?)?,
                h: real(take("h")?)?,
                dt: real(take("dt")?)?,
                steps: count(take("steps")?)?,
            },
            _ => return Err(bad("unknown kind")),
        };
        if let Some(k) = fields.keys().next() {
            return Err(bad(&format!("unknown key {k}")));
        }
        Ok(spec)
    }
}

/// An observable, optionally with a known expectation value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Plain(String),
    WithTruth { expr: String, truth: f64 },
}

impl ObservableSpec {
    pub fn expr(&self) -> &str {
        match self {
            ObservableSpec::Plain(e) | ObservableSpec::WithTruth { expr: e, .. } => e,
        }
    }

    pub fn truth(&self) -> Option<f64> {
        match self {
            ObservableSpec::Plain(_) => None,
            ObservableSpec::WithTruth { truth, .. } => Some(*truth),
        }
    }

    pub fn parse(&self, n_qubits: usize) -> Result<PauliObservable<f64>> {
        PauliObservable::parse(n_qubits, self.expr())
    }
}

/// Optimizer settings as they appear in config files and reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub enabled: bool,
    pub n_sweeps: usize,
    pub max_inner_iters: usize,
    pub grad_tol: f64,
    pub overfit_patience: usize,
    pub overfit_ratio: f64,
    pub split_seed: u64,
    pub lbfgs_memory: usize,
    pub inner_solver: InnerSolver,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self::from_config(true, &OptimizerConfig::default())
    }
}

impl OptimizerSettings {
    pub fn from_config(enabled: bool, c: &OptimizerConfig<f64>) -> Self {
        Self {
            enabled,
            n_sweeps: c.n_sweeps,
            max_inner_iters: c.max_inner_iters,
            grad_tol: c.grad_tol,
            overfit_patience: c.overfit_patience,
            overfit_ratio: c.overfit_ratio,
            split_seed: c.rng_seed,
            lbfgs_memory: c.lbfgs_memory,
            inner_solver: c.inner_solver,
        }
    }

    pub fn to_config(&self) -> OptimizerConfig<f64> {
        OptimizerConfig {
            n_sweeps: self.n_sweeps,
            max_inner_iters: self.max_inner_iters,
            grad_tol: self.grad_tol,
            overfit_patience: self.overfit_patience,
            overfit_ratio: self.overfit_ratio,
            rng_seed: self.split_seed,
            lbfgs_memory: self.lbfgs_memory,
            inner_solver: self.inner_solver,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub state: Option<StateSpec>,
    pub observables: Vec<ObservableSpec>,
    pub shots: usize,
    pub seed: u64,
    pub optimizer: OptimizerSettings,
    /// Largest register for which exact reference values are computed.
    pub oracle_max_qubits: usize,
    /// Shot file read by `estimate`.
    pub input: Option<PathBuf>,
    /// Shot file written by `sample`. Reports go to stdout unless `-o` is given.
    pub output: Option<PathBuf>,
    pub duals: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            state: None,
            observables: Vec::new(),
            shots: 10_000,
            seed: 0,
            optimizer: OptimizerSettings::default(),
            oracle_max_qubits: crate::sampler::DEFAULT_ORACLE_MAX_QUBITS,
            input: None,
            output: None,
            duals: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Checks that hold for every subcommand.
    pub fn validate(&self) -> Result<()> {
        if let Some(state) = &self.state {
            let n = state.n_qubits();
            if n == 0 || n > DEFAULT_MAX_QUBITS {
                return Err(Error::QubitCount {
                    n,
                    max: DEFAULT_MAX_QUBITS,
                });
            }
            if let StateSpec::Tfim {
                n_qubits,
                j,
                h,
                dt,
                steps,
            } = *state
            {
                TfimParams {
                    n_qubits,
                    j,
                    h,
                    dt,
                    steps,
                }
                .validate()?;
            }
            for o in &self.observables {
                o.parse(n)?;
            }
        }
        for o in &self.observables {
            if o.truth().is_some_and(|t| !t.is_finite()) {
                return Err(Error::Config(format!(
                    "non-finite truth for '{}'",
                    o.expr()
                )));
            }
        }
        if self.oracle_max_qubits == 0 {
            return Err(Error::Config("oracle_max_qubits must be positive".into()));
        }
        self.optimizer.to_config().validate()
    }
}

/// Per-qubit dual operators in Pauli coordinates `[I, X, Y, Z]`, one list of
/// six per qubit in Pauli-6 outcome order. A single entry applies to every
/// qubit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualsFile {
    pub schema_version: u32,
    pub qubits: Vec<Vec<[f64; 4]>>,
}

pub const DUALS_SCHEMA_VERSION: u32 = 1;

impl DualsFile {
    pub fn from_duals(duals: &ProductDualSet<f64>) -> Self {
        let qubits = duals
            .qubits()
            .iter()
            .map(|q| q.duals().duals().iter().map(|d| *d.coeffs()).collect())
            .collect();
        Self {
            schema_version: DUALS_SCHEMA_VERSION,
            qubits,
        }
    }

    /// Validated Pauli-6 dual set on `n_qubits` qubits.
    pub fn to_duals(&self, n_qubits: usize) -> Result<ProductDualSet<f64>> {
        if self.schema_version != DUALS_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported duals schema {}",
                self.schema_version
            )));
        }
        let per_qubit: Vec<&Vec<[f64; 4]>> = match self.qubits.len() {
            1 => vec![&self.qubits[0]; n_qubits],
            k if k == n_qubits => self.qubits.iter().collect(),
            k => {
                return Err(Error::DimensionMismatch(format!(
                    "duals file has {k} qubits, expected 1 or {n_qubits}"
                )))
            }
        };
        let frame = Arc::new(QubitFrame::pauli6());
        let sets = per_qubit
            .into_iter()
            .map(|ops| QubitDualSet::new(ops.iter().map(|c| HermitianOp::new(*c)).collect()))
            .collect::<Vec<_>>();
        for (q, s) in sets.iter().enumerate() {
            if s.len() != frame.povm.n_outcomes() {
                return Err(Error::DimensionMismatch(format!(
                    "qubit {q}: {} duals for {} outcomes",
                    s.len(),
                    frame.povm.n_outcomes()
                )));
            }
            if s.duals().iter().any(|d| !d.is_finite()) {
                return Err(Error::Config(format!(
                    "qubit {q}: non-finite dual coefficient"
                )));
            }
            let r = s.duality_residual(&frame.povm);
            if r > 1e-8 {
                return Err(Error::NotADual { residual: r });
            }
        }
        ProductDualSet::from_dual_sets(vec![frame; n_qubits], sets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_round_trip() {
        for s in [
            StateSpec::Zero { n_qubits: 3 },
            StateSpec::Tfim {
                n_qubits: 6,
                j: 0.5236,
                h: 1.0,
                dt: 0.1,
                steps: 2,
            },
        ] {
            let text = s.to_string();
            assert_eq!(text.parse::<StateSpec>().unwrap(), s);
        }
        assert_eq!(
            StateSpec::Tfim {
                n_qubits: 6,
                j: 0.5236,
                h: 1.0,
                dt: 0.1,
                steps: 2
            }
            .to_string(),
            "tfim:n=6,J=0.5236,h=1,dt=0.1,steps=2"
        );
        assert!("tfim:n=2,J=1".parse::<StateSpec>().is_err());
        assert!("zero:n=2,x=1".parse::<StateSpec>().is_err());
        assert!("ghz:n=2".parse::<StateSpec>().is_err());
    }

    #[test]
    fn toml_config() {
        let cfg = RunConfig::from_toml(
            r#"
            shots = 500
            seed = 3
            observables = ["ZZ", { expr = "XX", truth = 0.25 }]
            [state]
            kind = "tfim"
            n_qubits = 2
            j = 0.5236
            h = 1.0
            dt = 0.1
            steps = 1
            [optimizer]
            n_sweeps = 5
            inner_solver = "exact_quadratic"
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.shots, 500);
        assert_eq!(cfg.observables[1].truth(), Some(0.25));
        assert_eq!(cfg.optimizer.n_sweeps, 5);
        assert_eq!(cfg.optimizer.max_inner_iters, 50);
        assert_eq!(cfg.optimizer.inner_solver, InnerSolver::ExactQuadratic);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("shotz = 5").is_err());
        assert!(RunConfig::from_toml("[optimizer]\nsweeps = 5").is_err());
        assert!(RunConfig::from_toml("[state]\nkind = \"zero\"\nn_qubits = 2\nj = 1.0").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig {
            state: Some(StateSpec::Zero { n_qubits: 2 }),
            ..Default::default()
        };
        cfg.validate().unwrap();
        cfg.observables = vec![ObservableSpec::Plain("ZZZ".into())];
        assert!(cfg.validate().is_err());
        cfg.observables.clear();
        cfg.state = Some(StateSpec::Zero { n_qubits: 40 });
        assert!(matches!(cfg.validate(), Err(Error::QubitCount { .. })));
        cfg.state = Some(StateSpec::Tfim {
            n_qubits: 2,
            j: 1.0,
            h: 1.0,
            dt: f64::NAN,
            steps: 1,
        });
        assert!(cfg.validate().is_err());
        cfg.state = None;
        cfg.optimizer.overfit_ratio = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn duals_file_round_trip() {
        let d = ProductDualSet::<f64>::canonical_pauli6(3);
        let file = DualsFile::from_duals(&d);
        let back = file.to_duals(3).unwrap();
        assert!(back.max_duality_residual() < 1e-12);
        let single = DualsFile {
            schema_version: 1,
            qubits: vec![file.qubits[0].clone()],
        };
        assert_eq!(single.to_duals(3).unwrap().n_qubits(), 3);
        let mut bad = file.clone();
        bad.qubits[1][0][3] += 0.1;
        assert!(matches!(bad.to_duals(3), Err(Error::NotADual { .. })));
        assert!(file.to_duals(2).is_err());
    }
}
