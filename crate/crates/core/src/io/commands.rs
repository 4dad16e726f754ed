//! Library side of the `sample`, `estimate` and `oracle` subcommands.

use std::io::Write;
use std::path::Path;

use super::config::{RunConfig, StateSpec};
use super::report::{
    finite, to_json, DatasetInfo, EstimateReport, ExactMoments, Moments, ObservableReport,
    OracleEntry, OracleReport, SplitReport, REPORT_SCHEMA_VERSION,
};
use super::shotfile::render_shot_file;
use crate::error::{Error, Result};
use crate::estimation::{estimate, exact_moments, PauliObservable, ShotDataset};
use crate::frames::ProductDualSet;
use crate::optimizer::split_estimate;
use crate::rng::GENERATOR_ID;
use crate::sampler::{
    exact_expectation, exact_outcome_distribution, sample_pauli6_shots, StateVector,
};

fn required_state(cfg: &RunConfig) -> Result<&StateSpec> {
    cfg.state
        .as_ref()
        .ok_or_else(|| Error::Config("no state given".into()))
}

/// Samples `cfg.shots` Pauli-6 shots of `cfg.state`.
pub fn cmd_sample(cfg: &RunConfig) -> Result<ShotDataset> {
    cfg.validate()?;
    let spec = required_state(cfg)?;
    if cfg.shots == 0 {
        return Err(Error::Config("shots must be positive".into()));
    }
    let state = spec.prepare()?;
    let mut data = sample_pauli6_shots(&state, cfg.shots, cfg.seed)?;
    data.meta.provenance = Some(spec.to_string());
    debug_assert_eq!(data.meta.generator.as_deref(), Some(GENERATOR_ID));
    Ok(data)
}

fn parse_observables(cfg: &RunConfig, n: usize) -> Result<Vec<PauliObservable<f64>>> {
    if cfg.observables.is_empty() {
        return Err(Error::Config("no observables given".into()));
    }
    cfg.observables.iter().map(|o| o.parse(n)).collect()
}

/// The state behind `data`, from the config or else the file header, when
/// it is small enough to simulate.
fn reference_state(cfg: &RunConfig, data: &ShotDataset) -> Result<Option<StateVector<f64>>> {
    let spec = match &cfg.state {
        Some(s) => Some(s.clone()),
        None => data
            .meta
            .provenance
            .as_deref()
            .and_then(|p| p.parse::<StateSpec>().ok()),
    };
    let Some(spec) = spec else { return Ok(None) };
    if spec.n_qubits() != data.n_qubits() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} qubits, shot file has {}",
            spec.n_qubits(),
            data.n_qubits()
        )));
    }
    if spec.n_qubits() > cfg.oracle_max_qubits {
        return Ok(None);
    }
    spec.prepare().map(Some)
}

pub fn cmd_estimate(cfg: &RunConfig, data: &ShotDataset) -> Result<EstimateReport> {
    cfg.validate()?;
    let n = data.n_qubits();
    let observables = parse_observables(cfg, n)?;
    let state = reference_state(cfg, data)?;
    let canonical = ProductDualSet::<f64>::canonical_pauli6(n);
    let opt_cfg = cfg.optimizer.to_config();

    let mut entries = Vec::with_capacity(observables.len());
    for (spec, obs) in cfg.observables.iter().zip(&observables) {
        let truth = match (spec.truth(), &state) {
            (Some(t), _) => Some(t),
            (None, Some(s)) => Some(finite(exact_expectation(s, obs)?, "exact expectation")?),
            (None, None) => None,
        };
        let can = Moments::from_report(
            &estimate(data, obs, &canonical)?,
            truth,
            "canonical estimate",
        )?;
        let optimized = if cfg.optimizer.enabled {
            Some(SplitReport::new(
                &split_estimate(data, obs, &canonical, &opt_cfg)?,
                truth,
            )?)
        } else {
            None
        };
        entries.push(ObservableReport {
            observable: obs.to_string(),
            exact: truth,
            canonical: can,
            optimized,
        });
    }

    Ok(EstimateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "estimate".into(),
        dataset: DatasetInfo {
            n_qubits: n,
            n_shots: data.n_shots(),
            povm: if data.meta.povm.is_empty() {
                "pauli6".into()
            } else {
                data.meta.povm.clone()
            },
            seed: data.meta.seed,
            generator: data.meta.generator.clone(),
            state: data.meta.provenance.clone(),
        },
        optimizer: cfg.optimizer.clone(),
        observables: entries,
    })
}

/// Exact expectation values and per-shot variances under canonical duals
/// and, if given, `supplied` duals.
pub fn cmd_oracle(cfg: &RunConfig, supplied: Option<&ProductDualSet<f64>>) -> Result<OracleReport> {
    cfg.validate()?;
    let spec = required_state(cfg)?;
    let n = spec.n_qubits();
    if n > cfg.oracle_max_qubits {
        return Err(Error::QubitCount {
            n,
            max: cfg.oracle_max_qubits,
        });
    }
    if let Some(d) = supplied {
        if d.n_qubits() != n {
            return Err(Error::DimensionMismatch(format!(
                "duals for {} qubits, state has {n}",
                d.n_qubits()
            )));
        }
    }
    let observables = parse_observables(cfg, n)?;
    let state = spec.prepare()?;
    let dist = exact_outcome_distribution(&state, cfg.oracle_max_qubits)?;
    let canonical = ProductDualSet::<f64>::canonical_pauli6(n);

    let mut entries = Vec::with_capacity(observables.len());
    for obs in &observables {
        let (m1, m2) = exact_moments(&dist, obs, &canonical)?;
        let supplied = match supplied {
            Some(d) => {
                let (s1, s2) = exact_moments(&dist, obs, d)?;
                Some(ExactMoments::new(s1, s2)?)
            }
            None => None,
        };
        entries.push(OracleEntry {
            observable: obs.to_string(),
            exact_mean: finite(exact_expectation(&state, obs)?, "exact expectation")?,
            canonical: ExactMoments::new(m1, m2)?,
            supplied,
        });
    }
    Ok(OracleReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "oracle".into(),
        state: spec.to_string(),
        n_qubits: n,
        observables: entries,
    })
}

/// Writes to `path`, or to stdout when it is `None`.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn render_sample(data: &ShotDataset) -> String {
    render_shot_file(data)
}

pub fn render_report<T: serde::Serialize>(doc: &T) -> Result<String> {
    to_json(doc)
}
