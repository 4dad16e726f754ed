//! JSON documents emitted by `estimate` and `oracle`.

use serde::{Deserialize, Serialize};

use super::config::{DualsFile, OptimizerSettings};
use crate::error::{Error, Result};
use crate::estimation::EstimationReport;
use crate::optimizer::{DirectionResult, DualChoice, SplitResult, SweepRecord};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub(crate) fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidParameter(format!(
            "{what} is not finite ({x})"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub n_qubits: usize,
    pub n_shots: usize,
    pub povm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

/// Sample statistics of one estimator on one set of shots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std_error: f64,
    pub second_moment: f64,
    pub n_shots: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
}

impl Moments {
    pub fn from_report(r: &EstimationReport<f64>, truth: Option<f64>, what: &str) -> Result<Self> {
        Ok(Self {
            mean: finite(r.mean, what)?,
            std_error: finite(r.std_error, what)?,
            second_moment: finite(r.second_moment, what)?,
            n_shots: r.n_shots_used,
            abs_error: truth.map(|t| (t - r.mean).abs()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    /// `"AB"` trains on half A and estimates on half B.
    pub label: String,
    pub n_train: usize,
    pub selection: DualChoice,
    pub optimized: Moments,
    pub canonical: Moments,
    pub best_sweep: usize,
    pub stopped_early: bool,
    pub sweeps: Vec<SweepRecord>,
    pub chosen_duals: DualsFile,
}

impl DirectionReport {
    fn new(d: &DirectionResult<f64>, n_train: usize) -> Result<Self> {
        for r in &d.sweeps.trace {
            finite(r.train_objective, "training objective")?;
            finite(r.validation_objective, "validation objective")?;
        }
        Ok(Self {
            label: d.label.clone(),
            n_train,
            selection: d.selection,
            optimized: Moments::from_report(&d.optimized, None, "optimized estimate")?,
            canonical: Moments::from_report(&d.canonical, None, "canonical estimate")?,
            best_sweep: d.sweeps.best_sweep,
            stopped_early: d.sweeps.stopped_early,
            sweeps: d.sweeps.trace.clone(),
            chosen_duals: DualsFile::from_duals(&d.chosen_duals),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub mean: f64,
    pub std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
    pub directions: Vec<DirectionReport>,
}

impl SplitReport {
    pub fn new(r: &SplitResult<f64>, truth: Option<f64>) -> Result<Self> {
        Ok(Self {
            mean: finite(r.combined.mean, "combined mean")?,
            std_error: finite(r.combined.std_error, "combined standard error")?,
            abs_error: truth.map(|t| (t - r.combined.mean).abs()),
            directions: vec![
                DirectionReport::new(&r.ab, r.split_a.len())?,
                DirectionReport::new(&r.ba, r.split_b.len())?,
            ],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub observable: String,
    /// Reference value, supplied or computed from the prepared state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    pub canonical: Moments,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimized: Option<SplitReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub command: String,
    pub dataset: DatasetInfo,
    pub optimizer: OptimizerSettings,
    pub observables: Vec<ObservableReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub mean: f64,
    pub second_moment: f64,
    /// Per-shot variance `second_moment - mean^2`.
    pub variance: f64,
}

impl ExactMoments {
    pub fn new(m1: f64, m2: f64) -> Result<Self> {
        Ok(Self {
            mean: finite(m1, "exact mean")?,
            second_moment: finite(m2, "exact second moment")?,
            variance: m2 - m1 * m1,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub observable: String,
    pub exact_mean: f64,
    pub canonical: ExactMoments,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supplied: Option<ExactMoments>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub command: String,
    pub state: String,
    pub n_qubits: usize,
    pub observables: Vec<OracleEntry>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}
