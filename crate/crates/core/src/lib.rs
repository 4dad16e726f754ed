//! Observable estimation from informationally over-complete POVM shot data,
//! with post-measurement optimization of the dual effects.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below fix the scalar for everyday use.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::approx_constant,
    clippy::needless_range_loop
)]

pub mod error;
pub mod estimation;
pub mod frames;
pub mod io;
pub mod lbfgs;
pub mod linalg;
pub mod optimizer;
pub mod rng;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use estimation::{
    empirical_second_moment, estimate, exact_moments, exact_moments_product, exact_variance,
    exact_variance_product, mean_estimate, sample_moments, shot_weight, standard_error,
    EstimationReport, PauliObservable, PauliString, ShotDataset, ShotMeta, SplitDetail,
};
pub use frames::{
    assemble_duals, canonical_duals, params_from_duals, select_minimal_basis, HermitianOp,
    MinimalBasisSelection, Pauli, ProductDualSet, QubitDualParams, QubitDualSet, QubitFrame,
    SingleQubitPovm,
};
pub use optimizer::{
    objective_and_gradient, optimize_qubit, split_estimate, split_estimate_batch, sweep_optimize,
    DualChoice, InnerSolver, OptimizerConfig, QubitObjective, SplitResult, SweepOutcome,
};
pub use sampler::{
    exact_expectation, exact_outcome_distribution, sample_pauli6_shots, trotter_evolve,
    OutcomeDistribution, ProductDistribution, StateVector, TfimParams,
};
pub use scalar::Real;

pub type HermitianOpF64 = HermitianOp<f64>;
pub type PovmF64 = SingleQubitPovm<f64>;
pub type DualsF64 = ProductDualSet<f64>;
pub type ObservableF64 = PauliObservable<f64>;
pub type StateF64 = StateVector<f64>;
pub type ReportF64 = EstimationReport<f64>;
pub type OptimizerConfigF64 = OptimizerConfig<f64>;
pub type SplitResultF64 = SplitResult<f64>;

pub type HermitianOpF32 = HermitianOp<f32>;
pub type DualsF32 = ProductDualSet<f32>;
pub type ObservableF32 = PauliObservable<f32>;
pub type StateF32 = StateVector<f32>;
