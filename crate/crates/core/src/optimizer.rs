//! Post-measurement dual optimization.
//!
//! For a fixed observable, each shot weight `Tr[O D_outcome]` is affine in the
//! free parameters of any single qubit, so the empirical second moment is a
//! convex quadratic in that qubit's parameters. [`sweep_optimize`] minimizes
//! it qubit by qubit with L-BFGS, watching the second moment on a held-out set
//! to stop before overfitting. [`split_estimate`] trains on one half of the
//! data, estimates on the other, swaps the halves, and averages.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    empirical_second_moment, estimate, EstimationReport, PauliObservable, ShotDataset, SplitDetail,
    TermTable,
};
use crate::frames::{assemble_duals, tol, ProductDualSet, QubitDualParams, QubitFrame};
use crate::lbfgs::{self, LbfgsConfig, Termination};
use crate::linalg;
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Limited-memory quasi-Newton iterations.
    Lbfgs,
    /// Direct solve of the normal equations of the per-qubit quadratic.
    ExactQuadratic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig<T> {
    pub n_sweeps: usize,
    pub max_inner_iters: usize,
    pub grad_tol: T,
    pub overfit_patience: usize,
    /// Validation second moment above `best * overfit_ratio` counts as a bad sweep.
    pub overfit_ratio: T,
    /// Seed of the permutation that splits the data.
    pub rng_seed: u64,
    pub lbfgs_memory: usize,
    pub inner_solver: InnerSolver,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            n_sweeps: 20,
            max_inner_iters: 50,
            grad_tol: T::lit(1e-8),
            overfit_patience: 1,
            overfit_ratio: T::lit(1.02),
            rng_seed: 0,
            lbfgs_memory: 10,
            inner_solver: InnerSolver::Lbfgs,
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_inner_iters == 0 || self.overfit_patience == 0 || self.lbfgs_memory == 0 {
            return Err(Error::InvalidParameter(
                "max_inner_iters, overfit_patience and lbfgs_memory must be positive".into(),
            ));
        }
        if !(self.grad_tol > T::zero()) {
            return Err(Error::InvalidParameter("grad_tol must be positive".into()));
        }
        if !(self.overfit_ratio > T::one()) || !self.overfit_ratio.is_finite() {
            return Err(Error::InvalidParameter(
                "overfit_ratio must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// Empirical second moment of one qubit's parameters with every other qubit
/// held fixed.
///
/// With `A_s[P]` the sum of `c_t * prod_{q' != q} Tr[P_{t,q'} D_{q'}]` over
/// terms whose Pauli on qubit `q` is `P`, the shot weight is
/// `w_s = sum_P A_s[P] Tr[P D_{i_s}]`, so only the per-outcome Gram matrices
/// `G_i = sum_{s: i_s = i} A_s A_s^T` are needed.
#[derive(Clone, Debug)]
pub struct QubitObjective<T> {
    frame: Arc<QubitFrame<T>>,
    gram: Vec<[T; 16]>,
    /// `alpha[i][k] = d Tr[P D_i] / d theta_k[P]`, the same for every `P`.
    alpha: Vec<Vec<T>>,
    n_shots: usize,
}

impl<T: Real> QubitObjective<T> {
    pub fn build(
        data: &ShotDataset,
        obs: &PauliObservable<T>,
        duals: &ProductDualSet<T>,
        qubit: usize,
    ) -> Result<Self> {
        check_inputs(data, obs, duals)?;
        if qubit >= data.n_qubits() {
            return Err(Error::DimensionMismatch(format!(
                "qubit {qubit} out of range for {} qubits",
                data.n_qubits()
            )));
        }
        let table = TermTable::new(obs);
        let mut this = Self::empty(duals.qubit(qubit).frame().clone(), data.n_shots());
        for shot in data.shots() {
            let mut a = [T::zero(); 4];
            for t in 0..table.n_terms() {
                let term = table.term(t);
                let mut prod = table.coefs[t];
                for (q, (&p, &i)) in term.iter().zip(shot).enumerate() {
                    if q != qubit {
                        prod *= duals.qubit(q).traces()[i as usize][p as usize];
                    }
                }
                a[term[qubit] as usize] += prod;
            }
            this.accumulate(shot[qubit] as usize, &a);
        }
        Ok(this)
    }

    fn empty(frame: Arc<QubitFrame<T>>, n_shots: usize) -> Self {
        let sel = &frame.selection;
        let r = sel.n_outcomes();
        let k = sel.redundant_indices.len();
        let two = T::lit(2.0);
        let mut alpha = vec![vec![T::zero(); k]; r];
        for (b_pos, &b) in sel.basis_indices.iter().enumerate() {
            for (kk, row) in sel.overlap.iter().enumerate() {
                alpha[b][kk] = -two * row[b_pos];
            }
        }
        for (kk, &j) in sel.redundant_indices.iter().enumerate() {
            alpha[j][kk] = two;
        }
        Self {
            gram: vec![[T::zero(); 16]; r],
            alpha,
            frame,
            n_shots,
        }
    }

    #[inline]
    fn accumulate(&mut self, outcome: usize, a: &[T; 4]) {
        let g = &mut self.gram[outcome];
        for p in 0..4 {
            for q in 0..4 {
                g[p * 4 + q] += a[p] * a[q];
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.frame.selection.n_params()
    }

    pub fn frame(&self) -> &Arc<QubitFrame<T>> {
        &self.frame
    }

    /// Objective at `theta`; writes the gradient into `grad`.
    pub fn value_and_gradient(&self, theta: &[T], grad: &mut [T]) -> T {
        let params = QubitDualParams::from_flat(theta);
        let traces = assemble_duals(&self.frame.selection, &params).trace_table();
        let s = T::count(self.n_shots);
        let two_over_s = T::lit(2.0) / s;
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut value = T::zero();
        for (i, (g, t)) in self.gram.iter().zip(&traces).enumerate() {
            let mut gt = [T::zero(); 4];
            for p in 0..4 {
                gt[p] = (0..4).map(|q| g[p * 4 + q] * t[q]).sum();
            }
            value += (0..4).map(|p| t[p] * gt[p]).sum::<T>();
            for (k, &a) in self.alpha[i].iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for p in 0..4 {
                    grad[k * 4 + p] += a * two_over_s * gt[p];
                }
            }
        }
        value / s
    }

    pub fn value(&self, theta: &[T]) -> T {
        let mut g = vec![T::zero(); theta.len()];
        self.value_and_gradient(theta, &mut g)
    }

    /// `(2/S) sum_s g_s g_s^T`, with `g_s` the gradient of shot weight `s`.
    pub fn hessian(&self) -> Vec<T> {
        let n = self.n_params();
        let k = n / 4;
        let two_over_s = T::lit(2.0) / T::count(self.n_shots);
        let mut h = vec![T::zero(); n * n];
        for (g, a) in self.gram.iter().zip(&self.alpha) {
            for k1 in 0..k {
                for k2 in 0..k {
                    let w = a[k1] * a[k2];
                    if w == T::zero() {
                        continue;
                    }
                    for p in 0..4 {
                        for q in 0..4 {
                            h[(k1 * 4 + p) * n + k2 * 4 + q] += two_over_s * w * g[p * 4 + q];
                        }
                    }
                }
            }
        }
        h
    }

    /// A global minimizer of the quadratic from its normal equations.
    pub fn exact_minimizer(&self) -> Vec<T> {
        let n = self.n_params();
        let zero = vec![T::zero(); n];
        let mut g0 = vec![T::zero(); n];
        self.value_and_gradient(&zero, &mut g0);
        let rhs: Vec<T> = g0.iter().map(|&v| -v).collect();
        linalg::solve_psd(&self.hessian(), &rhs, n, tol::<T>(1e-13))
    }
}

fn check_inputs<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<()> {
    if obs.n_qubits() != data.n_qubits() || duals.n_qubits() != data.n_qubits() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} qubits, observable {}, duals {}",
            data.n_qubits(),
            obs.n_qubits(),
            duals.n_qubits()
        )));
    }
    Ok(())
}

/// Empirical second moment and its gradient with respect to `qubit`'s
/// free parameters, at the current duals.
pub fn objective_and_gradient<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
    qubit: usize,
) -> Result<(T, Vec<T>)> {
    let objective = QubitObjective::build(data, obs, duals, qubit)?;
    let theta = duals.qubit(qubit).params().to_flat();
    let mut grad = vec![T::zero(); theta.len()];
    let f = objective.value_and_gradient(&theta, &mut grad);
    Ok((f, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QubitUpdate<T> {
    pub params: QubitDualParams<T>,
    pub objective_before: T,
    pub objective_after: T,
    pub iterations: usize,
}

fn solve_qubit<T: Real>(
    objective: &QubitObjective<T>,
    start: &QubitDualParams<T>,
    qubit: usize,
    cfg: &OptimizerConfig<T>,
) -> Result<QubitUpdate<T>> {
    let theta0 = start.to_flat();
    let f0 = objective.value(&theta0);
    if !f0.is_finite() {
        return Err(Error::NonFinite { qubit });
    }
    let (theta, f, iterations) = match cfg.inner_solver {
        InnerSolver::Lbfgs => {
            let lcfg = LbfgsConfig {
                memory: cfg.lbfgs_memory,
                max_iters: cfg.max_inner_iters,
                grad_tol: cfg.grad_tol,
                ..LbfgsConfig::default()
            };
            let m = lbfgs::minimize(|x, g| objective.value_and_gradient(x, g), &theta0, &lcfg);
            if m.termination == Termination::NonFinite {
                return Err(Error::NonFinite { qubit });
            }
            (m.x, m.f, m.iterations)
        }
        InnerSolver::ExactQuadratic => {
            let x = objective.exact_minimizer();
            let f = objective.value(&x);
            if !f.is_finite() {
                return Err(Error::NonFinite { qubit });
            }
            (x, f, 1)
        }
    };
    if f <= f0 {
        Ok(QubitUpdate {
            params: QubitDualParams::from_flat(&theta),
            objective_before: f0,
            objective_after: f,
            iterations,
        })
    } else {
        Ok(QubitUpdate {
            params: start.clone(),
            objective_before: f0,
            objective_after: f0,
            iterations,
        })
    }
}

/// Replaces `qubit`'s parameters with the minimizer of the training second
/// moment. Never increases the objective.
pub fn optimize_qubit<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
    qubit: usize,
    cfg: &OptimizerConfig<T>,
) -> Result<ProductDualSet<T>> {
    cfg.validate()?;
    if obs.is_identity_only() {
        check_inputs(data, obs, duals)?;
        return Ok(duals.clone());
    }
    let objective = QubitObjective::build(data, obs, duals, qubit)?;
    let update = solve_qubit(&objective, duals.qubit(qubit).params(), qubit, cfg)?;
    Ok(duals.with_params(qubit, update.params))
}

/// Per-(shot, term) products `c_t prod_q Tr[P_tq D_q]` for the training set,
/// kept current across qubit updates so one sweep costs `O(S T N)`.
struct WeightCache<T> {
    n_terms: usize,
    products: Vec<T>,
    partial: Vec<T>,
}

impl<T: Real> WeightCache<T> {
    fn new(table: &TermTable<T>, data: &ShotDataset, duals: &ProductDualSet<T>) -> Self {
        let nt = table.n_terms();
        let mut products = Vec::with_capacity(data.n_shots() * nt);
        for shot in data.shots() {
            for t in 0..nt {
                let mut prod = table.coefs[t];
                for (q, (&p, &i)) in table.term(t).iter().zip(shot).enumerate() {
                    prod *= duals.qubit(q).traces()[i as usize][p as usize];
                }
                products.push(prod);
            }
        }
        Self {
            n_terms: nt,
            partial: vec![T::zero(); products.len()],
            products,
        }
    }

    /// Fills the leave-`qubit`-out products and returns the qubit objective.
    fn objective(
        &mut self,
        table: &TermTable<T>,
        data: &ShotDataset,
        duals: &ProductDualSet<T>,
        qubit: usize,
    ) -> QubitObjective<T> {
        let mut obj = QubitObjective::empty(duals.qubit(qubit).frame().clone(), data.n_shots());
        let traces = duals.qubit(qubit).traces();
        for (s, shot) in data.shots().enumerate() {
            let mut a = [T::zero(); 4];
            let i = shot[qubit] as usize;
            for t in 0..self.n_terms {
                let idx = s * self.n_terms + t;
                let term = table.term(t);
                let p = term[qubit] as usize;
                let f = traces[i][p];
                let rest = if f != T::zero() {
                    self.products[idx] / f
                } else {
                    let mut prod = table.coefs[t];
                    for (q, (&pp, &ii)) in term.iter().zip(shot).enumerate() {
                        if q != qubit {
                            prod *= duals.qubit(q).traces()[ii as usize][pp as usize];
                        }
                    }
                    prod
                };
                self.partial[idx] = rest;
                a[p] += rest;
            }
            obj.accumulate(i, &a);
        }
        obj
    }

    /// Folds `qubit`'s new traces back in after its update.
    fn commit(
        &mut self,
        table: &TermTable<T>,
        data: &ShotDataset,
        duals: &ProductDualSet<T>,
        qubit: usize,
    ) {
        let traces = duals.qubit(qubit).traces();
        for (s, shot) in data.shots().enumerate() {
            let i = shot[qubit] as usize;
            for t in 0..self.n_terms {
                let idx = s * self.n_terms + t;
                self.products[idx] = self.partial[idx] * traces[i][table.term(t)[qubit] as usize];
            }
        }
    }

    fn second_moment(&self) -> T {
        let total: T = self
            .products
            .chunks_exact(self.n_terms)
            .map(|c| {
                let w: T = c.iter().copied().sum();
                w * w
            })
            .sum();
        total / T::count(self.products.len() / self.n_terms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// 0 is the starting point.
    pub sweep: usize,
    pub train_objective: f64,
    pub validation_objective: f64,
    pub duality_residual: f64,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome<T> {
    /// Duals with the lowest validation second moment seen.
    pub duals: ProductDualSet<T>,
    pub trace: Vec<SweepRecord>,
    pub best_sweep: usize,
    pub stopped_early: bool,
}

/// Qubit-by-qubit minimization of the training second moment, up to
/// `cfg.n_sweeps` passes. After every pass the validation second moment is
/// recorded; `overfit_patience` consecutive passes above
/// `best * overfit_ratio` stop the run, and the best validated duals are
/// returned.
pub fn sweep_optimize<T: Real>(
    train: &ShotDataset,
    validation: &ShotDataset,
    obs: &PauliObservable<T>,
    init: &ProductDualSet<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<SweepOutcome<T>> {
    cfg.validate()?;
    check_inputs(train, obs, init)?;
    check_inputs(validation, obs, init)?;

    let table = TermTable::new(obs);
    let mut cache = WeightCache::new(&table, train, init);
    let mut best_val = empirical_second_moment(validation, obs, init)?;
    let mut trace = vec![SweepRecord {
        sweep: 0,
        train_objective: cache.second_moment().as_f64(),
        validation_objective: best_val.as_f64(),
        duality_residual: init.max_duality_residual().as_f64(),
    }];
    let mut outcome = SweepOutcome {
        duals: init.clone(),
        trace: Vec::new(),
        best_sweep: 0,
        stopped_early: false,
    };
    if cfg.n_sweeps == 0 || obs.is_identity_only() {
        outcome.trace = trace;
        return Ok(outcome);
    }

    let mut current = init.clone();
    let mut bad = 0;
    for sweep in 1..=cfg.n_sweeps {
        for q in 0..current.n_qubits() {
            let objective = cache.objective(&table, train, &current, q);
            let update = solve_qubit(&objective, current.qubit(q).params(), q, cfg)?;
            current = current.with_params(q, update.params);
            cache.commit(&table, train, &current, q);
        }
        let val = empirical_second_moment(validation, obs, &current)?;
        if !val.is_finite() {
            return Err(Error::NonFinite {
                qubit: current.n_qubits() - 1,
            });
        }
        trace.push(SweepRecord {
            sweep,
            train_objective: cache.second_moment().as_f64(),
            validation_objective: val.as_f64(),
            duality_residual: current.max_duality_residual().as_f64(),
        });
        if val < best_val {
            best_val = val;
            outcome.duals = current.clone();
            outcome.best_sweep = sweep;
        }
        if val > best_val * cfg.overfit_ratio {
            bad += 1;
            if bad >= cfg.overfit_patience {
                outcome.stopped_early = sweep < cfg.n_sweeps;
                break;
            }
        } else {
            bad = 0;
        }
    }
    outcome.trace = trace;
    Ok(outcome)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualChoice {
    Optimized,
    Canonical,
}

/// One train/estimate direction of the split protocol.
#[derive(Clone, Debug)]
pub struct DirectionResult<T> {
    /// `"AB"`: trained on A, estimated on B.
    pub label: String,
    pub optimized: EstimationReport<T>,
    pub canonical: EstimationReport<T>,
    pub selection: DualChoice,
    pub chosen_duals: ProductDualSet<T>,
    pub sweeps: SweepOutcome<T>,
}

impl<T: Real> DirectionResult<T> {
    pub fn chosen(&self) -> &EstimationReport<T> {
        match self.selection {
            DualChoice::Optimized => &self.optimized,
            DualChoice::Canonical => &self.canonical,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitResult<T> {
    pub ab: DirectionResult<T>,
    pub ba: DirectionResult<T>,
    /// Mean of the two directional means; `std_error` is
    /// `sqrt(sigma_AB^2 + sigma_BA^2) / 2`.
    pub combined: EstimationReport<T>,
    pub split_a: Vec<usize>,
    pub split_b: Vec<usize>,
}

/// Seeded permutation of `0..n`, even positions to A and odd to B.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(seed));
    let a = perm.iter().step_by(2).copied().collect();
    let b = perm.iter().skip(1).step_by(2).copied().collect();
    (a, b)
}

fn run_direction<T: Real>(
    label: &str,
    train: &ShotDataset,
    est: &ShotDataset,
    obs: &PauliObservable<T>,
    reference: &ProductDualSet<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<DirectionResult<T>> {
    let sweeps = sweep_optimize(train, est, obs, reference, cfg)?;
    let optimized = estimate(est, obs, &sweeps.duals)?;
    let canonical = estimate(est, obs, reference)?;
    let selection = if optimized.std_error < canonical.std_error {
        DualChoice::Optimized
    } else {
        DualChoice::Canonical
    };
    let chosen_duals = match selection {
        DualChoice::Optimized => sweeps.duals.clone(),
        DualChoice::Canonical => reference.clone(),
    };
    Ok(DirectionResult {
        label: label.into(),
        optimized,
        canonical,
        selection,
        chosen_duals,
        sweeps,
    })
}

/// Train on A / estimate on B, then the reverse, each direction keeping
/// whichever of the optimized or reference duals has the smaller standard
/// error on its estimation half.
pub fn split_estimate<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    reference: &ProductDualSet<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<SplitResult<T>> {
    if data.n_shots() < 4 {
        return Err(Error::TooFewShots {
            needed: 4,
            got: data.n_shots(),
        });
    }
    cfg.validate()?;
    check_inputs(data, obs, reference)?;
    let (split_a, split_b) = split_indices(data.n_shots(), cfg.rng_seed);
    debug_assert!(split_a.iter().all(|i| !split_b.contains(i)));
    let a = data.select(&split_a)?;
    let b = data.select(&split_b)?;

    let ab = run_direction("AB", &a, &b, obs, reference, cfg)?;
    let ba = run_direction("BA", &b, &a, obs, reference, cfg)?;

    let half = T::lit(0.5);
    let (r1, r2) = (ab.chosen(), ba.chosen());
    let mean = (r1.mean + r2.mean) * half;
    let std_error = (r1.std_error * r1.std_error + r2.std_error * r2.std_error).sqrt() * half;
    let detail = |d: &DirectionResult<T>| SplitDetail {
        label: d.label.clone(),
        mean: d.chosen().mean.as_f64(),
        std_error: d.chosen().std_error.as_f64(),
        n_shots: d.chosen().n_shots_used,
    };
    let combined = EstimationReport {
        mean,
        second_moment: (r1.second_moment + r2.second_moment) * half,
        std_error,
        n_shots_used: data.n_shots(),
        split_details: vec![detail(&ab), detail(&ba)],
        abs_error: None,
    };
    Ok(SplitResult {
        ab,
        ba,
        combined,
        split_a,
        split_b,
    })
}

/// Independent split estimates for several observables over one dataset.
pub fn split_estimate_batch<T: Real>(
    data: &ShotDataset,
    observables: &[PauliObservable<T>],
    reference: &ProductDualSet<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<Vec<SplitResult<T>>> {
    observables
        .par_iter()
        .map(|obs| split_estimate(data, obs, reference, cfg))
        .collect()
}

/// Full-data estimate with the reference duals; the baseline for comparison.
pub fn reference_estimate<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    reference: &ProductDualSet<T>,
) -> Result<EstimationReport<T>> {
    estimate(data, obs, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{exact_variance, mean_estimate, ShotMeta};
    use crate::sampler::{
        exact_outcome_distribution, sample_pauli6_shots, trotter_evolve, StateVector, TfimParams,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_data(n: usize, shots: usize, seed: u64) -> ShotDataset {
        sample_pauli6_shots(&StateVector::<f64>::zero_state(n).unwrap(), shots, seed).unwrap()
    }

    fn tfim_data(n: usize, steps: usize, shots: usize, seed: u64) -> ShotDataset {
        let s = trotter_evolve(
            &StateVector::<f64>::zero_state(n).unwrap(),
            &TfimParams {
                n_qubits: n,
                j: 0.5236,
                h: 1.0,
                dt: 0.1,
                steps,
            },
        )
        .unwrap();
        sample_pauli6_shots(&s, shots, seed).unwrap()
    }

    fn random_data(n: usize, shots: usize, rng: &mut ChaCha8Rng) -> ShotDataset {
        let outcomes = (0..n * shots).map(|_| rng.gen_range(0..6u8)).collect();
        ShotDataset::new(n, 6, outcomes, ShotMeta::default()).unwrap()
    }

    fn random_duals(n: usize, rng: &mut ChaCha8Rng) -> ProductDualSet<f64> {
        let mut d = ProductDualSet::canonical_pauli6(n);
        for q in 0..n {
            let flat: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.5..1.5)).collect();
            d = d.with_params(q, QubitDualParams::from_flat(&flat));
        }
        d
    }

    fn random_obs(n: usize, rng: &mut ChaCha8Rng) -> PauliObservable<f64> {
        let terms = (0..3)
            .map(|_| {
                let w: String = (0..n)
                    .map(|_| ['I', 'X', 'Y', 'Z'][rng.gen_range(0..4)])
                    .collect();
                format!("{}*{w}", rng.gen_range(-1.0..1.0))
            })
            .collect::<Vec<_>>()
            .join(" + ");
        PauliObservable::parse(n, &terms).unwrap()
    }

    fn zn(n: usize) -> PauliObservable<f64> {
        PauliObservable::parse(n, &"Z".repeat(n)).unwrap()
    }

    // Central differences through the full streaming estimator.
    fn fd_gradient(
        data: &ShotDataset,
        obs: &PauliObservable<f64>,
        duals: &ProductDualSet<f64>,
        q: usize,
        h: f64,
    ) -> Vec<f64> {
        let theta = duals.qubit(q).params().to_flat();
        (0..theta.len())
            .map(|k| {
                let mut p = theta.clone();
                p[k] += h;
                let fp = empirical_second_moment(
                    data,
                    obs,
                    &duals.with_params(q, QubitDualParams::from_flat(&p)),
                )
                .unwrap();
                p[k] -= 2.0 * h;
                let fm = empirical_second_moment(
                    data,
                    obs,
                    &duals.with_params(q, QubitDualParams::from_flat(&p)),
                )
                .unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
        diff / scale
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let data = random_data(3, 1000, &mut rng);
            let duals = random_duals(3, &mut rng);
            let obs = random_obs(3, &mut rng);
            let q = rng.gen_range(0..3);
            let (f, g) = objective_and_gradient(&data, &obs, &duals, q).unwrap();
            let direct = empirical_second_moment(&data, &obs, &duals).unwrap();
            assert!((f - direct).abs() <= 1e-10 * direct.max(1.0));
            let fd = fd_gradient(&data, &obs, &duals, q, 1e-5);
            assert!(rel_err(&g, &fd) < 1e-6, "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn hessian_is_psd_and_exact_for_the_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let data = random_data(3, 500, &mut rng);
            let duals = random_duals(3, &mut rng);
            let obs = random_obs(3, &mut rng);
            let q = rng.gen_range(0..3);
            let obj = QubitObjective::build(&data, &obs, &duals, q).unwrap();
            let h = obj.hessian();
            let theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; 8];
            let f = obj.value_and_gradient(&theta, &mut g);
            for _ in 0..20 {
                let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let hv = linalg::matvec(&h, 8, 8, &v);
                let quad: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
                assert!(quad >= -1e-9 * f.max(1.0));
                // second-order expansion is exact for a quadratic
                let shifted: Vec<f64> = theta.iter().zip(&v).map(|(a, b)| a + b).collect();
                let lin: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
                let want = f + lin + 0.5 * quad;
                assert!((obj.value(&shifted) - want).abs() < 1e-9 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_variance_duals_have_unit_objective() {
        let data = zero_data(1, 10_000, 4);
        let frame = Arc::new(QubitFrame::pauli6());
        let p = QubitDualParams {
            theta: vec![[0.5, -1.5, 0.0, 0.5], [0.5, 0.0, -1.5, 0.5]],
        };
        let duals = ProductDualSet::from_params(vec![frame], vec![p]).unwrap();
        let (f, _) = objective_and_gradient(&data, &zn(1), &duals, 0).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_observable_is_left_alone() {
        let data = zero_data(2, 200, 1);
        let init = ProductDualSet::<f64>::canonical_pauli6(2);
        let id = PauliObservable::parse(2, "II").unwrap();
        let cfg = OptimizerConfig::default();
        let out = optimize_qubit(&data, &id, &init, 0, &cfg).unwrap();
        assert_eq!(out.qubit(0).params(), init.qubit(0).params());
        let sw = sweep_optimize(&data, &data, &id, &init, &cfg).unwrap();
        assert_eq!(sw.trace.len(), 1);
    }

    #[test]
    fn single_qubit_optimum_in_one_call() {
        let data = zero_data(1, 100_000, 8);
        let init = ProductDualSet::<f64>::canonical_pauli6(1);
        let cfg = OptimizerConfig::default();
        let out = optimize_qubit(&data, &zn(1), &init, 0, &cfg).unwrap();
        let (m1, m2) = crate::estimation::sample_moments(&data, &zn(1), &out).unwrap();
        let exact = QubitObjective::build(&data, &zn(1), &init, 0).unwrap();
        let best = exact.value(&exact.exact_minimizer());
        assert!((m2 - best).abs() < 1e-6 * best, "{m2} vs {best}");
        // finite-sample residual variance is O(1/S), far below the canonical 2
        assert!(m2 - m1 * m1 < 1e-3, "{}", m2 - m1 * m1);
        assert!(out.max_duality_residual() < 1e-10);
    }

    #[test]
    fn lbfgs_and_exact_solve_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let data = random_data(3, 800, &mut rng);
            let duals = random_duals(3, &mut rng);
            let obs = random_obs(3, &mut rng);
            let q = rng.gen_range(0..3);
            let a = optimize_qubit(&data, &obs, &duals, q, &OptimizerConfig::default()).unwrap();
            let cfg = OptimizerConfig {
                inner_solver: InnerSolver::ExactQuadratic,
                ..Default::default()
            };
            let b = optimize_qubit(&data, &obs, &duals, q, &cfg).unwrap();
            let fa = empirical_second_moment(&data, &obs, &a).unwrap();
            let fb = empirical_second_moment(&data, &obs, &b).unwrap();
            assert!((fa - fb).abs() <= 1e-6 * fb.abs().max(1.0), "{fa} vs {fb}");
        }
    }

    #[test]
    fn already_optimal_is_unchanged() {
        let data = zero_data(1, 5000, 2);
        let init = ProductDualSet::<f64>::canonical_pauli6(1);
        let cfg = OptimizerConfig::<f64>::default();
        let once = optimize_qubit(&data, &zn(1), &init, 0, &cfg).unwrap();
        let twice = optimize_qubit(&data, &zn(1), &once, 0, &cfg).unwrap();
        let (a, b) = (
            once.qubit(0).params().to_flat(),
            twice.qubit(0).params().to_flat(),
        );
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn qubit_updates_never_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.gen_range(1..4);
            let data = random_data(n, rng.gen_range(5..200), &mut rng);
            let duals = random_duals(n, &mut rng);
            let obs = random_obs(n, &mut rng);
            let q = rng.gen_range(0..n);
            let before = empirical_second_moment(&data, &obs, &duals).unwrap();
            let out = optimize_qubit(&data, &obs, &duals, q, &OptimizerConfig::default()).unwrap();
            let after = empirical_second_moment(&data, &obs, &out).unwrap();
            assert!(
                after <= before * (1.0 + 1e-12) + 1e-12,
                "{after} > {before}"
            );
        }
    }

    #[test]
    fn cached_objective_matches_direct_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_data(4, 300, &mut rng);
        let obs = random_obs(4, &mut rng);
        // a zero trace entry forces the recompute path
        let mut duals = random_duals(4, &mut rng);
        duals = duals.with_params(
            2,
            QubitDualParams::from_flat(&[0.0, 0.3, -0.2, 0.1, 0.7, 0.0, 0.0, 0.0]),
        );
        let table = TermTable::new(&obs);
        let mut cache = WeightCache::new(&table, &data, &duals);
        for q in 0..4 {
            let cached = cache.objective(&table, &data, &duals, q);
            let direct = QubitObjective::build(&data, &obs, &duals, q).unwrap();
            let theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = (cached.value(&theta), direct.value(&theta));
            assert!((a - b).abs() < 1e-10 * b.max(1.0));
            cache.commit(&table, &data, &duals, q);
        }
        let sm = empirical_second_moment(&data, &obs, &duals).unwrap();
        assert!((cache.second_moment() - sm).abs() < 1e-10 * sm.max(1.0));
    }

    #[test]
    fn zero_sweeps_returns_init() {
        let data = zero_data(2, 100, 3);
        let init = ProductDualSet::<f64>::canonical_pauli6(2);
        let cfg = OptimizerConfig {
            n_sweeps: 0,
            ..Default::default()
        };
        let out = sweep_optimize(&data, &data, &zn(2), &init, &cfg).unwrap();
        for q in 0..2 {
            assert_eq!(out.duals.qubit(q).params(), init.qubit(q).params());
        }
        assert_eq!(out.best_sweep, 0);
    }

    #[test]
    fn sweeps_reach_near_zero_variance_on_product_state() {
        let train = zero_data(4, 100_000, 11);
        let val = zero_data(4, 20_000, 12);
        let init = ProductDualSet::<f64>::canonical_pauli6(4);
        let out = sweep_optimize(&train, &val, &zn(4), &init, &OptimizerConfig::default()).unwrap();
        let dist =
            exact_outcome_distribution(&StateVector::<f64>::zero_state(4).unwrap(), 8).unwrap();
        let v_can = exact_variance(&dist, &zn(4), &init).unwrap();
        let v_opt = exact_variance(&dist, &zn(4), &out.duals).unwrap();
        assert!((v_can - 80.0).abs() < 1e-9);
        assert!(v_opt <= 0.05 * v_can, "{v_opt}");
        // accepted sweeps never increase the training objective
        for w in out.trace.windows(2) {
            assert!(w[1].train_objective <= w[0].train_objective * (1.0 + 1e-12));
            assert!(w[1].duality_residual < 1e-10);
        }
    }

    #[test]
    fn guard_never_returns_worse_than_start() {
        for seed in 0..20 {
            let data = tfim_data(4, 3, 100, seed);
            let (a, b) = split_indices(100, seed);
            let train = data.select(&a[..25]).unwrap();
            let val = data.select(&b).unwrap();
            let init = ProductDualSet::<f64>::canonical_pauli6(4);
            let obs = PauliObservable::parse(4, "ZZII + 0.5*IXXI + IIZZ").unwrap();
            let out =
                sweep_optimize(&train, &val, &obs, &init, &OptimizerConfig::default()).unwrap();
            let v0 = empirical_second_moment(&val, &obs, &init).unwrap();
            let v1 = empirical_second_moment(&val, &obs, &out.duals).unwrap();
            assert!(v1 <= v0, "seed {seed}: {v1} > {v0}");
        }
    }

    #[test]
    fn split_halves_are_disjoint_and_balanced() {
        for n in [4, 5, 101] {
            let (a, b) = split_indices(n, 7);
            assert!(a.len().abs_diff(b.len()) <= 1);
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn disabled_optimizer_reproduces_full_canonical_mean() {
        let data = tfim_data(3, 1, 2000, 5);
        let obs = zn(3);
        let can = ProductDualSet::<f64>::canonical_pauli6(3);
        let cfg = OptimizerConfig {
            n_sweeps: 0,
            ..Default::default()
        };
        let r = split_estimate(&data, &obs, &can, &cfg).unwrap();
        let full = mean_estimate(&data, &obs, &can).unwrap();
        assert!((r.combined.mean - full).abs() < 1e-12 * full.abs().max(1.0));
        assert_eq!(r.ab.selection, DualChoice::Canonical);
        assert_eq!(r.ba.selection, DualChoice::Canonical);
    }

    #[test]
    fn split_combines_directions() {
        let data = zero_data(3, 4000, 9);
        let can = ProductDualSet::<f64>::canonical_pauli6(3);
        let r = split_estimate(&data, &zn(3), &can, &OptimizerConfig::default()).unwrap();
        let m = 0.5 * (r.ab.chosen().mean + r.ba.chosen().mean);
        assert_eq!(r.combined.mean, m);
        let s = (r.ab.chosen().std_error.powi(2) + r.ba.chosen().std_error.powi(2)).sqrt() / 2.0;
        assert_eq!(r.combined.std_error, s);
        assert_eq!(r.combined.split_details.len(), 2);
        for i in &r.split_a {
            assert!(!r.split_b.contains(i));
        }
        assert!(matches!(
            split_estimate(
                &data.select(&[0, 1, 2]).unwrap(),
                &zn(3),
                &can,
                &OptimizerConfig::default()
            ),
            Err(Error::TooFewShots { .. })
        ));
    }

    #[test]
    fn selection_falls_back_to_canonical_on_tiny_data() {
        let can = ProductDualSet::<f64>::canonical_pauli6(3);
        let obs = PauliObservable::parse(3, "XXI + 0.7*IZZ + 0.3*YIY").unwrap();
        let found = (0..200).any(|seed| {
            let data = tfim_data(3, 4, 12, seed);
            let cfg = OptimizerConfig {
                rng_seed: seed,
                ..Default::default()
            };
            let r = split_estimate(&data, &obs, &can, &cfg).unwrap();
            r.ab.selection == DualChoice::Canonical && r.ab.sweeps.best_sweep > 0
                || r.ba.selection == DualChoice::Canonical && r.ba.sweeps.best_sweep > 0
        });
        assert!(found);
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig::<f64> {
            overfit_ratio: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig::<f64> {
            max_inner_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(OptimizerConfig::<f64> {
            n_sweeps: 0,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn works_in_f32() {
        let data = zero_data(2, 20_000, 3);
        let init = ProductDualSet::<f32>::canonical_pauli6(2);
        let obs = PauliObservable::<f32>::parse(2, "ZZ").unwrap();
        let cfg = OptimizerConfig::<f32> {
            grad_tol: 1e-5,
            ..Default::default()
        };
        let r = split_estimate(&data, &obs, &init, &cfg).unwrap();
        assert!((r.combined.mean - 1.0).abs() < 0.05);
        assert!(r.combined.std_error < 0.01);
    }
}
