//! Observable estimation from shot data: per-shot weights `Tr[O D_outcome]`,
//! their sample mean and second moment, the standard error, and the exact
//! per-shot variance under a known outcome distribution.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{Pauli, ProductDualSet};
use crate::sampler::{OutcomeDistribution, ProductDistribution};
use crate::scalar::Real;

/// Tensor product of single-qubit Paulis; character `q` acts on qubit `q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    paulis: Vec<Pauli>,
}

impl PauliString {
    pub fn new(paulis: Vec<Pauli>) -> Self {
        Self { paulis }
    }

    pub fn parse(word: &str) -> Result<Self> {
        word.chars()
            .map(|c| {
                Pauli::from_char(c).ok_or_else(|| {
                    Error::ObservableParse(format!("invalid Pauli '{c}' in '{word}'"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn uniform(p: Pauli, n: usize) -> Self {
        Self::new(vec![p; n])
    }

    pub fn paulis(&self) -> &[Pauli] {
        &self.paulis
    }

    pub fn len(&self) -> usize {
        self.paulis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paulis.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.paulis.iter().all(|&p| p == Pauli::I)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.paulis {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Real linear combination of Pauli strings on `n_qubits`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliObservable<T> {
    n_qubits: usize,
    terms: Vec<(T, PauliString)>,
}

impl<T: Real> PauliObservable<T> {
    /// Validates lengths and coefficients, merging repeated strings in
    /// first-occurrence order.
    pub fn new(n_qubits: usize, terms: Vec<(T, PauliString)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::ObservableParse("observable has no terms".into()));
        }
        let mut merged: Vec<(T, PauliString)> = Vec::with_capacity(terms.len());
        for (c, s) in terms {
            if s.len() != n_qubits {
                return Err(Error::DimensionMismatch(format!(
                    "Pauli string '{s}' has length {}, expected {n_qubits}",
                    s.len()
                )));
            }
            if !c.is_finite() {
                return Err(Error::ObservableParse(format!(
                    "non-finite coefficient on '{s}'"
                )));
            }
            match merged.iter_mut().find(|(_, t)| *t == s) {
                Some((acc, _)) => *acc += c,
                None => merged.push((c, s)),
            }
        }
        Ok(Self {
            n_qubits,
            terms: merged,
        })
    }

    /// Parses `"0.5*ZZI + -1.2*XIX + IIZ"`; a bare word has coefficient 1 and
    /// `" - "` separates a negated term.
    pub fn parse(n_qubits: usize, spec: &str) -> Result<Self> {
        let normalized = spec.replace(" - ", " + -");
        let mut terms = Vec::new();
        for raw in normalized.split('+') {
            let t = raw.trim();
            if t.is_empty() {
                return Err(Error::ObservableParse(format!("empty term in '{spec}'")));
            }
            let (coef, word) = if let Some((c, w)) = t.rsplit_once('*') {
                (parse_coef(c.trim(), spec)?, w.trim())
            } else if let Some((c, w)) = t.split_once(char::is_whitespace) {
                (parse_coef(c.trim(), spec)?, w.trim())
            } else if let Some(w) = t.strip_prefix('-') {
                (-1.0, w)
            } else {
                (1.0, t)
            };
            terms.push((T::lit(coef), PauliString::parse(word)?));
        }
        Self::new(n_qubits, terms)
    }

    pub fn single(n_qubits: usize, coef: T, word: PauliString) -> Result<Self> {
        Self::new(n_qubits, vec![(coef, word)])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(T, PauliString)] {
        &self.terms
    }

    /// True when `O` is a multiple of the identity, so every weight is constant.
    pub fn is_identity_only(&self) -> bool {
        self.terms.iter().all(|(_, s)| s.is_identity())
    }
}

fn parse_coef(s: &str, spec: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::ObservableParse(format!("bad coefficient '{s}' in '{spec}'")))
}

impl<T: Real> fmt::Display for PauliObservable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (c, s)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*{s}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotMeta {
    pub povm: String,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub provenance: Option<String>,
}

/// `S` shots of an `N`-qubit product POVM, stored row-major: shot `s`
/// occupies `outcomes[s*N .. (s+1)*N]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotDataset {
    n_qubits: usize,
    n_outcomes: usize,
    outcomes: Vec<u8>,
    pub meta: ShotMeta,
}

impl ShotDataset {
    pub fn new(
        n_qubits: usize,
        n_outcomes: usize,
        outcomes: Vec<u8>,
        meta: ShotMeta,
    ) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::DimensionMismatch("dataset with zero qubits".into()));
        }
        if !outcomes.len().is_multiple_of(n_qubits) {
            return Err(Error::DimensionMismatch(format!(
                "{} outcomes is not a multiple of {n_qubits} qubits",
                outcomes.len()
            )));
        }
        if outcomes.is_empty() {
            return Err(Error::TooFewShots { needed: 1, got: 0 });
        }
        if let Some(pos) = outcomes.iter().position(|&o| o as usize >= n_outcomes) {
            return Err(Error::DimensionMismatch(format!(
                "shot {} qubit {}: outcome {} >= {n_outcomes}",
                pos / n_qubits,
                pos % n_qubits,
                outcomes[pos]
            )));
        }
        Ok(Self {
            n_qubits,
            n_outcomes,
            outcomes,
            meta,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn n_shots(&self) -> usize {
        self.outcomes.len() / self.n_qubits
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    #[inline]
    pub fn shot(&self, s: usize) -> &[u8] {
        &self.outcomes[s * self.n_qubits..(s + 1) * self.n_qubits]
    }

    pub fn shots(&self) -> impl ExactSizeIterator<Item = &[u8]> {
        self.outcomes.chunks_exact(self.n_qubits)
    }

    /// Sub-dataset of the given shot indices, in the order given.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(indices.len() * self.n_qubits);
        for &s in indices {
            out.extend_from_slice(self.shot(s));
        }
        Self::new(self.n_qubits, self.n_outcomes, out, self.meta.clone())
    }

    /// Relative frequency of each outcome on one qubit.
    pub fn marginal_frequencies(&self, q: usize) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_outcomes];
        for shot in self.shots() {
            counts[shot[q] as usize] += 1;
        }
        let s = self.n_shots() as f64;
        counts.into_iter().map(|c| c as f64 / s).collect()
    }
}

fn check_sizes<T: Real>(
    n_data: usize,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<()> {
    if obs.n_qubits() != n_data || duals.n_qubits() != n_data {
        return Err(Error::DimensionMismatch(format!(
            "data has {n_data} qubits, observable {}, duals {}",
            obs.n_qubits(),
            duals.n_qubits()
        )));
    }
    Ok(())
}

/// Observable terms flattened to `(coef, pauli index per qubit)`.
pub(crate) struct TermTable<T> {
    pub coefs: Vec<T>,
    /// `paulis[t * n + q]`
    pub paulis: Vec<u8>,
    pub n_qubits: usize,
}

impl<T: Real> TermTable<T> {
    pub fn new(obs: &PauliObservable<T>) -> Self {
        let n = obs.n_qubits();
        let mut coefs = Vec::with_capacity(obs.terms().len());
        let mut paulis = Vec::with_capacity(obs.terms().len() * n);
        for (c, s) in obs.terms() {
            coefs.push(*c);
            paulis.extend(s.paulis().iter().map(|p| p.index() as u8));
        }
        Self {
            coefs,
            paulis,
            n_qubits: n,
        }
    }

    #[inline]
    pub fn n_terms(&self) -> usize {
        self.coefs.len()
    }

    #[inline]
    pub fn term(&self, t: usize) -> &[u8] {
        &self.paulis[t * self.n_qubits..(t + 1) * self.n_qubits]
    }

    /// `Tr[O D_outcome]`.
    #[inline]
    pub fn weight(&self, duals: &ProductDualSet<T>, outcome: &[u8]) -> T {
        let mut w = T::zero();
        for t in 0..self.n_terms() {
            let mut prod = self.coefs[t];
            for (q, (&p, &i)) in self.term(t).iter().zip(outcome).enumerate() {
                prod *= duals.qubit(q).traces()[i as usize][p as usize];
            }
            w += prod;
        }
        w
    }
}

/// `Tr[O D_outcome]` for one shot, `D_outcome` the tensor product of the
/// per-qubit duals.
pub fn shot_weight<T: Real>(
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
    outcome: &[u8],
) -> Result<T> {
    check_sizes(outcome.len(), obs, duals)?;
    for (q, &i) in outcome.iter().enumerate() {
        if i as usize >= duals.qubit(q).traces().len() {
            return Err(Error::DimensionMismatch(format!(
                "outcome {i} on qubit {q} out of range"
            )));
        }
    }
    Ok(TermTable::new(obs).weight(duals, outcome))
}

/// Sample mean and second moment of the shot weights, summed in shot order.
pub fn sample_moments<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<(T, T)> {
    check_sizes(data.n_qubits(), obs, duals)?;
    let table = TermTable::new(obs);
    let (mut m1, mut m2) = (T::zero(), T::zero());
    for shot in data.shots() {
        let w = table.weight(duals, shot);
        m1 += w;
        m2 += w * w;
    }
    let s = T::count(data.n_shots());
    Ok((m1 / s, m2 / s))
}

/// Unbiased estimate `sum_i f_i Tr[O D_i]`.
pub fn mean_estimate<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<T> {
    sample_moments(data, obs, duals).map(|m| m.0)
}

/// `sum_i f_i Tr[O D_i]^2`, the quantity the optimizer minimizes.
pub fn empirical_second_moment<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<T> {
    sample_moments(data, obs, duals).map(|m| m.1)
}

/// `sqrt(max(0, m2 - m1^2) / S)`. Differences within the rounding error of
/// the subtraction count as zero.
pub fn std_error_from_moments<T: Real>(mean: T, second_moment: T, n_shots: usize) -> T {
    let mut var = (second_moment - mean * mean).max(T::zero());
    if var <= T::lit(16.0) * T::epsilon() * second_moment.abs() {
        var = T::zero();
    }
    (var / T::count(n_shots)).sqrt()
}

pub fn standard_error<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<T> {
    estimate(data, obs, duals).map(|r| r.std_error)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDetail {
    pub label: String,
    pub mean: f64,
    pub std_error: f64,
    pub n_shots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationReport<T> {
    pub mean: T,
    pub second_moment: T,
    pub std_error: T,
    pub n_shots_used: usize,
    pub split_details: Vec<SplitDetail>,
    pub abs_error: Option<T>,
}

impl<T: Real> EstimationReport<T> {
    pub fn with_truth(mut self, truth: T) -> Self {
        self.abs_error = Some((truth - self.mean).abs());
        self
    }
}

/// Mean, second moment and standard error of `O` on `data`. Needs `S >= 2`.
pub fn estimate<T: Real>(
    data: &ShotDataset,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<EstimationReport<T>> {
    if data.n_shots() < 2 {
        return Err(Error::TooFewShots {
            needed: 2,
            got: data.n_shots(),
        });
    }
    let (mean, second_moment) = sample_moments(data, obs, duals)?;
    Ok(EstimationReport {
        mean,
        second_moment,
        std_error: std_error_from_moments(mean, second_moment, data.n_shots()),
        n_shots_used: data.n_shots(),
        split_details: Vec::new(),
        abs_error: None,
    })
}

/// Exact `(sum_i p_i w_i, sum_i p_i w_i^2)` over all `6^N` outcomes.
pub fn exact_moments<T: Real>(
    dist: &OutcomeDistribution<T>,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<(T, T)> {
    check_sizes(dist.n_qubits, obs, duals)?;
    let r = duals.qubit(0).traces().len();
    if dist.probs.len() != r.pow(dist.n_qubits as u32) {
        return Err(Error::DimensionMismatch(format!(
            "distribution has {} entries, expected {r}^{}",
            dist.probs.len(),
            dist.n_qubits
        )));
    }
    let table = TermTable::new(obs);
    let (mut m1, mut m2) = (T::zero(), T::zero());
    for (idx, &p) in dist.probs.iter().enumerate() {
        if p == T::zero() {
            continue;
        }
        let w = table.weight(duals, &dist.outcome_of(idx));
        m1 += p * w;
        m2 += p * w * w;
    }
    Ok((m1, m2))
}

/// Per-shot variance `sum_i p_i w_i^2 - (sum_i p_i w_i)^2`.
pub fn exact_variance<T: Real>(
    dist: &OutcomeDistribution<T>,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<T> {
    let (m1, m2) = exact_moments(dist, obs, duals)?;
    Ok(m2 - m1 * m1)
}

/// Exact moments for a product outcome law, factorized per qubit:
/// `E[w^2] = sum_{t,t'} c_t c_t' prod_q sum_i p_i^q Tr[P_tq D_i] Tr[P_t'q D_i]`.
pub fn exact_moments_product<T: Real>(
    dist: &ProductDistribution<T>,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<(T, T)> {
    check_sizes(dist.n_qubits(), obs, duals)?;
    let table = TermTable::new(obs);
    let nt = table.n_terms();
    let mut m1 = T::zero();
    let mut m2 = T::zero();
    for t in 0..nt {
        let mut prod = table.coefs[t];
        for (q, &p) in table.term(t).iter().enumerate() {
            let tr = duals.qubit(q).traces();
            prod *= dist.marginals[q]
                .iter()
                .zip(tr)
                .map(|(&pi, row)| pi * row[p as usize])
                .sum::<T>();
        }
        m1 += prod;
        for u in 0..nt {
            let mut prod = table.coefs[t] * table.coefs[u];
            for q in 0..table.n_qubits {
                let (a, b) = (table.term(t)[q] as usize, table.term(u)[q] as usize);
                let tr = duals.qubit(q).traces();
                prod *= dist.marginals[q]
                    .iter()
                    .zip(tr)
                    .map(|(&pi, row)| pi * row[a] * row[b])
                    .sum::<T>();
            }
            m2 += prod;
        }
    }
    Ok((m1, m2))
}

pub fn exact_variance_product<T: Real>(
    dist: &ProductDistribution<T>,
    obs: &PauliObservable<T>,
    duals: &ProductDualSet<T>,
) -> Result<T> {
    let (m1, m2) = exact_moments_product(dist, obs, duals)?;
    Ok(m2 - m1 * m1)
}
