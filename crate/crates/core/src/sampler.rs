//! Small statevector simulator: product and Trotterized transverse-field
//! Ising states, Pauli-6 shot sampling, and exact outcome distributions.
//!
//! Qubit `q` is bit `q` of the amplitude index.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{PauliObservable, ShotDataset, ShotMeta};
use crate::frames::{HermitianOp, Pauli, SingleQubitPovm};
use crate::rng::{ShotStreams, GENERATOR_ID};
use crate::scalar::Real;

pub const DEFAULT_MAX_QUBITS: usize = 14;
pub const DEFAULT_ORACLE_MAX_QUBITS: usize = 8;
/// Outcomes per qubit of the Pauli-6 POVM.
pub const PAULI6_OUTCOMES: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    n_qubits: usize,
    amps: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn zero_state(n: usize) -> Result<Self> {
        Self::zero_state_capped(n, DEFAULT_MAX_QUBITS)
    }

    pub fn zero_state_capped(n: usize, max_qubits: usize) -> Result<Self> {
        if n == 0 || n > max_qubits {
            return Err(Error::QubitCount { n, max: max_qubits });
        }
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1 << n];
        amps[0] = Complex::new(T::one(), T::zero());
        Ok(Self { n_qubits: n, amps })
    }

    /// Wraps explicit amplitudes; the norm must be one to within `1e-10`.
    pub fn from_amplitudes(amps: Vec<Complex<T>>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "{len} amplitudes is not 2^N"
            )));
        }
        let n = len.trailing_zeros() as usize;
        if n > DEFAULT_MAX_QUBITS {
            return Err(Error::QubitCount {
                n,
                max: DEFAULT_MAX_QUBITS,
            });
        }
        let s = Self { n_qubits: n, amps };
        let dev = (s.norm_sqr() - T::one()).abs();
        if !(dev <= crate::frames::tol::<T>(1e-10)) {
            return Err(Error::InvalidParameter(format!(
                "state norm deviates from 1 by {dev}"
            )));
        }
        Ok(s)
    }

    /// Tensor product of single-qubit states `(alpha_q, beta_q)`, qubit 0 first.
    pub fn product(qubits: &[[Complex<T>; 2]]) -> Result<Self> {
        let mut amps = vec![Complex::new(T::one(), T::zero())];
        for (q, pair) in qubits.iter().enumerate() {
            let mut next = vec![Complex::new(T::zero(), T::zero()); amps.len() * 2];
            for (k, a) in amps.iter().enumerate() {
                next[k] = a * pair[0];
                next[k | (1 << q)] = a * pair[1];
            }
            amps = next;
        }
        Self::from_amplitudes(amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn apply_1q(&mut self, q: usize, m: &[[Complex<T>; 2]; 2]) {
        apply_1q(&mut self.amps, q, m);
    }
}

fn apply_1q<T: Real>(amps: &mut [Complex<T>], q: usize, m: &[[Complex<T>; 2]; 2]) {
    let bit = 1usize << q;
    for k in 0..amps.len() {
        if k & bit != 0 {
            continue;
        }
        let a0 = amps[k];
        let a1 = amps[k | bit];
        amps[k] = m[0][0] * a0 + m[0][1] * a1;
        amps[k | bit] = m[1][0] * a0 + m[1][1] * a1;
    }
}

/// Rotation taking the `+1` eigenstate of the measured Pauli to `|0>`:
/// identity for Z, `H` for X, `H S^dagger` for Y.
fn basis_change<T: Real>(basis: usize) -> [[Complex<T>; 2]; 2] {
    let z = Complex::new(T::zero(), T::zero());
    let o = Complex::new(T::one(), T::zero());
    let r = T::FRAC_1_SQRT_2();
    let h = Complex::new(r, T::zero());
    let hi = Complex::new(T::zero(), r);
    match basis {
        0 => [[o, z], [z, o]],
        1 => [[h, h], [h, -h]],
        2 => [[h, -hi], [h, hi]],
        _ => unreachable!("Pauli-6 has three bases"),
    }
}

/// Probability that qubit `q` reads 0.
fn prob_zero<T: Real>(amps: &[Complex<T>], q: usize) -> T {
    let bit = 1usize << q;
    amps.iter()
        .enumerate()
        .filter(|(k, _)| k & bit == 0)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

fn collapse<T: Real>(amps: &mut [Complex<T>], q: usize, result: usize, prob: T) {
    let bit = 1usize << q;
    let keep = if result == 0 { 0 } else { bit };
    let s = T::one() / prob.sqrt();
    for (k, a) in amps.iter_mut().enumerate() {
        if k & bit == keep {
            *a *= s;
        } else {
            *a = Complex::new(T::zero(), T::zero());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfimParams<T> {
    pub n_qubits: usize,
    pub j: T,
    pub h: T,
    pub dt: T,
    pub steps: usize,
}

impl<T: Real> TfimParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::InvalidParameter(
                "TFIM chain needs at least one qubit".into(),
            ));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !self.j.is_finite() || !self.h.is_finite() {
            return Err(Error::InvalidParameter("J and h must be finite".into()));
        }
        Ok(())
    }
}

/// First-order Trotter evolution under `H = -J sum Z_i Z_{i+1} + h sum X_i`
/// on an open chain. Each step applies `exp(+i J dt Z_i Z_{i+1})` on every
/// bond, then `exp(-i h dt X_i)` on every site.
pub fn trotter_evolve<T: Real>(
    state: &StateVector<T>,
    params: &TfimParams<T>,
) -> Result<StateVector<T>> {
    params.validate()?;
    if state.n_qubits != params.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "state has {} qubits, TFIM has {}",
            state.n_qubits, params.n_qubits
        )));
    }
    let n = state.n_qubits;
    let mut out = state.clone();
    if params.steps == 0 {
        return Ok(out);
    }
    // diagonal ZZ phases depend only on the number of aligned bonds
    let phases: Vec<Complex<T>> = (0..=n - 1)
        .map(|aligned| {
            let zz_sum = T::count(aligned) - T::count(n - 1 - aligned);
            Complex::from_polar(T::one(), params.j * params.dt * zz_sum)
        })
        .collect();
    let (s, c) = (params.h * params.dt).sin_cos();
    let cc = Complex::new(c, T::zero());
    let ms = Complex::new(T::zero(), -s);
    let rx = [[cc, ms], [ms, cc]];
    for _ in 0..params.steps {
        for (k, a) in out.amps.iter_mut().enumerate() {
            let anti = ((k ^ (k >> 1)) & ((1usize << (n - 1)) - 1)).count_ones() as usize;
            *a *= phases[n - 1 - anti];
        }
        for q in 0..n {
            out.apply_1q(q, &rx);
        }
    }
    Ok(out)
}

fn sample_one<T: Real, R: Rng>(state: &StateVector<T>, rng: &mut R, out: &mut [u8]) {
    let mut amps = state.amps.clone();
    for (q, slot) in out.iter_mut().enumerate() {
        let basis = rng.gen_range(0..3usize);
        if basis != 0 {
            apply_1q(&mut amps, q, &basis_change(basis));
        }
        let p0 = prob_zero(&amps, q);
        let u: f64 = rng.gen();
        let result = if u < p0.as_f64() { 0 } else { 1 };
        let p = if result == 0 { p0 } else { T::one() - p0 };
        collapse(&mut amps, q, result, p);
        *slot = (2 * basis + result) as u8;
    }
}

/// Samples shots `range` of the dataset defined by `(state, seed)`. Rows are
/// identical to the corresponding rows of a full [`sample_pauli6_shots`] run.
pub fn sample_pauli6_shot_range<T: Real>(
    state: &StateVector<T>,
    range: std::ops::Range<usize>,
    seed: u64,
) -> Vec<u8> {
    let n = state.n_qubits;
    let streams = ShotStreams::new(seed);
    let mut outcomes = vec![0u8; range.len() * n];
    outcomes
        .par_chunks_mut(n)
        .zip(range.into_par_iter())
        .for_each(|(row, shot)| {
            let mut rng = streams.for_shot(shot as u64);
            sample_one(state, &mut rng, row);
        });
    outcomes
}

/// Measures every qubit, in order, in a uniformly random Pauli basis with
/// sequential collapse. Outcome index is `2 * basis + result` with bases
/// `Z, X, Y` and result 0 for the `+1` eigenstate.
pub fn sample_pauli6_shots<T: Real>(
    state: &StateVector<T>,
    n_shots: usize,
    seed: u64,
) -> Result<ShotDataset> {
    if n_shots == 0 {
        return Err(Error::TooFewShots { needed: 1, got: 0 });
    }
    let outcomes = sample_pauli6_shot_range(state, 0..n_shots, seed);
    let meta = ShotMeta {
        povm: "pauli6".into(),
        seed: Some(seed),
        generator: Some(GENERATOR_ID.into()),
        provenance: None,
    };
    ShotDataset::new(state.n_qubits, PAULI6_OUTCOMES, outcomes, meta)
}

/// Exact joint Pauli-6 outcome probabilities, flattened with qubit 0 as the
/// least significant base-6 digit.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution<T> {
    pub n_qubits: usize,
    pub probs: Vec<T>,
}

impl<T: Real> OutcomeDistribution<T> {
    pub fn index_of(outcome: &[u8]) -> usize {
        outcome
            .iter()
            .rev()
            .fold(0, |acc, &i| acc * PAULI6_OUTCOMES + i as usize)
    }

    pub fn outcome_of(&self, mut index: usize) -> Vec<u8> {
        (0..self.n_qubits)
            .map(|_| {
                let d = index % PAULI6_OUTCOMES;
                index /= PAULI6_OUTCOMES;
                d as u8
            })
            .collect()
    }

    /// Marginal distribution of one qubit.
    pub fn marginal(&self, q: usize) -> Vec<T> {
        let mut m = vec![T::zero(); PAULI6_OUTCOMES];
        let stride = PAULI6_OUTCOMES.pow(q as u32);
        for (idx, &p) in self.probs.iter().enumerate() {
            m[(idx / stride) % PAULI6_OUTCOMES] += p;
        }
        m
    }
}

pub fn exact_outcome_distribution<T: Real>(
    state: &StateVector<T>,
    max_qubits: usize,
) -> Result<OutcomeDistribution<T>> {
    let n = state.n_qubits;
    if n > max_qubits {
        return Err(Error::QubitCount { n, max: max_qubits });
    }
    let mut probs = vec![T::zero(); PAULI6_OUTCOMES.pow(n as u32)];
    let weight = T::one() / T::lit(3.0).powi(n as i32);
    let mut bases = vec![0usize; n];
    fill_distribution(&state.amps, 0, n, &mut bases, weight, &mut probs);
    Ok(OutcomeDistribution { n_qubits: n, probs })
}

fn fill_distribution<T: Real>(
    amps: &[Complex<T>],
    q: usize,
    n: usize,
    bases: &mut [usize],
    weight: T,
    probs: &mut [T],
) {
    if q == n {
        for (k, a) in amps.iter().enumerate() {
            let idx = (0..n).rev().fold(0, |acc, qq| {
                acc * PAULI6_OUTCOMES + 2 * bases[qq] + ((k >> qq) & 1)
            });
            probs[idx] = weight * a.norm_sqr();
        }
        return;
    }
    for b in 0..3 {
        let mut rotated = amps.to_vec();
        if b != 0 {
            apply_1q(&mut rotated, q, &basis_change(b));
        }
        bases[q] = b;
        fill_distribution(&rotated, q + 1, n, bases, weight, probs);
    }
}

/// Outcome law of a product state: one single-qubit distribution per qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductDistribution<T> {
    pub marginals: Vec<Vec<T>>,
}

impl<T: Real> ProductDistribution<T> {
    /// From single-qubit density matrices in Pauli coordinates.
    pub fn from_states(povm: &SingleQubitPovm<T>, rhos: &[HermitianOp<T>]) -> Self {
        Self {
            marginals: rhos.iter().map(|r| povm.probabilities(r)).collect(),
        }
    }

    /// `|0><0|` on every qubit.
    pub fn zero_state(povm: &SingleQubitPovm<T>, n: usize) -> Self {
        let half = T::lit(0.5);
        let rho = HermitianOp::new([half, T::zero(), T::zero(), half]);
        Self::from_states(povm, &vec![rho; n])
    }

    pub fn n_qubits(&self) -> usize {
        self.marginals.len()
    }

    pub fn to_dense(&self) -> OutcomeDistribution<T> {
        let n = self.marginals.len();
        let mut probs = vec![T::one()];
        for m in self.marginals.iter().rev() {
            probs = probs
                .iter()
                .flat_map(|&p| m.iter().map(move |&x| p * x))
                .collect();
        }
        OutcomeDistribution { n_qubits: n, probs }
    }
}

/// `<psi|O|psi>` by applying each Pauli string to the amplitudes.
pub fn exact_expectation<T: Real>(state: &StateVector<T>, obs: &PauliObservable<T>) -> Result<T> {
    if obs.n_qubits() != state.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "observable acts on {} qubits, state has {}",
            obs.n_qubits(),
            state.n_qubits
        )));
    }
    let mut total = T::zero();
    for (coef, word) in obs.terms() {
        let (mut xmask, mut zmask, mut ny) = (0usize, 0usize, 0u32);
        for (q, p) in word.paulis().iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => xmask |= 1 << q,
                Pauli::Y => {
                    xmask |= 1 << q;
                    zmask |= 1 << q;
                    ny += 1;
                }
                Pauli::Z => zmask |= 1 << q,
            }
        }
        let iy = match ny % 4 {
            0 => Complex::new(T::one(), T::zero()),
            1 => Complex::new(T::zero(), T::one()),
            2 => Complex::new(-T::one(), T::zero()),
            _ => Complex::new(T::zero(), -T::one()),
        };
        let mut acc = Complex::new(T::zero(), T::zero());
        for (k, a) in state.amps.iter().enumerate() {
            let sign = if (k & zmask).count_ones() % 2 == 0 {
                T::one()
            } else {
                -T::one()
            };
            acc += state.amps[k ^ xmask].conj() * a * sign;
        }
        total += *coef * (acc * iy).re;
    }
    Ok(total)
}
