use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

use super::op::HermitianOp;
use super::tol;

/// A single-qubit POVM with at least four effects, validated on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleQubitPovm<T> {
    label: String,
    effects: Vec<HermitianOp<T>>,
}

impl<T: Real> SingleQubitPovm<T> {
    /// Validates positivity, completeness and informational completeness.
    pub fn new(label: impl Into<String>, effects: Vec<HermitianOp<T>>) -> Result<Self> {
        let label = label.into();
        if effects.len() < 4 {
            return Err(Error::NotInformationallyComplete(format!(
                "{label}: {} effects, need at least 4",
                effects.len()
            )));
        }
        if let Some(i) = effects.iter().position(|e| !e.is_finite()) {
            return Err(Error::InvalidPovm(format!(
                "{label}: effect {i} is not finite"
            )));
        }
        let psd_tol = tol::<T>(1e-10);
        for (i, e) in effects.iter().enumerate() {
            let min = e.eigenvalues()[0];
            if min < -psd_tol {
                return Err(Error::InvalidPovm(format!(
                    "{label}: effect {i} has negative eigenvalue {min}"
                )));
            }
        }
        let total = effects.iter().fold(HermitianOp::zero(), |acc, &e| acc + e);
        let dev = total.max_abs_diff(&HermitianOp::identity());
        if dev > tol::<T>(1e-12) {
            return Err(Error::InvalidPovm(format!(
                "{label}: effects sum to identity only within {dev}"
            )));
        }
        let povm = Self { label, effects };
        // rank check
        greedy_basis(&povm.effects)?;
        Ok(povm)
    }

    /// Uniformly random Z, X or Y basis measurement; outcome order
    /// `|0>, |1>, |+>, |->, |+i>, |-i>`, each effect one third of a projector.
    pub fn pauli6() -> Self {
        let s = T::one() / T::lit(6.0);
        let effects = [
            [s, T::zero(), T::zero(), s],
            [s, T::zero(), T::zero(), -s],
            [s, s, T::zero(), T::zero()],
            [s, -s, T::zero(), T::zero()],
            [s, T::zero(), s, T::zero()],
            [s, T::zero(), -s, T::zero()],
        ]
        .into_iter()
        .map(HermitianOp::new)
        .collect();
        Self::new("pauli6", effects).expect("Pauli-6 POVM is valid")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn effects(&self) -> &[HermitianOp<T>] {
        &self.effects
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects.len()
    }

    /// Outcome probabilities `Tr[Pi_i rho]` for a single-qubit state.
    pub fn probabilities(&self, rho: &HermitianOp<T>) -> Vec<T> {
        self.effects.iter().map(|e| e.trace_with(rho)).collect()
    }

    /// Row-major `4 x 4` matrix of the frame superoperator
    /// `F(A) = sum_j Pi_j Tr[Pi_j A]` in Pauli coordinates.
    pub fn frame_operator(&self) -> Vec<T> {
        let mut m = vec![T::zero(); 16];
        for e in &self.effects {
            let c = e.coeffs();
            for a in 0..4 {
                for b in 0..4 {
                    m[a * 4 + b] += T::lit(2.0) * c[a] * c[b];
                }
            }
        }
        m
    }
}

/// Canonical duals `D_i = F^{-1}(Pi_i)`.
pub fn canonical_duals<T: Real>(povm: &SingleQubitPovm<T>) -> Result<super::QubitDualSet<T>> {
    let inv = linalg::invert(&povm.frame_operator(), 4, tol::<T>(1e-12)).ok_or_else(|| {
        Error::NotInformationallyComplete(format!("{}: frame operator is singular", povm.label))
    })?;
    let duals = povm
        .effects
        .iter()
        .map(|e| {
            let d = linalg::matvec(&inv, 4, 4, e.coeffs());
            HermitianOp::new([d[0], d[1], d[2], d[3]])
        })
        .collect();
    Ok(super::QubitDualSet::new(duals))
}

/// Four linearly independent "basis" effects, the unique duals of that
/// minimal basis, and the expansion of every redundant effect in it.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimalBasisSelection<T> {
    /// Ascending outcome indices of the basis effects.
    pub basis_indices: [usize; 4],
    /// Ascending outcome indices of the remaining effects.
    pub redundant_indices: Vec<usize>,
    /// `D*_i`, biorthogonal to the basis effects: `Tr[Pi_k D*_i] = delta_ik`.
    pub star_duals: [HermitianOp<T>; 4],
    /// `overlap[j][i] = Tr[D*_i Pi~_j]` for redundant `j`, basis `i`.
    pub overlap: Vec<[T; 4]>,
}

impl<T: Real> MinimalBasisSelection<T> {
    pub fn n_outcomes(&self) -> usize {
        4 + self.redundant_indices.len()
    }

    pub fn n_params(&self) -> usize {
        4 * self.redundant_indices.len()
    }

    /// Largest `|Tr[Pi_k D*_i] - delta_ik|` over the basis.
    pub fn biorthogonality_residual(&self, povm: &SingleQubitPovm<T>) -> T {
        let mut worst = T::zero();
        for (k, &bk) in self.basis_indices.iter().enumerate() {
            for (i, d) in self.star_duals.iter().enumerate() {
                let delta = if i == k { T::one() } else { T::zero() };
                worst = worst.max((povm.effects[bk].trace_with(d) - delta).abs());
            }
        }
        worst
    }
}

/// Greedy pivoted elimination over the `r x 4` coordinate matrix: for each
/// Pauli coordinate in turn, take the unused effect with the largest
/// remaining entry (lowest index on ties) and eliminate it from the rest.
fn greedy_basis<T: Real>(effects: &[HermitianOp<T>]) -> Result<[usize; 4]> {
    let mut rows: Vec<[T; 4]> = effects.iter().map(|e| *e.coeffs()).collect();
    let scale = rows.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    let tie = tol::<T>(1e-12) * scale;
    let mut used = vec![false; rows.len()];
    let mut picked = [0usize; 4];
    for col in 0..4 {
        let mut best: Option<(usize, T)> = None;
        for (i, row) in rows.iter().enumerate() {
            if used[i] {
                continue;
            }
            let v = row[col].abs();
            match best {
                Some((_, b)) if v <= b + tie => {}
                _ => best = Some((i, v)),
            }
        }
        let (p, v) = best.expect("at least four effects");
        if v <= tol::<T>(1e-10) * scale {
            return Err(Error::NotInformationallyComplete(
                "effects span fewer than 4 operator dimensions".into(),
            ));
        }
        used[p] = true;
        picked[col] = p;
        let pivot_row = rows[p];
        for (i, row) in rows.iter_mut().enumerate() {
            if used[i] {
                continue;
            }
            let f = row[col] / pivot_row[col];
            for k in 0..4 {
                row[k] -= f * pivot_row[k];
            }
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

pub fn select_minimal_basis<T: Real>(
    povm: &SingleQubitPovm<T>,
) -> Result<MinimalBasisSelection<T>> {
    let basis_indices = greedy_basis(&povm.effects)?;
    let redundant_indices: Vec<usize> = (0..povm.n_outcomes())
        .filter(|i| !basis_indices.contains(i))
        .collect();

    // 2 B D = I, rows of B are basis effect coordinates, columns of D are D*_i.
    let mut two_b = vec![T::zero(); 16];
    for (k, &bk) in basis_indices.iter().enumerate() {
        for a in 0..4 {
            two_b[k * 4 + a] = T::lit(2.0) * povm.effects[bk].coeffs()[a];
        }
    }
    let d = linalg::invert(&two_b, 4, tol::<T>(1e-12)).ok_or_else(|| {
        Error::NotInformationallyComplete("basis effects are not independent".into())
    })?;
    let star_duals = [0, 1, 2, 3].map(|i| HermitianOp::new([d[i], d[4 + i], d[8 + i], d[12 + i]]));
    let overlap = redundant_indices
        .iter()
        .map(|&j| star_duals.map(|s| s.trace_with(&povm.effects[j])))
        .collect();
    Ok(MinimalBasisSelection {
        basis_indices,
        redundant_indices,
        star_duals,
        overlap,
    })
}

/// A POVM together with its fixed minimal-basis selection.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitFrame<T> {
    pub povm: SingleQubitPovm<T>,
    pub selection: MinimalBasisSelection<T>,
}

impl<T: Real> QubitFrame<T> {
    pub fn new(povm: SingleQubitPovm<T>) -> Result<Self> {
        let selection = select_minimal_basis(&povm)?;
        Ok(Self { povm, selection })
    }

    pub fn pauli6() -> Self {
        Self::new(SingleQubitPovm::pauli6()).expect("Pauli-6 has a minimal basis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords_close(op: &HermitianOp<f64>, want: [f64; 4], eps: f64) -> bool {
        op.coeffs()
            .iter()
            .zip(want)
            .all(|(a, b)| (a - b).abs() < eps)
    }

    #[test]
    fn pauli6_first_effect_and_completeness() {
        let p = SingleQubitPovm::<f64>::pauli6();
        assert!(coords_close(
            &p.effects()[0],
            [1.0 / 6.0, 0.0, 0.0, 1.0 / 6.0],
            1e-15
        ));
        let sum = p.effects().iter().fold(HermitianOp::zero(), |a, &e| a + e);
        assert!(sum.max_abs_diff(&HermitianOp::identity()) < 1e-15);
    }

    #[test]
    fn pauli6_plus_effect_x_trace() {
        // (1/3)|+><+| as a dense matrix is [[1/6, 1/6], [1/6, 1/6]]; X = [[0,1],[1,0]].
        let dense_trace = 1.0 / 6.0 + 1.0 / 6.0;
        let p = SingleQubitPovm::<f64>::pauli6();
        let x = HermitianOp::pauli(super::super::Pauli::X);
        assert!((p.effects()[2].trace_with(&x) - dense_trace).abs() < 1e-15);
        assert!((dense_trace - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_duals_match_classical_shadows() {
        let p = SingleQubitPovm::<f64>::pauli6();
        let d = canonical_duals(&p).unwrap();
        let want = [
            [0.5, 0.0, 0.0, 1.5],
            [0.5, 0.0, 0.0, -1.5],
            [0.5, 1.5, 0.0, 0.0],
            [0.5, -1.5, 0.0, 0.0],
            [0.5, 0.0, 1.5, 0.0],
            [0.5, 0.0, -1.5, 0.0],
        ];
        for (op, w) in d.duals().iter().zip(want) {
            assert!(coords_close(op, w, 1e-12), "{op:?} vs {w:?}");
        }
    }

    #[test]
    fn canonical_duals_f32() {
        let p = SingleQubitPovm::<f32>::pauli6();
        let d = canonical_duals(&p).unwrap();
        assert!((d.duals()[0].coeffs()[3] - 1.5).abs() < 1e-5);
        assert!(d.duality_residual(&p) < 1e-5);
    }

    #[test]
    fn canonical_duals_of_minimal_povm_match_dense_solve() {
        // A rank-4 minimal POVM (tetrahedral SIC-like with unequal weights is
        // not needed; any valid 4-outcome POVM works): Pi_i = (I + n_i.sigma)/4.
        let s = 1.0 / 3f64.sqrt();
        let dirs = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
        let effects: Vec<_> = dirs
            .iter()
            .map(|n| HermitianOp::new([0.25, 0.25 * n[0], 0.25 * n[1], 0.25 * n[2]]))
            .collect();
        let povm = SingleQubitPovm::new("sic", effects.clone()).unwrap();
        let d = canonical_duals(&povm).unwrap();
        // Dense oracle: for a minimal POVM the duals are the unique solution of
        // Tr[Pi_k D_i] = delta_ik, i.e. 2 E D = I with E rows = effect coords.
        let e = [
            effects[0].coeffs().map(|c| 2.0 * c),
            effects[1].coeffs().map(|c| 2.0 * c),
            effects[2].coeffs().map(|c| 2.0 * c),
            effects[3].coeffs().map(|c| 2.0 * c),
        ];
        for i in 0..4 {
            let mut rhs = [0.0; 4];
            rhs[i] = 1.0;
            let x = gauss_solve(e, rhs);
            assert!(coords_close(&d.duals()[i], x, 1e-10));
        }
    }

    // Textbook Gaussian elimination, independent of `linalg`.
    fn gauss_solve(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> [f64; 4] {
        for c in 0..4 {
            let p = (c..4)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..4 {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = [0.0; 4];
        for r in (0..4).rev() {
            let s: f64 = (r + 1..4).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn greedy_basis_for_pauli6() {
        let sel = select_minimal_basis(&SingleQubitPovm::<f64>::pauli6()).unwrap();
        assert_eq!(sel.basis_indices, [0, 1, 2, 4]);
        assert_eq!(sel.redundant_indices, vec![3, 5]);
        assert_eq!(sel.n_params(), 8);
    }

    #[test]
    fn selection_is_biorthogonal_and_reconstructs_redundant() {
        let povm = SingleQubitPovm::<f64>::pauli6();
        let sel = select_minimal_basis(&povm).unwrap();
        assert!(sel.biorthogonality_residual(&povm) < 1e-10);
        for (row, &j) in sel.overlap.iter().zip(&sel.redundant_indices) {
            let rebuilt = sel
                .basis_indices
                .iter()
                .zip(row)
                .fold(HermitianOp::zero(), |acc, (&b, &c)| {
                    acc + povm.effects()[b] * c
                });
            assert!(rebuilt.max_abs_diff(&povm.effects()[j]) < 1e-12);
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let povm = SingleQubitPovm::<f64>::pauli6();
        let a = select_minimal_basis(&povm).unwrap();
        let b = select_minimal_basis(&povm).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_incomplete_povms() {
        // Z and X measurements only: four effects spanning three dimensions.
        let h = 0.25;
        let effects = vec![
            HermitianOp::new([h, 0.0, 0.0, h]),
            HermitianOp::new([h, 0.0, 0.0, -h]),
            HermitianOp::new([h, h, 0.0, 0.0]),
            HermitianOp::new([h, -h, 0.0, 0.0]),
        ];
        assert!(matches!(
            SingleQubitPovm::new("zx", effects),
            Err(Error::NotInformationallyComplete(_))
        ));
        let three = vec![HermitianOp::<f64>::identity() * (1.0 / 3.0); 3];
        assert!(SingleQubitPovm::new("three", three).is_err());
    }

    #[test]
    fn rejects_non_positive_or_incomplete_sum() {
        let mut e: Vec<_> = SingleQubitPovm::<f64>::pauli6().effects().to_vec();
        e[0] = HermitianOp::new([1.0 / 6.0, 0.0, 0.0, 0.3]);
        e[1] = HermitianOp::new([1.0 / 6.0, 0.0, 0.0, -0.3]);
        assert!(matches!(
            SingleQubitPovm::new("bad", e),
            Err(Error::InvalidPovm(_))
        ));

        let mut e: Vec<_> = SingleQubitPovm::<f64>::pauli6().effects().to_vec();
        e[0] = e[0] * 1.01;
        assert!(matches!(
            SingleQubitPovm::new("bad", e),
            Err(Error::InvalidPovm(_))
        ));
    }
}
