use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::op::{HermitianOp, Pauli};
use super::povm::{canonical_duals, MinimalBasisSelection, QubitFrame, SingleQubitPovm};
use super::tol;

/// Pauli coordinates of the free dual attached to each redundant effect.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitDualParams<T> {
    pub theta: Vec<[T; 4]>,
}

impl<T: Real> QubitDualParams<T> {
    pub fn zeros(n_redundant: usize) -> Self {
        Self {
            theta: vec![[T::zero(); 4]; n_redundant],
        }
    }

    pub fn from_flat(flat: &[T]) -> Self {
        assert_eq!(flat.len() % 4, 0);
        Self {
            theta: flat
                .chunks_exact(4)
                .map(|c| [c[0], c[1], c[2], c[3]])
                .collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.theta.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().flatten().all(|v| v.is_finite())
    }
}

/// One dual operator per POVM outcome, in outcome order.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitDualSet<T> {
    duals: Vec<HermitianOp<T>>,
}

impl<T: Real> QubitDualSet<T> {
    pub fn new(duals: Vec<HermitianOp<T>>) -> Self {
        Self { duals }
    }

    pub fn duals(&self) -> &[HermitianOp<T>] {
        &self.duals
    }

    pub fn len(&self) -> usize {
        self.duals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duals.is_empty()
    }

    /// `max_P || sum_i Tr[P Pi_i] D_i - P ||_inf`; zero for a true dual frame.
    pub fn duality_residual(&self, povm: &SingleQubitPovm<T>) -> T {
        assert_eq!(self.duals.len(), povm.n_outcomes());
        let mut worst = T::zero();
        for p in Pauli::ALL {
            let rebuilt = povm
                .effects()
                .iter()
                .zip(&self.duals)
                .fold(HermitianOp::zero(), |acc, (e, &d)| {
                    acc + d * e.trace_pauli(p)
                });
            worst = worst.max(rebuilt.max_abs_diff(&HermitianOp::pauli(p)));
        }
        worst
    }

    /// `table[i][P] = Tr[P D_i]`.
    pub fn trace_table(&self) -> Vec<[T; 4]> {
        self.duals
            .iter()
            .map(|d| Pauli::ALL.map(|p| d.trace_pauli(p)))
            .collect()
    }
}

/// Builds the full dual set from free redundant duals: basis duals are
/// `D*_i - sum_j Tr[D*_i Pi~_j] D~_j`, redundant duals are `D~_j` themselves.
pub fn assemble_duals<T: Real>(
    sel: &MinimalBasisSelection<T>,
    params: &QubitDualParams<T>,
) -> QubitDualSet<T> {
    assert_eq!(
        params.theta.len(),
        sel.redundant_indices.len(),
        "one free dual per redundant effect"
    );
    let mut duals = vec![HermitianOp::zero(); sel.n_outcomes()];
    for (i, &b) in sel.basis_indices.iter().enumerate() {
        let mut d = sel.star_duals[i];
        for (row, theta) in sel.overlap.iter().zip(&params.theta) {
            d = d - HermitianOp::new(*theta) * row[i];
        }
        duals[b] = d;
    }
    for (&j, theta) in sel.redundant_indices.iter().zip(&params.theta) {
        duals[j] = HermitianOp::new(*theta);
    }
    QubitDualSet::new(duals)
}

/// Recovers the free parameters of an existing dual set. The redundant duals
/// are read off directly; the basis duals must then agree with
/// [`assemble_duals`], otherwise the input is not a dual frame.
pub fn params_from_duals<T: Real>(
    sel: &MinimalBasisSelection<T>,
    duals: &QubitDualSet<T>,
) -> Result<QubitDualParams<T>> {
    if duals.len() != sel.n_outcomes() {
        return Err(Error::DimensionMismatch(format!(
            "{} duals for a {}-outcome POVM",
            duals.len(),
            sel.n_outcomes()
        )));
    }
    let params = QubitDualParams {
        theta: sel
            .redundant_indices
            .iter()
            .map(|&j| *duals.duals()[j].coeffs())
            .collect(),
    };
    let rebuilt = assemble_duals(sel, &params);
    let residual = sel
        .basis_indices
        .iter()
        .map(|&b| rebuilt.duals()[b].max_abs_diff(&duals.duals()[b]))
        .fold(T::zero(), T::max);
    if !(residual <= tol::<T>(1e-8)) {
        return Err(Error::NotADual {
            residual: residual.as_f64(),
        });
    }
    Ok(params)
}

/// One qubit's frame, free parameters, and the duals they assemble to.
#[derive(Clone, Debug)]
pub struct QubitDuals<T> {
    frame: Arc<QubitFrame<T>>,
    params: QubitDualParams<T>,
    duals: QubitDualSet<T>,
    traces: Vec<[T; 4]>,
}

impl<T: Real> QubitDuals<T> {
    pub fn new(frame: Arc<QubitFrame<T>>, params: QubitDualParams<T>) -> Self {
        let duals = assemble_duals(&frame.selection, &params);
        let traces = duals.trace_table();
        Self {
            frame,
            params,
            duals,
            traces,
        }
    }

    pub fn frame(&self) -> &Arc<QubitFrame<T>> {
        &self.frame
    }

    pub fn params(&self) -> &QubitDualParams<T> {
        &self.params
    }

    pub fn duals(&self) -> &QubitDualSet<T> {
        &self.duals
    }

    /// Cached `Tr[P D_i]`, indexed `[outcome][pauli]`.
    #[inline]
    pub fn traces(&self) -> &[[T; 4]] {
        &self.traces
    }

    pub fn duality_residual(&self) -> T {
        self.duals.duality_residual(&self.frame.povm)
    }
}

/// Per-qubit dual sets of an `N`-qubit product POVM. Immutable: updates
/// return a new value.
#[derive(Clone, Debug)]
pub struct ProductDualSet<T> {
    qubits: Vec<QubitDuals<T>>,
}

impl<T: Real> ProductDualSet<T> {
    /// Canonical duals on every qubit.
    pub fn canonical(frames: Vec<Arc<QubitFrame<T>>>) -> Result<Self> {
        let qubits = frames
            .into_iter()
            .map(|frame| {
                let can = canonical_duals(&frame.povm)?;
                let params = params_from_duals(&frame.selection, &can)?;
                Ok(QubitDuals::new(frame, params))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { qubits })
    }

    pub fn canonical_pauli6(n_qubits: usize) -> Self {
        let frame = Arc::new(QubitFrame::pauli6());
        Self::canonical(vec![frame; n_qubits]).expect("Pauli-6 canonical duals exist")
    }

    /// Builds from explicit per-qubit dual sets, validating each one.
    pub fn from_dual_sets(
        frames: Vec<Arc<QubitFrame<T>>>,
        duals: Vec<QubitDualSet<T>>,
    ) -> Result<Self> {
        if frames.len() != duals.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frames but {} dual sets",
                frames.len(),
                duals.len()
            )));
        }
        let qubits = frames
            .into_iter()
            .zip(duals)
            .map(|(frame, d)| {
                let params = params_from_duals(&frame.selection, &d)?;
                Ok(QubitDuals::new(frame, params))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { qubits })
    }

    pub fn from_params(
        frames: Vec<Arc<QubitFrame<T>>>,
        params: Vec<QubitDualParams<T>>,
    ) -> Result<Self> {
        if frames.len() != params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frames but {} parameter sets",
                frames.len(),
                params.len()
            )));
        }
        let qubits = frames
            .into_iter()
            .zip(params)
            .map(|(frame, p)| {
                if p.theta.len() != frame.selection.redundant_indices.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} free duals for {} redundant effects",
                        p.theta.len(),
                        frame.selection.redundant_indices.len()
                    )));
                }
                Ok(QubitDuals::new(frame, p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { qubits })
    }

    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn qubit(&self, q: usize) -> &QubitDuals<T> {
        &self.qubits[q]
    }

    pub fn qubits(&self) -> &[QubitDuals<T>] {
        &self.qubits
    }

    pub fn frames(&self) -> Vec<Arc<QubitFrame<T>>> {
        self.qubits.iter().map(|q| q.frame.clone()).collect()
    }

    /// Copy with qubit `q`'s parameters replaced.
    pub fn with_params(&self, q: usize, params: QubitDualParams<T>) -> Self {
        let mut qubits = self.qubits.clone();
        qubits[q] = QubitDuals::new(qubits[q].frame.clone(), params);
        Self { qubits }
    }

    pub fn max_duality_residual(&self) -> T {
        self.qubits
            .iter()
            .map(QubitDuals::duality_residual)
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::select_minimal_basis;
    use proptest::prelude::*;

    fn pauli6_frame() -> QubitFrame<f64> {
        QubitFrame::pauli6()
    }

    #[test]
    fn zero_params_give_star_duals() {
        let f = pauli6_frame();
        let d = assemble_duals(&f.selection, &QubitDualParams::zeros(2));
        for (i, &b) in f.selection.basis_indices.iter().enumerate() {
            assert_eq!(d.duals()[b], f.selection.star_duals[i]);
        }
        for &j in &f.selection.redundant_indices {
            assert_eq!(d.duals()[j], HermitianOp::zero());
        }
        assert!(d.duality_residual(&f.povm) < 1e-12);
    }

    #[test]
    fn zero_variance_duals_are_reachable() {
        // Redundant effects are 3 (|->) and 5 (|-i>); their duals are the free
        // matrices, so the parameters are the coordinates of D3, D5 directly.
        let f = pauli6_frame();
        let params = QubitDualParams {
            theta: vec![[0.5, -1.5, 0.0, 0.5], [0.5, 0.0, -1.5, 0.5]],
        };
        let d = assemble_duals(&f.selection, &params);
        let want = [
            [0.5, 0.0, 0.0, 0.5],
            [0.5, 0.0, 0.0, -2.5],
            [0.5, 1.5, 0.0, 0.5],
            [0.5, -1.5, 0.0, 0.5],
            [0.5, 0.0, 1.5, 0.5],
            [0.5, 0.0, -1.5, 0.5],
        ];
        for (op, w) in d.duals().iter().zip(want) {
            assert!(
                op.max_abs_diff(&HermitianOp::new(w)) < 1e-12,
                "{op:?} vs {w:?}"
            );
        }
    }

    #[test]
    fn canonical_params_read_off_and_round_trip() {
        let f = pauli6_frame();
        let can = canonical_duals(&f.povm).unwrap();
        let p = params_from_duals(&f.selection, &can).unwrap();
        let want = [[0.5, -1.5, 0.0, 0.0], [0.5, 0.0, -1.5, 0.0]];
        for (got, w) in p.theta.iter().zip(want) {
            assert!(HermitianOp::new(*got).max_abs_diff(&HermitianOp::new(w)) < 1e-12);
        }
        let back = assemble_duals(&f.selection, &p);
        for (a, b) in back.duals().iter().zip(can.duals()) {
            assert!(a.max_abs_diff(b) < 1e-10);
        }
    }

    #[test]
    fn perturbed_basis_dual_is_rejected() {
        let f = pauli6_frame();
        let can = canonical_duals(&f.povm).unwrap();
        let mut ops = can.duals().to_vec();
        ops[0] = ops[0] + HermitianOp::pauli(Pauli::Z) * 0.1;
        match params_from_duals(&f.selection, &QubitDualSet::new(ops)) {
            Err(Error::NotADual { residual }) => assert!((residual - 0.1).abs() < 1e-12),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn product_with_params_only_touches_one_qubit() {
        let d = ProductDualSet::<f64>::canonical_pauli6(3);
        let p = QubitDualParams::from_flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let e = d.with_params(1, p.clone());
        assert_eq!(e.qubit(1).params(), &p);
        assert_eq!(e.qubit(0).params(), d.qubit(0).params());
        assert!(e.max_duality_residual() < 1e-10);
    }

    #[test]
    fn from_params_checks_dimensions() {
        let frame = Arc::new(pauli6_frame());
        let bad = ProductDualSet::from_params(vec![frame], vec![QubitDualParams::zeros(3)]);
        assert!(matches!(bad, Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn duality_holds_for_any_params(flat in proptest::collection::vec(-50.0f64..50.0, 8)) {
            let f = pauli6_frame();
            let d = assemble_duals(&f.selection, &QubitDualParams::from_flat(&flat));
            prop_assert!(d.duality_residual(&f.povm) < 1e-10);
        }

        #[test]
        fn duality_holds_for_random_povms(
            dirs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 3),
            flat in proptest::collection::vec(-5.0f64..5.0, 12),
        ) {
            // Three random projective measurements mixed with equal weight:
            // six effects, generically informationally complete.
            let mut effects = Vec::new();
            for (x, y, z) in dirs {
                let n = (x * x + y * y + z * z).sqrt();
                prop_assume!(n > 1e-3);
                let (x, y, z) = (x / n, y / n, z / n);
                let s = 1.0 / 6.0;
                effects.push(HermitianOp::new([s, s * x, s * y, s * z]));
                effects.push(HermitianOp::new([s, -s * x, -s * y, -s * z]));
            }
            let Ok(povm) = SingleQubitPovm::new("random", effects) else { return Ok(()); };
            let sel = select_minimal_basis(&povm).unwrap();
            prop_assume!(sel.biorthogonality_residual(&povm) < 1e-9);
            let d = assemble_duals(&sel, &QubitDualParams::from_flat(&flat[..sel.n_params()]));
            // conditioning of a random basis can be poor; scale the bound
            let scale = sel.star_duals.iter().map(|s| s.coeffs().iter().fold(1.0f64, |m, c| m.max(c.abs()))).fold(1.0, f64::max);
            prop_assert!(d.duality_residual(&povm) < 1e-10 * scale * 10.0);
        }
    }
}
