//! Single-qubit operator algebra in Pauli coordinates, POVMs, and their dual
//! frames.
//!
//! Every operator is a real 4-vector `(a_I, a_X, a_Y, a_Z)` standing for
//! `a_I I + a_X X + a_Y Y + a_Z Z`, so traces reduce to dot products:
//! `Tr[A B] = 2 (a . b)`.
//!
//! An over-complete POVM with `r > 4` effects admits a whole affine family of
//! duals. [`MinimalBasisSelection`] fixes four linearly independent "basis"
//! effects; the duals attached to the remaining `r - 4` "redundant" effects
//! are free Hermitian operators ([`QubitDualParams`]) and the basis duals are
//! solved from them by [`assemble_duals`], which satisfies the duality
//! identity for every parameter value.

mod duals;
mod op;
mod povm;

pub use duals::{
    assemble_duals, params_from_duals, ProductDualSet, QubitDualParams, QubitDualSet, QubitDuals,
};
pub use op::{HermitianOp, Pauli};
pub use povm::{
    canonical_duals, select_minimal_basis, MinimalBasisSelection, QubitFrame, SingleQubitPovm,
};

use crate::scalar::Real;

/// Absolute tolerance `base`, widened for low-precision scalars.
pub(crate) fn tol<T: Real>(base: f64) -> T {
    T::lit(base).max(T::epsilon() * T::lit(64.0))
}
