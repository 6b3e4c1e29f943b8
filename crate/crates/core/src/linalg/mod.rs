//! Linear-algebra foundation: sparse storage, element tables, small dense
//! kernels, and verified sparse direct solvers.
//!
//! The split mirrors how the rest of the crate consumes linear algebra:
//! operators are assembled deterministically into [`SparseMatrix`]
//! ([`csr`]), element-local integrals come from closed-form tables
//! ([`elements`]), tiny dense systems and trace eigenproblems are handled
//! directly ([`dense`]), and everything large goes through the
//! residual-checked sparse solvers ([`solve`]).

pub mod csr;
pub mod dense;
pub mod elements;
pub mod solve;

pub use csr::SparseMatrix;
pub use dense::{cholesky, gen_eig_max, jacobi_eigen, lu_solve};
pub use solve::{sparse_solve, SolveKind, SparseSystem, Strategy, RESIDUAL_TOL};
