//! Offline-online numerical homogenization for periodic coefficients with
//! random defects.
//!
//! This crate solves the torus model problem `-div(A grad u) = f` on
//! `[0, 1]^d` (d = 1 or 2) with periodic boundary conditions and zero-mean
//! solutions, where the coefficient `A` is a periodic microstructure
//! perturbed by independent Bernoulli defects on an `ε`-cell lattice.  The
//! discretization is a Petrov-Galerkin localized-orthogonal-decomposition
//! (LOD) method: coarse trial functions are corrected by local fine-scale
//! problems on element patches so the coarse system captures the multiscale
//! behaviour of `A`.
//!
//! The point of the crate is the *offline-online splitting* of that method
//! for the random-defect coefficient class:
//!
//! * **Offline** ([`offline`]): for a reference element, solve the corrector
//!   problem once for the defect-free coefficient and once per possible
//!   single-defect location in its patch, and store the local system
//!   contributions of each.
//! * **Online** ([`online`]): for each coefficient sample, every element's
//!   local system is a weighted combination of the stored single-defect
//!   contributions (translated to the element), so assembling and solving
//!   the coarse system costs a tiny fraction of recomputing correctors.
//!
//! The approximation quality of the combination step is controlled two
//! ways: an a-posteriori error indicator computable per element from
//! offline data ([`indicator`]), and, in one dimension, sharp closed-form
//! error bounds via harmonic means ([`oned`]).  Reference solvers that
//! recompute every corrector per sample ([`reference`]) quantify the actual
//! combination error, and [`experiments`] packages the Monte-Carlo
//! campaigns behind the CLI.

pub mod coefficient;
pub mod error;
pub mod experiments;
pub mod corrector;
pub mod indicator;
pub mod interpolation;
pub mod mesh;
pub mod offline;
pub mod oned;
pub mod online;
pub mod reference;
pub mod linalg;

pub use error::{Error, Result};
