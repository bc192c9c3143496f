//! Numerical laboratory for measure-geometric second-order operators on the
//! unit interval and the diffusions they generate.
//!
//! The crate is organised around five building blocks:
//!
//! * [`measure`] — self-similar measures from iterated function systems,
//!   their distribution functions and pseudo-inverses, finite atomizations,
//!   and self-similar extensions to the real line.
//! * [`transform`] — the phase-space transformation sending a weighted
//!   measure pair `(ν, μ)` to the classical pair `(ν∘F_μ⁻¹, Λ)`: atom
//!   pushforwards, the induced function-space relabeling, and the image IFS.
//! * [`operator`] — Stieltjes-string discretizations of `Δ_{ν,μ}` under
//!   Robin boundary data, a symmetric-tridiagonal eigensolver, eigenfunction
//!   reconstruction, and the independent resolvent-kernel route.
//! * [`spectra`] — eigenvalue counting functions, the self-similar spectral
//!   exponent, log-log slope fits, and depth-convergence studies.
//! * [`diffusion`] — Brownian paths, local times, time changes, gap
//!   diffusions as birth-death chains, closed-form exit functionals, and
//!   walk-dimension estimation.
//!
//! All types are immutable after construction and every operation is a pure
//! function of its inputs (stochastic ones are pure functions of the inputs
//! and a 64-bit seed), so values can be shared freely across threads.

pub mod diffusion;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod operator;
pub mod spectra;
pub mod transform;

pub use error::{Error, Result};
