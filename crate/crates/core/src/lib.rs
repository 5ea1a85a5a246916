//! Numerical spectral theory of periodic Hill operators `-y'' + u y = λ y`.
//!
//! The crate is organised bottom-up:
//!
//! * [`ode_core`] — potentials, an adaptive extrapolation integrator, the
//!   fundamental matrix `Y(x, λ)` and its λ-derivative.
//! * [`floquet`] — discriminant, multiplier, Bloch–Floquet solutions.
//! * [`spectrum`] — band edges, Dirichlet eigenvalues, signatures, the
//!   spectral data `Σ(u)`, and a Fourier–Hill truncation oracle.
//! * [`products`] — canonical products and every ingredient of the
//!   Riemann–Hilbert problem (`B`, `f±`, `f⁰`, jumps).
//! * [`rhp_verify`] — assembly of `Φ` and checks of the jump, determinant,
//!   edge, asymptotic and reconstruction conditions.
//! * [`kdv`] — Dubrovin flow, `α±`, `e±`, reference pseudospectral solver.
//! * [`finite_gap`] — hyperelliptic periods, theta functions, Its–Matveev
//!   potentials, Baker–Akhiezer functions and periodicity certificates.
//! * [`cli_io`] — file formats, run configuration and the `hillspec` CLI.
//!
//! All multivalued functions go through [`branch`], which fixes the argument
//! range to `[0, 2π)` so that `√λ` lies in the closed upper half plane.

pub mod branch;
pub mod cli_io;
pub mod elliptic;
pub mod error;
pub mod finite_gap;
pub mod floquet;
pub mod kdv;
pub mod ode_core;
pub mod products;
pub mod quad;
pub mod rhp_verify;
pub mod spectrum;

pub use error::{HillError, Result};
pub use num_complex::Complex64 as C64;
