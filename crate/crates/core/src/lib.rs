//! Relativistic few-body quantum mechanics on momentum grids.
//!
//! The crate builds Bakamjian-Thomas-type mass operators for a small
//! multichannel model space (two nucleon-like species, a heavy flavored
//! partner, and light mesons), solves bound states and multichannel
//! scattering, and checks the cluster and Poincare-algebra properties of
//! the resulting dynamical representations.
//!
//! Layout:
//! - [`kinematics`]: four-vectors, Lorentz transforms, Wigner rotations,
//!   single-particle irreducible representation matrix elements.
//! - [`spin`]: half-integer spin bookkeeping and Wigner D matrices.
//! - [`grid`]: Gauss-Legendre quadrature and tangent-mapped radial momentum
//!   grids shared by every operator build.
//! - [`sectors`]: particle content bookkeeping, doublet products, the
//!   six-sector model space, and the free (kinematic) representation acting
//!   on multi-component states.
//! - [`coupling`]: Clebsch-Gordan coefficients, spherical harmonics, and
//!   two-to-one velocity/spin coupling maps between product and irreducible
//!   bases.
//! - [`massop`]: kernels, free mass operators, embedded cluster
//!   interactions, and full-model assembly.
//! - [`solver`]: symmetric eigensolves, Lippmann-Schwinger equations with
//!   principal-value subtraction, S matrices, Moller operators.
//! - [`cluster`]: 2+1 embeddings, spectral unitaries relating tensor-product
//!   and mass-operator representations, symmetric products over partitions,
//!   cluster-limit metrics, dynamical representations, and the
//!   finite-difference Poincare-algebra check.
//! - [`linalg`]: thin deterministic wrappers (sorted symmetric eigensolves,
//!   complex solves, logarithms of unitaries, splines).
//!
//! With the default `parallel` feature the per-energy and per-grid-node
//! outer loops use rayon; disabling it yields a fully sequential build with
//! identical results.

pub mod cluster;
pub mod coupling;
pub mod error;
pub mod grid;
pub mod kinematics;
pub mod linalg;
pub mod massop;
pub mod parallel;
pub mod sectors;
pub mod solver;
pub mod spin;

pub use error::{Error, Result};
