//! Near-minimax estimation of linear and N-convex functionals of a signal
//! observed through a good observation scheme (Gaussian, Poisson, Discrete).
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: bounded polyhedra, a dense simplex LP oracle and a
//!   Frank-Wolfe maximizer.
//! - [`obs`]: observation schemes, their log-moment-generating function,
//!   detectors, sampling.
//! - [`affinity`]: pairwise detector tests built from the maximal Hellinger
//!   affinity between two convex parameter sets.
//! - [`color`]: multi-hypothesis "blue vs red" tests weighted by the
//!   Perron-Frobenius vector of the pairwise risk matrix.
//! - [`linear`]: the estimator of a linear form on a union of convex sets,
//!   with its risk certificate.
//! - [`nconvex`]: N-convex functions and their level-set decompositions.
//! - [`bisection`]: the bisection estimator of an N-convex functional.

pub mod affinity;
pub mod bisection;
pub mod color;
pub mod error;
pub mod geometry;
pub mod linear;
pub mod nconvex;
pub mod obs;

pub use error::{Error, Result};
