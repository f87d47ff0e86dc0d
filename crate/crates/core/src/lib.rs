//! Random products of 2×2 matrices with rank-one letters.
//!
//! A cocycle is a finite alphabet of real 2×2 matrices, some of rank one
//! and the rest invertible, driven by a Bernoulli or Markov shift. The
//! crate computes its stationary measure on the projective line, the top
//! Lyapunov exponent (branch series, Furstenberg integral, Monte Carlo),
//! certificates of projective uniform hyperbolicity, parameter sweeps over
//! winding families, and finite-time statistics of `log‖Aⁿ v‖`.

pub mod catalog;
pub mod error;
pub mod families;
pub mod hyperbolicity;
pub mod io;
pub mod limits;
pub mod linalg;
pub mod numeric;
pub mod shift;
pub mod stationary;

pub use error::{Error, Result};
pub use linalg::{proj_act, proj_dist, range_kernel, svd2, Arc, Mat2, ProjPoint, Svd2};
pub use shift::{Base, Cocycle, Word};
