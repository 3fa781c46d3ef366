//! tentlab-core: a numerical laboratory for higher-order parabolic flows
//! du/dt = -(-1)^m div_m A grad^m u with rough complex coefficients.
//!
//! The crate builds periodic spectral grids, constant-coefficient
//! semigroups, energy-stable implicit propagators for non-autonomous
//! coefficients, and the harmonic-analysis functionals (parabolic tent
//! norms, non-tangential maximal norms, Carleson and polynomial-BMO
//! norms) used to probe the quantitative behaviour of such flows at desk
//! scale. The `experiments` module packages each probe as a reproducible
//! experiment with declared tolerances and machine-readable results.

pub mod coeffs;
pub mod deriv;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod functionals;
pub mod grid;
pub mod inequalities;
pub mod io;
pub mod linalg;
pub mod poly;
pub mod prng;
pub mod propagator;
pub mod semigroup;
pub mod solver;

pub use error::{Error, Result};
