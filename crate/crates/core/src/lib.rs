//! Decide whether a stochastic exponential is a true or a strict local
//! martingale, and estimate its deficit `1 - E[Z_t]`.
//!
//! The diffusion case combines Feller's explosion test on the original and the
//! Girsanov-modified dynamics ([`feller`]) with a localized Monte Carlo
//! estimator ([`mc`]). [`jumpkit`] handles jump-diffusions with compound
//! Poisson and fixed-time jumps, and [`hilbert`] a spectrally truncated
//! Q-Brownian motion.

pub mod expr;
pub mod feller;
pub mod hilbert;
pub mod jumpkit;
pub mod mc;
pub mod model;
pub mod quad;

pub use expr::{CoefficientExpr, ExprError};
pub use model::{Classification, DiffusionSpec, ExponentSpec, Interval, LocalizationPlan, MartingaleVerdict};
