//! Monte Carlo estimation of `E[Z_t]`, directly under the original dynamics
//! and through the localization identity `E[Z_t] = lim_n Q(rho_n > t)` under
//! the modified dynamics.

mod engine;
mod estimators;
pub mod rng;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeficitCurve, ModelError};

pub use engine::{map_paths, run_path, simulate_path, simulate_path_until, PathObserver, PathRecord, Step, TerminalStatus};
pub use estimators::{
    direct_samples, ensemble_rows, estimate_deficit, estimate_deficit_localized, estimate_deficit_with, estimate_mean_direct, localized_bound_check,
    novikov_estimate, novikov_samples, stochastic_exponential, stopped_means, DeficitOptions, EnsembleRow, LevelBound,
};
pub use stats::{doubling_ladder, ladder_slope, pairwise_sum, MCEstimate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("coefficient is not finite at t={t}, x={x:?}")]
    EvalDomain { t: f64, x: Vec<f64> },
    #[error("deficit curve did not converge before the levels ran out")]
    PlanTooCoarse { curve: Box<DeficitCurve> },
    #[error("q is unbounded on the level set |x| <= {level} (grid sup {sup:e})")]
    UnboundedOnCompact { level: f64, sup: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt_max: f64,
    pub horizon: f64,
    pub seed: u64,
    pub adaptive: bool,
    pub bridge_correction: bool,
    pub explosion_guard: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt_max: 1e-2,
            horizon: 1.0,
            seed: 2024,
            adaptive: true,
            bridge_correction: false,
            explosion_guard: 1e6,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), McError> {
        let bad = |msg: &str| Err(McError::Config(msg.into()));
        if self.n_paths == 0 {
            return bad("n_paths must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive and finite");
        }
        if !(self.dt_max > 0.0) || self.dt_max > self.horizon {
            return bad("dt_max must be positive and at most the horizon");
        }
        if !(self.explosion_guard > 0.0) {
            return bad("explosion_guard must be positive");
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<(), McError> {
        if !(t > 0.0) || t > self.horizon {
            return Err(McError::Config(format!("time {t} must lie in (0, horizon = {}]", self.horizon)));
        }
        Ok(())
    }
}
