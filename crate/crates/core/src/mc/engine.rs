//! Euler–Maruyama stepping with exit and explosion handling.
//!
//! Paths are streamed through a [`PathObserver`]; nothing but the observer's
//! own summary is kept per path.

use serde::{Deserialize, Serialize};

use super::rng::PathRng;
use super::{McError, SimConfig};
use crate::model::{norm, DiffusionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum TerminalStatus {
    ReachedHorizon,
    ExitedLevel { level: f64, time: f64 },
    NumericalExplosion { time: f64 },
}

impl TerminalStatus {
    pub fn exploded(&self) -> bool {
        matches!(self, TerminalStatus::NumericalExplosion { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            TerminalStatus::ReachedHorizon => "reached_horizon",
            TerminalStatus::ExitedLevel { .. } => "exited_level",
            TerminalStatus::NumericalExplosion { .. } => "numerical_explosion",
        }
    }
}

/// One Euler step from `(t0, x0)` to `(t1, x1)`. `drift` and `sigma`
/// (row-major) are evaluated at the left point and `dxc = sigma dW` is the
/// continuous martingale increment.
pub struct Step<'a> {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub x0: &'a [f64],
    pub x1: &'a [f64],
    pub drift: &'a [f64],
    pub sigma: &'a [f64],
    pub dxc: &'a [f64],
    /// Uniform draw shared by all levels for bridge crossing tests; `None`
    /// when bridge correction is off.
    pub bridge_uniform: Option<f64>,
}

pub trait PathObserver {
    fn step(&mut self, step: &Step<'_>) -> Result<(), McError>;
    fn finish(&mut self, _status: &TerminalStatus) {}
}

impl PathObserver for () {
    fn step(&mut self, _: &Step<'_>) -> Result<(), McError> {
        Ok(())
    }
}

/// Simulate path `index` on `[0, horizon]`, stopping early at the explosion
/// guard, on leaving the state space, or when the norm reaches `stop_level`.
pub fn run_path<O: PathObserver>(
    spec: &DiffusionSpec,
    cfg: &SimConfig,
    index: u64,
    horizon: f64,
    stop_level: f64,
    observer: &mut O,
) -> Result<TerminalStatus, McError> {
    let d = spec.dim();
    let mut rng = PathRng::new(cfg.seed, index);
    let mut x = spec.x0().to_vec();
    let mut x1 = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut dw = vec![0.0; d];
    let mut dxc = vec![0.0; d];
    let fixed_steps = (horizon / cfg.dt_max).ceil().max(1.0);
    let fixed_dt = horizon / fixed_steps;
    let dt_floor = cfg.dt_max * 1e-6;
    let mut t = 0.0;
    let mut i = 0u64;

    let status = loop {
        spec.eval_drift(t, &x, &mut b);
        spec.eval_dispersion(t, &x, &mut sigma);
        if b.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(McError::EvalDomain { t, x: x.clone() });
        }
        let (dt, t_next) = if cfg.adaptive {
            let trace: f64 = sigma.iter().map(|s| s * s).sum();
            let dt = cfg.dt_max.min(cfg.dt_max / (norm(&b) + trace + 1.0));
            if dt < dt_floor {
                break TerminalStatus::NumericalExplosion { time: t };
            }
            if t + dt >= horizon * (1.0 - 1e-12) {
                (horizon - t, horizon)
            } else {
                (dt, t + dt)
            }
        } else {
            i += 1;
            let t_next = if i as f64 >= fixed_steps { horizon } else { i as f64 * fixed_dt };
            (t_next - t, t_next)
        };
        let sq = dt.sqrt();
        for w in dw.iter_mut() {
            *w = sq * rng.normal();
        }
        for r in 0..d {
            dxc[r] = (0..d).map(|k| sigma[r * d + k] * dw[k]).sum();
            x1[r] = x[r] + b[r] * dt + dxc[r];
        }
        let bridge_uniform = cfg.bridge_correction.then(|| rng.uniform());
        observer.step(&Step {
            t0: t,
            t1: t_next,
            dt,
            x0: &x,
            x1: &x1,
            drift: &b,
            sigma: &sigma,
            dxc: &dxc,
            bridge_uniform,
        })?;
        std::mem::swap(&mut x, &mut x1);
        t = t_next;
        let r = norm(&x);
        if !r.is_finite() || r >= cfg.explosion_guard || !spec.in_state_space(&x) {
            break TerminalStatus::NumericalExplosion { time: t };
        }
        if r >= stop_level {
            break TerminalStatus::ExitedLevel { level: stop_level, time: t };
        }
        if t >= horizon {
            break TerminalStatus::ReachedHorizon;
        }
    };
    observer.finish(&status);
    Ok(status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub terminal_status: TerminalStatus,
}

impl PathRecord {
    pub fn terminal_state(&self) -> &[f64] {
        self.states.last().expect("a path has at least its initial point")
    }
}

struct Recorder {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl PathObserver for Recorder {
    fn step(&mut self, s: &Step<'_>) -> Result<(), McError> {
        self.times.push(s.t1);
        self.states.push(s.x1.to_vec());
        Ok(())
    }
}

/// Full path `index` up to the configured horizon.
pub fn simulate_path(spec: &DiffusionSpec, cfg: &SimConfig, path_index: u64) -> Result<PathRecord, McError> {
    simulate_path_until(spec, cfg, path_index, f64::INFINITY)
}

pub fn simulate_path_until(
    spec: &DiffusionSpec,
    cfg: &SimConfig,
    path_index: u64,
    stop_level: f64,
) -> Result<PathRecord, McError> {
    cfg.validate()?;
    if path_index >= cfg.n_paths as u64 {
        return Err(McError::Config(format!("path index {path_index} is not below n_paths = {}", cfg.n_paths)));
    }
    let mut rec = Recorder { times: vec![0.0], states: vec![spec.x0().to_vec()] };
    let terminal_status = run_path(spec, cfg, path_index, cfg.horizon, stop_level, &mut rec)?;
    Ok(PathRecord { times: rec.times, states: rec.states, terminal_status })
}

/// Evaluate `f` on every path index in order. With the `parallel` feature the
/// work runs on the current rayon pool; results are identical either way.
pub fn map_paths<T, F>(n: usize, f: F) -> Result<Vec<T>, McError>
where
    T: Send,
    F: Fn(u64) -> Result<T, McError> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let results: Vec<Result<T, McError>> = {
        use rayon::prelude::*;
        (0..n as u64).into_par_iter().map(&f).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<T, McError>> = (0..n as u64).map(&f).collect();
    results.into_iter().collect()
}
