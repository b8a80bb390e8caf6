use serde::{Deserialize, Serialize};

use super::engine::{map_paths, run_path, PathObserver, PathRecord, Step, TerminalStatus};
use super::stats::MCEstimate;
use super::{McError, SimConfig};
use crate::expr::CoefficientExpr;
use crate::model::{modified_drift, norm, quadratic_exponent, DeficitCurve, DeficitEntry, DiffusionSpec, ExponentSpec, LocalizationPlan};

/// Safety margin applied to grid suprema in [`localized_bound_check`].
const BOUND_MARGIN: f64 = 1.1;

fn dim_check(spec: &DiffusionSpec, exp: &ExponentSpec) -> Result<CoefficientExpr, McError> {
    Ok(quadratic_exponent(spec, exp)?)
}

/// Accumulates `log Z = Σ β·ΔX^c - ½ Σ q Δt` at left points.
struct LogZ<'a> {
    beta: &'a [CoefficientExpr],
    q: &'a CoefficientExpr,
    trivial: bool,
    logz: f64,
}

impl<'a> LogZ<'a> {
    fn new(exp: &'a ExponentSpec, q: &'a CoefficientExpr) -> Self {
        Self { beta: &exp.beta, q, trivial: exp.is_zero(), logz: 0.0 }
    }

    #[inline]
    fn advance(&mut self, s: &Step<'_>) -> Result<(), McError> {
        if self.trivial {
            return Ok(());
        }
        let mut inc = 0.0;
        for (b, dxc) in self.beta.iter().zip(s.dxc) {
            inc += b.eval_at(s.t0, s.x0) * dxc;
        }
        let q = self.q.eval_at(s.t0, s.x0);
        inc -= 0.5 * q * s.dt;
        if !inc.is_finite() {
            return Err(McError::EvalDomain { t: s.t0, x: s.x0.to_vec() });
        }
        self.logz += inc;
        Ok(())
    }
}

impl PathObserver for LogZ<'_> {
    fn step(&mut self, s: &Step<'_>) -> Result<(), McError> {
        self.advance(s)
    }
}

/// `Z` on the path grid, from `log Z_{i+1} = log Z_i + β·ΔX^c - ½ q Δt` with
/// `ΔX^c = ΔX - b Δt`.
pub fn stochastic_exponential(path: &PathRecord, spec: &DiffusionSpec, exp: &ExponentSpec) -> Result<Vec<f64>, McError> {
    let q = dim_check(spec, exp)?;
    let d = spec.dim();
    let mut b = vec![0.0; d];
    let mut out = Vec::with_capacity(path.times.len());
    out.push(1.0);
    if exp.is_zero() {
        out.resize(path.times.len(), 1.0);
        return Ok(out);
    }
    let mut logz = 0.0;
    for i in 1..path.times.len() {
        let (t, x, x1) = (path.times[i - 1], &path.states[i - 1], &path.states[i]);
        let dt = path.times[i] - t;
        spec.eval_drift(t, x, &mut b);
        let mut inc = -0.5 * q.eval_at(t, x) * dt;
        for j in 0..d {
            inc += exp.beta[j].eval_at(t, x) * (x1[j] - x[j] - b[j] * dt);
        }
        if !inc.is_finite() {
            return Err(McError::EvalDomain { t, x: x.clone() });
        }
        logz += inc;
        out.push(logz.exp());
    }
    Ok(out)
}

/// Per-path `Z_t` under the original dynamics; exploded paths contribute 0.
pub fn direct_samples(spec: &DiffusionSpec, exp: &ExponentSpec, t: f64, cfg: &SimConfig) -> Result<Vec<f64>, McError> {
    cfg.validate()?;
    cfg.check_time(t)?;
    let q = dim_check(spec, exp)?;
    map_paths(cfg.n_paths, |i| {
        let mut obs = LogZ::new(exp, &q);
        let status = run_path(spec, cfg, i, t, f64::INFINITY, &mut obs)?;
        Ok(if status.exploded() { 0.0 } else { obs.logz.exp() })
    })
}

/// Sample mean of `Z_t` under the original dynamics. For strict local
/// martingales this is biased low in practice: the missing mass sits on rare,
/// huge samples.
pub fn estimate_mean_direct(spec: &DiffusionSpec, exp: &ExponentSpec, t: f64, cfg: &SimConfig) -> Result<MCEstimate, McError> {
    Ok(MCEstimate::from_samples(&direct_samples(spec, exp, t, cfg)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeficitOptions {
    /// Return the curve even when the last two levels disagree.
    pub allow_unconverged: bool,
}

/// Counts how many plan levels the path norm has reached.
struct LevelCounter<'a> {
    levels: &'a [f64],
    crossed: usize,
    scalar: bool,
}

/// Probability that a Brownian bridge from `a` to `b` over variance `v`
/// leaves `(-m, m)`.
fn bridge_exit_probability(m: f64, a: f64, b: f64, v: f64) -> f64 {
    if a.abs() >= m || b.abs() >= m {
        return 1.0;
    }
    if v <= 0.0 {
        return 0.0;
    }
    let up = (-2.0 * (m - a) * (m - b) / v).exp();
    let down = (-2.0 * (m + a) * (m + b) / v).exp();
    (up + down).min(1.0)
}

impl PathObserver for LevelCounter<'_> {
    fn step(&mut self, s: &Step<'_>) -> Result<(), McError> {
        let r = norm(s.x1);
        while self.crossed < self.levels.len() && r >= self.levels[self.crossed] {
            self.crossed += 1;
        }
        if let (Some(u), true) = (s.bridge_uniform, self.scalar) {
            let v = s.sigma[0] * s.sigma[0] * s.dt;
            // Exit probability decreases in the level, so one shared uniform
            // keeps the levels coupled.
            while self.crossed < self.levels.len() && u < bridge_exit_probability(self.levels[self.crossed], s.x0[0], s.x1[0], v) {
                self.crossed += 1;
            }
        }
        Ok(())
    }

    fn finish(&mut self, status: &TerminalStatus) {
        if status.exploded() {
            self.crossed = self.levels.len();
        }
    }
}

fn check_plan(spec: &DiffusionSpec, plan: &LocalizationPlan, cfg: &SimConfig) -> Result<(), McError> {
    plan.check_against(spec)?;
    if plan.max_level() >= cfg.explosion_guard {
        return Err(McError::Config(format!(
            "explosion_guard {} must exceed the largest level {}",
            cfg.explosion_guard,
            plan.max_level()
        )));
    }
    Ok(())
}

/// `Q(rho_n > t)` for every plan level, simulated once under the modified
/// dynamics; all levels read the same paths, so the column is exactly
/// nondecreasing. Fails with [`McError::PlanTooCoarse`] (carrying the curve)
/// when the last two levels disagree beyond their noise.
pub fn estimate_deficit_localized(
    modified: &DiffusionSpec,
    plan: &LocalizationPlan,
    t: f64,
    cfg: &SimConfig,
) -> Result<DeficitCurve, McError> {
    estimate_deficit_with(modified, plan, t, cfg, DeficitOptions::default())
}

pub fn estimate_deficit_with(
    modified: &DiffusionSpec,
    plan: &LocalizationPlan,
    t: f64,
    cfg: &SimConfig,
    opts: DeficitOptions,
) -> Result<DeficitCurve, McError> {
    cfg.validate()?;
    cfg.check_time(t)?;
    check_plan(modified, plan, cfg)?;
    let levels = plan.levels();
    let crossed = map_paths(cfg.n_paths, |i| {
        let mut obs = LevelCounter { levels, crossed: 0, scalar: modified.dim() == 1 };
        run_path(modified, cfg, i, t, plan.max_level(), &mut obs)?;
        Ok(obs.crossed)
    })?;
    let n = cfg.n_paths as f64;
    let entries = levels
        .iter()
        .zip(plan.caps())
        .enumerate()
        .map(|(k, (&level, &cap))| {
            let survivors = if cap > t { crossed.iter().filter(|&&c| c <= k).count() } else { 0 };
            let p = survivors as f64 / n;
            DeficitEntry { level, cap, time: t, survival: p, std_error: (p * (1.0 - p) / n).sqrt() }
        })
        .collect();
    let curve = DeficitCurve::from_entries(entries, cfg.n_paths);
    if !curve.converged && !opts.allow_unconverged {
        return Err(McError::PlanTooCoarse { curve: Box::new(curve) });
    }
    Ok(curve)
}

/// Deficit curve for `E(β·X^c)` from the original dynamics: builds the
/// modified drift and runs [`estimate_deficit_with`]. With `β = 0` every
/// `Z^{ρ_n}` is the constant 1, so the curve is exact without simulation.
pub fn estimate_deficit(
    spec: &DiffusionSpec,
    exp: &ExponentSpec,
    plan: &LocalizationPlan,
    t: f64,
    cfg: &SimConfig,
    opts: DeficitOptions,
) -> Result<DeficitCurve, McError> {
    cfg.validate()?;
    cfg.check_time(t)?;
    if exp.is_zero() {
        check_plan(spec, plan, cfg)?;
        let entries = plan
            .levels()
            .iter()
            .zip(plan.caps())
            .map(|(&level, &cap)| {
                let survival = if cap > t { 1.0 } else { 0.0 };
                DeficitEntry { level, cap, time: t, survival, std_error: 0.0 }
            })
            .collect();
        return Ok(DeficitCurve::from_entries(entries, cfg.n_paths));
    }
    let modified = modified_drift(spec, exp)?;
    estimate_deficit_with(&modified, plan, t, cfg, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBound {
    pub level: f64,
    pub cap: f64,
    /// `cap * sup q` over the level set, with the safety margin.
    pub c_n: f64,
    /// `E[Z_{rho_n}^2] <= exp(c_n)`.
    pub second_moment_bound: f64,
}

impl LevelBound {
    /// Whether `n_paths` samples can resolve `E[Z_{t∧rho_n}] = 1`: the
    /// worst-case standard error `sqrt((exp(c_n) - 1) / n)` must stay below 0.5.
    pub fn resolvable(&self, n_paths: usize) -> bool {
        let var = self.c_n.exp_m1();
        var.is_finite() && (var / n_paths as f64).sqrt() <= 0.5
    }
}

fn axis_points(lo_end: f64, hi_end: f64, level: f64, k: usize) -> Vec<f64> {
    let lo = (-level).max(lo_end);
    let hi = level.min(hi_end);
    (0..=k)
        .map(|j| lo + (hi - lo) * j as f64 / k as f64)
        .filter(|x| lo_end < *x && *x < hi_end)
        .collect()
}

fn grid_sup(spec: &DiffusionSpec, q: &CoefficientExpr, level: f64, cap: f64, per_axis: usize) -> f64 {
    let d = spec.dim();
    let axes: Vec<Vec<f64>> = spec.intervals().iter().map(|iv| axis_points(iv.lower, iv.upper, level, per_axis)).collect();
    let times: Vec<f64> = if q.uses_time() { (0..=per_axis).map(|j| cap * j as f64 / per_axis as f64).collect() } else { vec![0.0] };
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut sup: f64 = 0.0;
    if axes.iter().any(Vec::is_empty) {
        return 0.0;
    }
    loop {
        for (j, &i) in idx.iter().enumerate() {
            x[j] = axes[j][i];
        }
        if norm(&x) <= level {
            for &s in &times {
                let v = q.eval_at(s, &x);
                if !v.is_finite() {
                    return f64::INFINITY;
                }
                sup = sup.max(v);
            }
        }
        let mut j = 0;
        loop {
            if j == d {
                return sup;
            }
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// `c_n = cap_n * sup{ q(s, x) : s <= cap_n, |x| <= m_n }` with a 10% margin,
/// the sup taken over refining grids. A finite `c_n` makes `Z` stopped at
/// `rho_n` a uniformly integrable martingale.
pub fn localized_bound_check(spec: &DiffusionSpec, exp: &ExponentSpec, plan: &LocalizationPlan) -> Result<Vec<LevelBound>, McError> {
    let q = dim_check(spec, exp)?;
    let base = match spec.dim() {
        1 => 64,
        2 => 16,
        _ => 5,
    };
    plan.levels()
        .iter()
        .zip(plan.caps())
        .map(|(&level, &cap)| {
            if q.is_zero() {
                return Ok(LevelBound { level, cap, c_n: 0.0, second_moment_bound: 1.0 });
            }
            let sups: Vec<f64> = [1, 2, 4].iter().map(|r| grid_sup(spec, &q, level, cap, base * r)).collect();
            let (prev, last) = (sups[1], sups[2]);
            if !last.is_finite() || last > prev * BOUND_MARGIN + f64::MIN_POSITIVE {
                return Err(McError::UnboundedOnCompact { level, sup: last });
            }
            let c_n = cap * last * BOUND_MARGIN;
            Ok(LevelBound { level, cap, c_n, second_moment_bound: c_n.exp() })
        })
        .collect()
}

/// Freezes `log Z` at each level's stopping time.
struct StoppedZ<'a> {
    z: LogZ<'a>,
    levels: &'a [f64],
    caps: &'a [f64],
    frozen: Vec<Option<f64>>,
}

impl PathObserver for StoppedZ<'_> {
    fn step(&mut self, s: &Step<'_>) -> Result<(), McError> {
        self.z.advance(s)?;
        let r = norm(s.x1);
        for (k, slot) in self.frozen.iter_mut().enumerate() {
            if slot.is_none() && (r >= self.levels[k] || s.t1 >= self.caps[k]) {
                *slot = Some(self.z.logz);
            }
        }
        Ok(())
    }

    fn finish(&mut self, status: &TerminalStatus) {
        let fill = if status.exploded() { f64::NEG_INFINITY } else { self.z.logz };
        for slot in self.frozen.iter_mut().filter(|s| s.is_none()) {
            *slot = Some(fill);
        }
    }
}

/// Sample means of `Z_{t∧rho_n}` under the original dynamics, one per level.
pub fn stopped_means(
    spec: &DiffusionSpec,
    exp: &ExponentSpec,
    plan: &LocalizationPlan,
    t: f64,
    cfg: &SimConfig,
) -> Result<Vec<MCEstimate>, McError> {
    cfg.validate()?;
    cfg.check_time(t)?;
    check_plan(spec, plan, cfg)?;
    let q = dim_check(spec, exp)?;
    let per_path = map_paths(cfg.n_paths, |i| {
        let mut obs = StoppedZ { z: LogZ::new(exp, &q), levels: plan.levels(), caps: plan.caps(), frozen: vec![None; plan.len()] };
        run_path(spec, cfg, i, t, plan.max_level(), &mut obs)?;
        Ok(obs.frozen.into_iter().map(|v| v.unwrap_or(0.0).exp()).collect::<Vec<f64>>())
    })?;
    Ok((0..plan.len())
        .map(|k| {
            let col: Vec<f64> = per_path.iter().map(|row| row[k]).collect();
            MCEstimate::from_samples(&col)
        })
        .collect())
}

struct QIntegral<'a> {
    q: &'a CoefficientExpr,
    integral: f64,
}

impl PathObserver for QIntegral<'_> {
    fn step(&mut self, s: &Step<'_>) -> Result<(), McError> {
        let v = self.q.eval_at(s.t0, s.x0);
        if !v.is_finite() {
            return Err(McError::EvalDomain { t: s.t0, x: s.x0.to_vec() });
        }
        self.integral += v * s.dt;
        Ok(())
    }
}

/// Per-path `exp(½ ∫_0^t q(s, X_s) ds)` under the original dynamics.
pub fn novikov_samples(spec: &DiffusionSpec, exp: &ExponentSpec, t: f64, cfg: &SimConfig) -> Result<Vec<f64>, McError> {
    cfg.validate()?;
    cfg.check_time(t)?;
    let q = dim_check(spec, exp)?;
    map_paths(cfg.n_paths, |i| {
        let mut obs = QIntegral { q: &q, integral: 0.0 };
        run_path(spec, cfg, i, t, f64::INFINITY, &mut obs)?;
        Ok((0.5 * obs.integral).exp())
    })
}

/// Novikov's functional `E[exp(½ ∫ q)]`; divergence shows up as a heavy tail
/// and a mean that keeps growing with the sample size.
pub fn novikov_estimate(spec: &DiffusionSpec, exp: &ExponentSpec, t: f64, cfg: &SimConfig) -> Result<MCEstimate, McError> {
    Ok(MCEstimate::from_samples(&novikov_samples(spec, exp, t, cfg)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub index: u64,
    pub terminal_status: TerminalStatus,
    pub z_t: f64,
    /// First grid time with norm at or above each level, if any.
    pub exit_times: Vec<Option<f64>>,
}

struct RowObserver<'a> {
    z: LogZ<'a>,
    levels: &'a [f64],
    exits: Vec<Option<f64>>,
}

impl PathObserver for RowObserver<'_> {
    fn step(&mut self, s: &Step<'_>) -> Result<(), McError> {
        self.z.advance(s)?;
        let r = norm(s.x1);
        for (k, e) in self.exits.iter_mut().enumerate() {
            if e.is_none() && r >= self.levels[k] {
                *e = Some(s.t1);
            }
        }
        Ok(())
    }
}

/// One row per path of the original dynamics: status, `Z_t` and level exits.
pub fn ensemble_rows(
    spec: &DiffusionSpec,
    exp: &ExponentSpec,
    plan: &LocalizationPlan,
    t: f64,
    cfg: &SimConfig,
) -> Result<Vec<EnsembleRow>, McError> {
    cfg.validate()?;
    cfg.check_time(t)?;
    check_plan(spec, plan, cfg)?;
    let q = dim_check(spec, exp)?;
    map_paths(cfg.n_paths, |i| {
        let mut obs = RowObserver { z: LogZ::new(exp, &q), levels: plan.levels(), exits: vec![None; plan.len()] };
        let status = run_path(spec, cfg, i, t, f64::INFINITY, &mut obs)?;
        let z_t = if status.exploded() { 0.0 } else { obs.z.logz.exp() };
        Ok(EnsembleRow { index: i, terminal_status: status, z_t, exit_times: obs.exits })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::simulate_path;
    use crate::model::{modified_drift, Interval};
    use approx::assert_relative_eq;

    fn bm() -> DiffusionSpec {
        DiffusionSpec::parse_1d(Interval::REAL_LINE, "0", "1", 0.0).unwrap()
    }

    fn cfg(n: usize) -> SimConfig {
        SimConfig { n_paths: n, ..SimConfig::default() }
    }

    fn plan(levels: &[f64]) -> LocalizationPlan {
        LocalizationPlan::new(levels.to_vec(), vec![2.0; levels.len()]).unwrap()
    }

    #[test]
    fn deterministic_paths() {
        let c = SimConfig { n_paths: 1, horizon: 2.0, ..cfg(1) };
        let still = DiffusionSpec::parse_1d(Interval::REAL_LINE, "0", "0", 1.0).unwrap();
        let p = simulate_path(&still, &c, 0).unwrap();
        assert!(p.states.iter().all(|x| x[0] == 1.0));
        assert_eq!(p.terminal_status, TerminalStatus::ReachedHorizon);
        assert_eq!(*p.times.last().unwrap(), 2.0);

        let ode = DiffusionSpec::parse_1d(Interval::REAL_LINE, "1", "0", 0.0).unwrap();
        let p = simulate_path(&ode, &c, 0).unwrap();
        assert_relative_eq!(p.terminal_state()[0], 2.0, epsilon = 1e-9);
        assert!(p.times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn trivial_exponent_is_exactly_one() {
        let c = cfg(200);
        let path = simulate_path(&bm(), &c, 3).unwrap();
        let z = stochastic_exponential(&path, &bm(), &ExponentSpec::zero(1)).unwrap();
        assert!(z.iter().all(|&v| v == 1.0));
        let e = estimate_mean_direct(&bm(), &ExponentSpec::zero(1), 1.0, &c).unwrap();
        assert_eq!((e.mean, e.std_error), (1.0, 0.0));
        let n = novikov_estimate(&bm(), &ExponentSpec::zero(1), 1.0, &c).unwrap();
        assert_eq!(n.mean, 1.0);
    }

    #[test]
    fn pure_drift_exponent_uses_continuous_part() {
        // sigma = 0 leaves no continuous martingale part, so Z = 1.
        let c = SimConfig { n_paths: 1, ..cfg(1) };
        let ode = DiffusionSpec::parse_1d(Interval::REAL_LINE, "1", "0", 0.0).unwrap();
        let path = simulate_path(&ode, &c, 0).unwrap();
        let z = stochastic_exponential(&path, &ode, &ExponentSpec::parse_1d("1").unwrap()).unwrap();
        assert!(z.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn streamed_and_recorded_exponentials_agree() {
        let c = cfg(5);
        let exp = ExponentSpec::parse_1d("x").unwrap();
        let samples = direct_samples(&bm(), &exp, 1.0, &c).unwrap();
        for i in 0..5 {
            let path = simulate_path(&bm(), &c, i).unwrap();
            let z = stochastic_exponential(&path, &bm(), &exp).unwrap();
            assert_relative_eq!(*z.last().unwrap(), samples[i as usize], max_relative = 1e-10);
            assert!(z.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn linear_exponent_direct_mean_is_one() {
        let e = estimate_mean_direct(&bm(), &ExponentSpec::parse_1d("x").unwrap(), 1.0, &cfg(20_000)).unwrap();
        assert!(e.within(1.0, 3.0), "{e:?}");
    }

    #[test]
    fn deficit_trivial_and_linear() {
        let p = plan(&[1.0, 2.0, 4.0, 8.0]);
        let curve = estimate_deficit_with(&bm(), &p, 1.0, &cfg(2000), DeficitOptions { allow_unconverged: true }).unwrap();
        assert!(curve.entries.windows(2).all(|w| w[0].survival <= w[1].survival));
        let m = modified_drift(&bm(), &ExponentSpec::parse_1d("x").unwrap()).unwrap();
        let curve = estimate_deficit_localized(&m, &plan(&[4.0, 8.0, 16.0, 32.0]), 1.0, &cfg(5000)).unwrap();
        assert!(curve.deficit() < 0.01);
        assert!(curve.converged);
    }

    #[test]
    fn identity_deficit_is_exactly_zero_for_unreachable_levels() {
        let still = DiffusionSpec::parse_1d(Interval::REAL_LINE, "0", "0", 0.0).unwrap();
        let curve = estimate_deficit_localized(&still, &plan(&[1.0, 2.0]), 1.0, &cfg(100)).unwrap();
        assert!(curve.entries.iter().all(|e| e.survival == 1.0));
        assert_eq!(curve.deficit(), 0.0);
    }

    #[test]
    fn bound_check_examples() {
        let p = LocalizationPlan::new(vec![2.0, 4.0], vec![1.0, 1.0]).unwrap();
        let zero = localized_bound_check(&bm(), &ExponentSpec::zero(1), &p).unwrap();
        assert!(zero.iter().all(|b| b.c_n == 0.0));
        let lin = localized_bound_check(&bm(), &ExponentSpec::parse_1d("x").unwrap(), &p).unwrap();
        assert_relative_eq!(lin[0].c_n, 4.4, max_relative = 1e-12);
        let pos = DiffusionSpec::parse_1d(Interval::POSITIVE, "0", "1", 1.0).unwrap();
        let r = localized_bound_check(&pos, &ExponentSpec::parse_1d("1/x").unwrap(), &p);
        assert!(matches!(r, Err(McError::UnboundedOnCompact { .. })), "{r:?}");
        let cev = DiffusionSpec::parse_1d(Interval::POSITIVE, "0", "x^2", 1.0).unwrap();
        let r = localized_bound_check(&cev, &ExponentSpec::parse_1d("1/x").unwrap(), &p).unwrap();
        assert_relative_eq!(r[1].c_n, 16.0 * 1.1, max_relative = 1e-12);
    }

    #[test]
    fn bridge_probability_limits() {
        assert_eq!(bridge_exit_probability(1.0, 1.2, 0.0, 1.0), 1.0);
        assert!(bridge_exit_probability(10.0, 0.0, 0.0, 0.01) < 1e-300);
        let p1 = bridge_exit_probability(1.0, 0.5, 0.6, 0.1);
        let p2 = bridge_exit_probability(2.0, 0.5, 0.6, 0.1);
        assert!(p1 > p2);
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig { dt_max: 2.0, ..cfg(10) };
        assert!(bad.validate().is_err());
        let low_guard = SimConfig { explosion_guard: 4.0, ..cfg(10) };
        let r = estimate_deficit_localized(&bm(), &plan(&[1.0, 8.0]), 1.0, &low_guard);
        assert!(matches!(r, Err(McError::Config(_))));
        assert!(estimate_mean_direct(&bm(), &ExponentSpec::zero(1), 3.0, &cfg(10)).is_err());
    }
}
