//! Spectrally truncated Q-Brownian motion and the exponential
//! `Z = E(phi(W) . W)` driven by a path functional `phi`.
//!
//! Mode `k` is a scalar Brownian motion with variance `lambda_k t`, drawn from
//! its own random stream, so adding modes never changes the existing ones.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::CoefficientExpr;
use crate::mc::rng::PathRng;
use crate::mc::{map_paths, McError, MCEstimate, PathRecord, SimConfig, TerminalStatus};
use crate::model::{norm, Classification, DeficitCurve, DeficitEntry, LocalizationPlan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HilbertError {
    #[error("invalid covariance: {0}")]
    Covariance(String),
    #[error("invalid functional: {0}")]
    Functional(String),
    #[error("phi is not finite at t={t}")]
    EvalDomain { t: f64 },
    #[error(transparent)]
    Mc(#[from] McError),
}

/// Eigenvalues of a nuclear covariance, truncated to finitely many modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCovariance")]
pub struct CovarianceSpec {
    eigenvalues: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCovariance {
    eigenvalues: Vec<f64>,
}

impl TryFrom<RawCovariance> for CovarianceSpec {
    type Error = HilbertError;
    fn try_from(raw: RawCovariance) -> Result<Self, HilbertError> {
        Self::new(raw.eigenvalues)
    }
}

impl CovarianceSpec {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self, HilbertError> {
        if eigenvalues.is_empty() {
            return Err(HilbertError::Covariance("at least one mode is required".into()));
        }
        if eigenvalues.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(HilbertError::Covariance("eigenvalues must be positive and finite".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(HilbertError::Covariance("eigenvalues must be nonincreasing".into()));
        }
        Ok(Self { eigenvalues })
    }

    /// `lambda_k = ratio^k` for `k = 1..=modes`.
    pub fn geometric(modes: usize, ratio: f64) -> Result<Self, HilbertError> {
        Self::new((1..=modes).map(|k| ratio.powi(k as i32)).collect())
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `phi^k(t, omega) = f_k(t, omega(t))`, coordinates `x1..xK`.
    Pointwise { components: Vec<CoefficientExpr> },
    /// `phi(t, omega) = direction * sup_{s < t} <weights, omega(s)>`.
    RunningSup { weights: Vec<f64>, direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    #[serde(default)]
    pub claimed_lipschitz: Option<f64>,
    #[serde(default)]
    pub claimed_growth: Option<f64>,
}

fn unit(v: &[f64], what: &str) -> Result<(), HilbertError> {
    if (norm(v) - 1.0).abs() > 1e-9 {
        return Err(HilbertError::Functional(format!("{what} must have unit norm")));
    }
    Ok(())
}

impl FunctionalSpec {
    pub fn zero(modes: usize) -> Self {
        Self::pointwise(vec![CoefficientExpr::constant(0.0); modes])
    }

    pub fn pointwise(components: Vec<CoefficientExpr>) -> Self {
        Self { kind: FunctionalKind::Pointwise { components }, claimed_lipschitz: None, claimed_growth: None }
    }

    /// Running sup of mode `mode` (0-based), fed back into the same mode.
    pub fn running_sup(modes: usize, mode: usize) -> Self {
        let mut e = vec![0.0; modes];
        if mode < modes {
            e[mode] = 1.0;
        }
        Self {
            kind: FunctionalKind::RunningSup { weights: e.clone(), direction: e },
            claimed_lipschitz: None,
            claimed_growth: None,
        }
    }

    pub fn with_claims(mut self, lipschitz: Option<f64>, growth: Option<f64>) -> Self {
        self.claimed_lipschitz = lipschitz;
        self.claimed_growth = growth;
        self
    }

    pub fn validate(&self, cov: &CovarianceSpec) -> Result<(), HilbertError> {
        let k = cov.modes();
        match &self.kind {
            FunctionalKind::Pointwise { components } => {
                if components.len() != k {
                    return Err(HilbertError::Functional(format!("{} components for {k} modes", components.len())));
                }
                if let Some(c) = components.iter().find(|c| c.coord_count() > k) {
                    return Err(HilbertError::Functional(format!("`{c}` references a mode beyond {k}")));
                }
            }
            FunctionalKind::RunningSup { weights, direction } => {
                if weights.len() != k || direction.len() != k {
                    return Err(HilbertError::Functional(format!("weights and direction need {k} entries")));
                }
                unit(weights, "the weight vector")?;
                unit(direction, "the direction vector")?;
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.kind, FunctionalKind::Pointwise { components } if components.iter().all(CoefficientExpr::is_zero))
    }

    /// Warnings for hypotheses that are assumed rather than enforced.
    pub fn warnings(&self, cov: &CovarianceSpec, horizon: f64) -> Vec<String> {
        let FunctionalKind::Pointwise { components } = &self.kind else { return Vec::new() };
        let zero = vec![0.0; cov.modes()];
        let varies = components.iter().any(|c| {
            let v0 = c.eval_at(0.0, &zero);
            (1..=16).any(|i| (c.eval_at(horizon * i as f64 / 16.0, &zero) - v0).abs() > 1e-12 * (1.0 + v0.abs()))
        });
        if varies {
            vec!["phi(t, 0) is not constant in t; uniqueness is assumed, not implied".into()]
        } else {
            Vec::new()
        }
    }
}

/// Evaluates `phi` along a path; for the running sup it tracks the sup of
/// the projection over grid points strictly before the current one.
struct PhiState<'a> {
    spec: &'a FunctionalSpec,
    running: f64,
}

impl<'a> PhiState<'a> {
    fn new(spec: &'a FunctionalSpec, w0: &[f64]) -> Self {
        let running = match &spec.kind {
            FunctionalKind::RunningSup { weights, .. } => dot(weights, w0),
            FunctionalKind::Pointwise { .. } => 0.0,
        };
        Self { spec, running }
    }

    /// `phi(t, omega)` given `omega(t)`; `prev` is the point before `t`.
    fn eval(&mut self, t: f64, w: &[f64], prev: Option<&[f64]>, out: &mut [f64]) -> Result<(), HilbertError> {
        match &self.spec.kind {
            FunctionalKind::Pointwise { components } => {
                for (o, c) in out.iter_mut().zip(components) {
                    *o = c.eval_at(t, w);
                    if !o.is_finite() {
                        return Err(HilbertError::EvalDomain { t });
                    }
                }
            }
            FunctionalKind::RunningSup { weights, direction } => {
                if let Some(p) = prev {
                    self.running = self.running.max(dot(weights, p));
                }
                for (o, d) in out.iter_mut().zip(direction) {
                    *o = d * self.running;
                }
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A uniform grid with step at most `dt_max`. Brownian increments are exact
/// at any step, and a grid independent of the spectrum keeps the modes'
/// paths fixed when modes are added.
fn step_size(cfg: &SimConfig, horizon: f64) -> (usize, f64) {
    let steps = (horizon / cfg.dt_max).ceil().max(1.0);
    (steps as usize, horizon / steps)
}

fn mode_rngs(cfg: &SimConfig, modes: usize, index: u64) -> Vec<PathRng> {
    (0..modes as u64).map(|k| PathRng::derived(cfg.seed, k + 1, index)).collect()
}

/// One path of the truncated Q-Brownian motion on `[0, horizon]`.
pub fn simulate_q_brownian(cov: &CovarianceSpec, cfg: &SimConfig, path_index: u64) -> Result<PathRecord, HilbertError> {
    cfg.validate()?;
    let k = cov.modes();
    let (steps, dt) = step_size(cfg, cfg.horizon);
    let mut rngs = mode_rngs(cfg, k, path_index);
    let mut w = vec![0.0; k];
    let mut times = vec![0.0];
    let mut states = vec![w.clone()];
    for i in 1..=steps {
        for (j, r) in rngs.iter_mut().enumerate() {
            w[j] += (cov.eigenvalues[j] * dt).sqrt() * r.normal();
        }
        times.push(if i == steps { cfg.horizon } else { i as f64 * dt });
        states.push(w.clone());
    }
    Ok(PathRecord { times, states, terminal_status: TerminalStatus::ReachedHorizon })
}

/// Per-path accumulators from one run.
struct PathSummary {
    log_z: f64,
    novikov: f64,
    level_index: usize,
    exploded: bool,
    terminal: Vec<f64>,
}

/// Simulates `W`, or with `modified` the dynamics `dW^k = lambda_k phi^k dt +
/// dB^k`, accumulating `log Z`, `int |Q^{1/2} phi|^2` and level crossings.
fn run_path(
    phi: &FunctionalSpec,
    cov: &CovarianceSpec,
    cfg: &SimConfig,
    index: u64,
    horizon: f64,
    modified: bool,
    levels: &[f64],
) -> Result<PathSummary, HilbertError> {
    let k = cov.modes();
    let (steps, dt) = step_size(cfg, horizon);
    let mut rngs = mode_rngs(cfg, k, index);
    let mut w = vec![0.0; k];
    let mut prev = vec![0.0; k];
    let mut f = vec![0.0; k];
    let mut state = PhiState::new(phi, &w);
    let trivial = phi.is_zero();
    let (mut log_z, mut novikov, mut crossed) = (0.0, 0.0, 0usize);
    for i in 0..steps {
        let t = i as f64 * dt;
        if !trivial {
            state.eval(t, &w, (i > 0).then_some(prev.as_slice()), &mut f)?;
        }
        prev.copy_from_slice(&w);
        let mut q = 0.0;
        for j in 0..k {
            let lam = cov.eigenvalues[j];
            let db = (lam * dt).sqrt() * rngs[j].normal();
            if !trivial {
                log_z += f[j] * db;
                q += lam * f[j] * f[j];
            }
            w[j] += db + if modified { lam * f[j] * dt } else { 0.0 };
        }
        log_z -= 0.5 * q * dt;
        novikov += q * dt;
        let r = norm(&w);
        if !r.is_finite() || r >= cfg.explosion_guard {
            return Ok(PathSummary { log_z, novikov, level_index: levels.len(), exploded: true, terminal: w });
        }
        while crossed < levels.len() && r >= levels[crossed] {
            crossed += 1;
        }
    }
    Ok(PathSummary { log_z, novikov, level_index: crossed, exploded: false, terminal: w })
}

fn hilbert_paths<T: Send>(
    n: usize,
    f: impl Fn(u64) -> Result<T, HilbertError> + Sync + Send,
) -> Result<Vec<T>, HilbertError> {
    map_paths(n, |i| Ok(f(i)))?.into_iter().collect()
}

fn check_time(cfg: &SimConfig, t: f64) -> Result<(), HilbertError> {
    cfg.validate()?;
    if !(t > 0.0) || t > cfg.horizon {
        return Err(McError::Config(format!("time {t} must lie in (0, horizon = {}]", cfg.horizon)).into());
    }
    Ok(())
}

/// An ensemble statistic tested against its exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCheck {
    pub modes: (usize, usize),
    pub target: f64,
    pub estimate: MCEstimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStatistics {
    /// `E[(W^k_t)^2] = lambda_k t` for each mode.
    pub variances: Vec<ModeCheck>,
    /// `E[W^j_t W^k_t] = 0` for neighbouring modes.
    pub covariances: Vec<ModeCheck>,
}

impl ModeStatistics {
    pub fn all_pass(&self) -> bool {
        self.variances.iter().chain(&self.covariances).all(|c| c.pass)
    }
}

pub fn mode_statistics(cov: &CovarianceSpec, t: f64, cfg: &SimConfig) -> Result<ModeStatistics, HilbertError> {
    check_time(cfg, t)?;
    let zero = FunctionalSpec::zero(cov.modes());
    let ends = hilbert_paths(cfg.n_paths, |i| Ok(run_path(&zero, cov, cfg, i, t, false, &[])?.terminal))?;
    let check = |j: usize, k: usize, target: f64| {
        let xs: Vec<f64> = ends.iter().map(|w| w[j] * w[k]).collect();
        let estimate = MCEstimate::from_samples(&xs);
        ModeCheck { modes: (j, k), target, estimate, pass: estimate.within(target, 3.0) }
    };
    let k = cov.modes();
    Ok(ModeStatistics {
        variances: (0..k).map(|j| check(j, j, cov.eigenvalues[j] * t)).collect(),
        covariances: (1..k).map(|j| check(j - 1, j, 0.0)).collect(),
    })
}

/// Local Lipschitz estimate for paths whose sup norm stays below `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBand {
    pub alpha: f64,
    pub estimate: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub lipschitz: Vec<LipschitzBand>,
    /// Largest `L^alpha` over all bands.
    pub lipschitz_max: f64,
    /// `max |Q^{1/2} phi|^2 / (1 + sup |omega|^2)`.
    pub growth: f64,
    pub pass_lipschitz: Option<bool>,
    pub pass_growth: Option<bool>,
    pub warnings: Vec<String>,
}

impl ConditionsReport {
    /// Every stated claim dominates its empirical constant.
    pub fn pass(&self) -> bool {
        self.pass_lipschitz != Some(false) && self.pass_growth != Some(false)
    }
}

const BANDS: [f64; 8] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, f64::INFINITY];

/// `phi(t_i, omega)` at every grid index of a recorded path.
fn phi_along(phi: &FunctionalSpec, path: &PathRecord) -> Result<Vec<Vec<f64>>, HilbertError> {
    let k = path.states[0].len();
    let mut state = PhiState::new(phi, &path.states[0]);
    let mut out = Vec::with_capacity(path.times.len());
    for (i, (&t, w)) in path.times.iter().zip(&path.states).enumerate() {
        let mut f = vec![0.0; k];
        state.eval(t, w, (i > 0).then(|| path.states[i - 1].as_slice()), &mut f)?;
        out.push(f);
    }
    Ok(out)
}

/// Empirical constants for the local Lipschitz and linear growth
/// conditions. Pairs are consecutive paths on a shared grid; sups run over
/// grid points up to and including `t`.
pub fn check_conditions(phi: &FunctionalSpec, cov: &CovarianceSpec, paths: &[PathRecord]) -> Result<ConditionsReport, HilbertError> {
    phi.validate(cov)?;
    let lam = cov.eigenvalues();
    let horizon = paths.first().and_then(|p| p.times.last().copied()).unwrap_or(1.0);
    let phis: Vec<Vec<Vec<f64>>> = paths.iter().map(|p| phi_along(phi, p)).collect::<Result<_, _>>()?;
    let mut growth: f64 = 0.0;
    for (p, f) in paths.iter().zip(&phis) {
        let mut sup: f64 = 0.0;
        for (w, fi) in p.states.iter().zip(f) {
            sup = sup.max(norm(w));
            let q: f64 = fi.iter().zip(lam).map(|(v, l)| l * v * v).sum();
            growth = growth.max(q / (1.0 + sup * sup));
        }
    }
    let mut bands: Vec<LipschitzBand> = BANDS.iter().map(|&alpha| LipschitzBand { alpha, estimate: 0.0, samples: 0 }).collect();
    for pair in paths.windows(2).zip(phis.windows(2)) {
        let ((a, b), (fa, fb)) = ((&pair.0[0], &pair.0[1]), (&pair.1[0], &pair.1[1]));
        if a.times != b.times {
            return Err(HilbertError::Functional("paired paths must share a time grid".into()));
        }
        let (mut sup_diff, mut sup_norm): (f64, f64) = (0.0, 0.0);
        for i in 0..a.times.len() {
            let diff: Vec<f64> = a.states[i].iter().zip(&b.states[i]).map(|(x, y)| x - y).collect();
            sup_diff = sup_diff.max(norm(&diff));
            sup_norm = sup_norm.max(norm(&a.states[i])).max(norm(&b.states[i]));
            if sup_diff == 0.0 {
                continue;
            }
            let num: Vec<f64> = (0..lam.len()).map(|j| lam[j] * (fa[i][j] - fb[i][j])).collect();
            let ratio = norm(&num) / sup_diff;
            let band = BANDS.iter().position(|&al| sup_norm <= al).unwrap_or(BANDS.len() - 1);
            bands[band].estimate = bands[band].estimate.max(ratio);
            bands[band].samples += 1;
        }
    }
    // A band's constant covers every smaller band.
    for i in 1..bands.len() {
        bands[i].estimate = bands[i].estimate.max(bands[i - 1].estimate);
    }
    let lipschitz_max = bands.last().map_or(0.0, |b| b.estimate);
    bands.retain(|b| b.samples > 0);
    Ok(ConditionsReport {
        lipschitz: bands,
        lipschitz_max,
        growth,
        pass_lipschitz: phi.claimed_lipschitz.map(|c| lipschitz_max <= c),
        pass_growth: phi.claimed_growth.map(|c| growth <= c),
        warnings: phi.warnings(cov, horizon),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilbertReport {
    pub direct: MCEstimate,
    pub deficit_curve: DeficitCurve,
    pub conditions: ConditionsReport,
    pub classification: Classification,
}

/// Paths used for the condition check inside [`estimate_hilbert_expectation`].
pub const CONDITION_PATHS: usize = 256;

/// Direct estimate of `E[Z_t]` and the localized deficit under the modified
/// dynamics on a shared plan. The verdict is `Inconclusive` when a claimed
/// condition fails or the deficit curve has not settled.
pub fn estimate_hilbert_expectation(
    phi: &FunctionalSpec,
    cov: &CovarianceSpec,
    t: f64,
    plan: &LocalizationPlan,
    cfg: &SimConfig,
) -> Result<HilbertReport, HilbertError> {
    check_time(cfg, t)?;
    phi.validate(cov)?;
    if plan.max_level() >= cfg.explosion_guard {
        return Err(McError::Config("explosion_guard must exceed the largest plan level".into()).into());
    }
    let sample_cfg = SimConfig { horizon: t, ..*cfg };
    let sample: Vec<PathRecord> = (0..CONDITION_PATHS.min(cfg.n_paths) as u64)
        .map(|i| simulate_q_brownian(cov, &sample_cfg, i))
        .collect::<Result<_, _>>()?;
    let conditions = check_conditions(phi, cov, &sample)?;

    let zs = hilbert_paths(cfg.n_paths, |i| {
        let s = run_path(phi, cov, cfg, i, t, false, &[])?;
        Ok(if s.exploded { 0.0 } else { s.log_z.exp() })
    })?;
    let direct = MCEstimate::from_samples(&zs);

    let levels = plan.levels();
    let crossed = hilbert_paths(cfg.n_paths, |i| Ok(run_path(phi, cov, cfg, i, t, true, levels)?.level_index))?;
    let n = cfg.n_paths as f64;
    let entries = levels
        .iter()
        .zip(plan.caps())
        .enumerate()
        .map(|(k, (&level, &cap))| {
            let s = if cap > t { crossed.iter().filter(|&&c| c <= k).count() as f64 / n } else { 0.0 };
            DeficitEntry { level, cap, time: t, survival: s, std_error: (s * (1.0 - s) / n).sqrt() }
        })
        .collect();
    let deficit_curve = DeficitCurve::from_entries(entries, cfg.n_paths);
    let classification = if !conditions.pass() || !deficit_curve.converged {
        Classification::Inconclusive
    } else if deficit_curve.deficit() <= 3.0 * deficit_curve.last().std_error + 0.01 {
        Classification::TrueMartingale
    } else {
        Classification::StrictLocal
    };
    Ok(HilbertReport { direct, deficit_curve, conditions, classification })
}

/// Per-path `exp(½ int_0^t |Q^{1/2} phi|^2 ds)`.
pub fn hilbert_novikov_samples(phi: &FunctionalSpec, cov: &CovarianceSpec, t: f64, cfg: &SimConfig) -> Result<Vec<f64>, HilbertError> {
    check_time(cfg, t)?;
    phi.validate(cov)?;
    hilbert_paths(cfg.n_paths, |i| Ok((0.5 * run_path(phi, cov, cfg, i, t, false, &[])?.novikov).exp()))
}

pub fn hilbert_novikov(phi: &FunctionalSpec, cov: &CovarianceSpec, t: f64, cfg: &SimConfig) -> Result<MCEstimate, HilbertError> {
    Ok(MCEstimate::from_samples(&hilbert_novikov_samples(phi, cov, t, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> SimConfig {
        SimConfig { n_paths: n, ..SimConfig::default() }
    }

    fn plan() -> LocalizationPlan {
        LocalizationPlan::geometric(4.0, 2.0, 4, 2.0).unwrap()
    }

    fn ramp(slope: f64, k: usize) -> PathRecord {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let states = times.iter().map(|t| { let mut w = vec![0.0; k]; w[0] = slope * t; w }).collect();
        PathRecord { times, states, terminal_status: TerminalStatus::ReachedHorizon }
    }

    #[test]
    fn covariance_validation() {
        assert!(CovarianceSpec::new(vec![]).is_err());
        assert!(CovarianceSpec::new(vec![0.5, 1.0]).is_err());
        assert!(CovarianceSpec::new(vec![1.0, 0.0]).is_err());
        let c = CovarianceSpec::geometric(16, 0.5).unwrap();
        assert_eq!(c.eigenvalues()[0], 0.5);
        assert_eq!(c.modes(), 16);
    }

    #[test]
    fn single_mode_is_standard_brownian() {
        let cov = CovarianceSpec::new(vec![1.0]).unwrap();
        let stats = mode_statistics(&cov, 1.0, &cfg(10_000)).unwrap();
        assert!(stats.all_pass(), "{stats:?}");
        let p = simulate_q_brownian(&cov, &cfg(1), 0).unwrap();
        assert_eq!(p.states[0], vec![0.0]);
        assert_eq!(*p.times.last().unwrap(), 1.0);
    }

    #[test]
    fn modes_are_independent_with_right_variance() {
        let cov = CovarianceSpec::geometric(6, 0.5).unwrap();
        let stats = mode_statistics(&cov, 1.0, &cfg(10_000)).unwrap();
        assert!(stats.all_pass(), "{stats:?}");
    }

    #[test]
    fn zero_functional_gives_one() {
        let cov = CovarianceSpec::geometric(3, 0.5).unwrap();
        let r = estimate_hilbert_expectation(&FunctionalSpec::zero(3), &cov, 1.0, &plan(), &cfg(500)).unwrap();
        assert_eq!((r.direct.mean, r.direct.std_error), (1.0, 0.0));
        assert_eq!(r.deficit_curve.deficit(), 0.0);
        assert_eq!(r.conditions.growth, 0.0);
        assert_eq!(r.classification, Classification::TrueMartingale);
    }

    #[test]
    fn running_sup_conditions() {
        let cov = CovarianceSpec::new(vec![1.0]).unwrap();
        let phi = FunctionalSpec::running_sup(1, 0).with_claims(Some(1.0), Some(1.0));
        let paths: Vec<PathRecord> = (0..64).map(|i| simulate_q_brownian(&cov, &cfg(64), i).unwrap()).collect();
        let rep = check_conditions(&phi, &cov, &paths).unwrap();
        assert!(rep.lipschitz_max <= 1.0 && rep.growth <= 1.0, "{rep:?}");
        assert!(rep.pass());
        assert!(rep.lipschitz_max > 0.0);
    }

    #[test]
    fn quadratic_growth_fails_on_ramps() {
        let cov = CovarianceSpec::new(vec![1.0]).unwrap();
        let phi = FunctionalSpec::pointwise(vec![CoefficientExpr::parse("x^2").unwrap()]).with_claims(None, Some(1.0));
        let growth = |m: f64| check_conditions(&phi, &cov, &[ramp(m, 1)]).unwrap().growth;
        assert!(growth(1.0) < growth(4.0) && growth(4.0) < growth(16.0));
        assert!(!check_conditions(&phi, &cov, &[ramp(16.0, 1)]).unwrap().pass());
    }

    #[test]
    fn time_dependent_phi_at_zero_warns() {
        let cov = CovarianceSpec::new(vec![1.0]).unwrap();
        let phi = FunctionalSpec::pointwise(vec![CoefficientExpr::parse("t").unwrap()]);
        assert_eq!(phi.warnings(&cov, 1.0).len(), 1);
        assert!(FunctionalSpec::running_sup(1, 0).warnings(&cov, 1.0).is_empty());
    }

    #[test]
    fn running_sup_is_a_true_martingale() {
        let cov = CovarianceSpec::new(vec![1.0]).unwrap();
        let phi = FunctionalSpec::running_sup(1, 0).with_claims(Some(1.0), Some(1.0));
        let r = estimate_hilbert_expectation(&phi, &cov, 1.0, &plan(), &cfg(10_000)).unwrap();
        assert!(r.direct.within(1.0, 3.0), "{:?}", r.direct);
        assert_eq!(r.classification, Classification::TrueMartingale);
    }

    #[test]
    fn unused_modes_do_not_change_the_estimate() {
        let one = CovarianceSpec::new(vec![0.5]).unwrap();
        let many = CovarianceSpec::geometric(8, 0.5).unwrap();
        let c = cfg(300);
        let a = estimate_hilbert_expectation(&FunctionalSpec::running_sup(1, 0), &one, 1.0, &plan(), &c).unwrap();
        let b = estimate_hilbert_expectation(&FunctionalSpec::running_sup(8, 0), &many, 1.0, &plan(), &c).unwrap();
        assert_eq!(a.direct.mean, b.direct.mean);
    }

    #[test]
    fn running_sup_uses_strictly_earlier_points() {
        let cov = CovarianceSpec::new(vec![1.0]).unwrap();
        let phi = FunctionalSpec::running_sup(1, 0);
        let f = phi_along(&phi, &ramp(1.0, 1)).unwrap();
        assert_eq!(f[0][0], 0.0);
        assert_eq!(f[1][0], 0.0);
        assert!((f[2][0] - 0.01).abs() < 1e-15);
        assert!(phi.validate(&cov).is_ok());
    }
}
