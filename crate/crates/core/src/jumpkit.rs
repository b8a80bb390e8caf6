//! Generalized stochastic exponentials over a one-dimensional jump-diffusion
//! triplet with finitely supported jump laws.
//!
//! The triplet is `(b, c, nu)` with truncation `h(x) = x 1{|x| <= 1}`,
//! `nu(dt, dx) = lambda F(dx) dt + sum_k a_k G_k(dx) delta_{t_k}(dt)`, and the
//! exponent is `N = K . X^c + U' * (mu - nu)` with
//! `U' = U - 1 + (Uhat - a) / (1 - a)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::CoefficientExpr;
use crate::mc::rng::PathRng;
use crate::mc::{map_paths, McError, MCEstimate, SimConfig, TerminalStatus};
use crate::model::{
    quadratic_exponent, Classification, DeficitCurve, DeficitEntry, DiffusionSpec, ExponentSpec, Interval,
    LocalizationPlan, MartingaleVerdict, ModelError,
};

/// Slack allowed on `Uhat <= 1`.
const UHAT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JumpError {
    #[error("invalid jump data: {0}")]
    Validation(String),
    #[error("jump of N is {delta_n} <= -1 at t={time} on path {path}")]
    JumpBoundViolation { path: u64, time: f64, delta_n: f64 },
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, JumpError> {
    Err(JumpError::Validation(msg.into()))
}

/// The truncation function `h(x) = x 1{|x| <= 1}`.
pub fn truncation(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x
    } else {
        0.0
    }
}

/// A finitely supported law on nonzero jump sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDist")]
pub struct DiscreteDist {
    points: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDist {
    points: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDist> for DiscreteDist {
    type Error = JumpError;
    fn try_from(raw: RawDist) -> Result<Self, JumpError> {
        Self::new(raw.points, raw.probs)
    }
}

impl DiscreteDist {
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self, JumpError> {
        if points.is_empty() || points.len() != probs.len() {
            return invalid("a jump law needs matching, nonempty points and probabilities");
        }
        if points.iter().any(|x| !x.is_finite() || *x == 0.0) {
            return invalid("jump sizes must be finite and nonzero");
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("probabilities must lie in [0, 1]");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { points, probs })
    }

    pub fn point_mass(x: f64) -> Result<Self, JumpError> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.probs).map(|(&x, &p)| p * f(x)).sum()
    }

    /// The law `w F / E_F[w]` for a positive weight.
    fn reweighted(&self, w: impl Fn(f64) -> f64) -> Self {
        let raw: Vec<f64> = self.points.iter().zip(&self.probs).map(|(&x, &p)| p * w(x)).collect();
        let total: f64 = raw.iter().sum();
        Self { points: self.points.clone(), probs: raw.iter().map(|r| r / total).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub time: f64,
    pub mass: f64,
    pub dist: DiscreteDist,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpTriplet {
    base: DiffusionSpec,
    cp_rate: f64,
    cp_dist: Option<DiscreteDist>,
    atoms: Vec<Atom>,
}

impl JumpTriplet {
    pub fn new(base: DiffusionSpec, cp_rate: f64, cp_dist: Option<DiscreteDist>, atoms: Vec<Atom>) -> Result<Self, JumpError> {
        if base.dim() != 1 {
            return invalid("the jump kit is one-dimensional");
        }
        if !(cp_rate >= 0.0 && cp_rate.is_finite()) {
            return invalid("the jump rate must be finite and nonnegative");
        }
        if cp_rate > 0.0 && cp_dist.is_none() {
            return invalid("a positive jump rate needs a jump law");
        }
        for a in &atoms {
            if !(a.time > 0.0 && a.time.is_finite()) {
                return invalid("atom times must be positive and finite");
            }
            if !(a.mass > 0.0 && a.mass <= 1.0) {
                return invalid("atom masses must lie in (0, 1]");
            }
        }
        if atoms.windows(2).any(|w| w[0].time >= w[1].time) {
            return invalid("atom times must be strictly increasing");
        }
        if (cp_rate > 0.0 || !atoms.is_empty()) && base.interval() != Interval::REAL_LINE {
            return invalid("jumps require the state space to be the real line");
        }
        Ok(Self { base, cp_rate, cp_dist, atoms })
    }

    pub fn diffusion(base: DiffusionSpec) -> Result<Self, JumpError> {
        Self::new(base, 0.0, None, Vec::new())
    }

    pub fn base(&self) -> &DiffusionSpec {
        &self.base
    }

    pub fn cp_rate(&self) -> f64 {
        self.cp_rate
    }

    pub fn cp_dist(&self) -> Option<&DiscreteDist> {
        self.cp_dist.as_ref()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom_at(&self, t: f64) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.time == t)
    }

    /// `a_t = nu({t} x R)`.
    pub fn a_at(&self, t: f64) -> f64 {
        self.atom_at(t).map_or(0.0, |a| a.mass)
    }

    /// `lambda E_F[f]`, zero without compound-Poisson jumps.
    fn cp_expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        match &self.cp_dist {
            Some(d) if self.cp_rate > 0.0 => self.cp_rate * d.expect(f),
            _ => 0.0,
        }
    }
}

/// The exponent data: `K` in `(t, x = state)` and `U` in `(t, x = jump size)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovData {
    pub k: CoefficientExpr,
    pub u: CoefficientExpr,
}

impl GirsanovData {
    pub fn new(k: CoefficientExpr, u: CoefficientExpr) -> Self {
        Self { k, u }
    }

    pub fn parse(k: &str, u: &str) -> Result<Self, JumpError> {
        let e = |s: &str| CoefficientExpr::parse(s).map_err(ModelError::from);
        Ok(Self { k: e(k)?, u: e(u)? })
    }

    /// `K = 0` and `U = 1`, so `N = 0` and `Z = 1`.
    pub fn is_trivial(&self) -> bool {
        self.k.is_zero() && self.u.as_constant() == Some(1.0)
    }
}

fn uhat_raw(atom: &Atom, gd: &GirsanovData) -> f64 {
    atom.mass * atom.dist.expect(|x| gd.u.eval(atom.time, x))
}

/// `Uhat_t = int U(t, x) nu({t} x dx)`: zero off the atoms.
pub fn compute_uhat(trip: &JumpTriplet, gd: &GirsanovData, t: f64) -> Result<f64, JumpError> {
    let Some(atom) = trip.atom_at(t) else { return Ok(0.0) };
    let v = uhat_raw(atom, gd);
    if !(v <= 1.0 + UHAT_SLACK) {
        return invalid(format!("Uhat = {v} exceeds 1 at the atom t = {t}"));
    }
    Ok(v)
}

/// `(Uhat - a) / (1 - a)` with `0/0 = 0`.
fn atom_shift(a: f64, uhat: f64) -> f64 {
    if a >= 1.0 {
        0.0
    } else {
        (uhat - a) / (1.0 - a)
    }
}

/// `U'(t, x) = U(t, x) - 1 + (Uhat_t - a_t) / (1 - a_t)`.
pub fn compute_uprime(trip: &JumpTriplet, gd: &GirsanovData, t: f64, x: f64) -> f64 {
    let (a, uhat) = trip.atom_at(t).map_or((0.0, 0.0), |atom| (atom.mass, uhat_raw(atom, gd)));
    gd.u.eval(t, x) - 1.0 + atom_shift(a, uhat)
}

/// Checks `U > 0` on the support of `nu`, `Uhat <= 1`, `{a = 1} ⊆ {Uhat = 1}`
/// and rejects `Uhat = 1` with `a < 1`, where `N` would jump by exactly -1.
pub fn validate(trip: &JumpTriplet, gd: &GirsanovData, horizon: f64) -> Result<(), JumpError> {
    if gd.k.coord_count() > 1 || gd.u.coord_count() > 1 {
        return invalid("K and U take a single space argument");
    }
    let times: Vec<f64> =
        if gd.u.uses_time() { (0..=256).map(|i| horizon * i as f64 / 256.0).collect() } else { vec![0.0] };
    if let Some(d) = trip.cp_dist.as_ref().filter(|_| trip.cp_rate > 0.0) {
        for &t in &times {
            for &x in d.points() {
                let u = gd.u.eval(t, x);
                if !(u > 0.0 && u.is_finite()) {
                    return invalid(format!("U({t}, {x}) = {u} is not positive"));
                }
            }
        }
    }
    for atom in &trip.atoms {
        for &x in atom.dist.points() {
            let u = gd.u.eval(atom.time, x);
            if !(u > 0.0 && u.is_finite()) {
                return invalid(format!("U({}, {x}) = {u} is not positive", atom.time));
            }
        }
        let uhat = compute_uhat(trip, gd, atom.time)?;
        if atom.mass == 1.0 && (uhat - 1.0).abs() > UHAT_SLACK {
            return invalid(format!("a = 1 at t = {} requires Uhat = 1, got {uhat}", atom.time));
        }
        if atom.mass < 1.0 && uhat >= 1.0 - UHAT_SLACK {
            return invalid(format!(
                "Uhat = 1 with a = {} < 1 at t = {} makes N jump by -1 when the atom does not fire",
                atom.mass, atom.time
            ));
        }
    }
    Ok(())
}

/// Atom increment of `R`: `a E_G[(1 - sqrt U)^2] + (sqrt(1 - a) - sqrt(1 - Uhat))^2`.
pub fn atom_r_increment(atom: &Atom, gd: &GirsanovData) -> f64 {
    let uhat = uhat_raw(atom, gd).min(1.0);
    let jump = atom.mass * atom.dist.expect(|x| (1.0 - gd.u.eval(atom.time, x).sqrt()).powi(2));
    jump + ((1.0 - atom.mass).sqrt() - (1.0 - uhat).sqrt()).powi(2)
}

/// The same increment as `2 (1 - a E_G[sqrt U] - sqrt((1 - a)(1 - Uhat)))`.
pub fn atom_r_increment_closed(atom: &Atom, gd: &GirsanovData) -> f64 {
    let uhat = uhat_raw(atom, gd).min(1.0);
    let root = atom.mass * atom.dist.expect(|x| gd.u.eval(atom.time, x).sqrt());
    2.0 * (1.0 - root - ((1.0 - atom.mass) * (1.0 - uhat)).sqrt())
}

/// `R` and its three components on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerPath {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub continuous: Vec<f64>,
    pub poisson: Vec<f64>,
    pub atoms: Vec<f64>,
}

/// Validated triplet and exponent with the derived `q = K^2 c`.
struct Prepared<'a> {
    trip: &'a JumpTriplet,
    gd: &'a GirsanovData,
    q: CoefficientExpr,
    atom_r: Vec<f64>,
    atom_no_fire: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(trip: &'a JumpTriplet, gd: &'a GirsanovData, horizon: f64) -> Result<Self, JumpError> {
        validate(trip, gd, horizon)?;
        let q = quadratic_exponent(&trip.base, &ExponentSpec::new(vec![gd.k.clone()]))?;
        let atom_r = trip.atoms.iter().map(|a| atom_r_increment(a, gd)).collect();
        let atom_no_fire = trip.atoms.iter().map(|a| -atom_shift(a.mass, uhat_raw(a, gd))).collect();
        Ok(Self { trip, gd, q, atom_r, atom_no_fire })
    }

    /// `lambda E_F[(1 - sqrt U(t, .))^2]`.
    fn poisson_r_rate(&self, t: f64) -> f64 {
        self.trip.cp_expect(|x| (1.0 - self.gd.u.eval(t, x).sqrt()).powi(2))
    }

    /// `lambda E_F[U(t, .) - 1]`, the compensator drift of `N`.
    fn compensator_rate(&self, t: f64) -> f64 {
        self.trip.cp_expect(|x| self.gd.u.eval(t, x) - 1.0)
    }
}

/// `R` along a path: `K` is evaluated at the left grid points, and the grid
/// must contain every atom time up to its end.
pub fn compute_r(trip: &JumpTriplet, gd: &GirsanovData, times: &[f64], states: &[f64]) -> Result<HellingerPath, JumpError> {
    if times.is_empty() || times.len() != states.len() || times[0] != 0.0 {
        return invalid("the grid must start at 0 and match the states");
    }
    let end = *times.last().unwrap_or(&0.0);
    let p = Prepared::new(trip, gd, end.max(f64::MIN_POSITIVE))?;
    for a in trip.atoms.iter().filter(|a| a.time <= end) {
        if !times.contains(&a.time) {
            return invalid(format!("the grid misses the atom time {}", a.time));
        }
    }
    let mut out = HellingerPath {
        times: times.to_vec(),
        r: vec![0.0],
        continuous: vec![0.0],
        poisson: vec![0.0],
        atoms: vec![0.0],
    };
    let (mut r, mut cont, mut pois, mut atom) = (0.0, 0.0, 0.0, 0.0);
    for i in 1..times.len() {
        let (t, dt) = (times[i - 1], times[i] - times[i - 1]);
        let q = p.q.eval(t, states[i - 1]);
        if !q.is_finite() {
            return Err(McError::EvalDomain { t, x: vec![states[i - 1]] }.into());
        }
        let rate = p.poisson_r_rate(t);
        // Same accumulation order as the simulator, so both agree bit for bit.
        r += q * dt + rate * dt;
        cont += q * dt;
        pois += rate * dt;
        if let Some(k) = trip.atoms.iter().position(|a| a.time == times[i]) {
            atom += p.atom_r[k];
            r += p.atom_r[k];
        }
        out.continuous.push(cont);
        out.poisson.push(pois);
        out.atoms.push(atom);
        out.r.push(r);
    }
    Ok(out)
}

/// State carried along a jump path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpPoint {
    pub t: f64,
    pub x: f64,
    pub n: f64,
    pub log_z: f64,
    pub r: f64,
    /// `int Z_-^{-2} dC(Z)`.
    pub bracket: f64,
}

impl JumpPoint {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }
}

/// Where a jump path stops early: the first time `R >= hellinger` or
/// `|X| >= level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpStop {
    pub hellinger: f64,
    pub level: f64,
}

impl JumpStop {
    pub const NONE: JumpStop = JumpStop { hellinger: f64::INFINITY, level: f64::INFINITY };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpTerminal {
    pub status: TerminalStatus,
    pub hellinger_stop: bool,
    /// Smallest jump of `N` seen on the path (`+inf` without jumps).
    pub min_delta_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPathRecord {
    pub points: Vec<JumpPoint>,
    pub terminal: JumpTerminal,
}

/// Simulates `dynamics` while computing `N`, `Z` and `R` for the prepared
/// exponent. The two coincide except when simulating the modified triplet.
fn run_jump_path(
    dynamics: &JumpTriplet,
    p: &Prepared<'_>,
    cfg: &SimConfig,
    index: u64,
    horizon: f64,
    stop: JumpStop,
    observer: &mut impl FnMut(&JumpPoint),
) -> Result<JumpTerminal, JumpError> {
    let spec = &dynamics.base;
    let mut rng = PathRng::new(cfg.seed, index);
    let mut pt = JumpPoint { t: 0.0, x: spec.x0()[0], n: 0.0, log_z: 0.0, r: 0.0, bracket: 0.0 };
    let fixed_steps = (horizon / cfg.dt_max).ceil().max(1.0);
    let fixed_dt = horizon / fixed_steps;
    let dt_floor = cfg.dt_max * 1e-6;
    let mut i = 0u64;
    let mut next_atom = 0usize;
    let mut min_dn = f64::INFINITY;
    let trivial = p.gd.is_trivial();
    let jump_drift = dynamics.cp_expect(truncation);
    let cp = dynamics.cp_dist.as_ref().filter(|_| dynamics.cp_rate > 0.0);

    let apply_jump = |pt: &mut JumpPoint, dn: f64, min_dn: &mut f64| -> Result<(), JumpError> {
        if !(dn > -1.0) {
            return Err(JumpError::JumpBoundViolation { path: index, time: pt.t, delta_n: dn });
        }
        *min_dn = min_dn.min(dn);
        pt.n += dn;
        pt.log_z += dn.ln_1p();
        pt.bracket += (1.0 - (1.0 + dn).sqrt()).powi(2);
        Ok(())
    };

    observer(&pt);
    let status = loop {
        let (t, x) = (pt.t, pt.x);
        let b = spec.drift_1d(t, x);
        let s = spec.sigma_1d(t, x);
        if !b.is_finite() || !s.is_finite() {
            return Err(McError::EvalDomain { t, x: vec![x] }.into());
        }
        let (mut dt, mut t_next, mut advance) = if cfg.adaptive {
            let dt = cfg.dt_max.min(cfg.dt_max / (b.abs() + s * s + 1.0));
            if dt < dt_floor {
                break TerminalStatus::NumericalExplosion { time: t };
            }
            if t + dt >= horizon * (1.0 - 1e-12) {
                (horizon - t, horizon, false)
            } else {
                (dt, t + dt, false)
            }
        } else {
            let t_next = if (i + 1) as f64 >= fixed_steps { horizon } else { (i + 1) as f64 * fixed_dt };
            (t_next - t, t_next, true)
        };
        let atom_time = dynamics.atoms.get(next_atom).map(|a| a.time).filter(|&ta| ta <= horizon);
        if let Some(ta) = atom_time.filter(|&ta| ta < t_next) {
            t_next = ta;
            dt = ta - t;
            advance = false;
        }
        if advance {
            i += 1;
        }
        let dxc = s * (dt.sqrt() * rng.normal());
        if cfg.bridge_correction {
            rng.uniform();
        }
        let mut x1 = x + (b - jump_drift) * dt + dxc;
        if !trivial {
            let k = p.gd.k.eval(t, x);
            let q = p.q.eval(t, x);
            let mut inc = 0.0 + k * dxc;
            inc -= 0.5 * q * dt;
            let comp = p.compensator_rate(t);
            if comp != 0.0 {
                inc -= comp * dt;
            }
            if !inc.is_finite() {
                return Err(McError::EvalDomain { t, x: vec![x] }.into());
            }
            pt.log_z += inc;
            pt.n += k * dxc - comp * dt;
            pt.r += q * dt + p.poisson_r_rate(t) * dt;
            pt.bracket += q * dt;
        }
        pt.t = t_next;
        if let Some(d) = cp {
            let count = rng.poisson(dynamics.cp_rate * dt);
            for _ in 0..count {
                let size = d.points[rng.categorical(&d.probs)];
                x1 += size;
                apply_jump(&mut pt, p.gd.u.eval(t, size) - 1.0, &mut min_dn)?;
            }
        }
        if atom_time == Some(t_next) {
            let atom = &dynamics.atoms[next_atom];
            if rng.uniform() < atom.mass {
                let size = atom.dist.points[rng.categorical(&atom.dist.probs)];
                x1 += size;
                apply_jump(&mut pt, p.gd.u.eval(t_next, size) - 1.0, &mut min_dn)?;
            } else if p.atom_no_fire[next_atom] != 0.0 {
                apply_jump(&mut pt, p.atom_no_fire[next_atom], &mut min_dn)?;
            }
            pt.r += p.atom_r[next_atom];
            next_atom += 1;
        }
        pt.x = x1;
        observer(&pt);
        let r = x1.abs();
        if !r.is_finite() || r >= cfg.explosion_guard || !spec.in_state_space(&[x1]) {
            break TerminalStatus::NumericalExplosion { time: t_next };
        }
        if r >= stop.level {
            break TerminalStatus::ExitedLevel { level: stop.level, time: t_next };
        }
        if pt.r >= stop.hellinger {
            return Ok(JumpTerminal { status: TerminalStatus::ExitedLevel { level: stop.hellinger, time: t_next }, hellinger_stop: true, min_delta_n: min_dn });
        }
        if t_next >= horizon {
            break TerminalStatus::ReachedHorizon;
        }
    };
    Ok(JumpTerminal { status, hellinger_stop: false, min_delta_n: min_dn })
}

fn check_cfg(cfg: &SimConfig, t: f64) -> Result<(), JumpError> {
    cfg.validate()?;
    if !(t > 0.0) || t > cfg.horizon {
        return invalid(format!("time {t} must lie in (0, horizon = {}]", cfg.horizon));
    }
    Ok(())
}

/// One recorded path of `(X, N, Z, R)` up to the configured horizon.
pub fn simulate_jump_path(
    trip: &JumpTriplet,
    gd: &GirsanovData,
    cfg: &SimConfig,
    index: u64,
    stop: JumpStop,
) -> Result<JumpPathRecord, JumpError> {
    check_cfg(cfg, cfg.horizon)?;
    let p = Prepared::new(trip, gd, cfg.horizon)?;
    let mut points = Vec::new();
    let terminal = run_jump_path(trip, &p, cfg, index, cfg.horizon, stop, &mut |pt| points.push(*pt))?;
    Ok(JumpPathRecord { points, terminal })
}

/// Every path of the ensemble, recorded.
pub fn simulate_jump_exponential(
    trip: &JumpTriplet,
    gd: &GirsanovData,
    cfg: &SimConfig,
    stop: JumpStop,
) -> Result<Vec<JumpPathRecord>, JumpError> {
    check_cfg(cfg, cfg.horizon)?;
    let p = Prepared::new(trip, gd, cfg.horizon)?;
    collect_paths(cfg.n_paths, |i| {
        let mut points = Vec::new();
        let terminal = run_jump_path(trip, &p, cfg, i, cfg.horizon, stop, &mut |pt| points.push(*pt))?;
        Ok(JumpPathRecord { points, terminal })
    })
}

/// [`map_paths`] for jump errors: the first failing index wins.
fn collect_paths<T: Send>(n: usize, f: impl Fn(u64) -> Result<T, JumpError> + Sync + Send) -> Result<Vec<T>, JumpError> {
    let tagged = map_paths(n, |i| Ok(f(i)))?;
    tagged.into_iter().collect()
}

/// Sample mean of `Z_t` under the original triplet; exploded paths give 0.
pub fn jump_mean_direct(trip: &JumpTriplet, gd: &GirsanovData, t: f64, cfg: &SimConfig) -> Result<MCEstimate, JumpError> {
    check_cfg(cfg, t)?;
    let p = Prepared::new(trip, gd, t)?;
    let zs = collect_paths(cfg.n_paths, |i| {
        let mut last = 0.0;
        let term = run_jump_path(trip, &p, cfg, i, t, JumpStop::NONE, &mut |pt| last = pt.log_z)?;
        Ok(if term.status.exploded() { 0.0 } else { last.exp() })
    })?;
    Ok(MCEstimate::from_samples(&zs))
}

/// Sample means of `Z_{t ∧ rho_n}` for each plan level, where `rho_n` is the
/// first time `R >= n`, `|X| >= m_n` or the cap is reached.
pub fn jump_stopped_means(
    trip: &JumpTriplet,
    gd: &GirsanovData,
    t: f64,
    plan: &LocalizationPlan,
    cfg: &SimConfig,
) -> Result<Vec<MCEstimate>, JumpError> {
    check_cfg(cfg, t)?;
    plan.check_against(trip.base())?;
    let p = Prepared::new(trip, gd, t)?;
    let (levels, caps) = (plan.levels(), plan.caps());
    let rows = collect_paths(cfg.n_paths, |i| {
        let mut frozen: Vec<Option<f64>> = vec![None; levels.len()];
        let mut last = 0.0;
        let stop = JumpStop { hellinger: levels.len() as f64, level: plan.max_level() };
        let term = run_jump_path(trip, &p, cfg, i, t, stop, &mut |pt| {
            last = pt.log_z;
            for (k, slot) in frozen.iter_mut().enumerate() {
                if slot.is_none() && (pt.r >= (k + 1) as f64 || pt.x.abs() >= levels[k] || pt.t >= caps[k]) {
                    *slot = Some(pt.log_z);
                }
            }
        })?;
        let fill = if term.status.exploded() { f64::NEG_INFINITY } else { last };
        Ok(frozen.into_iter().map(|v| v.unwrap_or(fill).exp()).collect::<Vec<f64>>())
    })?;
    Ok((0..levels.len())
        .map(|k| MCEstimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect())
}

/// Pathwise check that `N` never jumps to or below -1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpBoundReport {
    pub paths: usize,
    pub paths_ok: usize,
    pub min_delta_n: f64,
}

impl JumpBoundReport {
    pub fn all_ok(&self) -> bool {
        self.paths == self.paths_ok
    }
}

pub fn check_jump_bound(trip: &JumpTriplet, gd: &GirsanovData, t: f64, cfg: &SimConfig) -> Result<JumpBoundReport, JumpError> {
    check_cfg(cfg, t)?;
    let p = Prepared::new(trip, gd, t)?;
    let mins = collect_paths(cfg.n_paths, |i| {
        match run_jump_path(trip, &p, cfg, i, t, JumpStop::NONE, &mut |_| {}) {
            Ok(term) => Ok(term.min_delta_n),
            Err(JumpError::JumpBoundViolation { delta_n, .. }) => Ok(delta_n),
            Err(e) => Err(e),
        }
    })?;
    Ok(JumpBoundReport {
        paths: mins.len(),
        paths_ok: mins.iter().filter(|&&m| m > -1.0).count(),
        min_delta_n: mins.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Monte Carlo test of `E[int Z_-^{-2} dC(Z) - R] = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensatorReport {
    pub mean_bracket: f64,
    pub mean_r: f64,
    pub difference: MCEstimate,
    pub pass: bool,
}

pub fn verify_compensator_identity(
    trip: &JumpTriplet,
    gd: &GirsanovData,
    cfg: &SimConfig,
    t: f64,
) -> Result<CompensatorReport, JumpError> {
    check_cfg(cfg, t)?;
    let p = Prepared::new(trip, gd, t)?;
    let pairs = collect_paths(cfg.n_paths, |i| {
        let mut last = (0.0, 0.0);
        run_jump_path(trip, &p, cfg, i, t, JumpStop::NONE, &mut |pt| last = (pt.bracket, pt.r))?;
        Ok(last)
    })?;
    let diffs: Vec<f64> = pairs.iter().map(|(b, r)| b - r).collect();
    let n = pairs.len() as f64;
    let difference = MCEstimate::from_samples(&diffs);
    let pass = difference.mean.abs() <= 3.0 * difference.std_error + 1e-12 * (1.0 + difference.mean.abs());
    Ok(CompensatorReport {
        mean_bracket: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        mean_r: pairs.iter().map(|p| p.1).sum::<f64>() / n,
        difference,
        pass,
    })
}

/// The triplet after the change of measure by `Z`: drift `b + K c + lambda
/// E_F[h (U - 1)]`, jump intensity `lambda E_F[U]` with law `U F / E_F[U]`,
/// and atoms with mass `Uhat` and law `U G / Uhat`. Requires `U` free of `t`.
pub fn modified_triplet(trip: &JumpTriplet, gd: &GirsanovData) -> Result<JumpTriplet, JumpError> {
    validate(trip, gd, 1.0)?;
    if gd.u.uses_time() && trip.cp_rate > 0.0 {
        return invalid("the modified triplet needs a time-independent U for compound-Poisson jumps");
    }
    let base = &trip.base;
    let u = |x: f64| gd.u.eval(0.0, x);
    let shift = trip.cp_expect(|x| truncation(x) * (u(x) - 1.0));
    let drift = base.drift()[0].add(&gd.k.mul(&base.qv_expr(0, 0))).add(&CoefficientExpr::constant(shift));
    let new_base = DiffusionSpec::one_dim(base.interval(), drift, base.dispersion()[0][0].clone(), base.x0()[0])?;
    let (rate, dist) = match &trip.cp_dist {
        Some(d) if trip.cp_rate > 0.0 => (trip.cp_rate * d.expect(u), Some(d.reweighted(u))),
        _ => (0.0, None),
    };
    let atoms = trip
        .atoms
        .iter()
        .map(|a| {
            let w = |x: f64| gd.u.eval(a.time, x);
            Atom { time: a.time, mass: uhat_raw(a, gd).min(1.0), dist: a.dist.reweighted(w) }
        })
        .collect();
    Ok(JumpTriplet { base: new_base, cp_rate: rate, cp_dist: dist, atoms })
}

/// Tolerance on the extrapolated deficit for the jump verdict.
pub const JUMP_VERDICT_TOLERANCE: f64 = 0.01;

/// Simulates the modified triplet and reads `Q(R_{t ∧ rho} < inf)` off the
/// surviving fraction at each plan level. `R` is finite on every path that
/// does not explode, so survival is `sup |X| < m_n` without explosion.
pub fn verdict_jump(
    trip: &JumpTriplet,
    gd: &GirsanovData,
    t: f64,
    plan: &LocalizationPlan,
    cfg: &SimConfig,
) -> Result<MartingaleVerdict, JumpError> {
    check_cfg(cfg, t)?;
    if gd.is_trivial() {
        validate(trip, gd, t)?;
        return Ok(MartingaleVerdict::trivial(vec!["K = 0 and U = 1: Z is identically 1".into()]));
    }
    plan.check_against(trip.base())?;
    if plan.max_level() >= cfg.explosion_guard {
        return invalid("explosion_guard must exceed the largest plan level");
    }
    let modified = modified_triplet(trip, gd)?;
    let p = Prepared::new(trip, gd, t)?;
    let levels = plan.levels();
    let crossed = collect_paths(cfg.n_paths, |i| {
        let mut crossed = 0usize;
        let term = run_jump_path(&modified, &p, cfg, i, t, JumpStop { hellinger: f64::INFINITY, level: plan.max_level() }, &mut |pt| {
            while crossed < levels.len() && pt.x.abs() >= levels[crossed] {
                crossed += 1;
            }
        })?;
        Ok(if term.status.exploded() { levels.len() } else { crossed })
    })?;
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
    let curve = DeficitCurve::from_entries(entries, cfg.n_paths);
    let (deficit, se) = (curve.deficit(), curve.last().std_error);
    let classification = if !curve.converged {
        Classification::Inconclusive
    } else if deficit <= JUMP_VERDICT_TOLERANCE + 3.0 * se {
        Classification::TrueMartingale
    } else {
        Classification::StrictLocal
    };
    let notes = vec![
        format!("modified-measure survival at level {}: {:.6} ± {:.6}", curve.last().level, curve.extrapolated_expectation, se),
        "finite-horizon surrogate: survival is read at the largest plan level".into(),
    ];
    Ok(MartingaleVerdict { classification, deficit_curve: Some(curve), feller_original: None, feller_modified: None, notes })
}
