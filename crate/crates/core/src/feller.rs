//! Feller's test for explosion of a time-homogeneous scalar diffusion.
//!
//! With scale density `s'(x) = exp(-∫_xi^x 2b/c)` the test integral is
//!
//! ```text
//! v(e) = ∫_xi^e s'(y) ∫_xi^y 2 / (c(z) s'(z)) dz dy = ∫_xi^e g(y) dy,
//! g(y) = ∫_xi^y (2 / c(z)) exp(-∫_z^y 2b/c) dz,
//! ```
//!
//! and the diffusion is non-explosive iff `v` is infinite at both ends.
//! `v` is accumulated panel by panel over probe points marching toward the
//! endpoint; `g` is carried across panels with
//! `g(y) = g(a) exp(-S(a, y)) + ∫_a^y (2/c(z)) exp(-S(z, y)) dz`, which keeps
//! every exponent a short local integral instead of a difference of huge ones.

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{modified_drift, Classification, DiffusionSpec, ExponentSpec, MartingaleVerdict, ModelError};
use crate::quad::{gk15, integrate, QuadError, Tolerance};

/// `exp(-x)` underflows to zero past this.
const EXP_CUTOFF: f64 = 745.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FellerError {
    #[error("Feller's test needs a one-dimensional diffusion, got dimension {0}")]
    NotOneDimensional(usize),
    #[error("Feller's test needs time-homogeneous coefficients")]
    Inhomogeneous,
    #[error("reference point {xi} is not inside ({lower}, {upper})")]
    ReferencePoint { xi: f64, lower: f64, upper: f64 },
    #[error("diffusion coefficient c = {value} is not positive at x = {at}")]
    DegenerateDiffusion { at: f64, value: f64 },
    #[error("drift is not finite at x = {at}")]
    EvalDomain { at: f64 },
    #[error("scale density overflows near x = {at}")]
    Overflow { at: f64 },
    #[error("quadrature failure: {0}")]
    Quadrature(#[from] QuadError),
    #[error("probe sequence exhausted after {probes} probes without a decision (partial v = {value:e})")]
    Undecided { probes: usize, value: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum VStatus {
    Finite { value: f64 },
    Infinite,
    Failed { reason: String },
}

impl VStatus {
    pub fn is_finite(&self) -> bool {
        matches!(self, VStatus::Finite { .. })
    }
    pub fn is_infinite(&self) -> bool {
        matches!(self, VStatus::Infinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Explosion {
    Explosive,
    NonExplosive,
    Unknown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadDiagnostics {
    pub subdivisions: usize,
    pub evaluations: usize,
    pub estimated_error: f64,
    pub probes: usize,
}

impl QuadDiagnostics {
    fn merge(self, other: Self) -> Self {
        Self {
            subdivisions: self.subdivisions + other.subdivisions,
            evaluations: self.evaluations + other.evaluations,
            estimated_error: self.estimated_error + other.estimated_error,
            probes: self.probes + other.probes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FellerReport {
    pub v_left: VStatus,
    pub v_right: VStatus,
    pub reference_point: f64,
    pub diagnostics: QuadDiagnostics,
    pub conclusion: Explosion,
}

impl FellerReport {
    fn from_sides(xi: f64, left: VStatus, right: VStatus, diagnostics: QuadDiagnostics) -> Self {
        // A finite side proves explosion even if the other side failed.
        let conclusion = if left.is_finite() || right.is_finite() {
            Explosion::Explosive
        } else if left.is_infinite() && right.is_infinite() {
            Explosion::NonExplosive
        } else {
            Explosion::Unknown
        };
        Self { v_left: left, v_right: right, reference_point: xi, diagnostics, conclusion }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FellerOptions {
    pub tolerance: Tolerance,
    /// Partial `v` above this is declared infinite.
    pub divergence_threshold: f64,
    /// First probe offset toward an infinite endpoint.
    pub step: f64,
    pub max_probes: usize,
    pub subdivision_limit: usize,
}

impl Default for FellerOptions {
    fn default() -> Self {
        Self {
            tolerance: Tolerance::default(),
            divergence_threshold: 1e12,
            step: 1.0,
            max_probes: 64,
            subdivision_limit: 200,
        }
    }
}

/// Result of one endpoint integral, with the partial integrals at each probe.
#[derive(Debug, Clone, PartialEq)]
pub struct VOutcome {
    pub status: VStatus,
    pub probes: Vec<f64>,
    pub partial: Vec<f64>,
    pub diagnostics: QuadDiagnostics,
}

fn check_spec(spec: &DiffusionSpec) -> Result<(), FellerError> {
    if spec.dim() != 1 {
        return Err(FellerError::NotOneDimensional(spec.dim()));
    }
    if !spec.homogeneous() {
        return Err(FellerError::Inhomogeneous);
    }
    Ok(())
}

fn check_xi(spec: &DiffusionSpec, xi: f64) -> Result<(), FellerError> {
    let iv = spec.interval();
    if !iv.contains(xi) {
        return Err(FellerError::ReferencePoint { xi, lower: iv.lower, upper: iv.upper });
    }
    Ok(())
}

/// Coefficients seen from `xi` marching toward +direction; the left endpoint
/// is handled by reflecting `x -> -x`.
struct Oriented<'a> {
    spec: &'a DiffusionSpec,
    sign: f64,
    tol: Tolerance,
    limit: usize,
    evaluations: Cell<usize>,
}

impl Oriented<'_> {
    fn b(&self, y: f64) -> f64 {
        self.sign * self.spec.drift_1d(0.0, self.sign * y)
    }

    fn c(&self, y: f64) -> Result<f64, FellerError> {
        let v = self.spec.qv_1d(0.0, self.sign * y);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(FellerError::DegenerateDiffusion { at: self.sign * y, value: v })
        }
    }

    fn ratio(&self, y: f64) -> Result<f64, FellerError> {
        self.evaluations.set(self.evaluations.get() + 1);
        let c = self.c(y)?;
        let b = self.b(y);
        if !b.is_finite() {
            return Err(FellerError::EvalDomain { at: self.sign * y });
        }
        Ok(2.0 * b / c)
    }

    /// `S(y - u, y) = ∫_0^u (2b/c)(y - s) ds`. Working in the offset `u`
    /// keeps interval lengths exact even when `u` is far below the spacing of
    /// floating-point numbers near `y`.
    fn s_back(&self, y: f64, u: f64) -> Result<f64, FellerError> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let mut f = |s| self.ratio(y - s);
        let (est, err) = gk15::<_, FellerError>(&mut f, 0.0, u)?;
        if est.abs() - err > EXP_CUTOFF || err <= 1e-13 * est.abs().max(1.0) {
            return Ok(est);
        }
        let tol = Tolerance::new(1e-12, 1e-12);
        match integrate::<_, FellerError>(|s| self.ratio(y - s), 0.0, u, tol, 10 * self.limit) {
            Ok(r) => Ok(r.value),
            Err(FellerError::Quadrature(QuadError::Subdivisions { value, error, .. })) if error <= 1e-9 => Ok(value),
            Err(e) => Err(e),
        }
    }

    fn decay_back(&self, y: f64, u: f64) -> Result<f64, FellerError> {
        let s = self.s_back(y, u)?;
        if -s > 709.0 {
            return Err(FellerError::Overflow { at: self.sign * y });
        }
        Ok((-s).exp())
    }

    fn kernel_back(&self, y: f64, u: f64) -> Result<f64, FellerError> {
        let c = self.c(y - u)?;
        Ok(2.0 / c * self.decay_back(y, u)?)
    }

    /// `∫_{u0}^{u1} kernel(y - u, y) du`. Round-off or long oscillatory ranges
    /// can stall the target; results within 1e-4 of the running total are
    /// kept since only ratios of panel increments drive the decision.
    fn piece(&self, y: f64, u0: f64, u1: f64, total: f64) -> Result<f64, FellerError> {
        let rel = self.tol.rel * 1e-2;
        let tol = Tolerance::new(rel * total, rel);
        match integrate::<_, FellerError>(|u| self.kernel_back(y, u), u0, u1, tol, 10 * self.limit) {
            Ok(r) => Ok(r.value),
            Err(FellerError::Quadrature(QuadError::Subdivisions { value, error, .. }))
                if error <= 1e-4 * (total + value).abs() =>
            {
                Ok(value)
            }
            Err(e) => Err(e),
        }
    }

    /// `g(y)` from `g(a)`. When the drift pushes outward the kernel has a
    /// boundary layer of width about `c / 2|b|` at `u = 0`; the offset range is
    /// then split geometrically starting well inside the layer.
    fn g_from(&self, a: f64, ga: f64, y: f64) -> Result<f64, FellerError> {
        if y <= a {
            return Ok(ga);
        }
        let w = y - a;
        let mut total = if ga == 0.0 { 0.0 } else { ga * self.decay_back(y, w)? };
        let b = self.b(y);
        let layer = if b > 0.0 { self.c(y)? / (2.0 * b) } else { f64::INFINITY };
        if layer >= w / 8.0 {
            total += self.piece(y, 0.0, w, total)?;
        } else {
            let mut lo = 0.0;
            let mut hi = layer / 256.0;
            while lo < w {
                hi = hi.min(w);
                total += self.piece(y, lo, hi, total)?;
                lo = hi;
                hi *= 2.0;
                if lo < w {
                    let mut f = |s| self.ratio(y - s);
                    let (s, err) = gk15::<_, FellerError>(&mut f, 0.0, lo)?;
                    if s - err > EXP_CUTOFF {
                        total += self.piece(y, lo, w, total)?;
                        break;
                    }
                }
            }
        }
        if !total.is_finite() {
            return Err(FellerError::Overflow { at: self.sign * y });
        }
        Ok(total)
    }

    /// `(∫_a^p g, g(p))`, marching over adaptive sub-panels so that every `g`
    /// evaluation starts from a nearby anchor.
    fn panel(
        &self,
        a: f64,
        ga: f64,
        p: f64,
        abs: f64,
        h: &mut f64,
        diag: &mut QuadDiagnostics,
    ) -> Result<(f64, f64), FellerError> {
        let width = p - a;
        let mut u = a;
        let mut gu = ga;
        let mut total = 0.0;
        let mut steps = 0;
        while u < p {
            let end = if u + *h >= p { p } else { u + *h };
            let mut f = |y| self.g_from(u, gu, y);
            let (val, err) = gk15::<_, FellerError>(&mut f, u, end)?;
            let target = (abs * (end - u) / width).max(self.tol.rel * val.abs());
            let tiny = end - u <= u.abs().max(1.0) * 1e-12;
            if err <= target || tiny {
                gu = self.g_from(u, gu, end)?;
                total += val;
                diag.estimated_error += err;
                diag.subdivisions += 1;
                *h = 2.0 * (end - u);
                u = end;
            } else {
                *h = 0.5 * (end - u);
            }
            steps += 1;
            if steps > 100 * self.limit {
                return Err(QuadError::Subdivisions { limit: 100 * self.limit, value: total, error: err }.into());
            }
        }
        Ok((total, gu))
    }
}

/// Scale density `s'(x) = exp(-∫_xi^x 2b(z)/c(z) dz)`.
pub fn scale_density(spec: &DiffusionSpec, x: f64, xi: f64) -> Result<f64, FellerError> {
    check_spec(spec)?;
    check_xi(spec, xi)?;
    check_xi(spec, x)?;
    let side = Oriented {
        spec,
        sign: 1.0,
        tol: Tolerance::default(),
        limit: 200,
        evaluations: Cell::new(0),
    };
    let s = if x >= xi { side.s_back(x, x - xi)? } else { -side.s_back(xi, xi - x)? };
    Ok((-s).exp())
}

fn probe(xi: f64, end: f64, k: usize, step: f64) -> f64 {
    if end.is_finite() {
        end - (end - xi) * 0.5f64.powi(k as i32)
    } else {
        xi + step * 2f64.powi(k as i32 - 1)
    }
}

/// Feller's `v` at one endpoint, with the probe history.
pub fn feller_v_outcome(
    spec: &DiffusionSpec,
    endpoint: Endpoint,
    xi: f64,
    opts: &FellerOptions,
) -> Result<VOutcome, FellerError> {
    check_spec(spec)?;
    check_xi(spec, xi)?;
    let iv = spec.interval();
    let (sign, end) = match endpoint {
        Endpoint::Right => (1.0, iv.upper),
        Endpoint::Left => (-1.0, -iv.lower),
    };
    let side = Oriented {
        spec,
        sign,
        tol: opts.tolerance,
        limit: opts.subdivision_limit,
        evaluations: Cell::new(0),
    };
    let x0 = sign * xi;
    let mut diag = QuadDiagnostics::default();
    let mut probes = Vec::new();
    let mut partial = Vec::new();
    let mut increments: Vec<f64> = Vec::new();
    let mut v = 0.0;
    let mut a = x0;
    let mut ga = 0.0;
    // Sub-panel width carried across probes.
    let mut h = if end.is_finite() { 0.5 * (end - x0) } else { opts.step };
    let finish = |status, probes, partial, mut diag: QuadDiagnostics, side: &Oriented| {
        diag.evaluations = side.evaluations.get();
        Ok(VOutcome { status, probes, partial, diagnostics: diag })
    };

    for k in 1..=opts.max_probes {
        let p = probe(x0, end, k, opts.step);
        if p <= a || p >= end {
            break;
        }
        let abs = if v > 0.0 { opts.tolerance.rel * 1e-3 * v } else { opts.tolerance.abs };
        let (delta, g_next) = match side.panel(a, ga, p, abs, &mut h, &mut diag) {
            Ok(r) => r,
            Err(FellerError::Overflow { .. }) => return finish(VStatus::Infinite, probes, partial, diag, &side),
            Err(e) => return Err(e),
        };
        diag.probes = k;
        let delta = delta.max(0.0);
        v += delta;
        probes.push(sign * p);
        partial.push(v);
        increments.push(delta);
        a = p;
        ga = g_next;

        if !v.is_finite() || v > opts.divergence_threshold {
            return finish(VStatus::Infinite, probes, partial, diag, &side);
        }
        let n = increments.len();
        let ratio = |i: usize| increments[i] / increments[i - 1];
        if n >= 9 && (n - 8..n).all(|i| increments[i - 1] > 0.0 && ratio(i) >= 0.97) {
            return finish(VStatus::Infinite, probes, partial, diag, &side);
        }
        if n >= 5 && v > 0.0 {
            let recent: Vec<f64> = (n - 4..n).map(ratio).collect();
            let rho = recent.iter().copied().fold(0.0, f64::max);
            if rho < 0.95 && delta * rho / (1.0 - rho) <= opts.tolerance.rel * v {
                return finish(VStatus::Finite { value: v }, probes, partial, diag, &side);
            }
        }
        if n >= 2 && v > 0.0 && increments[n - 1] < opts.tolerance.rel * v && increments[n - 2] < opts.tolerance.rel * v {
            return finish(VStatus::Finite { value: v }, probes, partial, diag, &side);
        }
    }
    Err(FellerError::Undecided { probes: probes.len(), value: v })
}

/// Feller's `v` at one endpoint, `Finite(value)` or `Infinite`.
pub fn feller_v(spec: &DiffusionSpec, endpoint: Endpoint, xi: f64, opts: &FellerOptions) -> Result<VStatus, FellerError> {
    feller_v_outcome(spec, endpoint, xi, opts).map(|o| o.status)
}

/// Runs both endpoints from `x0`.
pub fn classify_explosion(spec: &DiffusionSpec) -> Result<FellerReport, FellerError> {
    check_spec(spec)?;
    classify_explosion_with(spec, spec.x0()[0], &FellerOptions::default())
}

pub fn classify_explosion_with(spec: &DiffusionSpec, xi: f64, opts: &FellerOptions) -> Result<FellerReport, FellerError> {
    check_spec(spec)?;
    check_xi(spec, xi)?;
    let side = |endpoint| match feller_v_outcome(spec, endpoint, xi, opts) {
        Ok(o) => (o.status, o.diagnostics),
        Err(e) => (VStatus::Failed { reason: e.to_string() }, QuadDiagnostics::default()),
    };
    let (left, dl) = side(Endpoint::Left);
    let (right, dr) = side(Endpoint::Right);
    Ok(FellerReport::from_sides(xi, left, right, dl.merge(dr)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictOptions {
    pub feller: FellerOptions,
    /// Reference point; defaults to `x0`.
    pub xi: Option<f64>,
    /// Non-finite drift or exponent on the validation grid downgrades the
    /// verdict to Inconclusive when set, otherwise only adds a note.
    pub gate_on_grid: bool,
    pub grid_points: usize,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        Self { feller: FellerOptions::default(), xi: None, gate_on_grid: true, grid_points: 201 }
    }
}

pub const UNIQUENESS_CAVEAT: &str = "uniqueness in law for the original and modified dynamics is assumed, not verified";

/// Points spread over the state interval, denser near `x0` and reaching
/// toward each endpoint.
pub fn validation_grid(spec: &DiffusionSpec, n: usize) -> Vec<f64> {
    let iv = spec.interval();
    let x0 = spec.x0()[0];
    let half = (n.max(3) - 1) / 2;
    let reach = |end: f64| if end.is_finite() { end - x0 } else { (end.signum()) * 1e3 };
    let mut pts = vec![x0];
    for end in [iv.lower, iv.upper] {
        let span = reach(end);
        for i in 1..=half {
            let frac = i as f64 / (half + 1) as f64;
            // Quadratic spacing keeps most points near x0.
            pts.push(x0 + span * frac * frac);
        }
    }
    pts.retain(|x| iv.contains(*x));
    pts.sort_by(f64::total_cmp);
    pts
}

/// Grid checks shared by the diffusion verdicts: hard failure on `c <= 0`,
/// soft failure (returned as notes) on non-finite drift or exponent.
pub fn grid_check(spec: &DiffusionSpec, exp: &ExponentSpec, n: usize) -> Result<Vec<String>, FellerError> {
    let mut notes = Vec::new();
    for x in validation_grid(spec, n) {
        let c = spec.qv_1d(0.0, x);
        if c.is_nan() || c <= 0.0 {
            return Err(FellerError::PreconditionViolated(format!("c = {c} at x = {x}")));
        }
        if !spec.drift_1d(0.0, x).is_finite() {
            notes.push(format!("drift is not finite at x = {x}"));
        }
        if !exp.beta[0].eval(0.0, x).is_finite() {
            notes.push(format!("exponent is not finite at x = {x}"));
        }
    }
    Ok(notes)
}

pub fn martingale_verdict(spec: &DiffusionSpec, exp: &ExponentSpec) -> Result<MartingaleVerdict, FellerError> {
    martingale_verdict_with(spec, exp, &VerdictOptions::default())
}

pub fn martingale_verdict_with(
    spec: &DiffusionSpec,
    exp: &ExponentSpec,
    opts: &VerdictOptions,
) -> Result<MartingaleVerdict, FellerError> {
    check_spec(spec)?;
    if exp.beta.len() != 1 {
        return Err(ModelError::DimensionMismatch(format!("exponent has {} components", exp.beta.len())).into());
    }
    if exp.uses_time() {
        return Err(FellerError::Inhomogeneous);
    }
    let xi = opts.xi.unwrap_or(spec.x0()[0]);
    check_xi(spec, xi)?;
    if exp.is_zero() {
        return Ok(MartingaleVerdict::trivial(vec!["exponent is identically zero, so Z = 1".into()]));
    }
    let grid_notes = grid_check(spec, exp, opts.grid_points)?;
    let modified = modified_drift(spec, exp)?;
    let original = classify_explosion_with(spec, xi, &opts.feller)?;
    let changed = classify_explosion_with(&modified, xi, &opts.feller)?;

    let mut notes = vec![UNIQUENESS_CAVEAT.to_string()];
    let mut classification = match (original.conclusion, changed.conclusion) {
        (Explosion::NonExplosive, Explosion::NonExplosive) => Classification::TrueMartingale,
        (Explosion::NonExplosive, Explosion::Explosive) => Classification::StrictLocal,
        (Explosion::NonExplosive, Explosion::Unknown) => {
            notes.push("Feller test on the modified dynamics was inconclusive".into());
            Classification::Inconclusive
        }
        (Explosion::Explosive, _) => {
            notes.push(
                "original diffusion explodes; use the localized Monte Carlo deficit on [0, explosion) instead".into(),
            );
            Classification::Inconclusive
        }
        (Explosion::Unknown, _) => {
            notes.push("Feller test on the original dynamics was inconclusive".into());
            Classification::Inconclusive
        }
    };
    if !grid_notes.is_empty() {
        if opts.gate_on_grid && classification != Classification::Inconclusive {
            notes.push("coefficients failed the local boundedness grid check; verdict downgraded".into());
            classification = Classification::Inconclusive;
        }
        notes.extend(grid_notes);
    }
    Ok(MartingaleVerdict {
        classification,
        deficit_curve: None,
        feller_original: Some(original),
        feller_modified: Some(changed),
        notes,
    })
}
