//! Diffusion data model, Girsanov drift modification and localization plans.
//!
//! A [`DiffusionSpec`] stores the dispersion `sigma`; the quadratic-variation
//! density is always derived as `c = sigma * sigma^T`, and every drift
//! modification uses `c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CoefficientExpr, ExprError};
use crate::feller::FellerReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid state interval: {0}")]
    Interval(String),
    #[error("initial point {x0} is not strictly inside ({lower}, {upper})")]
    InitialPoint { x0: f64, lower: f64, upper: f64 },
    #[error("homogeneous flag is {claimed} but the coefficients {} reference t", if *.claimed { "do" } else { "do not" })]
    Homogeneity { claimed: bool },
    #[error("invalid localization plan: {0}")]
    Plan(String),
    #[error("localization level index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("quadratic variation density is not positive semidefinite at t={t}, x={x:?}")]
    NotPositiveSemidefinite { t: f64, x: Vec<f64> },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval { lower: f64::NEG_INFINITY, upper: f64::INFINITY };
    pub const POSITIVE: Interval = Interval { lower: 0.0, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Result<Self, ModelError> {
        if lower.is_nan() || upper.is_nan() || lower >= upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(ModelError::Interval(format!("({lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

// JSON has no infinities: unbounded ends serialize as null.
impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let end = |v: f64| if v.is_finite() { Some(v) } else { None };
        (end(self.lower), end(self.upper)).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (lo, hi) = <(Option<f64>, Option<f64>)>::deserialize(d)?;
        Interval::new(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)).map_err(serde::de::Error::custom)
    }
}

/// `dX = b(t, X) dt + sigma(t, X) dW` on a product of open intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionSpec {
    dim: usize,
    intervals: Vec<Interval>,
    drift: Vec<CoefficientExpr>,
    dispersion: Vec<Vec<CoefficientExpr>>,
    homogeneous: bool,
    x0: Vec<f64>,
}

impl DiffusionSpec {
    pub fn new(
        intervals: Vec<Interval>,
        drift: Vec<CoefficientExpr>,
        dispersion: Vec<Vec<CoefficientExpr>>,
        x0: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let dim = drift.len();
        if dim == 0 {
            return Err(ModelError::DimensionMismatch("dimension must be positive".into()));
        }
        if intervals.len() != dim || x0.len() != dim {
            return Err(ModelError::DimensionMismatch(format!(
                "drift has {dim} components, intervals {}, x0 {}",
                intervals.len(),
                x0.len()
            )));
        }
        if dispersion.len() != dim || dispersion.iter().any(|row| row.len() != dim) {
            return Err(ModelError::DimensionMismatch(format!("dispersion must be {dim}x{dim}")));
        }
        for (x, iv) in x0.iter().zip(&intervals) {
            if !iv.contains(*x) {
                return Err(ModelError::InitialPoint { x0: *x, lower: iv.lower, upper: iv.upper });
            }
        }
        let all = drift.iter().chain(dispersion.iter().flatten());
        if let Some(e) = all.clone().find(|e| e.coord_count() > dim) {
            return Err(ModelError::DimensionMismatch(format!(
                "`{e}` references coordinate {} in a {dim}-dimensional model",
                e.coord_count()
            )));
        }
        let homogeneous = !all.into_iter().any(CoefficientExpr::uses_time);
        Ok(Self { dim, intervals, drift, dispersion, homogeneous, x0 })
    }

    pub fn one_dim(interval: Interval, drift: CoefficientExpr, sigma: CoefficientExpr, x0: f64) -> Result<Self, ModelError> {
        Self::new(vec![interval], vec![drift], vec![vec![sigma]], vec![x0])
    }

    /// Parse a one-dimensional spec from expression strings.
    pub fn parse_1d(interval: Interval, drift: &str, sigma: &str, x0: f64) -> Result<Self, ModelError> {
        Self::one_dim(interval, CoefficientExpr::parse(drift)?, CoefficientExpr::parse(sigma)?, x0)
    }

    /// Check a user-claimed homogeneity flag against the expressions.
    pub fn check_homogeneous_claim(&self, claimed: bool) -> Result<(), ModelError> {
        if claimed == self.homogeneous {
            Ok(())
        } else {
            Err(ModelError::Homogeneity { claimed })
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }
    pub fn interval(&self) -> Interval {
        self.intervals[0]
    }
    pub fn drift(&self) -> &[CoefficientExpr] {
        &self.drift
    }
    pub fn dispersion(&self) -> &[Vec<CoefficientExpr>] {
        &self.dispersion
    }
    pub fn homogeneous(&self) -> bool {
        self.homogeneous
    }
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(self.intervals.clone(), self.drift.clone(), self.dispersion.clone(), x0)
    }

    /// Same dynamics with drift and quadratic variation multiplied by `factor`
    /// (a deterministic time change).
    pub fn scaled(&self, factor: f64) -> Self {
        let root = factor.sqrt();
        let drift = self.drift.iter().map(|b| b.scale(factor)).collect();
        let dispersion = self.dispersion.iter().map(|row| row.iter().map(|s| s.scale(root)).collect()).collect();
        Self { drift, dispersion, ..self.clone() }
    }

    pub fn in_state_space(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.intervals).all(|(v, iv)| iv.contains(*v))
    }

    #[inline]
    pub fn drift_1d(&self, t: f64, x: f64) -> f64 {
        self.drift[0].eval(t, x)
    }

    #[inline]
    pub fn sigma_1d(&self, t: f64, x: f64) -> f64 {
        self.dispersion[0][0].eval(t, x)
    }

    #[inline]
    pub fn qv_1d(&self, t: f64, x: f64) -> f64 {
        let s = self.sigma_1d(t, x);
        s * s
    }

    pub fn eval_drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(&self.drift) {
            *o = b.eval_at(t, x);
        }
    }

    /// Row-major `dim x dim` dispersion matrix.
    pub fn eval_dispersion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.dispersion.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                out[i * self.dim + j] = s.eval_at(t, x);
            }
        }
    }

    /// Row-major quadratic-variation density `c = sigma sigma^T`.
    pub fn eval_qv(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut s = vec![0.0; d * d];
        self.eval_dispersion(t, x, &mut s);
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
            }
        }
        c
    }

    /// Expression for `c^{ij} = sum_k sigma^{ik} sigma^{jk}`.
    pub fn qv_expr(&self, i: usize, j: usize) -> CoefficientExpr {
        let terms: Vec<_> = (0..self.dim)
            .filter(|&k| !self.dispersion[i][k].is_zero() && !self.dispersion[j][k].is_zero())
            .map(|k| self.dispersion[i][k].mul(&self.dispersion[j][k]))
            .collect();
        CoefficientExpr::sum(&terms)
    }

    /// Sampled check that `c` is symmetric positive semidefinite (pivoted
    /// Cholesky with a relative tolerance) at each of the given points.
    pub fn check_psd(&self, points: &[(f64, Vec<f64>)]) -> Result<(), ModelError> {
        for (t, x) in points {
            let c = self.eval_qv(*t, x);
            if c.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Expr(ExprError::EvalDomain {
                    expr: "sigma".into(),
                    t: *t,
                    x: x.clone(),
                }));
            }
            if !is_psd(&c, self.dim) {
                return Err(ModelError::NotPositiveSemidefinite { t: *t, x: x.clone() });
            }
        }
        Ok(())
    }
}

fn is_psd(c: &[f64], d: usize) -> bool {
    let scale = (0..d).map(|i| c[i * d + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut a = c.to_vec();
    for k in 0..d {
        let pivot = a[k * d + k];
        if pivot < -tol {
            return false;
        }
        if pivot <= tol {
            // Zero pivot: the rest of the column must vanish too.
            if (k + 1..d).any(|i| a[i * d + k].abs() > tol.sqrt() * scale.sqrt()) {
                return false;
            }
            continue;
        }
        for i in k + 1..d {
            let f = a[i * d + k] / pivot;
            for j in k..d {
                a[i * d + j] -= f * a[k * d + j];
            }
        }
    }
    true
}

/// Girsanov exponent: `Z = E(beta(X) . X^c)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentSpec {
    pub beta: Vec<CoefficientExpr>,
}

impl ExponentSpec {
    pub fn new(beta: Vec<CoefficientExpr>) -> Self {
        Self { beta }
    }

    pub fn parse_1d(beta: &str) -> Result<Self, ModelError> {
        Ok(Self { beta: vec![CoefficientExpr::parse(beta)?] })
    }

    pub fn zero(dim: usize) -> Self {
        Self { beta: vec![CoefficientExpr::constant(0.0); dim] }
    }

    pub fn is_zero(&self) -> bool {
        self.beta.iter().all(CoefficientExpr::is_zero)
    }

    pub fn uses_time(&self) -> bool {
        self.beta.iter().any(CoefficientExpr::uses_time)
    }
}

fn check_dims(spec: &DiffusionSpec, exp: &ExponentSpec) -> Result<(), ModelError> {
    if exp.beta.len() != spec.dim {
        return Err(ModelError::DimensionMismatch(format!(
            "exponent has {} components, diffusion has dimension {}",
            exp.beta.len(),
            spec.dim
        )));
    }
    if let Some(e) = exp.beta.iter().find(|e| e.coord_count() > spec.dim) {
        return Err(ModelError::DimensionMismatch(format!("`{e}` references a coordinate beyond dimension {}", spec.dim)));
    }
    Ok(())
}

/// Drift of the measure-changed dynamics: `b~^i = b^i + sum_j c^{ij} beta^j`.
/// Dispersion, interval and initial point are unchanged.
pub fn modified_drift(spec: &DiffusionSpec, exp: &ExponentSpec) -> Result<DiffusionSpec, ModelError> {
    check_dims(spec, exp)?;
    let drift = (0..spec.dim)
        .map(|i| {
            let mut terms = vec![spec.drift[i].clone()];
            for (j, beta) in exp.beta.iter().enumerate() {
                if beta.is_zero() {
                    continue;
                }
                let c = spec.qv_expr(i, j);
                if !c.is_zero() {
                    terms.push(c.mul(beta));
                }
            }
            CoefficientExpr::sum(&terms)
        })
        .collect();
    DiffusionSpec::new(spec.intervals.clone(), drift, spec.dispersion.clone(), spec.x0.clone())
}

/// `q = beta^T c beta`, built as `sum_k (sum_i beta^i sigma^{ik})^2` so that it
/// is nonnegative in floating point as well.
pub fn quadratic_exponent(spec: &DiffusionSpec, exp: &ExponentSpec) -> Result<CoefficientExpr, ModelError> {
    check_dims(spec, exp)?;
    let squares: Vec<_> = (0..spec.dim)
        .map(|k| {
            let terms: Vec<_> = (0..spec.dim)
                .filter(|&i| !exp.beta[i].is_zero() && !spec.dispersion[i][k].is_zero())
                .map(|i| exp.beta[i].mul(&spec.dispersion[i][k]))
                .collect();
            CoefficientExpr::sum(&terms)
        })
        .filter(|e| !e.is_zero())
        .map(|e| e.square())
        .collect();
    Ok(CoefficientExpr::sum(&squares))
}

/// Levels `m_1 < ... < m_N` with time caps; level `n` stops at
/// `inf{t : |X_t| >= m_n} ∧ cap_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct LocalizationPlan {
    levels: Vec<f64>,
    caps: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    levels: Vec<f64>,
    caps: Vec<f64>,
}

impl TryFrom<RawPlan> for LocalizationPlan {
    type Error = ModelError;
    fn try_from(raw: RawPlan) -> Result<Self, ModelError> {
        LocalizationPlan::new(raw.levels, raw.caps)
    }
}

impl LocalizationPlan {
    pub fn new(levels: Vec<f64>, caps: Vec<f64>) -> Result<Self, ModelError> {
        if levels.len() < 2 {
            return Err(ModelError::Plan("at least two levels are required".into()));
        }
        if caps.len() != levels.len() {
            return Err(ModelError::Plan(format!("{} levels but {} caps", levels.len(), caps.len())));
        }
        if levels.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(ModelError::Plan("levels must be positive and finite".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::Plan("levels must be strictly increasing".into()));
        }
        if caps.iter().any(|c| c.is_nan() || *c <= 0.0) || caps.windows(2).any(|w| w[0] > w[1]) {
            return Err(ModelError::Plan("caps must be positive and nondecreasing".into()));
        }
        Ok(Self { levels, caps })
    }

    /// `count` levels `first * ratio^k`, all capped at `cap`.
    pub fn geometric(first: f64, ratio: f64, count: usize, cap: f64) -> Result<Self, ModelError> {
        let levels = (0..count).map(|k| first * ratio.powi(k as i32)).collect();
        Self::new(levels, vec![cap; count])
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
    pub fn caps(&self) -> &[f64] {
        &self.caps
    }
    pub fn len(&self) -> usize {
        self.levels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
    pub fn max_level(&self) -> f64 {
        *self.levels.last().expect("plan has at least two levels")
    }

    /// Levels must sit inside the state space radius when it is bounded.
    pub fn check_against(&self, spec: &DiffusionSpec) -> Result<(), ModelError> {
        let radius = spec
            .intervals
            .iter()
            .map(|iv| iv.lower.abs().max(iv.upper.abs()))
            .fold(0.0, f64::max);
        if spec.intervals.iter().all(Interval::is_bounded) && self.max_level() >= radius {
            return Err(ModelError::Plan(format!(
                "largest level {} is not inside the bounded state space (radius {radius})",
                self.max_level()
            )));
        }
        Ok(())
    }

    /// Stopping rule for level `n` (1-based).
    pub fn rho_level(&self, n: usize) -> Result<ExitRule, ModelError> {
        if n == 0 || n > self.levels.len() {
            return Err(ModelError::IndexOutOfRange { index: n, len: self.levels.len() });
        }
        Ok(ExitRule { level: self.levels[n - 1], cap: self.caps[n - 1] })
    }
}

/// First passage of the path norm to `level`, capped at `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRule {
    pub level: f64,
    pub cap: f64,
}

impl ExitRule {
    /// Exit time along a discretely observed path (inclusive `>=`).
    pub fn exit_time(&self, times: &[f64], states: &[Vec<f64>]) -> f64 {
        times
            .iter()
            .zip(states)
            .take_while(|(t, _)| **t <= self.cap)
            .find(|(_, x)| norm(x) >= self.level)
            .map_or(self.cap, |(t, _)| *t)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    TrueMartingale,
    StrictLocal,
    Inconclusive,
}

/// One level of a localized deficit estimate: `Q^(rho_n > t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeficitEntry {
    pub level: f64,
    pub cap: f64,
    pub time: f64,
    pub survival: f64,
    pub std_error: f64,
}

impl DeficitEntry {
    /// Estimated `Q(rho_n <= t)`.
    pub fn exit_probability(&self) -> f64 {
        1.0 - self.survival
    }
}

/// `E[Z_t] = lim_n Q(rho_n > t)`, estimated on a shared ensemble of modified
/// dynamics so that the survival column is exactly nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitCurve {
    pub entries: Vec<DeficitEntry>,
    pub extrapolated_expectation: f64,
    pub converged: bool,
    pub paths: usize,
}

impl DeficitCurve {
    pub fn from_entries(entries: Vec<DeficitEntry>, paths: usize) -> Self {
        let n = entries.len();
        let last = entries[n - 1];
        let converged = if n >= 2 {
            let prev = entries[n - 2];
            (last.survival - prev.survival).abs() <= 2.0 * (last.std_error + prev.std_error)
        } else {
            false
        };
        Self { extrapolated_expectation: last.survival.clamp(0.0, 1.0), converged, entries, paths }
    }

    /// `1 - E[Z_t]` estimate.
    pub fn deficit(&self) -> f64 {
        1.0 - self.extrapolated_expectation
    }

    pub fn last(&self) -> &DeficitEntry {
        self.entries.last().expect("curve is never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleVerdict {
    pub classification: Classification,
    pub deficit_curve: Option<DeficitCurve>,
    pub feller_original: Option<FellerReport>,
    pub feller_modified: Option<FellerReport>,
    pub notes: Vec<String>,
}

impl MartingaleVerdict {
    pub fn trivial(notes: Vec<String>) -> Self {
        Self {
            classification: Classification::TrueMartingale,
            deficit_curve: None,
            feller_original: None,
            feller_modified: None,
            notes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(s: &str) -> CoefficientExpr {
        CoefficientExpr::parse(s).unwrap()
    }

    fn bm(drift: &str, sigma: &str) -> DiffusionSpec {
        DiffusionSpec::parse_1d(Interval::REAL_LINE, drift, sigma, 0.0).unwrap()
    }

    #[test]
    fn modified_drift_examples() {
        let m = modified_drift(&bm("0", "1"), &ExponentSpec::parse_1d("x").unwrap()).unwrap();
        for x in [-2.0, 0.5, 3.0] {
            assert_eq!(m.drift_1d(0.0, x), x);
        }
        let spec = bm("1", "2");
        let m = modified_drift(&spec, &ExponentSpec::parse_1d("x").unwrap()).unwrap();
        assert_eq!(m.drift_1d(0.0, 1.5), 7.0);
        assert_eq!(m.dispersion(), spec.dispersion());
        assert_eq!(m.x0(), spec.x0());
        let same = modified_drift(&spec, &ExponentSpec::zero(1)).unwrap();
        assert_eq!(same, spec);
    }

    #[test]
    fn quadratic_exponent_examples() {
        let spec = bm("0", "1");
        let q = quadratic_exponent(&spec, &ExponentSpec::parse_1d("x").unwrap()).unwrap();
        assert_eq!(q.eval(0.0, 3.0), 9.0);
        let q = quadratic_exponent(&spec, &ExponentSpec::parse_1d("x^3").unwrap()).unwrap();
        assert_eq!(q.eval(0.0, 2.0), 64.0);
        assert!(quadratic_exponent(&spec, &ExponentSpec::zero(1)).unwrap().is_zero());
    }

    #[test]
    fn dimension_mismatch() {
        let spec = bm("0", "1");
        let two = ExponentSpec::new(vec![e("x"), e("1")]);
        assert!(matches!(modified_drift(&spec, &two), Err(ModelError::DimensionMismatch(_))));
        assert!(matches!(quadratic_exponent(&spec, &two), Err(ModelError::DimensionMismatch(_))));
        let coord2 = ExponentSpec::new(vec![e("x2")]);
        assert!(quadratic_exponent(&spec, &coord2).is_err());
    }

    #[test]
    fn two_dimensional_modification() {
        // sigma = [[1, 0], [1, 1]] => c = [[1, 1], [1, 2]]
        let spec = DiffusionSpec::new(
            vec![Interval::REAL_LINE; 2],
            vec![e("0"), e("x1")],
            vec![vec![e("1"), e("0")], vec![e("1"), e("1")]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let exp = ExponentSpec::new(vec![e("x2"), e("1")]);
        let m = modified_drift(&spec, &exp).unwrap();
        let x = [0.5, 2.0];
        let mut b = [0.0; 2];
        m.eval_drift(0.0, &x, &mut b);
        assert_eq!(b, [2.0 + 1.0, 0.5 + 2.0 + 2.0]);
        let q = quadratic_exponent(&spec, &exp).unwrap();
        // beta^T c beta with beta = (2, 1): 4 + 4 + 2 = 10
        assert_eq!(q.eval_at(0.0, &x), 10.0);
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            DiffusionSpec::parse_1d(Interval::POSITIVE, "0", "x", 0.0),
            Err(ModelError::InitialPoint { .. })
        ));
        assert!(Interval::new(1.0, 1.0).is_err());
        let spec = bm("t", "1");
        assert!(!spec.homogeneous());
        assert!(spec.check_homogeneous_claim(true).is_err());
        assert!(bm("x", "1").homogeneous());
    }

    #[test]
    fn psd_check() {
        let good = DiffusionSpec::new(
            vec![Interval::REAL_LINE; 2],
            vec![e("0"), e("0")],
            vec![vec![e("1"), e("x1")], vec![e("0"), e("0")]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let pts: Vec<_> = (-3..=3).map(|i| (0.0, vec![i as f64, 1.0])).collect();
        assert!(good.check_psd(&pts).is_ok());
        assert!(!is_psd(&[1.0, 2.0, 2.0, 1.0], 2));
        assert!(is_psd(&[0.0, 0.0, 0.0, 1.0], 2));
        assert!(!is_psd(&[0.0, 1.0, 1.0, 1.0], 2));
    }

    #[test]
    fn plan_and_exit_rules() {
        let plan = LocalizationPlan::new(vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 3.0]).unwrap();
        let rule = plan.rho_level(2).unwrap();
        assert_eq!(rule, ExitRule { level: 2.0, cap: 2.0 });
        assert!(matches!(plan.rho_level(0), Err(ModelError::IndexOutOfRange { .. })));
        assert!(matches!(plan.rho_level(4), Err(ModelError::IndexOutOfRange { .. })));

        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let flat: Vec<Vec<f64>> = times.iter().map(|_| vec![0.0]).collect();
        assert_eq!(rule.exit_time(&times, &flat), 2.0);
        let ramp: Vec<Vec<f64>> = times.iter().map(|t| vec![4.0 * t]).collect();
        assert_eq!(rule.exit_time(&times, &ramp), 0.5);

        assert!(LocalizationPlan::new(vec![1.0], vec![1.0]).is_err());
        assert!(LocalizationPlan::new(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(LocalizationPlan::new(vec![1.0, 2.0], vec![2.0, 1.0]).is_err());
        let bounded = DiffusionSpec::parse_1d(Interval::new(-1.0, 1.0).unwrap(), "0", "1", 0.0).unwrap();
        assert!(plan.check_against(&bounded).is_err());
    }

    #[test]
    fn interval_json_uses_null_for_infinite_ends() {
        let iv: Interval = serde_json_like("[0.0,null]");
        assert_eq!(iv, Interval::POSITIVE);
    }

    fn serde_json_like(text: &str) -> Interval {
        // Minimal deserializer shim: the core crate has no JSON dependency.
        let inner = text.trim_matches(|c| c == '[' || c == ']');
        let mut parts = inner.split(',').map(|s| s.trim().parse::<f64>().ok());
        let lo = parts.next().flatten().unwrap_or(f64::NEG_INFINITY);
        let hi = parts.next().flatten().unwrap_or(f64::INFINITY);
        Interval::new(lo, hi).unwrap()
    }

    proptest! {
        #[test]
        fn modification_is_additive_in_beta(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -4.0f64..4.0) {
            let spec = bm("sin(x)", "1 + 0.5*cos(x)");
            let b1 = ExponentSpec::new(vec![e(&format!("{a}*x"))]);
            let b2 = ExponentSpec::new(vec![e(&format!("{b} + x^2"))]);
            let sum = ExponentSpec::new(vec![b1.beta[0].add(&b2.beta[0])]);
            let twice = modified_drift(&modified_drift(&spec, &b1).unwrap(), &b2).unwrap();
            let once = modified_drift(&spec, &sum).unwrap();
            let (u, v) = (twice.drift_1d(0.0, x), once.drift_1d(0.0, x));
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }

        #[test]
        fn quadratic_exponent_is_nonnegative(a in -3.0f64..3.0, x in -5.0f64..5.0, y in -5.0f64..5.0, t in 0.0f64..3.0) {
            let spec = DiffusionSpec::new(
                vec![Interval::REAL_LINE; 2],
                vec![e("0"), e("0")],
                vec![vec![e("1"), e(&format!("{a}*x2"))], vec![e("sin(t*x1)"), e("x1")]],
                vec![0.0, 0.0],
            ).unwrap();
            let exp = ExponentSpec::new(vec![e("x1 - x2"), e(&format!("{a} * t"))]);
            let q = quadratic_exponent(&spec, &exp).unwrap();
            prop_assert!(q.eval_at(t, &[x, y]) >= 0.0);
        }

        #[test]
        fn exit_rules_are_monotone(steps in proptest::collection::vec(-1.0f64..1.0, 1..60)) {
            let plan = LocalizationPlan::new(vec![0.5, 1.0, 2.0, 3.0], vec![1.0, 2.0, 2.0, 5.0]).unwrap();
            let mut x = 0.0;
            let mut times = vec![0.0];
            let mut states = vec![vec![0.0]];
            for (i, s) in steps.iter().enumerate() {
                x += s;
                times.push((i + 1) as f64 * 0.1);
                states.push(vec![x]);
            }
            let exits: Vec<f64> = (1..=plan.len()).map(|n| plan.rho_level(n).unwrap().exit_time(&times, &states)).collect();
            prop_assert!(exits.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
