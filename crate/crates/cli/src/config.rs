//! The JSON run configuration and its conversion into model types.

use martingality::hilbert::{CovarianceSpec, FunctionalSpec};
use martingality::jumpkit::{Atom, DiscreteDist, GirsanovData, JumpTriplet};
use martingality::mc::SimConfig;
use martingality::{CoefficientExpr, DiffusionSpec, ExponentSpec, Interval, LocalizationPlan};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::catalog;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dispersion {
    Scalar(String),
    Matrix(Vec<Vec<String>>),
}

/// Diffusion coefficients as expression strings; scalars describe the
/// one-dimensional case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub interval: OneOrMany<Interval>,
    pub drift: OneOrMany<String>,
    pub sigma: Dispersion,
    pub x0: OneOrMany<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homogeneous: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub beta: OneOrMany<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FellerConfig {
    pub xi: Option<f64>,
    pub gate_on_grid: bool,
    pub grid_points: usize,
}

impl Default for FellerConfig {
    fn default() -> Self {
        Self { xi: None, gate_on_grid: true, grid_points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletConfig {
    #[serde(default)]
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<DiscreteDist>,
    #[serde(default)]
    pub atoms: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovConfig {
    pub k: String,
    pub u: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentConfig>,
    #[serde(default = "default_time")]
    pub t: f64,
    #[serde(default)]
    pub mc: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<LocalizationPlan>,
    #[serde(default)]
    pub feller: FellerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet: Option<TripletConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub girsanov: Option<GirsanovConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalSpec>,
    #[serde(default)]
    pub with_mc: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_time() -> f64 {
    1.0
}

/// Command-line values applied on top of the file and preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub t: Option<f64>,
    pub output: Option<String>,
    pub format: Option<Format>,
    pub with_mc: bool,
}

/// Recursively overlays `top` onto `base`; objects merge, everything else
/// replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn section<'a>(root: &'a mut Map<String, Value>, key: &str) -> &'a mut Map<String, Value> {
    let v = root.entry(key).or_insert_with(|| Value::Object(Map::new()));
    if !v.is_object() {
        *v = Value::Object(Map::new());
    }
    v.as_object_mut().expect("just made an object")
}

/// Resolves preset, file contents and flags into a validated config. The
/// simulation horizon defaults to `t` when not given explicitly.
pub fn resolve(file: Option<&str>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let user: Value = match file {
        Some(text) => serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config is not valid JSON: {e}")))?,
        None => Value::Object(Map::new()),
    };
    if !user.is_object() {
        return Err(CliError::Validation("config must be a JSON object".into()));
    }
    let preset = ov.preset.clone().or_else(|| user.get("preset").and_then(Value::as_str).map(str::to_string));
    let mut root = match &preset {
        Some(name) => catalog::preset(name)
            .ok_or_else(|| CliError::Validation(format!("unknown preset `{name}`; see `martingality catalog`")))?
            .config,
        None => Value::Object(Map::new()),
    };
    merge(&mut root, user);
    let obj = root.as_object_mut().expect("objects merge into objects");
    if let Some(name) = preset {
        obj.insert("preset".into(), Value::String(name));
    }
    if let Some(t) = ov.t {
        obj.insert("t".into(), t.into());
    }
    if ov.with_mc {
        obj.insert("with_mc".into(), true.into());
    }
    let t = obj.get("t").cloned().unwrap_or_else(|| default_time().into());
    let mc = section(obj, "mc");
    if let Some(seed) = ov.seed {
        mc.insert("seed".into(), seed.into());
    }
    if let Some(n) = ov.paths {
        mc.insert("n_paths".into(), n.into());
    }
    mc.entry("horizon").or_insert(t);
    let out = section(obj, "output");
    if let Some(p) = &ov.output {
        out.insert("path".into(), Value::String(p.clone()));
    }
    if let Some(f) = ov.format {
        out.insert("format".into(), serde_json::to_value(f).expect("format serializes"));
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(root)
        .map_err(|e| CliError::Validation(format!("at `{}`: {}", e.path(), e.inner())))?;
    cfg.mc.validate().map_err(|e| CliError::Validation(format!("at `mc`: {e}")))?;
    if !(cfg.t > 0.0) || cfg.t > cfg.mc.horizon {
        return Err(CliError::Validation(format!("at `t`: {} must lie in (0, mc.horizon = {}]", cfg.t, cfg.mc.horizon)));
    }
    Ok(cfg)
}

fn field<T>(what: &str, v: Option<T>) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("missing `{what}` section")))
}

fn expr(path: &str, text: &str) -> Result<CoefficientExpr, CliError> {
    CoefficientExpr::parse(text).map_err(|e| CliError::Validation(format!("at `{path}`: {e}")))
}

impl RunConfig {
    pub fn diffusion(&self) -> Result<DiffusionSpec, CliError> {
        let s = field("spec", self.spec.as_ref())?;
        let drift = s
            .drift
            .to_vec()
            .iter()
            .enumerate()
            .map(|(i, d)| expr(&format!("spec.drift[{i}]"), d))
            .collect::<Result<Vec<_>, _>>()?;
        let dispersion = match &s.sigma {
            Dispersion::Scalar(v) => vec![vec![expr("spec.sigma", v)?]],
            Dispersion::Matrix(rows) => rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter().enumerate().map(|(j, v)| expr(&format!("spec.sigma[{i}][{j}]"), v)).collect()
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let intervals = s.interval.to_vec();
        let spec = DiffusionSpec::new(intervals, drift, dispersion, s.x0.to_vec())
            .map_err(|e| CliError::Validation(format!("at `spec`: {e}")))?;
        if let Some(claim) = s.homogeneous {
            spec.check_homogeneous_claim(claim).map_err(|e| CliError::Validation(format!("at `spec.homogeneous`: {e}")))?;
        }
        Ok(spec)
    }

    pub fn exponent(&self) -> Result<ExponentSpec, CliError> {
        let e = field("exponent", self.exponent.as_ref())?;
        let beta = e
            .beta
            .to_vec()
            .iter()
            .enumerate()
            .map(|(i, b)| expr(&format!("exponent.beta[{i}]"), b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExponentSpec::new(beta))
    }

    pub fn plan(&self) -> Result<LocalizationPlan, CliError> {
        field("plan", self.plan.clone())
    }

    pub fn triplet(&self) -> Result<JumpTriplet, CliError> {
        let base = self.diffusion()?;
        let tc = field("triplet", self.triplet.as_ref())?;
        JumpTriplet::new(base, tc.rate, tc.jumps.clone(), tc.atoms.clone())
            .map_err(|e| CliError::Validation(format!("at `triplet`: {e}")))
    }

    pub fn girsanov(&self) -> Result<GirsanovData, CliError> {
        let g = field("girsanov", self.girsanov.as_ref())?;
        Ok(GirsanovData::new(expr("girsanov.k", &g.k)?, expr("girsanov.u", &g.u)?))
    }

    pub fn covariance(&self) -> Result<CovarianceSpec, CliError> {
        field("covariance", self.covariance.clone())
    }

    pub fn functional(&self) -> Result<FunctionalSpec, CliError> {
        field("functional", self.functional.clone())
    }
}
