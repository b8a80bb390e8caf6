//! Browser bindings: each export takes a JSON model description and returns a
//! JSON result string.

use martingality::feller::martingale_verdict;
use martingality::mc::{doubling_ladder, estimate_deficit, ladder_slope, novikov_samples, DeficitOptions, MCEstimate, SimConfig};
use martingality::{DiffusionSpec, ExponentSpec, Interval, LocalizationPlan};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// A one-dimensional model with its exponent and Monte Carlo settings.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoInput {
    pub interval: Interval,
    pub drift: String,
    pub sigma: String,
    pub x0: f64,
    pub beta: String,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
}

fn default_t() -> f64 {
    1.0
}

fn default_paths() -> usize {
    2000
}

fn default_seed() -> u64 {
    2024
}

fn default_levels() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
}

impl DemoInput {
    fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid input: {e}"))
    }

    fn spec(&self) -> Result<DiffusionSpec, String> {
        DiffusionSpec::parse_1d(self.interval, &self.drift, &self.sigma, self.x0).map_err(|e| e.to_string())
    }

    fn exponent(&self) -> Result<ExponentSpec, String> {
        ExponentSpec::parse_1d(&self.beta).map_err(|e| e.to_string())
    }

    fn sim(&self) -> SimConfig {
        SimConfig { n_paths: self.paths, horizon: self.t, seed: self.seed, ..SimConfig::default() }
    }

    fn plan(&self) -> Result<LocalizationPlan, String> {
        let cap = self.t + 1.0;
        LocalizationPlan::new(self.levels.clone(), vec![cap; self.levels.len()]).map_err(|e| e.to_string())
    }
}

pub fn classify_json(input: &str) -> Result<Value, String> {
    let d = DemoInput::parse(input)?;
    let verdict = martingale_verdict(&d.spec()?, &d.exponent()?).map_err(|e| e.to_string())?;
    serde_json::to_value(verdict).map_err(|e| e.to_string())
}

pub fn deficit_json(input: &str) -> Result<Value, String> {
    let d = DemoInput::parse(input)?;
    let opts = DeficitOptions { allow_unconverged: true };
    let curve = estimate_deficit(&d.spec()?, &d.exponent()?, &d.plan()?, d.t, &d.sim(), opts).map_err(|e| e.to_string())?;
    Ok(json!({ "deficit": curve.deficit(), "curve": curve }))
}

pub fn novikov_json(input: &str) -> Result<Value, String> {
    let d = DemoInput::parse(input)?;
    let samples = novikov_samples(&d.spec()?, &d.exponent()?, d.t, &d.sim()).map_err(|e| e.to_string())?;
    let est = MCEstimate::from_samples(&samples);
    let ladder = doubling_ladder(&samples, (samples.len() / 256).max(1));
    Ok(json!({
        "estimate": est,
        "ladder_slope": ladder_slope(&ladder),
        "ladder": ladder.iter().map(|&(n, m)| json!({ "n": n, "mean": m })).collect::<Vec<_>>(),
    }))
}

fn export(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

/// Feller-test verdict for the model.
#[wasm_bindgen]
pub fn classify(input: &str) -> Result<String, JsValue> {
    export(classify_json(input))
}

/// Localized survival curve and deficit `1 - E[Z_t]`.
#[wasm_bindgen]
pub fn deficit(input: &str) -> Result<String, JsValue> {
    export(deficit_json(input))
}

/// Novikov functional with its doubling ladder of running means.
#[wasm_bindgen]
pub fn novikov(input: &str) -> Result<String, JsValue> {
    export(novikov_json(input))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBIC: &str = r#"{"interval":[null,null],"drift":"0","sigma":"1","x0":0,"beta":"x^3","paths":200}"#;

    #[test]
    fn cubic_is_strict_local() {
        let v = classify_json(CUBIC).unwrap();
        assert_eq!(v["classification"], "StrictLocal");
    }

    #[test]
    fn zero_exponent_has_no_deficit() {
        let input = r#"{"interval":[null,null],"drift":"0","sigma":"1","x0":0,"beta":"0","paths":50}"#;
        let v = deficit_json(input).unwrap();
        assert_eq!(v["deficit"], 0.0);
    }

    #[test]
    fn novikov_ladder_ends_at_sample_size() {
        let v = novikov_json(CUBIC).unwrap();
        assert_eq!(v["ladder"].as_array().unwrap().last().unwrap()["n"], 200);
    }

    #[test]
    fn bad_input_reports_the_field() {
        let err = classify_json(r#"{"interval":[null,null],"drift":"0","sigma":"1","x0":0}"#).unwrap_err();
        assert!(err.contains("beta"), "{err}");
    }
}
