//! Named worked examples compiled into the binary.

use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Diffusion,
    Jump,
    Hilbert,
}

#[derive(Debug, Clone, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub kind: Kind,
    pub description: &'static str,
    pub config: Value,
}

fn diffusion(name: &'static str, description: &'static str, interval: Value, drift: &str, sigma: &str, x0: f64, beta: &str, levels: &[f64]) -> Preset {
    Preset {
        name,
        kind: Kind::Diffusion,
        description,
        config: json!({
            "spec": {"interval": interval, "drift": drift, "sigma": sigma, "x0": x0},
            "exponent": {"beta": beta},
            "plan": {"levels": levels, "caps": vec![2.0; levels.len()]},
        }),
    }
}

fn jump(name: &'static str, description: &'static str, triplet: Value, k: &str, u: &str) -> Preset {
    Preset {
        name,
        kind: Kind::Jump,
        description,
        config: json!({
            "spec": {"interval": [null, null], "drift": "0", "sigma": "1", "x0": 0.0},
            "triplet": triplet,
            "girsanov": {"k": k, "u": u},
            "plan": {"levels": [4.0, 8.0, 16.0, 32.0], "caps": [2.0, 2.0, 2.0, 2.0]},
        }),
    }
}

fn hilbert(name: &'static str, description: &'static str, eigenvalues: Vec<f64>) -> Preset {
    let modes = eigenvalues.len();
    let mut e = vec![0.0; modes];
    e[0] = 1.0;
    Preset {
        name,
        kind: Kind::Hilbert,
        description,
        config: json!({
            "covariance": {"eigenvalues": eigenvalues},
            "functional": {
                "kind": {"kind": "running_sup", "weights": e, "direction": e},
                "claimed_lipschitz": 1.0,
                "claimed_growth": 1.0,
            },
            "plan": {"levels": [4.0, 8.0, 16.0, 32.0], "caps": [2.0, 2.0, 2.0, 2.0]},
        }),
    }
}

const LEVELS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

pub fn presets() -> Vec<Preset> {
    let real = json!([null, null]);
    vec![
        diffusion("brownian-zero", "Brownian motion with beta = 0: Z is identically 1", real.clone(), "0", "1", 0.0, "0", &LEVELS),
        diffusion(
            "brownian-linear",
            "Brownian motion with beta(x) = x: a true martingale although Novikov's condition fails",
            real.clone(),
            "0",
            "1",
            0.0,
            "x",
            &LEVELS,
        ),
        diffusion(
            "brownian-cubic",
            "Brownian motion with beta(x) = x^3: the modified drift x^3 explodes, so Z is a strict local martingale",
            real.clone(),
            "0",
            "1",
            0.0,
            "x^3",
            &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
        ),
        diffusion(
            "ou-linear",
            "Ornstein-Uhlenbeck dX = -X dt + dW with beta(x) = x: the modified dynamics is Brownian motion",
            real,
            "-x",
            "1",
            0.0,
            "x",
            &LEVELS,
        ),
        diffusion(
            "cev-strict",
            "dX = X^2 dW on (0, inf) with beta = 1/x: Z = X is the inverse Bessel(3) strict local martingale",
            json!([0.0, null]),
            "0",
            "x^2",
            1.0,
            "1/x",
            &[1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
        ),
        jump(
            "poisson-U4",
            "Brownian motion plus symmetric compound-Poisson jumps at rate 1 with U = 4",
            json!({"rate": 1.0, "jumps": {"points": [-0.5, 0.5], "probs": [0.5, 0.5]}}),
            "0",
            "4",
        ),
        jump(
            "atom-mix",
            "Compound-Poisson jumps plus a fixed-time atom at t = 0.5 with a = 0.5 and Uhat = 0.75",
            json!({
                "rate": 0.5,
                "jumps": {"points": [1.0], "probs": [1.0]},
                "atoms": [{"time": 0.5, "mass": 0.5, "dist": {"points": [-1.0, 1.0], "probs": [0.5, 0.5]}}],
            }),
            "0.5",
            "1.5",
        ),
        jump("jump-linear", "No jumps, K(x) = x: the continuous degenerate case of the jump kit", json!({"rate": 0.0}), "x", "1"),
        jump("jump-cubic", "No jumps, K(x) = x^3: strict local martingale through the jump kit", json!({"rate": 0.0}), "x^3", "1"),
        hilbert("running-sup-1", "Z = E(W* . W) for scalar Brownian motion, W* the running sup", vec![1.0]),
        hilbert(
            "running-sup-16",
            "Running sup of the first of 16 modes with eigenvalues 2^-k",
            (1..=16).map(|k| 0.5f64.powi(k)).collect(),
        ),
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

pub fn names(kind: Kind) -> Vec<&'static str> {
    presets().into_iter().filter(|p| p.kind == kind).map(|p| p.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, Overrides};

    #[test]
    fn every_preset_resolves_and_builds() {
        for p in presets() {
            let cfg = resolve(None, &Overrides { preset: Some(p.name.into()), ..Default::default() }).unwrap();
            match p.kind {
                Kind::Diffusion => {
                    cfg.diffusion().unwrap();
                    cfg.exponent().unwrap();
                }
                Kind::Jump => {
                    let trip = cfg.triplet().unwrap();
                    martingality::jumpkit::validate(&trip, &cfg.girsanov().unwrap(), 1.0).unwrap();
                }
                Kind::Hilbert => {
                    cfg.functional().unwrap().validate(&cfg.covariance().unwrap()).unwrap();
                }
            }
            cfg.plan().unwrap();
        }
    }
}
