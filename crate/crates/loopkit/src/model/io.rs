//! Model definition files (JSON).
//!
//! ```json
//! {"type":"finite_chain","states":["a","b"],"m":{"a":1,"b":1},
//!  "rates":[["a","b",1.0],["b","a",1.0]],"kill":{"a":1,"b":1}}
//! {"type":"killed_bm","dim":3,"kappa":1.0,"box":[[-1,1],[-1,1],[-1,1]]}
//! ```
//!
//! A finite-chain file may also carry named Revuz measures:
//! `"revuz":[{"name":"nu","atoms":{"a":1.0}}, {"name":"gm","density":{"a":0.5,"b":0.5}}]`.

use super::{BoxRegion, FiniteChainModel, KilledBrownianModel, Model};
use crate::error::{Error, Result};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Deserialize, Debug)]
#[serde(tag = "type")]
enum ModelFile {
    #[serde(rename = "finite_chain")]
    FiniteChain {
        states: Vec<String>,
        m: BTreeMap<String, f64>,
        rates: Vec<(String, String, f64)>,
        #[serde(default)]
        kill: BTreeMap<String, f64>,
        #[serde(default)]
        revuz: Vec<RevuzEntry>,
    },
    #[serde(rename = "killed_bm")]
    KilledBm {
        dim: usize,
        kappa: f64,
        #[serde(rename = "box")]
        quad_box: Vec<(f64, f64)>,
    },
}

#[derive(Deserialize, Debug, Clone)]
pub struct RevuzEntry {
    pub name: String,
    #[serde(default)]
    pub atoms: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub density: Option<BTreeMap<String, f64>>,
}

/// A parsed model plus any named Revuz measures declared alongside it.
pub struct ModelBundle {
    pub model: Model,
    pub revuz: Vec<RevuzEntry>,
}

pub fn parse_model(json: &str) -> Result<ModelBundle> {
    let file: ModelFile = serde_json::from_str(json)?;
    match file {
        ModelFile::FiniteChain { states, m, rates, kill, revuz } => {
            let lookup = |name: &str| -> Result<usize> {
                states
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown state {name:?}")))
            };
            let mut weights = Vec::with_capacity(states.len());
            for s in &states {
                weights.push(*m.get(s).ok_or_else(|| {
                    Error::InvalidInput(format!("missing measure weight for state {s:?}"))
                })?);
            }
            let kill_vec: Vec<f64> =
                states.iter().map(|s| kill.get(s).copied().unwrap_or(0.0)).collect();
            let mut triples = Vec::with_capacity(rates.len());
            for (x, y, q) in &rates {
                triples.push((lookup(x)?, lookup(y)?, *q));
            }
            let chain = FiniteChainModel::build(states, weights, &triples, kill_vec)?;
            Ok(ModelBundle { model: Model::FiniteChain(chain), revuz })
        }
        ModelFile::KilledBm { dim, kappa, quad_box } => {
            let bm = KilledBrownianModel::new(dim, kappa, BoxRegion(quad_box))?;
            Ok(ModelBundle { model: Model::KilledBm(bm), revuz: Vec::new() })
        }
    }
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    parse_model(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_finite_chain_file() {
        let json = r#"{"type":"finite_chain","states":["a","b"],
            "m":{"a":1.0,"b":1.0},
            "rates":[["a","b",1.0],["b","a",1.0]],
            "kill":{"a":1.0,"b":1.0},
            "revuz":[{"name":"nu","atoms":{"a":1.0}}]}"#;
        let bundle = parse_model(json).unwrap();
        let chain = bundle.model.as_finite_chain().unwrap();
        assert_eq!(chain.len(), 2);
        assert!((chain.potential(0.0, 0, 1).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(bundle.revuz.len(), 1);
    }

    #[test]
    fn parse_killed_bm_file() {
        let json = r#"{"type":"killed_bm","dim":3,"kappa":1.0,
            "box":[[-1.0,1.0],[-1.0,1.0],[-1.0,1.0]]}"#;
        let bundle = parse_model(json).unwrap();
        assert!(bundle.model.diagonal_infinite());
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        assert!(parse_model("{\"type\":\"nope\"}").is_err());
        // non-transient content parses but fails model validation
        let json = r#"{"type":"finite_chain","states":["a"],
            "m":{"a":1.0},"rates":[],"kill":{"a":0.0}}"#;
        assert!(matches!(parse_model(json), Err(Error::NonTransient)));
    }
}
