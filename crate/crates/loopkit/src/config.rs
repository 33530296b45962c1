//! Run-spec files: JSON descriptions of what each CLI command should
//! compute, kept separate from the model file. Each command reads its own
//! section; unrelated sections are ignored so one spec file can drive a
//! whole pipeline.

use crate::error::{Error, Result};
use crate::model::{BoxRegion, FiniteChainModel, Model, Point};
use crate::moments::{RegimeKind, TestFunction};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

/// A test function as written in a spec file.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// Values by state name (missing states default to zero); finite
    /// chains only.
    Finite { values: BTreeMap<String, f64> },
    /// Indicator of a box; euclidean models only.
    IndicatorBox {
        #[serde(rename = "box")]
        region: Vec<(f64, f64)>,
    },
    /// Truncated gaussian bump; euclidean models only.
    GaussianBump { center: Vec<f64>, width: f64, support: Vec<(f64, f64)> },
}

impl FunctionSpec {
    pub fn resolve(&self, model: &Model) -> Result<TestFunction> {
        match self {
            FunctionSpec::Finite { values } => {
                let chain = model.as_finite_chain()?;
                let mut v = vec![0.0; chain.len()];
                for (name, &val) in values {
                    v[chain.state_index(name)?] = val;
                }
                Ok(TestFunction::Finite(v))
            }
            FunctionSpec::IndicatorBox { region } => {
                let b = BoxRegion(region.clone());
                b.validate()?;
                Ok(TestFunction::IndicatorBox(b))
            }
            FunctionSpec::GaussianBump { center, width, support } => {
                let b = BoxRegion(support.clone());
                b.validate()?;
                if center.len() != b.dim() || !(*width > 0.0) {
                    return Err(Error::InvalidInput(
                        "gaussian bump needs a center of matching dimension and width > 0".into(),
                    ));
                }
                Ok(TestFunction::GaussianBump {
                    center: center.clone(),
                    width: *width,
                    support: b,
                })
            }
        }
    }
}

/// Root point: a state name on finite chains, coordinates on euclidean
/// models.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum RootSpec {
    State(String),
    Coord(Vec<f64>),
}

impl RootSpec {
    pub fn resolve(&self, model: &Model) -> Result<Point> {
        match self {
            RootSpec::State(name) => {
                Ok(Point::Id(model.as_finite_chain()?.state_index(name)?))
            }
            RootSpec::Coord(xs) => Ok(Point::coord(xs)),
        }
    }
}

/// Which moment formulas the `moments` command evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// Cyclic-class sum, the loop-measure moment.
    Mu,
    /// Single ordered cyclic product.
    OrderedMu,
    /// Full permutation sum with root integral (needs alpha > 0).
    Nu,
    /// Rooted moment at the spec root, ordered.
    QzzOrdered,
    /// Rooted moment at the spec root, full permutation sum.
    QzzFull,
}

fn default_alpha_zero() -> f64 {
    0.0
}

fn default_alpha_one() -> f64 {
    1.0
}

fn default_kinds() -> Vec<MomentKind> {
    vec![MomentKind::Mu]
}

fn default_regime() -> RegimeKind {
    RegimeKind::CyclicClasses
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub functions: Vec<FunctionSpec>,
    #[serde(default = "default_regime")]
    pub regime: RegimeKind,
    #[serde(default = "default_alpha_zero")]
    pub alpha: f64,
    #[serde(default)]
    pub root: Option<RootSpec>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<MomentKind>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub functions: Vec<FunctionSpec>,
    /// Killing rate of the companion-measure comparison (must be > 0).
    #[serde(default = "default_alpha_one")]
    pub alpha: f64,
}

fn default_n_list() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubordinationSection {
    pub functions: Vec<FunctionSpec>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<f64>,
    #[serde(default = "default_alpha_zero")]
    pub alpha: f64,
    /// One strictly positive staggering rate per function.
    pub alpha_js: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceSection {
    pub functions: Vec<FunctionSpec>,
    /// Strictly increasing positive evaluation times, one per function.
    pub times: Vec<f64>,
    /// Rotation offset.
    pub r: f64,
    /// When set, evaluate the deliberately broken rotation that wraps with
    /// this factor times the lifetime instead of the lifetime itself.
    #[serde(default)]
    pub broken_factor: Option<f64>,
}

fn default_check_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "default_check_tol")]
    pub tolerance: f64,
}

impl CheckSection {
    pub fn tolerance_or_default(&self) -> f64 {
        if self.tolerance > 0.0 {
            self.tolerance
        } else {
            default_check_tol()
        }
    }
}

/// Parsed spec file. Every section is optional; commands error if their
/// section is missing (except `check`, which has usable defaults).
#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(default)]
    pub check: Option<CheckSection>,
    #[serde(default)]
    pub moments: Option<MomentsSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub subordination: Option<SubordinationSection>,
    #[serde(default)]
    pub invariance: Option<InvarianceSection>,
}

pub fn parse_spec(json: &str) -> Result<SpecFile> {
    Ok(serde_json::from_str(json)?)
}

pub fn load_spec(path: &Path) -> Result<SpecFile> {
    parse_spec(&std::fs::read_to_string(path)?)
}

/// Resolve a list of function specs into per-state value vectors (finite
/// chains only).
pub fn resolve_finite_functions(
    chain: &FiniteChainModel,
    specs: &[FunctionSpec],
) -> Result<Vec<Vec<f64>>> {
    let model = Model::FiniteChain(chain.clone());
    specs
        .iter()
        .map(|s| match s.resolve(&model)? {
            TestFunction::Finite(v) => Ok(v),
            _ => Err(Error::InvalidInput(
                "this command needs finite-state test functions".into(),
            )),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FiniteChainModel;

    fn two_state() -> Model {
        Model::FiniteChain(
            FiniteChainModel::build(
                vec!["a".into(), "b".into()],
                vec![1.0, 1.0],
                &[(0, 1, 1.0), (1, 0, 1.0)],
                vec![1.0, 1.0],
            )
            .unwrap(),
        )
    }

    #[test]
    fn full_spec_parses() {
        let json = r#"{
            "check": {"tolerance": 1e-9},
            "moments": {
                "functions": [
                    {"type": "finite", "values": {"a": 1.0}},
                    {"type": "finite", "values": {"b": 1.0}}
                ],
                "regime": "cyclic_classes",
                "kinds": ["mu", "ordered_mu"]
            },
            "simulate": {
                "functions": [{"type": "finite", "values": {"a": 1.0}}],
                "alpha": 1.0
            },
            "subordination": {
                "functions": [{"type": "finite", "values": {"a": 1.0}}],
                "alpha_js": [0.5]
            },
            "invariance": {
                "functions": [{"type": "finite", "values": {"a": 1.0}}],
                "times": [0.25],
                "r": 0.37
            }
        }"#;
        let spec = parse_spec(json).unwrap();
        let m = spec.moments.unwrap();
        assert_eq!(m.kinds, vec![MomentKind::Mu, MomentKind::OrderedMu]);
        assert_eq!(m.alpha, 0.0);
        assert_eq!(spec.subordination.unwrap().n_list.len(), 9);
        assert_eq!(spec.invariance.unwrap().r, 0.37);
        assert_eq!(spec.check.unwrap().tolerance, 1e-9);
    }

    #[test]
    fn function_resolution() {
        let model = two_state();
        let f = FunctionSpec::Finite { values: BTreeMap::from([("b".into(), 2.0)]) };
        match f.resolve(&model).unwrap() {
            TestFunction::Finite(v) => assert_eq!(v, vec![0.0, 2.0]),
            _ => panic!("wrong variant"),
        }
        let unknown = FunctionSpec::Finite { values: BTreeMap::from([("zz".into(), 1.0)]) };
        assert!(unknown.resolve(&model).is_err());
        let boxy = FunctionSpec::IndicatorBox { region: vec![(0.0, 1.0)] };
        assert!(matches!(boxy.resolve(&model).unwrap(), TestFunction::IndicatorBox(_)));
    }

    #[test]
    fn root_resolution() {
        let model = two_state();
        let r = RootSpec::State("b".into());
        assert_eq!(r.resolve(&model).unwrap(), Point::Id(1));
        let c = RootSpec::Coord(vec![0.5]);
        assert!(matches!(c.resolve(&model).unwrap(), Point::Coord(_)));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(parse_spec(r#"{"momentz": {}}"#).is_err());
        assert!(parse_spec(r#"{"moments": {"functions": [], "bogus": 1}}"#).is_err());
    }

    #[test]
    fn empty_spec_is_valid() {
        let spec = parse_spec("{}").unwrap();
        assert!(spec.moments.is_none());
    }
}
