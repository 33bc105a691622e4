use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::membership::TriangularMF;

/// Orientation of a feature: `+1` when a higher membership is evidence for
/// the criterion, `-1` when it is evidence against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Pro,
    Contra,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pro => 1.0,
            Sign::Contra => -1.0,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;
    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Sign::Pro),
            -1 => Ok(Sign::Contra),
            other => Err(format!("sign must be 1 or -1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Pro => 1,
            Sign::Contra => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub weight: f64,
    pub sign: Sign,
    pub mf: TriangularMF,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub features: Vec<FeatureSpec>,
    pub v_weight: f64,
}

/// Signed evidence of one component in `[-1, 1]`, with weights renormalised
/// over the features that have a membership. All missing gives `None`.
pub fn component_evidence(memberships: &BTreeMap<String, f64>, spec: &ComponentSpec) -> Option<f64> {
    let present: Vec<(&FeatureSpec, f64)> = spec
        .features
        .iter()
        .filter_map(|f| memberships.get(&f.name).map(|mu| (f, *mu)))
        .collect();
    let total: f64 = present.iter().map(|(f, _)| f.weight).sum();
    if present.is_empty() || total <= 0.0 {
        return None;
    }
    let s: f64 = present
        .iter()
        .map(|(f, mu)| f.weight / total * f.sign.value() * mu)
        .sum();
    Some(s.clamp(-1.0, 1.0))
}
