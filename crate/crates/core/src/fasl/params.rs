//! The parameter registry document: criteria, gate settings, validation
//! and load-time normalisation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::criterion::{CriterionConfig, Mode};
use super::episode::CORE_CRITERIA;
use super::gate::GateConfig;
use crate::features::IMPLEMENTED_FEATURES;

pub const PARAMETERS_FILE: &str = "parameters.json";
pub const SHIPPED_PARAMETERS: &str = include_str!("../../config/parameters.json");

const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub gate: GateConfig,
    pub criteria: Vec<CriterionConfig>,
}

fn default_version() -> u32 {
    1
}

impl ParameterSet {
    pub fn criterion(&self, id: u8) -> Option<&CriterionConfig> {
        self.criteria.iter().find(|c| c.criterion_id == id)
    }
}

/// A rejected document, with the offending field as a dotted path such as
/// `criteria[0].components[0].features[2].mf.lo`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ValidationError {}

fn reject(field: impl Into<String>, message: impl Into<String>) -> ValidationError {
    ValidationError {
        field: field.into(),
        message: message.into(),
    }
}

/// A validated, normalised parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedParameters {
    pub parameters: ParameterSet,
    pub warnings: Vec<String>,
    pub config_hash: String,
}

pub fn load_parameters(document: &str) -> Result<LoadedParameters, ValidationError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let set: ParameterSet = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { String::new() } else { field };
        reject(field, e.into_inner().to_string())
    })?;
    validate(set)
}

pub fn shipped() -> LoadedParameters {
    load_parameters(SHIPPED_PARAMETERS).expect("shipped parameters are valid")
}

/// Sha-256 over the canonical serialisation, first 16 hex digits.
pub fn config_hash(set: &ParameterSet) -> String {
    let bytes = serde_json::to_vec(set).expect("parameter sets serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Checks every invariant and rescales weights that do not sum to one.
pub fn validate(mut set: ParameterSet) -> Result<LoadedParameters, ValidationError> {
    let mut warnings = Vec::new();
    check_gate(&set.gate)?;

    let mut seen_ids = BTreeSet::new();
    for (ci, crit) in set.criteria.iter_mut().enumerate() {
        let at = format!("criteria[{ci}]");
        if !(1..=9).contains(&crit.criterion_id) {
            return Err(reject(format!("{at}.criterion_id"), "must be between 1 and 9"));
        }
        if !seen_ids.insert(crit.criterion_id) {
            return Err(reject(
                format!("{at}.criterion_id"),
                format!("criterion {} is configured twice", crit.criterion_id),
            ));
        }
        if crit.core != CORE_CRITERIA.contains(&crit.criterion_id) {
            return Err(reject(
                format!("{at}.core"),
                "only criteria 1 and 2 are core",
            ));
        }
        if crit.components.is_empty() {
            return Err(reject(format!("{at}.components"), "at least one component is required"));
        }
        if crit.mode == Mode::Direct {
            if crit.components.len() != 1 {
                return Err(reject(
                    format!("{at}.components"),
                    "DIRECT mode takes exactly one component",
                ));
            }
            if let Some(fi) = crit.components[0]
                .features
                .iter()
                .position(|f| f.sign.value() < 0.0)
            {
                return Err(reject(
                    format!("{at}.components[0].features[{fi}].sign"),
                    "DIRECT mode requires every sign to be +1",
                ));
            }
        }

        let mut names = BTreeSet::new();
        for (bi, comp) in crit.components.iter_mut().enumerate() {
            let at = format!("{at}.components[{bi}]");
            if !(comp.v_weight.is_finite() && comp.v_weight > 0.0) {
                return Err(reject(format!("{at}.v_weight"), "must be finite and positive"));
            }
            if comp.features.is_empty() {
                return Err(reject(format!("{at}.features"), "at least one feature is required"));
            }
            for (fi, f) in comp.features.iter().enumerate() {
                let at = format!("{at}.features[{fi}]");
                if f.name.trim().is_empty() {
                    return Err(reject(format!("{at}.name"), "must not be empty"));
                }
                if !names.insert(f.name.clone()) {
                    return Err(reject(format!("{at}.name"), format!("{} appears twice", f.name)));
                }
                if !(f.weight.is_finite() && f.weight > 0.0) {
                    return Err(reject(format!("{at}.weight"), "must be finite and positive"));
                }
                if let Err(p) = f.mf.check() {
                    return Err(reject(format!("{at}.mf.{}", p.field()), p.message()));
                }
                if !IMPLEMENTED_FEATURES.contains(&f.name.as_str()) {
                    warnings.push(format!(
                        "{at}.name: {} has no extractor and will always be missing",
                        f.name
                    ));
                }
            }
            let sum: f64 = comp.features.iter().map(|f| f.weight).sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                warnings.push(format!(
                    "{at}.features: weights sum to {sum}, normalised to 1"
                ));
                for f in comp.features.iter_mut() {
                    f.weight /= sum;
                }
            }
        }
        let v_sum: f64 = crit.components.iter().map(|c| c.v_weight).sum();
        if (v_sum - 1.0).abs() > SUM_TOLERANCE {
            warnings.push(format!(
                "{at}.components: v_weights sum to {v_sum}, normalised to 1"
            ));
            for c in crit.components.iter_mut() {
                c.v_weight /= v_sum;
            }
        }
    }
    set.criteria.sort_by_key(|c| c.criterion_id);
    for w in &warnings {
        tracing::warn!("{w}");
    }
    let config_hash = config_hash(&set);
    Ok(LoadedParameters {
        parameters: set,
        warnings,
        config_hash,
    })
}

fn check_gate(g: &GateConfig) -> Result<(), ValidationError> {
    if g.m == 0 {
        return Err(reject("gate.M", "must be at least 1"));
    }
    if g.n == 0 || g.n > g.m {
        return Err(reject("gate.N", "must satisfy 1 <= N <= M"));
    }
    if !(g.theta > 0.0 && g.theta < 1.0) {
        return Err(reject("gate.theta", "must lie strictly between 0 and 1"));
    }
    if g.tau == 0 {
        return Err(reject("gate.tau", "must be at least 1"));
    }
    if !(g.validity_threshold > 0.0 && g.validity_threshold <= 1.0) {
        return Err(reject("gate.validity_threshold", "must lie in (0, 1]"));
    }
    Ok(())
}
