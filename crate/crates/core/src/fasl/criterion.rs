use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::component::{component_evidence, ComponentSpec};
use super::membership::tri_membership;
use crate::features::DailyFeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    /// `L = Σ w μ` over one all-positive component.
    Direct,
    /// `L = Σ v ½(S + 1)` over signed components.
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub criterion_id: u8,
    #[serde(default)]
    pub label: String,
    pub mode: Mode,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub core: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl CriterionConfig {
    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.components
            .iter()
            .flat_map(|c| c.features.iter().map(|f| f.name.as_str()))
    }
}

/// Membership of every configured feature present on the day.
pub fn memberships(day: &DailyFeatureVector, config: &CriterionConfig) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for f in config.components.iter().flat_map(|c| &c.features) {
        if let Some(mu) = day.get(&f.name).and_then(|x| tri_membership(x, &f.mf)) {
            out.insert(f.name.clone(), mu);
        }
    }
    out
}

/// Likelihood from already computed memberships; `None` when fewer than
/// `tau` features are present.
pub fn likelihood_from_memberships(
    mus: &BTreeMap<String, f64>,
    config: &CriterionConfig,
    tau: u32,
) -> Option<f64> {
    let present = config.feature_names().filter(|n| mus.contains_key(*n)).count();
    if present < tau.max(1) as usize {
        return None;
    }
    match config.mode {
        Mode::Direct => {
            let component = config.components.first()?;
            component_evidence(mus, component).map(|s| s.clamp(0.0, 1.0))
        }
        Mode::Signed => {
            let parts: Vec<(f64, f64)> = config
                .components
                .iter()
                .filter_map(|c| component_evidence(mus, c).map(|s| (c.v_weight, s)))
                .collect();
            let total: f64 = parts.iter().map(|(v, _)| v).sum();
            if total <= 0.0 {
                return None;
            }
            let l: f64 = parts.iter().map(|(v, s)| v / total * 0.5 * (s + 1.0)).sum();
            Some(l.clamp(0.0, 1.0))
        }
    }
}

/// Criterion likelihood for one day. Invalid days are missing.
pub fn criterion_likelihood(
    day: &DailyFeatureVector,
    config: &CriterionConfig,
    tau: u32,
) -> Option<f64> {
    if !day.valid {
        return None;
    }
    likelihood_from_memberships(&memberships(day, config), config, tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyLikelihood {
    pub user_id: String,
    pub date: NaiveDate,
    pub criterion: u8,
    pub likelihood: Option<f64>,
    pub valid: bool,
    pub memberships: BTreeMap<String, f64>,
}

/// Scores one day, re-deriving validity from the stored coverage so a
/// changed threshold takes effect without recomputing features.
pub fn score_day(
    day: &DailyFeatureVector,
    config: &CriterionConfig,
    tau: u32,
    validity_threshold: f64,
) -> DailyLikelihood {
    let valid = day.coverage >= validity_threshold;
    let mus = memberships(day, config);
    let likelihood = if valid {
        likelihood_from_memberships(&mus, config, tau)
    } else {
        None
    };
    DailyLikelihood {
        user_id: day.user_id.clone(),
        date: day.date,
        criterion: config.criterion_id,
        likelihood,
        valid,
        memberships: mus,
    }
}
