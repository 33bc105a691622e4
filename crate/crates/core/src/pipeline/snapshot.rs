use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::CriterionGateDay;
use crate::fasl::{episode, DailyLikelihood, LoadedParameters, CORE_CRITERIA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionStatus {
    pub criterion: u8,
    pub label: String,
    pub core: bool,
    pub likelihood: Option<f64>,
    pub present: bool,
    pub positives: u32,
    pub observed: u32,
    /// Mean of the non-missing likelihoods in the gate window ending on the
    /// snapshot date.
    pub mean_likelihood: Option<f64>,
}

/// Indicator state of one user on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSnapshot {
    pub user_id: String,
    pub dataset: String,
    pub config_hash: String,
    pub date: Option<NaiveDate>,
    pub criteria: Vec<CriterionStatus>,
    pub elevated: usize,
    pub core_active: bool,
    pub episode: bool,
}

/// Builds the snapshot for `as_of` from already computed likelihoods and
/// gate states. `None` gives the empty snapshot.
pub fn snapshot_at(
    user: &str,
    dataset: &str,
    params: &LoadedParameters,
    likelihoods: &[DailyLikelihood],
    gates: &[CriterionGateDay],
    as_of: Option<NaiveDate>,
) -> IndicatorSnapshot {
    let mut snap = IndicatorSnapshot {
        user_id: user.to_string(),
        dataset: dataset.to_string(),
        config_hash: params.config_hash.clone(),
        date: as_of,
        criteria: Vec::new(),
        elevated: 0,
        core_active: false,
        episode: false,
    };
    let Some(as_of) = as_of else {
        return snap;
    };
    let gate = &params.parameters.gate;
    let window_start = as_of - Duration::days(gate.m as i64 - 1);
    let mut presence = BTreeMap::new();
    for crit in &params.parameters.criteria {
        let k = crit.criterion_id;
        let today = gates.iter().find(|g| g.criterion == k && g.day.date == as_of);
        let in_window: Vec<f64> = likelihoods
            .iter()
            .filter(|l| l.criterion == k && l.date >= window_start && l.date <= as_of)
            .filter_map(|l| l.likelihood)
            .collect();
        let mean = (!in_window.is_empty()).then(|| in_window.iter().sum::<f64>() / in_window.len() as f64);
        let present = today.is_some_and(|g| g.day.present);
        presence.insert(k, present);
        snap.criteria.push(CriterionStatus {
            criterion: k,
            label: crit.label.clone(),
            core: crit.core,
            likelihood: today.and_then(|g| g.day.likelihood),
            present,
            positives: today.map_or(0, |g| g.day.positives),
            observed: today.map_or(0, |g| g.day.observed),
            mean_likelihood: mean,
        });
    }
    snap.elevated = presence.values().filter(|p| **p).count();
    snap.core_active = CORE_CRITERIA.iter().any(|k| presence.get(k).copied().unwrap_or(false));
    snap.episode = episode(&presence);
    snap
}
