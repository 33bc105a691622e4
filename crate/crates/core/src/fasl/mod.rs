//! Fuzzy additive criterion likelihoods, the persistence gate and the
//! episode rule.

mod component;
mod criterion;
mod episode;
mod gate;
mod membership;
pub mod params;

pub use component::{component_evidence, ComponentSpec, FeatureSpec, Sign};
pub use criterion::{
    criterion_likelihood, likelihood_from_memberships, memberships, score_day, CriterionConfig,
    DailyLikelihood, Mode,
};
pub use episode::{episode, CORE_CRITERIA, EPISODE_MIN_CRITERIA};
pub use gate::{gate, gate_series, indicator, GateConfig, GateDay, GateWindow};
pub use membership::{tri_membership, MfProblem, TriangularMF};
pub use params::{
    config_hash, load_parameters, shipped, validate, LoadedParameters, ParameterSet,
    ValidationError,
};
