//! Router-side behavioral indicator pipeline: capture parsing, daily
//! features, fuzzy criterion likelihoods and persistence gating.

pub mod clock;
pub mod fasl;
pub mod features;
pub mod identity;
pub mod ingest;
pub mod pipeline;
pub mod synth;

pub use clock::{Clock, Micros};
