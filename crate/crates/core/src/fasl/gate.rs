use std::collections::VecDeque;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// Window length in calendar days.
    #[serde(rename = "M")]
    pub m: u32,
    /// Positive days required within the window.
    #[serde(rename = "N")]
    pub n: u32,
    pub theta: f64,
    pub tau: u32,
    pub validity_threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            m: 14,
            n: 6,
            theta: 0.6,
            tau: 1,
            validity_threshold: 0.5,
        }
    }
}

/// Daily indicator: `None` for a missing day.
pub fn indicator(likelihood: Option<f64>, theta: f64) -> Option<bool> {
    likelihood.map(|l| l >= theta)
}

/// Running positive/observed counts over the last `m` calendar days.
#[derive(Debug, Clone)]
pub struct GateWindow {
    m: u32,
    n: u32,
    theta: f64,
    days: VecDeque<(NaiveDate, bool)>,
    positives: u32,
}

impl GateWindow {
    pub fn new(cfg: &GateConfig) -> Self {
        GateWindow {
            m: cfg.m,
            n: cfg.n,
            theta: cfg.theta,
            days: VecDeque::new(),
            positives: 0,
        }
    }

    /// Adds a day; dates must be strictly increasing.
    pub fn push(&mut self, date: NaiveDate, likelihood: Option<f64>) {
        self.advance_to(date);
        if let Some(positive) = indicator(likelihood, self.theta) {
            debug_assert!(self.days.back().is_none_or(|(d, _)| *d < date));
            self.days.push_back((date, positive));
            self.positives += positive as u32;
        }
    }

    /// Drops days that fall outside the window ending at `today`.
    pub fn advance_to(&mut self, today: NaiveDate) {
        let oldest = today - Duration::days(self.m as i64 - 1);
        while let Some((d, positive)) = self.days.front().copied() {
            if d >= oldest {
                break;
            }
            self.days.pop_front();
            self.positives -= positive as u32;
        }
    }

    pub fn positives(&self) -> u32 {
        self.positives
    }

    pub fn observed(&self) -> u32 {
        self.days.len() as u32
    }

    pub fn present(&self) -> bool {
        self.positives >= self.n
    }
}

/// Presence as of `t` for a date-ordered series of likelihoods.
pub fn gate(series: &[(NaiveDate, Option<f64>)], cfg: &GateConfig, t: NaiveDate) -> bool {
    let mut window = GateWindow::new(cfg);
    for (d, l) in series.iter().take_while(|(d, _)| *d <= t) {
        window.push(*d, *l);
    }
    window.advance_to(t);
    window.present()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDay {
    pub date: NaiveDate,
    pub likelihood: Option<f64>,
    pub indicator: Option<bool>,
    pub positives: u32,
    pub observed: u32,
    pub present: bool,
}

/// Gate state on every day of a date-ordered series.
pub fn gate_series(series: &[(NaiveDate, Option<f64>)], cfg: &GateConfig) -> Vec<GateDay> {
    let mut window = GateWindow::new(cfg);
    series
        .iter()
        .map(|(date, l)| {
            window.push(*date, *l);
            GateDay {
                date: *date,
                likelihood: *l,
                indicator: indicator(*l, cfg.theta),
                positives: window.positives(),
                observed: window.observed(),
                present: window.present(),
            }
        })
        .collect()
}
