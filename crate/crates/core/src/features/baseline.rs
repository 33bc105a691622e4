use std::collections::VecDeque;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub const BASELINE_DAYS: u32 = 30;
pub const BASELINE_MIN_DAYS: usize = 7;

/// Personal baseline of one feature: values from valid days within the
/// trailing `span_days` calendar days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineWindow {
    pub feature_name: String,
    pub user_id: String,
    pub span_days: u32,
    pub min_days: usize,
    history: VecDeque<(NaiveDate, f64)>,
}

impl BaselineWindow {
    pub fn new(feature_name: impl Into<String>, user_id: impl Into<String>) -> Self {
        BaselineWindow {
            feature_name: feature_name.into(),
            user_id: user_id.into(),
            span_days: BASELINE_DAYS,
            min_days: BASELINE_MIN_DAYS,
            history: VecDeque::new(),
        }
    }

    pub fn with_values(mut self, values: impl IntoIterator<Item = (NaiveDate, f64)>) -> Self {
        for (d, v) in values {
            self.push(d, v);
        }
        self
    }

    /// Records the value of a valid day. Days must arrive in date order.
    pub fn push(&mut self, date: NaiveDate, value: f64) {
        debug_assert!(self.history.back().is_none_or(|(d, _)| *d < date));
        if value.is_finite() {
            self.history.push_back((date, value));
        }
    }

    /// Drops entries that fall outside the window ending the day before `today`.
    pub fn advance_to(&mut self, today: NaiveDate) {
        let oldest = today - chrono::Duration::days(self.span_days as i64);
        while matches!(self.history.front(), Some((d, _)) if *d < oldest) {
            self.history.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().map(|(_, v)| *v)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.history.is_empty() {
            return None;
        }
        Some(self.values().sum::<f64>() / self.len() as f64)
    }

    /// Sample standard deviation (n − 1 denominator).
    pub fn std(&self) -> Option<f64> {
        let n = self.len();
        if n < 2 {
            return None;
        }
        let mean = self.mean()?;
        let ss: f64 = self.values().map(|v| (v - mean).powi(2)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    }
}

/// Deviation of `value` from the baseline in standard deviations; `None` when
/// the baseline has fewer than `min_days` entries. A flat baseline yields 0.
pub fn rolling_z(value: f64, baseline: &BaselineWindow) -> Option<f64> {
    if baseline.len() < baseline.min_days || !value.is_finite() {
        return None;
    }
    let mean = baseline.mean()?;
    let std = baseline.std()?;
    if std == 0.0 {
        return Some(0.0);
    }
    Some((value - mean) / std)
}
