use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use super::baseline::{BaselineWindow, BASELINE_DAYS};
use super::{
    compute_c4, compute_c8, day_validity, DailyFeatureVector, DayWindows, FeatureConfig,
};
use crate::clock::Clock;
use crate::ingest::WindowSummary;

/// Per-user days, keyed by user then local date.
pub type UserDays = BTreeMap<String, BTreeMap<NaiveDate, DayWindows>>;

#[derive(Debug, Clone)]
pub struct FeatureEngine {
    pub clock: Clock,
    pub config: FeatureConfig,
    /// Coverage a day needs to count as valid and feed the baseline.
    pub validity_threshold: f64,
}

impl FeatureEngine {
    pub fn new(clock: Clock, config: FeatureConfig, validity_threshold: f64) -> Self {
        FeatureEngine {
            clock,
            config,
            validity_threshold,
        }
    }

    pub fn group(&self, summaries: impl IntoIterator<Item = WindowSummary>) -> UserDays {
        let mut out: UserDays = BTreeMap::new();
        for s in summaries {
            let date = self.clock.local_date(s.window_start);
            let idx = self.clock.window_index(s.window_start);
            out.entry(s.user_id.clone())
                .or_default()
                .entry(date)
                .or_insert_with(|| DayWindows::new(date, self.clock.delta_secs()))
                .insert(idx, s);
        }
        out
    }

    /// Feature vectors for every date in `[from, to]`. Days before `from`
    /// only seed the baseline; they need to be present in `days` for the
    /// z-feature to be available on the first requested dates.
    pub fn compute_user(
        &self,
        user_id: &str,
        days: &BTreeMap<NaiveDate, DayWindows>,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Vec<DailyFeatureVector> {
        let mut out = Vec::new();
        if from > to {
            return out;
        }
        let mut baseline = BaselineWindow::new(super::SLEEP_DURATION_Z_ABS_30D, user_id);
        let empty = DayWindows::new(from, self.clock.delta_secs());
        let mut date = from - Duration::days(BASELINE_DAYS as i64);
        while date <= to {
            baseline.advance_to(date);
            let day = days.get(&date);
            let prev = days.get(&(date - Duration::days(1)));
            let day_ref = match day {
                Some(d) => d,
                None if date >= from => &empty,
                None => {
                    date += Duration::days(1);
                    continue;
                }
            };
            let (valid, coverage) = day_validity(day_ref, self.validity_threshold);
            let c4 = compute_c4(day_ref, prev, &baseline, &self.config);
            if date >= from {
                let c8 = compute_c8(day_ref, &self.config);
                let mut values = BTreeMap::new();
                let mut put = |name: &str, v: Option<f64>| {
                    if let Some(v) = v.filter(|v| v.is_finite()) {
                        values.insert(name.to_string(), v);
                    }
                };
                put(super::WAKE_AFTER_0400_MIN, c4.wake_after_0400_min);
                put(super::SLEEP_DURATION_Z_ABS_30D, c4.sleep_duration_z_abs);
                put(super::DAYTIME_IDLE_RATIO_0818, c4.daytime_idle_ratio);
                put(super::NIGHT_DAY_TRAFFIC_RATIO_BYTES, c4.night_day_ratio);
                put(super::DNS_BURST_RATE_PER_HOUR, c8.dns_burst_rate_per_hour);
                put(super::REPEATED_QUERY_RATIO_60M, c8.repeated_query_ratio_60m);
                put(super::MEDIAN_IKS_SEC, c8.median_iks_sec);
                out.push(DailyFeatureVector {
                    user_id: user_id.to_string(),
                    date,
                    values,
                    valid,
                    coverage,
                });
            }
            if valid {
                if let Some(gap) = c4.main_night_gap_min {
                    baseline.push(date, gap);
                }
            }
            date += Duration::days(1);
        }
        out
    }

    /// Vectors for every user seen in `summaries`, ordered by user then date.
    pub fn compute(
        &self,
        summaries: impl IntoIterator<Item = WindowSummary>,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Vec<DailyFeatureVector> {
        let grouped = self.group(summaries);
        grouped
            .iter()
            .flat_map(|(user, days)| self.compute_user(user, days, from, to))
            .collect()
    }
}
