//! Daily per-user feature values derived from window summaries.

mod attention;
pub mod baseline;
mod catalog;
mod engine;
pub mod etld;
pub mod session;
mod sleep;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::ingest::{DnsEvent, WindowSummary};

pub use attention::{
    active_hours, compute_c8, count_bursts, median_iks, repeated_query_ratio, AttentionFeatures,
};
pub use baseline::{rolling_z, BaselineWindow};
pub use catalog::{catalog, FeatureSlot, SignalDirection};
pub use engine::FeatureEngine;
pub use etld::{etld1, DomainError, RegistrableDomain};
pub use session::{sessions_from_timestamps, Session};
pub use sleep::{
    compute_c4, daytime_idle_ratio, main_night_gap_minutes, night_day_ratio, wake_after_0400,
    SleepFeatures,
};

pub const WAKE_AFTER_0400_MIN: &str = "C4_F2_WakeAfter0400Min";
pub const SLEEP_DURATION_Z_ABS_30D: &str = "C4_F4_SleepDurationZAbs30d";
pub const DAYTIME_IDLE_RATIO_0818: &str = "C4_F7_DaytimeIdleRatio0818";
pub const NIGHT_DAY_TRAFFIC_RATIO_BYTES: &str = "C4_F8_NightDayTrafficRatioBytes";
pub const DNS_BURST_RATE_PER_HOUR: &str = "C8_F2_DNSBurstRatePerHour";
pub const REPEATED_QUERY_RATIO_60M: &str = "C8_F4_RepeatedQueryRatio60m";
pub const MEDIAN_IKS_SEC: &str = "C8_F8_MedianIKSsec";

/// Features with a router-side implementation, in report order.
pub const IMPLEMENTED_FEATURES: [&str; 7] = [
    WAKE_AFTER_0400_MIN,
    SLEEP_DURATION_Z_ABS_30D,
    DAYTIME_IDLE_RATIO_0818,
    NIGHT_DAY_TRAFFIC_RATIO_BYTES,
    DNS_BURST_RATE_PER_HOUR,
    REPEATED_QUERY_RATIO_60M,
    MEDIAN_IKS_SEC,
];

/// Tunables of the feature definitions. Defaults match the shipped
/// calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// A window is active (non-idle) when it holds at least this many packets.
    pub active_min_packets: u64,
    pub session_gap_secs: u32,
    pub burst_min_distinct: usize,
    pub burst_span_secs: u32,
    pub repeat_span_secs: u32,
    pub repeat_min_queries: usize,
    pub iks_min_secs: f64,
    pub iks_max_secs: f64,
    pub iks_min_samples: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            active_min_packets: 10,
            session_gap_secs: session::DEFAULT_GAP_SECS,
            burst_min_distinct: 3,
            burst_span_secs: 60,
            repeat_span_secs: 3600,
            repeat_min_queries: 5,
            iks_min_secs: 0.03,
            iks_max_secs: 2.0,
            iks_min_samples: 20,
        }
    }
}

/// All windows of one user on one local calendar day, keyed by window index.
#[derive(Debug, Clone, PartialEq)]
pub struct DayWindows {
    pub date: NaiveDate,
    pub delta_secs: u32,
    windows: BTreeMap<u32, WindowSummary>,
}

impl DayWindows {
    pub fn new(date: NaiveDate, delta_secs: u32) -> Self {
        DayWindows {
            date,
            delta_secs,
            windows: BTreeMap::new(),
        }
    }

    pub fn from_summaries<I>(date: NaiveDate, clock: &Clock, summaries: I) -> Self
    where
        I: IntoIterator<Item = WindowSummary>,
    {
        let mut day = DayWindows::new(date, clock.delta_secs());
        for s in summaries {
            let idx = clock.window_index(s.window_start);
            day.insert(idx, s);
        }
        day
    }

    /// Adds a window; a second summary for the same index (a repeated local
    /// hour at a DST change) is merged into the first.
    pub fn insert(&mut self, index: u32, summary: WindowSummary) {
        match self.windows.get_mut(&index) {
            None => {
                self.windows.insert(index, summary);
            }
            Some(existing) => merge(existing, summary),
        }
    }

    pub fn windows_per_day(&self) -> u32 {
        crate::clock::SECS_PER_DAY / self.delta_secs
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &WindowSummary)> {
        self.windows.iter().map(|(i, w)| (*i, w))
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn offset_secs(&self, index: u32) -> i64 {
        index as i64 * self.delta_secs as i64
    }

    /// Window indices holding at least `min_packets` packets, ascending.
    pub fn active_indices(&self, min_packets: u64) -> Vec<u32> {
        self.windows
            .iter()
            .filter(|(_, w)| w.packet_count >= min_packets)
            .map(|(i, _)| *i)
            .collect()
    }

    pub fn dns_events(&self) -> Vec<DnsEvent> {
        let mut events: Vec<DnsEvent> = self
            .windows
            .values()
            .flat_map(|w| w.dns_events.iter().cloned())
            .collect();
        events.sort();
        events
    }

    pub fn small_upstream_gaps(&self) -> Vec<f64> {
        self.windows
            .values()
            .flat_map(|w| w.small_upstream_gaps.iter().copied())
            .collect()
    }
}

fn merge(into: &mut WindowSummary, other: WindowSummary) {
    let a = into.packet_count as f64;
    let b = other.packet_count as f64;
    let n = a + b;
    if n > 0.0 {
        into.share_tcp = (into.share_tcp * a + other.share_tcp * b) / n;
        into.share_udp = (into.share_udp * a + other.share_udp * b) / n;
        into.share_other = (into.share_other * a + other.share_other * b) / n;
    }
    into.packet_count += other.packet_count;
    into.byte_count_up += other.byte_count_up;
    into.byte_count_down += other.byte_count_down;
    into.dns_events.extend(other.dns_events);
    into.dns_events.sort();
    into.small_upstream_gaps.extend(other.small_upstream_gaps);
}

/// Share of the day's windows with any data, and whether it clears `threshold`.
pub fn day_validity(day: &DayWindows, threshold: f64) -> (bool, f64) {
    let non_empty = day.iter().filter(|(_, w)| w.packet_count > 0).count();
    let coverage = non_empty as f64 / day.windows_per_day() as f64;
    (coverage >= threshold, coverage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyFeatureVector {
    pub user_id: String,
    pub date: NaiveDate,
    /// Missing features are absent; zero is a real measurement.
    pub values: BTreeMap<String, f64>,
    pub valid: bool,
    pub coverage: f64,
}

impl DailyFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("feature vectors serialize");
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, path)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
