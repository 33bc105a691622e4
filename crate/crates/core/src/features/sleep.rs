//! Sleep timing and duration features.

use serde::{Deserialize, Serialize};

use super::baseline::{rolling_z, BaselineWindow};
use super::session::sessions_from_timestamps;
use super::{DayWindows, FeatureConfig};
use crate::clock::MICROS_PER_SEC;

const HOUR: i64 = 3600;
const WAKE_ANCHOR: i64 = 4 * HOUR;
/// Main nightly gap search span, relative to the day's midnight: 20:00 on
/// the previous day to 10:00.
const NIGHT_SEARCH: (i64, i64) = (-4 * HOUR, 10 * HOUR);
const DAYTIME: (i64, i64) = (8 * HOUR, 18 * HOUR);
const DAY_TRAFFIC: (i64, i64) = (6 * HOUR, 22 * HOUR);

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SleepFeatures {
    pub wake_after_0400_min: Option<f64>,
    pub sleep_duration_z_abs: Option<f64>,
    pub daytime_idle_ratio: Option<f64>,
    pub night_day_ratio: Option<f64>,
    /// Raw main nightly idle gap in minutes; the baseline input.
    pub main_night_gap_min: Option<f64>,
}

fn active_offsets_micros(day: &DayWindows, cfg: &FeatureConfig, shift_secs: i64) -> Vec<i64> {
    day.active_indices(cfg.active_min_packets)
        .into_iter()
        .map(|i| (day.offset_secs(i) + shift_secs) * MICROS_PER_SEC)
        .collect()
}

/// Minutes from 04:00 to the start of the first session beginning at or after 04:00.
pub fn wake_after_0400(day: &DayWindows, cfg: &FeatureConfig) -> Option<f64> {
    let offsets = active_offsets_micros(day, cfg, 0);
    sessions_from_timestamps(&offsets, cfg.session_gap_secs)
        .into_iter()
        .find(|s| s.start >= WAKE_ANCHOR * MICROS_PER_SEC)
        .map(|s| (s.start - WAKE_ANCHOR * MICROS_PER_SEC) as f64 / (60 * MICROS_PER_SEC) as f64)
}

/// Longest idle gap between sessions that intersects 20:00 (previous day)
/// to 10:00, in minutes.
pub fn main_night_gap_minutes(
    prev: Option<&DayWindows>,
    day: &DayWindows,
    cfg: &FeatureConfig,
) -> Option<f64> {
    let mut offsets = prev
        .map(|p| active_offsets_micros(p, cfg, -86_400))
        .unwrap_or_default();
    offsets.extend(active_offsets_micros(day, cfg, 0));
    let sessions = sessions_from_timestamps(&offsets, cfg.session_gap_secs);
    let (lo, hi) = (NIGHT_SEARCH.0 * MICROS_PER_SEC, NIGHT_SEARCH.1 * MICROS_PER_SEC);
    sessions
        .windows(2)
        .map(|pair| (pair[0].end, pair[1].start))
        .filter(|(start, end)| *start < hi && *end > lo)
        .map(|(start, end)| (end - start) as f64 / (60 * MICROS_PER_SEC) as f64)
        .fold(None, |best: Option<f64>, g| Some(best.map_or(g, |b| b.max(g))))
}

/// Idle windows over all windows starting within 08:00–18:00.
pub fn daytime_idle_ratio(day: &DayWindows, cfg: &FeatureConfig) -> f64 {
    let delta = day.delta_secs as i64;
    let in_span = |i: u32| {
        let off = i as i64 * delta;
        off >= DAYTIME.0 && off < DAYTIME.1
    };
    let total = (0..day.windows_per_day()).filter(|i| in_span(*i)).count();
    let active = day
        .active_indices(cfg.active_min_packets)
        .into_iter()
        .filter(|i| in_span(*i))
        .count();
    (total - active) as f64 / total as f64
}

/// Bytes in 22:00–06:00 over bytes in 06:00–22:00; missing when the day
/// span carried no bytes.
pub fn night_day_ratio(day: &DayWindows) -> Option<f64> {
    let (mut night, mut daytime) = (0u64, 0u64);
    for (i, w) in day.iter() {
        let off = day.offset_secs(i);
        let bytes = w.byte_count_up + w.byte_count_down;
        if off >= DAY_TRAFFIC.0 && off < DAY_TRAFFIC.1 {
            daytime += bytes;
        } else {
            night += bytes;
        }
    }
    if daytime == 0 {
        return None;
    }
    Some(night as f64 / daytime as f64)
}

pub fn compute_c4(
    day: &DayWindows,
    prev: Option<&DayWindows>,
    baseline: &BaselineWindow,
    cfg: &FeatureConfig,
) -> SleepFeatures {
    let gap = main_night_gap_minutes(prev, day, cfg);
    SleepFeatures {
        wake_after_0400_min: wake_after_0400(day, cfg),
        sleep_duration_z_abs: gap.and_then(|g| rolling_z(g, baseline)).map(f64::abs),
        daytime_idle_ratio: Some(daytime_idle_ratio(day, cfg)),
        night_day_ratio: night_day_ratio(day),
        main_night_gap_min: gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::WindowSummary;
    use chrono::NaiveDate;

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, d).unwrap()
    }

    fn w(packets: u64, bytes: u64) -> WindowSummary {
        WindowSummary {
            window_start: 0,
            user_id: "u".into(),
            packet_count: packets,
            byte_count_up: 0,
            byte_count_down: bytes,
            share_tcp: 1.0,
            share_udp: 0.0,
            share_other: 0.0,
            dns_events: vec![],
            small_upstream_gaps: vec![],
        }
    }

    /// Five-minute day active (20 packets) on `[from_h, to_h)`, background elsewhere.
    fn day(d: u32, spans: &[(f64, f64)]) -> DayWindows {
        let mut day = DayWindows::new(date(d), 300);
        for i in 0..288u32 {
            let h = i as f64 / 12.0;
            let active = spans.iter().any(|(a, b)| h >= *a && h < *b);
            day.insert(i, if active { w(20, 1000) } else { w(1, 0) });
        }
        day
    }

    #[test]
    fn wake_at_six_is_120_minutes() {
        let d = day(2, &[(6.0, 12.0)]);
        assert_eq!(wake_after_0400(&d, &FeatureConfig::default()), Some(120.0));
    }

    #[test]
    fn session_straddling_anchor_is_skipped() {
        let d = day(2, &[(3.0, 5.0), (9.0, 10.0)]);
        assert_eq!(wake_after_0400(&d, &FeatureConfig::default()), Some(300.0));
    }

    #[test]
    fn no_session_after_anchor_is_missing() {
        let d = day(2, &[(1.0, 3.0)]);
        assert_eq!(wake_after_0400(&d, &FeatureConfig::default()), None);
    }

    #[test]
    fn all_daytime_idle() {
        let d = day(2, &[(20.0, 23.0)]);
        assert_eq!(daytime_idle_ratio(&d, &FeatureConfig::default()), 1.0);
    }

    #[test]
    fn night_day_bytes() {
        let mut d = DayWindows::new(date(2), 300);
        d.insert(0, w(1, 500)); // 00:00
        d.insert(12 * 12, w(1, 1000)); // 12:00
        assert_eq!(night_day_ratio(&d), Some(0.5));
        let mut only_night = DayWindows::new(date(2), 300);
        only_night.insert(0, w(1, 500));
        assert_eq!(night_day_ratio(&only_night), None);
    }

    #[test]
    fn main_gap_spans_midnight() {
        let prev = day(1, &[(8.0, 23.0)]);
        let today = day(2, &[(7.0, 22.0)]);
        // Last active window 22:55 on the previous day, first 07:00 today.
        let gap = main_night_gap_minutes(Some(&prev), &today, &FeatureConfig::default()).unwrap();
        assert_eq!(gap, 8.0 * 60.0 + 5.0);
    }

    #[test]
    fn sleep_z_needs_baseline() {
        let prev = day(1, &[(8.0, 23.0)]);
        let today = day(2, &[(7.0, 22.0)]);
        let cfg = FeatureConfig::default();
        let empty = BaselineWindow::new("gap", "u");
        let f = compute_c4(&today, Some(&prev), &empty, &cfg);
        assert_eq!(f.sleep_duration_z_abs, None);
        let hist = BaselineWindow::new("gap", "u").with_values(
            (1..=8).map(|i| (date(1) - chrono::Duration::days(10 - i), 400.0 + i as f64)),
        );
        let f = compute_c4(&today, Some(&prev), &hist, &cfg);
        let mean = 404.5;
        let std = (42.0f64 / 7.0).sqrt();
        assert!((f.sleep_duration_z_abs.unwrap() - ((485.0 - mean) / std).abs()).abs() < 1e-12);
    }
}
