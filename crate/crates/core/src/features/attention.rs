//! Attention and decisiveness features read from resolver traffic and
//! interactive upstream packets.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{DayWindows, FeatureConfig};
use crate::clock::MICROS_PER_SEC;
use crate::ingest::DnsEvent;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionFeatures {
    pub dns_burst_rate_per_hour: Option<f64>,
    pub repeated_query_ratio_60m: Option<f64>,
    pub median_iks_sec: Option<f64>,
}

/// Non-overlapping bursts of at least `min_distinct` registrable domains
/// within `span_secs`, scanned left to right. `events` must be time-sorted.
///
/// The earliest window end reaching `min_distinct` equals the end the greedy
/// per-start scan would pick, so one pass with a trailing pointer suffices.
pub fn count_bursts(events: &[DnsEvent], min_distinct: usize, span_secs: u32) -> usize {
    let span = span_secs as i64 * MICROS_PER_SEC;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut left = 0;
    let mut bursts = 0;
    for right in 0..events.len() {
        *counts.entry(events[right].etld1.as_str()).or_default() += 1;
        while events[right].timestamp - events[left].timestamp > span {
            let key = events[left].etld1.as_str();
            let c = counts.get_mut(key).expect("tracked");
            *c -= 1;
            if *c == 0 {
                counts.remove(key);
            }
            left += 1;
        }
        if counts.len() >= min_distinct.max(1) {
            bursts += 1;
            counts.clear();
            left = right + 1;
        }
    }
    bursts
}

/// Clock hours of the day containing at least one active window.
pub fn active_hours(day: &DayWindows, cfg: &FeatureConfig) -> u32 {
    let hours: HashSet<i64> = day
        .active_indices(cfg.active_min_packets)
        .into_iter()
        .map(|i| day.offset_secs(i) / 3600)
        .collect();
    hours.len() as u32
}

/// Maximum, over spans `[t_i, t_i + span]` anchored at each query, of the
/// share of queries in the span whose domain already appeared earlier in it.
pub fn repeated_query_ratio(events: &[DnsEvent], span_secs: u32, min_queries: usize) -> Option<f64> {
    if events.len() < min_queries.max(1) {
        return None;
    }
    let span = span_secs as i64 * MICROS_PER_SEC;
    let mut best = 0.0f64;
    let mut seen: HashSet<&str> = HashSet::new();
    for (i, anchor) in events.iter().enumerate() {
        seen.clear();
        let mut total = 0usize;
        let mut repeats = 0usize;
        for e in events[i..]
            .iter()
            .take_while(|e| e.timestamp - anchor.timestamp <= span)
        {
            total += 1;
            if !seen.insert(e.etld1.as_str()) {
                repeats += 1;
            }
        }
        best = best.max(repeats as f64 / total as f64);
    }
    Some(best)
}

/// Median of the gaps strictly inside `(iks_min_secs, iks_max_secs)`.
pub fn median_iks(gaps: &[f64], cfg: &FeatureConfig) -> Option<f64> {
    let mut kept: Vec<f64> = gaps
        .iter()
        .copied()
        .filter(|g| *g > cfg.iks_min_secs && *g < cfg.iks_max_secs)
        .collect();
    if kept.len() < cfg.iks_min_samples.max(1) {
        return None;
    }
    kept.sort_by(f64::total_cmp);
    let n = kept.len();
    Some(if n % 2 == 1 {
        kept[n / 2]
    } else {
        (kept[n / 2 - 1] + kept[n / 2]) / 2.0
    })
}

pub fn compute_c8(day: &DayWindows, cfg: &FeatureConfig) -> AttentionFeatures {
    let events = day.dns_events();
    let hours = active_hours(day, cfg);
    let burst_rate = (hours > 0).then(|| {
        count_bursts(&events, cfg.burst_min_distinct, cfg.burst_span_secs) as f64 / hours as f64
    });
    AttentionFeatures {
        dns_burst_rate_per_hour: burst_rate,
        repeated_query_ratio_60m: repeated_query_ratio(
            &events,
            cfg.repeat_span_secs,
            cfg.repeat_min_queries,
        ),
        median_iks_sec: median_iks(&day.small_upstream_gaps(), cfg),
    }
}
