//! Expected feature values computed from the generator's own record of
//! what it placed in each window. Deliberately naive: direct scans over the
//! window map, no shared code with the feature engine beyond the thresholds.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::clock::{Micros, MICROS_PER_SEC};
use crate::features::{
    FeatureConfig, DAYTIME_IDLE_RATIO_0818, DNS_BURST_RATE_PER_HOUR, MEDIAN_IKS_SEC,
    NIGHT_DAY_TRAFFIC_RATIO_BYTES, REPEATED_QUERY_RATIO_60M, SLEEP_DURATION_Z_ABS_30D,
    WAKE_AFTER_0400_MIN,
};
use crate::ingest::DnsEvent;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub packets: u64,
    pub up: u64,
    pub down: u64,
    pub dns: Vec<DnsEvent>,
    /// Timestamps of small upstream TCP packets.
    pub small_ts: Vec<Micros>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    pub windows: BTreeMap<u32, WindowTruth>,
}

pub type Truth = BTreeMap<String, BTreeMap<NaiveDate, DayTruth>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub user: String,
    pub date: NaiveDate,
    pub feature: String,
    pub expected: Option<f64>,
}

struct Ctx<'a> {
    cfg: &'a FeatureConfig,
    delta: i64,
    per_day: u32,
}

impl Ctx<'_> {
    fn active(&self, w: &WindowTruth) -> bool {
        w.packets >= self.cfg.active_min_packets
    }

    /// Active window start offsets in seconds from the day's midnight.
    fn active_offsets(&self, day: &DayTruth, shift: i64) -> Vec<i64> {
        day.windows
            .iter()
            .filter(|(_, w)| self.active(w))
            .map(|(i, _)| *i as i64 * self.delta + shift)
            .collect()
    }
}

fn wake(ctx: &Ctx, day: &DayTruth) -> Option<f64> {
    let gap = ctx.cfg.session_gap_secs as i64;
    let offsets = ctx.active_offsets(day, 0);
    let mut prev: Option<i64> = None;
    for t in offsets {
        let starts_session = prev.is_none_or(|p| t - p > gap);
        if starts_session && t >= 4 * 3600 {
            return Some((t - 4 * 3600) as f64 / 60.0);
        }
        prev = Some(t);
    }
    None
}

fn night_gap(ctx: &Ctx, prev: Option<&DayTruth>, day: &DayTruth) -> Option<f64> {
    let gap = ctx.cfg.session_gap_secs as i64;
    let mut offsets = prev.map(|p| ctx.active_offsets(p, -86_400)).unwrap_or_default();
    offsets.extend(ctx.active_offsets(day, 0));
    let mut best: Option<i64> = None;
    for pair in offsets.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a > gap && a < 10 * 3600 && b > -4 * 3600 {
            best = Some(best.map_or(b - a, |x| x.max(b - a)));
        }
    }
    best.map(|s| s as f64 / 60.0)
}

fn idle_ratio(ctx: &Ctx, day: &DayTruth) -> f64 {
    let mut total = 0u32;
    let mut idle = 0u32;
    for i in 0..ctx.per_day {
        let off = i as i64 * ctx.delta;
        if (8 * 3600..18 * 3600).contains(&off) {
            total += 1;
            if !day.windows.get(&i).is_some_and(|w| ctx.active(w)) {
                idle += 1;
            }
        }
    }
    idle as f64 / total as f64
}

fn night_day(ctx: &Ctx, day: &DayTruth) -> Option<f64> {
    let mut night = 0u64;
    let mut daytime = 0u64;
    for (i, w) in &day.windows {
        let off = *i as i64 * ctx.delta;
        if (6 * 3600..22 * 3600).contains(&off) {
            daytime += w.up + w.down;
        } else {
            night += w.up + w.down;
        }
    }
    (daytime > 0).then(|| night as f64 / daytime as f64)
}

fn dns_events(day: &DayTruth) -> Vec<DnsEvent> {
    let mut v: Vec<DnsEvent> = day.windows.values().flat_map(|w| w.dns.clone()).collect();
    v.sort();
    v
}

/// Greedy scan: from each unconsumed query, look ahead within the span for
/// enough distinct domains; on success consume through the closing query.
fn bursts(ctx: &Ctx, events: &[DnsEvent]) -> usize {
    let span = ctx.cfg.burst_span_secs as i64 * MICROS_PER_SEC;
    let need = ctx.cfg.burst_min_distinct.max(1);
    let mut count = 0;
    let mut i = 0;
    while i < events.len() {
        let mut seen = BTreeSet::new();
        let mut closed_at = None;
        for (j, e) in events.iter().enumerate().skip(i) {
            if e.timestamp - events[i].timestamp > span {
                break;
            }
            seen.insert(&e.etld1);
            if seen.len() >= need {
                closed_at = Some(j);
                break;
            }
        }
        match closed_at {
            Some(j) => {
                count += 1;
                i = j + 1;
            }
            None => i += 1,
        }
    }
    count
}

fn burst_rate(ctx: &Ctx, day: &DayTruth) -> Option<f64> {
    let hours: BTreeSet<i64> = day
        .windows
        .iter()
        .filter(|(_, w)| ctx.active(w))
        .map(|(i, _)| *i as i64 * ctx.delta / 3600)
        .collect();
    if hours.is_empty() {
        return None;
    }
    Some(bursts(ctx, &dns_events(day)) as f64 / hours.len() as f64)
}

fn repeat_ratio(ctx: &Ctx, day: &DayTruth) -> Option<f64> {
    let events = dns_events(day);
    if events.len() < ctx.cfg.repeat_min_queries.max(1) {
        return None;
    }
    let span = ctx.cfg.repeat_span_secs as i64 * MICROS_PER_SEC;
    let mut best = 0.0f64;
    for a in &events {
        let inside: Vec<&DnsEvent> = events
            .iter()
            .skip_while(|e| e.timestamp < a.timestamp)
            .take_while(|e| e.timestamp - a.timestamp <= span)
            .collect();
        let distinct: BTreeSet<&String> = inside.iter().map(|e| &e.etld1).collect();
        let ratio = (inside.len() - distinct.len()) as f64 / inside.len() as f64;
        best = best.max(ratio);
    }
    Some(best)
}

fn iks(ctx: &Ctx, day: &DayTruth) -> Option<f64> {
    let mut kept = Vec::new();
    for w in day.windows.values() {
        let mut ts = w.small_ts.clone();
        ts.sort_unstable();
        for pair in ts.windows(2) {
            let g = (pair[1] - pair[0]) as f64 / MICROS_PER_SEC as f64;
            if g > ctx.cfg.iks_min_secs && g < ctx.cfg.iks_max_secs {
                kept.push(g);
            }
        }
    }
    if kept.len() < ctx.cfg.iks_min_samples.max(1) {
        return None;
    }
    kept.sort_by(f64::total_cmp);
    let n = kept.len();
    Some(if n % 2 == 0 {
        (kept[n / 2 - 1] + kept[n / 2]) / 2.0
    } else {
        kept[n / 2]
    })
}

fn z_abs(value: f64, history: &[f64]) -> Option<f64> {
    if history.len() < 7 {
        return None;
    }
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Some(0.0);
    }
    Some(((value - mean) / var.sqrt()).abs())
}

/// One entry per user, scenario day and implemented feature; `None` marks
/// a feature the pipeline must report as missing.
pub fn compute_ledger(
    truth: &Truth,
    scenario: &Scenario,
    cfg: &FeatureConfig,
    validity_threshold: f64,
) -> Vec<LedgerEntry> {
    let ctx = Ctx {
        cfg,
        delta: scenario.delta_secs as i64,
        per_day: 86_400 / scenario.delta_secs,
    };
    let empty = DayTruth::default();
    let mut out = Vec::new();
    for user in &scenario.users {
        let days = truth.get(&user.user_id);
        let day_of = |d: NaiveDate| days.and_then(|m| m.get(&d));
        let mut gaps: Vec<(NaiveDate, f64)> = Vec::new();
        for k in 0..scenario.days as i64 {
            let date = scenario.start_date + Duration::days(k);
            let day = day_of(date).unwrap_or(&empty);
            let prev = day_of(date - Duration::days(1));
            let non_empty = day.windows.values().filter(|w| w.packets > 0).count();
            let valid = non_empty as f64 / ctx.per_day as f64 >= validity_threshold;
            let gap = night_gap(&ctx, prev, day);
            let history: Vec<f64> = gaps
                .iter()
                .filter(|(d, _)| *d >= date - Duration::days(30) && *d < date)
                .map(|(_, g)| *g)
                .collect();
            let values = [
                (WAKE_AFTER_0400_MIN, wake(&ctx, day)),
                (SLEEP_DURATION_Z_ABS_30D, gap.and_then(|g| z_abs(g, &history))),
                (DAYTIME_IDLE_RATIO_0818, Some(idle_ratio(&ctx, day))),
                (NIGHT_DAY_TRAFFIC_RATIO_BYTES, night_day(&ctx, day)),
                (DNS_BURST_RATE_PER_HOUR, burst_rate(&ctx, day)),
                (REPEATED_QUERY_RATIO_60M, repeat_ratio(&ctx, day)),
                (MEDIAN_IKS_SEC, iks(&ctx, day)),
            ];
            for (feature, expected) in values {
                out.push(LedgerEntry {
                    user: user.user_id.clone(),
                    date,
                    feature: feature.to_string(),
                    expected,
                });
            }
            if valid {
                if let Some(g) = gap {
                    gaps.push((date, g));
                }
            }
        }
    }
    out
}
