//! Shared inputs for the benchmarks.

use carenet_core::ingest::DnsEvent;
use carenet_core::synth::{generate, Scenario};
use chrono::{Duration, NaiveDate};

/// A `days`-long likelihood series cycling through present, missing,
/// above and below threshold.
pub fn likelihood_series(days: usize) -> Vec<(NaiveDate, Option<f64>)> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    (0..days)
        .map(|i| {
            let l = match i % 5 {
                0 => None,
                1 | 3 => Some(0.75),
                _ => Some(0.3),
            };
            (start + Duration::days(i as i64), l)
        })
        .collect()
}

/// One busy day of DNS lookups: `n` queries one second apart over a pool
/// of `pool` domains.
pub fn dns_day(n: usize, pool: usize) -> Vec<DnsEvent> {
    (0..n)
        .map(|i| DnsEvent {
            timestamp: i as i64 * 1_000_000,
            etld1: format!("site{}.com", i % pool),
        })
        .collect()
}

/// Capture bytes of a bundled scenario.
pub fn scenario_pcap(name: &str) -> Vec<u8> {
    let scenario = Scenario::builtin(name).expect("bundled scenario");
    generate(&scenario, scenario.seed).expect("scenario generates").pcap
}
