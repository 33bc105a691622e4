//! Seeded synthetic household traces with per-day expected feature values.
//!
//! The generator places every packet itself, so it knows each window's
//! packet count, byte volumes, DNS names and keystroke timestamps. The
//! ledger is computed from that record, never from the parsed capture.

mod ledger;
mod pcap_writer;

use std::collections::BTreeMap;
use std::fs;
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, ClockError, Micros, DEFAULT_DELTA_SECS, MICROS_PER_SEC};
use crate::features::FeatureConfig;
use crate::identity::{IpMapping, UserProfile};
use crate::ingest::DnsEvent;

pub use ledger::{compute_ledger, DayTruth, LedgerEntry, Truth, WindowTruth};
pub use pcap_writer::{dns_query, tcp_frame, udp_frame, PcapWriter};

pub const BUILTIN_SCENARIOS: [(&str, &str); 4] = [
    ("late-sleeper", include_str!("../../scenarios/late-sleeper.json")),
    ("dns-burster", include_str!("../../scenarios/dns-burster.json")),
    ("baseline-quiet", include_str!("../../scenarios/baseline-quiet.json")),
    ("alternating-wake", include_str!("../../scenarios/alternating-wake.json")),
];

const DAY_US: i64 = 86_400 * MICROS_PER_SEC;
const MIN_SLEEP_SECS: i64 = 3_600;
const RESOLVER: Ipv4Addr = Ipv4Addr::new(9, 9, 9, 9);
const NTP_SERVER: Ipv4Addr = Ipv4Addr::new(162, 159, 200, 1);
const CONTENT_SERVER: Ipv4Addr = Ipv4Addr::new(93, 184, 215, 14);
const CHAT_SERVER: Ipv4Addr = Ipv4Addr::new(151, 101, 1, 69);
const BULK_PAYLOAD: usize = 1_000;
const NTP_PAYLOAD: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn items(&self) -> Vec<&str> {
        match self {
            OneOrMany::One(s) => vec![s.as_str()],
            OneOrMany::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// Local clock times, cycled by day index when given as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub wake: OneOrMany,
    pub sleep_onset: OneOrMany,
    #[serde(default)]
    pub wake_jitter_windows: u32,
    #[serde(default)]
    pub onset_jitter_windows: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DnsProfile {
    pub bursts_per_active_hour: u32,
    pub burst_size: u32,
    /// Burst domains cycle through this many sites; 0 gives every query a
    /// fresh domain.
    pub domain_pool: u32,
    /// Evenly spaced single queries to fresh domains.
    pub browse_queries_per_active_hour: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypingProfile {
    pub sessions_per_day: u32,
    pub keys_per_session: u32,
    pub gap_ms_min: u32,
    pub gap_ms_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioUser {
    pub user_id: String,
    pub address: Ipv4Addr,
    pub schedule: Schedule,
    #[serde(default)]
    pub dns_profile: DnsProfile,
    #[serde(default)]
    pub typing_profile: TypingProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Background {
    /// Idle-traffic density: packets in every window, awake or not.
    pub packets_per_window: u32,
    /// Packets in each window while the user is awake.
    pub active_packets_per_window: u32,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            packets_per_window: 1,
            active_packets_per_window: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub start_date: NaiveDate,
    pub days: u32,
    #[serde(default = "default_delta")]
    pub delta_secs: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub background: Background,
    pub users: Vec<ScenarioUser>,
}

fn default_delta() -> u32 {
    DEFAULT_DELTA_SECS
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Scenario::from_json(text).expect("bundled scenarios parse"))
    }

    pub fn clock(&self) -> Result<Clock, SynthError> {
        Ok(Clock::new(chrono_tz::UTC, self.delta_secs)?)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Duration::days(self.days as i64 - 1)
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scenario parse failed: {0}")]
    Parse(String),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("infeasible schedule for {user} on day {day}: wake at {wake} precedes sleep onset {onset}")]
    Infeasible {
        user: String,
        day: u32,
        wake: String,
        onset: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_time(s: &str) -> Result<u32, SynthError> {
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map(|t| t.num_seconds_from_midnight())
        .map_err(|_| SynthError::Invalid(format!("bad clock time {s:?}")))
}

fn fmt_secs(abs: i64) -> String {
    let day = abs.div_euclid(86_400);
    let s = abs.rem_euclid(86_400);
    format!("day {} {:02}:{:02}:{:02}", day + 1, s / 3600, s / 60 % 60, s % 60)
}

/// Awake intervals in scenario seconds, before jitter.
struct Plan {
    wake: Vec<i64>,
    onset: Vec<i64>,
}

fn plan(user: &ScenarioUser, days: u32, delta: u32) -> Result<Plan, SynthError> {
    let wakes = user
        .schedule
        .wake
        .items()
        .into_iter()
        .map(parse_time)
        .collect::<Result<Vec<_>, _>>()?;
    let onsets = user
        .schedule
        .sleep_onset
        .items()
        .into_iter()
        .map(parse_time)
        .collect::<Result<Vec<_>, _>>()?;
    if wakes.is_empty() || onsets.is_empty() {
        return Err(SynthError::Invalid(format!("{}: empty schedule", user.user_id)));
    }
    for t in wakes.iter().chain(&onsets) {
        if t % delta != 0 {
            return Err(SynthError::Invalid(format!(
                "{}: schedule time {t} s is not on a {delta} s window boundary",
                user.user_id
            )));
        }
    }
    let mut p = Plan {
        wake: Vec::new(),
        onset: Vec::new(),
    };
    for d in 0..days as usize {
        let w = wakes[d % wakes.len()] as i64;
        let mut o = onsets[d % onsets.len()] as i64;
        if o <= w {
            o += 86_400;
        }
        p.wake.push(d as i64 * 86_400 + w);
        p.onset.push(d as i64 * 86_400 + o);
    }
    let wj = user.schedule.wake_jitter_windows as i64 * delta as i64;
    let oj = user.schedule.onset_jitter_windows as i64 * delta as i64;
    for d in 1..days as usize {
        if p.onset[d - 1] + oj + MIN_SLEEP_SECS > p.wake[d] - wj {
            return Err(SynthError::Infeasible {
                user: user.user_id.clone(),
                day: d as u32 + 1,
                wake: fmt_secs(p.wake[d] - wj),
                onset: fmt_secs(p.onset[d - 1] + oj),
            });
        }
    }
    Ok(p)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.clock()?;
        if self.days == 0 {
            return Err(SynthError::Invalid("days must be positive".into()));
        }
        if self.users.is_empty() {
            return Err(SynthError::Invalid("at least one user is required".into()));
        }
        let mut addrs = std::collections::BTreeSet::new();
        for u in &self.users {
            if !addrs.insert(u.address) || !u.address.is_private() {
                return Err(SynthError::Invalid(format!(
                    "{}: address must be a unique RFC1918 address",
                    u.user_id
                )));
            }
            let t = &u.typing_profile;
            if t.sessions_per_day > 0 {
                if t.gap_ms_min == 0 || t.gap_ms_min > t.gap_ms_max {
                    return Err(SynthError::Invalid(format!(
                        "{}: typing gaps need 0 < gap_ms_min <= gap_ms_max",
                        u.user_id
                    )));
                }
                let span_ms = t.keys_per_session as u64 * t.gap_ms_max as u64;
                if span_ms + 10_000 > self.delta_secs as u64 * 1_000 {
                    return Err(SynthError::Invalid(format!(
                        "{}: a typing session must fit in one window",
                        u.user_id
                    )));
                }
            }
            let d = &u.dns_profile;
            if d.bursts_per_active_hour > 0 && !(2..=60).contains(&d.burst_size) {
                return Err(SynthError::Invalid(format!(
                    "{}: burst_size must be between 2 and 60",
                    u.user_id
                )));
            }
            if d.bursts_per_active_hour > 0
                && 3600 / d.bursts_per_active_hour < d.burst_size + 1
            {
                return Err(SynthError::Invalid(format!(
                    "{}: {} bursts of {} queries do not fit in an hour",
                    u.user_id, d.bursts_per_active_hour, d.burst_size
                )));
            }
            if d.domain_pool > 0 && d.domain_pool < d.burst_size {
                return Err(SynthError::Invalid(format!(
                    "{}: domain_pool must hold at least burst_size domains",
                    u.user_id
                )));
            }
            plan(u, self.days, self.delta_secs)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub pcap: Vec<u8>,
    pub truth: Truth,
    pub ledger: Vec<LedgerEntry>,
    pub profiles: Vec<UserProfile>,
    pub mappings: Vec<IpMapping>,
}

struct Packet {
    at: i64,
    seq: u64,
    frame: Vec<u8>,
}

struct Gen<'a> {
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    packets: Vec<Packet>,
    truth: Truth,
    day0: Micros,
    horizon: i64,
    next_port: u16,
    domain_counter: u64,
}

impl<'a> Gen<'a> {
    fn in_range(&self, at: i64) -> bool {
        at >= 0 && at < self.horizon
    }

    fn window(&mut self, user: &str, at: i64) -> &mut WindowTruth {
        let day = at.div_euclid(DAY_US);
        let date = self.scenario.start_date + Duration::days(day);
        let idx = (at.rem_euclid(DAY_US) / (self.scenario.delta_secs as i64 * MICROS_PER_SEC)) as u32;
        self.truth
            .entry(user.to_string())
            .or_default()
            .entry(date)
            .or_default()
            .windows
            .entry(idx)
            .or_default()
    }

    fn push(&mut self, at: i64, frame: Vec<u8>) {
        let seq = self.packets.len() as u64;
        self.packets.push(Packet { at, seq, frame });
    }

    fn port(&mut self) -> u16 {
        self.next_port = if self.next_port >= 60_999 { 49_152 } else { self.next_port + 1 };
        self.next_port
    }

    fn upstream_udp(&mut self, user: &str, src: Ipv4Addr, dst: Ipv4Addr, dport: u16, at: i64, payload: &[u8]) {
        if !self.in_range(at) {
            return;
        }
        let sport = self.port();
        let frame = udp_frame(src, dst, sport, dport, true, payload);
        let w = self.window(user, at);
        w.packets += 1;
        w.up += payload.len() as u64;
        self.push(at, frame);
    }

    fn bulk_down(&mut self, user: &str, dst: Ipv4Addr, at: i64) {
        if !self.in_range(at) {
            return;
        }
        let seq = self.rng.gen();
        let frame = tcp_frame(CONTENT_SERVER, dst, 443, 50_000, seq, 1, false, &[0u8; BULK_PAYLOAD]);
        let w = self.window(user, at);
        w.packets += 1;
        w.down += BULK_PAYLOAD as u64;
        self.push(at, frame);
    }

    fn keystroke(&mut self, user: &str, src: Ipv4Addr, at: i64) {
        if !self.in_range(at) {
            return;
        }
        let len = self.rng.gen_range(32..=96usize);
        let seq = self.rng.gen();
        let frame = tcp_frame(src, CHAT_SERVER, 51_000, 443, seq, 1, true, &vec![0x17u8; len]);
        let ts = self.day0 + at;
        let w = self.window(user, at);
        w.packets += 1;
        w.up += len as u64;
        w.small_ts.push(ts);
        self.push(at, frame);
    }

    fn dns(&mut self, user: &str, src: Ipv4Addr, at: i64, host: &str, registrable: &str) {
        if !self.in_range(at) {
            return;
        }
        let id = self.rng.gen();
        let payload = dns_query(id, host);
        self.upstream_udp(user, src, RESOLVER, 53, at, &payload);
        let ts = self.day0 + at;
        self.window(user, at).dns.push(DnsEvent {
            timestamp: ts,
            etld1: registrable.to_string(),
        });
    }

    fn fresh_domain(&mut self, tld: &str) -> String {
        self.domain_counter += 1;
        format!("q{}x{}.{tld}", self.scenario.name.len(), self.domain_counter)
    }
}

/// Builds the capture, the ground-truth record and the ledger. The same
/// scenario and seed always give byte-identical output.
pub fn generate(scenario: &Scenario, seed: u64) -> Result<SynthOutput, SynthError> {
    scenario.validate()?;
    let clock = scenario.clock()?;
    let delta = scenario.delta_secs as i64;
    let delta_us = delta * MICROS_PER_SEC;
    let mut g = Gen {
        scenario,
        rng: ChaCha8Rng::seed_from_u64(seed),
        packets: Vec::new(),
        truth: BTreeMap::new(),
        day0: clock.midnight(scenario.start_date),
        horizon: scenario.days as i64 * DAY_US,
        next_port: 49_152,
        domain_counter: 0,
    };
    let windows_total = scenario.days as i64 * (86_400 / delta);

    for user in &scenario.users {
        let uid = user.user_id.as_str();
        let src = user.address;
        let p = plan(user, scenario.days, scenario.delta_secs)?;

        for k in 0..windows_total {
            for j in 0..scenario.background.packets_per_window as i64 {
                let at = k * delta_us + delta_us / 2 + j * 1_000;
                g.upstream_udp(uid, src, NTP_SERVER, 123, at, &[0x23; NTP_PAYLOAD]);
            }
        }

        for d in 0..scenario.days as usize {
            let wj = user.schedule.wake_jitter_windows as i64;
            let oj = user.schedule.onset_jitter_windows as i64;
            let wake = p.wake[d] + g.rng.gen_range(-wj..=wj) * delta;
            let onset = p.onset[d] + g.rng.gen_range(-oj..=oj) * delta;

            let n = scenario.background.active_packets_per_window as i64;
            let mut k = wake / delta;
            while k * delta < onset {
                for j in 0..n {
                    let at = k * delta_us + (2 * j + 1) * delta_us / (2 * n) + 3_000;
                    g.bulk_down(uid, src, at);
                }
                k += 1;
            }

            let dns = &user.dns_profile;
            let mut hour = wake.div_euclid(3600);
            while hour * 3600 < onset {
                let span_start = (hour * 3600).max(wake) * MICROS_PER_SEC;
                let span_end = ((hour + 1) * 3600).min(onset) * MICROS_PER_SEC;
                let span = span_end - span_start;
                let b = dns.bursts_per_active_hour as i64 * span / (3600 * MICROS_PER_SEC);
                if b > 0 {
                    let spacing = span / b;
                    for i in 0..b {
                        let start = span_start + i * spacing + 500_000;
                        for q in 0..dns.burst_size as i64 {
                            let base = if dns.domain_pool > 0 {
                                let slot = (g.domain_counter % dns.domain_pool as u64) as u32;
                                g.domain_counter += 1;
                                format!("site{slot}.com")
                            } else {
                                g.fresh_domain("com")
                            };
                            g.dns(uid, src, start + q * MICROS_PER_SEC, &format!("www.{base}"), &base);
                        }
                    }
                }
                let qn = dns.browse_queries_per_active_hour as i64 * span / (3600 * MICROS_PER_SEC);
                for i in 0..qn {
                    let at = span_start + (2 * i + 1) * span / (2 * qn) + 250_000;
                    let base = g.fresh_domain("org");
                    g.dns(uid, src, at, &format!("cdn.{base}"), &base);
                }
                hour += 1;
            }

            let t = &user.typing_profile;
            for s in 0..t.sessions_per_day as i64 {
                let at = wake + s * 3600;
                if at + delta > onset {
                    break;
                }
                let mut ts = at.div_euclid(delta) * delta_us + 5 * MICROS_PER_SEC;
                for key in 0..t.keys_per_session {
                    if key > 0 {
                        ts += g.rng.gen_range(t.gap_ms_min as i64 * 1_000..=t.gap_ms_max as i64 * 1_000);
                    }
                    g.keystroke(uid, src, ts);
                }
            }
        }
    }

    g.packets.sort_by_key(|p| (p.at, p.seq));
    let mut writer = PcapWriter::new();
    for p in &g.packets {
        writer.write_frame(g.day0 + p.at, &p.frame);
    }

    let truth = g.truth;
    let feature_cfg = FeatureConfig::default();
    let ledger = compute_ledger(&truth, scenario, &feature_cfg, 0.5);
    let from = g.day0;
    let profiles = scenario
        .users
        .iter()
        .map(|u| {
            let wakes = u.schedule.wake.items();
            let onsets = u.schedule.sleep_onset.items();
            let time = |s: &str| NaiveTime::from_num_seconds_from_midnight_opt(parse_time(s).unwrap_or(0), 0)
                .expect("validated clock time");
            UserProfile {
                user_id: u.user_id.clone(),
                display_name: u.user_id.clone(),
                habitual_wake: time(wakes[0]),
                habitual_sleep: time(onsets[0]),
                workdays: Vec::new(),
                notes: format!("synthetic scenario {}", scenario.name),
            }
        })
        .collect();
    let mappings = scenario
        .users
        .iter()
        .map(|u| IpMapping {
            address: IpAddr::V4(u.address),
            user_id: u.user_id.clone(),
            valid_from: from,
            valid_to: None,
        })
        .collect();
    Ok(SynthOutput {
        pcap: writer.finish(),
        truth,
        ledger,
        profiles,
        mappings,
    })
}

impl SynthOutput {
    /// Writes `trace.pcap`, `ledger.jsonl`, `profiles.json` and
    /// `ip_mappings.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
        fs::create_dir_all(dir)?;
        let pcap = dir.join("trace.pcap");
        fs::write(&pcap, &self.pcap)?;
        let ledger = dir.join("ledger.jsonl");
        let mut text = String::new();
        for e in &self.ledger {
            text.push_str(&serde_json::to_string(e).expect("ledger serializes"));
            text.push('\n');
        }
        fs::write(&ledger, text)?;
        let registry = crate::identity::Registry::from_parts(self.profiles.clone(), self.mappings.clone())
            .map_err(|e| SynthError::Invalid(e.to_string()))?;
        registry
            .save(dir, 0)
            .map_err(|e| SynthError::Invalid(e.to_string()))?;
        Ok(vec![
            pcap,
            ledger,
            dir.join(crate::identity::PROFILES_FILE),
            dir.join(crate::identity::MAPPINGS_FILE),
        ])
    }
}
