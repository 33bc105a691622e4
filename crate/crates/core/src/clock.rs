//! Local-time bookkeeping: timezone, window length and day boundaries.
//!
//! All timestamps in the pipeline are microseconds since the Unix epoch
//! (UTC). Day boundaries and window names are always taken in the
//! configured local timezone.

use chrono::{DateTime, Datelike, LocalResult, NaiveDate, NaiveDateTime, TimeZone, Timelike};
use chrono_tz::Tz;
use thiserror::Error;

/// Microseconds since the Unix epoch, UTC.
pub type Micros = i64;

pub const MICROS_PER_SEC: i64 = 1_000_000;
pub const SECS_PER_DAY: u32 = 86_400;
pub const DEFAULT_DELTA_SECS: u32 = 300;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClockError {
    #[error("window length must be positive and divide 24 h evenly, got {0} s")]
    BadDelta(u32),
    #[error("unknown timezone {0:?}")]
    UnknownTimezone(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clock {
    tz: Tz,
    delta_secs: u32,
}

impl Default for Clock {
    fn default() -> Self {
        Clock {
            tz: Tz::UTC,
            delta_secs: DEFAULT_DELTA_SECS,
        }
    }
}

impl Clock {
    pub fn new(tz: Tz, delta_secs: u32) -> Result<Self, ClockError> {
        if delta_secs == 0 || !SECS_PER_DAY.is_multiple_of(delta_secs) {
            return Err(ClockError::BadDelta(delta_secs));
        }
        Ok(Clock { tz, delta_secs })
    }

    pub fn parse_tz(name: &str) -> Result<Tz, ClockError> {
        name.parse::<Tz>()
            .map_err(|_| ClockError::UnknownTimezone(name.to_string()))
    }

    pub fn tz(&self) -> Tz {
        self.tz
    }

    pub fn delta_secs(&self) -> u32 {
        self.delta_secs
    }

    pub fn windows_per_day(&self) -> u32 {
        SECS_PER_DAY / self.delta_secs
    }

    fn datetime(&self, ts: Micros) -> DateTime<Tz> {
        let secs = ts.div_euclid(MICROS_PER_SEC);
        let nanos = (ts.rem_euclid(MICROS_PER_SEC) * 1_000) as u32;
        self.tz
            .timestamp_opt(secs, nanos)
            .single()
            .expect("UTC instants map to exactly one local time")
    }

    pub fn local(&self, ts: Micros) -> NaiveDateTime {
        self.datetime(ts).naive_local()
    }

    pub fn local_date(&self, ts: Micros) -> NaiveDate {
        self.local(ts).date()
    }

    /// Seconds since local midnight, ignoring the sub-second part.
    pub fn seconds_of_day(&self, ts: Micros) -> u32 {
        self.local(ts).num_seconds_from_midnight()
    }

    pub fn window_index(&self, ts: Micros) -> u32 {
        self.seconds_of_day(ts) / self.delta_secs
    }

    /// UTC instant of the local Δ boundary at or before `ts`.
    pub fn window_start(&self, ts: Micros) -> Micros {
        let local = self.local(ts);
        let into_window = (local.num_seconds_from_midnight() % self.delta_secs) as i64;
        let sub = ts.rem_euclid(MICROS_PER_SEC);
        ts - sub - into_window * MICROS_PER_SEC
    }

    /// UTC instant for a local wall-clock time. Ambiguous times resolve to the
    /// earlier instant; times inside a DST gap are shifted forward by the gap.
    pub fn instant(&self, date: NaiveDate, seconds_of_day: u32) -> Micros {
        let base = date.and_hms_opt(0, 0, 0).expect("midnight exists");
        let naive = base + chrono::Duration::seconds(seconds_of_day as i64);
        let resolved = match self.tz.from_local_datetime(&naive) {
            LocalResult::Single(dt) => dt,
            LocalResult::Ambiguous(early, _) => early,
            LocalResult::None => {
                let shifted = naive + chrono::Duration::hours(1);
                self.tz
                    .from_local_datetime(&shifted)
                    .earliest()
                    .expect("one hour past a DST gap is a valid local time")
            }
        };
        resolved.timestamp() * MICROS_PER_SEC + (resolved.nanosecond() / 1_000) as i64
    }

    pub fn midnight(&self, date: NaiveDate) -> Micros {
        self.instant(date, 0)
    }

    /// `<dataset>__YYYYMMDD_HHMM` for the window containing `ts`; windows
    /// that are not whole minutes get a trailing `SS`.
    pub fn partition_name(&self, dataset: &str, ts: Micros) -> String {
        let local = self.local(self.window_start(ts));
        let mut name = format!(
            "{dataset}__{:04}{:02}{:02}_{:02}{:02}",
            local.year(),
            local.month(),
            local.day(),
            local.hour(),
            local.minute()
        );
        if !self.delta_secs.is_multiple_of(60) {
            name.push_str(&format!("{:02}", local.second()));
        }
        name
    }
}

/// Parses the local date back out of a `<dataset>__YYYYMMDD_HHMM` name.
pub fn partition_date(name: &str) -> Option<NaiveDate> {
    let stem = name.strip_suffix(".jsonl").unwrap_or(name);
    let (_, tail) = stem.rsplit_once("__")?;
    let (day, _) = tail.split_once('_')?;
    NaiveDate::parse_from_str(day, "%Y%m%d").ok()
}

pub fn days_inclusive(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    if from > to {
        return Vec::new();
    }
    from.iter_days().take_while(|d| *d <= to).collect()
}
