use serde::{Deserialize, Serialize};

use crate::clock::{Micros, MICROS_PER_SEC};

/// Default session gap: one five-minute window.
pub const DEFAULT_GAP_SECS: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub start: Micros,
    pub end: Micros,
}

impl Session {
    pub fn duration(&self) -> Micros {
        self.end - self.start
    }
}

/// Splits sorted timestamps into maximal runs whose inter-arrival gaps are
/// at most `gap_threshold_secs`.
pub fn sessions_from_timestamps(timestamps: &[Micros], gap_threshold_secs: u32) -> Vec<Session> {
    debug_assert!(timestamps.windows(2).all(|w| w[0] <= w[1]));
    let gap = gap_threshold_secs as i64 * MICROS_PER_SEC;
    let mut sessions: Vec<Session> = Vec::new();
    for &t in timestamps {
        match sessions.last_mut() {
            Some(s) if t - s.end <= gap => s.end = t,
            _ => sessions.push(Session { start: t, end: t }),
        }
    }
    sessions
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T: Micros = 1_700_000_000_000_000;
    const S: Micros = MICROS_PER_SEC;

    #[test]
    fn empty() {
        assert!(sessions_from_timestamps(&[], 300).is_empty());
    }

    #[test]
    fn one_session() {
        let s = sessions_from_timestamps(&[T, T + 100 * S], 300);
        assert_eq!(s, vec![Session { start: T, end: T + 100 * S }]);
        assert_eq!(s[0].duration(), 100 * S);
    }

    #[test]
    fn two_zero_length_sessions() {
        let s = sessions_from_timestamps(&[T, T + 400 * S], 300);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| x.duration() == 0));
    }

    #[test]
    fn gap_equal_to_threshold_joins() {
        assert_eq!(sessions_from_timestamps(&[T, T + 300 * S], 300).len(), 1);
    }

    proptest! {
        #[test]
        fn sessions_cover_and_separate(mut ts in prop::collection::vec(0i64..10_000_000_000, 0..200), gap in 1u32..2_000) {
            ts.sort_unstable();
            let sessions = sessions_from_timestamps(&ts, gap);
            let g = gap as i64 * S;
            for w in sessions.windows(2) {
                prop_assert!(w[1].start - w[0].end > g);
            }
            for t in &ts {
                prop_assert_eq!(sessions.iter().filter(|s| s.start <= *t && *t <= s.end).count(), 1);
            }
        }
    }
}
