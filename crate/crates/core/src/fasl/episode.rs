use std::collections::BTreeMap;

/// Depressed mood and loss of interest.
pub const CORE_CRITERIA: [u8; 2] = [1, 2];
pub const EPISODE_MIN_CRITERIA: usize = 5;

/// At least five of criteria 1–9 present, one of them core. Criteria not in
/// the map count as absent.
pub fn episode(presence: &BTreeMap<u8, bool>) -> bool {
    let present = |k: &u8| presence.get(k).copied().unwrap_or(false);
    let count = (1..=9u8).filter(present).count();
    count >= EPISODE_MIN_CRITERIA && CORE_CRITERIA.iter().any(present)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn of(ks: &[u8]) -> BTreeMap<u8, bool> {
        ks.iter().map(|k| (*k, true)).collect()
    }

    #[test]
    fn five_with_core() {
        assert!(episode(&of(&[1, 2, 3, 4, 5])));
    }

    #[test]
    fn five_without_core() {
        assert!(!episode(&of(&[3, 4, 5, 6, 7])));
    }

    #[test]
    fn only_four() {
        assert!(!episode(&of(&[1, 2, 4, 8])));
    }

    #[test]
    fn false_entries_do_not_count() {
        let mut p = of(&[1, 3, 4, 5]);
        p.insert(6, false);
        assert!(!episode(&p));
    }
}
