use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalDirection {
    Plus,
    Minus,
    Both,
}

/// One entry of the feature taxonomy. Only slots with `implemented_as` set
/// have an extractor and shipped limits.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FeatureSlot {
    pub criterion: u8,
    pub feature: &'static str,
    pub bom: &'static str,
    pub direction: SignalDirection,
    /// "HLD" for daily aggregates, "LLD" for session or burst measures.
    pub level: &'static str,
    pub signal_group: &'static str,
    pub implemented_as: Option<&'static str>,
}

macro_rules! slot {
    ($c:expr, $f:expr, $b:expr, $d:ident, $l:expr, $g:expr) => {
        slot!($c, $f, $b, $d, $l, $g, None)
    };
    ($c:expr, $f:expr, $b:expr, $d:ident, $l:expr, $g:expr, $imp:expr) => {
        FeatureSlot {
            criterion: $c,
            feature: $f,
            bom: $b,
            direction: SignalDirection::$d,
            level: $l,
            signal_group: $g,
            implemented_as: $imp,
        }
    };
}

static CATALOG: &[FeatureSlot] = &[
    slot!(1, "Distinct social domains (eTLD+1)", "Reduced social interaction", Minus, "HLD", "Service"),
    slot!(1, "Median chat session duration", "Reduced social interaction", Minus, "LLD", "Session"),
    slot!(1, "Long streaming session duration", "Passive media binge", Plus, "LLD", "Session"),
    slot!(1, "Down/Up byte ratio", "Passive media binge", Plus, "HLD", "Volume"),
    slot!(1, "Revisit diversity (Shannon index)", "Rumination loops", Minus, "HLD", "Navigation"),
    slot!(1, "Short-interval repeated visits", "Rumination loops", Plus, "LLD", "Navigation"),
    slot!(1, "Hourly traffic coefficient of variation", "Flattened diurnal rhythm", Minus, "HLD", "Rhythm"),
    slot!(1, "Night/Day traffic ratio", "Flattened diurnal rhythm", Plus, "HLD", "Rhythm"),
    slot!(2, "Domain diversity (count eTLD+1)", "Interest breadth", Minus, "HLD", "Service"),
    slot!(2, "Category entropy (IAB topic mix)", "Interest breadth", Minus, "HLD", "Service"),
    slot!(2, "Chat session count", "Engagement", Minus, "HLD", "Session"),
    slot!(2, "Reply latency", "Engagement", Plus, "LLD", "Interaction"),
    slot!(2, "Passive/active ratio", "Passivity", Plus, "HLD", "Volume"),
    slot!(2, "Upload-burst rate per active hour", "Passivity", Minus, "HLD", "Interaction"),
    slot!(3, "Delivery activity deviation (z-score)", "Ordering activity", Both, "HLD", "Service"),
    slot!(3, "Late-night delivery share", "Ordering timing", Plus, "HLD", "Rhythm"),
    slot!(3, "Diet/nutrition domain exposure", "Diet focus", Both, "HLD", "Service"),
    slot!(4, "Wake time (min after 04:00)", "Shifted sleep timing", Plus, "HLD", "Rhythm", Some(super::WAKE_AFTER_0400_MIN)),
    slot!(4, "Digital sleep onset (min after 22:00)", "Shifted sleep timing", Plus, "HLD", "Rhythm"),
    slot!(4, "Onset-time variability (14-day circular SD)", "Shifted timing irregularity", Plus, "HLD", "Rhythm"),
    slot!(4, "Main nightly idle-gap length", "Sleep duration change", Both, "HLD", "Rhythm", Some(super::SLEEP_DURATION_Z_ABS_30D)),
    slot!(4, "Nocturnal micro-session count", "Sleep fragmentation", Plus, "LLD", "Rhythm"),
    slot!(4, "Inter-awakening gap (median)", "Sleep fragmentation", Minus, "LLD", "Rhythm"),
    slot!(4, "Daytime idle ratio (08-18 h)", "Daytime hypersomnia / flattening", Plus, "HLD", "Rhythm", Some(super::DAYTIME_IDLE_RATIO_0818)),
    slot!(4, "Night/Day traffic ratio", "Flattened rhythm", Plus, "HLD", "Rhythm", Some(super::NIGHT_DAY_TRAFFIC_RATIO_BYTES)),
    slot!(5, "Wi-Fi re-associations/DHCP renewals", "Restlessness (device churn)", Plus, "LLD", "Mgmt"),
    slot!(5, "Very short sessions (<15 s) count", "Restlessness (micro-activity)", Plus, "LLD", "Session"),
    slot!(5, "Median inter-session gap", "Motor slowing vs. agitation", Both, "HLD", "Session"),
    slot!(6, "Midday idle minutes share", "Low energy", Plus, "HLD", "Rhythm"),
    slot!(6, "Daytime session count", "Low energy", Minus, "HLD", "Session"),
    slot!(6, "Sent bytes per active hour", "Effortful interaction", Minus, "HLD", "Volume"),
    slot!(6, "Upload-burst rate per active hour", "Effortful interaction", Minus, "HLD", "Interaction"),
    slot!(6, "Inter-click interval (mean/variance)", "Slow browsing tempo", Plus, "LLD", "Interaction"),
    slot!(7, "Mental-health resource domains (visits)", "Help-seeking / self-worth", Plus, "HLD", "Service"),
    slot!(7, "Therapist directory domains (visits)", "Help-seeking", Plus, "HLD", "Service"),
    slot!(8, "Median page dwell time", "Fragmented focus", Minus, "LLD", "Navigation"),
    slot!(8, "DNS lookup burst rate (tab-hopping)", "Fragmented focus", Plus, "LLD", "Navigation", Some(super::DNS_BURST_RATE_PER_HOUR)),
    slot!(8, "Repeated queries within an hour", "Checking / uncertainty", Plus, "HLD", "Navigation", Some(super::REPEATED_QUERY_RATIO_60M)),
    slot!(8, "Inter-keystroke gap (median)", "Interaction tempo", Plus, "LLD", "Interaction", Some(super::MEDIAN_IKS_SEC)),
    slot!(8, "Notification-triggered micro-sessions", "Interruptions", Plus, "LLD", "Session"),
    slot!(8, "Back-navigation rate after click", "Indecisive search", Plus, "HLD", "Navigation"),
    slot!(8, "Search back-to-landing within 60 s", "Indecisive search", Plus, "HLD", "Navigation"),
    slot!(8, "SERP time-to-first-click", "Indecision latency", Plus, "LLD", "Navigation"),
    slot!(9, "Crisis-line domains (visits)", "Crisis seeking", Plus, "HLD", "Service"),
    slot!(9, "Self-harm community domains (visits)", "Self-harm exposure", Plus, "HLD", "Service"),
    slot!(9, "Cloud-backup surge (GB/day)", "Digital affairs / planning", Plus, "HLD", "Volume"),
];

pub fn catalog() -> &'static [FeatureSlot] {
    CATALOG
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_implemented_feature_has_one_slot() {
        for name in super::super::IMPLEMENTED_FEATURES {
            let n = catalog().iter().filter(|s| s.implemented_as == Some(name)).count();
            assert_eq!(n, 1, "{name}");
        }
    }

    #[test]
    fn criteria_in_range() {
        assert!(catalog().iter().all(|s| (1..=9).contains(&s.criterion)));
    }
}
