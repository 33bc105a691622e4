use serde::{Deserialize, Serialize};

/// Triangular membership limits in the feature's own units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangularMF {
    pub lo: f64,
    pub mid: f64,
    pub hi: f64,
    /// Report `1 - μ`, for features where less means more evidence.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfProblem {
    NonFinite,
    LoAboveMid,
    MidAboveHi,
    Collapsed,
}

impl MfProblem {
    /// Which limit the problem is reported against.
    pub fn field(self) -> &'static str {
        match self {
            MfProblem::NonFinite | MfProblem::LoAboveMid => "lo",
            MfProblem::MidAboveHi => "mid",
            MfProblem::Collapsed => "hi",
        }
    }

    pub fn message(self) -> &'static str {
        match self {
            MfProblem::NonFinite => "limits must be finite",
            MfProblem::LoAboveMid => "lo must not exceed mid",
            MfProblem::MidAboveHi => "mid must not exceed hi",
            MfProblem::Collapsed => "lo, mid and hi must not all be equal",
        }
    }
}

impl TriangularMF {
    pub fn new(lo: f64, mid: f64, hi: f64) -> Result<Self, MfProblem> {
        let mf = TriangularMF {
            lo,
            mid,
            hi,
            inverted: false,
        };
        mf.check()?;
        Ok(mf)
    }

    pub fn check(&self) -> Result<(), MfProblem> {
        if !(self.lo.is_finite() && self.mid.is_finite() && self.hi.is_finite()) {
            return Err(MfProblem::NonFinite);
        }
        if self.lo > self.mid {
            return Err(MfProblem::LoAboveMid);
        }
        if self.mid > self.hi {
            return Err(MfProblem::MidAboveHi);
        }
        if self.lo == self.hi {
            return Err(MfProblem::Collapsed);
        }
        Ok(())
    }
}

/// Piecewise-linear triangle. The peak wins at `x == mid`, so a right
/// shoulder (`mid == hi`) reads 1 at `hi` and 0 beyond it.
pub fn tri_membership(x: f64, mf: &TriangularMF) -> Option<f64> {
    if !x.is_finite() {
        return None;
    }
    let TriangularMF { lo, mid, hi, .. } = *mf;
    let mu = if x == mid {
        1.0
    } else if x <= lo {
        0.0
    } else if x < mid {
        (x - lo) / (mid - lo)
    } else if x < hi {
        (hi - x) / (hi - mid)
    } else {
        0.0
    };
    Some(if mf.inverted { 1.0 - mu } else { mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mf(lo: f64, mid: f64, hi: f64) -> TriangularMF {
        TriangularMF::new(lo, mid, hi).unwrap()
    }

    #[test]
    fn wake_limits() {
        let m = mf(120.0, 1085.0, 1085.0);
        assert_eq!(tri_membership(120.0, &m), Some(0.0));
        assert_eq!(tri_membership(602.5, &m), Some(0.5));
        assert_eq!(tri_membership(1085.0, &m), Some(1.0));
        assert_eq!(tri_membership(1200.0, &m), Some(0.0));
    }

    #[test]
    fn descending_branch() {
        let m = mf(0.0, 0.08, 0.16);
        assert!((tri_membership(0.12, &m).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn left_shoulder_peaks_at_lo() {
        let m = mf(1.0, 1.0, 3.0);
        assert_eq!(tri_membership(1.0, &m), Some(1.0));
        assert_eq!(tri_membership(0.5, &m), Some(0.0));
        assert_eq!(tri_membership(2.0, &m), Some(0.5));
    }

    #[test]
    fn inversion() {
        let mut m = mf(0.0, 1.0, 2.0);
        m.inverted = true;
        assert_eq!(tri_membership(1.0, &m), Some(0.0));
        assert_eq!(tri_membership(5.0, &m), Some(1.0));
    }

    #[test]
    fn non_finite_is_missing() {
        let m = mf(0.0, 1.0, 2.0);
        assert_eq!(tri_membership(f64::NAN, &m), None);
        assert_eq!(tri_membership(f64::INFINITY, &m), None);
    }

    #[test]
    fn rejects_bad_limits() {
        assert_eq!(TriangularMF::new(2.0, 1.0, 3.0), Err(MfProblem::LoAboveMid));
        assert_eq!(TriangularMF::new(0.0, 4.0, 3.0), Err(MfProblem::MidAboveHi));
        assert_eq!(TriangularMF::new(1.0, 1.0, 1.0), Err(MfProblem::Collapsed));
    }

    fn limits() -> impl Strategy<Value = TriangularMF> {
        (-1e3f64..1e3, 0f64..1e3, 0f64..1e3)
            .prop_filter("non-degenerate", |(_, a, b)| a + b > 0.0)
            .prop_map(|(lo, a, b)| TriangularMF {
                lo,
                mid: lo + a,
                hi: lo + a + b,
                inverted: false,
            })
    }

    proptest! {
        #[test]
        fn image_in_unit_interval(m in limits(), x in -3e3f64..3e3, inv: bool) {
            let m = TriangularMF { inverted: inv, ..m };
            let mu = tri_membership(x, &m).unwrap();
            prop_assert!((0.0..=1.0).contains(&mu));
        }

        #[test]
        fn rises_then_falls(m in limits(), a in 0f64..1.0, b in 0f64..1.0) {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let up = |t: f64| m.lo + t * (m.mid - m.lo);
            prop_assert!(tri_membership(up(a), &m) <= tri_membership(up(b), &m));
            if m.hi > m.mid {
                let down = |t: f64| m.mid + (t * (m.hi - m.mid)).max(f64::MIN_POSITIVE);
                prop_assert!(tri_membership(down(a), &m) >= tri_membership(down(b), &m));
            }
        }
    }
}
