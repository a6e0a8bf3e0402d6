//! Closed, bounded real intervals and the affine transports used to carry
//! one interval onto another.
//!
//! All operations are exact endpoint arithmetic. Every identified set in
//! the crate is built from [`Interval`] values through the Minkowski sum,
//! the Minkowski difference, nonnegative scaling, and [`LinearIntervalMap`].

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance used when comparing endpoints.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A closed interval `[lower, upper]` with finite endpoints and
/// `lower <= upper`. A degenerate interval stands for scalar data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Endpoints", into = "Endpoints")]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    /// Builds an interval, rejecting non-finite endpoints and reversed
    /// endpoints. Reversed endpoints are never swapped.
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidInterval {
                lower,
                upper,
                reason: "endpoints must be finite",
            });
        }
        if lower > upper {
            return Err(Error::InvalidInterval {
                lower,
                upper,
                reason: "lower endpoint exceeds upper endpoint",
            });
        }
        Ok(Self { lower, upper })
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Result<Self> {
        Self::new(x, x)
    }

    // Callers guarantee finiteness and order by construction (monotone
    // endpoint arithmetic on valid inputs).
    fn from_ordered(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper, "unordered endpoints {lower} > {upper}");
        Self { lower, upper }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Set inclusion: `other ⊆ self`.
    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }

    /// The point `lower + t * width`; `t = 0` and `t = 1` give the endpoints.
    pub fn point_at(&self, t: f64) -> f64 {
        if t == 0.0 {
            self.lower
        } else if t == 1.0 {
            self.upper
        } else {
            self.lower + t * (self.upper - self.lower)
        }
    }

    /// `[lower + c, upper + c]`.
    pub fn shift(&self, c: f64) -> Result<Self> {
        Self::new(self.lower + c, self.upper + c)
    }

    /// Nonnegative scaling `[c * lower, c * upper]`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        scale(*self, c)
    }

    /// Endpoint-wise comparison within an absolute tolerance.
    pub fn approx_eq(&self, other: &Interval, tol: f64) -> bool {
        (self.lower - other.lower).abs() <= tol && (self.upper - other.upper).abs() <= tol
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

/// Minkowski sum.
impl Add for Interval {
    type Output = Interval;

    fn add(self, rhs: Interval) -> Interval {
        minkowski_sum(self, rhs)
    }
}

/// Minkowski difference `{a - b}`.
impl Sub for Interval {
    type Output = Interval;

    fn sub(self, rhs: Interval) -> Interval {
        minkowski_diff(self, rhs)
    }
}

/// A pair of endpoints that may or may not form a valid interval.
///
/// Used for candidate images whose validity is itself under test (for
/// example a bound-by-bound extrapolation that can come out reversed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub lower: f64,
    pub upper: f64,
}

impl Endpoints {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn is_valid(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite() && self.lower <= self.upper
    }

    pub fn to_interval(self) -> Result<Interval> {
        Interval::new(self.lower, self.upper)
    }
}

impl From<Interval> for Endpoints {
    fn from(i: Interval) -> Self {
        Self {
            lower: i.lower,
            upper: i.upper,
        }
    }
}

impl TryFrom<Endpoints> for Interval {
    type Error = Error;

    fn try_from(e: Endpoints) -> Result<Self> {
        e.to_interval()
    }
}

/// `[a.lower + b.lower, a.upper + b.upper]`.
pub fn minkowski_sum(a: Interval, b: Interval) -> Interval {
    Interval::from_ordered(a.lower + b.lower, a.upper + b.upper)
}

/// `[a.lower - b.upper, a.upper - b.lower]`; its width is the sum of widths.
pub fn minkowski_diff(a: Interval, b: Interval) -> Interval {
    Interval::from_ordered(a.lower - b.upper, a.upper - b.lower)
}

/// Scales by a nonnegative constant. Negative factors would reverse the
/// endpoints and are rejected.
pub fn scale(a: Interval, c: f64) -> Result<Interval> {
    if !c.is_finite() || c < 0.0 {
        return Err(Error::Precondition(format!(
            "scale factor must be finite and nonnegative, got {c}"
        )));
    }
    Ok(Interval::from_ordered(c * a.lower, c * a.upper))
}

/// Increasing affine map `x ↦ slope * (x - anchor_in) + anchor_out`,
/// applied to intervals endpoint by endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearIntervalMap {
    slope: f64,
    anchor_in: f64,
    anchor_out: f64,
}

impl LinearIntervalMap {
    pub fn new(slope: f64, anchor_in: f64, anchor_out: f64) -> Result<Self> {
        if !slope.is_finite() || slope < 0.0 {
            return Err(Error::InvalidMap(format!(
                "slope must be finite and nonnegative, got {slope}"
            )));
        }
        if !anchor_in.is_finite() || !anchor_out.is_finite() {
            return Err(Error::InvalidMap("anchors must be finite".into()));
        }
        Ok(Self {
            slope,
            anchor_in,
            anchor_out,
        })
    }

    pub fn identity() -> Self {
        Self {
            slope: 1.0,
            anchor_in: 0.0,
            anchor_out: 0.0,
        }
    }

    /// The unique increasing affine map sending `from` onto `to`
    /// (lower to lower, upper to upper). Requires `from.width() > floor`.
    pub fn carrying(from: Interval, to: Interval, floor: f64) -> Result<Self> {
        let w = from.width();
        if w <= floor {
            return Err(Error::InvalidMap(format!(
                "source interval {from} has width {w}, not above floor {floor}"
            )));
        }
        Self::new(to.width() / w, from.lower, to.lower)
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn anchor_in(&self) -> f64 {
        self.anchor_in
    }

    pub fn anchor_out(&self) -> f64 {
        self.anchor_out
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.slope * (x - self.anchor_in) + self.anchor_out
    }

    pub fn apply(&self, a: Interval) -> Interval {
        apply_map(self, a)
    }
}

/// `[m(a.lower), m(a.upper)]`. Valid because the slope is nonnegative.
pub fn apply_map(m: &LinearIntervalMap, a: Interval) -> Interval {
    let lo = m.eval(a.lower);
    let hi = m.eval(a.upper);
    // A zero slope can still leave `lo` and `hi` a rounding apart.
    Interval::from_ordered(lo.min(hi), hi.max(lo))
}

/// Outcome of checking a candidate map `(A1, A2, B1) ↦ B2` against the
/// three shape conditions: validity, proportional length change, and a
/// common positive movement factor for both endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaReport {
    /// `b2.lower <= b2.upper`.
    pub valid_interval: bool,
    /// `|B2| / |B1| == |A2| / |A1|`.
    pub proportional_width: bool,
    /// Both endpoint movements of B are the same positive multiple of A's.
    pub parallel_movement: bool,
    /// The common factor, when the movements pin it down. `None` means
    /// no endpoint of A moved, so any positive factor works.
    pub gamma: Option<f64>,
}

impl LemmaReport {
    pub fn all_hold(&self) -> bool {
        self.valid_interval && self.proportional_width && self.parallel_movement
    }
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * 1f64.max(x.abs()).max(y.abs())
}

/// Checks the three shape conditions with the default tolerance.
pub fn check_lemma_conditions(
    a1: Interval,
    a2: Interval,
    b1: Interval,
    b2: impl Into<Endpoints>,
) -> Result<LemmaReport> {
    check_lemma_conditions_tol(a1, a2, b1, b2, DEFAULT_TOL)
}

/// Checks the three shape conditions; equalities hold to `tol` relative to
/// the magnitude of the compared quantities (absolute below magnitude 1).
pub fn check_lemma_conditions_tol(
    a1: Interval,
    a2: Interval,
    b1: Interval,
    b2: impl Into<Endpoints>,
    tol: f64,
) -> Result<LemmaReport> {
    let b2 = b2.into();
    if a1.width() <= 0.0 || b1.width() <= 0.0 {
        return Err(Error::Precondition(
            "shape conditions need positive widths for A1 and B1".into(),
        ));
    }

    let valid_interval = b2.lower <= b2.upper;
    let b2_width = b2.upper - b2.lower;
    let proportional_width = close(b2_width * a1.width(), a2.width() * b1.width(), tol);

    let da_u = a2.upper - a1.upper;
    let da_l = a2.lower - a1.lower;
    let db_u = b2.upper - b1.upper;
    let db_l = b2.lower - b1.lower;

    // Pin gamma from the endpoint where A moved most, then require the
    // other endpoint to agree with it.
    let a_scale = 1f64.max(a1.lower.abs()).max(a1.upper.abs());
    let moved = |d: f64| d.abs() > tol * a_scale;
    let gamma = if !moved(da_u) && !moved(da_l) {
        None
    } else if da_u.abs() >= da_l.abs() {
        Some(db_u / da_u)
    } else {
        Some(db_l / da_l)
    };
    let parallel_movement = match gamma {
        None => close(db_u, 0.0, tol) && close(db_l, 0.0, tol),
        Some(g) => g > 0.0 && close(db_u, g * da_u, tol) && close(db_l, g * da_l, tol),
    };

    Ok(LemmaReport {
        valid_interval,
        proportional_width,
        parallel_movement,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(l: f64, u: f64) -> Interval {
        Interval::new(l, u).unwrap()
    }

    #[test]
    fn construction_rejects_reversed_and_infinite() {
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 1.0).is_err());
        assert!(Interval::new(0.0, f64::NAN).is_err());
        let p = Interval::point(3.0).unwrap();
        assert!(p.is_degenerate());
        assert_eq!(p.width(), 0.0);
    }

    #[test]
    fn minkowski_sum_examples() {
        assert_eq!(minkowski_sum(iv(1.0, 3.0), iv(0.0, 2.0)), iv(1.0, 5.0));
        let a = iv(-2.5, 7.0);
        assert_eq!(a + iv(0.0, 0.0), a);
        assert_eq!(iv(-3.0, -1.0) + iv(2.0, 2.0), iv(-1.0, 1.0));
    }

    #[test]
    fn minkowski_diff_examples() {
        assert_eq!(minkowski_diff(iv(1.0, 3.0), iv(0.0, 2.0)), iv(-1.0, 3.0));
        let a = iv(-2.5, 7.0);
        assert_eq!(a - iv(0.0, 0.0), a);
        assert_eq!(iv(0.0, 0.0) - iv(-4.0, -3.5), iv(3.5, 4.0));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(scale(iv(15.0, 15.0), 0.5).unwrap(), iv(7.5, 7.5));
        assert_eq!(scale(iv(1.0, 3.0), 0.0).unwrap(), iv(0.0, 0.0));
        assert_eq!(scale(iv(10.0, 20.0), 0.5).unwrap(), iv(5.0, 10.0));
        assert!(scale(iv(1.0, 2.0), -1.0).is_err());
    }

    #[test]
    fn apply_map_examples() {
        let t = LinearIntervalMap::new(0.25, 1.0, 0.0).unwrap();
        assert!(t.apply(iv(-3.0, -1.0)).approx_eq(&iv(-1.0, -0.5), 1e-12));
        assert_eq!(LinearIntervalMap::identity().apply(iv(2.0, 5.0)), iv(2.0, 5.0));
        let s = LinearIntervalMap::new(1.0, 1.0, -3.0).unwrap();
        assert!(s.apply(iv(0.0, 0.5)).approx_eq(&iv(-4.0, -3.5), 1e-12));
        assert!(LinearIntervalMap::new(-0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn carrying_map_hits_both_endpoints() {
        let from = iv(1.0, 3.0);
        let to = iv(0.0, 0.5);
        let m = LinearIntervalMap::carrying(from, to, 0.0).unwrap();
        assert!(m.apply(from).approx_eq(&to, 1e-12));
        assert!(LinearIntervalMap::carrying(iv(2.0, 2.0), to, 0.0).is_err());
    }

    #[test]
    fn shape_checks_hold_for_parallel_shift_image() {
        let r = check_lemma_conditions(iv(1.0, 3.0), iv(0.0, 0.5), iv(-3.0, -1.0), iv(-4.0, -3.5))
            .unwrap();
        assert!(r.all_hold());
        assert!((r.gamma.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn movement_check_fails_for_interval_trend_image() {
        let r = check_lemma_conditions(iv(1.0, 3.0), iv(0.0, 0.5), iv(-3.0, -1.0), iv(-1.0, -0.5))
            .unwrap();
        assert!(r.valid_interval);
        assert!(r.proportional_width);
        assert!(!r.parallel_movement);
    }

    #[test]
    fn shape_checks_degenerate_movement() {
        let a = iv(1.0, 3.0);
        let b = iv(-2.0, 5.0);
        let r = check_lemma_conditions(a, a, b, b).unwrap();
        assert!(r.all_hold());
        assert_eq!(r.gamma, None);
    }

    #[test]
    fn shape_checks_reject_reversed_candidate_and_zero_width() {
        let r = check_lemma_conditions(
            iv(0.0, 3.0),
            iv(2.0, 3.0),
            iv(0.0, 1.0),
            Endpoints::new(2.0, 1.0),
        )
        .unwrap();
        assert!(!r.valid_interval);
        assert!(check_lemma_conditions(iv(1.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0)).is_err());
        assert!(check_lemma_conditions(iv(0.0, 1.0), iv(0.0, 1.0), iv(2.0, 2.0), iv(0.0, 1.0)).is_err());
    }

    fn interval_strategy() -> impl Strategy<Value = Interval> {
        (-10.0f64..10.0, 0.0f64..5.0).prop_map(|(l, w)| iv(l, l + w))
    }

    fn wide_interval() -> impl Strategy<Value = Interval> {
        (-10.0f64..10.0, 0.05f64..5.0).prop_map(|(l, w)| iv(l, l + w))
    }

    proptest! {
        #[test]
        fn diff_width_is_sum_of_widths(a in interval_strategy(), b in interval_strategy()) {
            let d = minkowski_diff(a, b);
            prop_assert!((d.width() - (a.width() + b.width())).abs() < 1e-12);
        }

        #[test]
        fn map_scales_width(a in interval_strategy(), s in 0.0f64..4.0, ai in -5.0f64..5.0, ao in -5.0f64..5.0) {
            let m = LinearIntervalMap::new(s, ai, ao).unwrap();
            let img = m.apply(a);
            prop_assert!(img.lower() <= img.upper());
            prop_assert!((img.width() - s * a.width()).abs() < 1e-12);
        }

        #[test]
        fn shift_image_passes_shape_checks(a1 in wide_interval(), a2 in interval_strategy(), b1 in wide_interval()) {
            let s = LinearIntervalMap::carrying(a1, b1, 0.0).unwrap();
            let b2 = s.apply(a2);
            let r = check_lemma_conditions(a1, a2, b1, b2).unwrap();
            prop_assert!(r.all_hold(), "{r:?}");
            if let Some(g) = r.gamma {
                prop_assert!((g - b1.width() / a1.width()).abs() < 1e-6);
            }
        }
    }
}
