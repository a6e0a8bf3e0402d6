//! Sample-analog identified sets for the counterfactual mean
//! `E[Y2(0) | D = 1]` and the ATT under each identifying assumption.
//!
//! Notation used in comments: `A1`, `A2` are the control group's Aumann
//! means in periods 1 and 2, `B1`, `B2` the treated group's.
//!
//! | assumption | counterfactual set |
//! |------------|--------------------|
//! | SPT        | `B1 ⊕ (A2 ⊖ A1)` |
//! | IPT        | `T(B1)`, `T` carries `A1` onto `A2` |
//! | PS         | `S(A2)`, `S` carries `A1` onto `B1` |
//! | CPS        | treated-weighted average of cell-level `S(A2; x)` |
//!
//! In every case the ATT set is `B2 ⊖ counterfactual`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{minkowski_diff, minkowski_sum, Endpoints, Interval, LinearIntervalMap};
use crate::numeric::canonical_sum;
use crate::panel::{aumann_mean, PanelUnit};

/// Below this mean width a transport's denominator counts as zero.
pub const DEFAULT_WIDTH_FLOOR: f64 = 1e-12;

/// Tolerance for the runtime cross-check of the two parallel-shift routes.
pub const CROSS_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Assumption {
    /// Scalar parallel trends on the latent outcome.
    #[serde(rename = "SPT")]
    Spt,
    /// Interval parallel trends.
    #[serde(rename = "IPT")]
    Ipt,
    /// Parallel shifts.
    #[serde(rename = "PS")]
    Ps,
    /// Parallel shifts within discrete covariate cells.
    #[serde(rename = "CPS")]
    Cps,
}

impl Assumption {
    pub const ALL: [Assumption; 4] = [Assumption::Spt, Assumption::Ipt, Assumption::Ps, Assumption::Cps];

    pub fn as_str(self) -> &'static str {
        match self {
            Assumption::Spt => "SPT",
            Assumption::Ipt => "IPT",
            Assumption::Ps => "PS",
            Assumption::Cps => "CPS",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SPT" => Ok(Assumption::Spt),
            "IPT" => Ok(Assumption::Ipt),
            "PS" => Ok(Assumption::Ps),
            "CPS" => Ok(Assumption::Cps),
            other => Err(Error::Config(format!("unknown assumption `{other}`"))),
        }
    }
}

/// The eight group means `E[Y^l_t | D = d]`, `E[Y^u_t | D = d]` and the
/// group sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMomentVector {
    /// Control `(a1_lower, a1_upper, a2_lower, a2_upper)`.
    pub control: [f64; 4],
    /// Treated `(b1_lower, b1_upper, b2_lower, b2_upper)`.
    pub treated: [f64; 4],
    pub n0: usize,
    pub n1: usize,
}

impl GroupMomentVector {
    pub fn from_intervals(
        a1: Interval,
        a2: Interval,
        b1: Interval,
        b2: Interval,
        n0: usize,
        n1: usize,
    ) -> Result<Self> {
        if n0 == 0 {
            return Err(Error::EmptyGroup("control"));
        }
        if n1 == 0 {
            return Err(Error::EmptyGroup("treated"));
        }
        Ok(Self {
            control: [a1.lower(), a1.upper(), a2.lower(), a2.upper()],
            treated: [b1.lower(), b1.upper(), b2.lower(), b2.upper()],
            n0,
            n1,
        })
    }

    /// Sample means of a panel.
    pub fn from_panel(panel: &[PanelUnit]) -> Result<Self> {
        let (treated, control): (Vec<&PanelUnit>, Vec<&PanelUnit>) =
            panel.iter().partition(|u| u.treated);
        let mean = |units: &[&PanelUnit], name: &'static str| -> Result<(Interval, Interval)> {
            let y1: Vec<Interval> = units.iter().map(|u| u.y1).collect();
            let y2: Vec<Interval> = units.iter().map(|u| u.y2).collect();
            Ok((
                aumann_mean(&y1).ok_or(Error::EmptyGroup(name))?,
                aumann_mean(&y2).ok_or(Error::EmptyGroup(name))?,
            ))
        };
        let (a1, a2) = mean(&control, "control")?;
        let (b1, b2) = mean(&treated, "treated")?;
        Self::from_intervals(a1, a2, b1, b2, control.len(), treated.len())
    }

    /// Probability-weighted means, used for exact population moments.
    /// Each item is `(weight, treated, y1, y2)`.
    pub fn from_weighted<'a, I>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, bool, Interval, Interval)>,
        I::IntoIter: Clone + 'a,
    {
        let atoms = atoms.into_iter();
        let arm = |treated: bool, name: &'static str| -> Result<([f64; 4], usize)> {
            let members: Vec<(f64, [f64; 4])> = atoms
                .clone()
                .filter(|a| a.1 == treated && a.0 > 0.0)
                .map(|(w, _, y1, y2)| (w, [y1.lower(), y1.upper(), y2.lower(), y2.upper()]))
                .collect();
            let mass = canonical_sum(members.iter().map(|m| m.0));
            if members.is_empty() || mass <= 0.0 {
                return Err(Error::EmptyGroup(name));
            }
            let mut out = [0.0; 4];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = canonical_sum(members.iter().map(|(w, y)| w * y[k])) / mass;
            }
            out[1] = out[1].max(out[0]);
            out[3] = out[3].max(out[2]);
            Ok((out, members.len()))
        };
        let (control, n0) = arm(false, "control")?;
        let (treated, n1) = arm(true, "treated")?;
        Ok(Self {
            control,
            treated,
            n0,
            n1,
        })
    }

    fn interval(v: &[f64; 4], period: usize) -> Interval {
        let (lo, hi) = (v[2 * period], v[2 * period + 1]);
        Interval::new(lo, hi.max(lo)).expect("moment endpoints are finite")
    }

    /// Control period-1 Aumann mean.
    pub fn a1(&self) -> Interval {
        Self::interval(&self.control, 0)
    }

    /// Control period-2 Aumann mean.
    pub fn a2(&self) -> Interval {
        Self::interval(&self.control, 1)
    }

    /// Treated period-1 Aumann mean.
    pub fn b1(&self) -> Interval {
        Self::interval(&self.treated, 0)
    }

    /// Treated period-2 Aumann mean.
    pub fn b2(&self) -> Interval {
        Self::interval(&self.treated, 1)
    }

    /// Adds `c` to every endpoint.
    pub fn translated(&self, c: f64) -> Self {
        let mut out = *self;
        out.control.iter_mut().chain(out.treated.iter_mut()).for_each(|v| *v += c);
        out
    }
}

/// Per-cell pieces of a conditional parallel-shifts computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBounds {
    pub cell: String,
    pub moments: GroupMomentVector,
    pub transport: LinearIntervalMap,
    pub counterfactual: Interval,
    /// Treated share of this cell, `n1(x) / n1`.
    pub weight: f64,
    /// Both pre-period widths were zero and the unit-slope convention was used.
    pub unit_slope_convention: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MomentSource {
    Pooled(GroupMomentVector),
    Cells {
        pooled: GroupMomentVector,
        cells: Vec<CellBounds>,
    },
}

impl MomentSource {
    pub fn pooled(&self) -> &GroupMomentVector {
        match self {
            MomentSource::Pooled(m) => m,
            MomentSource::Cells { pooled, .. } => pooled,
        }
    }
}

/// An identified set for the counterfactual mean and for the ATT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub assumption: Assumption,
    pub counterfactual_set: Interval,
    pub att_set: Interval,
    pub moments: MomentSource,
    /// The map producing the counterfactual set (IPT and PS).
    pub transport: Option<LinearIntervalMap>,
    /// Conventions applied along the way, e.g. the unit-slope reduction.
    pub notes: Vec<String>,
}

impl BoundsResult {
    /// Structured `key = value` record.
    pub fn record(&self) -> String {
        let m = self.moments.pooled();
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("assumption", self.assumption.to_string());
        line("counterfactual_lower", self.counterfactual_set.lower().to_string());
        line("counterfactual_upper", self.counterfactual_set.upper().to_string());
        line("att_lower", self.att_set.lower().to_string());
        line("att_upper", self.att_set.upper().to_string());
        if let Some(t) = &self.transport {
            line("transport_slope", t.slope().to_string());
            line("transport_anchor_in", t.anchor_in().to_string());
            line("transport_anchor_out", t.anchor_out().to_string());
        }
        line("n_control", m.n0.to_string());
        line("n_treated", m.n1.to_string());
        if let MomentSource::Cells { cells, .. } = &self.moments {
            line("cells", cells.len().to_string());
        }
        for n in &self.notes {
            line("note", n.clone());
        }
        s
    }
}

fn pooled_result(
    assumption: Assumption,
    m: &GroupMomentVector,
    counterfactual: Interval,
    transport: Option<LinearIntervalMap>,
    notes: Vec<String>,
) -> BoundsResult {
    BoundsResult {
        assumption,
        counterfactual_set: counterfactual,
        att_set: minkowski_diff(m.b2(), counterfactual),
        moments: MomentSource::Pooled(*m),
        transport,
        notes,
    }
}

/// Scalar parallel trends: `B1 ⊕ (A2 ⊖ A1)`.
pub fn bounds_spt(m: &GroupMomentVector) -> BoundsResult {
    let counterfactual = minkowski_sum(m.b1(), minkowski_diff(m.a2(), m.a1()));
    pooled_result(Assumption::Spt, m, counterfactual, None, Vec::new())
}

/// Interval parallel trends with the default width floor.
pub fn bounds_ipt(m: &GroupMomentVector) -> Result<BoundsResult> {
    bounds_ipt_with_floor(m, DEFAULT_WIDTH_FLOOR)
}

pub fn bounds_ipt_with_floor(m: &GroupMomentVector, floor: f64) -> Result<BoundsResult> {
    let t = interval_trend_map(m, floor)?;
    Ok(pooled_result(Assumption::Ipt, m, t.apply(m.b1()), Some(t), Vec::new()))
}

/// The map carrying the control period-1 mean onto its period-2 mean.
pub fn interval_trend_map(m: &GroupMomentVector, floor: f64) -> Result<LinearIntervalMap> {
    let w = m.a1().width();
    if w <= floor {
        return Err(Error::TransportUndefined("IPT", w));
    }
    LinearIntervalMap::carrying(m.a1(), m.a2(), floor)
}

/// Naive extrapolation applying the control lower-bound trend to the
/// treated lower bound and the upper-bound trend to the upper bound.
/// Not an identified set: the result can come out reversed.
pub fn bound_by_bound_image(a1: Interval, a2: Interval, b1: Interval) -> Endpoints {
    Endpoints::new(
        b1.lower() + (a2.lower() - a1.lower()),
        b1.upper() + (a2.upper() - a1.upper()),
    )
}

/// The map carrying the control period-1 mean onto the treated period-1
/// mean. When both pre-period widths are zero the slope is taken as 1.
/// The flag reports whether that convention was used.
pub fn parallel_shift_map(m: &GroupMomentVector, floor: f64) -> Result<(LinearIntervalMap, bool)> {
    let (a1, b1) = (m.a1(), m.b1());
    if a1.width() > floor {
        return Ok((LinearIntervalMap::carrying(a1, b1, floor)?, false));
    }
    if b1.width() <= floor {
        return Ok((LinearIntervalMap::new(1.0, a1.lower(), b1.lower())?, true));
    }
    Err(Error::TransportUndefined("PS", a1.width()))
}

/// Explicit ATT endpoints under parallel shifts, written directly in the
/// group means rather than through the map.
pub fn ps_att_endpoints(m: &GroupMomentVector, gamma: f64) -> (f64, f64) {
    let [a1l, _a1u, a2l, a2u] = m.control;
    let [b1l, _b1u, b2l, b2u] = m.treated;
    let lower = b2l - gamma * (a2u - a1l) - b1l;
    let upper = b2u - gamma * (a2l - a1l) - b1l;
    (lower, upper)
}

/// Parallel shifts with the default width floor.
pub fn bounds_ps(m: &GroupMomentVector) -> Result<BoundsResult> {
    bounds_ps_with_floor(m, DEFAULT_WIDTH_FLOOR)
}

pub fn bounds_ps_with_floor(m: &GroupMomentVector, floor: f64) -> Result<BoundsResult> {
    let (s, unit_slope) = parallel_shift_map(m, floor)?;
    let notes = if unit_slope {
        vec!["zero pre-period widths: unit slope".to_string()]
    } else {
        Vec::new()
    };
    let result = pooled_result(Assumption::Ps, m, s.apply(m.a2()), Some(s), notes);

    let (lo, hi) = ps_att_endpoints(m, s.slope());
    let scale = 1f64.max(lo.abs()).max(hi.abs());
    if (lo - result.att_set.lower()).abs() > CROSS_CHECK_TOL * scale
        || (hi - result.att_set.upper()).abs() > CROSS_CHECK_TOL * scale
    {
        return Err(Error::Consistency(format!(
            "parallel-shift ATT routes disagree: map gives {}, explicit formulas give [{lo}, {hi}]",
            result.att_set
        )));
    }
    Ok(result)
}

/// Conditional parallel shifts over discrete covariate cells, default floor.
pub fn bounds_cps(panel: &[PanelUnit]) -> Result<BoundsResult> {
    bounds_cps_with_floor(panel, DEFAULT_WIDTH_FLOOR)
}

pub fn bounds_cps_with_floor(panel: &[PanelUnit], floor: f64) -> Result<BoundsResult> {
    let mut by_cell: BTreeMap<&str, Vec<PanelUnit>> = BTreeMap::new();
    for u in panel {
        let cell = u.cell.as_deref().ok_or_else(|| {
            Error::Precondition(format!("unit `{}` has no covariate cell", u.unit_id))
        })?;
        by_cell.entry(cell).or_default().push(u.clone());
    }
    let pooled = GroupMomentVector::from_panel(panel)?;
    let n1 = pooled.n1 as f64;

    let mut cells = Vec::with_capacity(by_cell.len());
    let mut notes = Vec::new();
    for (cell, units) in &by_cell {
        let violation = |reason: String| Error::CellViolation {
            cell: (*cell).to_string(),
            reason,
        };
        let m = GroupMomentVector::from_panel(units).map_err(|e| match e {
            Error::EmptyGroup(g) => violation(format!("no {g} units (overlap fails)")),
            other => other,
        })?;
        let (s, unit_slope) = parallel_shift_map(&m, floor).map_err(|e| match e {
            Error::TransportUndefined(_, w) => violation(format!(
                "control pre-period width {w} is zero while the treated width is positive"
            )),
            other => other,
        })?;
        if unit_slope {
            notes.push(format!("cell {cell}: zero pre-period widths: unit slope"));
        }
        cells.push(CellBounds {
            cell: (*cell).to_string(),
            moments: m,
            transport: s,
            counterfactual: s.apply(m.a2()),
            weight: m.n1 as f64 / n1,
            unit_slope_convention: unit_slope,
        });
    }

    // Summed in cell-label order.
    let lo: f64 = cells.iter().map(|c| c.weight * c.counterfactual.lower()).sum();
    let hi: f64 = cells.iter().map(|c| c.weight * c.counterfactual.upper()).sum();
    let counterfactual = Interval::new(lo, hi.max(lo))?;

    Ok(BoundsResult {
        assumption: Assumption::Cps,
        counterfactual_set: counterfactual,
        att_set: minkowski_diff(pooled.b2(), counterfactual),
        moments: MomentSource::Cells { pooled, cells },
        transport: None,
        notes,
    })
}

/// Dispatches on the assumption. SPT, IPT and PS use the pooled moments;
/// CPS needs the cells.
pub fn bounds_for(panel: &[PanelUnit], assumption: Assumption) -> Result<BoundsResult> {
    match assumption {
        Assumption::Cps => bounds_cps(panel),
        a => bounds_from_moments(&GroupMomentVector::from_panel(panel)?, a),
    }
}

pub fn bounds_from_moments(m: &GroupMomentVector, assumption: Assumption) -> Result<BoundsResult> {
    match assumption {
        Assumption::Spt => Ok(bounds_spt(m)),
        Assumption::Ipt => bounds_ipt(m),
        Assumption::Ps => bounds_ps(m),
        Assumption::Cps => Err(Error::Precondition(
            "conditional parallel shifts need unit-level cells, not pooled moments".into(),
        )),
    }
}

/// Which scalar a classical DID is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarSource {
    /// The unrecoded scalar outcome carried by each unit.
    Raw,
    /// Interval midpoints.
    Midpoint,
}

/// Classical DID from the four group means, written as observed treated
/// post mean minus the trend-extrapolated counterfactual so that it agrees
/// bit for bit with the set estimators on degenerate data.
pub fn classical_did_from_means(treated_pre: f64, treated_post: f64, control_pre: f64, control_post: f64) -> f64 {
    treated_post - (treated_pre + (control_post - control_pre))
}

pub fn classical_did(panel: &[PanelUnit], source: ScalarSource) -> Result<f64> {
    let scalars = |u: &PanelUnit| -> Result<(f64, f64)> {
        match source {
            ScalarSource::Midpoint => Ok((u.y1.midpoint(), u.y2.midpoint())),
            ScalarSource::Raw => u.scalar_outcome.ok_or_else(|| {
                Error::Precondition(format!("unit `{}` has no scalar outcome", u.unit_id))
            }),
        }
    };
    let mut sums: [[Vec<f64>; 2]; 2] = Default::default();
    for u in panel {
        let (y1, y2) = scalars(u)?;
        let g = usize::from(u.treated);
        sums[g][0].push(y1);
        sums[g][1].push(y2);
    }
    let mean = |v: &Vec<f64>, name: &'static str| -> Result<f64> {
        if v.is_empty() {
            return Err(Error::EmptyGroup(name));
        }
        Ok(canonical_sum(v.iter().copied()) / v.len() as f64)
    };
    Ok(classical_did_from_means(
        mean(&sums[1][0], "treated")?,
        mean(&sums[1][1], "treated")?,
        mean(&sums[0][0], "control")?,
        mean(&sums[0][1], "control")?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::check_lemma_conditions;
    use proptest::prelude::*;

    fn iv(l: f64, u: f64) -> Interval {
        Interval::new(l, u).unwrap()
    }

    fn moments(a1: Interval, a2: Interval, b1: Interval, b2: Interval) -> GroupMomentVector {
        GroupMomentVector::from_intervals(a1, a2, b1, b2, 10, 10).unwrap()
    }

    fn example(k: u8) -> GroupMomentVector {
        let z = iv(0.0, 0.0);
        match k {
            1 => moments(iv(1.0, 3.0), iv(0.0, 0.5), iv(-3.0, -1.0), z),
            2 => moments(iv(1.0, 3.0), iv(2.75, 3.25), iv(-3.0, -1.0), z),
            _ => moments(iv(-1.0, 3.0), iv(1.5, 4.0), iv(-3.0, -2.0), z),
        }
    }

    #[test]
    fn spt_example_one() {
        let r = bounds_spt(&example(1));
        assert!(r.counterfactual_set.approx_eq(&iv(-6.0, -1.5), 1e-12));
        assert!(r.att_set.approx_eq(&iv(1.5, 6.0), 1e-12));
    }

    #[test]
    fn ipt_examples() {
        let expect = [iv(-1.0, -0.5), iv(1.75, 2.25), iv(0.25, 0.875)];
        for (k, e) in (1..=3).zip(expect) {
            let r = bounds_ipt(&example(k)).unwrap();
            assert!(r.counterfactual_set.approx_eq(&e, 1e-12), "example {k}: {}", r.counterfactual_set);
        }
    }

    #[test]
    fn ps_examples() {
        let r = bounds_ps(&example(1)).unwrap();
        assert!(r.counterfactual_set.approx_eq(&iv(-4.0, -3.5), 1e-12));
        assert!(r.att_set.approx_eq(&iv(3.5, 4.0), 1e-12));
        let r = bounds_ps(&example(3)).unwrap();
        assert!(r.counterfactual_set.approx_eq(&iv(-2.375, -1.75), 1e-12));
        assert_eq!(r.transport.unwrap().slope(), 0.25);
    }

    #[test]
    fn zero_control_width_errors() {
        let m = moments(iv(2.0, 2.0), iv(1.0, 3.0), iv(0.0, 1.0), iv(0.0, 0.0));
        assert!(matches!(bounds_ipt(&m), Err(Error::TransportUndefined("IPT", _))));
        assert!(matches!(bounds_ps(&m), Err(Error::TransportUndefined("PS", _))));
    }

    #[test]
    fn scalar_reduction() {
        let p = |x: f64| iv(x, x);
        let m = moments(p(4.0), p(1.5), p(-2.0), p(7.25));
        let did = classical_did_from_means(-2.0, 7.25, 4.0, 1.5);
        let spt = bounds_spt(&m);
        let ps = bounds_ps(&m).unwrap();
        assert_eq!(spt.att_set, iv(did, did));
        assert_eq!(ps.att_set, iv(did, did));
        assert_eq!(ps.notes.len(), 1);
        assert!(bounds_ipt(&m).is_err());
    }

    #[test]
    fn classical_did_example() {
        assert_eq!(classical_did_from_means(20.0, 21.0, 23.0, 21.0), 3.0);
        assert_eq!(classical_did_from_means(20.0, 22.0, 13.0, 15.0), 0.0);
    }

    fn panel_unit(id: &str, treated: bool, y1: Interval, y2: Interval, cell: &str) -> PanelUnit {
        PanelUnit::new(id, treated, y1, y2).with_cell(cell)
    }

    #[test]
    fn cps_aggregates_by_treated_share() {
        // Cell x: S is the identity shift by -2, cell y: by +1.
        let panel = vec![
            panel_unit("c1", false, iv(2.0, 4.0), iv(3.0, 4.0), "x"),
            panel_unit("t1", true, iv(0.0, 2.0), iv(5.0, 6.0), "x"),
            panel_unit("c2", false, iv(0.0, 2.0), iv(2.0, 3.0), "y"),
            panel_unit("t2", true, iv(1.0, 3.0), iv(5.0, 6.0), "y"),
        ];
        let r = bounds_cps(&panel).unwrap();
        // Cell sets [1, 2] and [3, 4], equal weights.
        assert!(r.counterfactual_set.approx_eq(&iv(2.0, 3.0), 1e-12));
        assert!(r.att_set.approx_eq(&iv(2.0, 4.0), 1e-12));
    }

    #[test]
    fn cps_single_cell_matches_ps() {
        let panel = vec![
            panel_unit("c1", false, iv(1.0, 4.0), iv(0.0, 2.0), "k"),
            panel_unit("c2", false, iv(2.0, 3.0), iv(1.0, 1.5), "k"),
            panel_unit("t1", true, iv(-1.0, 2.0), iv(3.0, 6.0), "k"),
            panel_unit("t2", true, iv(0.5, 1.0), iv(2.0, 2.0), "k"),
        ];
        let cps = bounds_cps(&panel).unwrap();
        let ps = bounds_ps(&GroupMomentVector::from_panel(&panel).unwrap()).unwrap();
        assert_eq!(cps.counterfactual_set, ps.counterfactual_set);
        assert_eq!(cps.att_set, ps.att_set);
    }

    #[test]
    fn cps_names_offending_cell() {
        let panel = vec![
            panel_unit("c1", false, iv(1.0, 4.0), iv(0.0, 2.0), "a"),
            panel_unit("t1", true, iv(-1.0, 2.0), iv(3.0, 6.0), "a"),
            panel_unit("t2", true, iv(0.5, 1.0), iv(2.0, 2.0), "b"),
        ];
        match bounds_cps(&panel) {
            Err(Error::CellViolation { cell, .. }) => assert_eq!(cell, "b"),
            other => panic!("expected a cell violation, got {other:?}"),
        }
        let panel = vec![
            panel_unit("c1", false, iv(1.0, 1.0), iv(0.0, 2.0), "a"),
            panel_unit("t1", true, iv(-1.0, 2.0), iv(3.0, 6.0), "a"),
        ];
        assert!(matches!(bounds_cps(&panel), Err(Error::CellViolation { .. })));
    }

    #[test]
    fn record_lists_endpoints() {
        let r = bounds_ps(&example(1)).unwrap();
        let rec = r.record();
        assert!(rec.contains("assumption = PS\n"));
        assert!(rec.contains("att_lower = 3.5\n"));
        assert!(rec.contains("transport_slope = 1\n"));
    }

    fn moment_strategy() -> impl Strategy<Value = GroupMomentVector> {
        let iv_s = |min_w: f64| (-20.0f64..20.0, min_w..8.0).prop_map(|(l, w)| iv(l, l + w));
        (iv_s(0.01), iv_s(0.0), iv_s(0.0), iv_s(0.0))
            .prop_map(|(a1, a2, b1, b2)| moments(a1, a2, b1, b2))
    }

    proptest! {
        #[test]
        fn ps_routes_agree(m in moment_strategy()) {
            let r = bounds_ps(&m).unwrap();
            let (lo, hi) = ps_att_endpoints(&m, r.transport.unwrap().slope());
            prop_assert!((lo - r.att_set.lower()).abs() < 1e-9);
            prop_assert!((hi - r.att_set.upper()).abs() < 1e-9);
        }

        #[test]
        fn translation_equivariance(m in moment_strategy(), c in -50.0f64..50.0) {
            let shifted = m.translated(c);
            for a in [Assumption::Spt, Assumption::Ipt, Assumption::Ps] {
                let r0 = bounds_from_moments(&m, a).unwrap();
                let r1 = bounds_from_moments(&shifted, a).unwrap();
                prop_assert!(r1.counterfactual_set.approx_eq(&r0.counterfactual_set.shift(c).unwrap(), 1e-9));
                prop_assert!(r1.att_set.approx_eq(&r0.att_set, 1e-9));
            }
        }

        #[test]
        fn ps_image_passes_shape_checks(m in moment_strategy()) {
            prop_assume!(m.b1().width() > 0.01);
            let r = bounds_ps(&m).unwrap();
            let rep = check_lemma_conditions(m.a1(), m.a2(), m.b1(), r.counterfactual_set).unwrap();
            prop_assert!(rep.all_hold(), "{rep:?}");
        }
    }
}
