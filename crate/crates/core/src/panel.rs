//! Two-period panel of interval outcomes, the heaping recode, and
//! ingestion of delimited survey files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{minkowski_sum, scale, Interval};
use crate::numeric::canonical_mean;
use crate::schema::{OutcomeColumns, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Control,
    Treated,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Treated => "treated",
        }
    }

    fn matches(self, treated: bool) -> bool {
        matches!((self, treated), (Group::Treated, true) | (Group::Control, false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Period {
    Pre,
    Post,
}

impl Period {
    pub fn index(self) -> u8 {
        match self {
            Period::Pre => 1,
            Period::Post => 2,
        }
    }
}

/// One unit of the two-period panel. Nobody is treated in period 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelUnit {
    pub unit_id: String,
    pub treated: bool,
    pub y1: Interval,
    pub y2: Interval,
    /// Discrete covariate cell, when covariates are configured.
    pub cell: Option<String>,
    /// The unrecoded scalar outcome for both periods, when the panel was
    /// built from raw counts.
    pub scalar_outcome: Option<(f64, f64)>,
}

impl PanelUnit {
    pub fn new(unit_id: impl Into<String>, treated: bool, y1: Interval, y2: Interval) -> Self {
        Self {
            unit_id: unit_id.into(),
            treated,
            y1,
            y2,
            cell: None,
            scalar_outcome: None,
        }
    }

    pub fn with_cell(mut self, cell: impl Into<String>) -> Self {
        self.cell = Some(cell.into());
        self
    }

    pub fn outcome(&self, period: Period) -> Interval {
        match period {
            Period::Pre => self.y1,
            Period::Post => self.y2,
        }
    }

    /// `(y1.lower, y1.upper, y2.lower, y2.upper)`.
    pub fn endpoints(&self) -> [f64; 4] {
        [self.y1.lower(), self.y1.upper(), self.y2.lower(), self.y2.upper()]
    }
}

/// How non-integer counts are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimalRule {
    /// `6.5` means somewhere in `[6, 7]`.
    UnitBracket,
    KeepScalar,
}

/// Heaping recode: an integer count `k >= heap_threshold` that is a
/// multiple of `heap_modulus` stands for `[k - heap_halfwidth, k + heap_halfwidth]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecodingPolicy {
    pub heap_threshold: u32,
    pub heap_modulus: u32,
    pub heap_halfwidth: f64,
    pub decimal_rule: DecimalRule,
}

impl Default for RecodingPolicy {
    fn default() -> Self {
        Self {
            heap_threshold: 10,
            heap_modulus: 5,
            heap_halfwidth: 5.0,
            decimal_rule: DecimalRule::UnitBracket,
        }
    }
}

impl RecodingPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.heap_modulus == 0 {
            return Err(Error::InvalidPolicy("heap_modulus must be positive".into()));
        }
        if !self.heap_halfwidth.is_finite() || self.heap_halfwidth < 0.0 {
            return Err(Error::InvalidPolicy(
                "heap_halfwidth must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// True when `x` is a heaped report under this policy.
    pub fn is_heap(&self, x: f64) -> bool {
        x.fract() == 0.0
            && x >= f64::from(self.heap_threshold)
            && x % f64::from(self.heap_modulus) == 0.0
    }
}

/// Recodes one reported count into the interval it stands for.
///
/// Heaped integers widen to `[max(0, k - h), k + h]`; decimals become the
/// surrounding unit bracket under [`DecimalRule::UnitBracket`]; everything
/// else is kept as a point.
pub fn recode_count(x: f64, policy: &RecodingPolicy) -> Result<Interval> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidCount(x));
    }
    if policy.is_heap(x) {
        let h = policy.heap_halfwidth;
        return Interval::new((x - h).max(0.0), x + h);
    }
    if x.fract() != 0.0 && policy.decimal_rule == DecimalRule::UnitBracket {
        return Interval::new(x.floor(), x.ceil());
    }
    Interval::point(x)
}

/// Full-time equivalents: full-time + managers + 0.5 × part-time.
pub fn fte_interval(full_time: Interval, managers: Interval, part_time: Interval) -> Interval {
    let half_pt = scale(part_time, 0.5).expect("0.5 is a valid factor");
    minkowski_sum(full_time, minkowski_sum(managers, half_pt))
}

/// Aumann mean of a group's outcome in one period: the interval of the
/// group means of the lower and upper endpoints.
pub fn group_moments(panel: &[PanelUnit], group: Group, period: Period) -> Result<Interval> {
    let members: Vec<Interval> = panel
        .iter()
        .filter(|u| group.matches(u.treated))
        .map(|u| u.outcome(period))
        .collect();
    aumann_mean(&members).ok_or(Error::EmptyGroup(group.name()))
}

/// Endpoint-wise mean of a set of intervals. `None` when empty.
pub fn aumann_mean(intervals: &[Interval]) -> Option<Interval> {
    let lo = canonical_mean(intervals.iter().map(Interval::lower))?;
    let hi = canonical_mean(intervals.iter().map(Interval::upper))?;
    // Means of ordered pairs stay ordered; guard the last rounding bit.
    Some(Interval::new(lo, hi.max(lo)).expect("finite means"))
}

/// Counts of what happened to each input row.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub treated: usize,
    pub control: usize,
    /// Dropped-row counts keyed by reason.
    pub dropped: BTreeMap<String, usize>,
}

impl LoadReport {
    pub fn rows_dropped(&self) -> usize {
        self.dropped.values().sum()
    }

    fn drop_row(&mut self, reason: String) {
        *self.dropped.entry(reason).or_default() += 1;
    }
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows_read = {}", self.rows_read)?;
        writeln!(f, "rows_kept = {}", self.rows_kept)?;
        writeln!(f, "rows_dropped = {}", self.rows_dropped())?;
        writeln!(f, "treated = {}", self.treated)?;
        writeln!(f, "control = {}", self.control)?;
        for (reason, n) in &self.dropped {
            writeln!(f, "dropped[{reason}] = {n}")?;
        }
        Ok(())
    }
}

/// Loads a panel from a delimited file.
pub fn load_panel(
    path: impl AsRef<Path>,
    schema: &Schema,
    policy: &RecodingPolicy,
) -> Result<(Vec<PanelUnit>, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_panel_from_reader(file, schema, policy)
}

/// Loads a panel from any reader of delimited text with a header row.
///
/// Rows missing a required field in either period are dropped and counted
/// in the report. Unparseable numbers are hard errors.
pub fn load_panel_from_reader<R: Read>(
    mut reader: R,
    schema: &Schema,
    policy: &RecodingPolicy,
) -> Result<(Vec<PanelUnit>, LoadReport)> {
    policy.validate()?;
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<input>", e))?;

    let delimiter = schema.delimiter.resolve(&text);
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = csv_reader.headers()?.clone();
    let bound = schema.bind(&header)?;

    let mut report = LoadReport::default();
    let mut panel = Vec::new();

    for (i, record) in csv_reader.records().enumerate() {
        let record = record?;
        // Row numbers are 1-based data rows (the header is row 0).
        let row = i + 1;
        report.rows_read += 1;

        let field = |idx: usize| record.get(idx).unwrap_or("");
        let is_missing = |s: &str| schema.missing_values.iter().any(|m| m == s);

        let mut missing: Option<String> = None;
        let mut check = |idx: usize| {
            if missing.is_none() && is_missing(field(idx)) {
                missing = Some(header[idx].to_string());
            }
        };
        check(bound.id);
        check(bound.group);
        for &c in &bound.covariates {
            check(c);
        }
        for idx in bound.outcome_columns() {
            check(idx);
        }
        if let Some(col) = missing {
            report.drop_row(format!("missing {col}"));
            continue;
        }

        let number = |idx: usize| -> Result<f64> {
            let raw = field(idx);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Unparseable {
                    row,
                    column: header[idx].to_string(),
                    value: raw.to_string(),
                })
        };
        let wrap = |idx: usize, e: Error| Error::BadValue {
            row,
            column: header[idx].to_string(),
            source: Box::new(e),
        };

        let treated = schema.treated_values.iter().any(|v| v == field(bound.group));

        let (y1, y2, scalar) = match &bound.outcomes {
            OutcomeColumns::Counts {
                full_time,
                part_time,
                managers,
            } => {
                let mut per_period = [(Interval::point(0.0)?, 0.0); 2];
                for t in 0..2 {
                    let ft_raw = number(full_time[t])?;
                    let pt_raw = number(part_time[t])?;
                    let mg_raw = number(managers[t])?;
                    let recode = |idx: usize, x: f64, on: bool| -> Result<Interval> {
                        if on {
                            recode_count(x, policy).map_err(|e| wrap(idx, e))
                        } else if x < 0.0 {
                            Err(wrap(idx, Error::InvalidCount(x)))
                        } else {
                            Interval::point(x)
                        }
                    };
                    let ft = recode(full_time[t], ft_raw, schema.recode.full_time)?;
                    let pt = recode(part_time[t], pt_raw, schema.recode.part_time)?;
                    let mg = recode(managers[t], mg_raw, schema.recode.managers)?;
                    per_period[t] = (fte_interval(ft, mg, pt), ft_raw + mg_raw + 0.5 * pt_raw);
                }
                (
                    per_period[0].0,
                    per_period[1].0,
                    Some((per_period[0].1, per_period[1].1)),
                )
            }
            OutcomeColumns::Intervals { lower, upper } => {
                let mut ys = [Interval::point(0.0)?; 2];
                for t in 0..2 {
                    let lo = number(lower[t])?;
                    let hi = number(upper[t])?;
                    ys[t] = Interval::new(lo, hi).map_err(|e| wrap(lower[t], e))?;
                }
                (ys[0], ys[1], None)
            }
        };

        let cell = if bound.covariates.is_empty() {
            None
        } else {
            Some(
                bound
                    .covariates
                    .iter()
                    .map(|&c| field(c))
                    .collect::<Vec<_>>()
                    .join("|"),
            )
        };

        if treated {
            report.treated += 1;
        } else {
            report.control += 1;
        }
        report.rows_kept += 1;
        panel.push(PanelUnit {
            unit_id: field(bound.id).to_string(),
            treated,
            y1,
            y2,
            cell,
            scalar_outcome: scalar,
        });
    }

    if report.control == 0 {
        return Err(Error::EmptyGroup("control"));
    }
    if report.treated == 0 {
        return Err(Error::EmptyGroup("treated"));
    }
    Ok((panel, report))
}
