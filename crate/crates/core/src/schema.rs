//! Column-role mapping for panel files.
//!
//! A schema file is a list of `key = value` lines; `#` starts a comment.
//! Recognised keys:
//!
//! ```text
//! id, group, treated_values          unit id, group column, values meaning "treated"
//! full_time_1, part_time_1, managers_1, full_time_2, part_time_2, managers_2
//! y1_lower, y1_upper, y2_lower, y2_upper     pre-made interval columns
//! covariates                         comma-separated discrete covariate columns
//! recode_full_time, recode_part_time, recode_managers   true/false
//! missing_values                     comma-separated missing markers ("<empty>" for "")
//! delimiter                          auto | comma | tab
//! heap_threshold, heap_modulus, heap_halfwidth, decimal_rule   policy overrides
//! ```
//!
//! Exactly one of the two outcome layouts (counts or intervals) must be
//! given in full.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{DecimalRule, RecodingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Auto,
    Comma,
    Tab,
}

impl Delimiter {
    pub(crate) fn resolve(self, text: &str) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
            Delimiter::Auto => {
                let header = text.lines().next().unwrap_or("");
                if header.contains('\t') && !header.contains(',') {
                    b'\t'
                } else {
                    b','
                }
            }
        }
    }
}

/// Which raw counts pass through the heaping recode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecodeColumns {
    pub full_time: bool,
    pub part_time: bool,
    pub managers: bool,
}

impl Default for RecodeColumns {
    fn default() -> Self {
        Self {
            full_time: true,
            part_time: true,
            managers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeLayout {
    /// Raw per-period counts combined into full-time equivalents.
    Counts {
        full_time: [String; 2],
        part_time: [String; 2],
        managers: [String; 2],
    },
    /// Per-period lower and upper columns.
    Intervals {
        lower: [String; 2],
        upper: [String; 2],
    },
}

/// Partial policy read from a schema or config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyOverrides {
    pub heap_threshold: Option<u32>,
    pub heap_modulus: Option<u32>,
    pub heap_halfwidth: Option<f64>,
    pub decimal_rule: Option<DecimalRule>,
}

impl PolicyOverrides {
    pub fn apply(&self, base: RecodingPolicy) -> RecodingPolicy {
        RecodingPolicy {
            heap_threshold: self.heap_threshold.unwrap_or(base.heap_threshold),
            heap_modulus: self.heap_modulus.unwrap_or(base.heap_modulus),
            heap_halfwidth: self.heap_halfwidth.unwrap_or(base.heap_halfwidth),
            decimal_rule: self.decimal_rule.unwrap_or(base.decimal_rule),
        }
    }

    /// Later values win.
    pub fn merge(&self, later: &PolicyOverrides) -> PolicyOverrides {
        PolicyOverrides {
            heap_threshold: later.heap_threshold.or(self.heap_threshold),
            heap_modulus: later.heap_modulus.or(self.heap_modulus),
            heap_halfwidth: later.heap_halfwidth.or(self.heap_halfwidth),
            decimal_rule: later.decimal_rule.or(self.decimal_rule),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub id: String,
    pub group: String,
    pub treated_values: Vec<String>,
    pub outcomes: OutcomeLayout,
    pub covariates: Vec<String>,
    pub recode: RecodeColumns,
    pub missing_values: Vec<String>,
    pub delimiter: Delimiter,
    pub policy: PolicyOverrides,
}

fn default_missing() -> Vec<String> {
    vec![String::new(), ".".into(), "NA".into()]
}

impl Schema {
    /// Profile for the public restaurant-survey flat file (lower-case
    /// column names, `state` 1 = New Jersey). Covariates are the chain
    /// and company-ownership indicators.
    pub fn ck94() -> Self {
        let s = |x: &str| x.to_string();
        Self {
            id: s("sheet"),
            group: s("state"),
            treated_values: vec![s("1")],
            outcomes: OutcomeLayout::Counts {
                full_time: [s("empft"), s("empft2")],
                part_time: [s("emppt"), s("emppt2")],
                managers: [s("nmgrs"), s("nmgrs2")],
            },
            covariates: vec![s("chain"), s("co_owned")],
            recode: RecodeColumns::default(),
            missing_values: default_missing(),
            delimiter: Delimiter::Auto,
            policy: PolicyOverrides::default(),
        }
    }

    /// Profile for the recoded panel table written by the `recode` command:
    /// `id, treated, y1_lower, y1_upper, y2_lower, y2_upper, cell`.
    pub fn recoded_panel() -> Self {
        let s = |x: &str| x.to_string();
        Self {
            id: s("id"),
            group: s("treated"),
            treated_values: vec![s("1")],
            outcomes: OutcomeLayout::Intervals {
                lower: [s("y1_lower"), s("y2_lower")],
                upper: [s("y1_upper"), s("y2_upper")],
            },
            covariates: vec![s("cell")],
            recode: RecodeColumns::default(),
            missing_values: vec![".".into(), "NA".into()],
            delimiter: Delimiter::Auto,
            policy: PolicyOverrides::default(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut used: Vec<&str> = Vec::new();
        let mut get = |k: &'static str| -> Option<String> {
            used.push(k);
            kv.get(k).map(|(_, v)| v.clone())
        };

        let id = get("id").ok_or_else(|| Error::MissingRole("id".into()))?;
        let group = get("group").ok_or_else(|| Error::MissingRole("group".into()))?;
        let treated_values = get("treated_values")
            .map(|v| split_list(&v))
            .ok_or_else(|| Error::MissingRole("treated_values".into()))?;

        let count_keys = [
            "full_time_1",
            "part_time_1",
            "managers_1",
            "full_time_2",
            "part_time_2",
            "managers_2",
        ];
        let interval_keys = ["y1_lower", "y1_upper", "y2_lower", "y2_upper"];
        let counts: Vec<Option<String>> = count_keys.iter().map(|k| get(k)).collect();
        let intervals: Vec<Option<String>> = interval_keys.iter().map(|k| get(k)).collect();
        let any_counts = counts.iter().any(Option::is_some);
        let any_intervals = intervals.iter().any(Option::is_some);

        let outcomes = match (any_counts, any_intervals) {
            (true, true) => {
                return Err(Error::Config(
                    "schema mixes count columns and interval columns".into(),
                ))
            }
            (false, false) => return Err(Error::MissingRole("full_time_1".into())),
            (true, false) => {
                let c = require_all(&count_keys, counts)?;
                OutcomeLayout::Counts {
                    full_time: [c[0].clone(), c[3].clone()],
                    part_time: [c[1].clone(), c[4].clone()],
                    managers: [c[2].clone(), c[5].clone()],
                }
            }
            (false, true) => {
                let c = require_all(&interval_keys, intervals)?;
                OutcomeLayout::Intervals {
                    lower: [c[0].clone(), c[2].clone()],
                    upper: [c[1].clone(), c[3].clone()],
                }
            }
        };

        let covariates = get("covariates").map(|v| split_list(&v)).unwrap_or_default();

        let mut recode = RecodeColumns::default();
        for (key, slot) in [
            ("recode_full_time", &mut recode.full_time),
            ("recode_part_time", &mut recode.part_time),
            ("recode_managers", &mut recode.managers),
        ] {
            if let Some(v) = get(key) {
                *slot = parse_bool(key, &v, line_of(&kv, key))?;
            }
        }

        let missing_values = get("missing_values")
            .map(|v| {
                split_list(&v)
                    .into_iter()
                    .map(|m| if m == "<empty>" { String::new() } else { m })
                    .collect()
            })
            .unwrap_or_else(default_missing);

        let delimiter = match get("delimiter").as_deref() {
            None | Some("auto") => Delimiter::Auto,
            Some("comma") | Some(",") => Delimiter::Comma,
            Some("tab") | Some("\\t") => Delimiter::Tab,
            Some(other) => {
                return Err(Error::SchemaSyntax {
                    line: line_of(&kv, "delimiter"),
                    message: format!("unknown delimiter `{other}`"),
                })
            }
        };

        let policy = policy_overrides(&kv, &mut get)?;

        if let Some((k, (line, _))) = kv.iter().find(|(k, _)| !used.contains(&k.as_str())) {
            return Err(Error::SchemaSyntax {
                line: *line,
                message: format!("unknown key `{k}`"),
            });
        }

        Ok(Self {
            id,
            group,
            treated_values,
            outcomes,
            covariates,
            recode,
            missing_values,
            delimiter,
            policy,
        })
    }

    /// Resolves every role against a header row.
    pub(crate) fn bind(&self, header: &csv::StringRecord) -> Result<BoundSchema> {
        let find = |role: &str, col: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == col)
                .ok_or_else(|| Error::UnknownColumn {
                    role: role.to_string(),
                    column: col.to_string(),
                })
        };
        let outcomes = match &self.outcomes {
            OutcomeLayout::Counts {
                full_time,
                part_time,
                managers,
            } => OutcomeColumns::Counts {
                full_time: [find("full_time_1", &full_time[0])?, find("full_time_2", &full_time[1])?],
                part_time: [find("part_time_1", &part_time[0])?, find("part_time_2", &part_time[1])?],
                managers: [find("managers_1", &managers[0])?, find("managers_2", &managers[1])?],
            },
            OutcomeLayout::Intervals { lower, upper } => OutcomeColumns::Intervals {
                lower: [find("y1_lower", &lower[0])?, find("y2_lower", &lower[1])?],
                upper: [find("y1_upper", &upper[0])?, find("y2_upper", &upper[1])?],
            },
        };
        Ok(BoundSchema {
            id: find("id", &self.id)?,
            group: find("group", &self.group)?,
            covariates: self
                .covariates
                .iter()
                .map(|c| find("covariates", c))
                .collect::<Result<_>>()?,
            outcomes,
        })
    }
}

pub(crate) enum OutcomeColumns {
    Counts {
        full_time: [usize; 2],
        part_time: [usize; 2],
        managers: [usize; 2],
    },
    Intervals {
        lower: [usize; 2],
        upper: [usize; 2],
    },
}

pub(crate) struct BoundSchema {
    pub id: usize,
    pub group: usize,
    pub covariates: Vec<usize>,
    pub outcomes: OutcomeColumns,
}

impl BoundSchema {
    pub fn outcome_columns(&self) -> Vec<usize> {
        match &self.outcomes {
            OutcomeColumns::Counts {
                full_time,
                part_time,
                managers,
            } => [full_time, part_time, managers]
                .iter()
                .flat_map(|c| c.iter().copied())
                .collect(),
            OutcomeColumns::Intervals { lower, upper } => {
                lower.iter().chain(upper.iter()).copied().collect()
            }
        }
    }
}

type KeyValues = BTreeMap<String, (usize, String)>;

/// Parses `key = value` lines. Keys are unique; values are trimmed.
pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::SchemaSyntax {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = k.trim().to_string();
        if out.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
            return Err(Error::SchemaSyntax {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}

fn line_of(kv: &KeyValues, key: &str) -> usize {
    kv.get(key).map(|(l, _)| *l).unwrap_or(0)
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty() || v.trim().is_empty()).collect()
}

fn require_all(keys: &[&str], values: Vec<Option<String>>) -> Result<Vec<String>> {
    keys.iter()
        .zip(values)
        .map(|(k, v)| v.ok_or_else(|| Error::MissingRole((*k).to_string())))
        .collect()
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::SchemaSyntax {
            line,
            message: format!("`{key}` expects true/false, got `{v}`"),
        }),
    }
}

pub(crate) fn policy_overrides(
    kv: &KeyValues,
    get: &mut impl FnMut(&'static str) -> Option<String>,
) -> Result<PolicyOverrides> {
    let bad = |key: &str, v: &str| Error::SchemaSyntax {
        line: line_of(kv, key),
        message: format!("invalid value `{v}` for `{key}`"),
    };
    let mut p = PolicyOverrides::default();
    if let Some(v) = get("heap_threshold") {
        p.heap_threshold = Some(v.parse().map_err(|_| bad("heap_threshold", &v))?);
    }
    if let Some(v) = get("heap_modulus") {
        p.heap_modulus = Some(v.parse().map_err(|_| bad("heap_modulus", &v))?);
    }
    if let Some(v) = get("heap_halfwidth") {
        p.heap_halfwidth = Some(v.parse().map_err(|_| bad("heap_halfwidth", &v))?);
    }
    if let Some(v) = get("decimal_rule") {
        p.decimal_rule = Some(match v.as_str() {
            "unit_bracket" => DecimalRule::UnitBracket,
            "keep_scalar" => DecimalRule::KeepScalar,
            _ => return Err(bad("decimal_rule", &v)),
        });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNTS: &str = "\
# two-period count layout
id = id
group = state
treated_values = NJ
full_time_1 = ft1
part_time_1 = pt1
managers_1 = mgr1
full_time_2 = ft2
part_time_2 = pt2
managers_2 = mgr2
recode_managers = false
heap_halfwidth = 2.5
";

    #[test]
    fn parses_count_layout() {
        let s = Schema::parse(COUNTS).unwrap();
        assert_eq!(s.treated_values, vec!["NJ".to_string()]);
        assert!(!s.recode.managers);
        assert!(matches!(s.outcomes, OutcomeLayout::Counts { .. }));
        let p = s.policy.apply(RecodingPolicy::default());
        assert_eq!(p.heap_halfwidth, 2.5);
        assert_eq!(p.heap_threshold, 10);
    }

    #[test]
    fn rejects_missing_role_and_unknown_key() {
        let no_group = COUNTS.replace("group = state\n", "");
        assert!(matches!(Schema::parse(&no_group), Err(Error::MissingRole(r)) if r == "group"));
        let partial = COUNTS.replace("managers_2 = mgr2\n", "");
        assert!(matches!(Schema::parse(&partial), Err(Error::MissingRole(r)) if r == "managers_2"));
        let typo = format!("{COUNTS}colour = red\n");
        assert!(matches!(Schema::parse(&typo), Err(Error::SchemaSyntax { .. })));
        assert!(matches!(
            Schema::parse("id = a\nid = b\n"),
            Err(Error::SchemaSyntax { line: 2, .. })
        ));
    }

    #[test]
    fn builtin_profiles_are_consistent() {
        assert_eq!(Schema::ck94().covariates, vec!["chain", "co_owned"]);
        assert!(matches!(Schema::recoded_panel().outcomes, OutcomeLayout::Intervals { .. }));
    }
}
