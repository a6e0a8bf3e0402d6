//! Standard errors for the ATT endpoints and Imbens–Manski confidence
//! intervals for the partially identified ATT.
//!
//! Standard deviations here are asymptotic (`√n`-scaled): `se / √n` is the
//! standard error of an endpoint estimate, with `n` the panel size.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    bounds_for, parallel_shift_map, Assumption, BoundsResult, GroupMomentVector,
    DEFAULT_WIDTH_FLOOR,
};
use crate::interval::Interval;
use crate::numeric::{bilinear, canonical_sum, norm_cdf, norm_quantile, sample_covariance};
use crate::panel::PanelUnit;

pub const DEFAULT_BOOTSTRAP_REPS: usize = 2000;

/// Largest share of bootstrap draws allowed to fail (for example a
/// resample that empties a covariate cell).
const MAX_FAILED_DRAW_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Delta,
    Bootstrap { reps: usize, seed: u64 },
}

impl VarianceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            VarianceMethod::Delta => "delta",
            VarianceMethod::Bootstrap { .. } => "bootstrap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointVariance {
    pub se_lower: f64,
    pub se_upper: f64,
    /// Correlation of the two endpoint estimators (0 when either is constant).
    pub correlation: f64,
}

/// Gradients of the two ATT endpoints with respect to the control and
/// treated moment vectors `(y1_lower, y1_upper, y2_lower, y2_upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointGradients {
    pub lower_control: [f64; 4],
    pub lower_treated: [f64; 4],
    pub upper_control: [f64; 4],
    pub upper_treated: [f64; 4],
}

/// Analytic gradients for SPT, IPT, and PS.
pub fn endpoint_gradients(m: &GroupMomentVector, assumption: Assumption) -> Result<EndpointGradients> {
    let [a1l, a1u, a2l, a2u] = m.control;
    let [b1l, b1u, _, _] = m.treated;
    match assumption {
        Assumption::Spt => Ok(EndpointGradients {
            lower_control: [1.0, 0.0, 0.0, -1.0],
            lower_treated: [0.0, -1.0, 1.0, 0.0],
            upper_control: [0.0, 1.0, -1.0, 0.0],
            upper_treated: [-1.0, 0.0, 0.0, 1.0],
        }),
        Assumption::Ipt => {
            let w1 = a1u - a1l;
            if w1 <= DEFAULT_WIDTH_FLOOR {
                return Err(Error::TransportUndefined("IPT", w1));
            }
            let t = (a2u - a2l) / w1;
            // lower = b2l - t (b1u - a1l) - a2l; upper uses b1l instead of b1u.
            let control = |d: f64| [t - t / w1 * d, t / w1 * d, d / w1 - 1.0, -d / w1];
            Ok(EndpointGradients {
                lower_control: control(b1u - a1l),
                lower_treated: [0.0, -t, 1.0, 0.0],
                upper_control: control(b1l - a1l),
                upper_treated: [-t, 0.0, 0.0, 1.0],
            })
        }
        Assumption::Ps => {
            let (s, unit_slope) = parallel_shift_map(m, DEFAULT_WIDTH_FLOOR)?;
            let g = s.slope();
            let w1 = a1u - a1l;
            // lower = b2l - g (a2u - a1l) - b1l; upper = b2u - g (a2l - a1l) - b1l.
            let (el, eu) = (a2u - a1l, a2l - a1l);
            if unit_slope {
                return Ok(EndpointGradients {
                    lower_control: [g, 0.0, 0.0, -g],
                    lower_treated: [-1.0, 0.0, 1.0, 0.0],
                    upper_control: [g, 0.0, -g, 0.0],
                    upper_treated: [-1.0, 0.0, 0.0, 1.0],
                });
            }
            Ok(EndpointGradients {
                lower_control: [g - g / w1 * el, g / w1 * el, 0.0, -g],
                lower_treated: [el / w1 - 1.0, -el / w1, 1.0, 0.0],
                upper_control: [g - g / w1 * eu, g / w1 * eu, -g, 0.0],
                upper_treated: [eu / w1 - 1.0, -eu / w1, 0.0, 1.0],
            })
        }
        Assumption::Cps => Err(Error::Precondition(
            "conditional gradients are built per cell".into(),
        )),
    }
}

/// Endpoint standard deviations by the requested method.
pub fn endpoint_variance(
    panel: &[PanelUnit],
    assumption: Assumption,
    method: VarianceMethod,
) -> Result<EndpointVariance> {
    match method {
        VarianceMethod::Delta => delta_variance(panel, assumption),
        VarianceMethod::Bootstrap { reps, seed } => bootstrap_variance(panel, assumption, reps, seed),
    }
}

struct Accumulated {
    var_lower: f64,
    var_upper: f64,
    cov: f64,
}

impl Accumulated {
    fn finish(self, n: usize) -> EndpointVariance {
        let n = n as f64;
        let (vl, vu) = (self.var_lower.max(0.0), self.var_upper.max(0.0));
        let correlation = if vl > 0.0 && vu > 0.0 {
            (self.cov / (vl * vu).sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        EndpointVariance {
            se_lower: (n * vl).sqrt(),
            se_upper: (n * vu).sqrt(),
            correlation,
        }
    }
}

fn check_group_sizes(panel: &[PanelUnit]) -> Result<(usize, usize)> {
    let n1 = panel.iter().filter(|u| u.treated).count();
    let n0 = panel.len() - n1;
    if n0 < 2 || n1 < 2 {
        return Err(Error::VarianceUndefined(format!(
            "need at least two units per group, have {n0} control and {n1} treated"
        )));
    }
    Ok((n0, n1))
}

/// Delta-method standard deviations: gradient of each endpoint in the group
/// moments, within-group sample covariance of the unit-level moment
/// contributions, groups independent.
pub fn delta_variance(panel: &[PanelUnit], assumption: Assumption) -> Result<EndpointVariance> {
    let (n0, n1) = check_group_sizes(panel)?;
    let (rows_c, rows_t, grad) = match assumption {
        Assumption::Cps => cps_design(panel)?,
        a => {
            let m = GroupMomentVector::from_panel(panel)?;
            let g = endpoint_gradients(&m, a)?;
            let rows = |treated: bool| -> Vec<Vec<f64>> {
                panel
                    .iter()
                    .filter(|u| u.treated == treated)
                    .map(|u| u.endpoints().to_vec())
                    .collect()
            };
            (
                rows(false),
                rows(true),
                StackedGradients {
                    lower_control: g.lower_control.to_vec(),
                    lower_treated: g.lower_treated.to_vec(),
                    upper_control: g.upper_control.to_vec(),
                    upper_treated: g.upper_treated.to_vec(),
                },
            )
        }
    };
    let vc = sample_covariance(&rows_c);
    let vt = sample_covariance(&rows_t);
    let part = |gc: &[f64], gt: &[f64], hc: &[f64], ht: &[f64]| {
        bilinear(gc, &vc, hc) / n0 as f64 + bilinear(gt, &vt, ht) / n1 as f64
    };
    let g = &grad;
    Ok(Accumulated {
        var_lower: part(&g.lower_control, &g.lower_treated, &g.lower_control, &g.lower_treated),
        var_upper: part(&g.upper_control, &g.upper_treated, &g.upper_control, &g.upper_treated),
        cov: part(&g.lower_control, &g.lower_treated, &g.upper_control, &g.upper_treated),
    }
    .finish(n0 + n1))
}

struct StackedGradients {
    lower_control: Vec<f64>,
    lower_treated: Vec<f64>,
    upper_control: Vec<f64>,
    upper_treated: Vec<f64>,
}

/// Per-unit moment rows and gradients for conditional parallel shifts.
///
/// Each unit contributes, for every cell `x` in label order, the block
/// `1{x}·(1, y1_lower, y1_upper, y2_lower, y2_upper)`. Cell shares are
/// therefore estimated alongside the cell means.
fn cps_design(panel: &[PanelUnit]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, StackedGradients)> {
    let bounds = crate::estimators::bounds_cps(panel)?;
    let cells = match &bounds.moments {
        crate::estimators::MomentSource::Cells { cells, .. } => cells,
        _ => unreachable!("conditional bounds carry cells"),
    };
    let index: BTreeMap<&str, usize> = cells.iter().enumerate().map(|(i, c)| (c.cell.as_str(), i)).collect();
    let k = cells.len() * 5;

    let rows = |treated: bool| -> Vec<Vec<f64>> {
        panel
            .iter()
            .filter(|u| u.treated == treated)
            .map(|u| {
                let mut row = vec![0.0; k];
                let x = index[u.cell.as_deref().expect("cells checked by bounds_cps")];
                row[5 * x] = 1.0;
                row[5 * x + 1..5 * x + 5].copy_from_slice(&u.endpoints());
                row
            })
            .collect()
    };
    let (n0, n1) = (
        panel.iter().filter(|u| !u.treated).count() as f64,
        panel.iter().filter(|u| u.treated).count() as f64,
    );

    let mut g = StackedGradients {
        lower_control: vec![0.0; k],
        lower_treated: vec![0.0; k],
        upper_control: vec![0.0; k],
        upper_treated: vec![0.0; k],
    };
    for (x, c) in cells.iter().enumerate() {
        let m = &c.moments;
        let p = m.n1 as f64 / n1;
        let q = m.n0 as f64 / n0;
        let grad = endpoint_gradients(m, Assumption::Ps)?;
        let (h_lower, h_upper) = crate::estimators::ps_att_endpoints(m, c.transport.slope());

        let fill = |h: f64, gc: &[f64; 4], gt: &[f64; 4], out_c: &mut Vec<f64>, out_t: &mut Vec<f64>| {
            let bt: f64 = (0..4).map(|j| gt[j] * m.treated[j]).sum();
            let ac: f64 = (0..4).map(|j| gc[j] * m.control[j]).sum();
            out_t[5 * x] = h - bt;
            out_c[5 * x] = -p / q * ac;
            for j in 0..4 {
                out_t[5 * x + 1 + j] = gt[j];
                out_c[5 * x + 1 + j] = p / q * gc[j];
            }
        };
        fill(h_lower, &grad.lower_control, &grad.lower_treated, &mut g.lower_control, &mut g.lower_treated);
        fill(h_upper, &grad.upper_control, &grad.upper_treated, &mut g.upper_control, &mut g.upper_treated);
    }
    Ok((rows(false), rows(true), g))
}

/// Units of one group in a fixed order independent of input order.
fn canonical_group(panel: &[PanelUnit], treated: bool) -> Vec<PanelUnit> {
    let mut units: Vec<PanelUnit> = panel.iter().filter(|u| u.treated == treated).cloned().collect();
    units.sort_by(|a, b| {
        a.cell
            .cmp(&b.cell)
            .then_with(|| a.unit_id.cmp(&b.unit_id))
            .then_with(|| {
                let (x, y) = (a.endpoints(), b.endpoints());
                x.iter()
                    .zip(y.iter())
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    units
}

/// Nonparametric bootstrap resampling whole units within each treatment
/// group (within group and cell for conditional bounds). Replication `r`
/// draws from its own ChaCha stream `r` under the master seed.
pub fn bootstrap_variance(
    panel: &[PanelUnit],
    assumption: Assumption,
    reps: usize,
    seed: u64,
) -> Result<EndpointVariance> {
    let (n0, n1) = check_group_sizes(panel)?;
    if reps < 2 {
        return Err(Error::VarianceUndefined("bootstrap needs at least two draws".into()));
    }
    // Conditional bounds resample within group and cell so no cell loses
    // its controls; the others resample within group.
    let mut strata: Vec<Vec<PanelUnit>> = Vec::new();
    for treated in [false, true] {
        let group = canonical_group(panel, treated);
        if assumption == Assumption::Cps {
            for unit in group {
                match strata.last_mut() {
                    Some(s) if s[0].treated == treated && s[0].cell == unit.cell => s.push(unit),
                    _ => strata.push(vec![unit]),
                }
            }
        } else {
            strata.push(group);
        }
    }

    let draws: Vec<Option<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut sample = Vec::with_capacity(n0 + n1);
            for group in &strata {
                for _ in 0..group.len() {
                    sample.push(group[rng.random_range(0..group.len())].clone());
                }
            }
            bounds_for(&sample, assumption)
                .ok()
                .map(|b| (b.att_set.lower(), b.att_set.upper()))
        })
        .collect();

    let ok: Vec<(f64, f64)> = draws.into_iter().flatten().collect();
    let failed = reps - ok.len();
    if (failed as f64) > MAX_FAILED_DRAW_SHARE * reps as f64 || ok.len() < 2 {
        return Err(Error::VarianceUndefined(format!(
            "{failed} of {reps} bootstrap draws could not be estimated"
        )));
    }
    let m = ok.len() as f64;
    let mean_l = canonical_sum(ok.iter().map(|d| d.0)) / m;
    let mean_u = canonical_sum(ok.iter().map(|d| d.1)) / m;
    let var_l = canonical_sum(ok.iter().map(|d| (d.0 - mean_l).powi(2))) / (m - 1.0);
    let var_u = canonical_sum(ok.iter().map(|d| (d.1 - mean_u).powi(2))) / (m - 1.0);
    let cov = canonical_sum(ok.iter().map(|d| (d.0 - mean_l) * (d.1 - mean_u))) / (m - 1.0);
    Ok(Accumulated {
        var_lower: var_l,
        var_upper: var_u,
        cov,
    }
    .finish(n0 + n1))
}

/// Critical value `C` solving `Φ(C + √n·Δ/σ) − Φ(−C) = 1 − α` for the
/// Imbens–Manski interval, by bisection on `[z_{1−α}, z_{1−α/2}]`.
///
/// With `σ = 0` the two-sided quantile is returned; the interval then
/// collapses onto the estimated set regardless of `C`.
pub fn im_critical_value(delta_hat: f64, se_max: f64, n: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(delta_hat >= 0.0) {
        return Err(Error::Precondition(format!(
            "estimated set length must be nonnegative, got {delta_hat}"
        )));
    }
    if !(se_max >= 0.0) {
        return Err(Error::Precondition(format!(
            "standard deviation must be nonnegative, got {se_max}"
        )));
    }
    let two_sided = norm_quantile(1.0 - alpha / 2.0);
    if se_max == 0.0 {
        return Ok(two_sided);
    }
    let one_sided = norm_quantile(1.0 - alpha);
    let k = (n as f64).sqrt() * delta_hat / se_max;
    if !k.is_finite() {
        return Ok(one_sided);
    }
    let f = |c: f64| norm_cdf(c + k) - norm_cdf(-c) - (1.0 - alpha);
    let (mut lo, mut hi) = (one_sided, two_sided);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub assumption: Assumption,
    pub theta_lower_hat: f64,
    pub theta_upper_hat: f64,
    /// Asymptotic standard deviation of the lower endpoint estimate.
    pub se_lower: f64,
    pub se_upper: f64,
    pub correlation: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub ci: Interval,
    pub n: usize,
    pub variance_method: VarianceMethod,
    pub bounds: BoundsResult,
}

impl ConfidenceReport {
    /// Standard error of the lower endpoint estimate, `se_lower / √n`.
    pub fn std_error_lower(&self) -> f64 {
        self.se_lower / (self.n as f64).sqrt()
    }

    pub fn std_error_upper(&self) -> f64 {
        self.se_upper / (self.n as f64).sqrt()
    }

    /// Structured `key = value` record, appended to the bounds record.
    pub fn record(&self) -> String {
        let mut s = self.bounds.record();
        for (k, v) in [
            ("se_lower", self.se_lower),
            ("se_upper", self.se_upper),
            ("endpoint_correlation", self.correlation),
            ("critical_value", self.critical_value),
            ("alpha", self.alpha),
            ("ci_lower", self.ci.lower()),
            ("ci_upper", self.ci.upper()),
        ] {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("n = {}\n", self.n));
        s.push_str(&format!("variance_method = {}\n", self.variance_method.name()));
        s
    }
}

/// Imbens–Manski interval for the ATT under one assumption:
/// `[θ̂_L − C·se_L/√n, θ̂_U + C·se_U/√n]` with `C` from
/// [`im_critical_value`] at `σ = max(se_L, se_U)`.
pub fn confidence_interval(
    panel: &[PanelUnit],
    assumption: Assumption,
    alpha: f64,
    method: VarianceMethod,
) -> Result<ConfidenceReport> {
    let bounds = bounds_for(panel, assumption)?;
    let var = endpoint_variance(panel, assumption, method)?;
    let n = panel.len();
    let (lo, hi) = (bounds.att_set.lower(), bounds.att_set.upper());
    let cv = im_critical_value(hi - lo, var.se_lower.max(var.se_upper), n, alpha)?;
    let root_n = (n as f64).sqrt();
    let ci = Interval::new(lo - cv * var.se_lower / root_n, hi + cv * var.se_upper / root_n)?;
    Ok(ConfidenceReport {
        assumption,
        theta_lower_hat: lo,
        theta_upper_hat: hi,
        se_lower: var.se_lower,
        se_upper: var.se_upper,
        correlation: var.correlation,
        critical_value: cv,
        alpha,
        ci,
        n,
        variance_method: method,
        bounds,
    })
}

/// Replaces every outcome by a degenerate interval at its scalar value.
pub fn scalar_panel(panel: &[PanelUnit], source: crate::estimators::ScalarSource) -> Result<Vec<PanelUnit>> {
    panel
        .iter()
        .map(|u| {
            let (y1, y2) = match source {
                crate::estimators::ScalarSource::Midpoint => (u.y1.midpoint(), u.y2.midpoint()),
                crate::estimators::ScalarSource::Raw => u.scalar_outcome.ok_or_else(|| {
                    Error::Precondition(format!("unit `{}` has no scalar outcome", u.unit_id))
                })?,
            };
            let mut v = u.clone();
            v.y1 = Interval::point(y1)?;
            v.y2 = Interval::point(y2)?;
            Ok(v)
        })
        .collect()
}
