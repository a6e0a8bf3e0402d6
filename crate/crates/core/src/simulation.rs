//! Finite-support populations with known latent outcomes.
//!
//! A [`FinitePopulation`] carries both the observed intervals and the latent
//! scalars behind them, so expectations are exact weighted sums and the true
//! counterfactual mean and ATT are known. [`attainment_oracle`] builds
//! populations whose true counterfactual mean sits at a chosen point of the
//! identified set while satisfying the identifying assumption exactly, which
//! is the constructive half of sharpness.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimators::{
    bounds_from_moments, interval_trend_map, parallel_shift_map, Assumption, BoundsResult,
    GroupMomentVector, DEFAULT_WIDTH_FLOOR,
};
use crate::inference::{confidence_interval, VarianceMethod};
use crate::interval::{Interval, LinearIntervalMap};
use crate::numeric::canonical_sum;
use crate::panel::{recode_count, PanelUnit, RecodingPolicy};

/// Tolerance on the total mass of a population.
const MASS_TOL: f64 = 1e-12;

/// One support point of a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub treated: bool,
    /// Observed period-1 interval.
    pub y1: Interval,
    /// Observed period-2 interval (treated: under treatment).
    pub y2: Interval,
    /// Potential period-2 interval without treatment. Equals `y2` for
    /// control atoms; latent for treated atoms.
    pub y2_untreated: Interval,
    pub latent_y1: f64,
    pub latent_y2_0: f64,
    /// Treated potential outcome; equals `latent_y2_0` for control atoms.
    pub latent_y2_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePopulation {
    atoms: Vec<Atom>,
}

impl FinitePopulation {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let total = canonical_sum(atoms.iter().map(|a| a.mass));
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidSpec(format!("masses sum to {total}, not 1")));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.mass >= 0.0) {
                return Err(Error::InvalidSpec(format!("atom {i} has negative mass")));
            }
            let inside = a.y1.contains(a.latent_y1)
                && a.y2_untreated.contains(a.latent_y2_0)
                && (!a.treated || a.y2.contains(a.latent_y2_1))
                && (a.treated || (a.y2 == a.y2_untreated && a.latent_y2_1 == a.latent_y2_0));
            if !inside {
                return Err(Error::InvalidSpec(format!(
                    "atom {i}: latent outcomes are not inside their intervals"
                )));
            }
        }
        for treated in [false, true] {
            let mass = canonical_sum(atoms.iter().filter(|a| a.treated == treated).map(|a| a.mass));
            if mass <= 0.0 {
                return Err(Error::EmptyGroup(if treated { "treated" } else { "control" }));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn arm_mean(&self, treated: bool, f: impl Fn(&Atom) -> f64) -> f64 {
        let arm: Vec<&Atom> = self.atoms.iter().filter(|a| a.treated == treated).collect();
        let mass = canonical_sum(arm.iter().map(|a| a.mass));
        canonical_sum(arm.iter().map(|a| a.mass * f(a))) / mass
    }

    fn arm_aumann(&self, treated: bool, f: impl Fn(&Atom) -> Interval) -> Interval {
        let lo = self.arm_mean(treated, |a| f(a).lower());
        let hi = self.arm_mean(treated, |a| f(a).upper());
        Interval::new(lo, hi.max(lo)).expect("finite means")
    }

    /// Exact observed group moments.
    pub fn moments(&self) -> GroupMomentVector {
        GroupMomentVector::from_weighted(self.atoms.iter().map(|a| (a.mass, a.treated, a.y1, a.y2)))
            .expect("both arms have positive mass")
    }

    /// `E[Y2(0) | D = 1]`.
    pub fn true_counterfactual_mean(&self) -> f64 {
        self.arm_mean(true, |a| a.latent_y2_0)
    }

    /// `E[Y2(1) - Y2(0) | D = 1]`.
    pub fn true_att(&self) -> f64 {
        self.arm_mean(true, |a| a.latent_y2_1) - self.true_counterfactual_mean()
    }

    pub fn treated_share(&self) -> f64 {
        canonical_sum(self.atoms.iter().filter(|a| a.treated).map(|a| a.mass))
    }

    /// Whether the latent structure satisfies the assumption to `tol`.
    pub fn satisfies(&self, assumption: Assumption, tol: f64) -> bool {
        match assumption {
            Assumption::Spt => {
                let t = self.arm_mean(true, |a| a.latent_y2_0 - a.latent_y1);
                let c = self.arm_mean(false, |a| a.latent_y2_0 - a.latent_y1);
                (t - c).abs() <= tol
            }
            Assumption::Ipt => {
                let m = self.moments();
                let Ok(t) = interval_trend_map(&m, DEFAULT_WIDTH_FLOOR) else {
                    return false;
                };
                let target = t.apply(self.arm_aumann(true, |a| a.y1));
                self.arm_aumann(true, |a| a.y2_untreated).approx_eq(&target, tol)
            }
            Assumption::Ps => {
                let m = self.moments();
                let Ok((s, _)) = parallel_shift_map(&m, DEFAULT_WIDTH_FLOOR) else {
                    return false;
                };
                let target = s.apply(self.arm_aumann(false, |a| a.y2_untreated));
                self.arm_aumann(true, |a| a.y2_untreated).approx_eq(&target, tol)
            }
            Assumption::Cps => false,
        }
    }
}

/// A point of an identified set, as a fraction of the way from its lower
/// to its upper endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Lower,
    Upper,
    Interior(f64),
}

impl Target {
    pub fn fraction(self) -> f64 {
        match self {
            Target::Lower => 0.0,
            Target::Upper => 1.0,
            Target::Interior(a) => a,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Lower => f.write_str("lower"),
            Target::Upper => f.write_str("upper"),
            Target::Interior(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetRepr {
    Name(String),
    Fraction(f64),
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Target::Lower => TargetRepr::Name("lower".into()),
            Target::Upper => TargetRepr::Name("upper".into()),
            Target::Interior(a) => TargetRepr::Fraction(*a),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match TargetRepr::deserialize(d)? {
            TargetRepr::Name(n) if n == "lower" => Ok(Target::Lower),
            TargetRepr::Name(n) if n == "upper" => Ok(Target::Upper),
            TargetRepr::Name(n) => Err(serde::de::Error::custom(format!("unknown target `{n}`"))),
            TargetRepr::Fraction(a) => Ok(Target::Interior(a)),
        }
    }
}

/// How latent scalars are turned into observed intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coarsening {
    /// No coarsening: point intervals.
    #[default]
    None,
    /// `[k w, (k + 1) w]` for the `k` with `x` in that bracket.
    Bracket { width: f64 },
    /// The survey heaping recode.
    Heaping(RecodingPolicy),
}

impl Coarsening {
    pub fn apply(&self, x: f64) -> Result<Interval> {
        match self {
            Coarsening::None => Interval::point(x),
            Coarsening::Bracket { width } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidSpec("bracket width must be positive".into()));
                }
                let k = (x / width).floor();
                Interval::new(k * width, (k + 1.0) * width)
            }
            Coarsening::Heaping(p) => recode_count(x, p),
        }
    }
}

/// A support point given either by its observed intervals or by latent
/// scalars to be coarsened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SupportPoint {
    Observed { weight: f64, y1: Interval, y2: Interval },
    Latent { weight: f64, latent: [f64; 2] },
}

impl SupportPoint {
    pub fn observed(weight: f64, y1: Interval, y2: Interval) -> Self {
        SupportPoint::Observed { weight, y1, y2 }
    }

    fn weight(&self) -> f64 {
        match self {
            SupportPoint::Observed { weight, .. } | SupportPoint::Latent { weight, .. } => *weight,
        }
    }

    fn intervals(&self, c: &Coarsening) -> Result<(Interval, Interval)> {
        match self {
            SupportPoint::Observed { y1, y2, .. } => Ok((*y1, *y2)),
            SupportPoint::Latent { latent, .. } => Ok((c.apply(latent[0])?, c.apply(latent[1])?)),
        }
    }
}

fn default_treated_outcome() -> Target {
    Target::Interior(0.5)
}

fn default_share() -> f64 {
    0.5
}

/// Specification of an attaining population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub assumption: Assumption,
    /// Where the true counterfactual mean sits in the identified set.
    pub target: Target,
    /// Where each treated unit's outcome under treatment sits in its
    /// observed interval.
    #[serde(default = "default_treated_outcome")]
    pub treated_outcome: Target,
    #[serde(default = "default_share")]
    pub treated_share: f64,
    #[serde(default)]
    pub coarsening: Coarsening,
    pub control: Vec<SupportPoint>,
    pub treated: Vec<SupportPoint>,
}

impl DgpSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn with_target(&self, target: Target) -> Self {
        Self {
            target,
            ..self.clone()
        }
    }

    pub fn with_assumption(&self, assumption: Assumption) -> Self {
        Self {
            assumption,
            ..self.clone()
        }
    }

    /// The population whose true ATT is the lower endpoint of the ATT set:
    /// counterfactual at its upper endpoint, treated outcomes at their lower.
    pub fn att_lower_endpoint(&self) -> Self {
        Self {
            target: Target::Upper,
            treated_outcome: Target::Lower,
            ..self.clone()
        }
    }

    /// Two-group example with varied bracket widths: the control set
    /// narrows and drifts down over time, the treated group starts lower.
    pub fn demo(assumption: Assumption) -> Self {
        let iv = |l: f64, u: f64| Interval::new(l, u).expect("valid demo interval");
        let widths = [0.0, 1.0, 2.0, 4.0, 1.0, 3.0];
        let control = (0..12)
            .map(|i| {
                let x = f64::from(i);
                let w1 = widths[i as usize % 6];
                let w2 = widths[(i as usize + 2) % 6] * 0.5;
                let l1 = 18.0 + 1.5 * x;
                let l2 = l1 - 1.0 + 0.25 * (x % 3.0);
                SupportPoint::observed(1.0 + (x % 4.0), iv(l1, l1 + w1), iv(l2, l2 + w2))
            })
            .collect();
        let treated = (0..12)
            .map(|i| {
                let x = f64::from(i);
                let w1 = widths[(i as usize + 3) % 6];
                let w2 = widths[(i as usize + 1) % 6];
                let l1 = 14.0 + 1.25 * x;
                let l2 = l1 + 1.0 + 0.5 * (x % 2.0);
                SupportPoint::observed(1.0 + (x % 3.0), iv(l1, l1 + w1), iv(l2, l2 + w2))
            })
            .collect();
        Self {
            assumption,
            target: Target::Lower,
            treated_outcome: Target::Interior(0.5),
            treated_share: 0.5,
            coarsening: Coarsening::None,
            control,
            treated,
        }
    }

    /// Every support interval collapsed to its midpoint.
    pub fn degenerate(&self) -> Result<Self> {
        let point = |p: &SupportPoint| -> Result<SupportPoint> {
            let (y1, y2) = p.intervals(&self.coarsening)?;
            Ok(SupportPoint::observed(
                p.weight(),
                Interval::point(y1.midpoint())?,
                Interval::point(y2.midpoint())?,
            ))
        };
        Ok(Self {
            control: self.control.iter().map(point).collect::<Result<_>>()?,
            treated: self.treated.iter().map(point).collect::<Result<_>>()?,
            ..self.clone()
        })
    }
}

struct ObservedArm {
    masses: Vec<f64>,
    y1: Vec<Interval>,
    y2: Vec<Interval>,
}

fn resolve_arm(points: &[SupportPoint], share: f64, c: &Coarsening, name: &str) -> Result<ObservedArm> {
    if points.is_empty() {
        return Err(Error::InvalidSpec(format!("{name} arm has no support points")));
    }
    if points.iter().any(|p| !(p.weight() > 0.0)) {
        return Err(Error::InvalidSpec(format!("{name} arm has a nonpositive weight")));
    }
    let total = canonical_sum(points.iter().map(SupportPoint::weight));
    let mut arm = ObservedArm {
        masses: Vec::new(),
        y1: Vec::new(),
        y2: Vec::new(),
    };
    for p in points {
        let (y1, y2) = p.intervals(c)?;
        arm.masses.push(share * p.weight() / total);
        arm.y1.push(y1);
        arm.y2.push(y2);
    }
    Ok(arm)
}

/// Builds a population consistent with the spec's observed supports whose
/// latent outcomes satisfy the spec's assumption exactly and whose true
/// counterfactual mean is the targeted point of the identified set.
///
/// Endpoint targets follow the extremal constructions (for SPT: control
/// units at period-1 upper and period-2 lower bounds, treated units at
/// their period-1 lower bound plus the control trend); interior targets
/// are pointwise convex mixtures of the two extremal constructions.
pub fn attainment_oracle(spec: &DgpSpec) -> Result<FinitePopulation> {
    let t = spec.target.fraction();
    let tau = spec.treated_outcome.fraction();
    if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidSpec("target fractions must lie in [0, 1]".into()));
    }
    let share = spec.treated_share;
    if !(share > 0.0 && share < 1.0) {
        return Err(Error::InvalidSpec("treated_share must lie in (0, 1)".into()));
    }
    let control = resolve_arm(&spec.control, 1.0 - share, &spec.coarsening, "control")?;
    let treated = resolve_arm(&spec.treated, share, &spec.coarsening, "treated")?;

    let observed = control
        .masses
        .iter()
        .zip(control.y1.iter().zip(&control.y2))
        .map(|(m, (a, b))| (*m, false, *a, *b))
        .chain(
            treated
                .masses
                .iter()
                .zip(treated.y1.iter().zip(&treated.y2))
                .map(|(m, (a, b))| (*m, true, *a, *b)),
        )
        .collect::<Vec<_>>();
    let moments = GroupMomentVector::from_weighted(observed.iter().copied())?;

    // Control latents.
    let mut atoms: Vec<Atom> = Vec::with_capacity(observed.len());
    for i in 0..control.masses.len() {
        let (y1, y2) = (control.y1[i], control.y2[i]);
        let (l1, l2) = match spec.assumption {
            // Mixture of (upper, lower) and (lower, upper).
            Assumption::Spt => (y1.point_at(1.0 - t), y2.point_at(t)),
            _ => (y1.midpoint(), y2.midpoint()),
        };
        atoms.push(Atom {
            mass: control.masses[i],
            treated: false,
            y1,
            y2,
            y2_untreated: y2,
            latent_y1: l1,
            latent_y2_0: l2,
            latent_y2_1: l2,
        });
    }

    // Treated latents: untreated period-2 interval as a map of period 1.
    let untreated_map: Box<dyn Fn(Interval) -> (Interval, LinearIntervalMap)> = match spec.assumption {
        Assumption::Spt => {
            let cmass = canonical_sum(atoms.iter().map(|a| a.mass));
            let trend = canonical_sum(atoms.iter().map(|a| a.mass * (a.latent_y2_0 - a.latent_y1))) / cmass;
            let shift = LinearIntervalMap::new(1.0, 0.0, trend)?;
            Box::new(move |y1| (shift.apply(y1), shift))
        }
        Assumption::Ipt => {
            let tmap = interval_trend_map(&moments, DEFAULT_WIDTH_FLOOR)
                .map_err(|e| Error::InvalidSpec(format!("infeasible spec: {e}")))?;
            Box::new(move |y1| (tmap.apply(y1), tmap))
        }
        Assumption::Ps => {
            let (s, _) = parallel_shift_map(&moments, DEFAULT_WIDTH_FLOOR)
                .map_err(|e| Error::InvalidSpec(format!("infeasible spec: {e}")))?;
            // Carry the treated period-1 mean onto S(A2), unit by unit.
            let b1 = moments.b1();
            let goal = s.apply(moments.a2());
            let r = if b1.width() > 0.0 {
                LinearIntervalMap::carrying(b1, goal, 0.0)?
            } else {
                LinearIntervalMap::new(0.0, 0.0, goal.lower())?
            };
            Box::new(move |y1| (r.apply(y1), r))
        }
        Assumption::Cps => {
            return Err(Error::InvalidSpec(
                "attainment populations cover SPT, IPT and PS".into(),
            ))
        }
    };

    for i in 0..treated.masses.len() {
        let (y1, y2) = (treated.y1[i], treated.y2[i]);
        let latent_y1 = y1.point_at(t);
        let (y2_untreated, map) = untreated_map(y1);
        let latent_y2_0 = match spec.assumption {
            Assumption::Spt => latent_y1 + map.anchor_out(),
            _ => y2_untreated.point_at(t),
        };
        let y2_untreated = if spec.assumption == Assumption::Spt {
            Interval::point(latent_y2_0)?
        } else {
            y2_untreated
        };
        atoms.push(Atom {
            mass: treated.masses[i],
            treated: true,
            y1,
            y2,
            y2_untreated,
            latent_y1,
            latent_y2_0,
            latent_y2_1: y2.point_at(tau),
        });
    }
    FinitePopulation::new(atoms)
}

/// Identified sets evaluated at exact population moments.
pub fn population_bounds(pop: &FinitePopulation, assumption: Assumption) -> Result<BoundsResult> {
    bounds_from_moments(&pop.moments(), assumption)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Independent multinomial draws over the support. Draws leaving an
    /// arm empty are repeated.
    Iid,
    /// Each atom repeated `mass * n` times; masses must make that integral.
    Enumerate,
}

const MAX_REDRAWS: usize = 100;

/// Draws a panel of `n` units from a population.
pub fn sample_from(pop: &FinitePopulation, n: usize, seed: u64, mode: SampleMode) -> Result<Vec<PanelUnit>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with_rng(pop, n, mode, &mut rng)
}

fn unit(i: usize, a: &Atom) -> PanelUnit {
    PanelUnit::new(format!("u{i}"), a.treated, a.y1, a.y2)
}

fn sample_with_rng(pop: &FinitePopulation, n: usize, mode: SampleMode, rng: &mut ChaCha8Rng) -> Result<Vec<PanelUnit>> {
    match mode {
        SampleMode::Enumerate => {
            let mut out = Vec::with_capacity(n);
            for a in pop.atoms() {
                let k = a.mass * n as f64;
                let r = k.round();
                if (k - r).abs() > 1e-9 {
                    return Err(Error::InvalidSpec(format!(
                        "mass {} times {n} is not a whole number of units",
                        a.mass
                    )));
                }
                for _ in 0..r as usize {
                    out.push(unit(out.len(), a));
                }
            }
            Ok(out)
        }
        SampleMode::Iid => {
            let dist = WeightedIndex::new(pop.atoms().iter().map(|a| a.mass))
                .map_err(|e| Error::InvalidSpec(e.to_string()))?;
            for _ in 0..MAX_REDRAWS {
                let panel: Vec<PanelUnit> = (0..n).map(|i| unit(i, &pop.atoms()[dist.sample(rng)])).collect();
                let treated = panel.iter().filter(|u| u.treated).count();
                if treated > 0 && treated < n {
                    return Ok(panel);
                }
            }
            Err(Error::InvalidSpec(format!(
                "{MAX_REDRAWS} draws of {n} units all left an arm empty"
            )))
        }
    }
}

/// One oracle-closure check.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessCheck {
    pub assumption: Assumption,
    pub target: Target,
    pub set: Interval,
    pub targeted_point: f64,
    pub true_counterfactual: f64,
    pub satisfies_assumption: bool,
}

impl SharpnessCheck {
    pub fn error(&self) -> f64 {
        (self.targeted_point - self.true_counterfactual).abs()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.satisfies_assumption && self.error() <= tol
    }
}

pub const SHARPNESS_TARGETS: [Target; 5] = [
    Target::Lower,
    Target::Upper,
    Target::Interior(0.25),
    Target::Interior(0.5),
    Target::Interior(0.75),
];

/// Runs the attainment oracle for SPT, IPT, PS at every standard target.
pub fn sharpness_suite(base: &DgpSpec) -> Result<Vec<SharpnessCheck>> {
    let mut out = Vec::new();
    for a in [Assumption::Spt, Assumption::Ipt, Assumption::Ps] {
        for target in SHARPNESS_TARGETS {
            let spec = base.with_assumption(a).with_target(target);
            let pop = attainment_oracle(&spec)?;
            let set = population_bounds(&pop, a)?.counterfactual_set;
            out.push(SharpnessCheck {
                assumption: a,
                target,
                set,
                targeted_point: set.point_at(target.fraction()),
                true_counterfactual: pop.true_counterfactual_mean(),
                satisfies_assumption: pop.satisfies(a, 1e-10),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub assumption: Assumption,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub true_att: f64,
    pub population_att_set: Interval,
    pub coverage: f64,
    pub mean_ci_length: f64,
    pub bias_lower: f64,
    pub bias_upper: f64,
    pub failed_reps: usize,
}

impl CoverageReport {
    pub fn to_text(&self) -> String {
        format!(
            "assumption = {}\nn = {}\nreps = {}\nalpha = {}\nseed = {}\ntrue_att = {}\n\
             population_att_lower = {}\npopulation_att_upper = {}\ncoverage = {}\n\
             mean_ci_length = {}\nbias_lower = {}\nbias_upper = {}\nfailed_reps = {}\n",
            self.assumption,
            self.n,
            self.reps,
            self.alpha,
            self.seed,
            self.true_att,
            self.population_att_set.lower(),
            self.population_att_set.upper(),
            self.coverage,
            self.mean_ci_length,
            self.bias_lower,
            self.bias_upper,
            self.failed_reps
        )
    }

    pub const CSV_HEADER: &'static str =
        "assumption,n,reps,alpha,seed,true_att,population_att_lower,population_att_upper,coverage,mean_ci_length,bias_lower,bias_upper,failed_reps";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.assumption,
            self.n,
            self.reps,
            self.alpha,
            self.seed,
            self.true_att,
            self.population_att_set.lower(),
            self.population_att_set.upper(),
            self.coverage,
            self.mean_ci_length,
            self.bias_lower,
            self.bias_upper,
            self.failed_reps
        )
    }
}

/// Repeatedly samples `n` units from the spec's attaining population and
/// records how often the Imbens–Manski interval (delta-method standard
/// errors) covers the population's true ATT. Replication `r` uses stream
/// `r` of the master seed.
pub fn coverage_experiment(spec: &DgpSpec, n: usize, reps: usize, alpha: f64, seed: u64) -> Result<CoverageReport> {
    if reps < 100 {
        return Err(Error::InvalidSpec(format!("coverage needs at least 100 replications, got {reps}")));
    }
    let pop = attainment_oracle(spec)?;
    let truth = pop.true_att();
    let pop_set = population_bounds(&pop, spec.assumption)?.att_set;

    let outcomes: Vec<Option<(bool, f64, f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let panel = sample_with_rng(&pop, n, SampleMode::Iid, &mut rng).ok()?;
            let rep = confidence_interval(&panel, spec.assumption, alpha, VarianceMethod::Delta).ok()?;
            Some((rep.ci.contains(truth), rep.ci.width(), rep.theta_lower_hat, rep.theta_upper_hat))
        })
        .collect();

    let ok: Vec<(bool, f64, f64, f64)> = outcomes.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::InvalidSpec("no replication could be estimated".into()));
    }
    let m = ok.len() as f64;
    Ok(CoverageReport {
        assumption: spec.assumption,
        n,
        reps,
        alpha,
        seed,
        true_att: truth,
        population_att_set: pop_set,
        coverage: ok.iter().filter(|o| o.0).count() as f64 / m,
        mean_ci_length: canonical_sum(ok.iter().map(|o| o.1)) / m,
        bias_lower: canonical_sum(ok.iter().map(|o| o.2)) / m - pop_set.lower(),
        bias_upper: canonical_sum(ok.iter().map(|o| o.3)) / m - pop_set.upper(),
        failed_reps: reps - ok.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(l: f64, u: f64) -> Interval {
        Interval::new(l, u).unwrap()
    }

    /// Single-atom arms carrying the worked example's group means.
    fn example_one(assumption: Assumption, target: Target) -> DgpSpec {
        DgpSpec {
            assumption,
            target,
            treated_outcome: Target::Lower,
            treated_share: 0.5,
            coarsening: Coarsening::None,
            control: vec![SupportPoint::observed(1.0, iv(1.0, 3.0), iv(0.0, 0.5))],
            treated: vec![SupportPoint::observed(1.0, iv(-3.0, -1.0), iv(0.0, 0.0))],
        }
    }

    #[test]
    fn spt_lower_on_example_one() {
        let pop = attainment_oracle(&example_one(Assumption::Spt, Target::Lower)).unwrap();
        assert!((pop.true_counterfactual_mean() - -6.0).abs() < 1e-12);
        assert!(pop.satisfies(Assumption::Spt, 1e-12));
        let b = population_bounds(&pop, Assumption::Spt).unwrap();
        assert!(b.counterfactual_set.approx_eq(&iv(-6.0, -1.5), 1e-12));
    }

    #[test]
    fn ps_lower_on_example_one() {
        let pop = attainment_oracle(&example_one(Assumption::Ps, Target::Lower)).unwrap();
        assert!((pop.true_counterfactual_mean() - -4.0).abs() < 1e-12);
        assert!(pop.satisfies(Assumption::Ps, 1e-12));
    }

    #[test]
    fn midpoint_mixture() {
        for a in [Assumption::Spt, Assumption::Ipt, Assumption::Ps] {
            let pop = attainment_oracle(&example_one(a, Target::Interior(0.5))).unwrap();
            let set = population_bounds(&pop, a).unwrap().counterfactual_set;
            assert!((pop.true_counterfactual_mean() - set.midpoint()).abs() < 1e-12, "{a}");
        }
    }

    #[test]
    fn demo_sharpness_closes() {
        for check in sharpness_suite(&DgpSpec::demo(Assumption::Ps)).unwrap() {
            assert!(check.passes(1e-10), "{check:?}");
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        let mut spec = example_one(Assumption::Ipt, Target::Lower);
        spec.control = vec![SupportPoint::observed(1.0, iv(2.0, 2.0), iv(0.0, 1.0))];
        assert!(matches!(attainment_oracle(&spec), Err(Error::InvalidSpec(_))));
        let mut spec = example_one(Assumption::Ps, Target::Interior(1.5));
        assert!(attainment_oracle(&spec).is_err());
        spec.target = Target::Lower;
        spec.treated_share = 1.0;
        assert!(attainment_oracle(&spec).is_err());
    }

    #[test]
    fn enumerate_replicates_population_moments() {
        let spec = DgpSpec {
            treated_share: 0.5,
            ..DgpSpec::demo(Assumption::Ps)
        };
        let pop = attainment_oracle(&spec).unwrap();
        // Arm weights sum to 30 and 24, so masses are w/60 and w/48.
        let n = 240;
        let panel = sample_from(&pop, n, 0, SampleMode::Enumerate).unwrap();
        let m = GroupMomentVector::from_panel(&panel).unwrap();
        let pm = pop.moments();
        for k in 0..4 {
            assert!((m.control[k] - pm.control[k]).abs() < 1e-9);
            assert!((m.treated[k] - pm.treated[k]).abs() < 1e-9);
        }
        assert!(sample_from(&pop, 7, 0, SampleMode::Enumerate).is_err());
    }

    #[test]
    fn iid_sampling_is_deterministic() {
        let pop = attainment_oracle(&DgpSpec::demo(Assumption::Ps)).unwrap();
        let a = sample_from(&pop, 200, 42, SampleMode::Iid).unwrap();
        let b = sample_from(&pop, 200, 42, SampleMode::Iid).unwrap();
        let c = sample_from(&pop, 200, 43, SampleMode::Iid).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn coarsening_rules() {
        assert_eq!(Coarsening::Bracket { width: 2.0 }.apply(3.3).unwrap(), iv(2.0, 4.0));
        assert_eq!(
            Coarsening::Heaping(RecodingPolicy::default()).apply(15.0).unwrap(),
            iv(10.0, 20.0)
        );
        assert_eq!(Coarsening::None.apply(1.5).unwrap(), iv(1.5, 1.5));
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = DgpSpec::demo(Assumption::Ipt).with_target(Target::Interior(0.25));
        let text = spec.to_toml().unwrap();
        assert_eq!(DgpSpec::from_toml(&text).unwrap(), spec);
        let latent = "assumption = \"PS\"\ntarget = \"upper\"\n[coarsening.bracket]\nwidth = 2.0\n\
                      [[control]]\nweight = 1.0\nlatent = [3.3, 1.2]\n[[control]]\nweight = 1.0\nlatent = [5.0, 2.5]\n\
                      [[treated]]\nweight = 1.0\nlatent = [0.5, 4.0]\n";
        let spec = DgpSpec::from_toml(latent).unwrap();
        let pop = attainment_oracle(&spec).unwrap();
        assert!(pop.satisfies(Assumption::Ps, 1e-12));
        assert!(DgpSpec::from_toml("assumption = \"XYZ\"").is_err());
    }

    fn arm_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64, f64, f64)>> {
        proptest::collection::vec(
            (0.1f64..3.0, -10.0f64..10.0, 0.1f64..4.0, -10.0f64..10.0, 0.0f64..4.0, 0.0f64..1.0),
            1..6,
        )
    }

    fn points(v: &[(f64, f64, f64, f64, f64, f64)]) -> Vec<SupportPoint> {
        v.iter()
            .map(|&(w, l1, w1, l2, w2, _)| SupportPoint::observed(w, iv(l1, l1 + w1), iv(l2, l2 + w2)))
            .collect()
    }

    proptest! {
        #[test]
        fn oracle_closure_random_supports(c in arm_strategy(), t in arm_strategy(), frac in 0.0f64..=1.0) {
            let base = DgpSpec {
                assumption: Assumption::Ps,
                target: Target::Interior(frac),
                treated_outcome: Target::Interior(0.5),
                treated_share: 0.4,
                coarsening: Coarsening::None,
                control: points(&c),
                treated: points(&t),
            };
            for a in [Assumption::Spt, Assumption::Ipt, Assumption::Ps] {
                let pop = attainment_oracle(&base.with_assumption(a)).unwrap();
                let b = population_bounds(&pop, a).unwrap();
                prop_assert!((b.counterfactual_set.point_at(frac) - pop.true_counterfactual_mean()).abs() < 1e-9);
                prop_assert!(pop.satisfies(a, 1e-9));
            }
        }

        // Validity: populations satisfying the assumption with latents
        // placed at random points inside their intervals.
        #[test]
        fn true_att_inside_identified_set(c in arm_strategy(), t in arm_strategy()) {
            let spec = DgpSpec {
                assumption: Assumption::Ps,
                target: Target::Lower,
                treated_outcome: Target::Lower,
                treated_share: 0.5,
                coarsening: Coarsening::None,
                control: points(&c),
                treated: points(&t),
            };
            let base = attainment_oracle(&spec).unwrap();
            let m = base.moments();
            let tmap = interval_trend_map(&m, DEFAULT_WIDTH_FLOOR).unwrap();
            let (smap, _) = parallel_shift_map(&m, DEFAULT_WIDTH_FLOOR).unwrap();
            let goal = smap.apply(m.a2());
            let rmap = if m.b1().width() > 0.0 {
                LinearIntervalMap::carrying(m.b1(), goal, 0.0).unwrap()
            } else {
                LinearIntervalMap::new(0.0, 0.0, goal.lower()).unwrap()
            };
            let fracs: Vec<f64> = c.iter().chain(t.iter()).map(|x| x.5).collect();

            // SPT: random control latents, treated trend plus mean-zero noise.
            let mut atoms: Vec<Atom> = base.atoms().to_vec();
            let nc = c.len();
            for (i, a) in atoms.iter_mut().enumerate().take(nc) {
                a.latent_y1 = a.y1.point_at(fracs[i]);
                a.latent_y2_0 = a.y2.point_at(1.0 - fracs[i]);
                a.latent_y2_1 = a.latent_y2_0;
            }
            let cm: f64 = atoms[..nc].iter().map(|a| a.mass).sum();
            let trend: f64 = atoms[..nc].iter().map(|a| a.mass * (a.latent_y2_0 - a.latent_y1)).sum::<f64>() / cm;
            let tm: f64 = atoms[nc..].iter().map(|a| a.mass).sum();
            let noise: Vec<f64> = fracs[nc..].iter().map(|f| f - 0.5).collect();
            let noise_mean: f64 = atoms[nc..].iter().zip(&noise).map(|(a, z)| a.mass * z).sum::<f64>() / tm;
            for (k, a) in atoms.iter_mut().skip(nc).enumerate() {
                a.latent_y1 = a.y1.point_at(fracs[nc + k]);
                a.latent_y2_0 = a.latent_y1 + trend + (noise[k] - noise_mean);
                a.y2_untreated = Interval::point(a.latent_y2_0).unwrap();
                a.latent_y2_1 = a.y2.point_at(fracs[nc + k]);
            }
            let pop = FinitePopulation::new(atoms.clone()).unwrap();
            prop_assert!(pop.satisfies(Assumption::Spt, 1e-9));
            let b = population_bounds(&pop, Assumption::Spt).unwrap();
            prop_assert!(b.att_set.lower() - 1e-9 <= pop.true_att() && pop.true_att() <= b.att_set.upper() + 1e-9);

            // IPT and PS: treated untreated intervals from the map, latents at random points.
            for (a_kind, map) in [(Assumption::Ipt, tmap), (Assumption::Ps, rmap)] {
                let mut atoms = atoms.clone();
                for (k, a) in atoms.iter_mut().skip(nc).enumerate() {
                    a.y2_untreated = map.apply(a.y1);
                    a.latent_y2_0 = a.y2_untreated.point_at(fracs[nc + k]);
                }
                let pop = FinitePopulation::new(atoms).unwrap();
                prop_assert!(pop.satisfies(a_kind, 1e-9));
                let b = population_bounds(&pop, a_kind).unwrap();
                let truth = pop.true_att();
                prop_assert!(b.att_set.lower() - 1e-9 <= truth && truth <= b.att_set.upper() + 1e-9);
            }
        }
    }
}
