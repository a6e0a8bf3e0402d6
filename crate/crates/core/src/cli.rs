//! Command orchestration behind the `intdid` binary.
//!
//! Every command is a plain function from a resolved [`RunConfig`] to a
//! [`RunSummary`]; the binary only parses flags, prints, and picks the exit
//! code. Output files land in the configured directory before any failure
//! is reported, so partial results survive a nonzero exit.
//!
//! Figure-data files have fixed headers:
//!
//! | file | header |
//! |------|--------|
//! | `bounds_over_time.csv` | `series,group,period,lower,upper` |
//! | `att_bounds.csv` | `assumption,att_lower,att_upper,ci_lower,ci_upper,alpha` |
//! | `estimates.csv` | see [`ESTIMATES_HEADER`] |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{
    bound_by_bound_image, bounds_cps, bounds_from_moments, bounds_spt, classical_did, Assumption,
    GroupMomentVector, ScalarSource,
};
use crate::inference::{
    confidence_interval, im_critical_value, scalar_panel, ConfidenceReport, VarianceMethod,
    DEFAULT_BOOTSTRAP_REPS,
};
use crate::interval::{check_lemma_conditions, Interval};
use crate::numeric::norm_quantile;
use crate::panel::{load_panel_from_reader, LoadReport, PanelUnit, RecodingPolicy};
use crate::schema::{parse_key_values, PolicyOverrides, Schema};
use crate::simulation::{coverage_experiment, sharpness_suite, CoverageReport, DgpSpec};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_SIM_N: usize = 500;
pub const DEFAULT_SIM_REPS: usize = 1000;
/// Closure tolerance for the sharpness checks.
pub const SHARPNESS_TOL: f64 = 1e-10;
/// Tolerance for golden values and width identities.
pub const GOLDEN_TOL: f64 = 1e-9;
/// Random moment vectors drawn by the self-test.
pub const SELFTEST_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Recode,
    Estimate,
    Simulate,
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FigureFormat {
    #[default]
    Csv,
    Svg,
}

impl FromStr for FigureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(FigureFormat::Csv),
            "svg" => Ok(FigureFormat::Svg),
            other => Err(Error::Config(format!("unknown figure format `{other}` (csv or svg)"))),
        }
    }
}

/// Settings that may come from a config file or from flags. `None` means
/// "not given here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    /// A schema file, or one of the built-in profiles `ck94` / `recoded`.
    pub schema: Option<String>,
    pub assumptions: Option<Vec<Assumption>>,
    pub alpha: Option<f64>,
    /// `delta` or `bootstrap`.
    pub variance: Option<String>,
    pub boot_reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub figure_format: Option<FigureFormat>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub coverage: Option<bool>,
    pub policy: PolicyOverrides,
}

pub fn parse_assumptions(s: &str) -> Result<Vec<Assumption>> {
    let list: Vec<Assumption> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(Assumption::from_str)
        .collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Config("empty assumption list".into()));
    }
    Ok(list)
}

impl Overrides {
    /// Reads a `key = value` config file. Keys match the long flag names
    /// with `_` for `-`, plus the recoding policy keys.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut o = Overrides::default();
        let bad = |key: &str, v: &str| Error::Config(format!("invalid value `{v}` for `{key}` in config file"));
        for (key, (_, v)) in &kv {
            let v = v.as_str();
            match key.as_str() {
                "input" => o.input = Some(PathBuf::from(v)),
                "schema" => o.schema = Some(v.to_string()),
                "assumptions" => o.assumptions = Some(parse_assumptions(v)?),
                "alpha" => o.alpha = Some(v.parse().map_err(|_| bad(key, v))?),
                "variance" => o.variance = Some(v.to_string()),
                "boot_reps" => o.boot_reps = Some(v.parse().map_err(|_| bad(key, v))?),
                "seed" => o.seed = Some(v.parse().map_err(|_| bad(key, v))?),
                "out" => o.out = Some(PathBuf::from(v)),
                "figure_format" => o.figure_format = Some(v.parse()?),
                "n" => o.n = Some(v.parse().map_err(|_| bad(key, v))?),
                "reps" => o.reps = Some(v.parse().map_err(|_| bad(key, v))?),
                "coverage" => o.coverage = Some(v.parse().map_err(|_| bad(key, v))?),
                "heap_threshold" | "heap_modulus" | "heap_halfwidth" | "decimal_rule" => {}
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        let mut get = |k: &'static str| kv.get(k).map(|(_, v)| v.clone());
        o.policy = crate::schema::policy_overrides(&kv, &mut get)?;
        Ok(o)
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config_text(&text)
    }

    /// Values in `later` win.
    pub fn merge(&self, later: &Overrides) -> Overrides {
        let l = later.clone();
        let s = self.clone();
        Overrides {
            input: l.input.or(s.input),
            schema: l.schema.or(s.schema),
            assumptions: l.assumptions.or(s.assumptions),
            alpha: l.alpha.or(s.alpha),
            variance: l.variance.or(s.variance),
            boot_reps: l.boot_reps.or(s.boot_reps),
            seed: l.seed.or(s.seed),
            out: l.out.or(s.out),
            figure_format: l.figure_format.or(s.figure_format),
            n: l.n.or(s.n),
            reps: l.reps.or(s.reps),
            coverage: l.coverage.or(s.coverage),
            policy: self.policy.merge(&later.policy),
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub schema: Option<String>,
    pub policy: PolicyOverrides,
    pub assumptions: Vec<Assumption>,
    pub alpha: f64,
    pub variance: VarianceMethod,
    pub seed: u64,
    pub out: PathBuf,
    pub figure_format: FigureFormat,
    pub n: usize,
    pub reps: usize,
    pub coverage: bool,
}

impl RunConfig {
    /// Applies defaults and checks the invariants: `α ∈ (0, 1)`, the input
    /// exists when the command needs one.
    pub fn resolve(command: Command, o: Overrides) -> Result<Self> {
        let alpha = o.alpha.unwrap_or(DEFAULT_ALPHA);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let seed = o.seed.unwrap_or(DEFAULT_SEED);
        let variance = match o.variance.as_deref().unwrap_or("delta") {
            "delta" => VarianceMethod::Delta,
            "bootstrap" => VarianceMethod::Bootstrap {
                reps: o.boot_reps.unwrap_or(DEFAULT_BOOTSTRAP_REPS),
                seed,
            },
            other => return Err(Error::Config(format!("unknown variance method `{other}` (delta or bootstrap)"))),
        };
        if matches!(command, Command::Recode | Command::Estimate) && o.input.is_none() {
            return Err(Error::Config("this command needs --input".into()));
        }
        if let Some(p) = &o.input {
            if !p.exists() {
                return Err(Error::Config(format!("input `{}` does not exist", p.display())));
            }
        }
        Ok(RunConfig {
            command,
            input: o.input,
            schema: o.schema,
            policy: o.policy,
            assumptions: o.assumptions.unwrap_or_else(|| Assumption::ALL.to_vec()),
            alpha,
            variance,
            seed,
            out: o.out.unwrap_or_else(|| PathBuf::from("intdid-out")),
            figure_format: o.figure_format.unwrap_or_default(),
            n: o.n.unwrap_or(DEFAULT_SIM_N),
            reps: o.reps.unwrap_or(DEFAULT_SIM_REPS),
            coverage: o.coverage.unwrap_or(false),
        })
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    /// Human-readable report for the terminal.
    pub text: String,
    pub files: Vec<PathBuf>,
    /// One entry per requested computation that failed.
    pub failures: Vec<String>,
}

impl RunSummary {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    match cfg.command {
        Command::Recode => cmd_recode(cfg),
        Command::Estimate => cmd_estimate(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Selftest => cmd_selftest(cfg),
    }
}

/// `x` at six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Picks the schema: a built-in profile name, a schema file, or (when
/// none is given) the recoded-panel profile if the header has its
/// columns and the survey profile otherwise.
pub fn resolve_schema(choice: Option<&str>, input_text: &str) -> Result<Schema> {
    match choice {
        Some("ck94") => Ok(Schema::ck94()),
        Some("recoded") => Ok(Schema::recoded_panel()),
        Some(path) => Schema::from_file(path),
        None => {
            let header = input_text.lines().next().unwrap_or("");
            if header.contains("y1_lower") {
                Ok(Schema::recoded_panel())
            } else {
                Ok(Schema::ck94())
            }
        }
    }
}

fn load_input(cfg: &RunConfig) -> Result<(Vec<PanelUnit>, LoadReport, RecodingPolicy)> {
    let path = cfg.input.as_ref().ok_or_else(|| Error::Config("missing --input".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema = resolve_schema(cfg.schema.as_deref(), &text)?;
    let policy = schema.policy.merge(&cfg.policy).apply(RecodingPolicy::default());
    let (panel, report) = load_panel_from_reader(text.as_bytes(), &schema, &policy)?;
    Ok((panel, report, policy))
}

fn write_file(out: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

pub const RECODED_HEADER: &str = "id,treated,y1_lower,y1_upper,y2_lower,y2_upper,cell";

pub fn recoded_csv(panel: &[PanelUnit]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECODED_HEADER.split(','))?;
    for u in panel {
        w.write_record([
            u.unit_id.clone(),
            u8::from(u.treated).to_string(),
            u.y1.lower().to_string(),
            u.y1.upper().to_string(),
            u.y2.lower().to_string(),
            u.y2.upper().to_string(),
            u.cell.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn cmd_recode(cfg: &RunConfig) -> Result<RunSummary> {
    let (panel, report, policy) = load_input(cfg)?;
    let mut s = RunSummary::default();
    let mut text = report.to_string();
    let widened = |f: fn(&PanelUnit) -> Interval| panel.iter().filter(|u| !f(u).is_degenerate()).count();
    writeln!(text, "interval_y1 = {}", widened(|u| u.y1)).ok();
    writeln!(text, "interval_y2 = {}", widened(|u| u.y2)).ok();
    writeln!(text, "heap_threshold = {}", policy.heap_threshold).ok();
    writeln!(text, "heap_modulus = {}", policy.heap_modulus).ok();
    writeln!(text, "heap_halfwidth = {}", policy.heap_halfwidth).ok();
    write_file(&cfg.out, "recoded_panel.csv", &recoded_csv(&panel)?, &mut s.files)?;
    write_file(&cfg.out, "load_report.txt", &text, &mut s.files)?;
    s.text = text;
    Ok(s)
}

pub const ESTIMATES_HEADER: &str = "assumption,counterfactual_lower,counterfactual_upper,att_lower,att_upper,\
std_error_lower,std_error_upper,critical_value,ci_lower,ci_upper,alpha,n,variance,status";

/// Label of the classical scalar DID row.
pub const CLASSICAL_ROW: &str = "DID";

/// One estimate row: the label and either the report or the error.
pub type EstimateRow = (String, std::result::Result<ConfidenceReport, String>);

/// Runs every requested assumption plus the classical DID on the scalar
/// outcomes (raw counts when the panel carries them, midpoints otherwise).
pub fn estimate_rows(panel: &[PanelUnit], assumptions: &[Assumption], alpha: f64, method: VarianceMethod) -> Vec<EstimateRow> {
    let mut rows: Vec<EstimateRow> = assumptions
        .iter()
        .map(|&a| (a.to_string(), confidence_interval(panel, a, alpha, method).map_err(|e| e.to_string())))
        .collect();
    let source = if panel.iter().all(|u| u.scalar_outcome.is_some()) {
        ScalarSource::Raw
    } else {
        ScalarSource::Midpoint
    };
    let classical = scalar_panel(panel, source)
        .and_then(|p| confidence_interval(&p, Assumption::Spt, alpha, method))
        .map_err(|e| e.to_string());
    rows.push((CLASSICAL_ROW.to_string(), classical));
    rows
}

fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut out = String::from(ESTIMATES_HEADER);
    out.push('\n');
    for (label, r) in rows {
        match r {
            Ok(r) => {
                let b = &r.bounds;
                writeln!(
                    out,
                    "{label},{},{},{},{},{},{},{},{},{},{},{},{},ok",
                    b.counterfactual_set.lower(),
                    b.counterfactual_set.upper(),
                    r.theta_lower_hat,
                    r.theta_upper_hat,
                    r.std_error_lower(),
                    r.std_error_upper(),
                    r.critical_value,
                    r.ci.lower(),
                    r.ci.upper(),
                    r.alpha,
                    r.n,
                    r.variance_method.name()
                )
                .ok();
            }
            Err(e) => {
                writeln!(out, "{label},,,,,,,,,,,,,\"error: {}\"", e.replace('"', "'")).ok();
            }
        }
    }
    out
}

fn estimates_table(rows: &[EstimateRow]) -> String {
    let mut out = format!(
        "{:<5} {:>24} {:>11} {:>11} {:>9} {:>24}\n",
        "", "ATT set", "se(lower)", "se(upper)", "C", "CI"
    );
    for (label, r) in rows {
        match r {
            Ok(r) => {
                let set = format!("[{}, {}]", sig6(r.theta_lower_hat), sig6(r.theta_upper_hat));
                let ci = format!("[{}, {}]", sig6(r.ci.lower()), sig6(r.ci.upper()));
                writeln!(
                    out,
                    "{label:<5} {set:>24} {:>11} {:>11} {:>9} {ci:>24}",
                    sig6(r.std_error_lower()),
                    sig6(r.std_error_upper()),
                    sig6(r.critical_value)
                )
                .ok();
            }
            Err(e) => {
                writeln!(out, "{label:<5} error: {e}").ok();
            }
        }
    }
    out
}

pub const BOUNDS_OVER_TIME_HEADER: &str = "series,group,period,lower,upper";
pub const ATT_BOUNDS_HEADER: &str = "assumption,att_lower,att_upper,ci_lower,ci_upper,alpha";

/// Observed group means per period, then the treated group's period-2
/// counterfactual set under each assumption (with period 1 repeated so
/// each series draws as a path).
pub fn bounds_over_time_csv(m: &GroupMomentVector, rows: &[EstimateRow]) -> String {
    let mut out = String::from(BOUNDS_OVER_TIME_HEADER);
    out.push('\n');
    for (group, p1, p2) in [("control", m.a1(), m.a2()), ("treated", m.b1(), m.b2())] {
        for (t, iv) in [(1, p1), (2, p2)] {
            writeln!(out, "observed,{group},{t},{},{}", iv.lower(), iv.upper()).ok();
        }
    }
    for (label, r) in rows {
        if let (Ok(r), true) = (r, label != CLASSICAL_ROW) {
            let cf = r.bounds.counterfactual_set;
            writeln!(out, "{label},treated,1,{},{}", m.b1().lower(), m.b1().upper()).ok();
            writeln!(out, "{label},treated,2,{},{}", cf.lower(), cf.upper()).ok();
        }
    }
    out
}

pub fn att_bounds_csv(rows: &[EstimateRow]) -> String {
    let mut out = String::from(ATT_BOUNDS_HEADER);
    out.push('\n');
    for (label, r) in rows {
        if let Ok(r) = r {
            writeln!(
                out,
                "{label},{},{},{},{},{}",
                r.theta_lower_hat,
                r.theta_upper_hat,
                r.ci.lower(),
                r.ci.upper(),
                r.alpha
            )
            .ok();
        }
    }
    out
}

mod svg {
    use std::fmt::Write as _;

    const W: f64 = 640.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;

    pub struct Scale {
        lo: f64,
        hi: f64,
    }

    impl Scale {
        pub fn new(values: impl Iterator<Item = f64>) -> Self {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in values {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !(lo < hi) {
                lo -= 1.0;
                hi += 1.0;
            }
            let pad = 0.05 * (hi - lo);
            Scale { lo: lo - pad, hi: hi + pad }
        }

        pub fn x(&self, v: f64) -> f64 {
            LEFT + (v - self.lo) / (self.hi - self.lo) * (W - LEFT - RIGHT)
        }

        pub fn y(&self, v: f64, top: f64, bottom: f64) -> f64 {
            bottom - (v - self.lo) / (self.hi - self.lo) * (bottom - top)
        }

        pub fn lo(&self) -> f64 {
            self.lo
        }

        pub fn hi(&self) -> f64 {
            self.hi
        }
    }

    pub fn open(height: f64) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        )
    }

    pub fn line(out: &mut String, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        writeln!(
            out,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" {style}/>"
        )
        .ok();
    }

    pub fn text(out: &mut String, x: f64, y: f64, anchor: &str, s: &str) {
        writeln!(out, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\">{s}</text>").ok();
    }

    pub const SOLID: &str = "stroke=\"black\" stroke-width=\"2\"";
    pub const DOTTED: &str = "stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"2,3\"";
    pub const AXIS: &str = "stroke=\"#888\" stroke-width=\"1\"";
}

/// Horizontal chart: one row per assumption, solid bar for the ATT set,
/// dotted whiskers out to the confidence interval, vertical zero line.
pub fn att_bounds_svg(rows: &[EstimateRow]) -> String {
    let ok: Vec<(&String, &ConfidenceReport)> = rows.iter().filter_map(|(l, r)| r.as_ref().ok().map(|r| (l, r))).collect();
    let scale = svg::Scale::new(ok.iter().flat_map(|(_, r)| [r.ci.lower(), r.ci.upper()]).chain([0.0]));
    let height = 60.0 + 40.0 * ok.len() as f64;
    let mut out = svg::open(height);
    let bottom = height - 30.0;
    svg::line(&mut out, scale.x(0.0), 10.0, scale.x(0.0), bottom, svg::AXIS);
    svg::line(&mut out, scale.x(scale.lo()), bottom, scale.x(scale.hi()), bottom, svg::AXIS);
    for v in [scale.lo(), 0.0, scale.hi()] {
        svg::text(&mut out, scale.x(v), bottom + 16.0, "middle", &sig6(v));
    }
    for (i, (label, r)) in ok.iter().enumerate() {
        let y = 30.0 + 40.0 * i as f64;
        svg::text(&mut out, 10.0, y + 4.0, "start", label);
        svg::line(&mut out, scale.x(r.ci.lower()), y, scale.x(r.ci.upper()), y, svg::DOTTED);
        svg::line(&mut out, scale.x(r.theta_lower_hat), y, scale.x(r.theta_upper_hat), y, svg::SOLID);
        for x in [r.ci.lower(), r.ci.upper()] {
            svg::line(&mut out, scale.x(x), y - 5.0, scale.x(x), y + 5.0, svg::DOTTED);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Two tracks (control, treated): each period's mean interval as a
/// vertical bar, treated period-2 counterfactual sets beside it.
pub fn bounds_over_time_svg(m: &GroupMomentVector, rows: &[EstimateRow]) -> String {
    let cf: Vec<(&String, Interval)> = rows
        .iter()
        .filter(|(l, _)| l != CLASSICAL_ROW)
        .filter_map(|(l, r)| r.as_ref().ok().map(|r| (l, r.bounds.counterfactual_set)))
        .collect();
    let observed = [m.a1(), m.a2(), m.b1(), m.b2()];
    let scale = svg::Scale::new(
        observed
            .iter()
            .chain(cf.iter().map(|(_, i)| i))
            .flat_map(|i| [i.lower(), i.upper()]),
    );
    let (top, bottom) = (20.0, 320.0);
    let mut out = svg::open(360.0);
    svg::line(&mut out, 60.0, top, 60.0, bottom, svg::AXIS);
    for v in [scale.lo(), scale.hi()] {
        svg::text(&mut out, 55.0, scale.y(v, top, bottom) + 4.0, "end", &sig6(v));
    }
    let tracks = [("control", m.a1(), m.a2(), 150.0), ("treated", m.b1(), m.b2(), 420.0)];
    for (name, p1, p2, x0) in tracks {
        svg::text(&mut out, x0 + 50.0, bottom + 30.0, "middle", name);
        for (k, iv) in [p1, p2].into_iter().enumerate() {
            let x = x0 + 100.0 * k as f64;
            svg::line(&mut out, x, scale.y(iv.lower(), top, bottom), x, scale.y(iv.upper(), top, bottom), svg::SOLID);
            svg::text(&mut out, x, bottom + 14.0, "middle", &format!("t={}", k + 1));
        }
    }
    for (i, (label, iv)) in cf.iter().enumerate() {
        let x = 530.0 + 18.0 * i as f64;
        svg::line(&mut out, x, scale.y(iv.lower(), top, bottom), x, scale.y(iv.upper(), top, bottom), svg::DOTTED);
        svg::text(&mut out, x, top - 6.0, "middle", label);
    }
    out.push_str("</svg>\n");
    out
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<RunSummary> {
    let (panel, report, _) = load_input(cfg)?;
    let m = GroupMomentVector::from_panel(&panel)?;
    let rows = estimate_rows(&panel, &cfg.assumptions, cfg.alpha, cfg.variance);

    let mut s = RunSummary::default();
    write_file(&cfg.out, "estimates.csv", &estimates_csv(&rows), &mut s.files)?;
    write_file(&cfg.out, "bounds_over_time.csv", &bounds_over_time_csv(&m, &rows), &mut s.files)?;
    write_file(&cfg.out, "att_bounds.csv", &att_bounds_csv(&rows), &mut s.files)?;
    if cfg.figure_format == FigureFormat::Svg {
        write_file(&cfg.out, "bounds_over_time.svg", &bounds_over_time_svg(&m, &rows), &mut s.files)?;
        write_file(&cfg.out, "att_bounds.svg", &att_bounds_svg(&rows), &mut s.files)?;
    }

    s.text = format!(
        "{} treated, {} control units ({} rows dropped)\nalpha = {}, variance = {}\n\n{}",
        report.treated,
        report.control,
        report.rows_dropped(),
        sig6(cfg.alpha),
        cfg.variance.name(),
        estimates_table(&rows)
    );
    s.failures = rows
        .iter()
        .filter_map(|(l, r)| r.as_ref().err().map(|e| format!("{l}: {e}")))
        .collect();
    Ok(s)
}

pub const SHARPNESS_HEADER: &str =
    "assumption,target,set_lower,set_upper,targeted_point,true_counterfactual,abs_error,satisfies_assumption,pass";

pub fn cmd_simulate(cfg: &RunConfig) -> Result<RunSummary> {
    let spec = match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            DgpSpec::from_toml(&text)?
        }
        None => DgpSpec::demo(Assumption::Ps).att_lower_endpoint(),
    };
    let mut s = RunSummary::default();

    let checks = sharpness_suite(&spec)?;
    let mut csv = String::from(SHARPNESS_HEADER);
    csv.push('\n');
    let mut text = String::from("sharpness\n");
    for c in &checks {
        let pass = c.passes(SHARPNESS_TOL);
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            c.assumption,
            c.target,
            c.set.lower(),
            c.set.upper(),
            c.targeted_point,
            c.true_counterfactual,
            c.error(),
            c.satisfies_assumption,
            pass
        )
        .ok();
        writeln!(
            text,
            "  {:<4} {:<6} targeted {:>10}  error {:>10}  {}",
            c.assumption.to_string(),
            c.target.to_string(),
            sig6(c.targeted_point),
            sig6(c.error()),
            if pass { "pass" } else { "FAIL" }
        )
        .ok();
        if !pass {
            s.failures.push(format!("sharpness {} {}", c.assumption, c.target));
        }
    }
    write_file(&cfg.out, "sharpness.csv", &csv, &mut s.files)?;

    if cfg.reps > 0 {
        let r = coverage_experiment(&spec, cfg.n, cfg.reps, cfg.alpha, cfg.seed)?;
        write_file(&cfg.out, "coverage.txt", &r.to_text(), &mut s.files)?;
        write_file(
            &cfg.out,
            "coverage.csv",
            &format!("{}\n{}\n", CoverageReport::CSV_HEADER, r.csv_row()),
            &mut s.files,
        )?;
        writeln!(
            text,
            "coverage ({} at n = {}, {} reps, alpha = {}): {}  mean CI length {}",
            r.assumption,
            r.n,
            r.reps,
            sig6(r.alpha),
            sig6(r.coverage),
            sig6(r.mean_ci_length)
        )
        .ok();
    }
    s.text = text;
    Ok(s)
}

/// Deterministic self-test report.
#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub text: String,
    pub passed: usize,
    pub failed: Vec<String>,
}

struct Checker {
    text: String,
    passed: usize,
    failed: Vec<String>,
}

impl Checker {
    fn section(&mut self, name: &str) {
        writeln!(self.text, "\n## {name}").ok();
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl std::fmt::Display) {
        writeln!(self.text, "[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" }).ok();
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(name.to_string());
        }
    }
}

fn iv(l: f64, u: f64) -> Interval {
    Interval::new(l, u).expect("fixture interval")
}

/// The three worked examples: `(A1, B1, A2, IPT set, PS set)`.
pub fn worked_examples() -> [(Interval, Interval, Interval, Interval, Interval); 3] {
    [
        (iv(1.0, 3.0), iv(-3.0, -1.0), iv(0.0, 0.5), iv(-1.0, -0.5), iv(-4.0, -3.5)),
        (iv(1.0, 3.0), iv(-3.0, -1.0), iv(2.75, 3.25), iv(1.75, 2.25), iv(-1.25, -0.75)),
        (iv(-1.0, 3.0), iv(-3.0, -2.0), iv(1.5, 4.0), iv(0.25, 0.875), iv(-2.375, -1.75)),
    ]
}

/// Random moment vector with pre-period widths bounded away from zero.
pub fn random_moments(rng: &mut ChaCha8Rng) -> GroupMomentVector {
    let mut draw = |min_w: f64| {
        let lo: f64 = rng.random_range(-50.0..50.0);
        iv(lo, lo + rng.random_range(min_w..20.0))
    };
    let (a1, a2, b1, b2) = (draw(0.1), draw(0.0), draw(0.1), draw(0.0));
    GroupMomentVector::from_intervals(a1, a2, b1, b2, 1, 1).expect("nonempty groups")
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol
}

/// Runs the golden, oracle, identity, shape, reduction, and critical-value
/// suites, and optionally a coverage experiment. Same seed, same bytes.
pub fn selftest_report(seed: u64, coverage: Option<(usize, usize)>) -> Result<SelftestReport> {
    let mut c = Checker {
        text: format!("intdid selftest\nseed = {seed}\n"),
        passed: 0,
        failed: Vec::new(),
    };
    let point = Interval::point(0.0)?;

    c.section("golden examples");
    for (k, (a1, b1, a2, ipt, ps)) in worked_examples().into_iter().enumerate() {
        let m = GroupMomentVector::from_intervals(a1, a2, b1, point, 1, 1)?;
        for (a, want) in [(Assumption::Ipt, ipt), (Assumption::Ps, ps)] {
            let got = bounds_from_moments(&m, a)?.counterfactual_set;
            c.check(
                &format!("example {} {a}", k + 1),
                got.approx_eq(&want, GOLDEN_TOL),
                format!("{got} (expected {want})"),
            );
        }
    }
    let ex1 = GroupMomentVector::from_intervals(iv(1.0, 3.0), iv(0.0, 0.5), iv(-3.0, -1.0), point, 1, 1)?;
    let spt = bounds_spt(&ex1);
    c.check(
        "example 1 SPT",
        spt.counterfactual_set.approx_eq(&iv(-6.0, -1.5), GOLDEN_TOL) && spt.att_set.approx_eq(&iv(1.5, 6.0), GOLDEN_TOL),
        format!("counterfactual {}, att {}", spt.counterfactual_set, spt.att_set),
    );

    c.section("sharpness");
    let base = DgpSpec::demo(Assumption::Ps);
    for check in sharpness_suite(&base)? {
        c.check(
            &format!("{} target {}", check.assumption, check.target),
            check.passes(SHARPNESS_TOL),
            format!("targeted {:e}, attained {:e}", check.targeted_point, check.true_counterfactual),
        );
    }

    c.section("width identities");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<GroupMomentVector> = (0..SELFTEST_DRAWS).map(|_| random_moments(&mut rng)).collect();
    let mut worst = [0.0f64; 3];
    for m in &draws {
        let (a1, a2, b1) = (m.a1().width(), m.a2().width(), m.b1().width());
        let transported = a2 * b1 / a1;
        let w = [
            bounds_spt(m).counterfactual_set.width() - (b1 + a1 + a2),
            bounds_from_moments(m, Assumption::Ipt)?.counterfactual_set.width() - transported,
            bounds_from_moments(m, Assumption::Ps)?.counterfactual_set.width() - transported,
        ];
        for (acc, e) in worst.iter_mut().zip(w) {
            *acc = acc.max(e.abs());
        }
    }
    for (name, e) in ["SPT width = |B1|+|A1|+|A2|", "IPT width = |A2||B1|/|A1|", "PS width = |A2||B1|/|A1|"]
        .iter()
        .zip(worst)
    {
        c.check(name, e <= GOLDEN_TOL, format!("max error {e:e} over {SELFTEST_DRAWS} draws"));
    }

    c.section("shape conditions");
    let mut ps_ok = 0;
    for m in &draws {
        let img = bounds_from_moments(m, Assumption::Ps)?.counterfactual_set;
        if check_lemma_conditions(m.a1(), m.a2(), m.b1(), img)?.all_hold() {
            ps_ok += 1;
        }
    }
    c.check(
        "PS images satisfy (i)-(iii)",
        ps_ok == draws.len(),
        format!("{ps_ok}/{} draws", draws.len()),
    );
    let mut fixtures: Vec<(Interval, Interval, Interval)> = worked_examples().iter().map(|e| (e.0, e.2, e.1)).collect();
    fixtures.extend(draws.iter().take(100).map(|m| (m.a1(), m.a2(), m.b1())));
    let mut ipt_fail = 0;
    for &(a1, a2, b1) in &fixtures {
        let m = GroupMomentVector::from_intervals(a1, a2, b1, point, 1, 1)?;
        let img = bounds_from_moments(&m, Assumption::Ipt)?.counterfactual_set;
        let r = check_lemma_conditions(a1, a2, b1, img)?;
        if r.valid_interval && r.proportional_width && !r.parallel_movement {
            ipt_fail += 1;
        }
    }
    c.check(
        "IPT images fail (iii) only",
        ipt_fail == fixtures.len(),
        format!("{ipt_fail}/{} fixtures (3 worked examples + 100 draws)", fixtures.len()),
    );
    let (a1, a2, b1) = (iv(0.0, 3.0), iv(2.0, 3.0), iv(0.0, 1.0));
    let naive = bound_by_bound_image(a1, a2, b1);
    let r = check_lemma_conditions(a1, a2, b1, naive)?;
    c.check(
        "bound-by-bound image rejected",
        naive.lower == 2.0 && naive.upper == 1.0 && !naive.is_valid() && naive.to_interval().is_err() && !r.valid_interval,
        format!("image [{}, {}]", naive.lower, naive.upper),
    );

    c.section("scalar reduction");
    let panel = degenerate_panel(&mut rng, 40)?;
    let did = classical_did(&panel, ScalarSource::Midpoint)?;
    let m = GroupMomentVector::from_panel(&panel)?;
    let sets = [
        ("SPT", bounds_spt(&m).att_set),
        ("PS", bounds_from_moments(&m, Assumption::Ps)?.att_set),
        ("CPS", bounds_cps(&panel)?.att_set),
    ];
    for (name, set) in sets {
        c.check(
            &format!("{name} equals classical DID"),
            set.lower().to_bits() == did.to_bits() && set.upper().to_bits() == did.to_bits(),
            format!("[{:e}, {:e}] vs {did:e}", set.lower(), set.upper()),
        );
    }

    c.section("critical values");
    let z2 = norm_quantile(0.975);
    let z1 = norm_quantile(0.95);
    let c0 = im_critical_value(0.0, 1.0, 100, 0.05)?;
    let cinf = im_critical_value(1e3, 1.0, 100, 0.05)?;
    let c1 = im_critical_value(0.1, 1.0, 100, 0.05)?;
    c.check("C at zero length", close(c0, 1.959964, 1e-5) && close(c0, z2, 1e-12), format!("{c0:e}"));
    c.check("C at long sets", close(cinf, 1.644854, 1e-5) && close(cinf, z1, 1e-12), format!("{cinf:e}"));
    c.check("C at sqrt(n) length / sd = 1", close(c1, 1.681_477_442_328_154, 1e-8), format!("{c1:e}"));

    if let Some((n, reps)) = coverage {
        c.section("coverage");
        let spec = DgpSpec::demo(Assumption::Ps).att_lower_endpoint();
        let r = coverage_experiment(&spec, n, reps, 0.05, seed)?;
        c.check(
            "PS 95% coverage in [0.93, 0.98]",
            (0.93..=0.98).contains(&r.coverage),
            format!("{} at n = {n}, {reps} reps", r.coverage),
        );
    }

    writeln!(c.text, "\nsummary: {} passed, {} failed", c.passed, c.failed.len()).ok();
    Ok(SelftestReport {
        text: c.text,
        passed: c.passed,
        failed: c.failed,
    })
}

/// Point-valued panel in a single covariate cell.
pub fn degenerate_panel(rng: &mut ChaCha8Rng, per_group: usize) -> Result<Vec<PanelUnit>> {
    let mut panel = Vec::with_capacity(2 * per_group);
    for i in 0..2 * per_group {
        let treated = i >= per_group;
        let y1: f64 = rng.random_range(0.0..30.0);
        let y2 = y1 + rng.random_range(-3.0..4.0);
        panel.push(
            PanelUnit::new(format!("u{i}"), treated, Interval::point(y1)?, Interval::point(y2)?).with_cell("all"),
        );
    }
    Ok(panel)
}

pub fn cmd_selftest(cfg: &RunConfig) -> Result<RunSummary> {
    let coverage = cfg.coverage.then_some((cfg.n, cfg.reps.max(100)));
    let report = selftest_report(cfg.seed, coverage)?;
    let mut s = RunSummary::default();
    write_file(&cfg.out, "selftest.txt", &report.text, &mut s.files)?;
    s.text = report.text;
    s.failures = report.failed;
    Ok(s)
}
