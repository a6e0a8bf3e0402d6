//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if
//! any criterion fails. Every tolerance is pinned below.

use std::process::Command as Process;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use interval_did::cli::{degenerate_panel, random_moments, selftest_report, worked_examples};
use interval_did::estimators::{
    bound_by_bound_image, bounds_for, bounds_from_moments, bounds_spt, classical_did,
    Assumption, GroupMomentVector, ScalarSource,
};
use interval_did::inference::{confidence_interval, im_critical_value, VarianceMethod};
use interval_did::interval::{check_lemma_conditions, Interval};
use interval_did::panel::{load_panel_from_reader, RecodingPolicy};
use interval_did::schema::Schema;
use interval_did::simulation::{coverage_experiment, sharpness_suite, Coarsening, DgpSpec, SupportPoint, Target};
use interval_did::synthetic::bundled_ck94_like;

const GOLDEN_TOL: f64 = 1e-9;
const SHARPNESS_TOL: f64 = 1e-10;
const WIDTH_TOL: f64 = 1e-9;
const WIDTH_DRAWS: usize = 2000;
const CRITICAL_TOL: f64 = 1e-5;
const COVERAGE_N: usize = 500;
const COVERAGE_REPS: usize = 1000;
const COVERAGE_BAND: (f64, f64) = (0.93, 0.98);
const ALPHA: f64 = 0.05;
const SEED: u64 = 8_675_309;

type Outcome = Result<String, String>;

fn iv(l: f64, u: f64) -> Interval {
    Interval::new(l, u).unwrap()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn golden() -> Outcome {
    let zero = Interval::point(0.0).unwrap();
    let mut worst = 0.0f64;
    for (k, (a1, b1, a2, ipt, ps)) in worked_examples().into_iter().enumerate() {
        let m = GroupMomentVector::from_intervals(a1, a2, b1, zero, 1, 1).unwrap();
        for (a, want) in [(Assumption::Ipt, ipt), (Assumption::Ps, ps)] {
            let got = bounds_from_moments(&m, a).map_err(|e| e.to_string())?.counterfactual_set;
            let err = (got.lower() - want.lower()).abs().max((got.upper() - want.upper()).abs());
            worst = worst.max(err);
            ensure(err <= GOLDEN_TOL, format!("example {} {a}: got {got}, want {want}", k + 1))?;
        }
    }
    let m = GroupMomentVector::from_intervals(iv(1.0, 3.0), iv(0.0, 0.5), iv(-3.0, -1.0), zero, 1, 1).unwrap();
    let spt = bounds_spt(&m);
    ensure(
        spt.counterfactual_set.approx_eq(&iv(-6.0, -1.5), GOLDEN_TOL) && spt.att_set.approx_eq(&iv(1.5, 6.0), GOLDEN_TOL),
        format!("example 1 SPT: {}", spt.counterfactual_set),
    )?;
    Ok(format!("3 examples x {{IPT, PS}} + SPT, max error {worst:e}"))
}

fn single_atom_spec(a1: Interval, a2: Interval, b1: Interval, b2: Interval) -> DgpSpec {
    DgpSpec {
        assumption: Assumption::Ps,
        target: Target::Lower,
        treated_outcome: Target::Interior(0.5),
        treated_share: 0.4,
        coarsening: Coarsening::None,
        control: vec![SupportPoint::observed(1.0, a1, a2)],
        treated: vec![SupportPoint::observed(1.0, b1, b2)],
    }
}

fn sharpness() -> Outcome {
    let start = Instant::now();
    let mut bases = vec![DgpSpec::demo(Assumption::Ps)];
    for (a1, b1, a2, _, _) in worked_examples() {
        bases.push(single_atom_spec(a1, a2, b1, iv(0.0, 1.0)));
    }
    let mut n = 0;
    let mut worst = 0.0f64;
    for base in &bases {
        for c in sharpness_suite(base).map_err(|e| e.to_string())? {
            n += 1;
            worst = worst.max(c.error());
            ensure(
                c.passes(SHARPNESS_TOL),
                format!("{} target {}: error {:e}, satisfies {}", c.assumption, c.target, c.error(), c.satisfies_assumption),
            )?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, format!("took {secs:.3}s"))?;
    Ok(format!("{n} populations, max error {worst:e}, {secs:.3}s"))
}

fn width_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = [0.0f64; 3];
    for _ in 0..WIDTH_DRAWS {
        let m = random_moments(&mut rng);
        let (a1, a2, b1) = (m.a1().width(), m.a2().width(), m.b1().width());
        let t = a2 * b1 / a1;
        let errs = [
            bounds_spt(&m).counterfactual_set.width() - (b1 + a1 + a2),
            bounds_from_moments(&m, Assumption::Ipt).unwrap().counterfactual_set.width() - t,
            bounds_from_moments(&m, Assumption::Ps).unwrap().counterfactual_set.width() - t,
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e.abs());
        }
    }
    ensure(worst.iter().all(|&w| w <= WIDTH_TOL), format!("max errors {worst:?}"))?;
    Ok(format!("{WIDTH_DRAWS} draws, max errors SPT {:e} IPT {:e} PS {:e}", worst[0], worst[1], worst[2]))
}

fn shape_conditions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    let zero = Interval::point(0.0).unwrap();
    let mut fixtures: Vec<(Interval, Interval, Interval)> = worked_examples().iter().map(|e| (e.0, e.2, e.1)).collect();
    let mut ps_checked = 0;
    for _ in 0..WIDTH_DRAWS {
        let m = random_moments(&mut rng);
        let img = bounds_from_moments(&m, Assumption::Ps).unwrap().counterfactual_set;
        let r = check_lemma_conditions(m.a1(), m.a2(), m.b1(), img).unwrap();
        ensure(r.all_hold(), format!("PS image fails on A1={} A2={} B1={}: {r:?}", m.a1(), m.a2(), m.b1()))?;
        ps_checked += 1;
        if fixtures.len() < 53 {
            fixtures.push((m.a1(), m.a2(), m.b1()));
        }
    }
    for &(a1, a2, b1) in &fixtures {
        let m = GroupMomentVector::from_intervals(a1, a2, b1, zero, 1, 1).unwrap();
        let img = bounds_from_moments(&m, Assumption::Ipt).unwrap().counterfactual_set;
        let r = check_lemma_conditions(a1, a2, b1, img).unwrap();
        ensure(!r.parallel_movement, format!("IPT image passes (iii) on A1={a1} A2={a2} B1={b1}"))?;
    }
    let (a1, a2, b1) = (iv(0.0, 3.0), iv(2.0, 3.0), iv(0.0, 1.0));
    let naive = bound_by_bound_image(a1, a2, b1);
    ensure(naive.lower == 2.0 && naive.upper == 1.0, format!("bound-by-bound image [{}, {}]", naive.lower, naive.upper))?;
    ensure(naive.to_interval().is_err(), "reversed image accepted as an interval")?;
    ensure(!check_lemma_conditions(a1, a2, b1, naive).unwrap().valid_interval, "condition (i) passed a reversed image")?;
    Ok(format!(
        "PS passes on {ps_checked} draws; IPT fails (iii) on {} fixtures; [2, 1] rejected",
        fixtures.len()
    ))
}

fn scalar_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut checked = 0;
    for size in [2usize, 5, 40, 333] {
        let panel = degenerate_panel(&mut rng, size).unwrap();
        let did = classical_did(&panel, ScalarSource::Midpoint).unwrap();
        for a in [Assumption::Spt, Assumption::Ps, Assumption::Cps] {
            let set = bounds_for(&panel, a).map_err(|e| e.to_string())?.att_set;
            ensure(
                set.lower().to_bits() == did.to_bits() && set.upper().to_bits() == did.to_bits(),
                format!("{a} gives {set}, classical DID {did:e}"),
            )?;
            checked += 1;
        }
    }
    Ok(format!("SPT, PS, CPS equal classical DID bit for bit on {} panels", checked / 3))
}

fn inference() -> Outcome {
    let c0 = im_critical_value(0.0, 1.0, 500, ALPHA).map_err(|e| e.to_string())?;
    let cinf = im_critical_value(1e6, 1.0, 500, ALPHA).map_err(|e| e.to_string())?;
    ensure((c0 - 1.959964).abs() < CRITICAL_TOL, format!("C(0) = {c0}"))?;
    ensure((cinf - 1.644854).abs() < CRITICAL_TOL, format!("C(inf) = {cinf}"))?;
    let start = Instant::now();
    let spec = DgpSpec::demo(Assumption::Ps).att_lower_endpoint();
    let r = coverage_experiment(&spec, COVERAGE_N, COVERAGE_REPS, ALPHA, SEED).map_err(|e| e.to_string())?;
    ensure(
        (COVERAGE_BAND.0..=COVERAGE_BAND.1).contains(&r.coverage),
        format!("coverage {} outside {COVERAGE_BAND:?}", r.coverage),
    )?;
    Ok(format!(
        "C(0) = {c0:.6}, C(inf) = {cinf:.6}, PS coverage {} (n = {COVERAGE_N}, {COVERAGE_REPS} reps, {} failed, {:.1}s)",
        r.coverage,
        r.failed_reps,
        start.elapsed().as_secs_f64()
    ))
}

fn ck94_reanalysis() -> Outcome {
    let (panel, _) = load_panel_from_reader(bundled_ck94_like().as_bytes(), &Schema::ck94(), &RecodingPolicy::default())
        .map_err(|e| e.to_string())?;
    let m = GroupMomentVector::from_panel(&panel).unwrap();
    let mut reports = Vec::new();
    for a in Assumption::ALL {
        reports.push(confidence_interval(&panel, a, ALPHA, VarianceMethod::Delta).map_err(|e| format!("{a}: {e}"))?);
    }
    let set = |a: Assumption| reports.iter().find(|r| r.assumption == a).unwrap();
    let spt = set(Assumption::Spt);
    ensure(
        reports.iter().all(|r| r.bounds.att_set.width() <= spt.bounds.att_set.width()) && spt.bounds.att_set.contains(0.0),
        format!("(a) SPT set {} not widest or excludes 0", spt.bounds.att_set),
    )?;
    for a in [Assumption::Ps, Assumption::Cps] {
        ensure(set(a).theta_lower_hat > 0.0, format!("(b) {a} lower endpoint {}", set(a).theta_lower_hat))?;
    }
    for r in &reports {
        ensure(r.ci.contains(0.0), format!("(c) {} CI {} excludes 0", r.assumption, r.ci))?;
    }
    let b1l = m.b1().lower();
    let ps_l = set(Assumption::Ps).bounds.counterfactual_set.lower();
    let ipt_l = set(Assumption::Ipt).bounds.counterfactual_set.lower();
    ensure(ps_l < b1l && ipt_l > b1l, format!("(d) treated lower: t=1 {b1l}, PS t=2 {ps_l}, IPT t=2 {ipt_l}"))?;
    Ok(format!(
        "bundled synthetic panel: PS [{:.3}, {:.3}], CPS [{:.3}, {:.3}], SPT width {:.3}; treated lower {b1l:.3} -> PS {ps_l:.3}, IPT {ipt_l:.3}",
        set(Assumption::Ps).theta_lower_hat,
        set(Assumption::Ps).theta_upper_hat,
        set(Assumption::Cps).theta_lower_hat,
        set(Assumption::Cps).theta_upper_hat,
        spt.bounds.att_set.width()
    ))
}

fn determinism() -> Outcome {
    let a = selftest_report(SEED, None).map_err(|e| e.to_string())?;
    let b = selftest_report(SEED, None).map_err(|e| e.to_string())?;
    ensure(a.text == b.text, "library selftest reports differ")?;
    ensure(a.failed.is_empty(), format!("selftest failures: {:?}", a.failed))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Process::new(env!("CARGO_BIN_EXE_intdid"))
            .args(["selftest", "--seed", &SEED.to_string(), "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), format!("selftest run {run} exited {}", status.status))?;
        outputs.push((status.stdout, std::fs::read(out.join("selftest.txt")).map_err(|e| e.to_string())?));
    }
    ensure(outputs[0] == outputs[1], "binary selftest reports differ")?;
    ensure(outputs[0].1 == a.text.as_bytes(), "binary and library reports differ")?;
    Ok(format!("two binary runs byte-identical ({} bytes, {} checks)", outputs[0].1.len(), a.passed))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("golden numeric examples", golden),
        ("sharpness oracle closure", sharpness),
        ("width identities", width_identities),
        ("shape conditions", shape_conditions),
        ("scalar reduction", scalar_reduction),
        ("inference", inference),
        ("CK94 reanalysis", ck94_reanalysis),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
