//! Interval arithmetic, the two transport maps, and the shape checks.
//!
//! ```bash
//! cargo run --example intervals_and_transports
//! ```

use interval_did::estimators::{bound_by_bound_image, bounds_from_moments, Assumption, GroupMomentVector};
use interval_did::interval::{check_lemma_conditions, Interval, LinearIntervalMap};

fn main() -> anyhow::Result<()> {
    let a1 = Interval::new(1.0, 3.0)?;
    let b1 = Interval::new(-3.0, -1.0)?;
    let a2 = Interval::new(0.0, 0.5)?;
    let b2 = Interval::point(0.0)?;

    println!("A1 + B1 = {}", a1 + b1);
    println!("A2 - A1 = {}  (width {} = |A2| + |A1|)", a2 - a1, (a2 - a1).width());

    // T carries A1 onto A2, S carries A1 onto B1.
    let t = LinearIntervalMap::carrying(a1, a2, 1e-12)?;
    let s = LinearIntervalMap::carrying(a1, b1, 1e-12)?;
    println!("T: slope {}, T(B1) = {}", t.slope(), t.apply(b1));
    println!("S: slope {}, S(A2) = {}", s.slope(), s.apply(a2));

    let m = GroupMomentVector::from_intervals(a1, a2, b1, b2, 1, 1)?;
    for a in [Assumption::Spt, Assumption::Ipt, Assumption::Ps] {
        let r = bounds_from_moments(&m, a)?;
        let shape = check_lemma_conditions(a1, a2, b1, r.counterfactual_set)?;
        println!(
            "{a:<3}  counterfactual {:<16} ATT {:<14} valid {} proportional {} parallel {}",
            r.counterfactual_set.to_string(),
            r.att_set.to_string(),
            shape.valid_interval,
            shape.proportional_width,
            shape.parallel_movement
        );
    }

    // Moving each bound by its own control trend can reverse the interval.
    let (a1, a2, b1) = (Interval::new(0.0, 3.0)?, Interval::new(2.0, 3.0)?, Interval::new(0.0, 1.0)?);
    let naive = bound_by_bound_image(a1, a2, b1);
    println!(
        "bound-by-bound image of {b1}: [{}, {}], valid interval: {}",
        naive.lower,
        naive.upper,
        naive.is_valid()
    );
    Ok(())
}
