//! Imbens–Manski intervals: the critical value as the set widens, and
//! delta-method against bootstrap standard errors.
//!
//! ```bash
//! cargo run --release --example confidence_intervals
//! ```

use interval_did::estimators::Assumption;
use interval_did::inference::{confidence_interval, im_critical_value, VarianceMethod};
use interval_did::panel::{load_panel_from_reader, RecodingPolicy};
use interval_did::schema::Schema;
use interval_did::synthetic::bundled_ck94_like;

fn main() -> anyhow::Result<()> {
    println!("C at alpha = 0.05, sd 1, n = 100:");
    for delta in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0] {
        println!("  set length {delta:<5} C = {:.6}", im_critical_value(delta, 1.0, 100, 0.05)?);
    }

    let (panel, _) = load_panel_from_reader(bundled_ck94_like().as_bytes(), &Schema::ck94(), &RecodingPolicy::default())?;
    println!();
    for a in [Assumption::Ps, Assumption::Cps] {
        for method in [VarianceMethod::Delta, VarianceMethod::Bootstrap { reps: 999, seed: 7 }] {
            let r = confidence_interval(&panel, a, 0.05, method)?;
            println!(
                "{a:<3} {:<9} se = ({:.4}, {:.4})  corr {:+.3}  C = {:.4}  CI = {}",
                method.name(),
                r.std_error_lower(),
                r.std_error_upper(),
                r.correlation,
                r.critical_value,
                r.ci
            );
        }
    }
    Ok(())
}
