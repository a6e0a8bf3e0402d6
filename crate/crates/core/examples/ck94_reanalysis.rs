//! Identified sets and 95% confidence intervals for the minimum-wage
//! panel under every assumption, plus the figure-data files.
//!
//! Runs on the bundled synthetic panel unless a path to the public flat
//! file is given.
//!
//! ```bash
//! cargo run --example ck94_reanalysis
//! cargo run --example ck94_reanalysis -- public.csv out-dir
//! ```

use interval_did::cli::{att_bounds_csv, bounds_over_time_csv, estimate_rows, sig6};
use interval_did::estimators::{Assumption, GroupMomentVector, MomentSource};
use interval_did::inference::VarianceMethod;
use interval_did::panel::{load_panel, load_panel_from_reader, RecodingPolicy};
use interval_did::schema::Schema;
use interval_did::synthetic::bundled_ck94_like;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (schema, policy) = (Schema::ck94(), RecodingPolicy::default());
    let (panel, report) = match args.first() {
        Some(path) => load_panel(path, &schema, &policy)?,
        None => load_panel_from_reader(bundled_ck94_like().as_bytes(), &schema, &policy)?,
    };
    println!("{} NJ stores, {} PA stores", report.treated, report.control);

    let m = GroupMomentVector::from_panel(&panel)?;
    println!("PA wave 1 {}  wave 2 {}", m.a1(), m.a2());
    println!("NJ wave 1 {}  wave 2 {}\n", m.b1(), m.b2());

    let rows = estimate_rows(&panel, &Assumption::ALL, 0.05, VarianceMethod::Delta);
    for (label, r) in &rows {
        match r {
            Ok(r) => {
                let cf = r.bounds.counterfactual_set;
                println!(
                    "{label:<4} M = [{}, {}]  ATT = [{}, {}]  95% CI = [{}, {}]",
                    sig6(cf.lower()),
                    sig6(cf.upper()),
                    sig6(r.theta_lower_hat),
                    sig6(r.theta_upper_hat),
                    sig6(r.ci.lower()),
                    sig6(r.ci.upper())
                );
                if let MomentSource::Cells { cells, .. } = &r.bounds.moments {
                    for c in cells {
                        println!("       cell {:<4} weight {:.3}  S(A2; x) = {}", c.cell, c.weight, c.counterfactual);
                    }
                }
            }
            Err(e) => println!("{label:<4} {e}"),
        }
    }

    if let Some(dir) = args.get(1) {
        std::fs::create_dir_all(dir)?;
        std::fs::write(format!("{dir}/bounds_over_time.csv"), bounds_over_time_csv(&m, &rows))?;
        std::fs::write(format!("{dir}/att_bounds.csv"), att_bounds_csv(&rows))?;
        println!("\nfigure data written to {dir}/");
    }
    Ok(())
}
