//! Heaping recode of a raw survey file into an interval panel.
//!
//! ```bash
//! cargo run --example recode_survey
//! cargo run --example recode_survey -- path/to/public.csv
//! ```

use interval_did::panel::{load_panel, load_panel_from_reader, recode_count, DecimalRule, RecodingPolicy};
use interval_did::schema::Schema;
use interval_did::synthetic::bundled_ck94_like;

fn main() -> anyhow::Result<()> {
    let policy = RecodingPolicy::default();
    for x in [8.0, 10.0, 15.0, 17.0, 6.5] {
        println!("reported {x:>4} -> {}", recode_count(x, &policy)?);
    }

    let schema = Schema::ck94();
    let (panel, report) = match std::env::args().nth(1) {
        Some(path) => load_panel(path, &schema, &policy)?,
        None => load_panel_from_reader(bundled_ck94_like().as_bytes(), &schema, &policy)?,
    };
    println!("\n{report}");

    let widened = panel.iter().filter(|u| !u.y1.is_degenerate()).count();
    println!("{widened} of {} stores have an interval-valued wave-1 FTE", panel.len());
    for u in panel.iter().take(5) {
        println!("  store {:>4} cell {:<4} FTE {} -> {}", u.unit_id, u.cell.as_deref().unwrap_or("-"), u.y1, u.y2);
    }

    // Narrower heaps, and half units kept as reported.
    let narrow = RecodingPolicy {
        heap_halfwidth: 2.5,
        decimal_rule: DecimalRule::KeepScalar,
        ..policy
    };
    let (panel, _) = load_panel_from_reader(bundled_ck94_like().as_bytes(), &schema, &narrow)?;
    let mean_width: f64 = panel.iter().map(|u| u.y1.width()).sum::<f64>() / panel.len() as f64;
    println!("\nmean wave-1 width with half-width 2.5: {mean_width:.3}");
    Ok(())
}
