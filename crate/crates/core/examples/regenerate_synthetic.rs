//! Regenerates the bundled synthetic survey file.
//!
//! ```bash
//! cargo run --example regenerate_synthetic -- data/ck94_synthetic.csv
//! ```

use interval_did::synthetic::{write_ck94_like, Ck94LikeConfig, BUNDLED_SEED};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/ck94_synthetic.csv").to_string());
    let config = Ck94LikeConfig::default();
    write_ck94_like(&path, &config, BUNDLED_SEED)?;
    println!(
        "wrote {} ({} treated, {} control stores, seed {})",
        path, config.treated_stores, config.control_stores, BUNDLED_SEED
    );
    Ok(())
}
