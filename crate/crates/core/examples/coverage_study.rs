//! Monte Carlo coverage of the 95% interval at the ATT lower endpoint.
//!
//! ```bash
//! cargo run --release --example coverage_study
//! cargo run --release --example coverage_study -- spec.toml
//! cargo run --release --example coverage_study -- --print-spec > spec.toml
//! ```

use interval_did::estimators::Assumption;
use interval_did::simulation::{coverage_experiment, DgpSpec};

fn main() -> anyhow::Result<()> {
    let spec = match std::env::args().nth(1) {
        Some(flag) if flag == "--print-spec" => {
            print!("{}", DgpSpec::demo(Assumption::Ps).att_lower_endpoint().to_toml()?);
            return Ok(());
        }
        Some(path) => DgpSpec::from_toml(&std::fs::read_to_string(path)?)?,
        None => DgpSpec::demo(Assumption::Ps).att_lower_endpoint(),
    };
    for n in [200, 500, 2000] {
        let r = coverage_experiment(&spec, n, 1000, 0.05, 42)?;
        println!(
            "n = {n:<5} coverage {:.3}  mean CI length {:.3}  bias ({:+.4}, {:+.4})",
            r.coverage, r.mean_ci_length, r.bias_lower, r.bias_upper
        );
    }

    let scalar = spec.with_assumption(Assumption::Spt).degenerate()?;
    let r = coverage_experiment(&scalar, 500, 1000, 0.05, 42)?;
    println!("point-identified version, classical interval: coverage {:.3}", r.coverage);
    Ok(())
}
