//! Synthetic stand-in for the 1992 New Jersey / Pennsylvania fast-food
//! survey flat file.
//!
//! The generator writes the same columns as the public file (`sheet`,
//! `chain`, `co_owned`, `state`, `empft`, `emppt`, `nmgrs` and the
//! second-wave `*2` columns) with employment counts drawn around the
//! published group means. Respondents round counts to multiples of five
//! at a wave- and state-specific rate, a few report half units, and a few
//! answers are missing (`.`), so the heaping recode has the same work to
//! do as on the real file.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed of the bundled `data/ck94_synthetic.csv`.
pub const BUNDLED_SEED: u64 = 1993;

/// Count distribution and reporting behaviour for one state in one wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub full_time_mean: f64,
    pub part_time_mean: f64,
    /// Probability that a count of ten or more is rounded to a multiple of five.
    pub heap_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ck94LikeConfig {
    pub treated_stores: usize,
    pub control_stores: usize,
    /// `[wave 1, wave 2]` for the treated state (New Jersey, `state = 1`).
    pub treated: [WaveParams; 2],
    pub control: [WaveParams; 2],
    pub full_time_sd: f64,
    pub part_time_sd: f64,
    /// Persistent store effect on full-time staff, shared by both waves.
    pub store_sd: f64,
    /// Chain shares (Burger King, KFC, Roy Rogers, Wendy's), the matching
    /// full-time offsets, and the company-owned share within each chain.
    pub chain_shares: [f64; 4],
    pub chain_offsets: [f64; 4],
    pub co_owned_share: [f64; 4],
    pub half_unit_rate: f64,
    pub missing_rate: f64,
}

impl Default for Ck94LikeConfig {
    fn default() -> Self {
        let w = |ft, pt, heap| WaveParams {
            full_time_mean: ft,
            part_time_mean: pt,
            heap_rate: heap,
        };
        Self {
            treated_stores: 331,
            control_stores: 79,
            treated: [w(8.5, 17.0, 0.35), w(10.1, 17.0, 0.08)],
            control: [w(11.5, 17.0, 0.5), w(9.8, 16.4, 0.1)],
            full_time_sd: 5.5,
            part_time_sd: 7.0,
            store_sd: 3.0,
            chain_shares: [0.41, 0.20, 0.24, 0.15],
            chain_offsets: [1.0, -3.0, 0.5, 0.8],
            co_owned_share: [0.3, 0.0, 0.6, 0.0],
            half_unit_rate: 0.03,
            missing_rate: 0.015,
        }
    }
}

pub const CK94_HEADER: [&str; 10] = [
    "sheet", "chain", "co_owned", "state", "empft", "emppt", "nmgrs", "empft2", "emppt2", "nmgrs2",
];

fn report(rng: &mut ChaCha8Rng, latent: f64, heap_rate: f64, half_unit_rate: f64, missing_rate: f64) -> String {
    if rng.random_bool(missing_rate) {
        return ".".into();
    }
    let k = latent.max(0.0).round();
    if k >= 10.0 && rng.random_bool(heap_rate) {
        return format!("{}", (k / 5.0).round() * 5.0);
    }
    if rng.random_bool(half_unit_rate) {
        return format!("{}", k + 0.5);
    }
    format!("{k}")
}

/// Generates the flat file as CSV text. Deterministic in `seed`.
pub fn ck94_like_csv(config: &Ck94LikeConfig, seed: u64) -> Result<String> {
    let sd = |s: f64| Normal::new(0.0, s).map_err(|e| Error::Config(e.to_string()));
    let (ft_noise, pt_noise, store) = (sd(config.full_time_sd)?, sd(config.part_time_sd)?, sd(config.store_sd)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CK94_HEADER.join(",");
    out.push('\n');

    let stores = (0..config.treated_stores)
        .map(|_| true)
        .chain((0..config.control_stores).map(|_| false));
    for (i, treated) in stores.enumerate() {
        let waves = if treated { &config.treated } else { &config.control };
        let u: f64 = rng.random();
        let mut chain = 3;
        let mut acc = 0.0;
        for (c, share) in config.chain_shares.iter().enumerate() {
            acc += share;
            if u < acc {
                chain = c;
                break;
            }
        }
        let co_owned = rng.random_bool(config.co_owned_share[chain]);
        let effect = store.sample(&mut rng) + config.chain_offsets[chain];
        let mut line = format!("{},{},{},{}", 100 + i, chain + 1, u8::from(co_owned), u8::from(treated));
        for w in waves {
            let ft = w.full_time_mean + effect + ft_noise.sample(&mut rng);
            let pt = w.part_time_mean + pt_noise.sample(&mut rng);
            let mgr = f64::from(rng.random_range(2..=5u8));
            for (x, rate) in [(ft, w.heap_rate), (pt, w.heap_rate)] {
                let v = report(&mut rng, x, rate, config.half_unit_rate, config.missing_rate);
                write!(line, ",{v}").expect("writing to a String");
            }
            write!(line, ",{mgr}").expect("writing to a String");
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_ck94_like(path: impl AsRef<Path>, config: &Ck94LikeConfig, seed: u64) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ck94_like_csv(config, seed)?).map_err(|e| Error::io(path, e))
}

/// The bundled synthetic file, as shipped in `data/`.
pub fn bundled_ck94_like() -> &'static str {
    include_str!("../data/ck94_synthetic.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_file_matches_generator() {
        let fresh = ck94_like_csv(&Ck94LikeConfig::default(), BUNDLED_SEED).unwrap();
        assert_eq!(fresh, bundled_ck94_like());
    }

    #[test]
    fn generator_is_deterministic() {
        let c = Ck94LikeConfig {
            treated_stores: 20,
            control_stores: 10,
            ..Default::default()
        };
        assert_eq!(ck94_like_csv(&c, 7).unwrap(), ck94_like_csv(&c, 7).unwrap());
        assert_ne!(ck94_like_csv(&c, 7).unwrap(), ck94_like_csv(&c, 8).unwrap());
        assert_eq!(ck94_like_csv(&c, 7).unwrap().lines().count(), 31);
    }
}
