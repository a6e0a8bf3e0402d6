use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use interval_did::cli::{self, Command, FigureFormat, Overrides, RunConfig};
use interval_did::estimators::Assumption;
use interval_did::panel::DecimalRule;
use interval_did::schema::PolicyOverrides;

/// Difference-in-differences with interval-valued outcomes.
#[derive(Parser)]
#[command(name = "intdid", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Recode a raw survey file into an interval panel.
    Recode(Flags),
    /// Identified sets and confidence intervals for each assumption.
    Estimate(Flags),
    /// Sharpness checks and a coverage experiment for a population spec (TOML via --input).
    Simulate(Flags),
    /// Golden values, oracle closure, identities, and critical values.
    Selftest(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum Variance {
    Delta,
    Bootstrap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Decimal {
    UnitBracket,
    KeepScalar,
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Schema file, or a built-in profile: ck94, recoded.
    #[arg(long)]
    schema: Option<String>,
    /// Comma-separated subset of SPT,IPT,PS,CPS.
    #[arg(long, value_delimiter = ',', value_parser = parse_assumption)]
    assumptions: Option<Vec<Assumption>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    variance: Option<Variance>,
    #[arg(long)]
    boot_reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    figure_format: Option<Format>,
    /// `key = value` file; flags given on the command line win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size per coverage replication.
    #[arg(long)]
    n: Option<usize>,
    /// Coverage replications (simulate: 0 skips coverage).
    #[arg(long)]
    reps: Option<usize>,
    /// Include the coverage experiment in the self-test.
    #[arg(long)]
    coverage: bool,
    #[arg(long)]
    heap_threshold: Option<u32>,
    #[arg(long)]
    heap_modulus: Option<u32>,
    #[arg(long)]
    heap_halfwidth: Option<f64>,
    #[arg(long, value_enum)]
    decimal_rule: Option<Decimal>,
}

fn parse_assumption(s: &str) -> Result<Assumption, String> {
    s.parse().map_err(|e: interval_did::Error| e.to_string())
}

impl Flags {
    fn overrides(self) -> anyhow::Result<Overrides> {
        let file = match &self.config {
            Some(p) => Overrides::from_config_file(p)?,
            None => Overrides::default(),
        };
        let flags = Overrides {
            input: self.input,
            schema: self.schema,
            assumptions: self.assumptions,
            alpha: self.alpha,
            variance: self.variance.map(|v| match v {
                Variance::Delta => "delta".to_string(),
                Variance::Bootstrap => "bootstrap".to_string(),
            }),
            boot_reps: self.boot_reps,
            seed: self.seed,
            out: self.out,
            figure_format: self.figure_format.map(|f| match f {
                Format::Csv => FigureFormat::Csv,
                Format::Svg => FigureFormat::Svg,
            }),
            n: self.n,
            reps: self.reps,
            coverage: self.coverage.then_some(true),
            policy: PolicyOverrides {
                heap_threshold: self.heap_threshold,
                heap_modulus: self.heap_modulus,
                heap_halfwidth: self.heap_halfwidth,
                decimal_rule: self.decimal_rule.map(|d| match d {
                    Decimal::UnitBracket => DecimalRule::UnitBracket,
                    Decimal::KeepScalar => DecimalRule::KeepScalar,
                }),
            },
        };
        Ok(file.merge(&flags))
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (command, flags) = match args.command {
        Sub::Recode(f) => (Command::Recode, f),
        Sub::Estimate(f) => (Command::Estimate, f),
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Selftest(f) => (Command::Selftest, f),
    };
    let summary = flags
        .overrides()
        .and_then(|o| Ok(RunConfig::resolve(command, o)?))
        .and_then(|cfg| Ok(cli::run(&cfg)?));
    match summary {
        Ok(s) => {
            print!("{}", s.text);
            for f in &s.files {
                eprintln!("wrote {}", f.display());
            }
            for f in &s.failures {
                eprintln!("failed: {f}");
            }
            if s.succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
