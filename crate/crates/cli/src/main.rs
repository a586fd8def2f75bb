//! `catqfi`: batch front end for the cat-state phase-estimation engine.
//!
//! Exit codes: 0 ok, 1 usage, 2 numerical failure, 3 verification failure.

mod commands;
mod config;
mod emit;
mod verify;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{
    ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum,
};

use catqfi::baselines::BaselineKind;

#[derive(Debug, Parser)]
#[command(
    name = "catqfi",
    version,
    about = "Phase-estimation precision of entangled multi-component cat states"
)]
pub struct Cli {
    /// `key = value` file with defaults for the command's flags
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// δφ against N_av for cat probes and baselines
    Curve(CurveArgs),
    /// g²(0) and Mandel Q of single-mode cat states against |α|²
    G2(G2Args),
    /// Simulate the cat-state generation scheme
    Genscheme(GenArgs),
    /// Best (d, k) at a photon budget
    Optimal(OptimalArgs),
    /// Run the invariant suite and the golden regression
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected min:max:points, got '{s}'"));
        };
        let min: f64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad range minimum '{a}'"))?;
        let max: f64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad range maximum '{b}'"))?;
        let points: usize = n
            .trim()
            .parse()
            .map_err(|_| format!("bad point count '{n}'"))?;
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(format!("range {min}:{max} must be finite and increasing"));
        }
        if points < 2 {
            return Err("a range needs at least 2 points".into());
        }
        Ok(Range { min, max, points })
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when absent
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CurveArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// N_av grid as min:max:points
    #[arg(long, default_value = "0.05:4:120")]
    pub nav: Range,
    /// Comma list of noon, tmsv, sql
    #[arg(long, value_delimiter = ',', value_parser = parse_baseline)]
    pub baselines: Vec<BaselineKind>,
    /// Add closed-form mixed-state rows where |α|²(1-η) < 1
    #[arg(long, num_args = 0..=1, default_value = "false", default_missing_value = "true", action = ArgAction::Set)]
    pub closed_form_spectrum: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct G2Args {
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    pub d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub k: Vec<usize>,
    /// |α|² grid as min:max:points
    #[arg(long, default_value = "0.1:14:140")]
    pub alpha_sq: Range,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GenArgs {
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// |α|
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// arg α in radians
    #[arg(long, default_value_t = 0.0)]
    pub alpha_phase: f64,
    /// Ancilla amplitude; 1.5 d when absent
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct OptimalArgs {
    #[arg(long, default_value_t = 1.0)]
    pub nav: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 8)]
    pub d_max: usize,
    #[arg(long, default_value_t = 3)]
    pub k_max: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct VerifyArgs {
    /// Read golden files from this directory instead of the built-in set
    #[arg(long)]
    pub golden_dir: Option<PathBuf>,
    /// Multiply every tolerance by this factor
    #[arg(long, default_value_t = 1.0)]
    pub tol_scale: f64,
    /// Write fresh golden files into this directory and stop
    #[arg(long, value_name = "DIR")]
    pub regenerate_golden: Option<PathBuf>,
    /// Report file; standard output when absent
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_baseline(s: &str) -> Result<BaselineKind, String> {
    s.parse().map_err(|e: catqfi::Error| e.to_string())
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Verify(_) => 3,
        }
    }
}

impl From<catqfi::Error> for Failure {
    fn from(e: catqfi::Error) -> Self {
        use catqfi::Error::*;
        match e {
            Parameter(_) | Domain(_) | Degenerate { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// Every resolved parameter of the subcommand, defaults included, except
/// where output goes.
fn resolved(m: &ArgMatches) -> Vec<(String, String)> {
    let mut out = BTreeMap::new();
    for id in m.ids() {
        let id = id.as_str();
        if matches!(id, "config" | "output" | "regenerate_golden" | "golden_dir") {
            continue;
        }
        if let Ok(Some(raw)) = m.try_get_raw(id) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().to_string()).collect();
            out.insert(id.replace('_', "-"), vals.join(","));
        }
    }
    out.into_iter().collect()
}

fn run(args: Vec<std::ffi::OsString>) -> Result<(), Failure> {
    let args = config::expand_args(args).map_err(Failure::Usage)?;
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(Failure::Usage(e.render().to_string())),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(e.to_string()))?;
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .expect("subcommand required");
    let config = resolved(sub);
    match cli.command {
        Command::Curve(a) => commands::curve(&a, config),
        Command::G2(a) => commands::g2(&a, config),
        Command::Genscheme(a) => commands::genscheme(&a, config),
        Command::Optimal(a) => commands::optimal(&a, config),
        Command::Verify(a) => commands::verify(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_default_env()
        .format_timestamp(None)
        .init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Numerical(m) | Failure::Verify(m) => m,
            };
            eprintln!("error: {}", msg.trim_end());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_syntax() {
        let r: Range = "0.05:4:120".parse().unwrap();
        assert_eq!(
            r,
            Range {
                min: 0.05,
                max: 4.0,
                points: 120
            }
        );
        assert!("1:0:3".parse::<Range>().is_err());
        assert!("0:1:1".parse::<Range>().is_err());
        assert!("0:1".parse::<Range>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
