//! Command-line front end: configuration, CSV/JSON plumbing and the
//! `dmq` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{read_config_file, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dmq", version, about = "Extreme directional multivariate quantiles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rotate a sample so that the direction maps to the diagonal.
    Rotate(Flags),
    /// Bootstrap choice of the sample fraction k.
    SelectK(Flags),
    /// Estimate the quantile surface.
    Estimate(Flags),
    /// Tail level of every row and outlier flags.
    Flag(Flags),
    /// Draw a multivariate t sample.
    SimulateT(Flags),
    /// Theoretical surface of a multivariate t model.
    OracleT(Flags),
    /// Monte Carlo study on a multivariate t model.
    McStudy(Flags),
}

/// Shared flags. Values given here override the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
    /// json or csv.
    #[arg(long)]
    pub format: Option<String>,
    /// e, -e, fpc or a comma-separated vector.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<String>,
    /// Decimal or fraction such as 1/1250; defaults to 1/n.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Integer or auto.
    #[arg(long)]
    pub k: Option<String>,
    /// Grid points per angle.
    #[arg(long)]
    pub grid: Option<String>,
    /// Angular margin kept away from the axes.
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Bootstrap resamples per size.
    #[arg(long)]
    pub b1: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Subtract the componentwise median before estimation.
    #[arg(long)]
    pub center: bool,
    #[arg(long)]
    pub replicates: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    /// Row-major comma list.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub has_header: bool,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        let flag = |b: bool| b.then(|| "true".to_string());
        vec![
            ("input", self.input.clone()),
            ("output", self.output.clone()),
            ("format", self.format.clone()),
            ("direction", self.direction.clone()),
            ("alpha", self.alpha.clone()),
            ("k", self.k.clone()),
            ("grid", self.grid.clone()),
            ("delta", self.delta.clone()),
            ("epsilon", self.epsilon.clone()),
            ("b1", self.b1.clone()),
            ("seed", self.seed.clone()),
            ("center", flag(self.center)),
            ("replicates", self.replicates.clone()),
            ("mu", self.mu.clone()),
            ("sigma", self.sigma.clone()),
            ("nu", self.nu.clone()),
            ("n", self.n.clone()),
            ("has_header", flag(self.has_header)),
        ]
    }

    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut map = match &self.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        }
        RunConfig::from_map(&map)
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    use commands::*;
    let (flags, f): (&Flags, fn(&RunConfig) -> CliResult<()>) = match &cli.command {
        Command::Rotate(a) => (a, run_rotate),
        Command::SelectK(a) => (a, run_select_k),
        Command::Estimate(a) => (a, run_estimate),
        Command::Flag(a) => (a, run_flag),
        Command::SimulateT(a) => (a, run_simulate_t),
        Command::OracleT(a) => (a, run_oracle_t),
        Command::McStudy(a) => (a, run_mc_study),
    };
    f(&flags.resolve()?)
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors are printed to stderr as one JSON object.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return 0;
            }
            let err = CliError::usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code
        }
    }
}
