//! Run configuration: flat `key=value` files overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dmq_core::bootstrap::BootstrapConfig;
use dmq_core::quantile::{KChoice, DEFAULT_DELTA, DEFAULT_GRID_M};
use dmq_core::tmodel::{fpc_direction, TParams};
use dmq_core::{Direction, Sample};
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 0;

/// Recognised keys, identical to the long flag names with `_` for `-`.
pub const KEYS: &[&str] = &[
    "input",
    "output",
    "format",
    "direction",
    "alpha",
    "k",
    "grid",
    "delta",
    "epsilon",
    "b1",
    "seed",
    "center",
    "replicates",
    "mu",
    "sigma",
    "nu",
    "n",
    "has_header",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectionSpec {
    E,
    NegE,
    Fpc,
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSpec {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub direction: DirectionSpec,
    /// `None` means `1/n`.
    pub alpha: Option<f64>,
    pub k: KSpec,
    pub grid: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub b1: usize,
    pub seed: u64,
    pub center: bool,
    pub replicates: usize,
    pub mu: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub n: Option<usize>,
    pub has_header: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let boot = BootstrapConfig::default();
        Self {
            input: None,
            output: None,
            format: Format::Json,
            direction: DirectionSpec::E,
            alpha: None,
            k: KSpec::Auto,
            grid: DEFAULT_GRID_M,
            delta: DEFAULT_DELTA,
            epsilon: boot.epsilon,
            b1: boot.b1,
            seed: DEFAULT_SEED,
            center: false,
            replicates: 1,
            mu: None,
            sigma: None,
            nu: None,
            n: None,
            has_header: false,
        }
    }
}

/// Accepts decimals and `num/den` fractions; the result must lie in (0, 1).
pub fn parse_alpha(s: &str) -> CliResult<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = parse_num(num, "alpha numerator")?;
            let den: f64 = parse_num(den, "alpha denominator")?;
            num / den
        }
        None => parse_num(s, "alpha")?,
    };
    if !(v > 0.0 && v < 1.0) {
        return Err(CliError::usage(format!("alpha {s} must lie in (0, 1)")));
    }
    Ok(v)
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("cannot parse {what} from '{}'", s.trim())))
}

pub fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',').map(|p| parse_num(p, what)).collect()
}

fn parse_bool(s: &str, what: &str) -> CliResult<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(CliError::usage(format!("{what} expects a boolean, got '{other}'"))),
    }
}

impl DirectionSpec {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.trim() {
            "e" => Ok(Self::E),
            "-e" => Ok(Self::NegE),
            "fpc" => Ok(Self::Fpc),
            other => {
                let v = parse_list(other, "direction component")?;
                // Validates and normalizes; the dimension is checked later.
                let d = Direction::new(v)?;
                Ok(Self::Vector(d.components().to_vec()))
            }
        }
    }

    /// FPC uses the supplied scale matrix.
    pub fn resolve_with(&self, d: usize, scale: impl FnOnce() -> DMatrix<f64>) -> CliResult<Direction> {
        let dir = match self {
            Self::E => Direction::e(d)?,
            Self::NegE => Direction::neg_e(d)?,
            Self::Fpc => fpc_direction(&scale())?,
            Self::Vector(v) => {
                if v.len() != d {
                    return Err(CliError::usage(format!(
                        "direction has {} components but the data has {d} columns",
                        v.len()
                    )));
                }
                Direction::new(v.clone())?
            }
        };
        Ok(dir)
    }

    /// FPC of the empirical covariance.
    pub fn resolve_for_sample(&self, sample: &Sample) -> CliResult<Direction> {
        self.resolve_with(sample.dim(), || {
            let (_, cov) = sample.mean_and_covariance();
            DMatrix::from_row_slice(sample.dim(), sample.dim(), &cov)
        })
    }

    /// FPC of the model scale matrix.
    pub fn resolve_for_model(&self, params: &TParams) -> CliResult<Direction> {
        self.resolve_with(params.dim(), || params.sigma().clone())
    }
}

impl KSpec {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.trim() {
            "auto" => Ok(Self::Auto),
            other => {
                let k: usize = parse_num(other, "k")?;
                if k < 2 {
                    return Err(CliError::usage(format!("k = {k} must be at least 2")));
                }
                Ok(Self::Fixed(k))
            }
        }
    }
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!("config line {}: unknown key '{key}'", i + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

impl RunConfig {
    /// Builds a configuration from merged key/value pairs.
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        let mut c = Self::default();
        for (key, value) in map {
            match key.as_str() {
                "input" => c.input = Some(PathBuf::from(value)),
                "output" => c.output = Some(PathBuf::from(value)),
                "format" => {
                    c.format = match value.as_str() {
                        "json" => Format::Json,
                        "csv" => Format::Csv,
                        other => return Err(CliError::usage(format!("unknown format '{other}'"))),
                    }
                }
                "direction" => c.direction = DirectionSpec::parse(value)?,
                "alpha" => c.alpha = Some(parse_alpha(value)?),
                "k" => c.k = KSpec::parse(value)?,
                "grid" => c.grid = parse_num(value, "grid")?,
                "delta" => c.delta = parse_num(value, "delta")?,
                "epsilon" => c.epsilon = parse_num(value, "epsilon")?,
                "b1" => c.b1 = parse_num(value, "b1")?,
                "seed" => c.seed = parse_num(value, "seed")?,
                "center" => c.center = parse_bool(value, "center")?,
                "replicates" => c.replicates = parse_num(value, "replicates")?,
                "mu" => c.mu = Some(parse_list(value, "mu")?),
                "sigma" => c.sigma = Some(parse_list(value, "sigma")?),
                "nu" => c.nu = Some(parse_num(value, "nu")?),
                "n" => c.n = Some(parse_num(value, "n")?),
                "has_header" => c.has_header = parse_bool(value, "has_header")?,
                other => return Err(CliError::usage(format!("unknown key '{other}'"))),
            }
        }
        if c.b1 == 0 {
            return Err(CliError::usage("b1 must be positive"));
        }
        if c.replicates == 0 {
            return Err(CliError::usage("replicates must be positive"));
        }
        Ok(c)
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            epsilon: self.epsilon,
            b1: self.b1,
            seed: self.seed,
        }
    }

    pub fn k_choice(&self) -> KChoice {
        match self.k {
            KSpec::Auto => KChoice::Auto(self.bootstrap()),
            KSpec::Fixed(k) => KChoice::Fixed(k),
        }
    }

    pub fn input(&self) -> CliResult<&Path> {
        self.input.as_deref().ok_or_else(|| CliError::usage("--input is required"))
    }

    /// `alpha`, defaulting to `1/n`.
    pub fn alpha_or(&self, n: usize) -> CliResult<f64> {
        match self.alpha {
            Some(a) => Ok(a),
            None if n > 1 => Ok(1.0 / n as f64),
            None => Err(CliError::usage("--alpha is required")),
        }
    }

    /// Model parameters from `mu`, `sigma` and `nu`. `mu` defaults to zero.
    pub fn t_params(&self) -> CliResult<TParams> {
        let sigma = self.sigma.as_ref().ok_or_else(|| CliError::usage("--sigma is required"))?;
        let nu = self.nu.ok_or_else(|| CliError::usage("--nu is required"))?;
        let d = (sigma.len() as f64).sqrt().round() as usize;
        if d * d != sigma.len() {
            return Err(CliError::usage(format!(
                "sigma has {} entries, not a square matrix",
                sigma.len()
            )));
        }
        let mu = self.mu.clone().unwrap_or_else(|| vec![0.0; d]);
        Ok(TParams::from_slices(&mu, sigma, nu)?)
    }

    pub fn sample_size(&self) -> CliResult<usize> {
        self.n.ok_or_else(|| CliError::usage("--n is required"))
    }
}
