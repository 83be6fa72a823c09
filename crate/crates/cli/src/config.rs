//! Run configuration: flat `key=value` files merged under command-line flags.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::CliError;

pub const DEFAULT_GRID: usize = 12;
pub const DEFAULT_SCAN: usize = 64;
pub const DEFAULT_EPSILON: f64 = morseflow::floer::DEFAULT_EPSILON;
pub const DEFAULT_T_MAX: f64 = morseflow::flow::DEFAULT_T_MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown output format `{other}` (expected json or csv)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

/// Values supplied by one source (file or flags); `None` means unset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partial {
    pub manifold: Option<String>,
    pub function: Option<String>,
    pub grid: Option<usize>,
    pub scan: Option<usize>,
    pub epsilon: Option<f64>,
    pub t_max: Option<f64>,
    pub out: Option<Format>,
    pub seed: Option<u64>,
}

impl Partial {
    /// `self` wins where both are set.
    pub fn over(self, base: Partial) -> Partial {
        Partial {
            manifold: self.manifold.or(base.manifold),
            function: self.function.or(base.function),
            grid: self.grid.or(base.grid),
            scan: self.scan.or(base.scan),
            epsilon: self.epsilon.or(base.epsilon),
            t_max: self.t_max.or(base.t_max),
            out: self.out.or(base.out),
            seed: self.seed.or(base.seed),
        }
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    raw.parse()
        .map_err(|e| CliError::Usage(format!("config line {line}: bad value for `{key}`: {e}")))
}

/// Parses a config file. Keys: manifold, function, grid, scan, epsilon,
/// tmax (or t_max), out, seed.
pub fn parse_file(text: &str) -> Result<Partial, CliError> {
    let mut p = Partial::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some((key, val)) = t.split_once('=') else {
            return Err(CliError::Usage(format!("config line {line}: expected key=value")));
        };
        let (key, val) = (key.trim(), val.trim());
        match key {
            "manifold" => p.manifold = Some(val.to_string()),
            "function" => p.function = Some(val.to_string()),
            "grid" => p.grid = Some(value(line, key, val)?),
            "scan" => p.scan = Some(value(line, key, val)?),
            "epsilon" => p.epsilon = Some(value(line, key, val)?),
            "tmax" | "t_max" => p.t_max = Some(value(line, key, val)?),
            "out" => p.out = Some(value(line, key, val)?),
            "seed" => p.seed = Some(value(line, key, val)?),
            other => {
                return Err(CliError::Usage(format!("config line {line}: unknown key `{other}`")));
            }
        }
    }
    Ok(p)
}

/// Fully resolved configuration, echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub manifold: String,
    pub function: Option<String>,
    pub grid: usize,
    pub scan: usize,
    pub epsilon: f64,
    pub t_max: f64,
    pub out: Format,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn resolve(p: Partial, default_out: Format) -> Result<RunConfig, CliError> {
        let c = RunConfig {
            manifold: p.manifold.unwrap_or_else(|| "torus2".to_string()),
            function: p.function,
            grid: p.grid.unwrap_or(DEFAULT_GRID),
            scan: p.scan.unwrap_or(DEFAULT_SCAN),
            epsilon: p.epsilon.unwrap_or(DEFAULT_EPSILON),
            t_max: p.t_max.unwrap_or(DEFAULT_T_MAX),
            out: p.out.unwrap_or(default_out),
            seed: p.seed,
        };
        if c.grid == 0 {
            return Err(CliError::Usage("grid must be positive".into()));
        }
        if c.scan < 2 {
            return Err(CliError::Usage("scan must be at least 2".into()));
        }
        for (name, v) in [("epsilon", c.epsilon), ("tmax", c.t_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("{name} must be positive and finite")));
            }
        }
        Ok(c)
    }

    pub fn function(&self) -> Result<&str, CliError> {
        self.function
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing --function (or function= in the config file)".into()))
    }
}
