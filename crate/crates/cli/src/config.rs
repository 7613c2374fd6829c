//! Flat `key = value` experiment configs.
//!
//! One assignment per line, `#` starts a comment, arrays are comma-separated.

use std::collections::BTreeMap;
use std::str::FromStr;

use mvfdr::regions::VolumeMode;
use mvfdr::simulation::{Baseline, ExperimentConfig, Method, SigmaForm};

use crate::error::{CliError, CliResult};

/// Default Monte Carlo table size of the likelihood-ratio oracle.
pub const ORACLE_SAMPLES: usize = 4_000_000;

const KNOWN_KEYS: &[&str] = &[
    "a",
    "alpha",
    "n_nulls",
    "n_runs",
    "K",
    "df",
    "mu",
    "r",
    "sigma_form",
    "method",
    "nu",
    "c",
    "weights",
    "s_grid",
    "seed",
    "samples",
    "volume_mode",
    "baselines",
];

const REQUIRED_KEYS: &[&str] = &["a", "alpha", "df", "mu", "method"];

/// Raw assignments, keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Input(format!("{origin}:{}: expected `key = value`, found `{line}`", i + 1)));
            };
            let key = key.trim();
            if raw.entries.contains_key(key) {
                return Err(CliError::Input(format!("{origin}:{}: duplicate key `{key}`", i + 1)));
            }
            raw.insert(key, value.trim(), &format!("{origin}:{}", i + 1))?;
        }
        Ok(raw)
    }

    /// Applies a `key=value` override, replacing any earlier value.
    pub fn set(&mut self, assignment: &str) -> CliResult<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("override `{assignment}` is not of the form key=value")))?;
        self.insert(key.trim(), value.trim(), "override")
    }

    fn insert(&mut self, key: &str, value: &str, at: &str) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Input(format!("{at}: unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn scalar<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::Input(format!("key `{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    fn list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(v, key)).transpose()
    }
}

pub fn parse_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>().map_err(|_| CliError::Input(format!("{what}: cannot parse `{s}` as a number")))
        })
        .collect()
}

/// A parsed experiment plus the optional tuning scan and baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub s_grid: Option<Vec<f64>>,
    pub baselines: Vec<Baseline>,
}

pub fn parse_baselines(text: &str) -> CliResult<Vec<Baseline>> {
    text.split(',')
        .map(|s| match s.trim() {
            "by-product" | "product" => Ok(Baseline::ByProduct),
            "by-sum" | "sum" => Ok(Baseline::BySum),
            "by-max" | "max" => Ok(Baseline::ByMax),
            other => Err(CliError::Input(format!("unknown baseline `{other}`"))),
        })
        .collect()
}

pub fn parse_volume_mode(text: &str, samples: usize, seed: u64) -> CliResult<Option<VolumeMode>> {
    Ok(match text {
        "auto" => None,
        "exact2d" => Some(VolumeMode::Exact2D),
        "irwinhall" => Some(VolumeMode::IrwinHall),
        "powerlaw" => Some(VolumeMode::PowerLaw),
        "montecarlo" => Some(VolumeMode::MonteCarlo { samples, seed }),
        other => return Err(CliError::Input(format!("unknown volume mode `{other}`"))),
    })
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        for key in REQUIRED_KEYS {
            if raw.get(key).is_none() {
                return Err(CliError::Input(format!("missing required key `{key}`")));
            }
        }
        let a: f64 = raw.scalar("a")?.unwrap();
        let alpha: f64 = raw.scalar("alpha")?.unwrap();
        let df: usize = raw.scalar("df")?.unwrap();
        let mu = raw.list("mu")?.unwrap();
        let k = mu.len();
        if let Some(declared) = raw.scalar::<usize>("K")? {
            if declared != k {
                return Err(CliError::Invariant(format!("K = {declared} but mu has {k} entries")));
            }
        }
        let seed: u64 = raw.scalar("seed")?.unwrap_or(1);
        let method_name = raw.get("method").unwrap();
        let method = build_method(raw, method_name, seed)?;

        let mut exp = ExperimentConfig::new(a, alpha, df, mu, method);
        exp.seed = seed;
        if let Some(n) = raw.scalar("n_nulls")? {
            exp.n_nulls = n;
        }
        if let Some(n) = raw.scalar("n_runs")? {
            exp.n_runs = n;
        }
        if let Some(r) = raw.scalar("r")? {
            exp.r = r;
        }
        if let Some(form) = raw.get("sigma_form") {
            exp.sigma_form = match form.to_ascii_lowercase().as_str() {
                "bivariate" => SigmaForm::Bivariate,
                "exchangeable" => SigmaForm::Exchangeable,
                other => return Err(CliError::Input(format!("key `sigma_form`: unknown form `{other}`"))),
            };
        }
        let s_grid = raw.list("s_grid")?;
        let baselines = match raw.get("baselines") {
            Some(b) => parse_baselines(b)?,
            None => Baseline::ALL.to_vec(),
        };
        Ok(Self { experiment: exp, s_grid, baselines })
    }
}

fn build_method(raw: &RawConfig, name: &str, seed: u64) -> CliResult<Method> {
    let stray = |allowed: &[&str]| -> CliResult<()> {
        for key in ["nu", "c", "weights", "samples", "volume_mode"] {
            if raw.get(key).is_some() && !allowed.contains(&key) {
                return Err(CliError::Invariant(format!("key `{key}` does not apply to method `{name}`")));
            }
        }
        Ok(())
    };
    Ok(match name {
        "ellipsoid" => {
            stray(&["nu", "volume_mode", "samples"])?;
            let samples = raw.scalar("samples")?.unwrap_or(1_000_000);
            let mode = match raw.get("volume_mode") {
                Some(m) => parse_volume_mode(m, samples, seed)?,
                None => None,
            };
            Method::Ellipsoid { nu: raw.list("nu")?, mode }
        }
        "rectangle" => {
            stray(&["c"])?;
            Method::Rectangle { c: raw.list("c")? }
        }
        "stouffer" => {
            stray(&["weights"])?;
            Method::Stouffer { weights: raw.list("weights")? }
        }
        "min" => {
            stray(&[])?;
            Method::Min
        }
        "product" => {
            stray(&[])?;
            Method::Product
        }
        "oracle" => {
            stray(&["samples"])?;
            Method::OracleLr { samples: raw.scalar("samples")?.unwrap_or(ORACLE_SAMPLES) }
        }
        other => return Err(CliError::Input(format!("key `method`: unknown method `{other}`"))),
    })
}
