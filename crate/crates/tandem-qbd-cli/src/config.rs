//! Run configuration: defaults, key=value config files, and flag overrides
//! (command-line flags always win over file values, which win over the
//! built-in defaults).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tandem_qbd::model::{Capacity, TandemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub capacity: Capacity,
    pub tol: f64,
    pub phase_cap: usize,
    pub level_cap: usize,
    pub k_max: usize,
    pub m_max: usize,
    pub seed: u64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_MU1: f64 = 3.0;
pub const DEFAULT_MU2: f64 = 2.0;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_PHASE_CAP: usize = 80;
pub const DEFAULT_LEVEL_CAP: usize = 80;
pub const DEFAULT_K_MAX: usize = 200;
pub const DEFAULT_M_MAX: usize = 20;
pub const DEFAULT_SEED: u64 = 20_240_607;

/// Raw option values before precedence resolution.
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub lambda: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub capacity: Option<Capacity>,
    pub tol: Option<f64>,
    pub phase_cap: Option<usize>,
    pub level_cap: Option<usize>,
    pub k_max: Option<usize>,
    pub m_max: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

pub fn parse_capacity(s: &str) -> Result<Capacity, String> {
    match s.trim() {
        "inf" | "infinite" => Ok(Capacity::Infinite),
        other => other
            .parse::<usize>()
            .map(Capacity::Finite)
            .map_err(|_| format!("capacity must be a positive integer or 'inf', got '{other}'")),
    }
}

pub fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s.trim() {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        other => Err(format!("format must be 'json' or 'csv', got '{other}'")),
    }
}

/// Parses a flat `key = value` file (one pair per line, `#` comments).
pub fn parse_config_file(path: &Path) -> Result<PartialConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, got '{line}'", idx + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let mut cfg = PartialConfig::default();
    for (key, value) in map {
        match key.as_str() {
            "lambda" => cfg.lambda = Some(parse_f64(&key, &value)?),
            "mu1" => cfg.mu1 = Some(parse_f64(&key, &value)?),
            "mu2" => cfg.mu2 = Some(parse_f64(&key, &value)?),
            "capacity" => cfg.capacity = Some(parse_capacity(&value)?),
            "tol" => cfg.tol = Some(parse_f64(&key, &value)?),
            "phase_cap" => cfg.phase_cap = Some(parse_usize(&key, &value)?),
            "level_cap" => cfg.level_cap = Some(parse_usize(&key, &value)?),
            "k_max" => cfg.k_max = Some(parse_usize(&key, &value)?),
            "m_max" => cfg.m_max = Some(parse_usize(&key, &value)?),
            "seed" => {
                cfg.seed =
                    Some(value.parse::<u64>().map_err(|_| {
                        format!("seed must be a nonnegative integer, got '{value}'")
                    })?)
            }
            "format" => cfg.format = Some(parse_format(&value)?),
            "out" => cfg.out = Some(PathBuf::from(value)),
            other => return Err(format!("unknown config key '{other}'")),
        }
    }
    Ok(cfg)
}

fn parse_f64(key: &str, value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("{key} must be a number, got '{value}'"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|_| format!("{key} must be a nonnegative integer, got '{value}'"))
}

/// Flags override file values, which override defaults.
pub fn resolve(flags: PartialConfig, file: PartialConfig) -> RunConfig {
    RunConfig {
        lambda: flags.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
        mu1: flags.mu1.or(file.mu1).unwrap_or(DEFAULT_MU1),
        mu2: flags.mu2.or(file.mu2).unwrap_or(DEFAULT_MU2),
        capacity: flags
            .capacity
            .or(file.capacity)
            .unwrap_or(Capacity::Infinite),
        tol: flags.tol.or(file.tol).unwrap_or(DEFAULT_TOL),
        phase_cap: flags
            .phase_cap
            .or(file.phase_cap)
            .unwrap_or(DEFAULT_PHASE_CAP),
        level_cap: flags
            .level_cap
            .or(file.level_cap)
            .unwrap_or(DEFAULT_LEVEL_CAP),
        k_max: flags.k_max.or(file.k_max).unwrap_or(DEFAULT_K_MAX),
        m_max: flags.m_max.or(file.m_max).unwrap_or(DEFAULT_M_MAX),
        seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        format: flags.format.or(file.format).unwrap_or(OutputFormat::Json),
        out: flags.out.or(file.out),
    }
}

impl RunConfig {
    pub fn params(&self) -> tandem_qbd::Result<TandemParams> {
        TandemParams::new(self.lambda, self.mu1, self.mu2, self.capacity)
    }

    /// Phase count used when an infinite network needs a finite surrogate.
    pub fn surrogate_phase_cap(&self) -> usize {
        match self.capacity {
            Capacity::Finite(m) => m,
            Capacity::Infinite => self.phase_cap,
        }
    }
}
