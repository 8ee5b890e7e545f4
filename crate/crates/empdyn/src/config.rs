//! Run configuration: an optional JSON file overridden by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use empdyn_core::dataset::{Interval, DEFAULT_GRID_SIZE};
use empdyn_core::eigenbasis::TruncationRule;
use empdyn_core::kernel::KernelSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Default thresholds for the subdomain report.
pub const DEFAULT_R2_THRESHOLDS: [f64; 2] = [0.8, 0.9];

/// Smoother bandwidths: cross-validated, or fixed `h_mu0, h_mu1, h_g0, h_g1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidths {
    #[default]
    Auto,
    Fixed([f64; 4]),
}

impl FromStr for Bandwidths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Bandwidths::Auto);
        }
        let values = parse_list(s)?;
        let h: [f64; 4] = values
            .try_into()
            .map_err(|v: Vec<f64>| format!("expected 4 bandwidths h0,h1,g0,g1, got {}", v.len()))?;
        Ok(Bandwidths::Fixed(h))
    }
}

impl fmt::Display for Bandwidths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidths::Auto => f.write_str("auto"),
            Bandwidths::Fixed([a, b, c, d]) => write!(f, "{a},{b},{c},{d}"),
        }
    }
}

/// `a,b` on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainArg(pub [f64; 2]);

impl FromStr for DomainArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_list(s)?;
        match v[..] {
            [a, b] => Ok(DomainArg([a, b])),
            _ => Err(format!("expected a,b, got {} values", v.len())),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("`{}`: {e}", p.trim()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset CSV for `fit` and `pace`.
    pub input: Option<PathBuf>,
    /// Truth specification JSON for `simulate`.
    pub spec: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub grid_size: usize,
    pub bandwidths: Bandwidths,
    pub kernel: KernelSpec,
    pub fve: f64,
    pub k_max: usize,
    pub r2_thresholds: Vec<f64>,
    pub domain: Option<[f64; 2]>,
    pub log_values: bool,
    pub seed: u64,
    /// Number of subjects simulated by `simulate`.
    pub n: Option<usize>,
    /// Floor σ̂² = 0 in the PACE conditioning matrix.
    pub sigma_floor: bool,
    /// Subjects listed per drift component in `extremes.json`.
    pub top: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rule = TruncationRule::default();
        Self {
            input: None,
            spec: None,
            output_dir: PathBuf::from("."),
            grid_size: DEFAULT_GRID_SIZE,
            bandwidths: Bandwidths::Auto,
            kernel: KernelSpec::default(),
            fve: rule.fve_threshold,
            k_max: rule.k_max,
            r2_thresholds: DEFAULT_R2_THRESHOLDS.to_vec(),
            domain: None,
            log_values: false,
            seed: 0,
            n: None,
            sigma_floor: true,
            top: 3,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.grid_size < 2 {
            return Err(CliError::Config(format!(
                "grid size must be at least 2, got {}",
                self.grid_size
            )));
        }
        self.truncation()?;
        for &r in &self.r2_thresholds {
            if !(r > 0.0 && r <= 1.0) {
                return Err(CliError::Config(format!("R² threshold {r} outside (0, 1]")));
            }
        }
        if let Some([a, b]) = self.domain {
            Interval::new(a, b).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Bandwidths::Fixed(h) = self.bandwidths {
            if h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(CliError::Config(format!(
                    "bandwidths must be positive, got {}",
                    self.bandwidths
                )));
            }
        }
        if self.n == Some(0) {
            return Err(CliError::Config("--n must be at least 1".into()));
        }
        if self.top == 0 {
            return Err(CliError::Config("--top must be at least 1".into()));
        }
        Ok(())
    }

    pub fn truncation(&self) -> CliResult<TruncationRule> {
        TruncationRule::new(self.fve, self.k_max).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn domain_override(&self) -> Option<Interval> {
        self.domain.map(|[lower, upper]| Interval { lower, upper })
    }

    /// Settings that determine the numbers in the outputs. Paths are left
    /// out so that identical runs into different directories hash equally.
    pub fn hashed(&self) -> RunConfig {
        RunConfig {
            input: None,
            spec: None,
            output_dir: PathBuf::new(),
            ..self.clone()
        }
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::hashed`] as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.hashed()).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
