//! Gaussian processes with known trigonometric eigensystems: seeded data
//! generation, analytic oracles and forward integration of the dynamics.

mod integrate;
mod oracle;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Interval, SparseDataset, SubjectRecord};
use crate::error::{Error, Result};

pub use integrate::{integrate_forward, integrate_forward_with, DriftCoefficients, GridCoefficients, PathCoefficients};
pub use oracle::{analytic_dynamics, analytic_dynamics_with, analytic_r2, true_eigensystem, true_moments, DEFAULT_ORACLE_TERMS};

/// `(sin 2πx, cos 2πx)` with the argument reduced exactly, so that whole and
/// half turns give exact zeros.
pub(crate) fn sin_cos_turns(x: f64) -> (f64, f64) {
    let r = x - libm::round(x);
    let q = libm::round(4.0 * r);
    let (s, c) = libm::sincos(2.0 * PI * (r - 0.25 * q));
    match (q as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// Standard eigenvalue sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "values")]
pub enum LambdaRule {
    /// `λ_k = k^{-4}`
    InverseQuartic,
    /// `λ_k = 2^{-k}`
    Geometric,
    Custom(Vec<f64>),
}

impl LambdaRule {
    /// First `terms` eigenvalues; custom sequences are zero-padded.
    pub fn lambdas(&self, terms: usize) -> Vec<f64> {
        (1..=terms)
            .map(|k| match self {
                LambdaRule::InverseQuartic => libm::pow(k as f64, -4.0),
                LambdaRule::Geometric => libm::pow(2.0, -(k as f64)),
                LambdaRule::Custom(v) => v.get(k - 1).copied().unwrap_or(0.0),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeanSpec {
    /// `μ(t) = Σ_j c_j t^j`
    Polynomial { coeffs: Vec<f64> },
    /// `μ(t) = c_0 + Σ_j c_j cos(2jπ(t - a)/L)`
    Trig { intercept: f64, cos: Vec<f64> },
}

impl Default for MeanSpec {
    fn default() -> Self {
        MeanSpec::Polynomial { coeffs: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampling {
    /// Every subject observed at the same `m_obs` equally spaced times.
    Dense { m_obs: usize },
    /// `N_i` uniform on `{n_min, …, n_max}`, times i.i.d. uniform.
    Sparse { n_min: usize, n_max: usize },
}

/// Known truth: mean, eigenvalues of the cosine basis
/// `φ_k(t) = √(2/L) cos(2kπ(t - a)/L)`, noise and design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    #[serde(default)]
    pub mean: MeanSpec,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default)]
    pub domain: Interval,
    pub sampling: Sampling,
    #[serde(default)]
    pub seed: u64,
}

impl TruthSpec {
    pub fn new(lambdas: Vec<f64>, sampling: Sampling) -> Self {
        Self {
            mean: MeanSpec::default(),
            lambdas,
            sigma2: 0.0,
            domain: Interval::default(),
            sampling,
            seed: 0,
        }
    }

    pub fn with_mean(mut self, mean: MeanSpec) -> Self {
        self.mean = mean;
        self
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        Interval::new(self.domain.lower, self.domain.upper)?;
        if self.lambdas.is_empty() {
            return bad("at least one eigenvalue is required".into());
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad("eigenvalues must be positive".into());
        }
        if self.lambdas.windows(2).any(|w| w[1] > w[0]) {
            return bad("eigenvalues must be in descending order".into());
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return bad(format!("noise variance {} must be nonnegative", self.sigma2));
        }
        match self.sampling {
            Sampling::Dense { m_obs } if m_obs < 2 => bad("dense sampling needs m_obs >= 2".into()),
            Sampling::Sparse { n_min, n_max } if n_min == 0 || n_max < n_min => {
                bad(format!("sparse sampling needs 1 <= n_min <= n_max, got {n_min}..{n_max}"))
            }
            _ => Ok(()),
        }
    }

    pub fn process(&self) -> TrueProcess<'_> {
        TrueProcess { spec: self }
    }
}

/// Pointwise evaluation of the true mean, eigenfunctions and their
/// derivatives.
#[derive(Debug, Clone, Copy)]
pub struct TrueProcess<'a> {
    spec: &'a TruthSpec,
}

impl TrueProcess<'_> {
    pub fn spec(&self) -> &TruthSpec {
        self.spec
    }

    fn turns(&self, k: usize, t: f64) -> (f64, f64) {
        let d = self.spec.domain;
        sin_cos_turns(k as f64 * (t - d.lower) / d.length())
    }

    pub fn mean(&self, t: f64) -> f64 {
        match &self.spec.mean {
            MeanSpec::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            MeanSpec::Trig { intercept, cos } => {
                intercept
                    + cos
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * self.turns(j + 1, t).1)
                        .sum::<f64>()
            }
        }
    }

    pub fn mean_derivative(&self, t: f64) -> f64 {
        match &self.spec.mean {
            MeanSpec::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (j, c)| acc * t + j as f64 * c),
            MeanSpec::Trig { cos, .. } => {
                let len = self.spec.domain.length();
                -cos.iter()
                    .enumerate()
                    .map(|(j, c)| c * 2.0 * PI * (j + 1) as f64 / len * self.turns(j + 1, t).0)
                    .sum::<f64>()
            }
        }
    }

    /// `φ_k(t)` for one-based `k`.
    pub fn phi(&self, k: usize, t: f64) -> f64 {
        let len = self.spec.domain.length();
        libm::sqrt(2.0 / len) * self.turns(k, t).1
    }

    /// `φ_k'(t)` for one-based `k`.
    pub fn dphi(&self, k: usize, t: f64) -> f64 {
        let len = self.spec.domain.length();
        -libm::sqrt(2.0 / len) * 2.0 * PI * k as f64 / len * self.turns(k, t).0
    }

    pub fn path(&self, scores: &[f64], t: f64) -> f64 {
        self.mean(t)
            + scores
                .iter()
                .enumerate()
                .map(|(k, xi)| xi * self.phi(k + 1, t))
                .sum::<f64>()
    }

    pub fn path_derivative(&self, scores: &[f64], t: f64) -> f64 {
        self.mean_derivative(t)
            + scores
                .iter()
                .enumerate()
                .map(|(k, xi)| xi * self.dphi(k + 1, t))
                .sum::<f64>()
    }

    pub fn var_x(&self, t: f64) -> f64 {
        self.weighted_sum(|p, k| p.phi(k, t) * p.phi(k, t))
    }

    pub fn cov_xdx(&self, t: f64) -> f64 {
        self.weighted_sum(|p, k| p.dphi(k, t) * p.phi(k, t))
    }

    pub fn var_dx(&self, t: f64) -> f64 {
        self.weighted_sum(|p, k| p.dphi(k, t) * p.dphi(k, t))
    }

    /// Unfloored `β(t) = cov(X', X)/var X`.
    pub fn beta(&self, t: f64) -> f64 {
        self.cov_xdx(t) / self.var_x(t)
    }

    fn weighted_sum(&self, f: impl Fn(&Self, usize) -> f64) -> f64 {
        self.spec
            .lambdas
            .iter()
            .enumerate()
            .map(|(k, l)| l * f(self, k + 1))
            .sum()
    }
}

/// Hidden scores of one simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    pub scores: Vec<f64>,
}

/// Everything needed to reconstruct the simulated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub spec: TruthSpec,
    pub n: usize,
    pub subjects: Vec<SubjectTruth>,
}

/// Subject identifier used by [`sample_dataset`].
pub fn subject_id(index: usize) -> String {
    format!("s{:04}", index + 1)
}

/// Draws `n` subjects. Subject `i` uses ChaCha8 stream `i` of the spec's
/// seed, so subjects are independent of `n` and of each other.
pub fn sample_dataset(spec: &TruthSpec, n: usize) -> Result<(SparseDataset, TruthRecord)> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("number of subjects must be positive".into()));
    }
    let domain = spec.domain;
    let process = spec.process();
    let sd = libm::sqrt(spec.sigma2);
    let mut subjects = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let scores: Vec<f64> = spec
            .lambdas
            .iter()
            .map(|&l| {
                let z: f64 = StandardNormal.sample(&mut rng);
                libm::sqrt(l) * z
            })
            .collect();
        let times = match spec.sampling {
            Sampling::Dense { m_obs } => (0..m_obs)
                .map(|j| domain.lower + domain.length() * (j as f64 / (m_obs - 1) as f64))
                .collect(),
            Sampling::Sparse { n_min, n_max } => {
                let count = rng.random_range(n_min..=n_max);
                let mut times: Vec<f64> = Vec::with_capacity(count);
                while times.len() < count {
                    let t = domain.lower + domain.length() * rng.random::<f64>();
                    if !times.contains(&t) {
                        times.push(t);
                    }
                }
                times.sort_by(f64::total_cmp);
                times
            }
        };
        let values = times
            .iter()
            .map(|&t| {
                let noise = if sd > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sd * z
                } else {
                    0.0
                };
                process.path(&scores, t) + noise
            })
            .collect();
        let id = subject_id(i);
        subjects.push(SubjectRecord::new(id.clone(), times, values)?);
        truth.push(SubjectTruth { id, scores });
    }
    let data = SparseDataset::new(subjects, domain)?;
    Ok((
        data,
        TruthRecord {
            spec: spec.clone(),
            n,
            subjects: truth,
        },
    ))
}
