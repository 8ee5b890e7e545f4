//! Discretized eigen-analysis of covariance surfaces.
//!
//! With trapezoid weights `D`, the integral operator `∫G(t,s)φ(s)ds` becomes
//! `G·D`, which is similar to the symmetric `D^{1/2} G D^{1/2}`. Its
//! eigenvectors `u` give grid eigenfunctions `φ = D^{-1/2} u` that are
//! orthonormal under the quadrature inner product.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::EvalGrid;
use crate::diagnostics::{Diagnostics, Warning};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::smoothing::MomentEstimates;

/// Eigenvalues at or below this fraction of the largest magnitude are
/// numerically zero and dropped with the nonpositive ones.
const ZERO_EIGENVALUE_TOL: f64 = 1e-12;
/// Relative gap under which adjacent eigenvalues are reported as tied.
const TIE_TOL: f64 = 1e-10;

/// How many eigen-components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRule {
    /// Smallest cumulative fraction of variance explained to reach.
    pub fve_threshold: f64,
    pub k_max: usize,
}

impl Default for TruncationRule {
    fn default() -> Self {
        Self {
            fve_threshold: 0.95,
            k_max: 20,
        }
    }
}

impl TruncationRule {
    pub fn new(fve_threshold: f64, k_max: usize) -> Result<Self> {
        let rule = Self {
            fve_threshold,
            k_max,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fve_threshold > 0.0 && self.fve_threshold <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "FVE threshold {} outside (0, 1]",
                self.fve_threshold
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be positive".into()));
        }
        Ok(())
    }
}

/// Truncated eigensystem of a covariance surface on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub grid: EvalGrid,
    /// Leading eigenvalues, strictly positive and descending.
    pub lambdas: Vec<f64>,
    /// Grid eigenfunctions, one vector per component.
    pub phis: Vec<Vec<f64>>,
    /// Eigenfunction derivatives, once computed.
    pub dphis: Option<Vec<Vec<f64>>>,
    /// Cumulative fraction of variance explained by the first `k` components.
    pub fve: Vec<f64>,
    /// Every positive eigenvalue before truncation.
    pub spectrum: Vec<f64>,
    /// Quadrature trace `Σ w_m G(t_m, t_m)` of the decomposed surface.
    pub trace: f64,
}

impl EigenSystem {
    /// Builds a system from known components, e.g. an analytic truth.
    pub fn from_components(
        grid: EvalGrid,
        lambdas: Vec<f64>,
        phis: Vec<Vec<f64>>,
        dphis: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if phis.len() != lambdas.len() {
            return Err(Error::LengthMismatch {
                what: "eigenfunctions",
                expected: lambdas.len(),
                actual: phis.len(),
            });
        }
        if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::DegenerateEigensystem);
        }
        for f in phis.iter().chain(dphis.iter().flatten()) {
            grid.check_len("grid function", f.len())?;
        }
        if let Some(d) = &dphis {
            if d.len() != lambdas.len() {
                return Err(Error::LengthMismatch {
                    what: "eigenfunction derivatives",
                    expected: lambdas.len(),
                    actual: d.len(),
                });
            }
        }
        let total: f64 = lambdas.iter().sum();
        let fve = cumulative(&lambdas, total);
        Ok(Self {
            grid,
            spectrum: lambdas.clone(),
            trace: total,
            lambdas,
            phis,
            dphis,
            fve,
        })
    }

    pub fn k(&self) -> usize {
        self.lambdas.len()
    }

    pub fn derivatives(&self) -> Result<&[Vec<f64>]> {
        self.dphis.as_deref().ok_or(Error::MissingDerivatives)
    }

    pub fn with_derivatives(mut self, dphis: Vec<Vec<f64>>) -> Self {
        self.dphis = Some(dphis);
        self
    }

    /// Keeps the leading `k` components.
    pub fn truncated(mut self, k: usize) -> Self {
        let k = k.clamp(1, self.k());
        self.lambdas.truncate(k);
        self.phis.truncate(k);
        self.fve.truncate(k);
        if let Some(d) = &mut self.dphis {
            d.truncate(k);
        }
        self
    }

    /// Eigenvalue spacings `δ_1 = λ_1 - λ_2`,
    /// `δ_k = min_{j ≤ k}(λ_{j-1} - λ_j, λ_j - λ_{j+1})`, for the retained
    /// components. Diagnostic only.
    pub fn spacings(&self) -> Vec<f64> {
        let lam = |j: usize| self.spectrum.get(j).copied().unwrap_or(0.0);
        let mut out = Vec::with_capacity(self.k());
        let mut running = f64::INFINITY;
        for k in 0..self.k() {
            let below = lam(k) - lam(k + 1);
            let gap = if k == 0 {
                below
            } else {
                (lam(k - 1) - lam(k)).min(below)
            };
            running = running.min(gap);
            out.push(running);
        }
        out
    }

    /// `Σ_k λ_k φ_k(t) φ_k(s)` on the grid.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        outer_sum(&self.lambdas, &self.phis, &self.phis)
    }
}

fn cumulative(lambdas: &[f64], total: f64) -> Vec<f64> {
    let mut acc = 0.0;
    lambdas
        .iter()
        .map(|l| {
            acc += l;
            acc / total
        })
        .collect()
}

/// `Σ_k λ_k f_k(t) g_k(s)` with rows indexing `t`.
pub(crate) fn outer_sum(lambdas: &[f64], f: &[Vec<f64>], g: &[Vec<f64>]) -> DMatrix<f64> {
    let m = f.first().map_or(0, Vec::len);
    DMatrix::from_fn(m, m, |i, j| {
        lambdas
            .iter()
            .zip(f.iter().zip(g))
            .map(|(l, (a, b))| l * (a[i] * b[j]))
            .sum()
    })
}

/// Flips `phi` so that its entry of largest magnitude is positive; the
/// first index wins ties.
fn orient(phi: &mut [f64]) {
    let mut best = 0;
    for (i, v) in phi.iter().enumerate() {
        if v.abs() > phi[best].abs() {
            best = i;
        }
    }
    if phi[best] < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Full weighted spectrum of a symmetric surface, descending.
pub(crate) struct WeightedSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    sqrt_w: Vec<f64>,
    trace: f64,
}

impl WeightedSpectrum {
    pub fn new(cov: &DMatrix<f64>, grid: &EvalGrid) -> Result<Self> {
        let m = grid.len();
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::LengthMismatch {
                what: "covariance surface",
                expected: m,
                actual: cov.nrows(),
            });
        }
        let scale = cov.amax();
        if !scale.is_finite() {
            return Err(Error::InvalidConfig("covariance has non-finite entries".into()));
        }
        for i in 0..m {
            for j in i + 1..m {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-8 * scale {
                    return Err(Error::InvalidConfig(
                        "covariance surface is not symmetric".into(),
                    ));
                }
            }
        }
        if grid.weights().iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidConfig("quadrature weights must be positive".into()));
        }
        let sqrt_w: Vec<f64> = grid.weights().iter().map(|&w| libm::sqrt(w)).collect();
        let b = DMatrix::from_fn(m, m, |i, j| {
            sqrt_w[i] * 0.5 * (cov[(i, j)] + cov[(j, i)]) * sqrt_w[j]
        });
        let trace = (0..m).map(|i| b[(i, i)]).sum::<f64>();
        let (values, vectors) = symmetric_eigen(b)?;
        Ok(Self {
            values,
            vectors,
            sqrt_w,
            trace,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn truncate(
        self,
        grid: &EvalGrid,
        rule: TruncationRule,
        diag: &mut Diagnostics,
    ) -> Result<EigenSystem> {
        let m = grid.len();
        let largest = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let cutoff = ZERO_EIGENVALUE_TOL * largest;
        let spectrum: Vec<f64> = self
            .values
            .iter()
            .copied()
            .take_while(|&v| v > cutoff)
            .collect();
        if spectrum.is_empty() {
            return Err(Error::DegenerateEigensystem);
        }
        let total: f64 = spectrum.iter().sum();
        let fve_all = cumulative(&spectrum, total);
        let reach = fve_all
            .iter()
            .position(|&f| f >= rule.fve_threshold - 1e-12)
            .map_or(spectrum.len(), |i| i + 1);
        let k = reach.min(rule.k_max).min(spectrum.len());

        for i in 0..k {
            if let Some(&next) = spectrum.get(i + 1) {
                let gap = spectrum[i] - next;
                if gap < TIE_TOL * spectrum[0] {
                    diag.push(Warning::NearTiedEigenvalues { index: i, gap });
                }
            }
        }

        let phis = (0..k)
            .map(|c| {
                let mut phi: Vec<f64> = (0..m)
                    .map(|r| self.vectors[(r, c)] / self.sqrt_w[r])
                    .collect();
                orient(&mut phi);
                phi
            })
            .collect();
        Ok(EigenSystem {
            grid: grid.clone(),
            lambdas: spectrum[..k].to_vec(),
            phis,
            dphis: None,
            fve: fve_all[..k].to_vec(),
            spectrum,
            trace: self.trace,
        })
    }
}

/// Eigen-decomposes a symmetric covariance surface under the grid's
/// quadrature weights and truncates by `rule`.
pub fn eigendecompose(
    cov: &DMatrix<f64>,
    grid: &EvalGrid,
    rule: TruncationRule,
    diag: &mut Diagnostics,
) -> Result<EigenSystem> {
    rule.validate()?;
    WeightedSpectrum::new(cov, grid)?.truncate(grid, rule, diag)
}

/// `φ_k'(t_m) = λ_k^{-1} Σ_j w_j Ĝ^{(1,0)}(t_m, t_j) φ_k(t_j)`.
pub fn eigenfunction_derivatives(dcov: &DMatrix<f64>, eig: &EigenSystem) -> Result<Vec<Vec<f64>>> {
    let grid = &eig.grid;
    let m = grid.len();
    if dcov.nrows() != m || dcov.ncols() != m {
        return Err(Error::LengthMismatch {
            what: "covariance derivative surface",
            expected: m,
            actual: dcov.nrows(),
        });
    }
    let w = grid.weights();
    Ok(eig
        .lambdas
        .iter()
        .zip(&eig.phis)
        .map(|(&lambda, phi)| {
            (0..m)
                .map(|i| (0..m).map(|j| dcov[(i, j)] * w[j] * phi[j]).sum::<f64>() / lambda)
                .collect()
        })
        .collect())
}

/// Decomposes `moments.cov` and attaches derivatives from `moments.dcov`.
pub fn decompose_moments(
    moments: &MomentEstimates,
    rule: TruncationRule,
    diag: &mut Diagnostics,
) -> Result<EigenSystem> {
    let eig = eigendecompose(&moments.cov, &moments.grid, rule, diag)?;
    let dphis = eigenfunction_derivatives(&moments.dcov, &eig)?;
    Ok(eig.with_derivatives(dphis))
}

/// Plug-in `Ĝ_K^{(1,1)}(t, s) = Σ_k λ_k φ_k'(t) φ_k'(s)`.
pub fn derivative_covariance(eig: &EigenSystem) -> Result<DMatrix<f64>> {
    let d = eig.derivatives()?;
    Ok(outer_sum(&eig.lambdas, d, d))
}

/// Eigen-decomposition of the derivative covariance `G^{(1,1)}`, giving the
/// Karhunen–Loève components of `X'` directly.
pub fn kl_of_derivative(
    g11: &DMatrix<f64>,
    grid: &EvalGrid,
    rule: TruncationRule,
    diag: &mut Diagnostics,
) -> Result<EigenSystem> {
    eigendecompose(g11, grid, rule, diag)
}
