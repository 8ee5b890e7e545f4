//! The empirical first-order stochastic differential equation
//! `X'(t) - μ'(t) = β(t){X(t) - μ(t)} + Z(t)` assembled from an eigensystem.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::EvalGrid;
use crate::diagnostics::{Diagnostics, Stage, Warning};
use crate::eigenbasis::{outer_sum, EigenSystem, TruncationRule, WeightedSpectrum};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Variance denominators are floored at this fraction of their maximum.
pub const DEFAULT_FLOOR_FRAC: f64 = 1e-6;
/// Negative drift-covariance eigenvalues are tolerated down to this
/// fraction of the quadrature trace.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// A drift covariance whose entries are all below this fraction of the
/// largest derivative variance is treated as identically zero.
pub const NULL_DRIFT_TOLERANCE: f64 = 1e-10;

/// Pointwise truncated sums `Σλφ²`, `Σλ(φ')²` and `Σλφ'φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSums {
    pub var_x: Vec<f64>,
    pub var_dx: Vec<f64>,
    pub cov_xdx: Vec<f64>,
}

impl VarianceSums {
    pub fn from_eigensystem(eig: &EigenSystem) -> Result<Self> {
        let d = eig.derivatives()?;
        let m = eig.grid.len();
        let mut var_x = alloc::vec![0.0; m];
        let mut var_dx = alloc::vec![0.0; m];
        let mut cov_xdx = alloc::vec![0.0; m];
        for ((&l, phi), dphi) in eig.lambdas.iter().zip(&eig.phis).zip(d) {
            for i in 0..m {
                var_x[i] += l * phi[i] * phi[i];
                var_dx[i] += l * dphi[i] * dphi[i];
                cov_xdx[i] += l * dphi[i] * phi[i];
            }
        }
        Ok(Self {
            var_x,
            var_dx,
            cov_xdx,
        })
    }
}

/// `max(v, floor_frac · max v)`, plus a mask of floored points.
fn floored(values: &[f64], floor_frac: f64) -> (Vec<f64>, Vec<bool>, f64) {
    let peak = values.iter().fold(0.0f64, |a, &v| a.max(v));
    let floor = floor_frac * peak;
    let mask: Vec<bool> = values.iter().map(|&v| v < floor).collect();
    let out = values.iter().map(|&v| v.max(floor)).collect();
    (out, mask, floor)
}

fn check_floor_frac(floor_frac: f64) -> Result<()> {
    if !(floor_frac > 0.0 && floor_frac < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "variance floor fraction {floor_frac} outside (0, 1)"
        )));
    }
    Ok(())
}

/// `β̂(t) = Σλφ'φ / Σλφ²` with the denominator floored.
pub fn compute_beta(eig: &EigenSystem, floor_frac: f64, diag: &mut Diagnostics) -> Result<Vec<f64>> {
    check_floor_frac(floor_frac)?;
    let sums = VarianceSums::from_eigensystem(eig)?;
    beta_from_sums(&sums, floor_frac, diag).map(|(b, _)| b)
}

fn beta_from_sums(
    sums: &VarianceSums,
    floor_frac: f64,
    diag: &mut Diagnostics,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if sums.var_x.iter().all(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateVariance);
    }
    let (vx, mask, floor) = floored(&sums.var_x, floor_frac);
    let count = mask.iter().filter(|&&f| f).count();
    if count > 0 {
        diag.push(Warning::VarianceFloored {
            stage: Stage::Beta,
            count,
            floor,
        });
    }
    let beta = sums.cov_xdx.iter().zip(&vx).map(|(c, v)| c / v).collect();
    Ok((beta, mask))
}

/// `V̂(t) = (Σλ(φ')² Σλφ² - (Σλφ'φ)²) / Σλφ²`, floored denominator,
/// clamped at zero.
fn drift_variance(sums: &VarianceSums, floor_frac: f64) -> Vec<f64> {
    let (vx, _, _) = floored(&sums.var_x, floor_frac);
    sums.var_dx
        .iter()
        .zip(&sums.cov_xdx)
        .zip(&vx)
        .map(|((&d, &c), &v)| ((d * v - c * c) / v).max(0.0))
        .collect()
}

/// Four-term drift covariance
/// `G_z(t,s) = ΣλΦ'Φ' - β(t)ΣλΦ(t)Φ'(s) - β(s)ΣλΦ'(t)Φ(s) + β(t)β(s)ΣλΦΦ`.
pub fn compute_drift_covariance(eig: &EigenSystem, beta: &[f64]) -> Result<DMatrix<f64>> {
    let d = eig.derivatives()?;
    eig.grid.check_len("beta", beta.len())?;
    let g11 = outer_sum(&eig.lambdas, d, d);
    let g01 = outer_sum(&eig.lambdas, &eig.phis, d);
    let g10 = outer_sum(&eig.lambdas, d, &eig.phis);
    let g00 = outer_sum(&eig.lambdas, &eig.phis, &eig.phis);
    let m = eig.grid.len();
    let mut gz = DMatrix::from_fn(m, m, |i, j| {
        g11[(i, j)] - beta[i] * g01[(i, j)] - beta[j] * g10[(i, j)]
            + beta[i] * beta[j] * g00[(i, j)]
    });
    symmetrize(&mut gz);
    Ok(gz)
}

/// `R̂²(t) = (Σλφ'φ)² / (Σλφ² · Σλ(φ')²)` with both denominators floored,
/// clipped to [0, 1].
pub fn compute_r2(eig: &EigenSystem, floor_frac: f64, diag: &mut Diagnostics) -> Result<Vec<f64>> {
    check_floor_frac(floor_frac)?;
    let sums = VarianceSums::from_eigensystem(eig)?;
    Ok(r2_from_sums(&sums, floor_frac, diag))
}

fn r2_from_sums(sums: &VarianceSums, floor_frac: f64, diag: &mut Diagnostics) -> Vec<f64> {
    let (vx, mx, _) = floored(&sums.var_x, floor_frac);
    let (vd, md, floor_d) = floored(&sums.var_dx, floor_frac);
    let count = mx.iter().zip(&md).filter(|(a, b)| **a || **b).count();
    if count > 0 {
        diag.push(Warning::VarianceFloored {
            stage: Stage::R2,
            count,
            floor: floor_d,
        });
    }
    let mut clipped = 0;
    let r2 = sums
        .cov_xdx
        .iter()
        .zip(vx.iter().zip(&vd))
        .map(|(&c, (&x, &d))| {
            let raw = c * c / (x * d);
            if !raw.is_finite() {
                // Both variances identically zero: no derivative variation.
                return 0.0;
            }
            if !(0.0..=1.0).contains(&raw) {
                clipped += 1;
            }
            raw.clamp(0.0, 1.0)
        })
        .collect();
    if clipped > 0 {
        diag.push(Warning::R2Clipped { count: clipped });
    }
    r2
}

/// Eigenpairs `(ρ_k, ψ_k)` of the drift covariance.
///
/// Fails with [`Error::DegenerateEigensystem`] when the drift vanishes and
/// with [`Error::IndefiniteDriftCovariance`] when an eigenvalue falls below
/// `-PSD_TOLERANCE · trace`.
pub fn drift_eigen(
    gz: &DMatrix<f64>,
    grid: &EvalGrid,
    rule: TruncationRule,
    diag: &mut Diagnostics,
) -> Result<EigenSystem> {
    rule.validate()?;
    let spec = WeightedSpectrum::new(gz, grid)?;
    let tolerance = PSD_TOLERANCE * spec.trace().abs();
    let min = spec.values().last().copied().unwrap_or(0.0);
    if spec.values().first().is_some_and(|&v| v > 0.0) && min < -tolerance {
        return Err(Error::IndefiniteDriftCovariance {
            min_eigenvalue: min,
            tolerance,
        });
    }
    spec.truncate(grid, rule, diag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// β < 0 throughout: deviations from the mean shrink.
    RegressionToMean,
    /// β > 0 throughout: deviations from the mean grow.
    Explosive,
    Mixed,
}

/// Maximal run of grid points with R̂² at or above a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    pub start: f64,
    pub end: f64,
    pub first_index: usize,
    pub last_index: usize,
    pub regime: Regime,
    pub min_r2: f64,
}

/// Per-run counts of variance floors and clipping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FloorCounts {
    pub var_x: usize,
    pub var_dx: usize,
}

/// Largest deviations from the algebraic identities of the decomposition,
/// over grid points where no variance floor was active.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `|varDX - (β² varX + V)|`
    pub decomposition: f64,
    /// `|G_z(t,t) - V(t)|`
    pub drift_diagonal: f64,
    /// `|Σλφ'φ - β varX|`, the plug-in `cov(Z(t), X(t))`.
    pub orthogonality: f64,
    /// `|R² - (1 - V/varDX)|`
    pub r2_forms: f64,
}

impl IdentityCheck {
    pub fn max(&self) -> f64 {
        self.decomposition
            .max(self.drift_diagonal)
            .max(self.orthogonality)
            .max(self.r2_forms)
    }
}

/// Estimated dynamics on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsEstimate {
    pub grid: EvalGrid,
    pub beta: Vec<f64>,
    pub var_x: Vec<f64>,
    pub var_dx: Vec<f64>,
    pub cov_xdx: Vec<f64>,
    /// Drift variance `V(t) = var Z(t)`.
    pub v: Vec<f64>,
    pub r2: Vec<f64>,
    pub gz: DMatrix<f64>,
    /// `None` when the drift covariance is null.
    pub drift_eig: Option<EigenSystem>,
    /// Grid points where `varX` or `varDX` was floored.
    pub floored: Vec<bool>,
    pub floors: FloorCounts,
}

impl DynamicsEstimate {
    /// Assembles β̂, V̂, R̂², Ĝ_z and the drift eigensystem from an
    /// eigensystem carrying derivatives.
    pub fn estimate(
        eig: &EigenSystem,
        floor_frac: f64,
        drift_rule: TruncationRule,
        diag: &mut Diagnostics,
    ) -> Result<Self> {
        check_floor_frac(floor_frac)?;
        let sums = VarianceSums::from_eigensystem(eig)?;
        let (beta, mask_x) = beta_from_sums(&sums, floor_frac, diag)?;
        let (_, mask_d, _) = floored(&sums.var_dx, floor_frac);
        let r2 = r2_from_sums(&sums, floor_frac, diag);
        let v = drift_variance(&sums, floor_frac);
        let mut gz = compute_drift_covariance(eig, &beta)?;
        let floored: Vec<bool> = mask_x.iter().zip(&mask_d).map(|(a, b)| *a || *b).collect();

        // Floored points carry no usable β, so they do not count against a
        // null drift.
        let scale = sums.var_dx.iter().fold(0.0f64, |a, &v| a.max(v));
        let mut live = 0.0f64;
        for i in (0..gz.nrows()).filter(|&i| !floored[i]) {
            for j in (0..gz.ncols()).filter(|&j| !floored[j]) {
                live = live.max(gz[(i, j)].abs());
            }
        }
        if live <= NULL_DRIFT_TOLERANCE * scale {
            gz.fill(0.0);
        }
        let drift_eig = match drift_eigen(&gz, &eig.grid, drift_rule, diag) {
            Ok(e) => Some(e),
            Err(Error::DegenerateEigensystem) => None,
            Err(e) => return Err(e),
        };
        let floors = FloorCounts {
            var_x: mask_x.iter().filter(|&&f| f).count(),
            var_dx: mask_d.iter().filter(|&&f| f).count(),
        };
        Ok(Self {
            grid: eig.grid.clone(),
            beta,
            var_x: sums.var_x,
            var_dx: sums.var_dx,
            cov_xdx: sums.cov_xdx,
            v,
            r2,
            gz,
            drift_eig,
            floored,
            floors,
        })
    }

    pub fn identities(&self) -> IdentityCheck {
        let mut out = IdentityCheck::default();
        for i in 0..self.grid.len() {
            if self.floored[i] {
                continue;
            }
            let b = self.beta[i];
            out.decomposition = out
                .decomposition
                .max((self.var_dx[i] - (b * b * self.var_x[i] + self.v[i])).abs());
            out.drift_diagonal = out.drift_diagonal.max((self.gz[(i, i)] - self.v[i]).abs());
            out.orthogonality = out
                .orthogonality
                .max((self.cov_xdx[i] - b * self.var_x[i]).abs());
            out.r2_forms = out
                .r2_forms
                .max((self.r2[i] - (1.0 - self.v[i] / self.var_dx[i])).abs());
        }
        out
    }

    /// Maximal grid-aligned intervals where R̂² ≥ `threshold`, labelled by
    /// the sign of β̂ within them.
    pub fn subdomains(&self, threshold: f64) -> Result<Vec<Subdomain>> {
        subdomain_report(self, threshold)
    }
}

pub fn subdomain_report(dynamics: &DynamicsEstimate, threshold: f64) -> Result<Vec<Subdomain>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "R² threshold {threshold} outside (0, 1]"
        )));
    }
    let t = dynamics.grid.points();
    let mut out = Vec::new();
    let mut i = 0;
    let m = t.len();
    while i < m {
        if dynamics.r2[i] < threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < m && dynamics.r2[i] >= threshold {
            i += 1;
        }
        let last = i - 1;
        let betas = &dynamics.beta[start..=last];
        let regime = if betas.iter().all(|&b| b < 0.0) {
            Regime::RegressionToMean
        } else if betas.iter().all(|&b| b > 0.0) {
            Regime::Explosive
        } else {
            Regime::Mixed
        };
        out.push(Subdomain {
            start: t[start],
            end: t[last],
            first_index: start,
            last_index: last,
            regime,
            min_r2: dynamics.r2[start..=last]
                .iter()
                .fold(f64::INFINITY, |a, &v| a.min(v)),
        });
    }
    Ok(out)
}
