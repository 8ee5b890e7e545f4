//! Pooled local polynomial estimation of the mean, the covariance surface,
//! their first derivatives, and the measurement-error variance.

mod bandwidth;
mod local;
mod scatter;

use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{EvalGrid, Interval, SparseDataset};
use crate::diagnostics::{Diagnostics, Stage, Warning};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::symmetrize;

pub use bandwidth::{bandwidth_candidates, select_bandwidths, CANDIDATE_COUNT, MIN_CV_SUBJECTS};
use local::{smooth_curve, smooth_surface, WideningLog};
use scatter::{Scatter1, Scatter2};

/// Ratio of derivative to level bandwidths.
pub const DERIVATIVE_BANDWIDTH_RATIO: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthMode {
    #[default]
    Fixed,
    CrossValidated,
}

/// Bandwidths in time units for the mean (`mu`) and covariance (`g`)
/// smoothers, level (`0`) and first derivative (`1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub h_mu0: f64,
    pub h_mu1: f64,
    pub h_g0: f64,
    pub h_g1: f64,
    pub kernel: KernelSpec,
    pub bandwidth_mode: BandwidthMode,
}

impl SmoothConfig {
    pub fn fixed(h_mu0: f64, h_mu1: f64, h_g0: f64, h_g1: f64) -> Self {
        Self {
            h_mu0,
            h_mu1,
            h_g0,
            h_g1,
            kernel: KernelSpec::default(),
            bandwidth_mode: BandwidthMode::Fixed,
        }
    }

    /// Level bandwidths `(b - a)/10`, derivative bandwidths 1.5 times larger.
    pub fn fallback(domain: Interval, kernel: KernelSpec) -> Self {
        let h = domain.length() / 10.0;
        Self {
            kernel,
            ..Self::fixed(
                h,
                DERIVATIVE_BANDWIDTH_RATIO * h,
                h,
                DERIVATIVE_BANDWIDTH_RATIO * h,
            )
        }
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn validate(&self, domain: Interval) -> Result<()> {
        let limit = domain.length();
        for (name, value) in [
            ("h_mu0", self.h_mu0),
            ("h_mu1", self.h_mu1),
            ("h_g0", self.h_g0),
            ("h_g1", self.h_g1),
        ] {
            if !(value > 0.0 && value < limit) {
                return Err(Error::InvalidBandwidth { name, value, limit });
            }
        }
        Ok(())
    }

    fn mean_bandwidth(&self, deriv: usize) -> f64 {
        if deriv == 0 {
            self.h_mu0
        } else {
            self.h_mu1
        }
    }

    fn cov_bandwidth(&self, deriv: usize) -> f64 {
        if deriv == 0 {
            self.h_g0
        } else {
            self.h_g1
        }
    }
}

/// Smoothed first and second moments on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub grid: EvalGrid,
    pub mu: Vec<f64>,
    pub dmu: Vec<f64>,
    /// Ĝ(t, s), symmetrized; rows index `t`.
    pub cov: DMatrix<f64>,
    /// Ĝ^{(1,0)}(t, s) = ∂Ĝ/∂t; rows index `t`.
    pub dcov: DMatrix<f64>,
    pub sigma2: f64,
}

fn check_deriv(deriv: usize) -> Result<()> {
    if deriv > 1 {
        return Err(Error::InvalidConfig(alloc::format!(
            "derivative order {deriv} not supported"
        )));
    }
    Ok(())
}

/// μ̂ (deriv 0) or μ̂′ (deriv 1) on the grid from the pooled scatterplot.
pub fn smooth_mean(
    data: &SparseDataset,
    grid: &EvalGrid,
    cfg: &SmoothConfig,
    deriv: usize,
    diag: &mut Diagnostics,
) -> Result<Vec<f64>> {
    check_deriv(deriv)?;
    let sc = pooled_scatter(data);
    let mut log = WideningLog::default();
    let out = smooth_curve(
        &sc,
        cfg.kernel,
        grid.points(),
        cfg.mean_bandwidth(deriv),
        deriv,
        &mut log,
    )?;
    log.flush(
        if deriv == 0 {
            Stage::Mean
        } else {
            Stage::MeanDerivative
        },
        diag,
    );
    Ok(out)
}

pub(crate) fn pooled_scatter(data: &SparseDataset) -> Scatter1 {
    Scatter1::from_pairs(
        data.subjects()
            .iter()
            .flat_map(|s| s.times.iter().copied().zip(s.values.iter().copied()))
            .collect(),
    )
}

/// Deviations `Y_ij - μ̂(T_ij)` with μ̂ linearly interpolated from the grid.
pub fn residuals(data: &SparseDataset, grid: &EvalGrid, mu_hat: &[f64]) -> Vec<Vec<f64>> {
    data.subjects()
        .iter()
        .map(|s| {
            s.times
                .iter()
                .zip(&s.values)
                .map(|(&t, &y)| y - grid.interpolate(mu_hat, t))
                .collect()
        })
        .collect()
}

/// Ĝ (deriv 0, symmetrized) or Ĝ^{(1,0)} (deriv 1) with the diagonal
/// `j = l` products excluded.
pub fn smooth_cov(
    data: &SparseDataset,
    grid: &EvalGrid,
    cfg: &SmoothConfig,
    mu_hat: &[f64],
    deriv: usize,
    diag: &mut Diagnostics,
) -> Result<DMatrix<f64>> {
    smooth_cov_with(data, grid, cfg, mu_hat, deriv, false, diag)
}

/// As [`smooth_cov`], optionally keeping the diagonal products. Including
/// them biases the surface diagonal upward by the error variance; the
/// switch exists for comparison only.
pub fn smooth_cov_with(
    data: &SparseDataset,
    grid: &EvalGrid,
    cfg: &SmoothConfig,
    mu_hat: &[f64],
    deriv: usize,
    include_diagonal: bool,
    diag: &mut Diagnostics,
) -> Result<DMatrix<f64>> {
    check_deriv(deriv)?;
    grid.check_len("mean estimate", mu_hat.len())?;
    let resid = residuals(data, grid, mu_hat);
    let sc = Scatter2::from_residuals(
        data.subjects()
            .iter()
            .zip(&resid)
            .map(|(s, r)| (s.times.as_slice(), r.as_slice())),
        include_diagonal,
    );
    if sc.is_empty() {
        return Err(Error::NoPairedSubject);
    }
    let m = grid.len();
    let mut log = WideningLog::default();
    let values = smooth_surface(
        &sc,
        cfg.kernel,
        grid.points(),
        cfg.cov_bandwidth(deriv),
        deriv,
        &mut log,
    )?;
    log.flush(
        if deriv == 0 {
            Stage::Covariance
        } else {
            Stage::CovarianceDerivative
        },
        diag,
    );
    let mut out = DMatrix::from_row_slice(m, m, &values);
    if deriv == 0 {
        symmetrize(&mut out);
    }
    Ok(out)
}

/// Error variance from the gap between a smoother of the diagonal products
/// `(Y_ij - μ̂(T_ij))²` and the diagonal of Ĝ, averaged over the central
/// half of the domain and clamped at zero.
pub fn estimate_sigma2(
    data: &SparseDataset,
    grid: &EvalGrid,
    cfg: &SmoothConfig,
    mu_hat: &[f64],
    cov: &DMatrix<f64>,
    diag: &mut Diagnostics,
) -> Result<f64> {
    grid.check_len("mean estimate", mu_hat.len())?;
    grid.check_len("covariance estimate", cov.nrows())?;
    let resid = residuals(data, grid, mu_hat);
    let sc = Scatter1::from_pairs(
        data.subjects()
            .iter()
            .zip(&resid)
            .flat_map(|(s, r)| s.times.iter().zip(r).map(|(&t, &e)| (t, e * e)))
            .collect(),
    );
    let mut log = WideningLog::default();
    let diag_smooth = smooth_curve(&sc, cfg.kernel, grid.points(), cfg.h_g0, 0, &mut log)?;
    log.flush(Stage::DiagonalVariance, diag);

    let central = grid.domain().central(0.5);
    let (sum, count) = grid
        .indices_within(central)
        .fold((0.0, 0usize), |(s, c), i| {
            (s + diag_smooth[i] - cov[(i, i)], c + 1)
        });
    let raw = if count > 0 { sum / count as f64 } else { 0.0 };
    if raw < 0.0 {
        diag.push(Warning::Sigma2Clamped { raw });
        return Ok(0.0);
    }
    Ok(raw)
}

/// Runs the four smoothers and the error-variance step with fixed bandwidths.
pub fn estimate_moments(
    data: &SparseDataset,
    grid: &EvalGrid,
    cfg: &SmoothConfig,
    diag: &mut Diagnostics,
) -> Result<MomentEstimates> {
    cfg.validate(grid.domain())?;
    let mu = smooth_mean(data, grid, cfg, 0, diag)?;
    let dmu = smooth_mean(data, grid, cfg, 1, diag)?;
    let cov = smooth_cov(data, grid, cfg, &mu, 0, diag)?;
    let dcov = smooth_cov(data, grid, cfg, &mu, 1, diag)?;
    let sigma2 = estimate_sigma2(data, grid, cfg, &mu, &cov, diag)?;
    Ok(MomentEstimates {
        grid: grid.clone(),
        mu,
        dmu,
        cov,
        dcov,
        sigma2,
    })
}
