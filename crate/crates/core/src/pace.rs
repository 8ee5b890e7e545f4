//! Principal analysis by conditional expectation: per-subject scores and
//! fitted trajectories, derivatives and drift paths.

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SubjectRecord;
use crate::eigenbasis::EigenSystem;
use crate::error::{Error, Result};
use crate::smoothing::MomentEstimates;

/// Diagonal of the triangular factor, relative to the largest column norm,
/// under which the score system counts as singular.
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaceOptions {
    /// Add `1e-8·trace(Ĝ)/M` to the error variance when σ̂² = 0.
    pub sigma_floor: bool,
}

impl Default for PaceOptions {
    fn default() -> Self {
        Self { sigma_floor: true }
    }
}

/// Error variance used in the conditioning matrix.
pub fn effective_sigma2(moments: &MomentEstimates, opts: PaceOptions) -> f64 {
    if moments.sigma2 > 0.0 || !opts.sigma_floor {
        return moments.sigma2.max(0.0);
    }
    let m = moments.cov.nrows();
    let trace: f64 = (0..m).map(|i| moments.cov[(i, i)]).sum();
    1e-8 * trace / m as f64
}

/// `E(ξ_k | Y_i) = λ_k φ_ikᵀ Σ_{Y_i}^{-1} (Y_i - μ_i)` for `k ≤ K`.
///
/// Evaluated as the equivalent ridge problem
/// `min ‖Φξ - (Y - μ)‖² + σ² Σ ξ_k²/λ_k`, solved by QR of the stacked
/// matrix `[Φ; σΛ^{-1/2}]`. That stays well posed when σ² = 0 and the
/// subject has at least `K` informative observations, and avoids squaring
/// the condition number of `Φ`.
pub fn conditional_scores(
    subject: &SubjectRecord,
    moments: &MomentEstimates,
    eig: &EigenSystem,
    opts: PaceOptions,
) -> Result<Vec<f64>> {
    let grid = &eig.grid;
    let k = eig.k();
    let n = subject.len();
    let sigma = libm::sqrt(effective_sigma2(moments, opts));
    let a = DMatrix::from_fn(n + k, k, |r, c| {
        if r < n {
            grid.interpolate(&eig.phis[c], subject.times[r])
        } else if r - n == c {
            sigma / libm::sqrt(eig.lambdas[c])
        } else {
            0.0
        }
    });
    let b = DVector::from_fn(n + k, |r, _| {
        if r < n {
            subject.values[r] - moments.grid.interpolate(&moments.mu, subject.times[r])
        } else {
            0.0
        }
    });
    let singular = || Error::SingularConditioning {
        subject: subject.id.clone(),
    };
    let scale = a.column_iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if !(scale > 0.0) {
        return Err(singular());
    }
    let qr = a.qr();
    let r = qr.r();
    if (0..k).any(|c| r[(c, c)].abs() < SINGULAR_TOL * scale) {
        return Err(singular());
    }
    let rhs = qr.q().transpose() * b;
    r.solve_upper_triangular(&rhs.rows(0, k).into_owned())
        .map(|x| x.iter().copied().collect())
        .ok_or_else(singular)
}

/// Scores and fitted curves for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFit {
    pub id: String,
    pub scores: Vec<f64>,
    pub xhat: Vec<f64>,
    pub dxhat: Vec<f64>,
    pub zhat: Vec<f64>,
}

/// Scores, `X̂_i`, `X̂_i'` and `Ẑ_i = X̂_i' - μ̂' - β̂(X̂_i - μ̂)` on the grid.
pub fn fit_subject(
    subject: &SubjectRecord,
    moments: &MomentEstimates,
    eig: &EigenSystem,
    beta: &[f64],
    opts: PaceOptions,
) -> Result<SubjectFit> {
    let dphis = eig.derivatives()?;
    let m = eig.grid.len();
    eig.grid.check_len("mean estimate", moments.mu.len())?;
    eig.grid.check_len("beta", beta.len())?;
    let scores = conditional_scores(subject, moments, eig, opts)?;
    let mut xhat = moments.mu.clone();
    let mut dxhat = moments.dmu.clone();
    for ((xi, phi), dphi) in scores.iter().zip(&eig.phis).zip(dphis) {
        for i in 0..m {
            xhat[i] += xi * phi[i];
            dxhat[i] += xi * dphi[i];
        }
    }
    let zhat = (0..m)
        .map(|i| dxhat[i] - moments.dmu[i] - beta[i] * (xhat[i] - moments.mu[i]))
        .collect();
    Ok(SubjectFit {
        id: subject.id.clone(),
        scores,
        xhat,
        dxhat,
        zhat,
    })
}

/// Quadrature projections `∫ Ẑ_i ψ_k` of every fitted drift path, one row
/// per subject.
pub fn drift_scores(fits: &[SubjectFit], drift_eig: &EigenSystem) -> Vec<Vec<f64>> {
    fits.iter()
        .map(|f| {
            drift_eig
                .phis
                .iter()
                .map(|psi| drift_eig.grid.inner(&f.zhat, psi))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSubject {
    pub id: String,
    pub score: f64,
}

/// Subjects with the largest absolute drift scores, per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentExtremes {
    /// One-based component index.
    pub component: usize,
    pub eigenvalue: f64,
    pub subjects: Vec<RankedSubject>,
}

pub fn drift_score_extremes(
    fits: &[SubjectFit],
    drift_eig: &EigenSystem,
    top: usize,
) -> Vec<ComponentExtremes> {
    let scores = drift_scores(fits, drift_eig);
    (0..drift_eig.k())
        .map(|c| {
            let mut order: Vec<usize> = (0..fits.len()).collect();
            order.sort_by(|&a, &b| scores[b][c].abs().total_cmp(&scores[a][c].abs()));
            ComponentExtremes {
                component: c + 1,
                eigenvalue: drift_eig.lambdas[c],
                subjects: order
                    .into_iter()
                    .take(top)
                    .map(|i| RankedSubject {
                        id: fits[i].id.clone(),
                        score: scores[i][c],
                    })
                    .collect(),
            }
        })
        .collect()
}
