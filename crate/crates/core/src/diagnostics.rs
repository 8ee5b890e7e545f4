//! Non-fatal events recorded while estimating.
//!
//! The core crate has no logger; every operation that can degrade silently
//! (window widening, variance floors, clamping) pushes a [`Warning`] into a
//! [`Diagnostics`] sink that callers serialize alongside their results.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mean,
    MeanDerivative,
    Covariance,
    CovarianceDerivative,
    DiagonalVariance,
    Beta,
    R2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Local windows had to be widened at `points` evaluation points.
    WindowWidened {
        stage: Stage,
        points: usize,
        max_bandwidth: f64,
    },
    /// Bandwidth selection could not run and fixed defaults were used.
    BandwidthFallback { reason: String },
    /// The raw error-variance estimate was negative and clamped to zero.
    Sigma2Clamped { raw: f64 },
    /// Adjacent eigenvalues closer than the multiplicity tolerance.
    NearTiedEigenvalues { index: usize, gap: f64 },
    /// A variance denominator was floored at `count` grid points.
    VarianceFloored {
        stage: Stage,
        count: usize,
        floor: f64,
    },
    /// `count` values of R² fell outside [0, 1] and were clipped.
    R2Clipped { count: usize },
    /// Rows outside an explicit domain were dropped at ingestion.
    RowsDropped { count: usize },
    /// A subject could not be fitted.
    SubjectFailed { subject: String, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Diagnostics {
    warnings: Vec<Warning>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, warning: Warning) {
        self.warnings.push(warning);
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.warnings.extend(other.warnings);
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn is_empty(&self) -> bool {
        self.warnings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.warnings.len()
    }
}
