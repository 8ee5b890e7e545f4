//! Closed-form truth for the cosine-basis processes, computed by direct
//! summation rather than through the estimation code.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::{sin_cos_turns, LambdaRule, TruthSpec};
use crate::dataset::EvalGrid;
use crate::diagnostics::Diagnostics;
use crate::dynamics::{drift_eigen, DynamicsEstimate, FloorCounts, DEFAULT_FLOOR_FRAC, NULL_DRIFT_TOLERANCE};
use crate::eigenbasis::{EigenSystem, TruncationRule};
use crate::error::{Error, Result};
use crate::smoothing::MomentEstimates;

/// Series length for [`analytic_r2`]; both standard eigenvalue rules have
/// tails below 1e-12 past this point.
pub const DEFAULT_ORACLE_TERMS: usize = 200;

/// `R²(t) = (Σλ_k k c_k s_k)² / (Σλ_k c_k² · Σλ_k k² s_k²)` with
/// `c_k, s_k = cos, sin(2kπ(t - a)/L)`; zero where the denominator vanishes.
pub fn analytic_r2(rule: &LambdaRule, terms: usize, grid: &EvalGrid) -> Result<Vec<f64>> {
    if terms == 0 {
        return Err(Error::InvalidConfig("at least one series term is required".into()));
    }
    let lambdas = rule.lambdas(terms);
    let d = grid.domain();
    Ok(grid
        .points()
        .iter()
        .map(|&t| {
            let x = (t - d.lower) / d.length();
            let (mut num, mut cc, mut ss) = (0.0, 0.0, 0.0);
            for (j, &l) in lambdas.iter().enumerate() {
                let k = (j + 1) as f64;
                let (s, c) = sin_cos_turns(k * x);
                num += l * k * c * s;
                cc += l * c * c;
                ss += l * k * k * s * s;
            }
            let den = cc * ss;
            if den > 0.0 {
                (num * num / den).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect())
}

/// The spec's eigensystem tabulated on `grid`, derivatives included.
pub fn true_eigensystem(spec: &TruthSpec, grid: &EvalGrid) -> Result<EigenSystem> {
    spec.validate()?;
    let p = spec.process();
    let t = grid.points();
    let k = spec.lambdas.len();
    let phis = (1..=k).map(|j| t.iter().map(|&x| p.phi(j, x)).collect()).collect();
    let dphis = (1..=k).map(|j| t.iter().map(|&x| p.dphi(j, x)).collect()).collect();
    EigenSystem::from_components(grid.clone(), spec.lambdas.clone(), phis, Some(dphis))
}

/// Exact μ, μ', G, ∂G/∂t and σ² on `grid`.
pub fn true_moments(spec: &TruthSpec, grid: &EvalGrid) -> Result<MomentEstimates> {
    spec.validate()?;
    let p = spec.process();
    let t = grid.points();
    let m = t.len();
    let cov = DMatrix::from_fn(m, m, |i, j| {
        spec.lambdas
            .iter()
            .enumerate()
            .map(|(k, l)| l * p.phi(k + 1, t[i]) * p.phi(k + 1, t[j]))
            .sum()
    });
    let dcov = DMatrix::from_fn(m, m, |i, j| {
        spec.lambdas
            .iter()
            .enumerate()
            .map(|(k, l)| l * p.dphi(k + 1, t[i]) * p.phi(k + 1, t[j]))
            .sum()
    });
    Ok(MomentEstimates {
        grid: grid.clone(),
        mu: t.iter().map(|&x| p.mean(x)).collect(),
        dmu: t.iter().map(|&x| p.mean_derivative(x)).collect(),
        cov,
        dcov,
        sigma2: spec.sigma2,
    })
}

fn floor_of(values: &[f64], floor_frac: f64) -> f64 {
    floor_frac * values.iter().cloned().fold(0.0, f64::max)
}

/// True β, V, R² and G_z, with the same variance floors, nulling rule and
/// drift truncation as [`DynamicsEstimate::estimate`] at its defaults.
pub fn analytic_dynamics(spec: &TruthSpec, grid: &EvalGrid) -> Result<DynamicsEstimate> {
    analytic_dynamics_with(spec, grid, DEFAULT_FLOOR_FRAC, TruncationRule::default())
}

pub fn analytic_dynamics_with(
    spec: &TruthSpec,
    grid: &EvalGrid,
    floor_frac: f64,
    drift_rule: TruncationRule,
) -> Result<DynamicsEstimate> {
    spec.validate()?;
    let p = spec.process();
    let t = grid.points();
    let m = t.len();
    let var_x: Vec<f64> = t.iter().map(|&x| p.var_x(x)).collect();
    let var_dx: Vec<f64> = t.iter().map(|&x| p.var_dx(x)).collect();
    let cov_xdx: Vec<f64> = t.iter().map(|&x| p.cov_xdx(x)).collect();
    let fx = floor_of(&var_x, floor_frac);
    let fd = floor_of(&var_dx, floor_frac);

    let mut beta = Vec::with_capacity(m);
    let mut v = Vec::with_capacity(m);
    let mut r2 = Vec::with_capacity(m);
    let mut floored = Vec::with_capacity(m);
    let mut floors = FloorCounts::default();
    for i in 0..m {
        let (x, d, c) = (var_x[i], var_dx[i], cov_xdx[i]);
        floors.var_x += usize::from(x < fx);
        floors.var_dx += usize::from(d < fd);
        floored.push(x < fx || d < fd);
        let xf = x.max(fx);
        let df = d.max(fd);
        let b = c / xf;
        beta.push(b);
        v.push((d - b * c).max(0.0));
        let ratio = c * c / (xf * df);
        r2.push(if ratio.is_finite() { ratio.clamp(0.0, 1.0) } else { 0.0 });
    }

    let drift: Vec<Vec<f64>> = (1..=spec.lambdas.len())
        .map(|k| (0..m).map(|i| p.dphi(k, t[i]) - beta[i] * p.phi(k, t[i])).collect())
        .collect();
    let mut gz: DMatrix<f64> = DMatrix::from_fn(m, m, |i, j| {
        spec.lambdas
            .iter()
            .zip(&drift)
            .map(|(l, z)| l * (z[i] * z[j]))
            .sum::<f64>()
    });
    let scale = var_dx.iter().cloned().fold(0.0, f64::max);
    let mut live: f64 = 0.0;
    for i in (0..m).filter(|&i| !floored[i]) {
        for j in (0..m).filter(|&j| !floored[j]) {
            live = live.max(gz[(i, j)].abs());
        }
    }
    if live <= NULL_DRIFT_TOLERANCE * scale {
        gz.fill(0.0);
    }
    let drift_eig = match drift_eigen(&gz, grid, drift_rule, &mut Diagnostics::new()) {
        Ok(e) => Some(e),
        Err(Error::DegenerateEigensystem) => None,
        Err(e) => return Err(e),
    };
    Ok(DynamicsEstimate {
        grid: grid.clone(),
        beta,
        var_x,
        var_dx,
        cov_xdx,
        v,
        r2,
        gz,
        drift_eig,
        floored,
        floors,
    })
}
