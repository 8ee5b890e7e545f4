//! Forward solution of `x' = μ' + β(x - μ) + z` by classical RK4.

use alloc::vec::Vec;

use super::TrueProcess;
use crate::dataset::EvalGrid;
use crate::error::{Error, Result};

/// Time-varying coefficients of the linear dynamics.
pub trait DriftCoefficients {
    fn beta(&self, t: f64) -> f64;
    fn drift(&self, t: f64) -> f64;
    fn mean(&self, t: f64) -> f64;
    fn mean_derivative(&self, t: f64) -> f64;
}

/// Grid functions, linearly interpolated between nodes.
#[derive(Debug, Clone, Copy)]
pub struct GridCoefficients<'a> {
    pub grid: &'a EvalGrid,
    pub beta: &'a [f64],
    pub drift: &'a [f64],
    pub mean: &'a [f64],
    pub mean_derivative: &'a [f64],
}

impl DriftCoefficients for GridCoefficients<'_> {
    fn beta(&self, t: f64) -> f64 {
        self.grid.interpolate(self.beta, t)
    }
    fn drift(&self, t: f64) -> f64 {
        self.grid.interpolate(self.drift, t)
    }
    fn mean(&self, t: f64) -> f64 {
        self.grid.interpolate(self.mean, t)
    }
    fn mean_derivative(&self, t: f64) -> f64 {
        self.grid.interpolate(self.mean_derivative, t)
    }
}

/// Exact coefficients of one simulated path: the true β and the drift
/// `z = X' - μ' - β(X - μ)` evaluated in closed form.
#[derive(Debug, Clone, Copy)]
pub struct PathCoefficients<'a> {
    pub process: TrueProcess<'a>,
    pub scores: &'a [f64],
}

impl DriftCoefficients for PathCoefficients<'_> {
    fn beta(&self, t: f64) -> f64 {
        self.process.beta(t)
    }
    fn drift(&self, t: f64) -> f64 {
        let p = &self.process;
        p.path_derivative(self.scores, t)
            - p.mean_derivative(t)
            - p.beta(t) * (p.path(self.scores, t) - p.mean(t))
    }
    fn mean(&self, t: f64) -> f64 {
        self.process.mean(t)
    }
    fn mean_derivative(&self, t: f64) -> f64 {
        self.process.mean_derivative(t)
    }
}

/// Integrates from `x(a) = x0` with grid-tabulated coefficients.
pub fn integrate_forward(
    x0: f64,
    beta: &[f64],
    drift: &[f64],
    mean: &[f64],
    mean_derivative: &[f64],
    grid: &EvalGrid,
    steps_per_cell: usize,
) -> Result<Vec<f64>> {
    for (what, f) in [
        ("beta", beta),
        ("drift", drift),
        ("mean", mean),
        ("mean derivative", mean_derivative),
    ] {
        grid.check_len(what, f.len())?;
    }
    let coeffs = GridCoefficients {
        grid,
        beta,
        drift,
        mean,
        mean_derivative,
    };
    integrate_forward_with(x0, &coeffs, grid, steps_per_cell)
}

/// Integrates from `x(a) = x0`, taking `steps_per_cell` RK4 steps between
/// consecutive grid points; returns `x` at the grid points.
pub fn integrate_forward_with<C: DriftCoefficients + ?Sized>(
    x0: f64,
    coeffs: &C,
    grid: &EvalGrid,
    steps_per_cell: usize,
) -> Result<Vec<f64>> {
    if steps_per_cell == 0 {
        return Err(Error::InvalidConfig("steps_per_cell must be at least 1".into()));
    }
    let f = |t: f64, x: f64| {
        coeffs.mean_derivative(t) + coeffs.beta(t) * (x - coeffs.mean(t)) + coeffs.drift(t)
    };
    let t = grid.points();
    let mut out = Vec::with_capacity(t.len());
    let mut x = x0;
    out.push(x);
    for cell in t.windows(2) {
        let h = (cell[1] - cell[0]) / steps_per_cell as f64;
        for s in 0..steps_per_cell {
            let t0 = cell[0] + s as f64 * h;
            let k1 = f(t0, x);
            let k2 = f(t0 + 0.5 * h, x + 0.5 * h * k1);
            let k3 = f(t0 + 0.5 * h, x + 0.5 * h * k2);
            let k4 = f(t0 + h, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(x);
    }
    Ok(out)
}
