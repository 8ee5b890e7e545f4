#![allow(dead_code)]

use empdyn_core::dataset::{make_grid, EvalGrid, Interval, SparseDataset, SubjectRecord};
use empdyn_core::simulate::{Sampling, TruthSpec};
use std::f64::consts::{PI, SQRT_2};

pub fn unit_grid(m: usize) -> EvalGrid {
    make_grid(Interval::default(), m).unwrap()
}

/// `√2 cos(2kπt)` written out directly.
pub fn cos_basis(k: usize, t: f64) -> f64 {
    SQRT_2 * (2.0 * PI * k as f64 * t).cos()
}

pub fn cos_basis_deriv(k: usize, t: f64) -> f64 {
    -2.0 * SQRT_2 * PI * k as f64 * (2.0 * PI * k as f64 * t).sin()
}

pub fn tabulate(grid: &EvalGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.points().iter().map(|&t| f(t)).collect()
}

/// Indices of grid points in the central `fraction` of the domain.
pub fn central(grid: &EvalGrid, fraction: f64) -> Vec<usize> {
    grid.indices_within(grid.domain().central(fraction)).collect()
}

pub fn sup_over(idx: &[usize], a: &[f64], b: &[f64]) -> f64 {
    idx.iter().map(|&i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

pub fn sup_abs(idx: &[usize], a: &[f64]) -> f64 {
    idx.iter().map(|&i| a[i].abs()).fold(0.0, f64::max)
}

pub fn inverse_quartic(k: usize) -> Vec<f64> {
    (1..=k).map(|j| (j as f64).powi(-4)).collect()
}

pub fn dense_spec(lambdas: Vec<f64>, m_obs: usize) -> TruthSpec {
    TruthSpec::new(lambdas, Sampling::Dense { m_obs })
}

pub fn sparse_spec(lambdas: Vec<f64>, n_min: usize, n_max: usize, sigma2: f64) -> TruthSpec {
    TruthSpec::new(lambdas, Sampling::Sparse { n_min, n_max }).with_sigma2(sigma2)
}

/// Builds a dataset where every subject is observed at the same times.
pub fn dataset_on(times: &[f64], curves: &[Vec<f64>]) -> SparseDataset {
    let subjects = curves
        .iter()
        .enumerate()
        .map(|(i, v)| SubjectRecord::new(format!("c{i}"), times.to_vec(), v.clone()).unwrap())
        .collect();
    SparseDataset::new(subjects, Interval::default()).unwrap()
}

/// Sign of `b` aligned to `a` by their quadrature inner product.
pub fn align(grid: &EvalGrid, a: &[f64], b: &[f64]) -> Vec<f64> {
    if grid.inner(a, b) < 0.0 {
        b.iter().map(|v| -v).collect()
    } else {
        b.to_vec()
    }
}

pub fn l2_distance(grid: &EvalGrid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    grid.norm(&d)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
