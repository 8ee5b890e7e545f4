mod common;

use common::*;
use empdyn_core::dataset::{Interval, SparseDataset, SubjectRecord};
use empdyn_core::diagnostics::{Diagnostics, Stage, Warning};
use empdyn_core::kernel::KernelSpec;
use empdyn_core::simulate::{sample_dataset, true_moments, MeanSpec, Sampling};
use empdyn_core::smoothing::{
    bandwidth_candidates, estimate_moments, estimate_sigma2, select_bandwidths, smooth_cov,
    smooth_cov_with, smooth_mean, SmoothConfig,
};
use empdyn_core::Error;
use proptest::prelude::*;

fn cfg(h: f64) -> SmoothConfig {
    SmoothConfig::fixed(h, 1.5 * h, h, 1.5 * h)
}

fn sparse_design(n: usize, seed: u64, f: impl Fn(usize, f64) -> f64) -> SparseDataset {
    let spec = sparse_spec(vec![1.0], 3, 8, 0.0).with_seed(seed);
    let (data, _) = sample_dataset(&spec, n).unwrap();
    let subjects = data
        .subjects()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let values = s.times.iter().map(|&t| f(i, t)).collect();
            SubjectRecord::new(s.id.clone(), s.times.clone(), values).unwrap()
        })
        .collect();
    SparseDataset::new(subjects, Interval::default()).unwrap()
}

#[test]
fn constant_data_reproduced() {
    let data = sparse_design(50, 1, |_, _| 3.25);
    let grid = unit_grid(51);
    let mut diag = Diagnostics::new();
    let mu = smooth_mean(&data, &grid, &cfg(0.1), 0, &mut diag).unwrap();
    let dmu = smooth_mean(&data, &grid, &cfg(0.1), 1, &mut diag).unwrap();
    for i in 0..grid.len() {
        assert!((mu[i] - 3.25).abs() < 1e-10);
        assert!(dmu[i].abs() < 1e-10);
    }
}

#[test]
fn linear_data_reproduced() {
    let data = sparse_design(50, 2, |_, t| -1.0 + 2.5 * t);
    let grid = unit_grid(51);
    let mut diag = Diagnostics::new();
    let mu = smooth_mean(&data, &grid, &cfg(0.1), 0, &mut diag).unwrap();
    let dmu = smooth_mean(&data, &grid, &cfg(0.1), 1, &mut diag).unwrap();
    for (i, &t) in grid.points().iter().enumerate() {
        assert!((mu[i] - (-1.0 + 2.5 * t)).abs() < 1e-10);
        assert!((dmu[i] - 2.5).abs() < 1e-10);
    }
}

#[test]
fn noisy_mean_close_to_truth() {
    let spec = sparse_spec(vec![0.1, 0.02], 3, 8, 0.01)
        .with_mean(MeanSpec::Polynomial { coeffs: vec![0.0, 4.0, -4.0] })
        .with_seed(11);
    let (data, _) = sample_dataset(&spec, 400).unwrap();
    let grid = unit_grid(101);
    let mu = smooth_mean(&data, &grid, &cfg(0.08), 0, &mut Diagnostics::new()).unwrap();
    let truth = tabulate(&grid, |t| 4.0 * t - 4.0 * t * t);
    let idx = central(&grid, 0.8);
    assert!(sup_over(&idx, &mu, &truth) < 0.1 * 1.0);
}

#[test]
fn rank_one_covariance_and_derivative() {
    let spec = dense_spec(vec![1.0], 51).with_seed(3);
    let (data, _) = sample_dataset(&spec, 400).unwrap();
    let grid = unit_grid(101);
    let c = cfg(0.04);
    let mut diag = Diagnostics::new();
    let mu = smooth_mean(&data, &grid, &c, 0, &mut diag).unwrap();
    let g = smooth_cov(&data, &grid, &c, &mu, 0, &mut diag).unwrap();
    let dg = smooth_cov(&data, &grid, &c, &mu, 1, &mut diag).unwrap();

    // Truth scaled by the sample variance of the scores, which is what a
    // smoother on this sample can recover.
    let (_, truth) = sample_dataset(&spec, 400).unwrap();
    let scores: Vec<f64> = truth.subjects.iter().map(|s| s.scores[0]).collect();
    let mean = scores.iter().sum::<f64>() / 400.0;
    let lam = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 400.0;

    let t = grid.points();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..t.len() {
        for j in 0..t.len() {
            let want = lam * cos_basis(1, t[i]) * cos_basis(1, t[j]);
            err = err.max((g[(i, j)] - want).abs());
            scale = scale.max(want.abs());
        }
    }
    assert!(err < 0.05 * scale, "sup error {err} vs scale {scale}");
    assert_eq!(g, g.transpose());

    let idx = central(&grid, 0.8);
    let mut derr: f64 = 0.0;
    let mut dscale: f64 = 0.0;
    for &i in &idx {
        for j in 0..t.len() {
            let want = lam * cos_basis_deriv(1, t[i]) * cos_basis(1, t[j]);
            derr = derr.max((dg[(i, j)] - want).abs());
            dscale = dscale.max(want.abs());
        }
    }
    assert!(derr < 0.05 * dscale, "derivative sup error {derr} vs {dscale}");
}

#[test]
fn constant_trajectories_give_flat_surface() {
    let times: Vec<f64> = (0..21).map(|j| j as f64 / 20.0).collect();
    let levels: Vec<f64> = (0..40).map(|i| ((i * 37 % 17) as f64 - 8.0) / 4.0).collect();
    let curves: Vec<Vec<f64>> = levels.iter().map(|&c| vec![c; times.len()]).collect();
    let data = dataset_on(&times, &curves);
    let grid = unit_grid(41);
    let c = cfg(0.1);
    let mut diag = Diagnostics::new();
    let mu = smooth_mean(&data, &grid, &c, 0, &mut diag).unwrap();
    let g = smooth_cov(&data, &grid, &c, &mu, 0, &mut diag).unwrap();
    let dg = smooth_cov(&data, &grid, &c, &mu, 1, &mut diag).unwrap();
    let mean = levels.iter().sum::<f64>() / 40.0;
    let var = levels.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 40.0;
    assert!((g - nalgebra::DMatrix::from_element(41, 41, var)).amax() < 1e-9);
    assert!(dg.amax() < 1e-9);
}

#[test]
fn sigma2_recovery() {
    // The surface diagonal carries an O(h²) downward bias proportional to
    // the curvature of G, so the truth here has small variance.
    let grid = unit_grid(51);
    let c = cfg(0.08);

    let noiseless = sparse_spec(vec![0.04, 0.01], 3, 8, 0.0).with_seed(5);
    let (data, _) = sample_dataset(&noiseless, 400).unwrap();
    let m = estimate_moments(&data, &grid, &c, &mut Diagnostics::new()).unwrap();
    assert!(m.sigma2 < 0.01, "noiseless sigma2 {}", m.sigma2);

    for seed in 0..4 {
        let noisy = noiseless.clone().with_sigma2(0.01).with_seed(seed);
        let (data, _) = sample_dataset(&noisy, 400).unwrap();
        let m = estimate_moments(&data, &grid, &c, &mut Diagnostics::new()).unwrap();
        assert!((0.005..=0.02).contains(&m.sigma2), "seed {seed}: sigma2 {}", m.sigma2);
    }
}

#[test]
fn pure_noise_sigma2() {
    let spec = sparse_spec(vec![1e-12], 3, 8, 1.0).with_seed(9);
    let (data, _) = sample_dataset(&spec, 400).unwrap();
    let grid = unit_grid(51);
    let m = estimate_moments(&data, &grid, &cfg(0.15), &mut Diagnostics::new()).unwrap();
    assert!((m.sigma2 - 1.0).abs() < 0.15, "sigma2 {}", m.sigma2);
}

#[test]
fn clamped_sigma2_is_reported() {
    let data = sparse_design(30, 4, |i, _| i as f64);
    let grid = unit_grid(21);
    let c = cfg(0.2);
    let mut diag = Diagnostics::new();
    let mu = smooth_mean(&data, &grid, &c, 0, &mut diag).unwrap();
    // A covariance above the diagonal smoother forces a negative gap.
    let big = nalgebra::DMatrix::from_element(21, 21, 1e6);
    let s = estimate_sigma2(&data, &grid, &c, &mu, &big, &mut diag).unwrap();
    assert_eq!(s, 0.0);
    assert!(diag.warnings().iter().any(|w| matches!(w, Warning::Sigma2Clamped { .. })));
}

#[test]
fn diagonal_exclusion_removes_noise_inflation() {
    let spec = sparse_spec(vec![1.0, 0.25], 3, 8, 0.25).with_seed(21);
    let (data, _) = sample_dataset(&spec, 300).unwrap();
    let grid = unit_grid(41);
    let c = cfg(0.1);
    let mut diag = Diagnostics::new();
    let mu = smooth_mean(&data, &grid, &c, 0, &mut diag).unwrap();
    let excl = smooth_cov_with(&data, &grid, &c, &mu, 0, false, &mut diag).unwrap();
    let incl = smooth_cov_with(&data, &grid, &c, &mu, 0, true, &mut diag).unwrap();
    let idx = central(&grid, 0.5);
    let gap: f64 = idx.iter().map(|&i| incl[(i, i)] - excl[(i, i)]).sum::<f64>() / idx.len() as f64;
    assert!(gap > 0.0);
    for &i in &idx {
        assert!(excl[(i, i)] < incl[(i, i)]);
    }
}

#[test]
fn empty_window_widens_then_fails() {
    // Observations only at the ends; the midpoint window never fills.
    let s1 = SubjectRecord::new("a", vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
    let s2 = SubjectRecord::new("b", vec![0.0, 1.0], vec![0.5, 1.0]).unwrap();
    let data = SparseDataset::new(vec![s1, s2], Interval::default()).unwrap();
    let grid = unit_grid(3);
    let err = smooth_mean(&data, &grid, &cfg(0.02), 0, &mut Diagnostics::new()).unwrap_err();
    assert!(matches!(err, Error::InsufficientLocalData { .. }), "{err:?}");
}

#[test]
fn widening_is_logged() {
    let spec = sparse_spec(vec![1.0], 2, 2, 0.0).with_seed(8);
    let (data, _) = sample_dataset(&spec, 25).unwrap();
    let grid = unit_grid(101);
    let mut diag = Diagnostics::new();
    smooth_mean(&data, &grid, &cfg(0.01), 1, &mut diag).unwrap();
    assert!(diag.warnings().iter().any(|w| matches!(
        w,
        Warning::WindowWidened { stage: Stage::MeanDerivative, .. }
    )));
}

#[test]
fn subsets_without_pairs_are_refused() {
    let s1 = SubjectRecord::new("a", vec![0.2, 0.4], vec![1.0, 2.0]).unwrap();
    let s2 = SubjectRecord::new("b", vec![0.6], vec![0.5]).unwrap();
    let data = SparseDataset::new(vec![s1, s2], Interval::default()).unwrap();
    assert!(data.subset(|i| i == 1).is_none());
    assert_eq!(data.subset(|i| i == 0).unwrap().len(), 1);
}

#[test]
fn bandwidth_candidates_span() {
    let c = bandwidth_candidates(Interval::default());
    assert_eq!(c.len(), 10);
    assert!((c[0] - 0.02).abs() < 1e-15);
    assert!((c[9] - 0.25).abs() < 1e-15);
}

#[test]
fn few_subjects_fall_back() {
    let spec = sparse_spec(vec![1.0], 3, 8, 0.01).with_seed(2);
    let (data, _) = sample_dataset(&spec, 10).unwrap();
    let mut diag = Diagnostics::new();
    let c = select_bandwidths(&data, &unit_grid(51), KernelSpec::Epanechnikov, &mut diag);
    assert!((c.h_mu0 - 0.1).abs() < 1e-15);
    assert!((c.h_mu1 - 0.15).abs() < 1e-15);
    assert!(diag.warnings().iter().any(|w| matches!(w, Warning::BandwidthFallback { .. })));
}

#[test]
fn denser_designs_choose_smaller_mean_bandwidth() {
    let grid = unit_grid(51);
    let (mut sparse_sum, mut dense_sum) = (0.0, 0.0);
    for seed in 0..10 {
        let base = sparse_spec(vec![1.0, 0.25], 2, 4, 0.04)
            .with_mean(MeanSpec::Trig { intercept: 0.0, cos: vec![1.0, 0.5] })
            .with_seed(100 + seed);
        let mut denser = base.clone();
        denser.sampling = Sampling::Sparse { n_min: 4, n_max: 8 };
        let (d1, _) = sample_dataset(&base, 60).unwrap();
        let (d2, _) = sample_dataset(&denser, 60).unwrap();
        sparse_sum += select_bandwidths(&d1, &grid, KernelSpec::Epanechnikov, &mut Diagnostics::new()).h_mu0;
        dense_sum += select_bandwidths(&d2, &grid, KernelSpec::Epanechnikov, &mut Diagnostics::new()).h_mu0;
    }
    assert!(dense_sum <= sparse_sum, "dense {dense_sum} vs sparse {sparse_sum}");
}

#[test]
fn selected_bandwidths_are_candidates() {
    let spec = sparse_spec(vec![1.0, 0.25], 3, 8, 0.01).with_seed(4);
    let (data, _) = sample_dataset(&spec, 60).unwrap();
    let grid = unit_grid(51);
    let c = select_bandwidths(&data, &grid, KernelSpec::Epanechnikov, &mut Diagnostics::new());
    let cands = bandwidth_candidates(data.domain());
    assert!(cands.contains(&c.h_mu0));
    assert!(cands.contains(&c.h_g0));
    assert_eq!(c.h_mu1, 1.5 * c.h_mu0);
    assert_eq!(c.h_g1, 1.5 * c.h_g0);
}

#[test]
fn gaussian_kernel_runs_and_reproduces_linears() {
    let data = sparse_design(40, 6, |_, t| 0.5 - t);
    let grid = unit_grid(31);
    let c = cfg(0.1).with_kernel(KernelSpec::GaussianTruncated);
    let mu = smooth_mean(&data, &grid, &c, 0, &mut Diagnostics::new()).unwrap();
    for (i, &t) in grid.points().iter().enumerate() {
        assert!((mu[i] - (0.5 - t)).abs() < 1e-10);
    }
}

#[test]
fn true_moments_match_their_definition() {
    let spec = dense_spec(vec![1.0, 0.5], 5);
    let grid = unit_grid(11);
    let m = true_moments(&spec, &grid).unwrap();
    let t = grid.points();
    let want = cos_basis(1, t[3]) * cos_basis(1, t[7]) + 0.5 * cos_basis(2, t[3]) * cos_basis(2, t[7]);
    assert!((m.cov[(3, 7)] - want).abs() < 1e-14);
    let want = cos_basis_deriv(1, t[2]) * cos_basis(1, t[5]) + 0.5 * cos_basis_deriv(2, t[2]) * cos_basis(2, t[5]);
    assert!((m.dcov[(2, 5)] - want).abs() < 1e-12);
}

#[test]
fn rejects_bad_bandwidths() {
    let data = sparse_design(5, 1, |_, t| t);
    let grid = unit_grid(11);
    let err = estimate_moments(&data, &grid, &cfg(1.5), &mut Diagnostics::new()).unwrap_err();
    assert!(matches!(err, Error::InvalidBandwidth { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn derivative_fit_reproduces_quadratics(
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, seed in 0u64..1000,
    ) {
        let data = sparse_design(40, seed, |_, t| a + b * t + c * t * t);
        let grid = unit_grid(21);
        let dmu = smooth_mean(&data, &grid, &cfg(0.15), 1, &mut Diagnostics::new()).unwrap();
        for (i, &t) in grid.points().iter().enumerate() {
            prop_assert!((dmu[i] - (b + 2.0 * c * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn level_fit_reproduces_linears(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
        let data = sparse_design(30, seed, |_, t| a + b * t);
        let grid = unit_grid(21);
        let mu = smooth_mean(&data, &grid, &cfg(0.12), 0, &mut Diagnostics::new()).unwrap();
        for (i, &t) in grid.points().iter().enumerate() {
            prop_assert!((mu[i] - (a + b * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn covariance_is_exactly_symmetric(seed in 0u64..1000) {
        let spec = sparse_spec(vec![1.0, 0.3], 2, 6, 0.05).with_seed(seed);
        let (data, _) = sample_dataset(&spec, 40).unwrap();
        let grid = unit_grid(15);
        let m = estimate_moments(&data, &grid, &cfg(0.2), &mut Diagnostics::new()).unwrap();
        prop_assert_eq!(&m.cov, &m.cov.transpose());
        prop_assert!(m.sigma2 >= 0.0);
        prop_assert!(m.cov.iter().chain(m.dcov.iter()).all(|v| v.is_finite()));
    }
}
