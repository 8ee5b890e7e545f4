mod common;

use common::*;
use empdyn_core::dataset::{EvalGrid, Interval, SparseDataset, SubjectRecord};
use empdyn_core::diagnostics::Diagnostics;
use empdyn_core::dynamics::{DynamicsEstimate, DEFAULT_FLOOR_FRAC};
use empdyn_core::eigenbasis::{decompose_moments, EigenSystem, TruncationRule};
use empdyn_core::pace::{
    conditional_scores, drift_score_extremes, drift_scores, effective_sigma2, fit_subject,
    PaceOptions, SubjectFit,
};
use empdyn_core::simulate::{sample_dataset, true_eigensystem, true_moments, TruthSpec};
use empdyn_core::smoothing::{estimate_moments, MomentEstimates, SmoothConfig};
use empdyn_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NO_FLOOR: PaceOptions = PaceOptions { sigma_floor: false };

fn truth(spec: &TruthSpec, grid: &EvalGrid) -> (MomentEstimates, EigenSystem, DynamicsEstimate) {
    let moments = true_moments(spec, grid).unwrap();
    let eig = true_eigensystem(spec, grid).unwrap();
    let dy = DynamicsEstimate::estimate(&eig, DEFAULT_FLOOR_FRAC, TruncationRule::default(), &mut Diagnostics::new()).unwrap();
    (moments, eig, dy)
}

/// `λ_k φ_kᵀ Σ_Y^{-1}(Y - μ)` with the full `N×N` covariance.
fn direct_scores(subject: &SubjectRecord, moments: &MomentEstimates, eig: &EigenSystem, sigma2: f64) -> Vec<f64> {
    let g = &eig.grid;
    let n = subject.len();
    let phi = DMatrix::from_fn(n, eig.k(), |j, k| g.interpolate(&eig.phis[k], subject.times[j]));
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&eig.lambdas));
    let sigma = &phi * &lam * phi.transpose() + DMatrix::identity(n, n) * sigma2;
    let y = DVector::from_fn(n, |j, _| subject.values[j] - g.interpolate(&moments.mu, subject.times[j]));
    let solved = sigma.lu().solve(&y).unwrap();
    (lam * phi.transpose() * solved).iter().copied().collect()
}

/// Subject observed without noise at `count` distinct grid points in the
/// first half of the domain; `t` and `1 - t` give identical rows for the
/// cosine basis.
fn on_grid_subject(spec: &TruthSpec, grid: &EvalGrid, rng: &mut ChaCha8Rng, id: &str, count: usize) -> (SubjectRecord, Vec<f64>) {
    let scores: Vec<f64> = spec.lambdas.iter().map(|l| l.sqrt() * (rng.random::<f64>() * 2.0 - 1.0) * 1.7).collect();
    let mut all: Vec<usize> = (0..grid.len() / 2).collect();
    let mut idx = all.partial_shuffle(rng, count).0.to_vec();
    idx.sort_unstable();
    let times: Vec<f64> = idx.iter().map(|&i| grid.points()[i]).collect();
    let p = spec.process();
    let values = times.iter().map(|&t| p.path(&scores, t)).collect();
    (SubjectRecord::new(id, times, values).unwrap(), scores)
}

#[test]
fn single_observation_closed_form() {
    let grid = unit_grid(101);
    let mut spec = dense_spec(vec![2.0], 5);
    spec.sigma2 = 0.3;
    let (moments, eig, _) = truth(&spec, &grid);
    let t = grid.points()[13];
    let y = 0.8;
    let s = SubjectRecord::new("one", vec![t], vec![y]).unwrap();
    let xi = conditional_scores(&s, &moments, &eig, PaceOptions::default()).unwrap();
    let phi = cos_basis(1, t);
    let want = 2.0 * phi * y / (2.0 * phi * phi + 0.3);
    assert!((xi[0] - want).abs() < 1e-12);
}

#[test]
fn exact_recovery_without_noise() {
    let grid = unit_grid(101);
    let spec = dense_spec(vec![1.0, 0.25, 0.06], 5);
    let (moments, eig, _) = truth(&spec, &grid);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..50 {
        let n = rng.random_range(3..=8);
        let (s, xi) = on_grid_subject(&spec, &grid, &mut rng, &format!("s{i}"), n);
        let got = conditional_scores(&s, &moments, &eig, NO_FLOOR).unwrap();
        for k in 0..3 {
            assert!((got[k] - xi[k]).abs() < 1e-8, "subject {i} component {k}");
        }
    }
}

#[test]
fn agrees_with_full_covariance_formula() {
    let grid = unit_grid(101);
    let spec = sparse_spec(vec![1.0, 0.25, 0.06], 1, 8, 0.04).with_seed(3);
    let (data, _) = sample_dataset(&spec, 60).unwrap();
    let (moments, eig, _) = truth(&spec, &grid);
    for s in data.subjects() {
        let a = conditional_scores(s, &moments, &eig, PaceOptions::default()).unwrap();
        let b = direct_scores(s, &moments, &eig, 0.04);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10 * y.abs().max(1.0));
        }
    }
}

#[test]
fn centered_subject_has_zero_scores() {
    let grid = unit_grid(101);
    let spec = dense_spec(vec![1.0, 0.25], 5).with_mean(empdyn_core::simulate::MeanSpec::Polynomial { coeffs: vec![1.0, -0.5, 2.0] });
    let (moments, eig, dy) = truth(&spec, &grid);
    let times = vec![grid.points()[10], grid.points()[40], grid.points()[77]];
    let values = times.iter().map(|&t| grid.interpolate(&moments.mu, t)).collect();
    let s = SubjectRecord::new("flat", times, values).unwrap();
    let fit = fit_subject(&s, &moments, &eig, &dy.beta, PaceOptions::default()).unwrap();
    assert!(fit.scores.iter().all(|&x| x == 0.0));
    assert_eq!(fit.xhat, moments.mu);
    assert_eq!(fit.dxhat, moments.dmu);
    assert!(fit.zhat.iter().all(|&z| z == 0.0));
}

#[test]
fn drift_identity_holds_for_every_fit() {
    let grid = unit_grid(51);
    let spec = sparse_spec(vec![1.0, 0.25, 0.06], 2, 6, 0.01).with_seed(4);
    let (data, _) = sample_dataset(&spec, 30).unwrap();
    let (moments, eig, dy) = truth(&spec, &grid);
    for s in data.subjects() {
        let f = fit_subject(s, &moments, &eig, &dy.beta, PaceOptions::default()).unwrap();
        for i in 0..grid.len() {
            let r = f.dxhat[i] - moments.dmu[i] - dy.beta[i] * (f.xhat[i] - moments.mu[i]);
            assert!((f.zhat[i] - r).abs() < 1e-10);
        }
    }
}

#[test]
fn singular_conditioning_is_reported() {
    let grid = unit_grid(101);
    let spec = dense_spec(vec![1.0, 0.25, 0.06], 5);
    let (moments, eig, _) = truth(&spec, &grid);
    let s = SubjectRecord::new("lonely", vec![0.3], vec![1.0]).unwrap();
    let err = conditional_scores(&s, &moments, &eig, NO_FLOOR).unwrap_err();
    assert_eq!(err, Error::SingularConditioning { subject: "lonely".into() });
    assert!(conditional_scores(&s, &moments, &eig, PaceOptions::default()).is_ok());
}

#[test]
fn floor_value() {
    let grid = unit_grid(11);
    let moments = true_moments(&dense_spec(vec![1.0], 5), &grid).unwrap();
    let trace: f64 = (0..11).map(|i| moments.cov[(i, i)]).sum();
    assert_eq!(effective_sigma2(&moments, PaceOptions::default()), 1e-8 * trace / 11.0);
    assert_eq!(effective_sigma2(&moments, NO_FLOOR), 0.0);
}

#[test]
fn grid_refinement_barely_moves_scores() {
    let spec = sparse_spec(vec![1.0, 0.25, 0.06], 3, 8, 0.01).with_seed(12);
    let (data, _) = sample_dataset(&spec, 40).unwrap();
    let coarse = unit_grid(101);
    let fine = unit_grid(201);
    let (mc, ec, _) = truth(&spec, &coarse);
    let (mf, ef, _) = truth(&spec, &fine);
    let (mut diff, mut norm) = (0.0, 0.0);
    for s in data.subjects() {
        let a = conditional_scores(s, &mc, &ec, PaceOptions::default()).unwrap();
        let b = conditional_scores(s, &mf, &ef, PaceOptions::default()).unwrap();
        norm += b.iter().map(|x| x * x).sum::<f64>();
        diff += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    assert!(diff.sqrt() < 1e-3 * norm.sqrt(), "{} vs {}", diff.sqrt(), norm.sqrt());
}

fn linear_interpolation(s: &SubjectRecord, t: f64) -> f64 {
    let n = s.len();
    if t <= s.times[0] {
        return s.values[0];
    }
    if t >= s.times[n - 1] {
        return s.values[n - 1];
    }
    let j = s.times.partition_point(|&x| x <= t) - 1;
    let f = (t - s.times[j]) / (s.times[j + 1] - s.times[j]);
    (1.0 - f) * s.values[j] + f * s.values[j + 1]
}

#[test]
fn beats_linear_interpolation() {
    let grid = unit_grid(51);
    let spec = sparse_spec(vec![1.0, 0.25, 0.06], 3, 8, 0.01).with_seed(99);
    let (data, record) = sample_dataset(&spec, 400).unwrap();
    let moments = estimate_moments(&data, &grid, &SmoothConfig::fixed(0.08, 0.12, 0.08, 0.12), &mut Diagnostics::new()).unwrap();
    let eig = decompose_moments(&moments, TruncationRule::default(), &mut Diagnostics::new()).unwrap();
    let dy = DynamicsEstimate::estimate(&eig, DEFAULT_FLOOR_FRAC, TruncationRule::default(), &mut Diagnostics::new()).unwrap();
    let p = spec.process();
    let (mut pace, mut base) = (0.0, 0.0);
    for (s, tr) in data.subjects().iter().zip(&record.subjects) {
        let f = fit_subject(s, &moments, &eig, &dy.beta, PaceOptions::default()).unwrap();
        let x: Vec<f64> = grid.points().iter().map(|&t| p.path(&tr.scores, t)).collect();
        let li: Vec<f64> = grid.points().iter().map(|&t| linear_interpolation(s, t)).collect();
        pace += grid.integrate(&x.iter().zip(&f.xhat).map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>());
        base += grid.integrate(&x.iter().zip(&li).map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>());
    }
    assert!(pace < base, "pace {pace} baseline {base}");
}

fn fit_with_zhat(id: &str, zhat: Vec<f64>) -> SubjectFit {
    SubjectFit {
        id: id.into(),
        scores: vec![],
        xhat: vec![],
        dxhat: vec![],
        zhat,
    }
}

#[test]
fn single_subject_is_every_extreme() {
    let grid = unit_grid(41);
    let spec = dense_spec(vec![1.0, 0.25, 0.06], 5);
    let (_, _, dy) = truth(&spec, &grid);
    let de = dy.drift_eig.unwrap();
    let fits = vec![fit_with_zhat("only", tabulate(&grid, |t| (3.0 * t).sin()))];
    let ext = drift_score_extremes(&fits, &de, 3);
    assert_eq!(ext.len(), de.k());
    for (c, e) in ext.iter().enumerate() {
        assert_eq!(e.component, c + 1);
        assert_eq!(e.subjects.len(), 1);
        assert_eq!(e.subjects[0].id, "only");
    }
}

#[test]
fn planted_drift_ranks_first() {
    let grid = unit_grid(51);
    let spec = sparse_spec(vec![1.0, 0.25, 0.06], 3, 8, 0.01);
    let (moments, eig, dy) = truth(&spec, &grid);
    let de = dy.drift_eig.clone().unwrap();
    let rho1 = de.lambdas[0];
    // Score shift along the first drift direction: c_k = λ_k⟨g_k, ψ_1⟩/ρ_1
    // moves the ψ_1 projection of Z by exactly one unit.
    let d = eig.dphis.as_ref().unwrap();
    let shift: Vec<f64> = (0..eig.k())
        .map(|k| {
            let g: Vec<f64> = (0..grid.len()).map(|i| d[k][i] - dy.beta[i] * eig.phis[k][i]).collect();
            eig.lambdas[k] * grid.inner(&g, &de.phis[0]) / rho1
        })
        .collect();
    let replicates = 40;
    let mut wins = 0;
    for rep in 0..replicates {
        let (data, record) = sample_dataset(&spec.clone().with_seed(500 + rep), 60).unwrap();
        let mut subjects = data.subjects().to_vec();
        let p = spec.process();
        let planted: Vec<f64> = record.subjects[0]
            .scores
            .iter()
            .zip(&shift)
            .map(|(x, c)| x + 10.0 * rho1.sqrt() * c)
            .collect();
        let s0 = &subjects[0];
        let delta: Vec<f64> = s0.times.iter().map(|&t| p.path(&planted, t) - p.path(&record.subjects[0].scores, t)).collect();
        let values = s0.values.iter().zip(&delta).map(|(y, d)| y + d).collect();
        subjects[0] = SubjectRecord::new(s0.id.clone(), s0.times.clone(), values).unwrap();
        let data = SparseDataset::new(subjects, Interval::default()).unwrap();
        let fits: Vec<SubjectFit> = data
            .subjects()
            .iter()
            .map(|s| fit_subject(s, &moments, &eig, &dy.beta, PaceOptions::default()).unwrap())
            .collect();
        let ext = drift_score_extremes(&fits, &de, 3);
        if ext[0].subjects[0].id == data.subjects()[0].id {
            wins += 1;
        }
    }
    assert!(wins as f64 >= 0.95 * replicates as f64, "{wins}/{replicates}");
}

#[test]
fn drift_projection_reconstruction_bound() {
    let grid = unit_grid(51);
    let spec = sparse_spec(vec![1.0, 0.25, 0.06], 3, 8, 0.01).with_seed(8);
    let (data, _) = sample_dataset(&spec, 20).unwrap();
    let (moments, eig, dy) = truth(&spec, &grid);
    let de = dy.drift_eig.clone().unwrap();
    let fits: Vec<SubjectFit> = data.subjects().iter().map(|s| fit_subject(s, &moments, &eig, &dy.beta, PaceOptions::default()).unwrap()).collect();
    let scores = drift_scores(&fits, &de);
    let fve = de.fve[de.k() - 1];
    for (f, sc) in fits.iter().zip(&scores) {
        let recon: Vec<f64> = (0..grid.len()).map(|i| sc.iter().zip(&de.phis).map(|(s, psi)| s * psi[i]).sum()).collect();
        let resid = l2_distance(&grid, &f.zhat, &recon);
        assert!(resid <= (1.0 - fve) * grid.norm(&f.zhat) + 1e-6, "{} {resid}", f.id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_component_scores_shrink(
        sigma2 in 0.001f64..2.0,
        idx in prop::collection::btree_set(0usize..101, 1..8),
        ys in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let grid = unit_grid(101);
        let mut spec = dense_spec(vec![0.7], 5);
        spec.sigma2 = sigma2;
        let (moments, eig, _) = truth(&spec, &grid);
        let times: Vec<f64> = idx.iter().map(|&i| grid.points()[i]).collect();
        let values = ys[..times.len()].to_vec();
        let phi: Vec<f64> = times.iter().map(|&t| grid.interpolate(&eig.phis[0], t)).collect();
        let pp: f64 = phi.iter().map(|p| p * p).sum();
        prop_assume!(pp > 1e-6);
        let s = SubjectRecord::new("p", times, values.clone()).unwrap();
        let xi = conditional_scores(&s, &moments, &eig, PaceOptions::default()).unwrap()[0];
        let ols = phi.iter().zip(&values).map(|(p, y)| p * y).sum::<f64>() / pp;
        prop_assert!(xi.abs() <= ols.abs() + 1e-12);
    }
}
