//! Cross-validated bandwidth selection over a fixed logarithmic grid.
//!
//! Both criteria reuse kernel-weighted sufficient statistics: the statistics
//! of a training set are the full-sample statistics minus those of the
//! held-out subjects, so no refit over the remaining data is needed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::local::{smooth_curve, WideningLog};
use super::scatter::{Scatter1, Scatter2};
use super::{pooled_scatter, residuals, BandwidthMode, SmoothConfig, DERIVATIVE_BANDWIDTH_RATIO};
use crate::dataset::{make_grid, EvalGrid, Interval, SparseDataset};
use crate::diagnostics::{Diagnostics, Warning};
use crate::kernel::KernelSpec;
use crate::linalg::solve_small;

pub const CANDIDATE_COUNT: usize = 10;
pub const MIN_CV_SUBJECTS: usize = 20;
const COV_FOLDS: usize = 5;
const COV_CV_NODES: usize = 31;

/// Ten bandwidths spaced evenly in log scale over `[(b-a)/50, (b-a)/4]`.
pub fn bandwidth_candidates(domain: Interval) -> Vec<f64> {
    let lo = domain.length() / 50.0;
    let hi = domain.length() / 4.0;
    let ratio = libm::log(hi / lo);
    let mut out: Vec<f64> = (0..CANDIDATE_COUNT)
        .map(|i| lo * libm::exp(ratio * i as f64 / (CANDIDATE_COUNT - 1) as f64))
        .collect();
    out[0] = lo;
    out[CANDIDATE_COUNT - 1] = hi;
    out
}

/// Picks `h_mu0` by leave-one-subject-out CV and `h_g0` by 5-fold
/// subject-wise CV of the raw covariances; derivative bandwidths are 1.5
/// times the level ones. Falls back to `(b-a)/10` with a warning when there
/// are fewer than [`MIN_CV_SUBJECTS`] subjects or no candidate is usable.
pub fn select_bandwidths(
    data: &SparseDataset,
    grid: &EvalGrid,
    kernel: KernelSpec,
    diag: &mut Diagnostics,
) -> SmoothConfig {
    let domain = grid.domain();
    let fallback = SmoothConfig::fallback(domain, kernel);
    if data.len() < MIN_CV_SUBJECTS {
        diag.push(Warning::BandwidthFallback {
            reason: format!(
                "{} subjects, cross-validation needs at least {MIN_CV_SUBJECTS}",
                data.len()
            ),
        });
        return fallback;
    }
    let candidates = bandwidth_candidates(domain);

    let pooled = pooled_scatter(data);
    let h_mu0 = argmin(&candidates, |h| mean_cv_score(data, &pooled, grid, kernel, h));
    let Some(h_mu0) = h_mu0 else {
        diag.push(Warning::BandwidthFallback {
            reason: "no mean bandwidth candidate admits a leave-one-subject-out fit".into(),
        });
        return fallback;
    };

    let mu = match smooth_curve(&pooled, kernel, grid.points(), h_mu0, 0, &mut WideningLog::default()) {
        Ok(mu) => mu,
        Err(e) => {
            diag.push(Warning::BandwidthFallback {
                reason: format!("mean smoother failed at selected bandwidth: {e}"),
            });
            return fallback;
        }
    };
    let resid = residuals(data, grid, &mu);
    let folds: Vec<Scatter2> = (0..COV_FOLDS)
        .map(|f| {
            Scatter2::from_residuals(
                data.subjects()
                    .iter()
                    .zip(&resid)
                    .enumerate()
                    .filter(|(i, _)| i % COV_FOLDS == f)
                    .map(|(_, (s, r))| (s.times.as_slice(), r.as_slice())),
                false,
            )
        })
        .collect();
    let nodes = make_grid(domain, COV_CV_NODES.min(grid.len()).max(2))
        .expect("at least two nodes");
    let h_g0 = argmin(&candidates, |h| cov_cv_score(&folds, &nodes, kernel, h));
    let Some(h_g0) = h_g0 else {
        diag.push(Warning::BandwidthFallback {
            reason: "no covariance bandwidth candidate admits a cross-validated fit".into(),
        });
        return SmoothConfig {
            h_mu0,
            h_mu1: DERIVATIVE_BANDWIDTH_RATIO * h_mu0,
            bandwidth_mode: BandwidthMode::CrossValidated,
            ..fallback
        };
    };
    SmoothConfig {
        h_mu0,
        h_mu1: DERIVATIVE_BANDWIDTH_RATIO * h_mu0,
        h_g0,
        h_g1: DERIVATIVE_BANDWIDTH_RATIO * h_g0,
        kernel,
        bandwidth_mode: BandwidthMode::CrossValidated,
    }
}

/// First candidate with the smallest finite score.
fn argmin(candidates: &[f64], mut score: impl FnMut(f64) -> Option<f64>) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &h in candidates {
        if let Some(s) = score(h).filter(|s| s.is_finite()) {
            if best.map_or(true, |(_, b)| s < b) {
                best = Some((h, s));
            }
        }
    }
    best.map(|(h, _)| h)
}

/// Local-linear sufficient statistics `Σw[1, u, u²]`, `Σw[y, u·y]`.
#[derive(Clone, Copy, Default)]
struct Stats1 {
    m: [f64; 5],
    count: usize,
}

impl Stats1 {
    fn add(&mut self, u: f64, y: f64, w: f64) {
        self.m[0] += w;
        self.m[1] += w * u;
        self.m[2] += w * u * u;
        self.m[3] += w * y;
        self.m[4] += w * u * y;
        self.count += 1;
    }

    fn minus(&self, other: &Stats1) -> Stats1 {
        let mut m = self.m;
        for (a, b) in m.iter_mut().zip(other.m) {
            *a -= b;
        }
        Stats1 {
            m,
            count: self.count.saturating_sub(other.count),
        }
    }

    fn level(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let m = self.m;
        solve_small([[m[0], m[1]], [m[1], m[2]]], [m[3], m[4]]).map(|c| c[0])
    }
}

fn mean_cv_score(
    data: &SparseDataset,
    pooled: &Scatter1,
    grid: &EvalGrid,
    kernel: KernelSpec,
    h: f64,
) -> Option<f64> {
    let full: Vec<Stats1> = grid
        .points()
        .iter()
        .map(|&x| {
            let mut st = Stats1::default();
            for p in &pooled.points[pooled.window(x, h)] {
                let u = (p.t - x) / h;
                let w = kernel.eval(u);
                if w > 0.0 {
                    // Each aggregated point stands for `count` observations.
                    st.m[0] += w * p.count;
                    st.m[1] += w * p.count * u;
                    st.m[2] += w * p.count * u * u;
                    st.m[3] += w * p.count * p.y;
                    st.m[4] += w * p.count * u * p.y;
                    st.count += p.count as usize;
                }
            }
            st
        })
        .collect();

    let mut sse = 0.0;
    let mut n = 0usize;
    let mut cache: Vec<Option<f64>> = vec![None; grid.len()];
    let mut touched: Vec<usize> = Vec::new();
    for subj in data.subjects() {
        for &g in &touched {
            cache[g] = None;
        }
        touched.clear();
        for (&t, &y) in subj.times.iter().zip(&subj.values) {
            let (g, f) = grid.locate(t);
            let mut pred = 0.0;
            for (node, weight) in [(g, 1.0 - f), (g + 1, f)] {
                if weight == 0.0 {
                    continue;
                }
                let value = match cache[node] {
                    Some(v) => v,
                    None => {
                        let x = grid.points()[node];
                        let mut own = Stats1::default();
                        for (&ts, &ys) in subj.times.iter().zip(&subj.values) {
                            let u = (ts - x) / h;
                            let w = kernel.eval(u);
                            if w > 0.0 {
                                own.add(u, ys, w);
                            }
                        }
                        let v = full[node].minus(&own).level()?;
                        cache[node] = Some(v);
                        touched.push(node);
                        v
                    }
                };
                pred += weight * value;
            }
            sse += (y - pred) * (y - pred);
            n += 1;
        }
    }
    (n > 0).then(|| sse / n as f64)
}

/// Local-linear surface statistics for the basis `[1, u, v]`: the six
/// entries of the symmetric normal matrix, then the right-hand side.
#[derive(Clone, Copy, Default)]
struct Stats2 {
    m: [f64; 9],
    count: usize,
}

impl Stats2 {
    fn add(&mut self, u: f64, v: f64, y: f64, w: f64) {
        let m = &mut self.m;
        m[0] += w;
        m[1] += w * u;
        m[2] += w * v;
        m[3] += w * u * u;
        m[4] += w * u * v;
        m[5] += w * v * v;
        m[6] += w * y;
        m[7] += w * u * y;
        m[8] += w * v * y;
        self.count += 1;
    }

    fn accumulate(&mut self, other: &Stats2) {
        for (a, b) in self.m.iter_mut().zip(other.m) {
            *a += b;
        }
        self.count += other.count;
    }

    fn minus(&self, other: &Stats2) -> Stats2 {
        let mut m = self.m;
        for (a, b) in m.iter_mut().zip(other.m) {
            *a -= b;
        }
        Stats2 {
            m,
            count: self.count.saturating_sub(other.count),
        }
    }

    fn level(&self) -> Option<f64> {
        if self.count < 3 {
            return None;
        }
        let m = self.m;
        solve_small(
            [[m[0], m[1], m[2]], [m[1], m[3], m[4]], [m[2], m[4], m[5]]],
            [m[6], m[7], m[8]],
        )
        .map(|c| c[0])
    }
}

/// Grid indices `g` with `|x_g - t| < h`.
fn node_range(nodes: &EvalGrid, t: f64, h: f64) -> core::ops::Range<usize> {
    let a = nodes.points()[0];
    let step = nodes.step();
    let last = nodes.len() as f64 - 1.0;
    let lo = libm::ceil((t - h - a) / step).clamp(0.0, last) as usize;
    let hi = libm::floor((t + h - a) / step).clamp(0.0, last) as usize;
    lo..hi + 1
}

fn cov_cv_score(folds: &[Scatter2], nodes: &EvalGrid, kernel: KernelSpec, h: f64) -> Option<f64> {
    let q = nodes.len();
    let pts = nodes.points();
    let fold_stats: Vec<Vec<Stats2>> = folds
        .iter()
        .map(|sc| {
            let mut st = vec![Stats2::default(); q * q];
            for p in &sc.points {
                for a in node_range(nodes, p.t, h) {
                    let u = (p.t - pts[a]) / h;
                    let ku = kernel.eval(u);
                    if ku <= 0.0 {
                        continue;
                    }
                    for b in node_range(nodes, p.s, h) {
                        let v = (p.s - pts[b]) / h;
                        let w = ku * kernel.eval(v);
                        if w > 0.0 {
                            // Aggregated points carry their multiplicity.
                            let cell = &mut st[a * q + b];
                            cell.add(u, v, p.y, w * p.count);
                            cell.count += p.count as usize - 1;
                        }
                    }
                }
            }
            st
        })
        .collect();
    let mut total = vec![Stats2::default(); q * q];
    for st in &fold_stats {
        for (t, s) in total.iter_mut().zip(st) {
            t.accumulate(s);
        }
    }

    let mut sse = 0.0;
    let mut n = 0.0;
    for (sc, held_out) in folds.iter().zip(&fold_stats) {
        if sc.is_empty() {
            continue;
        }
        let surface: Vec<Option<f64>> = total
            .iter()
            .zip(held_out)
            .map(|(t, s)| t.minus(s).level())
            .collect();
        for p in &sc.points {
            let (i, fi) = nodes.locate(p.t);
            let (j, fj) = nodes.locate(p.s);
            let mut pred = 0.0;
            for (a, wa) in [(i, 1.0 - fi), (i + 1, fi)] {
                for (b, wb) in [(j, 1.0 - fj), (j + 1, fj)] {
                    let w = wa * wb;
                    if w > 0.0 {
                        pred += w * surface[a * q + b]?;
                    }
                }
            }
            sse += p.count * (p.y - pred) * (p.y - pred);
            n += p.count;
        }
    }
    (n > 0.0).then(|| sse / n)
}
