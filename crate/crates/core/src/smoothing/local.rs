//! Local polynomial fits at single evaluation points.

use alloc::vec::Vec;

use super::scatter::{Scatter1, Scatter2};
use crate::diagnostics::{Diagnostics, Stage, Warning};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::solve_small;

pub(crate) const MAX_WIDENINGS: usize = 6;
pub(crate) const WIDEN_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Outcome {
    Value(f64),
    Insufficient,
    Singular,
}

/// Weighted normal equations `Σ w b bᵀ · c = Σ w b y` for a basis `b`.
pub(crate) struct Normal<const N: usize> {
    a: [[f64; N]; N],
    rhs: [f64; N],
    points: usize,
}

impl<const N: usize> Default for Normal<N> {
    fn default() -> Self {
        Self {
            a: [[0.0; N]; N],
            rhs: [0.0; N],
            points: 0,
        }
    }
}

impl<const N: usize> Normal<N> {
    #[inline]
    pub fn add(&mut self, basis: &[f64; N], y: f64, w: f64) {
        for r in 0..N {
            let wb = w * basis[r];
            for c in r..N {
                self.a[r][c] += wb * basis[c];
            }
            self.rhs[r] += wb * y;
        }
        self.points += 1;
    }

    /// Coefficient `deriv` rescaled from the unit window to time units and
    /// multiplied by `deriv!`.
    pub fn finish(mut self, h: f64, deriv: usize) -> Outcome {
        if self.points < N {
            return Outcome::Insufficient;
        }
        for r in 0..N {
            for c in 0..r {
                self.a[r][c] = self.a[c][r];
            }
        }
        match solve_small(self.a, self.rhs) {
            Some(coef) => {
                let value = match deriv {
                    0 => coef[0],
                    1 => coef[1] / h,
                    _ => unreachable!("derivative order above one"),
                };
                if value.is_finite() {
                    Outcome::Value(value)
                } else {
                    Outcome::Singular
                }
            }
            None => Outcome::Singular,
        }
    }
}

#[inline]
fn powers<const N: usize>(u: f64) -> [f64; N] {
    let mut b = [1.0; N];
    for k in 1..N {
        b[k] = b[k - 1] * u;
    }
    b
}

/// Basis `[1, u, …, u^{N-2}, v]`: degree `N-2` in the first direction and
/// degree one in the second.
#[inline]
fn powers2<const N: usize>(u: f64, v: f64) -> [f64; N] {
    let mut b = [1.0; N];
    for k in 1..N - 1 {
        b[k] = b[k - 1] * u;
    }
    b[N - 1] = v;
    b
}

fn fit1<const N: usize>(sc: &Scatter1, kernel: KernelSpec, x: f64, h: f64, deriv: usize) -> Outcome {
    let mut ne = Normal::<N>::default();
    for p in &sc.points[sc.window(x, h)] {
        let u = (p.t - x) / h;
        let w = kernel.eval(u) * p.count;
        if w > 0.0 {
            ne.add(&powers::<N>(u), p.y, w);
        }
    }
    ne.finish(h, deriv)
}

/// Local polynomial of degree `deriv + 1` at `x`.
pub(crate) fn fit1_at(sc: &Scatter1, kernel: KernelSpec, x: f64, h: f64, deriv: usize) -> Outcome {
    match deriv {
        0 => fit1::<2>(sc, kernel, x, h, 0),
        1 => fit1::<3>(sc, kernel, x, h, 1),
        _ => unreachable!("derivative order above one"),
    }
}

fn fit2<const N: usize>(
    sc: &Scatter2,
    kernel: KernelSpec,
    x: f64,
    y: f64,
    h: f64,
    deriv: usize,
) -> Outcome {
    let mut ne = Normal::<N>::default();
    for p in &sc.points[sc.t_window(x, h)] {
        let v = (p.s - y) / h;
        if !(v.abs() < 1.0) {
            continue;
        }
        let u = (p.t - x) / h;
        let w = kernel.eval2(u, v) * p.count;
        if w > 0.0 {
            ne.add(&powers2::<N>(u, v), p.y, w);
        }
    }
    ne.finish(h, deriv)
}

/// Local surface fit at `(x, y)`: degree `deriv + 1` in `t`, degree one in `s`.
pub(crate) fn fit2_at(
    sc: &Scatter2,
    kernel: KernelSpec,
    x: f64,
    y: f64,
    h: f64,
    deriv: usize,
) -> Outcome {
    match deriv {
        0 => fit2::<3>(sc, kernel, x, y, h, 0),
        1 => fit2::<4>(sc, kernel, x, y, h, 1),
        _ => unreachable!("derivative order above one"),
    }
}

/// Retries `fit` with bandwidth multiplied by [`WIDEN_FACTOR`] up to
/// [`MAX_WIDENINGS`] times. Returns the value and the bandwidth used.
pub(crate) fn widen(h0: f64, mut fit: impl FnMut(f64) -> Outcome) -> core::result::Result<(f64, f64), (Outcome, f64)> {
    let mut h = h0;
    let mut last = Outcome::Insufficient;
    for attempt in 0..=MAX_WIDENINGS {
        if attempt > 0 {
            h *= WIDEN_FACTOR;
        }
        match fit(h) {
            Outcome::Value(v) => return Ok((v, h)),
            other => last = other,
        }
    }
    Err((last, h))
}

fn failure(outcome: Outcome, t: f64, s: Option<f64>, bandwidth: f64) -> Error {
    match outcome {
        Outcome::Singular => Error::SingularLocalFit { t, s, bandwidth },
        _ => Error::InsufficientLocalData { t, s, bandwidth },
    }
}

/// Tracks how many evaluation points needed a wider window.
#[derive(Default)]
pub(crate) struct WideningLog {
    points: usize,
    max_bandwidth: f64,
}

impl WideningLog {
    fn record(&mut self, h0: f64, used: f64) {
        if used > h0 {
            self.points += 1;
            self.max_bandwidth = self.max_bandwidth.max(used);
        }
    }

    pub fn flush(self, stage: Stage, diag: &mut Diagnostics) {
        if self.points > 0 {
            diag.push(Warning::WindowWidened {
                stage,
                points: self.points,
                max_bandwidth: self.max_bandwidth,
            });
        }
    }
}

pub(crate) fn smooth_curve(
    sc: &Scatter1,
    kernel: KernelSpec,
    points: &[f64],
    h: f64,
    deriv: usize,
    log: &mut WideningLog,
) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|&x| match widen(h, |hh| fit1_at(sc, kernel, x, hh, deriv)) {
            Ok((v, used)) => {
                log.record(h, used);
                Ok(v)
            }
            Err((o, used)) => Err(failure(o, x, None, used)),
        })
        .collect()
}

/// Surface fit on the tensor grid `points × points`, row-major `[t][s]`.
///
/// Points inside the `t`-window of a grid row are gathered once and sorted
/// by `s`, so each cell only visits its own `s`-window.
pub(crate) fn smooth_surface(
    sc: &Scatter2,
    kernel: KernelSpec,
    points: &[f64],
    h: f64,
    deriv: usize,
    log: &mut WideningLog,
) -> Result<Vec<f64>> {
    let m = points.len();
    let mut out = alloc::vec![0.0; m * m];
    let mut row: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (a, &x) in points.iter().enumerate() {
        row.clear();
        for p in &sc.points[sc.t_window(x, h)] {
            let u = (p.t - x) / h;
            let w = kernel.eval(u) * p.count;
            if w > 0.0 {
                row.push((p.s, u, p.y, w));
            }
        }
        row.sort_by(|l, r| l.0.total_cmp(&r.0));
        for (b, &y) in points.iter().enumerate() {
            let lo = row.partition_point(|e| e.0 <= y - h);
            let hi = row.partition_point(|e| e.0 < y + h).max(lo);
            let outcome = match deriv {
                0 => accumulate::<3>(&row[lo..hi], kernel, y, h, 0),
                _ => accumulate::<4>(&row[lo..hi], kernel, y, h, 1),
            };
            out[a * m + b] = match outcome {
                Outcome::Value(v) => v,
                _ => match widen(h, |hh| fit2_at(sc, kernel, x, y, hh, deriv)) {
                    Ok((v, used)) => {
                        log.record(h, used);
                        v
                    }
                    Err((o, used)) => return Err(failure(o, x, Some(y), used)),
                },
            };
        }
    }
    Ok(out)
}

fn accumulate<const N: usize>(
    entries: &[(f64, f64, f64, f64)],
    kernel: KernelSpec,
    y: f64,
    h: f64,
    deriv: usize,
) -> Outcome {
    let mut ne = Normal::<N>::default();
    for &(s, u, val, wt) in entries {
        let v = (s - y) / h;
        let w = wt * kernel.eval(v);
        if w > 0.0 {
            ne.add(&powers2::<N>(u, v), val, w);
        }
    }
    ne.finish(h, deriv)
}
