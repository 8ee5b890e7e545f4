//! Pooled scatterplots with identical design points merged.
//!
//! Weighted least squares over repeated design points equals weighted least
//! squares over their means with the repeat counts folded into the weights,
//! so dense designs on a shared time grid collapse to a small scatter.

use alloc::vec;
use alloc::vec::Vec;

/// Above this many unique times, pair aggregation sorts instead of using a
/// dense accumulator table.
const DENSE_TABLE_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Point1 {
    pub t: f64,
    pub y: f64,
    pub count: f64,
}

/// 1D scatter sorted by `t` with unique abscissae.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scatter1 {
    pub points: Vec<Point1>,
}

impl Scatter1 {
    pub fn from_pairs(mut raw: Vec<(f64, f64)>) -> Self {
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<Point1> = Vec::with_capacity(raw.len());
        let mut sum = 0.0;
        for (t, y) in raw {
            match points.last_mut() {
                Some(last) if last.t == t => {
                    last.count += 1.0;
                    sum += y;
                    last.y = sum / last.count;
                }
                _ => {
                    sum = y;
                    points.push(Point1 { t, y, count: 1.0 });
                }
            }
        }
        Self { points }
    }

    /// Indices of points with `|t - x| < h`.
    pub fn window(&self, x: f64, h: f64) -> core::ops::Range<usize> {
        let lo = self.points.partition_point(|p| p.t <= x - h);
        let hi = self.points.partition_point(|p| p.t < x + h);
        lo..hi.max(lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Point2 {
    pub t: f64,
    pub s: f64,
    pub y: f64,
    pub count: f64,
}

/// 2D scatter of raw covariances sorted by `(t, s)` with unique design points.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scatter2 {
    pub points: Vec<Point2>,
}

impl Scatter2 {
    /// Raw covariance products `r_j·r_l` for every subject, over ordered
    /// pairs `j ≠ l` (or all pairs when `include_diagonal`).
    pub fn from_residuals<'a>(
        subjects: impl Iterator<Item = (&'a [f64], &'a [f64])> + Clone,
        include_diagonal: bool,
    ) -> Self {
        let mut times: Vec<f64> = subjects
            .clone()
            .flat_map(|(t, _)| t.iter().copied())
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let u = times.len();
        let index = |t: f64| times.binary_search_by(|p| p.total_cmp(&t)).unwrap_or(0);

        let mut points = Vec::new();
        if u <= DENSE_TABLE_LIMIT {
            let mut sum = vec![0.0; u * u];
            let mut count = vec![0u32; u * u];
            for (ts, rs) in subjects {
                let idx: Vec<usize> = ts.iter().map(|&t| index(t)).collect();
                for j in 0..ts.len() {
                    for l in 0..ts.len() {
                        if j == l && !include_diagonal {
                            continue;
                        }
                        let cell = idx[j] * u + idx[l];
                        sum[cell] += rs[j] * rs[l];
                        count[cell] += 1;
                    }
                }
            }
            for a in 0..u {
                for b in 0..u {
                    let c = count[a * u + b];
                    if c > 0 {
                        points.push(Point2 {
                            t: times[a],
                            s: times[b],
                            y: sum[a * u + b] / c as f64,
                            count: c as f64,
                        });
                    }
                }
            }
        } else {
            let mut triples: Vec<(u32, u32, f64)> = Vec::new();
            for (ts, rs) in subjects {
                let idx: Vec<u32> = ts.iter().map(|&t| index(t) as u32).collect();
                for j in 0..ts.len() {
                    for l in 0..ts.len() {
                        if j == l && !include_diagonal {
                            continue;
                        }
                        triples.push((idx[j], idx[l], rs[j] * rs[l]));
                    }
                }
            }
            // Stable sort keeps the summation order deterministic.
            triples.sort_by_key(|&(a, b, _)| (a, b));
            let mut i = 0;
            while i < triples.len() {
                let key = (triples[i].0, triples[i].1);
                let mut sum = 0.0;
                let mut c = 0u32;
                while i < triples.len() && (triples[i].0, triples[i].1) == key {
                    sum += triples[i].2;
                    c += 1;
                    i += 1;
                }
                points.push(Point2 {
                    t: times[key.0 as usize],
                    s: times[key.1 as usize],
                    y: sum / c as f64,
                    count: c as f64,
                });
            }
        }
        Self { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of points with `|t - x| < h` (the `s` coordinate unchecked).
    pub fn t_window(&self, x: f64, h: f64) -> core::ops::Range<usize> {
        let lo = self.points.partition_point(|p| p.t <= x - h);
        let hi = self.points.partition_point(|p| p.t < x + h);
        lo..hi.max(lo)
    }
}
