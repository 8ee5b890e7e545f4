//! Sparse longitudinal observations and the evaluation grid.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed time interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidDomain { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lower && t <= self.upper
    }

    /// The middle `fraction` of the interval, e.g. `0.8` for the central 80%.
    pub fn central(&self, fraction: f64) -> Interval {
        let margin = 0.5 * (1.0 - fraction) * self.length();
        Interval {
            lower: self.lower + margin,
            upper: self.upper - margin,
        }
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
        }
    }
}

/// Observations of one subject, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if times.len() != values.len() {
            return Err(Error::InvalidSubject {
                subject: id,
                reason: alloc::format!(
                    "{} times but {} values",
                    times.len(),
                    values.len()
                ),
            });
        }
        if times.is_empty() {
            return Err(Error::InvalidSubject {
                subject: id,
                reason: "no observations".to_string(),
            });
        }
        if let Some(bad) = times.iter().chain(&values).find(|v| !v.is_finite()) {
            return Err(Error::InvalidSubject {
                subject: id,
                reason: alloc::format!("non-finite entry {bad}"),
            });
        }
        for pair in times.windows(2) {
            if pair[1] == pair[0] {
                return Err(Error::DuplicateTime {
                    subject: id,
                    time: pair[0],
                });
            }
            if pair[1] < pair[0] {
                return Err(Error::InvalidSubject {
                    subject: id,
                    reason: "times are not increasing".to_string(),
                });
            }
        }
        Ok(Self { id, times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// One parsed input row, before grouping by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub line: usize,
    pub subject: String,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDataset {
    subjects: Vec<SubjectRecord>,
    domain: Interval,
}

impl SparseDataset {
    pub fn new(subjects: Vec<SubjectRecord>, domain: Interval) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for s in &subjects {
            if let Some(&t) = s.times.iter().find(|&&t| !domain.contains(t)) {
                return Err(Error::InvalidSubject {
                    subject: s.id.clone(),
                    reason: alloc::format!(
                        "time {t} outside domain [{}, {}]",
                        domain.lower,
                        domain.upper
                    ),
                });
            }
        }
        if subjects.iter().all(|s| s.len() < 2) {
            return Err(Error::NoPairedSubject);
        }
        Ok(Self { subjects, domain })
    }

    /// Groups rows by subject id (first-appearance order) and sorts each
    /// subject's times. Rows outside `domain_override` are dropped and
    /// counted; without an override the domain is the observed time range.
    pub fn from_rows(
        rows: impl IntoIterator<Item = Row>,
        domain_override: Option<Interval>,
    ) -> Result<(Self, usize)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<Row>> = BTreeMap::new();
        let mut dropped = 0usize;
        let mut seen_any = false;
        for row in rows {
            seen_any = true;
            if !row.time.is_finite() || !row.value.is_finite() {
                return Err(Error::MalformedRow {
                    line: row.line,
                    reason: "non-finite number".to_string(),
                });
            }
            if let Some(d) = domain_override {
                if !d.contains(row.time) {
                    dropped += 1;
                    continue;
                }
            }
            if !groups.contains_key(&row.subject) {
                order.push(row.subject.clone());
            }
            groups.entry(row.subject.clone()).or_default().push(row);
        }
        if !seen_any || groups.is_empty() {
            return Err(Error::EmptyDataset);
        }

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut subjects = Vec::with_capacity(order.len());
        for id in order {
            let mut rows = groups.remove(&id).unwrap_or_default();
            rows.sort_by(|a, b| a.time.total_cmp(&b.time));
            for pair in rows.windows(2) {
                if pair[0].time == pair[1].time {
                    return Err(Error::DuplicateTime {
                        subject: id,
                        time: pair[1].time,
                    });
                }
            }
            lo = lo.min(rows[0].time);
            hi = hi.max(rows[rows.len() - 1].time);
            let times = rows.iter().map(|r| r.time).collect();
            let values = rows.iter().map(|r| r.value).collect();
            subjects.push(SubjectRecord::new(id, times, values)?);
        }
        let domain = match domain_override {
            Some(d) => d,
            None => Interval::new(lo, hi)?,
        };
        Ok((Self::new(subjects, domain)?, dropped))
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn total_observations(&self) -> usize {
        self.subjects.iter().map(SubjectRecord::len).sum()
    }

    /// Applies `f` to every observed value, keeping times and ids.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                SubjectRecord::new(
                    s.id.clone(),
                    s.times.clone(),
                    s.values.iter().map(|&v| f(v)).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subjects, self.domain)
    }

    /// Keeps only the subjects whose position satisfies `keep`.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Option<Self> {
        let subjects: Vec<_> = self
            .subjects
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, s)| s.clone())
            .collect();
        Self::new(subjects, self.domain).ok()
    }
}

/// Uniform evaluation grid with trapezoid quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

pub const DEFAULT_GRID_SIZE: usize = 101;

pub fn make_grid(domain: Interval, m: usize) -> Result<EvalGrid> {
    if m < 2 {
        return Err(Error::InvalidGridSize(m));
    }
    let step = domain.length() / (m - 1) as f64;
    // Dividing last keeps rational points such as the midpoint exact.
    let mut points: Vec<f64> = (0..m)
        .map(|i| domain.lower + domain.length() * (i as f64 / (m - 1) as f64))
        .collect();
    points[m - 1] = domain.upper;
    let mut weights = alloc::vec![step; m];
    weights[0] = 0.5 * step;
    weights[m - 1] = 0.5 * step;
    Ok(EvalGrid { points, weights })
}

impl EvalGrid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn domain(&self) -> Interval {
        Interval {
            lower: self.points[0],
            upper: self.points[self.points.len() - 1],
        }
    }

    pub fn step(&self) -> f64 {
        self.points[1] - self.points[0]
    }

    /// Index `i` and fraction `f` with `t ≈ (1 - f)·t_i + f·t_{i+1}`;
    /// times outside the grid are clamped to the nearest end.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let m = self.points.len();
        let a = self.points[0];
        let b = self.points[m - 1];
        if t <= a {
            return (0, 0.0);
        }
        if t >= b {
            return (m - 2, 1.0);
        }
        let pos = (t - a) / self.step();
        let i = (libm::floor(pos) as usize).min(m - 2);
        let frac = (t - self.points[i]) / (self.points[i + 1] - self.points[i]);
        (i, frac.clamp(0.0, 1.0))
    }

    /// Linear interpolation of a grid function at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let (i, f) = self.locate(t);
        if f == 0.0 {
            values[i]
        } else if f == 1.0 {
            values[i + 1]
        } else {
            (1.0 - f) * values[i] + f * values[i + 1]
        }
    }

    /// Trapezoid integral of a grid function over the whole domain.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Quadrature inner product `Σ w_m f(t_m) g(t_m)`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        libm::sqrt(self.inner(f, f))
    }

    /// Indices of grid points inside `interval`.
    pub fn indices_within(&self, interval: Interval) -> impl Iterator<Item = usize> + '_ {
        let eps = 1e-12 * self.domain().length();
        self.points
            .iter()
            .enumerate()
            .filter(move |(_, &t)| t >= interval.lower - eps && t <= interval.upper + eps)
            .map(|(i, _)| i)
    }

    pub(crate) fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.points.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: self.points.len(),
                actual: len,
            });
        }
        Ok(())
    }
}
