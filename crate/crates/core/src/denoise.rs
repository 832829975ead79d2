//! Interval reduction under a Lipschitz hypothesis class.
//!
//! If every hypothesis is `m`-Lipschitz, the interval `[l', u']` observed at
//! `x'` forces `f(x)` into `[l' - m d, u' + m d]` with `d = ||x - x'||`.
//! Intersecting these induced bounds over a dataset gives the reduced
//! interval at `x`. For hypotheses that only lie inside the intervals up to
//! an expected projection loss `eta`, the reduced interval is widened by
//! buffers `r` and `s` solving `mean_i (r - lg_i)_+^p = eta`, where `lg_i` is
//! how far sample `i`'s induced lower bound falls short of the best one
//! (similarly `s` with the upper gaps). All expectations are empirical means
//! over the dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalDataset, IntervalSample};
use crate::loss::LossFamily;

const MAX_BISECTION_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Norm {
    #[default]
    Euclidean,
    LInf,
}

impl Norm {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::LInf => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundGaps {
    pub lower_gap: f64,
    pub upper_gap: f64,
}

/// `[base_lower - r_buffer, base_upper + s_buffer]` plus which samples attain the base bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedInterval {
    pub base_lower: f64,
    pub base_upper: f64,
    pub r_buffer: f64,
    pub s_buffer: f64,
    pub arg_lower: usize,
    pub arg_upper: usize,
    /// Set when the induced bounds have no common point (`base_lower > base_upper`).
    pub empty: bool,
}

impl ReducedInterval {
    /// The buffered interval, or `None` when empty.
    pub fn effective(&self) -> Option<Interval> {
        (!self.empty).then(|| {
            Interval::from_raw(
                self.base_lower - self.r_buffer,
                self.base_upper + self.s_buffer,
            )
        })
    }

    /// The unbuffered intersection, or `None` when empty.
    pub fn base(&self) -> Option<Interval> {
        (!self.empty).then(|| Interval::from_raw(self.base_lower, self.base_upper))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseQuery {
    pub query_x: Vec<f64>,
    /// Lipschitz constant of the hypothesis class.
    pub m: f64,
    pub eta: f64,
    pub family: LossFamily,
    pub norm: Norm,
}

impl DenoiseQuery {
    pub fn new(query_x: Vec<f64>, m: f64, eta: f64, family: LossFamily) -> Result<Self> {
        validate_m(m)?;
        validate_eta(eta)?;
        Ok(Self {
            query_x,
            m,
            eta,
            family,
            norm: Norm::Euclidean,
        })
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }
}

fn validate_m(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "Lipschitz constant must be > 0, got {m}"
        )))
    }
}

fn validate_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("eta must be >= 0, got {eta}")))
    }
}

fn check_dim(ds: &IntervalDataset, query_x: &[f64]) -> Result<()> {
    if query_x.len() != ds.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.feature_dim(),
            got: query_x.len(),
        });
    }
    Ok(())
}

/// Bounds on `f(query_x)` implied by one sample: `[l - m d, u + m d]`.
pub fn induced_bounds(
    sample: &IntervalSample,
    m: f64,
    query_x: &[f64],
    norm: Norm,
) -> Result<Interval> {
    validate_m(m)?;
    if sample.features.len() != query_x.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.features.len(),
            got: query_x.len(),
        });
    }
    Ok(induced_unchecked(sample, m, query_x, norm))
}

#[inline]
fn induced_unchecked(sample: &IntervalSample, m: f64, query_x: &[f64], norm: Norm) -> Interval {
    let reach = m * norm.distance(&sample.features, query_x);
    Interval::from_raw(
        sample.interval.lower() - reach,
        sample.interval.upper() + reach,
    )
}

/// Intersection of the induced bounds of every sample, without buffers.
pub fn reduced_interval(
    ds: &IntervalDataset,
    m: f64,
    query_x: &[f64],
    norm: Norm,
) -> Result<ReducedInterval> {
    validate_m(m)?;
    check_dim(ds, query_x)?;
    let mut base_lower = f64::NEG_INFINITY;
    let mut base_upper = f64::INFINITY;
    let (mut arg_lower, mut arg_upper) = (0, 0);
    for (i, sample) in ds.samples().iter().enumerate() {
        let b = induced_unchecked(sample, m, query_x, norm);
        if b.lower() > base_lower {
            base_lower = b.lower();
            arg_lower = i;
        }
        if b.upper() < base_upper {
            base_upper = b.upper();
            arg_upper = i;
        }
    }
    Ok(ReducedInterval {
        base_lower,
        base_upper,
        r_buffer: 0.0,
        s_buffer: 0.0,
        arg_lower,
        arg_upper,
        empty: base_lower > base_upper,
    })
}

/// Lower and upper bound gaps of every sample relative to the reduced interval at `query_x`.
pub fn all_bound_gaps(
    ds: &IntervalDataset,
    m: f64,
    query_x: &[f64],
    norm: Norm,
) -> Result<Vec<BoundGaps>> {
    let reduced = reduced_interval(ds, m, query_x, norm)?;
    if reduced.empty {
        return Err(Error::EmptyReducedInterval);
    }
    Ok(ds
        .samples()
        .iter()
        .map(|s| {
            let b = induced_unchecked(s, m, query_x, norm);
            BoundGaps {
                lower_gap: reduced.base_lower - b.lower(),
                upper_gap: b.upper() - reduced.base_upper,
            }
        })
        .collect())
}

pub fn bound_gaps(
    ds: &IntervalDataset,
    m: f64,
    query_x: &[f64],
    sample_index: usize,
    norm: Norm,
) -> Result<BoundGaps> {
    if sample_index >= ds.len() {
        return Err(Error::InvalidConfig(format!(
            "sample index {sample_index} out of range for {} samples",
            ds.len()
        )));
    }
    Ok(all_bound_gaps(ds, m, query_x, norm)?[sample_index])
}

/// `mean_i (r - gap_i)_+^p`.
fn buffer_mass(gaps: &[f64], family: LossFamily, r: f64) -> f64 {
    gaps.iter()
        .map(|&g| family.psi((r - g).max(0.0)))
        .sum::<f64>()
        / gaps.len() as f64
}

/// Root of `mean_i (r - gap_i)_+^p = eta` on `[0, max gap + eta^(1/p)]` by bisection.
fn solve_buffer(gaps: &[f64], family: LossFamily, eta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0_f64, max_gap + family.psi_inverse(eta));
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if buffer_mass(gaps, family, mid) < eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (res_lo, res_hi) = (
        (buffer_mass(gaps, family, lo) - eta).abs(),
        (buffer_mass(gaps, family, hi) - eta).abs(),
    );
    if res_lo <= res_hi {
        lo
    } else {
        hi
    }
}

/// Buffers `(r, s)` that widen the reduced interval to cover every hypothesis with
/// empirical expected projection loss at most `q.eta`.
pub fn buffer_radius(ds: &IntervalDataset, q: &DenoiseQuery) -> Result<(f64, f64)> {
    validate_eta(q.eta)?;
    let gaps = all_bound_gaps(ds, q.m, &q.query_x, q.norm)?;
    Ok(buffers_from_gaps(&gaps, q.family, q.eta))
}

fn buffers_from_gaps(gaps: &[BoundGaps], family: LossFamily, eta: f64) -> (f64, f64) {
    let lower: Vec<f64> = gaps.iter().map(|g| g.lower_gap).collect();
    let upper: Vec<f64> = gaps.iter().map(|g| g.upper_gap).collect();
    (
        solve_buffer(&lower, family, eta),
        solve_buffer(&upper, family, eta),
    )
}

/// Residual `mean_i (r - gap_i)_+^p - eta`, exposed for diagnostics.
pub fn buffer_residual(gaps: &[f64], family: LossFamily, eta: f64, r: f64) -> f64 {
    buffer_mass(gaps, family, r) - eta
}

fn grid_bound(gaps: &[f64], family: LossFamily, eta: f64, delta_grid: &[f64]) -> Option<f64> {
    let n = gaps.len() as f64;
    delta_grid
        .iter()
        .filter_map(|&delta| {
            let prob = gaps.iter().filter(|&&g| g <= delta).count() as f64 / n;
            (prob > 0.0).then(|| delta + family.psi_inverse(eta / prob))
        })
        .reduce(f64::min)
}

/// Upper bounds on the buffers: `min_delta delta + (eta / Pr(gap <= delta))^(1/p)` over a grid.
pub fn buffer_upper_bound(
    ds: &IntervalDataset,
    q: &DenoiseQuery,
    delta_grid: &[f64],
) -> Result<(f64, f64)> {
    validate_eta(q.eta)?;
    if delta_grid.is_empty() || delta_grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidConfig(
            "delta grid must be nonempty with finite entries >= 0".into(),
        ));
    }
    let gaps = all_bound_gaps(ds, q.m, &q.query_x, q.norm)?;
    let lower: Vec<f64> = gaps.iter().map(|g| g.lower_gap).collect();
    let upper: Vec<f64> = gaps.iter().map(|g| g.upper_gap).collect();
    let none =
        || Error::Degenerate("every delta in the grid has zero empirical probability".into());
    Ok((
        grid_bound(&lower, q.family, q.eta, delta_grid).ok_or_else(none)?,
        grid_bound(&upper, q.family, q.eta, delta_grid).ok_or_else(none)?,
    ))
}

/// Empirical `E_x[1 / min(Pr(lg <= tau), Pr(ug <= tau))]` over the query points.
pub fn gamma_estimate(
    ds: &IntervalDataset,
    m: f64,
    tau: f64,
    query_points: &[Vec<f64>],
    norm: Norm,
) -> Result<f64> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be >= 0, got {tau}")));
    }
    if query_points.is_empty() {
        return Err(Error::InvalidConfig("no query points".into()));
    }
    let n = ds.len() as f64;
    let mut total = 0.0;
    for x in query_points {
        let gaps = all_bound_gaps(ds, m, x, norm)?;
        let lower = gaps.iter().filter(|g| g.lower_gap <= tau).count() as f64 / n;
        let upper = gaps.iter().filter(|g| g.upper_gap <= tau).count() as f64 / n;
        let smallest = lower.min(upper);
        if smallest == 0.0 {
            return Err(Error::Degenerate(format!(
                "no sample has a gap <= {tau} at a query point"
            )));
        }
        total += 1.0 / smallest;
    }
    Ok(total / query_points.len() as f64)
}

/// Reduced intervals with buffers for many query points, in parallel.
///
/// Empty rows carry zero buffers.
pub fn reduce_all(
    ds: &IntervalDataset,
    queries: &[Vec<f64>],
    m: f64,
    eta: f64,
    family: LossFamily,
    norm: Norm,
) -> Result<Vec<ReducedInterval>> {
    validate_m(m)?;
    validate_eta(eta)?;
    queries
        .par_iter()
        .map(|x| {
            let mut reduced = reduced_interval(ds, m, x, norm)?;
            if !reduced.empty && eta > 0.0 {
                let gaps = all_bound_gaps(ds, m, x, norm)?;
                let (r, s) = buffers_from_gaps(&gaps, family, eta);
                reduced.r_buffer = r;
                reduced.s_buffer = s;
            }
            Ok(reduced)
        })
        .collect()
}

/// Per-group intersection of all observed intervals at one input.
pub fn intersect_groups(
    groups: &[(Vec<f64>, Vec<Interval>)],
) -> Result<Vec<(Vec<f64>, Option<Interval>)>> {
    groups
        .iter()
        .map(|(x, intervals)| Ok((x.clone(), intersect_all(intervals)?)))
        .collect()
}

fn intersect_all(intervals: &[Interval]) -> Result<Option<Interval>> {
    let first = intervals
        .first()
        .ok_or_else(|| Error::InvalidConfig("interval group is empty".into()))?;
    let lower = intervals
        .iter()
        .map(Interval::lower)
        .fold(first.lower(), f64::max);
    let upper = intervals
        .iter()
        .map(Interval::upper)
        .fold(first.upper(), f64::min);
    Ok((lower <= upper).then(|| Interval::from_raw(lower, upper)))
}

/// Several intervals observed for the same input and its true target.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityGroup {
    pub features: Vec<f64>,
    pub true_y: f64,
    pub intervals: Vec<Interval>,
}

/// Smallest `r` such that every group's intersection lies in `[y - r, y + r]`.
pub fn ambiguity_radius(groups: &[AmbiguityGroup]) -> Result<f64> {
    let mut radius = 0.0_f64;
    for (row, g) in groups.iter().enumerate() {
        if let Some(bad) = g.intervals.iter().find(|iv| !iv.contains(g.true_y)) {
            return Err(Error::TargetOutsideInterval {
                row,
                lower: bad.lower(),
                upper: bad.upper(),
                y: g.true_y,
            });
        }
        // every interval contains y, so the intersection is nonempty
        let common = intersect_all(&g.intervals)?.expect("intervals share true_y");
        radius = radius
            .max(g.true_y - common.lower())
            .max(common.upper() - g.true_y);
    }
    Ok(radius)
}
