//! Closed intervals and interval-labelled datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lower, upper]` with finite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower > upper {
            return Err(Error::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// The degenerate interval `[y, y]`.
    pub fn point(y: f64) -> Result<Self> {
        Self::new(y, y)
    }

    #[inline]
    pub fn lower(&self) -> f64 {
        self.lower
    }

    #[inline]
    pub fn upper(&self) -> f64 {
        self.upper
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    #[inline]
    pub fn midpoint(&self) -> f64 {
        (self.lower + self.upper) / 2.0
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    /// Boundary-inclusive membership.
    #[inline]
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }

    /// Intersection, or `None` when the intervals are disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lower = self.lower.max(other.lower);
        let upper = self.upper.min(other.upper);
        (lower <= upper).then_some(Interval { lower, upper })
    }

    /// Multiplies both endpoints by a positive factor.
    pub(crate) fn scaled(&self, factor: f64) -> Interval {
        debug_assert!(factor > 0.0);
        Interval {
            lower: self.lower * factor,
            upper: self.upper * factor,
        }
    }

    pub(crate) fn from_raw(lower: f64, upper: f64) -> Interval {
        debug_assert!(lower <= upper);
        Interval { lower, upper }
    }
}

/// Free-function form of [`Interval::contains`].
pub fn contains(iv: &Interval, y: f64) -> bool {
    iv.contains(y)
}

/// One row of interval supervision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSample {
    pub features: Vec<f64>,
    pub interval: Interval,
    /// Hidden exact target, only present for synthetic or benchmark data.
    pub true_y: Option<f64>,
}

impl IntervalSample {
    pub fn new(features: Vec<f64>, interval: Interval, true_y: Option<f64>) -> Result<Self> {
        if let Some(y) = true_y {
            if !interval.contains(y) {
                return Err(Error::TargetOutsideInterval {
                    row: 0,
                    lower: interval.lower(),
                    upper: interval.upper(),
                    y,
                });
            }
        }
        Ok(Self {
            features,
            interval,
            true_y,
        })
    }
}

/// A nonempty list of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDataset {
    samples: Vec<IntervalSample>,
    feature_dim: usize,
}

impl IntervalDataset {
    pub fn new(samples: Vec<IntervalSample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let feature_dim = first.features.len();
        if feature_dim == 0 {
            return Err(Error::InvalidConfig(
                "feature dimension must be positive".into(),
            ));
        }
        for (row, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    got: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row });
            }
            if let Some(y) = s.true_y {
                if !y.is_finite() {
                    return Err(Error::NonFinite { row });
                }
                if !s.interval.contains(y) {
                    return Err(Error::TargetOutsideInterval {
                        row,
                        lower: s.interval.lower(),
                        upper: s.interval.upper(),
                        y,
                    });
                }
            }
        }
        Ok(Self {
            samples,
            feature_dim,
        })
    }

    /// Builds a supervised dataset where every interval is the point `[y, y]`.
    pub fn from_exact(xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let samples = xs
            .iter()
            .zip(ys)
            .enumerate()
            .map(|(row, (x, &y))| {
                let interval = Interval::point(y).map_err(|_| Error::NonFinite { row })?;
                Ok(IntervalSample {
                    features: x.clone(),
                    interval,
                    true_y: Some(y),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    #[inline]
    pub fn samples(&self) -> &[IntervalSample] {
        &self.samples
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features.clone()).collect()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.samples.iter().map(|s| s.interval).collect()
    }

    pub fn has_truth(&self) -> bool {
        self.samples.iter().all(|s| s.true_y.is_some())
    }

    /// True targets for every row, or an error naming the first row without one.
    pub fn true_targets(&self) -> Result<Vec<f64>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(row, s)| {
                s.true_y
                    .ok_or_else(|| Error::MissingTruth(format!("row {row} has no true target")))
            })
            .collect()
    }

    /// Subset by row indices, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Self::new(rows.iter().map(|&i| self.samples[i].clone()).collect())
    }

    pub fn into_samples(self) -> Vec<IntervalSample> {
        self.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_is_boundary_inclusive() {
        let iv = Interval::new(2.0, 4.0).unwrap();
        assert!(contains(&iv, 3.0));
        assert!(contains(&iv, 2.0));
        assert!(contains(&iv, 4.0));
        assert!(!contains(&iv, 4.0001));
    }

    #[test]
    fn rejects_reversed_and_non_finite() {
        assert!(Interval::new(3.0, 2.0).is_err());
        assert!(Interval::new(f64::NAN, 2.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Interval::new(5.0, 5.0).is_ok());
    }

    #[test]
    fn intersect_disjoint_is_none() {
        let a = Interval::new(0.0, 1.0).unwrap();
        let b = Interval::new(2.0, 3.0).unwrap();
        assert_eq!(a.intersect(&b), None);
        let c = Interval::new(0.5, 5.0).unwrap();
        assert_eq!(a.intersect(&c), Some(Interval::new(0.5, 1.0).unwrap()));
    }

    #[test]
    fn dataset_rejects_truth_outside_interval() {
        let s = IntervalSample {
            features: vec![0.0],
            interval: Interval::new(0.0, 1.0).unwrap(),
            true_y: Some(2.0),
        };
        assert!(matches!(
            IntervalDataset::new(vec![s]),
            Err(Error::TargetOutsideInterval { .. })
        ));
    }

    #[test]
    fn dataset_rejects_mixed_dims_and_empty() {
        let a = IntervalSample::new(vec![0.0], Interval::point(1.0).unwrap(), None).unwrap();
        let b = IntervalSample::new(vec![0.0, 1.0], Interval::point(1.0).unwrap(), None).unwrap();
        assert!(IntervalDataset::new(vec![a, b]).is_err());
        assert!(matches!(
            IntervalDataset::new(vec![]),
            Err(Error::EmptyDataset)
        ));
    }
}
