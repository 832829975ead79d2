//! Synthetic interval targets from exact regression targets.
//!
//! Each target `y` gets a width `q` and a location `p in [0, 1]` and becomes
//! `[y - p q, y + (1 - p) q]`, so `p = 0` puts `y` on the lower boundary and
//! `p = 1` on the upper one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalDataset, IntervalSample};
use crate::rng::{row_stream, Purpose};

/// Distribution of the relative location `p` of the true target inside its interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum LocationLaw {
    /// `p ~ U[p_min, p_max]`.
    UniformRange { p_min: f64, p_max: f64 },
    /// `p ~ U[0.5 - c, 0.5 + c]`.
    MidCentered { c: f64 },
    /// `p` uniform on `[0, 0.5 - c] ∪ [0.5 + c, 1]`.
    BoundaryFavoring { c: f64 },
}

impl LocationLaw {
    pub const UNIFORM: LocationLaw = LocationLaw::UniformRange {
        p_min: 0.0,
        p_max: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LocationLaw::UniformRange { p_min, p_max } => {
                (0.0..=1.0).contains(&p_min) && (0.0..=1.0).contains(&p_max) && p_min <= p_max
            }
            LocationLaw::MidCentered { c } | LocationLaw::BoundaryFavoring { c } => {
                (0.0..=0.5).contains(&c)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid location law {self:?}"
            )))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LocationLaw::UniformRange { p_min, p_max } => {
                p_min + rng.random::<f64>() * (p_max - p_min)
            }
            LocationLaw::MidCentered { c } => 0.5 - c + rng.random::<f64>() * (2.0 * c),
            LocationLaw::BoundaryFavoring { c } => {
                let lower_side = rng.random::<f64>() < 0.5;
                let offset = rng.random::<f64>() * (0.5 - c);
                if lower_side {
                    offset
                } else {
                    0.5 + c + offset
                }
            }
        }
    }

    /// Short label used in result tables, e.g. `uniform[0,1]`.
    pub fn describe(&self) -> String {
        match *self {
            LocationLaw::UniformRange { p_min, p_max } => format!("uniform[{p_min},{p_max}]"),
            LocationLaw::MidCentered { c } => format!("mid(c={c})"),
            LocationLaw::BoundaryFavoring { c } => format!("boundary(c={c})"),
        }
    }
}

impl Default for LocationLaw {
    fn default() -> Self {
        Self::UNIFORM
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalGenConfig {
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default)]
    pub location: LocationLaw,
    #[serde(default)]
    pub pad_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl IntervalGenConfig {
    /// Widths `U[0, q_max]`, locations `U[0, 1]`, no padding.
    pub fn uniform(q_max: f64, seed: u64) -> Self {
        Self {
            q_min: 0.0,
            q_max,
            location: LocationLaw::UNIFORM,
            pad_scale: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_min.is_finite() && self.q_max.is_finite())
            || self.q_min < 0.0
            || self.q_max < self.q_min
        {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= q_min <= q_max, got q_min={} q_max={}",
                self.q_min, self.q_max
            )));
        }
        if !(self.pad_scale.is_finite() && self.pad_scale >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pad_scale must be >= 0, got {}",
                self.pad_scale
            )));
        }
        self.location.validate()
    }

    /// Label for result tables.
    pub fn describe(&self) -> String {
        let mut s = format!(
            "q[{},{}] {}",
            self.q_min,
            self.q_max,
            self.location.describe()
        );
        if self.pad_scale > 0.0 {
            s.push_str(&format!(" pad={}", self.pad_scale));
        }
        s
    }

    /// The `(q, p)` pair for row `row`. Depends only on `(seed, row)`.
    pub fn draw(&self, row: usize) -> (f64, f64) {
        let mut q_rng = row_stream(self.seed, Purpose::IntervalWidth, row as u64);
        let mut p_rng = row_stream(self.seed, Purpose::IntervalLocation, row as u64);
        let q = self.q_min + q_rng.random::<f64>() * (self.q_max - self.q_min);
        let p = self.location.sample(&mut p_rng);
        (q, p)
    }
}

/// `[y - p q, y + (1 - p) q]`.
pub fn interval_from_draw(y: f64, q: f64, p: f64) -> Interval {
    // p, q >= 0 so both products are nonnegative and y stays inside after rounding
    Interval::from_raw(y - p * q, y + (1.0 - p) * q)
}

pub fn generate_intervals(
    xs: &[Vec<f64>],
    ys: &[f64],
    cfg: &IntervalGenConfig,
) -> Result<IntervalDataset> {
    cfg.validate()?;
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
            if !y.is_finite() {
                return Err(Error::NonFinite { row });
            }
            let (q, p) = cfg.draw(row);
            Ok(IntervalSample {
                features: x.clone(),
                interval: interval_from_draw(y, q, p),
                true_y: Some(y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = IntervalDataset::new(samples)?;
    if cfg.pad_scale > 0.0 {
        pad_intervals(&ds, cfg.pad_scale)
    } else {
        Ok(ds)
    }
}

/// Replaces the targets of an existing dataset (which must carry `true_y`) with generated intervals.
pub fn regenerate(ds: &IntervalDataset, cfg: &IntervalGenConfig) -> Result<IntervalDataset> {
    let ys = ds.true_targets()?;
    generate_intervals(&ds.features(), &ys, cfg)
}

/// Widens each `[l, u]` of width `q` to `[l - s q, u + s q]`.
pub fn pad_intervals(ds: &IntervalDataset, s: f64) -> Result<IntervalDataset> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "padding scale must be >= 0, got {s}"
        )));
    }
    let samples = ds
        .samples()
        .iter()
        .map(|sample| {
            let iv = sample.interval;
            let pad = s * iv.width();
            IntervalSample {
                interval: Interval::from_raw(iv.lower() - pad, iv.upper() + pad),
                ..sample.clone()
            }
        })
        .collect();
    IntervalDataset::new(samples)
}
