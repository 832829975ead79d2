//! Closed-form interval-compatible losses for the `|y - y'|^p` family.
//!
//! The projection loss is the smallest pointwise loss against any target in
//! `[l, u]`, the worst-case loss the largest. Both only ever look at the two
//! interval endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

/// Largest exponent accepted; keeps `|d|^p` finite on wide intervals.
pub const MAX_EXPONENT: f64 = 8.0;

/// `l(y, y') = |y - y'|^p` with `1 <= p <= 8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LossFamily {
    exponent: f64,
}

impl LossFamily {
    pub const L1: LossFamily = LossFamily { exponent: 1.0 };
    pub const L2: LossFamily = LossFamily { exponent: 2.0 };

    pub fn new(exponent: f64) -> Result<Self> {
        if !exponent.is_finite() || !(1.0..=MAX_EXPONENT).contains(&exponent) {
            return Err(Error::InvalidExponent(exponent));
        }
        Ok(Self { exponent })
    }

    #[inline]
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `psi(d) = d^p` for a distance `d >= 0`.
    #[inline]
    pub fn psi(&self, distance: f64) -> f64 {
        if self.exponent == 1.0 {
            distance
        } else if self.exponent == 2.0 {
            distance * distance
        } else {
            distance.powf(self.exponent)
        }
    }

    /// `d/da |a - b|^p`, with 0 at `a == b`.
    #[inline]
    pub fn derivative(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        if d == 0.0 {
            return 0.0;
        }
        let sign = d.signum();
        if self.exponent == 1.0 {
            sign
        } else if self.exponent == 2.0 {
            2.0 * d
        } else {
            self.exponent * d.abs().powf(self.exponent - 1.0) * sign
        }
    }

    /// Inverse of `psi`: `v^(1/p)`.
    #[inline]
    pub fn psi_inverse(&self, value: f64) -> f64 {
        if self.exponent == 1.0 {
            value
        } else if self.exponent == 2.0 {
            value.sqrt()
        } else {
            value.powf(1.0 / self.exponent)
        }
    }
}

impl Default for LossFamily {
    fn default() -> Self {
        Self::L1
    }
}

impl TryFrom<f64> for LossFamily {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<LossFamily> for f64 {
    fn from(f: LossFamily) -> f64 {
        f.exponent
    }
}

/// `|a - b|^p`.
#[inline]
pub fn psi_loss(family: LossFamily, a: f64, b: f64) -> f64 {
    family.psi((a - b).abs())
}

/// `min_{y in [l, u]} |yhat - y|^p`, which is zero inside the interval.
#[inline]
pub fn projection_loss(family: LossFamily, yhat: f64, iv: &Interval) -> f64 {
    if yhat < iv.lower() {
        psi_loss(family, yhat, iv.lower())
    } else if yhat > iv.upper() {
        psi_loss(family, yhat, iv.upper())
    } else {
        0.0
    }
}

/// Derivative of [`projection_loss`] in `yhat`; 0 inside the interval and on its boundary.
#[inline]
pub fn projection_loss_grad(family: LossFamily, yhat: f64, iv: &Interval) -> f64 {
    if yhat < iv.lower() {
        family.derivative(yhat, iv.lower())
    } else if yhat > iv.upper() {
        family.derivative(yhat, iv.upper())
    } else {
        0.0
    }
}

/// `max_{y in [l, u]} |yhat - y|^p`: distance to the far endpoint.
///
/// At the midpoint both endpoints are equally far; the upper one is used.
#[inline]
pub fn worstcase_loss(family: LossFamily, yhat: f64, iv: &Interval) -> f64 {
    if yhat <= iv.midpoint() {
        psi_loss(family, yhat, iv.upper())
    } else {
        psi_loss(family, yhat, iv.lower())
    }
}

/// Derivative of [`worstcase_loss`] in `yhat`; the subgradient 0 is used at the midpoint kink.
#[inline]
pub fn worstcase_loss_grad(family: LossFamily, yhat: f64, iv: &Interval) -> f64 {
    let mid = iv.midpoint();
    if yhat < mid {
        family.derivative(yhat, iv.upper())
    } else if yhat > mid {
        family.derivative(yhat, iv.lower())
    } else {
        0.0
    }
}

/// L1 worst-case loss split as `(|yhat - mid|, half_width)`.
#[inline]
pub fn worstcase_loss_l1_decomposed(yhat: f64, iv: &Interval) -> (f64, f64) {
    ((yhat - iv.midpoint()).abs(), iv.half_width())
}

/// `max(l(a.lower, b.upper), l(a.upper, b.lower))`, the largest loss between
/// any point of `a` and any point of `b`.
pub fn interval_distance(family: LossFamily, a: &Interval, b: &Interval) -> f64 {
    psi_loss(family, a.lower(), b.upper()).max(psi_loss(family, a.upper(), b.lower()))
}
