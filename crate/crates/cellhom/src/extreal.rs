//! Extended nonnegative reals `[0, inf]`.
//!
//! Energy densities take values here. Infinity absorbs addition and positive
//! scaling, so a single infinite quadrature sample poisons a whole integral —
//! exactly the barrier behaviour the minimizers rely on.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

use serde::{Serialize, Serializer};

/// A value in `[0, inf]`. Finite payloads are always `>= 0` and never NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinity,
}

/// Finite values serialize as plain numbers, infinity as the string "inf".
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => serializer.serialize_f64(*v),
            ExtReal::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Wraps a float, mapping `inf`/NaN/negative-rounding-noise to the
    /// appropriate extended value. Genuinely negative inputs panic: densities
    /// are nonnegative by construction.
    pub fn new(v: f64) -> ExtReal {
        if v.is_nan() || v == f64::INFINITY {
            return ExtReal::Infinity;
        }
        assert!(v >= -1e-12, "extended real from negative value {v}");
        ExtReal::Finite(v.max(0.0))
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinity)
    }

    /// Finite payload, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinity => None,
        }
    }

    /// Collapses to `f64`, with infinity mapped to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinity => f64::INFINITY,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::new(v)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinity,
        }
    }
}

impl AddAssign for ExtReal {
    fn add_assign(&mut self, rhs: ExtReal) {
        *self = *self + rhs;
    }
}

/// Scaling by a positive weight (quadrature weights, volumes).
impl Mul<f64> for ExtReal {
    type Output = ExtReal;
    fn mul(self, w: f64) -> ExtReal {
        debug_assert!(w >= 0.0, "extended reals scale by nonnegative weights");
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * w),
            ExtReal::Infinity => {
                if w == 0.0 {
                    // 0 * inf = 0 by the usual measure-theoretic convention.
                    ExtReal::ZERO
                } else {
                    ExtReal::Infinity
                }
            }
        }
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |acc, v| acc + v)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinity => write!(f, "inf"),
        }
    }
}
