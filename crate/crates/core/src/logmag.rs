//! Nonnegative magnitudes stored as natural logarithms.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Mul};

/// A nonnegative number `x` stored as `ln x`; zero is `-inf`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LogMagnitude(f64);

impl LogMagnitude {
    pub const ZERO: LogMagnitude = LogMagnitude(f64::NEG_INFINITY);
    pub const ONE: LogMagnitude = LogMagnitude(0.0);

    /// Wraps a log value. NaN is rejected by a debug assertion.
    #[inline]
    pub fn from_log(log_value: f64) -> Self {
        debug_assert!(!log_value.is_nan());
        LogMagnitude(log_value)
    }

    /// Panics on negative or NaN input.
    pub fn from_value(x: f64) -> Self {
        assert!(x >= 0.0, "LogMagnitude::from_value on {x}");
        LogMagnitude(x.ln())
    }

    #[inline]
    pub fn log(self) -> f64 {
        self.0
    }

    /// The represented value; overflows to `inf` above ~e^709.
    #[inline]
    pub fn value(self) -> f64 {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// Multiplies by `e^shift`.
    #[inline]
    pub fn shift(self, shift: f64) -> Self {
        LogMagnitude(self.0 + shift)
    }

    pub fn max(self, other: Self) -> Self {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    /// `ln(e^a + e^b)`.
    #[inline]
    pub fn add_log(a: f64, b: f64) -> f64 {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        if lo == f64::NEG_INFINITY {
            return hi;
        }
        hi + (lo - hi).exp().ln_1p()
    }

    /// `ln(e^a - e^b)` for `a >= b`; returns `-inf` when equal.
    pub fn sub_log(a: f64, b: f64) -> f64 {
        assert!(a >= b, "LogMagnitude subtraction would go negative");
        if b == f64::NEG_INFINITY {
            return a;
        }
        let d = b - a;
        if d > -std::f64::consts::LN_2 {
            a + (-d.exp_m1()).ln()
        } else {
            a + (-d.exp()).ln_1p()
        }
    }

    /// `self - other`, requiring `self >= other`.
    pub fn difference(self, other: Self) -> Self {
        LogMagnitude(Self::sub_log(self.0, other.0))
    }
}

impl Add for LogMagnitude {
    type Output = LogMagnitude;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        LogMagnitude(Self::add_log(self.0, rhs.0))
    }
}

impl AddAssign for LogMagnitude {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Mul for LogMagnitude {
    type Output = LogMagnitude;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return LogMagnitude::ZERO;
        }
        LogMagnitude(self.0 + rhs.0)
    }
}

impl PartialOrd for LogMagnitude {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl fmt::Display for LogMagnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({})", self.0)
    }
}

impl std::iter::Sum for LogMagnitude {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = LogSum::new();
        for x in iter {
            acc.push(x);
        }
        acc.total()
    }
}

/// Streaming log-sum-exp: keeps a running maximum and a compensated sum
/// of `exp(x - max)`, so each push costs one `exp`.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    max: f64,
    sum: f64,
    comp: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSum {
    pub fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            comp: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, x: LogMagnitude) {
        self.push_log(x.0);
    }

    #[inline]
    pub fn push_log(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            let scale = (self.max - x).exp();
            self.sum *= scale;
            self.comp *= scale;
            self.max = x;
            self.kahan(1.0);
        } else {
            self.kahan((x - self.max).exp());
        }
    }

    #[inline]
    fn kahan(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> LogMagnitude {
        if self.max == f64::NEG_INFINITY {
            return LogMagnitude::ZERO;
        }
        LogMagnitude(self.max + (self.sum + self.comp).ln())
    }
}
