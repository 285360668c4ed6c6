//! Floating-point values with an extended binary exponent.
//!
//! `Δ` grows like `φ^q` with `q = n⁴+n³+n²+1`, so `Δ`, `Y`, `Ω` and `Υ`
//! leave the `f64` exponent range long before anything is numerically wrong
//! with them. They are carried as a mantissa times `2^exp2`; multiplying by a
//! power of two is exact, so ratios such as `Y/Δ` and `Υ/Ω` are unaffected.

use std::cmp::Ordering;
use std::ops::Mul;

/// `mant · 2^exp2`, with `0.5 ≤ |mant| < 1` unless zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wide {
    mant: f64,
    exp2: i32,
}

impl Wide {
    pub const ZERO: Wide = Wide { mant: 0.0, exp2: 0 };

    /// Normalizes `mant · 2^exp2`. Non-finite mantissas are kept as-is.
    pub fn new(mant: f64, exp2: i32) -> Self {
        if mant == 0.0 || !mant.is_finite() {
            return Self {
                mant: if mant == 0.0 { 0.0 } else { mant },
                exp2: 0,
            };
        }
        let (m, e) = libm::frexp(mant);
        Self {
            mant: m,
            exp2: exp2.saturating_add(e),
        }
    }

    pub fn from_f64(v: f64) -> Self {
        Self::new(v, 0)
    }

    pub fn mant(&self) -> f64 {
        self.mant
    }

    pub fn exp2(&self) -> i32 {
        self.exp2
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.mant.is_finite()
    }

    /// Nearest `f64`; saturates to `±∞` or flushes to zero out of range.
    pub fn to_f64(&self) -> f64 {
        libm::ldexp(self.mant, self.exp2)
    }

    /// Mantissa expressed on the scale `2^exp2`, i.e. `self / 2^exp2`.
    pub fn on_scale(&self, exp2: i32) -> f64 {
        libm::ldexp(self.mant, self.exp2.saturating_sub(exp2))
    }

    /// `ln|x|`, `−∞` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mant.abs().ln() + self.exp2 as f64 * std::f64::consts::LN_2
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            mant: self.mant.abs(),
            exp2: self.exp2,
        }
    }

    /// Compares magnitudes.
    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self
                .exp2
                .cmp(&other.exp2)
                .then(self.mant.abs().total_cmp(&other.mant.abs())),
        }
    }

    pub fn powi(&self, k: u32) -> Self {
        (0..k).fold(Self::from_f64(1.0), |acc, _| acc * *self)
    }
}

impl Mul for Wide {
    type Output = Wide;
    fn mul(self, rhs: Wide) -> Wide {
        Wide::new(self.mant * rhs.mant, self.exp2.saturating_add(rhs.exp2))
    }
}

impl From<f64> for Wide {
    fn from(v: f64) -> Self {
        Self::from_f64(v)
    }
}

/// Expresses a set of values on one common scale `2^s`, chosen so that the
/// largest mantissa is at most 1 in magnitude. When every value is a normal
/// `f64` of moderate size the scale is `2^0` and the mantissas are the values.
pub fn common_scale(values: &[Wide]) -> (Vec<f64>, i32) {
    let top = values.iter().filter(|v| !v.is_zero()).map(|v| v.exp2).max();
    let bottom = values.iter().filter(|v| !v.is_zero()).map(|v| v.exp2).min();
    let s = match (top, bottom) {
        (Some(t), Some(b)) if t <= 256 && b >= -256 => 0,
        (Some(t), _) => t,
        _ => 0,
    };
    (values.iter().map(|v| v.on_scale(s)).collect(), s)
}
