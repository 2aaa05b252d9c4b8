//! Extended-range nonnegative reals: an `f64` mantissa in `[1, 2)` and an
//! `i64` binary exponent.

use std::cmp::Ordering;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtFloat {
    mantissa: f64,
    exponent: i64,
}

impl ExtFloat {
    pub const ZERO: ExtFloat = ExtFloat {
        mantissa: 0.0,
        exponent: 0,
    };
    pub const ONE: ExtFloat = ExtFloat {
        mantissa: 1.0,
        exponent: 0,
    };

    /// `m * 2^e` for finite nonnegative `m`.
    pub fn new(m: f64, e: i64) -> ExtFloat {
        assert!(m.is_finite() && m >= 0.0, "ExtFloat needs finite m >= 0, got {m}");
        if m == 0.0 {
            return ExtFloat::ZERO;
        }
        let (frac, exp) = libm::frexp(m);
        ExtFloat {
            mantissa: frac * 2.0,
            exponent: e + i64::from(exp) - 1,
        }
    }

    pub fn from_f64(x: f64) -> ExtFloat {
        ExtFloat::new(x, 0)
    }

    /// `exp(ln_value)`.
    pub fn from_ln(ln_value: f64) -> ExtFloat {
        if ln_value == f64::NEG_INFINITY {
            return ExtFloat::ZERO;
        }
        let log2 = ln_value / std::f64::consts::LN_2;
        let e = log2.floor();
        let m = ((log2 - e) * std::f64::consts::LN_2).exp();
        ExtFloat::new(m, e as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    pub fn mantissa(&self) -> f64 {
        self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn mul(self, other: ExtFloat) -> ExtFloat {
        if self.is_zero() || other.is_zero() {
            return ExtFloat::ZERO;
        }
        ExtFloat::new(self.mantissa * other.mantissa, self.exponent + other.exponent)
    }

    pub fn div(self, other: ExtFloat) -> ExtFloat {
        assert!(!other.is_zero(), "division by zero");
        if self.is_zero() {
            return ExtFloat::ZERO;
        }
        ExtFloat::new(self.mantissa / other.mantissa, self.exponent - other.exponent)
    }

    pub fn add(self, other: ExtFloat) -> ExtFloat {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exponent >= other.exponent {
            (self, other)
        } else {
            (other, self)
        };
        let gap = hi.exponent - lo.exponent;
        if gap > 1100 {
            return hi;
        }
        ExtFloat::new(hi.mantissa + lo.mantissa * 2f64.powi(-(gap as i32)), hi.exponent)
    }

    /// `self * 2^k` as a plain `f64` (may underflow or overflow).
    pub fn scaled_f64(&self, k: i64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let e = self.exponent + k;
        if e > 1100 {
            return f64::INFINITY;
        }
        if e < -1200 {
            return 0.0;
        }
        // split to avoid intermediate overflow in powi
        let half = e / 2;
        self.mantissa * 2f64.powi(half as i32) * 2f64.powi((e - half) as i32)
    }

    pub fn to_f64(&self) -> f64 {
        self.scaled_f64(0)
    }

    pub fn ln(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.mantissa.ln() + self.exponent as f64 * std::f64::consts::LN_2
    }

    pub fn log10(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.mantissa.log10() + self.exponent as f64 * std::f64::consts::LOG10_2
    }

    /// Scientific notation with `digits` significant digits.
    pub fn to_scientific(&self, digits: usize) -> String {
        if self.is_zero() {
            return format!("{:.*e}", digits.saturating_sub(1), 0.0);
        }
        // split the decimal exponent off so the remaining factor fits in f64
        let l = self.log10();
        let mut e10 = l.floor() as i64;
        let frac = self.ln() - e10 as f64 * std::f64::consts::LN_10;
        let mut m = frac.exp();
        if m >= 10.0 {
            m /= 10.0;
            e10 += 1;
        } else if m < 1.0 {
            m *= 10.0;
            e10 -= 1;
        }
        // exact path when the value is a normal f64
        if (-300..300).contains(&e10) {
            return format!("{:.*e}", digits.saturating_sub(1), self.to_f64());
        }
        let s = format!("{:.*e}", digits.saturating_sub(1), m);
        let (mant, exp) = s.split_once('e').expect("formatted with exponent");
        let exp: i64 = exp.parse().expect("integer exponent");
        format!("{mant}e{}", exp + e10)
    }
}

impl PartialOrd for ExtFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            _ => match self.exponent.cmp(&other.exponent) {
                Ordering::Equal => self.mantissa.partial_cmp(&other.mantissa),
                o => Some(o),
            },
        }
    }
}

impl fmt::Display for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_scientific(17))
    }
}
