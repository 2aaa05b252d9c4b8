//! Nonnegative binary floating point with a big-integer mantissa.
//!
//! Only what ensemble averaging needs: exact-ratio rounding, addition,
//! multiplication, comparison and lossless decimal text. Values are
//! `mantissa * 2^exponent` with the mantissa rounded to `precision`
//! significant bits.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::extfloat::ExtFloat;
use crate::{Error, Result};

/// Default mantissa length in bits.
pub const DEFAULT_PRECISION: u32 = 256;

#[derive(Clone, Debug)]
pub struct HpFloat {
    mantissa: BigUint,
    exponent: i64,
    precision: u32,
}

fn bits(x: &BigUint) -> i64 {
    x.bits() as i64
}

/// Rounds `m * 2^e` to `precision` bits, half to even.
fn round_to(m: BigUint, e: i64, precision: u32) -> (BigUint, i64) {
    let excess = bits(&m) - i64::from(precision);
    if excess <= 0 {
        return (m, e);
    }
    let shift = excess as u64;
    let kept = &m >> shift;
    let half = BigUint::one() << (shift - 1);
    let rem = &m - (&kept << shift);
    let round_up = match rem.cmp(&half) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => kept.is_odd(),
    };
    let kept = if round_up { kept + 1u32 } else { kept };
    if bits(&kept) > i64::from(precision) {
        (kept >> 1u32, e + excess + 1)
    } else {
        (kept, e + excess)
    }
}

impl HpFloat {
    pub fn zero(precision: u32) -> HpFloat {
        HpFloat {
            mantissa: BigUint::zero(),
            exponent: 0,
            precision,
        }
    }

    pub fn from_integer(n: &BigUint, precision: u32) -> HpFloat {
        HpFloat::from_parts(n.clone(), 0, precision)
    }

    fn from_parts(m: BigUint, e: i64, precision: u32) -> HpFloat {
        if m.is_zero() {
            return HpFloat::zero(precision);
        }
        let (mantissa, exponent) = round_to(m, e, precision);
        HpFloat {
            mantissa,
            exponent,
            precision,
        }
    }

    /// Correctly rounded `num / den`.
    pub fn from_ratio(num: &BigUint, den: &BigUint, precision: u32) -> HpFloat {
        assert!(!den.is_zero(), "division by zero");
        if num.is_zero() {
            return HpFloat::zero(precision);
        }
        // two extra bits plus a sticky bit decide the rounding exactly
        let shift = i64::from(precision) + 2 - (bits(num) - bits(den));
        let (q, r) = if shift >= 0 {
            (num << shift as u64).div_rem(den)
        } else {
            num.div_rem(&(den << (-shift) as u64))
        };
        let sticky = if r.is_zero() { 0u32 } else { 1 };
        let m = (q << 1u32) | BigUint::from(sticky);
        HpFloat::from_parts(m, -shift - 1, precision)
    }

    /// Exact conversion (rounded only if `precision` is below 53 bits).
    pub fn from_ext(x: ExtFloat, precision: u32) -> HpFloat {
        if x.is_zero() {
            return HpFloat::zero(precision);
        }
        let m = (x.mantissa() * 2f64.powi(52)) as u64;
        HpFloat::from_parts(BigUint::from(m), x.exponent() - 52, precision)
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn mantissa(&self) -> &BigUint {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    /// Position of the leading bit: value lies in `[2^(t-1), 2^t)`.
    fn top(&self) -> i64 {
        self.exponent + bits(&self.mantissa)
    }

    pub fn add(&self, other: &HpFloat) -> HpFloat {
        let precision = self.precision.max(other.precision);
        if other.is_zero() {
            return HpFloat::from_parts(self.mantissa.clone(), self.exponent, precision);
        }
        if self.is_zero() {
            return HpFloat::from_parts(other.mantissa.clone(), other.exponent, precision);
        }
        let top = self.top().max(other.top());
        let floor = top - i64::from(precision) - 64;
        let common = self.exponent.min(other.exponent).max(floor);
        let align = |x: &HpFloat| -> BigUint {
            let d = x.exponent - common;
            if d >= 0 {
                &x.mantissa << d as u64
            } else {
                let shifted = &x.mantissa >> (-d) as u64;
                // keep a sticky bit for anything shifted out
                if (&shifted << (-d) as u64) != x.mantissa {
                    shifted | BigUint::one()
                } else {
                    shifted
                }
            }
        };
        HpFloat::from_parts(align(self) + align(other), common, precision)
    }

    pub fn mul(&self, other: &HpFloat) -> HpFloat {
        let precision = self.precision.max(other.precision);
        HpFloat::from_parts(
            &self.mantissa * &other.mantissa,
            self.exponent + other.exponent,
            precision,
        )
    }

    /// Multiplication by an integer.
    pub fn mul_int(&self, n: &BigUint) -> HpFloat {
        HpFloat::from_parts(&self.mantissa * n, self.exponent, self.precision)
    }

    pub fn with_precision(&self, precision: u32) -> HpFloat {
        HpFloat::from_parts(self.mantissa.clone(), self.exponent, precision)
    }

    /// Nearest `f64`, saturating to infinity or zero outside its range.
    pub fn to_f64(&self) -> f64 {
        self.to_ext().to_f64()
    }

    pub fn to_ext(&self) -> ExtFloat {
        if self.is_zero() {
            return ExtFloat::ZERO;
        }
        let b = bits(&self.mantissa);
        let drop = (b - 60).max(0);
        let top = (&self.mantissa >> drop as u64).to_u64().expect("60 bits fit") as f64;
        ExtFloat::new(top, self.exponent + drop)
    }

    /// Relative difference `|a - b| / max(a, b)` as `f64`.
    pub fn relative_difference(&self, other: &HpFloat) -> f64 {
        if self.is_zero() && other.is_zero() {
            return 0.0;
        }
        let common = self.exponent.min(other.exponent);
        let a = &self.mantissa << (self.exponent - common) as u64;
        let b = &other.mantissa << (other.exponent - common) as u64;
        let (hi, diff) = if a >= b { (a.clone(), a - b) } else { (b.clone(), b - a) };
        HpFloat::from_ratio(&diff, &hi, 64).to_f64()
    }

    /// Decimal scientific notation with enough digits to round-trip.
    pub fn to_scientific(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let digits = (f64::from(self.precision) * std::f64::consts::LOG10_2).ceil() as i64 + 2;
        // decimal exponent estimate of the leading digit
        let approx = self.to_ext().log10().floor() as i64;
        let mut scale = digits - 1 - approx;
        loop {
            let n = self.scaled_integer(scale);
            let len = n.to_string().len() as i64;
            if len == digits {
                let s = n.to_string();
                let exp10 = len - 1 - scale;
                let (head, tail) = s.split_at(1);
                let tail = tail.trim_end_matches('0');
                return if tail.is_empty() {
                    format!("{head}e{exp10}")
                } else {
                    format!("{head}.{tail}e{exp10}")
                };
            }
            scale += digits - len;
        }
    }

    /// `round(value * 10^scale)`.
    fn scaled_integer(&self, scale: i64) -> BigUint {
        let mut num = self.mantissa.clone();
        let mut den = BigUint::one();
        if self.exponent >= 0 {
            num <<= self.exponent as u64;
        } else {
            den <<= (-self.exponent) as u64;
        }
        let p = BigUint::from(10u32).pow(scale.unsigned_abs() as u32);
        if scale >= 0 {
            num *= p;
        } else {
            den *= p;
        }
        (num * 2u32 + &den) / (den * 2u32)
    }

    /// Parses decimal scientific notation.
    pub fn parse(text: &str, precision: u32) -> Result<HpFloat> {
        let bad = || Error::Parse(format!("bad number `{text}`"));
        let t = text.trim();
        let (mant, exp) = match t.split_once(['e', 'E']) {
            Some((m, e)) => (m, e.parse::<i64>().map_err(|_| bad())?),
            None => (t, 0),
        };
        let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let digits: BigUint = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let e10 = exp - frac.len() as i64;
        let p = BigUint::from(10u32).pow(e10.unsigned_abs() as u32);
        Ok(if e10 >= 0 {
            HpFloat::from_integer(&(digits * p), precision)
        } else {
            HpFloat::from_ratio(&digits, &p, precision)
        })
    }
}

impl PartialEq for HpFloat {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HpFloat {}

impl PartialOrd for HpFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HpFloat {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        match self.top().cmp(&other.top()) {
            Ordering::Equal => {}
            o => return o,
        }
        let common = self.exponent.min(other.exponent);
        let a = &self.mantissa << (self.exponent - common) as u64;
        let b = &other.mantissa << (other.exponent - common) as u64;
        a.cmp(&b)
    }
}

impl fmt::Display for HpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_scientific())
    }
}
