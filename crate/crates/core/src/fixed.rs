//! Signed fixed-point helpers shared by the α quantizer, the weights
//! generator datapath and the fixed16 GEMM mode.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Signed two's-complement format with `word_len` total bits, `frac_bits` of
/// which are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedFormat {
    pub word_len: u32,
    pub frac_bits: u32,
}

impl FixedFormat {
    pub fn new(word_len: u32, frac_bits: u32) -> Result<Self> {
        if !(1..=32).contains(&word_len) || frac_bits < 1 || frac_bits >= word_len {
            return Err(Error::config(format!(
                "fixed-point format needs 1 <= frac_bits < word_len <= 32, got WL={word_len} frac={frac_bits}"
            )));
        }
        Ok(Self {
            word_len,
            frac_bits,
        })
    }

    /// The 16-bit format used for operands in fixed16 mode.
    pub fn q16(frac_bits: u32) -> Self {
        Self::new(16, frac_bits).expect("valid 16-bit format")
    }

    /// Most fractional bits with which `max_abs` still fits without
    /// saturating; at least one.
    pub fn for_range(word_len: u32, max_abs: f64) -> Result<Self> {
        let mut frac = word_len.saturating_sub(1).max(1);
        while frac > 1 && max_abs * (1u64 << frac) as f64 > ((1i64 << (word_len - 1)) - 1) as f64 {
            frac -= 1;
        }
        Self::new(word_len, frac)
    }

    pub fn max_int(&self) -> i64 {
        (1i64 << (self.word_len - 1)) - 1
    }

    pub fn min_int(&self) -> i64 {
        -(1i64 << (self.word_len - 1))
    }

    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Round-half-even to the nearest representable integer code, saturating
    /// at the range limits. The flag reports whether saturation happened.
    pub fn quantize(&self, x: f64) -> (i32, bool) {
        let scaled = (x * self.scale()).round_ties_even();
        if scaled.is_nan() {
            return (0, true);
        }
        if scaled > self.max_int() as f64 {
            (self.max_int() as i32, true)
        } else if scaled < self.min_int() as f64 {
            (self.min_int() as i32, true)
        } else {
            (scaled as i32, false)
        }
    }

    pub fn dequantize(&self, q: i64) -> f64 {
        q as f64 / self.scale()
    }

    /// Re-express an integer holding `from_frac` fractional bits in this
    /// format: arithmetic shift with round-half-even, then saturate.
    pub fn requantize(&self, value: i64, from_frac: u32) -> (i32, bool) {
        let shifted = shift_round_half_even(value, from_frac as i32 - self.frac_bits as i32);
        if shifted > self.max_int() {
            (self.max_int() as i32, true)
        } else if shifted < self.min_int() {
            (self.min_int() as i32, true)
        } else {
            (shifted as i32, false)
        }
    }
}

/// `value / 2^shift` rounded half-to-even for positive `shift`, exact left
/// shift for non-positive `shift`.
pub fn shift_round_half_even(value: i64, shift: i32) -> i64 {
    if shift <= 0 {
        return value << (-shift);
    }
    let shift = shift as u32;
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Checked 32-bit accumulation used by every fixed-point datapath model.
#[inline]
pub fn acc_add(acc: i32, incr: i64) -> Option<i32> {
    let sum = acc as i64 + incr;
    i32::try_from(sum).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_basics() {
        let f = FixedFormat::new(16, 8).unwrap();
        assert_eq!(f.quantize(0.0), (0, false));
        assert_eq!(f.quantize(1.0), (256, false));
        assert_eq!(f.quantize(1e6), (32767, true));
        assert_eq!(f.quantize(-1e6), (-32768, true));
    }

    #[test]
    fn half_even_ties() {
        let f = FixedFormat::new(16, 1).unwrap();
        // 0.25 * 2 = 0.5 -> 0, 0.75 * 2 = 1.5 -> 2
        assert_eq!(f.quantize(0.25).0, 0);
        assert_eq!(f.quantize(0.75).0, 2);
        assert_eq!(f.quantize(-0.25).0, 0);
        assert_eq!(shift_round_half_even(3, 1), 2);
        assert_eq!(shift_round_half_even(5, 1), 2);
        assert_eq!(shift_round_half_even(-3, 1), -2);
        assert_eq!(shift_round_half_even(7, 2), 2);
        assert_eq!(shift_round_half_even(3, -2), 12);
    }

    #[test]
    fn range_fitting() {
        assert_eq!(FixedFormat::for_range(16, 0.4).unwrap().frac_bits, 15);
        assert_eq!(FixedFormat::for_range(16, 1.0).unwrap().frac_bits, 14);
        assert_eq!(FixedFormat::for_range(16, 3.0).unwrap().frac_bits, 13);
        let f = FixedFormat::for_range(16, 3.0).unwrap();
        assert!(!f.quantize(3.0).1 && !f.quantize(-3.0).1);
        assert_eq!(FixedFormat::for_range(16, 1e9).unwrap().frac_bits, 1);
    }

    #[test]
    fn rejects_bad_formats() {
        assert!(FixedFormat::new(16, 0).is_err());
        assert!(FixedFormat::new(16, 16).is_err());
        assert!(FixedFormat::new(33, 8).is_err());
    }

    #[test]
    fn requantize_saturates() {
        let f = FixedFormat::q16(8);
        assert_eq!(f.requantize(256 << 4, 12), (256, false));
        assert_eq!(f.requantize(1 << 40, 8), (32767, true));
    }
}
