//! OVSF code sets built as Sylvester–Hadamard matrices, plus the bit-packed
//! form the generator FIFO stores.
//!
//! Codes are indexed in Sylvester row order: code `j` is row `j` of `H_n`.

use crate::{Error, Result};

pub const MAX_ORDER: u32 = 16;

/// The `L = 2^n` mutually orthogonal ±1 codes of `H_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OvsfBasis {
    order: u32,
    len: usize,
    // row-major L×L
    codes: Vec<i8>,
}

impl OvsfBasis {
    /// Sylvester recursion `H_0 = [1]`, `H_k = [[H, H], [H, -H]]`.
    pub fn build(order: u32) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::config(format!(
                "OVSF order must be in 0..={MAX_ORDER}, got {order}"
            )));
        }
        let len = 1usize << order;
        let mut codes = vec![0i8; len * len];
        codes[0] = 1;
        let mut size = 1;
        while size < len {
            for r in 0..size {
                for c in 0..size {
                    let v = codes[r * len + c];
                    codes[r * len + c + size] = v;
                    codes[(r + size) * len + c] = v;
                    codes[(r + size) * len + c + size] = -v;
                }
            }
            size *= 2;
        }
        Ok(Self { order, len, codes })
    }

    /// Basis whose codes have `len` entries; `len` must be a power of two.
    pub fn with_len(len: usize) -> Result<Self> {
        if !len.is_power_of_two() {
            return Err(Error::config(format!(
                "OVSF code length must be a power of two, got {len}"
            )));
        }
        Self::build(len.trailing_zeros())
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn code(&self, j: usize) -> &[i8] {
        &self.codes[j * self.len..(j + 1) * self.len]
    }

    pub fn entry(&self, j: usize, k: usize) -> i8 {
        self.codes[j * self.len + k]
    }

    pub fn codes(&self) -> impl Iterator<Item = &[i8]> {
        self.codes.chunks_exact(self.len)
    }

    /// `H · v` via the in-place fast Walsh–Hadamard transform (natural order).
    /// `H` is symmetric, so this is also `Hᵀ · v`.
    pub fn transform(&self, v: &mut [f64]) -> Result<()> {
        if v.len() != self.len {
            return Err(Error::validation(format!(
                "vector length {} does not match basis length {}",
                v.len(),
                self.len
            )));
        }
        fwht(v);
        Ok(())
    }
}

pub(crate) fn fwht(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// A ±1 code stored one bit per entry: bit `i` (LSB first) is 0 for +1 and 1
/// for −1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedCode {
    words: Vec<u64>,
    len: usize,
}

impl PackedCode {
    pub fn pack(code: &[i8]) -> Result<Self> {
        let mut words = vec![0u64; code.len().div_ceil(64).max(1)];
        for (i, &c) in code.iter().enumerate() {
            match c {
                1 => {}
                -1 => words[i / 64] |= 1 << (i % 64),
                other => {
                    return Err(Error::validation(format!(
                        "code entry {i} is {other}, expected +1 or -1"
                    )))
                }
            }
        }
        Ok(Self {
            words,
            len: code.len(),
        })
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut words = vec![0u64; 1];
        let mut len = 0;
        for b in bits {
            if len / 64 == words.len() {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { words, len }
    }

    pub fn unpack(&self) -> Vec<i8> {
        (0..self.len).map(|i| self.sign(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn sign(&self, i: usize) -> i8 {
        if self.bit(i) {
            -1
        } else {
            1
        }
    }

    /// Low word; for codes of at most 64 entries this is the whole code.
    pub fn word(&self) -> u64 {
        self.words[0]
    }

    /// Rotate so that entry `shift` moves to position 0.
    pub fn rotated(&self, shift: usize) -> Self {
        if self.len == 0 {
            return self.clone();
        }
        let s = shift % self.len;
        if s == 0 {
            return self.clone();
        }
        if self.len <= 64 {
            let mask = if self.len == 64 {
                u64::MAX
            } else {
                (1u64 << self.len) - 1
            };
            let w = self.words[0] & mask;
            let r = ((w >> s) | (w << (self.len - s))) & mask;
            return Self {
                words: vec![r],
                len: self.len,
            };
        }
        Self::from_bits((0..self.len).map(|i| self.bit((i + s) % self.len)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_orders() {
        assert_eq!(OvsfBasis::build(0).unwrap().code(0), &[1]);
        let h1 = OvsfBasis::build(1).unwrap();
        assert_eq!(h1.code(0), &[1, 1]);
        assert_eq!(h1.code(1), &[1, -1]);
        let h2 = OvsfBasis::build(2).unwrap();
        assert_eq!(h2.code(3), &[1, -1, -1, 1]);
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(OvsfBasis::build(17), Err(Error::Config(_))));
        assert!(OvsfBasis::with_len(9).is_err());
    }

    #[test]
    fn first_code_all_ones_and_rows_distinct() {
        let b = OvsfBasis::build(5).unwrap();
        assert!(b.code(0).iter().all(|&x| x == 1));
        let mut rows: Vec<_> = b.codes().map(|c| c.to_vec()).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 32);
    }

    #[test]
    fn pack_examples() {
        assert_eq!(PackedCode::pack(&[1, 1, 1, 1]).unwrap().word(), 0b0000);
        assert_eq!(PackedCode::pack(&[1, -1, 1, -1]).unwrap().word(), 0b1010);
        assert!(matches!(
            PackedCode::pack(&[1, 0, 1]),
            Err(Error::Validation(_))
        ));
        let h4 = OvsfBasis::build(4).unwrap();
        for c in h4.codes() {
            assert_eq!(PackedCode::pack(c).unwrap().unpack(), c);
        }
    }

    #[test]
    fn multiword_codes() {
        let h7 = OvsfBasis::build(7).unwrap();
        let code = h7.code(77);
        let p = PackedCode::pack(code).unwrap();
        assert_eq!(p.unpack(), code);
        let r = p.rotated(70);
        for i in 0..128 {
            assert_eq!(r.sign(i), code[(i + 70) % 128]);
        }
    }

    #[test]
    fn transform_matches_dense_product() {
        let b = OvsfBasis::build(3).unwrap();
        let v: Vec<f64> = (0..8).map(|i| (i * i) as f64 - 3.5).collect();
        let mut fast = v.clone();
        b.transform(&mut fast).unwrap();
        for (j, &f) in fast.iter().enumerate() {
            let dense: f64 = b.code(j).iter().zip(&v).map(|(&c, &x)| c as f64 * x).sum();
            assert_eq!(f, dense);
        }
        assert!(b.transform(&mut [0.0; 4]).is_err());
    }
}
