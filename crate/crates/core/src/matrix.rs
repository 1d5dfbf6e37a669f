//! Dense row-major matrices shared by the generator and engine models.

use std::fmt::Debug;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    pub fn map<U: Copy + Default>(&self, mut f: impl FnMut(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Matrix<f64> {
    pub fn max_abs_diff(&self, other: &Matrix<f64>) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Arithmetic used by the functional models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arith {
    #[default]
    Float,
    /// 16-bit operands, 32-bit overflow-checked accumulators.
    Fixed16,
}

impl std::str::FromStr for Arith {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "float" => Ok(Self::Float),
            "fixed16" => Ok(Self::Fixed16),
            other => Err(crate::Error::config(format!(
                "unknown arithmetic mode '{other}' (expected float or fixed16)"
            ))),
        }
    }
}

impl Arith {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Float => "float",
            Self::Fixed16 => "fixed16",
        }
    }
}

pub(crate) fn assert_shape<T: Debug>(m: &Matrix<T>, rows: usize, cols: usize) -> crate::Result<()> {
    if m.rows != rows || m.cols != cols || m.data.len() != rows * cols {
        return Err(crate::Error::validation(format!(
            "expected a {rows}x{cols} matrix, got {}x{} with {} values",
            m.rows,
            m.cols,
            m.data.len()
        )));
    }
    Ok(())
}
