//! Linear maps from a 4×4 OVSF-generated filter to a 3×3 filter.

use crate::model::ReprMode;
use crate::{Error, Result};

/// 9×16 row-major operator `A` with `vec(f̂) = A · vec(f4×4)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprOperator {
    pub mode: ReprMode,
    pub matrix: [[f64; 16]; 9],
}

impl ReprOperator {
    pub fn build(mode: ReprMode) -> Result<Self> {
        let mut matrix = [[0.0; 16]; 9];
        match mode {
            ReprMode::Crop4 => {
                for r in 0..3 {
                    for c in 0..3 {
                        matrix[3 * r + c][4 * r + c] = 1.0;
                    }
                }
            }
            ReprMode::Pool4 => {
                for i in 0..3 {
                    for j in 0..3 {
                        let rows = pool_window(i);
                        let cols = pool_window(j);
                        let w = 1.0 / (rows.clone().count() * cols.clone().count()) as f64;
                        for r in rows.clone() {
                            for c in cols.clone() {
                                matrix[3 * i + j][4 * r + c] = w;
                            }
                        }
                    }
                }
            }
            other => {
                return Err(Error::config(format!(
                    "no 3x3 representation operator for mode '{}'",
                    other.as_str()
                )))
            }
        }
        Ok(Self { mode, matrix })
    }

    pub fn apply(&self, f16: &[f64]) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (o, row) in out.iter_mut().zip(&self.matrix) {
            *o = row.iter().zip(f16).map(|(a, x)| a * x).sum();
        }
        out
    }
}

/// Adaptive-average-pool input window for output index `i` (4 → 3).
fn pool_window(i: usize) -> std::ops::RangeInclusive<usize> {
    let start = (4 * i) / 3;
    let end = (4 * (i + 1)).div_ceil(3) - 1;
    start..=end
}
