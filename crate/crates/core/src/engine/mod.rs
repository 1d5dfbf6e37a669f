//! CNN engine model: im2col lowering, a direct convolution oracle, naive and
//! output-stationary tiled GEMM, and PE-array cycle models.

mod pe;

pub use pe::{augmented_pes, cycles_baseline, cycles_selective, cycles_selective_tile, schedule_sim, schedule_sim_tile};

use crate::compress::FilterBank;
use crate::fixed::{acc_add, FixedFormat};
use crate::matrix::{assert_shape, Matrix};
use crate::model::{LayerKind, LayerSpec};
use crate::wgen::DesignPoint;
use crate::{Error, Result};

/// Activations in `(C, H, W)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::validation(format!(
                "feature map ({c}, {h}, {w}) needs {} values, got {}",
                c * h * w,
                data.len()
            )));
        }
        Ok(Self { c, h, w, data })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_input(input: &FeatureMap, layer: &LayerSpec) -> Result<()> {
    layer.validate()?;
    let (h, w) = match layer.kind {
        LayerKind::Conv => (layer.h, layer.w),
        LayerKind::Fc => (1, 1),
    };
    if input.c != layer.n_in || input.h != h || input.w != w {
        return Err(Error::validation(format!(
            "layer '{}' expects input ({}, {h}, {w}), got ({}, {}, {})",
            layer.name, layer.n_in, input.c, input.h, input.w
        )));
    }
    Ok(())
}

/// `R×P` patch matrix: row `oy·OW + ox`, column `c_in·K² + ky·K + kx`.
pub fn im2col(input: &FeatureMap, layer: &LayerSpec) -> Result<Matrix<f64>> {
    check_input(input, layer)?;
    let k = layer.k;
    let (oh, ow) = layer.out_hw();
    let (s, pad) = (layer.stride as isize, layer.pad as isize);
    Ok(Matrix::from_fn(oh * ow, layer.n_in * k * k, |row, col| {
        let (oy, ox) = ((row / ow) as isize, (row % ow) as isize);
        let (ci, kk) = (col / (k * k), col % (k * k));
        let (ky, kx) = ((kk / k) as isize, (kk % k) as isize);
        let (y, x) = (oy * s - pad + ky, ox * s - pad + kx);
        if y < 0 || x < 0 || y >= input.h as isize || x >= input.w as isize {
            0.0
        } else {
            input.get(ci, y as usize, x as usize)
        }
    }))
}

/// `P×C` weights matrix of a filter bank: row `c_in·K² + k`, column `c_out`.
pub fn filter_matrix(fb: &FilterBank) -> Matrix<f64> {
    let kk = fb.k * fb.k;
    Matrix::from_fn(fb.n_in * kk, fb.n_out, |r, c| fb.slice(r / kk, c)[r % kk] as f64)
}

/// Sliding-window convolution (no bias), output `(N_out, OH, OW)`.
pub fn conv_reference(input: &FeatureMap, layer: &LayerSpec, weights: &FilterBank) -> Result<FeatureMap> {
    check_input(input, layer)?;
    if weights.n_in != layer.n_in || weights.n_out != layer.n_out || weights.k != layer.k {
        return Err(Error::validation(format!(
            "weights ({}, {}, {k}, {k}) do not match layer '{}'",
            weights.n_out,
            weights.n_in,
            layer.name,
            k = weights.k
        )));
    }
    let k = layer.k;
    let (oh, ow) = layer.out_hw();
    let (s, pad) = (layer.stride as isize, layer.pad as isize);
    let mut out = vec![0.0; layer.n_out * oh * ow];
    for co in 0..layer.n_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..layer.n_in {
                    let wslice = weights.slice(ci, co);
                    for ky in 0..k {
                        let y = oy as isize * s - pad + ky as isize;
                        if y < 0 || y >= input.h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let x = ox as isize * s - pad + kx as isize;
                            if x < 0 || x >= input.w as isize {
                                continue;
                            }
                            acc += input.get(ci, y as usize, x as usize) * wslice[ky * k + kx] as f64;
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    FeatureMap::new(layer.n_out, oh, ow, out)
}

/// Reshape an `R×C` GEMM result (row = output position) into `(C, OH, OW)`.
pub fn col2im(out: &Matrix<f64>, oh: usize, ow: usize) -> Result<FeatureMap> {
    assert_shape(out, oh * ow, out.cols)?;
    let mut data = vec![0.0; out.rows * out.cols];
    for r in 0..out.rows {
        for c in 0..out.cols {
            data[c * out.rows + r] = out.get(r, c);
        }
    }
    FeatureMap::new(out.cols, oh, ow, data)
}

fn check_gemm<T>(a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::validation(format!(
            "GEMM shape mismatch: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

pub fn naive_gemm(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<Matrix<f64>> {
    check_gemm(a, b)?;
    let mut out = Matrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for k in 0..a.cols {
            let x = a.get(r, k);
            for c in 0..b.cols {
                *out.at_mut(r, c) += x * b.get(k, c);
            }
        }
    }
    Ok(out)
}

/// Output-stationary tiling: each `T_R×T_C` output tile keeps its partial
/// sums while the `⌈P/T_P⌉` input and weight tiles stream past.
pub fn tiled_gemm(a: &Matrix<f64>, b: &Matrix<f64>, sigma: &DesignPoint) -> Result<Matrix<f64>> {
    check_gemm(a, b)?;
    let mut out = Matrix::zeros(a.rows, b.cols);
    tile_loop(a.rows, a.cols, b.cols, sigma, |r0, r1, c0, c1, ks| {
        let mut acc = vec![0.0; (r1 - r0) * (c1 - c0)];
        for &(k0, k1) in ks {
            for r in r0..r1 {
                for k in k0..k1 {
                    let x = a.get(r, k);
                    for c in c0..c1 {
                        acc[(r - r0) * (c1 - c0) + c - c0] += x * b.get(k, c);
                    }
                }
            }
        }
        for r in r0..r1 {
            for c in c0..c1 {
                out.set(r, c, acc[(r - r0) * (c1 - c0) + c - c0]);
            }
        }
        Ok(())
    })?;
    Ok(out)
}

fn check_operands16(m: &Matrix<i32>, what: &str) -> Result<()> {
    if let Some(v) = m.data.iter().find(|&&v| v < i16::MIN as i32 || v > i16::MAX as i32) {
        return Err(Error::validation(format!("{what} operand {v} does not fit 16 bits")));
    }
    Ok(())
}

/// Fixed16 variant: 16-bit operands, 32-bit accumulators checked at every
/// addition. Results keep the sum of the operand fractional bits.
pub fn tiled_gemm_fixed(a: &Matrix<i32>, b: &Matrix<i32>, sigma: &DesignPoint) -> Result<Matrix<i32>> {
    check_gemm(a, b)?;
    check_operands16(a, "activation")?;
    check_operands16(b, "weight")?;
    let mut out = Matrix::zeros(a.rows, b.cols);
    tile_loop(a.rows, a.cols, b.cols, sigma, |r0, r1, c0, c1, ks| {
        let mut acc = vec![0i32; (r1 - r0) * (c1 - c0)];
        for &(k0, k1) in ks {
            for r in r0..r1 {
                for k in k0..k1 {
                    let x = a.get(r, k) as i64;
                    for c in c0..c1 {
                        let slot = &mut acc[(r - r0) * (c1 - c0) + c - c0];
                        *slot = acc_add(*slot, x * b.get(k, c) as i64).ok_or_else(|| {
                            Error::Overflow(format!("32-bit accumulator overflow at output ({r}, {c})"))
                        })?;
                    }
                }
            }
        }
        for r in r0..r1 {
            for c in c0..c1 {
                out.set(r, c, acc[(r - r0) * (c1 - c0) + c - c0]);
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Reference fixed GEMM with 64-bit sums, checked once at the end.
pub fn naive_gemm_fixed(a: &Matrix<i32>, b: &Matrix<i32>) -> Result<Matrix<i32>> {
    check_gemm(a, b)?;
    let mut out = Matrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for c in 0..b.cols {
            let s: i64 = (0..a.cols).map(|k| a.get(r, k) as i64 * b.get(k, c) as i64).sum();
            out.set(
                r,
                c,
                i32::try_from(s).map_err(|_| Error::Overflow(format!("output ({r}, {c}) exceeds 32 bits")))?,
            );
        }
    }
    Ok(out)
}

type TileRanges = Vec<(usize, usize)>;

fn tile_loop(
    rows: usize,
    inner: usize,
    cols: usize,
    sigma: &DesignPoint,
    mut f: impl FnMut(usize, usize, usize, usize, &TileRanges) -> Result<()>,
) -> Result<()> {
    let ks: TileRanges = (0..inner.div_ceil(sigma.t_p))
        .map(|t| (t * sigma.t_p, ((t + 1) * sigma.t_p).min(inner)))
        .collect();
    for rt in 0..rows.div_ceil(sigma.t_r) {
        for ct in 0..cols.div_ceil(sigma.t_c) {
            let (r0, c0) = (rt * sigma.t_r, ct * sigma.t_c);
            f(r0, (r0 + sigma.t_r).min(rows), c0, (c0 + sigma.t_c).min(cols), &ks)?;
        }
    }
    Ok(())
}

/// Quantize a real matrix to 16-bit operands; returns the saturation count.
pub fn quantize_matrix(m: &Matrix<f64>, fmt: FixedFormat) -> (Matrix<i32>, usize) {
    let mut sat = 0;
    let q = m.map(|v| {
        let (x, s) = fmt.quantize(v);
        sat += s as usize;
        x
    });
    (q, sat)
}

/// Re-express integers carrying `from_frac` fractional bits in `fmt`
/// (round-half-even, saturating); returns the saturation count.
pub fn requantize_matrix(m: &Matrix<i32>, from_frac: u32, fmt: FixedFormat) -> (Matrix<i32>, usize) {
    let mut sat = 0;
    let q = m.map(|v| {
        let (x, s) = fmt.requantize(v as i64, from_frac);
        sat += s as usize;
        x
    });
    (q, sat)
}
