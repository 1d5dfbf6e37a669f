//! OVSF compression of convolution layers: per-slice coefficient fitting,
//! greedy truncation to a ratio ρ, reconstruction, quantization and
//! parameter accounting.
//!
//! A layer's weights `(N_out, N_in, K, K)` are split into `N_in·N_out` K×K
//! slices; slice `(c_in, c_out)` is fitted independently with `L`-long codes
//! (`L = K²`, or 16 for the 3×3 crop/pool representations). Coefficients are
//! stored `[c_in][c_out][j]` with `j` running over the retained indices.

mod fit;
mod repr;
mod truncate;

use rand::Rng;

pub use fit::{fit_slice_3x3, slice_project, RidgeSolver, SliceDesign, POOL_RIDGE};
pub use repr::ReprOperator;
pub use truncate::{greedy_shared, greedy_truncate, Retained};

use crate::fixed::FixedFormat;
use crate::model::container::Tensor;
use crate::model::{retained_count, ModelSpec, RatioSchedule, ReprMode, Selection};
use crate::{Error, Result};

/// Convolution weights, shape `(N_out, N_in, K, K)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub n_out: usize,
    pub n_in: usize,
    pub k: usize,
    pub data: Vec<f32>,
}

impl FilterBank {
    pub fn new(n_out: usize, n_in: usize, k: usize, data: Vec<f32>) -> Result<Self> {
        if k == 0 || n_out == 0 || n_in == 0 {
            return Err(Error::validation("filter bank dimensions must be >= 1"));
        }
        if data.len() != n_out * n_in * k * k {
            return Err(Error::validation(format!(
                "filter bank ({n_out}, {n_in}, {k}, {k}) needs {} values, got {}",
                n_out * n_in * k * k,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite weight at index {i}")));
        }
        Ok(Self { n_out, n_in, k, data })
    }

    pub fn zeros(n_out: usize, n_in: usize, k: usize) -> Self {
        Self {
            n_out,
            n_in,
            k,
            data: vec![0.0; n_out * n_in * k * k],
        }
    }

    /// Uniform He-style initialisation, `±sqrt(6 / (N_in·K²))`.
    pub fn random(n_out: usize, n_in: usize, k: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (n_in * k * k) as f64).sqrt() as f32;
        let data = (0..n_out * n_in * k * k)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self { n_out, n_in, k, data }
    }

    pub fn slice(&self, c_in: usize, c_out: usize) -> &[f32] {
        let kk = self.k * self.k;
        let start = (c_out * self.n_in + c_in) * kk;
        &self.data[start..start + kk]
    }

    pub fn slice_mut(&mut self, c_in: usize, c_out: usize) -> &mut [f32] {
        let kk = self.k * self.k;
        let start = (c_out * self.n_in + c_in) * kk;
        &mut self.data[start..start + kk]
    }

    pub fn max_abs_diff(&self, other: &FilterBank) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max)
    }

    pub fn squared_error(&self, other: &FilterBank) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum()
    }

    pub fn to_tensor(&self, name: &str) -> Tensor {
        Tensor {
            name: name.to_string(),
            shape: vec![self.n_out, self.n_in, self.k, self.k],
            data: self.data.clone(),
        }
    }

    /// Accepts `(N_out, N_in, K, K)` or, for fully-connected layers,
    /// `(N_out, N_in)`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape.as_slice() {
            &[o, i, k1, k2] if k1 == k2 => Self::new(o, i, k1, t.data.clone()),
            &[o, i] => Self::new(o, i, 1, t.data.clone()),
            other => Err(Error::validation(format!(
                "tensor '{}' has unsupported shape {other:?}",
                t.name
            ))),
        }
    }
}

/// Fixed-point α values with saturation bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedAlphas {
    pub format: FixedFormat,
    pub values: Vec<i32>,
    pub saturated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    pub layer_id: String,
    pub repr: ReprMode,
    pub n_in: usize,
    pub n_out: usize,
    pub k: usize,
    /// `L_l`; 0 for bypass layers.
    pub basis_len: usize,
    pub ratio: f64,
    pub retained: Retained,
    /// `[c_in][c_out][j]`, `j` over the retained indices.
    pub alphas: Vec<f32>,
    /// Raw weights of bypass layers.
    pub raw: Option<FilterBank>,
    pub quant: Option<QuantizedAlphas>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressOptions {
    pub ratio: f64,
    pub repr: ReprMode,
    pub selection: Selection,
}

impl CompressedLayer {
    pub fn retained_count(&self) -> usize {
        self.retained.count()
    }

    pub fn n_slices(&self) -> usize {
        self.n_in * self.n_out
    }

    /// Engine-facing rows per input channel: K² (9 for the 3×3 modes).
    pub fn slice_len(&self) -> usize {
        self.k * self.k
    }

    pub fn alpha(&self, c_in: usize, c_out: usize, j: usize) -> f32 {
        let jl = self.retained_count();
        self.alphas[(c_in * self.n_out + c_out) * jl + j]
    }

    pub fn quantized_alpha(&self, c_in: usize, c_out: usize, j: usize) -> Option<i32> {
        let jl = self.retained_count();
        self.quant
            .as_ref()
            .map(|q| q.values[(c_in * self.n_out + c_out) * jl + j])
    }

    pub fn design(&self) -> Result<SliceDesign> {
        SliceDesign::new(self.repr, self.k)
    }

    /// Coefficient count (zero for bypass layers).
    pub fn param_count(&self) -> usize {
        self.alphas.len()
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let repr_code = match self.repr {
            ReprMode::Direct => 0.0,
            ReprMode::Crop4 => 1.0,
            ReprMode::Pool4 => 2.0,
            ReprMode::Bypass => 3.0,
        };
        let shared = if self.retained.is_shared() { 0.0 } else { 1.0 };
        let meta = vec![
            repr_code,
            self.ratio as f32,
            self.basis_len as f32,
            shared,
            self.k as f32,
            self.n_in as f32,
            self.n_out as f32,
        ];
        let mut out = vec![Tensor {
            name: format!("{}.meta", self.layer_id),
            shape: vec![meta.len()],
            data: meta,
        }];
        if let Some(raw) = &self.raw {
            out.push(raw.to_tensor(&format!("{}.weight", self.layer_id)));
            return out;
        }
        let jl = self.retained_count();
        let (idx_shape, idx): (Vec<usize>, &[usize]) = match &self.retained {
            Retained::Shared(v) => (vec![v.len()], v),
            Retained::PerFilter { indices, .. } => (vec![self.n_in, self.n_out, jl], indices),
        };
        out.push(Tensor {
            name: format!("{}.basis", self.layer_id),
            shape: idx_shape,
            data: idx.iter().map(|&i| i as f32).collect(),
        });
        out.push(Tensor {
            name: format!("{}.alpha", self.layer_id),
            shape: vec![self.n_in, self.n_out, jl],
            data: self.alphas.clone(),
        });
        out
    }

    pub fn from_tensors(layer_id: &str, tensors: &[Tensor]) -> Result<Self> {
        let find = |suffix: &str| {
            let name = format!("{layer_id}.{suffix}");
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Container(format!("missing tensor '{name}'")))
        };
        let meta = find("meta")?;
        if meta.data.len() != 7 {
            return Err(Error::Container(format!("bad meta tensor for '{layer_id}'")));
        }
        let m = &meta.data;
        let repr = match m[0] as u32 {
            0 => ReprMode::Direct,
            1 => ReprMode::Crop4,
            2 => ReprMode::Pool4,
            3 => ReprMode::Bypass,
            other => return Err(Error::Container(format!("unknown repr code {other}"))),
        };
        let (ratio, basis_len, per_filter) = (m[1] as f64, m[2] as usize, m[3] != 0.0);
        let (k, n_in, n_out) = (m[4] as usize, m[5] as usize, m[6] as usize);
        if repr == ReprMode::Bypass {
            let raw = FilterBank::from_tensor(find("weight")?)?;
            return Ok(Self {
                layer_id: layer_id.into(),
                repr,
                n_in: raw.n_in,
                n_out: raw.n_out,
                k: raw.k,
                basis_len: 0,
                ratio: 1.0,
                retained: Retained::Shared(Vec::new()),
                alphas: Vec::new(),
                raw: Some(raw),
                quant: None,
            });
        }
        let basis = find("basis")?;
        let alpha = find("alpha")?;
        let idx: Vec<usize> = basis.data.iter().map(|&v| v as usize).collect();
        if idx.iter().any(|&i| i >= basis_len) {
            return Err(Error::Container(format!("basis index out of range in '{layer_id}'")));
        }
        let retained = if per_filter {
            let jl = *basis.shape.last().unwrap_or(&0);
            Retained::PerFilter { per_slice: jl, indices: idx }
        } else {
            Retained::Shared(idx)
        };
        if alpha.data.len() != n_in * n_out * retained.count() {
            return Err(Error::Container(format!("alpha tensor size mismatch in '{layer_id}'")));
        }
        Ok(Self {
            layer_id: layer_id.into(),
            repr,
            n_in,
            n_out,
            k,
            basis_len,
            ratio,
            retained,
            alphas: alpha.data.clone(),
            raw: None,
            quant: None,
        })
    }
}

/// Fit every slice, then greedily truncate to `⌈ρ·L⌉` codes.
pub fn compress_layer(layer_id: &str, weights: &FilterBank, opts: CompressOptions) -> Result<CompressedLayer> {
    if !(opts.ratio > 0.0 && opts.ratio <= 1.0) {
        return Err(Error::validation(format!("ratio must be in (0, 1], got {}", opts.ratio)));
    }
    if opts.repr == ReprMode::Bypass {
        return Ok(CompressedLayer {
            layer_id: layer_id.into(),
            repr: opts.repr,
            n_in: weights.n_in,
            n_out: weights.n_out,
            k: weights.k,
            basis_len: 0,
            ratio: 1.0,
            retained: Retained::Shared(Vec::new()),
            alphas: Vec::new(),
            raw: Some(weights.clone()),
            quant: None,
        });
    }
    let k = weights.k;
    match opts.repr {
        ReprMode::Direct if !(k * k).is_power_of_two() => {
            return Err(Error::config(format!("direct mode needs K² to be a power of two, K={k}")))
        }
        ReprMode::Crop4 | ReprMode::Pool4 if k != 3 => {
            return Err(Error::config(format!("{} mode needs K=3, got K={k}", opts.repr.as_str())))
        }
        _ => {}
    }
    let design = SliceDesign::new(opts.repr, k)?;
    let l = design.basis_len();
    let (n_in, n_out) = (weights.n_in, weights.n_out);
    let targets: Vec<Vec<f64>> = (0..n_in)
        .flat_map(|ci| (0..n_out).map(move |co| (ci, co)))
        .map(|(ci, co)| weights.slice(ci, co).iter().map(|&v| v as f64).collect())
        .collect();

    let (retained, alphas) = if opts.repr == ReprMode::Pool4 {
        truncate_with_refit(&design, &targets, opts.ratio, opts.selection)?
    } else {
        let mut full = Vec::with_capacity(targets.len() * l);
        for t in &targets {
            full.extend(design.fit(t)?);
        }
        greedy_truncate(&full, l, opts.ratio, opts.selection)?
    };
    Ok(CompressedLayer {
        layer_id: layer_id.into(),
        repr: opts.repr,
        n_in,
        n_out,
        k,
        basis_len: l,
        ratio: opts.ratio,
        retained,
        alphas: alphas.iter().map(|&a| a as f32).collect(),
        raw: None,
        quant: None,
    })
}

/// Pooled codes are not orthogonal, so each discard is followed by a ridge
/// refit on the surviving codes.
fn truncate_with_refit(design: &SliceDesign, targets: &[Vec<f64>], ratio: f64, selection: Selection) -> Result<(Retained, Vec<f64>)> {
    let l = design.basis_len();
    let refit_all = |subset: &[usize], ts: &[Vec<f64>]| -> Result<Vec<f64>> {
        let solver = RidgeSolver::new(design, subset)?;
        let mut out = Vec::with_capacity(ts.len() * subset.len());
        for t in ts {
            out.extend(solver.solve(t)?);
        }
        Ok(out)
    };
    match selection {
        Selection::Shared => {
            let (idx, a) = greedy_shared(targets.len(), l, ratio, &mut |s: &[usize]| refit_all(s, targets))?;
            Ok((Retained::Shared(idx), a))
        }
        Selection::PerFilter => {
            let mut indices = Vec::new();
            let mut alphas = Vec::new();
            for t in targets {
                let one = std::slice::from_ref(t);
                let (idx, a) = greedy_shared(1, l, ratio, &mut |s: &[usize]| refit_all(s, one))?;
                indices.extend(idx);
                alphas.extend(a);
            }
            Ok((
                Retained::PerFilter {
                    per_slice: retained_count(ratio, l),
                    indices,
                },
                alphas,
            ))
        }
    }
}

/// Dense reconstruction in floating point, applying the crop / pool map for
/// the 3×3 modes. Bypass layers return their stored weights.
pub fn reconstruct_layer(cl: &CompressedLayer) -> Result<FilterBank> {
    if let Some(raw) = &cl.raw {
        return Ok(raw.clone());
    }
    let design = cl.design()?;
    let mut out = FilterBank::zeros(cl.n_out, cl.n_in, cl.k);
    let jl = cl.retained_count();
    for ci in 0..cl.n_in {
        for co in 0..cl.n_out {
            let s = ci * cl.n_out + co;
            let a: Vec<f64> = cl.alphas[s * jl..(s + 1) * jl].iter().map(|&v| v as f64).collect();
            let slice = design.synthesize(&a, cl.retained.for_slice(s));
            for (o, v) in out.slice_mut(ci, co).iter_mut().zip(slice) {
                *o = v as f32;
            }
        }
    }
    Ok(out)
}

/// Integer reconstruction from quantized α: `Σ_j q(α_j)·code_j[k]`, exact
/// for ±1 code images. Returned as `[c_in][c_out][k]` with the α format's
/// fractional bits.
pub fn reconstruct_fixed(cl: &CompressedLayer) -> Result<Vec<i32>> {
    let q = cl
        .quant
        .as_ref()
        .ok_or_else(|| Error::validation(format!("layer '{}' has no quantized α", cl.layer_id)))?;
    if cl.repr == ReprMode::Pool4 || cl.repr == ReprMode::Bypass {
        return Err(Error::Unsupported(format!(
            "{} layers have no integer reconstruction",
            cl.repr.as_str()
        )));
    }
    let design = cl.design()?;
    let jl = cl.retained_count();
    let kk = cl.slice_len();
    let mut out = vec![0i32; cl.n_slices() * kk];
    for s in 0..cl.n_slices() {
        let idx = cl.retained.for_slice(s);
        for (kpos, o) in out[s * kk..(s + 1) * kk].iter_mut().enumerate() {
            let mut acc: i64 = 0;
            for (jpos, &j) in idx.iter().enumerate() {
                acc += q.values[s * jl + jpos] as i64 * design.image(j)[kpos] as i64;
            }
            *o = i32::try_from(acc).map_err(|_| {
                Error::Overflow(format!("reconstruction of '{}' exceeds 32 bits", cl.layer_id))
            })?;
        }
    }
    Ok(out)
}

/// Round-half-even α to `WL`-bit signed fixed point, saturating.
pub fn quantize_alphas(cl: &CompressedLayer, word_len: u32, frac_bits: u32) -> Result<CompressedLayer> {
    let format = FixedFormat::new(word_len, frac_bits)?;
    let mut saturated = 0;
    let values = cl
        .alphas
        .iter()
        .map(|&a| {
            let (q, sat) = format.quantize(a as f64);
            saturated += sat as usize;
            q
        })
        .collect();
    let mut out = cl.clone();
    out.quant = Some(QuantizedAlphas {
        format,
        values,
        saturated,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub original: u64,
    pub compressed: u64,
}

/// Parameter totals before and after applying a ratio schedule.
pub fn count_params(model: &ModelSpec, schedule: &RatioSchedule) -> Result<ParamCounts> {
    let applied = schedule.apply(model)?;
    let original = model.layers.iter().map(|l| l.param_count()).sum();
    let compressed = applied
        .layers
        .iter()
        .map(|l| match l.retained() {
            Some(_) => l.alpha_count() + if l.bias { l.n_out as u64 } else { 0 },
            None => l.param_count(),
        })
        .sum();
    Ok(ParamCounts { original, compressed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, builtin_schedule, LayerSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn opts(ratio: f64, repr: ReprMode) -> CompressOptions {
        CompressOptions {
            ratio,
            repr,
            selection: Selection::Shared,
        }
    }

    #[test]
    fn direct_2x2_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = FilterBank::random(3, 5, 2, &mut rng);
        let cl = compress_layer("l", &w, opts(1.0, ReprMode::Direct)).unwrap();
        assert_eq!(cl.basis_len, 4);
        assert!(reconstruct_layer(&cl).unwrap().max_abs_diff(&w) < 1e-6);
    }

    #[test]
    fn crop4_half_ratio_keeps_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = FilterBank::random(4, 4, 3, &mut rng);
        let cl = compress_layer("l", &w, opts(0.5, ReprMode::Crop4)).unwrap();
        assert_eq!(cl.retained_count(), 8);
        assert_eq!(cl.alphas.len(), 4 * 4 * 8);
        let Retained::Shared(idx) = &cl.retained else { panic!() };
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bypass_returns_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = FilterBank::random(2, 3, 7, &mut rng);
        let cl = compress_layer("stem", &w, opts(1.0, ReprMode::Bypass)).unwrap();
        assert!(cl.alphas.is_empty());
        assert_eq!(reconstruct_layer(&cl).unwrap(), w);
    }

    #[test]
    fn incompatible_modes() {
        let w = FilterBank::zeros(1, 1, 3);
        assert!(matches!(compress_layer("l", &w, opts(1.0, ReprMode::Direct)), Err(Error::Config(_))));
        let w = FilterBank::zeros(1, 1, 4);
        assert!(matches!(compress_layer("l", &w, opts(1.0, ReprMode::Crop4)), Err(Error::Config(_))));
        assert!(compress_layer("l", &w, opts(0.0, ReprMode::Direct)).is_err());
    }

    #[test]
    fn pool4_residual_not_worse_than_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = FilterBank::random(3, 2, 3, &mut rng);
        for ratio in [1.0, 0.5, 0.25] {
            let cl = compress_layer("l", &w, opts(ratio, ReprMode::Pool4)).unwrap();
            let r = reconstruct_layer(&cl).unwrap();
            assert!(r.squared_error(&w) <= w.squared_error(&FilterBank::zeros(3, 2, 3)) + 1e-12);
        }
    }

    #[test]
    fn quantize_examples() {
        let cl = CompressedLayer {
            layer_id: "q".into(),
            repr: ReprMode::Direct,
            n_in: 1,
            n_out: 1,
            k: 2,
            basis_len: 4,
            ratio: 0.75,
            retained: Retained::Shared(vec![0, 1, 2]),
            alphas: vec![0.0, 1.0, 1e9],
            raw: None,
            quant: None,
        };
        let q = quantize_alphas(&cl, 16, 8).unwrap();
        let qa = q.quant.unwrap();
        assert_eq!(qa.values, vec![0, 256, 32767]);
        assert_eq!(qa.saturated, 1);
    }

    #[test]
    fn single_layer_param_count() {
        let model = ModelSpec {
            name: "one".into(),
            layers: vec![LayerSpec::conv("c", 64, 64, 3, 8, 1, 1).in_group(0)],
        };
        let sched = RatioSchedule {
            name: "half".into(),
            ratios: vec![0.5],
            ..RatioSchedule::uncompressed()
        };
        let c = count_params(&model, &sched).unwrap();
        assert_eq!(c.original, 36864);
        assert_eq!(c.compressed, 32768);
    }

    #[test]
    fn resnet34_counts() {
        let m = builtin_model("resnet34").unwrap();
        let c = count_params(&m, &builtin_schedule("ovsf25").unwrap()).unwrap();
        assert_eq!(c.original, 21_780_648);
        assert_eq!(c.compressed, 7_846_056);
    }

    #[test]
    fn tensors_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = FilterBank::random(2, 3, 3, &mut rng);
        for (repr, sel) in [
            (ReprMode::Crop4, Selection::Shared),
            (ReprMode::Crop4, Selection::PerFilter),
            (ReprMode::Bypass, Selection::Shared),
        ] {
            let cl = compress_layer(
                "blk",
                &w,
                CompressOptions {
                    ratio: 0.5,
                    repr,
                    selection: sel,
                },
            )
            .unwrap();
            let back = CompressedLayer::from_tensors("blk", &cl.to_tensors()).unwrap();
            assert_eq!(back, cl);
        }
    }
}
