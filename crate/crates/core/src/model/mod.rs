//! CNN, platform and ratio-schedule descriptors, GEMM workload derivation,
//! text formats and the binary weights container.

mod builtin;
pub mod container;
mod text;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use builtin::{builtin_model, builtin_platform, builtin_schedule, BandwidthTier, MODEL_NAMES};
pub use text::{
    parse_model, parse_platform, parse_schedule, serialize_model, serialize_platform,
    serialize_schedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

/// How a layer's weights are represented on the accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReprMode {
    /// K² is a power of two; slices are fitted directly with K²-long codes.
    Direct,
    /// 3×3 filter taken as the top-left crop of a 4×4 OVSF filter.
    Crop4,
    /// 3×3 filter obtained by adaptive average pooling of a 4×4 OVSF filter.
    Pool4,
    /// Raw weights streamed from external memory.
    #[default]
    Bypass,
}

impl ReprMode {
    pub fn is_compressed(self) -> bool {
        self != ReprMode::Bypass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReprMode::Direct => "direct",
            ReprMode::Crop4 => "crop4",
            ReprMode::Pool4 => "pool4",
            ReprMode::Bypass => "bypass",
        }
    }
}

impl std::str::FromStr for ReprMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ReprMode::Direct),
            "crop4" => Ok(ReprMode::Crop4),
            "pool4" => Ok(ReprMode::Pool4),
            "bypass" => Ok(ReprMode::Bypass),
            other => Err(Error::config(format!("unknown representation mode '{other}'"))),
        }
    }
}

fn default_ratio() -> f64 {
    1.0
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub n_in: usize,
    pub n_out: usize,
    #[serde(default = "default_one")]
    pub k: usize,
    #[serde(default = "default_one")]
    pub h: usize,
    #[serde(default = "default_one")]
    pub w: usize,
    #[serde(default = "default_one")]
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub repr: ReprMode,
    /// Residual-block (or Fire-module) group the layer belongs to; layers
    /// without a group are never compressed by a schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
    #[serde(default)]
    pub bias: bool,
}

impl LayerSpec {
    pub fn conv(name: &str, n_in: usize, n_out: usize, k: usize, hw: usize, stride: usize, pad: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Conv,
            n_in,
            n_out,
            k,
            h: hw,
            w: hw,
            stride,
            pad,
            ratio: 1.0,
            repr: ReprMode::Bypass,
            group: None,
            bias: false,
        }
    }

    pub fn fc(name: &str, n_in: usize, n_out: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Fc,
            n_in,
            n_out,
            k: 1,
            h: 1,
            w: 1,
            stride: 1,
            pad: 0,
            ratio: 1.0,
            repr: ReprMode::Bypass,
            group: None,
            bias: true,
        }
    }

    pub fn in_group(mut self, group: usize) -> Self {
        self.group = Some(group);
        self
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::validation(format!("layer '{}': {m}", self.name)));
        if self.n_in == 0 || self.n_out == 0 || self.k == 0 || self.h == 0 || self.w == 0 || self.stride == 0 {
            return bad("all dimensions must be >= 1".into());
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio must be in (0, 1], got {}", self.ratio));
        }
        if self.kind == LayerKind::Conv && (self.h + 2 * self.pad < self.k || self.w + 2 * self.pad < self.k) {
            return bad(format!(
                "kernel {} larger than padded input {}x{}",
                self.k,
                self.h + 2 * self.pad,
                self.w + 2 * self.pad
            ));
        }
        match self.repr {
            ReprMode::Direct if !(self.k * self.k).is_power_of_two() => {
                bad(format!("direct mode needs K² to be a power of two, K={}", self.k))
            }
            ReprMode::Crop4 | ReprMode::Pool4 if self.k != 3 => {
                bad(format!("{} mode needs K=3, got K={}", self.repr.as_str(), self.k))
            }
            ReprMode::Direct | ReprMode::Crop4 | ReprMode::Pool4 if self.kind == LayerKind::Fc => {
                bad("fully-connected layers can only be bypass".into())
            }
            _ => Ok(()),
        }
    }

    pub fn out_hw(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Fc => (1, 1),
            LayerKind::Conv => (
                (self.h + 2 * self.pad - self.k) / self.stride + 1,
                (self.w + 2 * self.pad - self.k) / self.stride + 1,
            ),
        }
    }

    /// GEMM view of the layer: `R` output positions, `P = N_in·K²`, `C = N_out`.
    pub fn workload(&self) -> Result<WorkloadTuple> {
        self.validate()?;
        let (oh, ow) = self.out_hw();
        WorkloadTuple::new(oh * ow, self.n_in * self.k * self.k, self.n_out)
    }

    /// Basis length `L_l`: K² for direct, 16 for the 4×4-derived modes.
    pub fn basis_len(&self) -> Option<usize> {
        match self.repr {
            ReprMode::Direct => Some(self.k * self.k),
            ReprMode::Crop4 | ReprMode::Pool4 => Some(16),
            ReprMode::Bypass => None,
        }
    }

    /// Engine-facing slice length: rows of P contributed by one input channel.
    pub fn slice_len(&self) -> usize {
        self.k * self.k
    }

    /// Retained basis count `J_l = ⌈ρ·L_l⌉`.
    pub fn retained(&self) -> Option<usize> {
        self.basis_len().map(|l| retained_count(self.ratio, l))
    }

    /// Representation size the generator must support (K, or 4 for crop/pool).
    pub fn repr_kernel(&self) -> Option<usize> {
        match self.repr {
            ReprMode::Direct => Some(self.k),
            ReprMode::Crop4 | ReprMode::Pool4 => Some(4),
            ReprMode::Bypass => None,
        }
    }

    pub fn weight_count(&self) -> u64 {
        (self.n_in * self.n_out * self.k * self.k) as u64
    }

    pub fn param_count(&self) -> u64 {
        self.weight_count() + if self.bias { self.n_out as u64 } else { 0 }
    }

    /// Number of α coefficients when compressed.
    pub fn alpha_count(&self) -> u64 {
        self.retained()
            .map(|j| (self.n_in * self.n_out * j) as u64)
            .unwrap_or(0)
    }
}

/// `⌈ρ·L⌉`, clamped to `[1, L]`. A tiny tolerance absorbs binary
/// representation noise in ρ (e.g. 0.4·10).
pub fn retained_count(ratio: f64, basis_len: usize) -> usize {
    let exact = ratio * basis_len as f64;
    let j = (exact - 1e-9).ceil();
    (j.max(1.0) as usize).min(basis_len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::validation(format!("model '{}' has no layers", self.name)));
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    /// Largest kernel-representation size over compressed layers, or 0 when
    /// nothing is compressed.
    pub fn k_max(&self) -> usize {
        self.layers.iter().filter_map(LayerSpec::repr_kernel).max().unwrap_or(0)
    }

    pub fn compressed_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.repr.is_compressed())
    }

    pub fn workloads(&self) -> Result<Vec<WorkloadTuple>> {
        self.layers.iter().map(LayerSpec::workload).collect()
    }

    pub fn total_alpha_count(&self) -> u64 {
        self.layers.iter().map(LayerSpec::alpha_count).sum()
    }

    pub fn macs(&self) -> Result<u64> {
        Ok(self
            .workloads()?
            .iter()
            .map(|w| (w.r * w.p * w.c) as u64)
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkloadTuple {
    pub r: usize,
    pub p: usize,
    pub c: usize,
}

impl WorkloadTuple {
    pub fn new(r: usize, p: usize, c: usize) -> Result<Self> {
        if r == 0 || p == 0 || c == 0 {
            return Err(Error::validation(format!(
                "degenerate workload <{r}, {p}, {c}>"
            )));
        }
        Ok(Self { r, p, c })
    }
}

/// Where the Alpha buffer contents are charged in the on-chip RAM model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPlacement {
    /// Every compressed layer's α bank is resident and counted against
    /// on-chip RAM.
    OnChip,
    /// The α bank is held outside the modelled RAM budget; only the I/O
    /// buffers and the OVSF FIFO are charged.
    #[default]
    Unbudgeted,
}

/// Linear LUT estimate `c0 + c1·M + c2·T_P·T_C + c3·|augmented PEs|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutModel {
    pub base: f64,
    pub per_vector_lane: f64,
    pub per_mac: f64,
    pub per_augmented_pe: f64,
    /// Whether feasibility checks include LUTs.
    pub enforce: bool,
}

impl Default for LutModel {
    /// Synthetic placeholder coefficients, not fitted to place-and-route data.
    fn default() -> Self {
        Self {
            base: 20_000.0,
            per_vector_lane: 60.0,
            per_mac: 150.0,
            per_augmented_pe: 20.0,
            enforce: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    pub name: String,
    pub freq_mhz: f64,
    pub dsp: u64,
    #[serde(default = "default_dsp_per_mac")]
    pub dsp_per_mac: u64,
    /// On-chip RAM capacity in bits.
    pub ram_bits: u64,
    pub luts: u64,
    pub bw_in_gbps: f64,
    pub bw_out_gbps: f64,
    /// Operand wordlength in bits.
    #[serde(default = "default_word_len")]
    pub word_len: u32,
    #[serde(default)]
    pub lut_model: LutModel,
    #[serde(default)]
    pub alpha_placement: AlphaPlacement,
}

fn default_dsp_per_mac() -> u64 {
    1
}

fn default_word_len() -> u32 {
    16
}

impl PlatformSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(format!("platform '{}': {m}", self.name)));
        if self.freq_mhz.is_nan() || self.freq_mhz <= 0.0 || self.dsp == 0 || self.dsp_per_mac == 0 || self.ram_bits == 0 || self.luts == 0 {
            return bad("frequency and resource capacities must be positive");
        }
        if !(self.bw_in_gbps > 0.0 && self.bw_out_gbps > 0.0) {
            return bad("bandwidths must be positive");
        }
        if ![8, 16, 32].contains(&self.word_len) {
            return bad("word_len must be 8, 16 or 32");
        }
        Ok(())
    }

    pub fn with_bandwidth(mut self, gbps: f64) -> Self {
        self.bw_in_gbps = gbps;
        self.bw_out_gbps = gbps;
        self
    }

    pub fn word_bytes(&self) -> f64 {
        self.word_len as f64 / 8.0
    }

    /// Bytes transferred per clock cycle at the given bandwidth (GB = 1e9 B).
    pub fn bytes_per_cycle(&self, gbps: f64) -> f64 {
        gbps * 1e9 / (self.freq_mhz * 1e6)
    }
}

/// Which layers of a Fire-module network a schedule compresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseMapping {
    /// Only 3×3 convolutions inside groups.
    #[default]
    ThreeByThreeOnly,
    /// Also 1×1 convolutions inside groups (squeeze / expand1x1 / bottleneck
    /// projections), represented directly with L = 1.
    IncludePointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// One retained index set per layer.
    #[default]
    Shared,
    /// Independent index sets per (c_in, c_out) slice; not hardware-mappable.
    PerFilter,
}

/// Per-group compression ratios, e.g. OVSF50 = `[1.0, 0.5, 0.5, 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSchedule {
    pub name: String,
    pub ratios: Vec<f64>,
    #[serde(default = "default_repr_3x3")]
    pub repr_3x3: ReprMode,
    #[serde(default)]
    pub pointwise: PointwiseMapping,
    #[serde(default)]
    pub selection: Selection,
}

fn default_repr_3x3() -> ReprMode {
    ReprMode::Crop4
}

impl RatioSchedule {
    /// The uncompressed model: every layer bypass.
    pub fn uncompressed() -> Self {
        Self {
            name: "baseline".into(),
            ratios: Vec::new(),
            repr_3x3: ReprMode::Crop4,
            pointwise: PointwiseMapping::ThreeByThreeOnly,
            selection: Selection::Shared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::validation(format!(
                "schedule '{}': ratio {r} outside (0, 1]",
                self.name
            )));
        }
        if !matches!(self.repr_3x3, ReprMode::Crop4 | ReprMode::Pool4) {
            return Err(Error::validation(format!(
                "schedule '{}': repr_3x3 must be crop4 or pool4",
                self.name
            )));
        }
        Ok(())
    }

    /// Assign ρ and representation mode to every layer. Layers outside a
    /// group, or whose group has no ratio, become bypass.
    pub fn apply(&self, model: &ModelSpec) -> Result<ModelSpec> {
        self.validate()?;
        let mut out = model.clone();
        for layer in &mut out.layers {
            layer.ratio = 1.0;
            layer.repr = ReprMode::Bypass;
            let Some(ratio) = layer.group.and_then(|g| self.ratios.get(g)).copied() else {
                continue;
            };
            if layer.kind != LayerKind::Conv {
                continue;
            }
            let repr = match layer.k {
                3 => Some(self.repr_3x3),
                1 if self.pointwise == PointwiseMapping::IncludePointwise => Some(ReprMode::Direct),
                k if k != 1 && (k * k).is_power_of_two() => Some(ReprMode::Direct),
                _ => None,
            };
            if let Some(repr) = repr {
                layer.ratio = ratio;
                layer.repr = repr;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_examples() {
        let l = LayerSpec::conv("c", 64, 64, 3, 56, 1, 1);
        assert_eq!(l.workload().unwrap(), WorkloadTuple { r: 3136, p: 576, c: 64 });
        let l = LayerSpec::conv("pw", 32, 16, 1, 7, 1, 0);
        assert_eq!(l.workload().unwrap(), WorkloadTuple { r: 49, p: 32, c: 16 });
        let fc = LayerSpec::fc("fc", 512, 1000);
        assert_eq!(fc.workload().unwrap(), WorkloadTuple { r: 1, p: 512, c: 1000 });
    }

    #[test]
    fn degenerate_layers_rejected() {
        let l = LayerSpec::conv("c", 8, 8, 5, 2, 1, 0);
        assert!(matches!(l.workload(), Err(Error::Validation(_))));
        let mut l = LayerSpec::conv("c", 8, 8, 3, 8, 1, 1);
        l.repr = ReprMode::Direct;
        assert!(l.validate().is_err());
        l.repr = ReprMode::Crop4;
        l.ratio = 0.0;
        assert!(l.validate().is_err());
    }

    #[test]
    fn retained_counts() {
        assert_eq!(retained_count(0.5, 16), 8);
        assert_eq!(retained_count(0.4, 16), 7);
        assert_eq!(retained_count(0.125, 16), 2);
        assert_eq!(retained_count(1.0, 16), 16);
        assert_eq!(retained_count(0.4, 10), 4);
        assert_eq!(retained_count(1e-6, 4), 1);
    }

    #[test]
    fn schedule_apply_marks_groups_only() {
        let m = builtin_model("resnet18").unwrap();
        let s = builtin_schedule("ovsf50").unwrap();
        let c = s.apply(&m).unwrap();
        assert_eq!(c.layers[0].repr, ReprMode::Bypass);
        assert_eq!(c.layers.last().unwrap().repr, ReprMode::Bypass);
        let compressed: Vec<_> = c.compressed_layers().collect();
        assert_eq!(compressed.len(), 16);
        assert!(compressed.iter().all(|l| l.k == 3 && l.repr == ReprMode::Crop4));
        assert_eq!(c.k_max(), 4);
        let downsample = c.layers.iter().find(|l| l.name.contains("downsample")).unwrap();
        assert_eq!(downsample.repr, ReprMode::Bypass);
    }
}
