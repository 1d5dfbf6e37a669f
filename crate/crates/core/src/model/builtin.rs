use super::{LayerSpec, ModelSpec, PlatformSpec, RatioSchedule};
use crate::{Error, Result};

pub const MODEL_NAMES: [&str; 4] = ["resnet18", "resnet34", "resnet50", "squeezenet1.1"];

/// Measured off-chip bandwidth settings, in GB/s.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthTier {
    X1,
    X2,
    X4,
    X12,
}

impl BandwidthTier {
    pub const ALL: [BandwidthTier; 4] = [Self::X1, Self::X2, Self::X4, Self::X12];

    pub fn gbps(self) -> f64 {
        match self {
            Self::X1 => 1.1,
            // nominal: twice the 1× setting
            Self::X2 => 2.2,
            Self::X4 => 4.5,
            Self::X12 => 13.4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::X1 => "1x",
            Self::X2 => "2x",
            Self::X4 => "4x",
            Self::X12 => "12x",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == s)
    }
}

pub fn builtin_model(name: &str) -> Result<ModelSpec> {
    match name {
        "resnet18" => Ok(resnet_basic("resnet18", [2, 2, 2, 2])),
        "resnet34" => Ok(resnet_basic("resnet34", [3, 4, 6, 3])),
        "resnet50" => Ok(resnet50()),
        "squeezenet1.1" | "squeezenet" => Ok(squeezenet11()),
        other => Err(Error::config(format!(
            "unknown builtin model '{other}' (known: {})",
            MODEL_NAMES.join(", ")
        ))),
    }
}

pub fn builtin_platform(name: &str) -> Result<PlatformSpec> {
    let base = |name: &str, freq, dsp, mb: f64, kluts: f64| PlatformSpec {
        name: name.into(),
        freq_mhz: freq,
        dsp,
        dsp_per_mac: 1,
        ram_bits: (mb * 1e6 * 8.0).round() as u64,
        luts: (kluts * 1e3).round() as u64,
        bw_in_gbps: BandwidthTier::X4.gbps(),
        bw_out_gbps: BandwidthTier::X4.gbps(),
        word_len: 16,
        lut_model: Default::default(),
        alpha_placement: Default::default(),
    };
    match name {
        "z7045" => Ok(base("z7045", 150.0, 900, 2.40, 218.6)),
        "zu7ev" => Ok(base("zu7ev", 200.0, 1728, 4.75, 230.0)),
        other => Err(Error::config(format!(
            "unknown platform preset '{other}' (known: z7045, zu7ev)"
        ))),
    }
}

pub fn builtin_schedule(name: &str) -> Result<RatioSchedule> {
    let sched = |name: &str, ratios: &[f64]| RatioSchedule {
        name: name.into(),
        ratios: ratios.to_vec(),
        ..RatioSchedule::uncompressed()
    };
    match name {
        "baseline" | "none" => Ok(RatioSchedule::uncompressed()),
        "ovsf50" => Ok(sched("ovsf50", &[1.0, 0.5, 0.5, 0.5])),
        "ovsf25" => Ok(sched("ovsf25", &[1.0, 0.4, 0.25, 0.125])),
        other => Err(Error::config(format!(
            "unknown builtin schedule '{other}' (known: baseline, ovsf50, ovsf25)"
        ))),
    }
}

fn stem() -> Vec<LayerSpec> {
    // 7x7/2 conv at 224, followed by a 3x3/2 max-pool down to 56
    vec![LayerSpec::conv("conv1", 3, 64, 7, 224, 2, 3)]
}

fn resnet_basic(name: &str, blocks: [usize; 4]) -> ModelSpec {
    let mut layers = stem();
    let mut in_ch = 64;
    let mut hw = 56;
    for (g, &n) in blocks.iter().enumerate() {
        let out_ch = 64 << g;
        for b in 0..n {
            let stride = if g > 0 && b == 0 { 2 } else { 1 };
            let prefix = format!("layer{}.{}", g + 1, b);
            layers.push(LayerSpec::conv(&format!("{prefix}.conv1"), in_ch, out_ch, 3, hw, stride, 1).in_group(g));
            let out_hw = (hw + 2 - 3) / stride + 1;
            layers.push(LayerSpec::conv(&format!("{prefix}.conv2"), out_ch, out_ch, 3, out_hw, 1, 1).in_group(g));
            if stride != 1 || in_ch != out_ch {
                layers.push(LayerSpec::conv(&format!("{prefix}.downsample"), in_ch, out_ch, 1, hw, stride, 0));
            }
            in_ch = out_ch;
            hw = out_hw;
        }
    }
    layers.push(LayerSpec::fc("fc", 512, 1000));
    ModelSpec {
        name: name.into(),
        layers,
    }
}

fn resnet50() -> ModelSpec {
    let mut layers = stem();
    let mut in_ch = 64;
    let mut hw = 56;
    for (g, &n) in [3usize, 4, 6, 3].iter().enumerate() {
        let width = 64 << g;
        let out_ch = width * 4;
        for b in 0..n {
            let stride = if g > 0 && b == 0 { 2 } else { 1 };
            let prefix = format!("layer{}.{}", g + 1, b);
            layers.push(LayerSpec::conv(&format!("{prefix}.conv1"), in_ch, width, 1, hw, 1, 0).in_group(g));
            layers.push(LayerSpec::conv(&format!("{prefix}.conv2"), width, width, 3, hw, stride, 1).in_group(g));
            let out_hw = (hw + 2 - 3) / stride + 1;
            layers.push(LayerSpec::conv(&format!("{prefix}.conv3"), width, out_ch, 1, out_hw, 1, 0).in_group(g));
            if b == 0 {
                layers.push(LayerSpec::conv(&format!("{prefix}.downsample"), in_ch, out_ch, 1, hw, stride, 0));
            }
            in_ch = out_ch;
            hw = out_hw;
        }
    }
    layers.push(LayerSpec::fc("fc", 2048, 1000));
    ModelSpec {
        name: "resnet50".into(),
        layers,
    }
}

fn squeezenet11() -> ModelSpec {
    let mut layers = vec![LayerSpec::conv("conv1", 3, 64, 3, 224, 2, 0).with_bias()];
    // (input channels, squeeze, expand, spatial size, group)
    let fires = [
        (64, 16, 64, 55, 0),
        (128, 16, 64, 55, 0),
        (128, 32, 128, 27, 1),
        (256, 32, 128, 27, 1),
        (256, 48, 192, 13, 2),
        (384, 48, 192, 13, 2),
        (384, 64, 256, 13, 3),
        (512, 64, 256, 13, 3),
    ];
    for (i, &(cin, sq, ex, hw, g)) in fires.iter().enumerate() {
        let prefix = format!("fire{}", i + 2);
        layers.push(LayerSpec::conv(&format!("{prefix}.squeeze"), cin, sq, 1, hw, 1, 0).in_group(g).with_bias());
        layers.push(LayerSpec::conv(&format!("{prefix}.expand1x1"), sq, ex, 1, hw, 1, 0).in_group(g).with_bias());
        layers.push(LayerSpec::conv(&format!("{prefix}.expand3x3"), sq, ex, 3, hw, 1, 1).in_group(g).with_bias());
    }
    layers.push(LayerSpec::conv("classifier", 512, 1000, 1, 13, 1, 0).with_bias());
    ModelSpec {
        name: "squeezenet1.1".into(),
        layers,
    }
}
