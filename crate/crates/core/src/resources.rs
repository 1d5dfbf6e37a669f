//! Resource model: DSPs, on-chip RAM bits and a linear LUT estimate, plus
//! the componentwise feasibility check.

use serde::Serialize;

use crate::engine::augmented_pes;
use crate::model::{AlphaPlacement, ModelSpec, PlatformSpec};
use crate::perf::Variant;
use crate::wgen::{alpha_geometry, DesignPoint};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ResourceVector {
    pub dsp: u64,
    pub bram_bits: u64,
    pub luts: u64,
}

/// `D_MAC·(M + T_P·T_C)`; the baseline engine has no generator lanes.
pub fn dsp_usage(sigma: &DesignPoint, platform: &PlatformSpec, variant: Variant) -> u64 {
    let lanes = match variant {
        Variant::Ovsf => sigma.m,
        Variant::Baseline => 0,
    };
    platform.dsp_per_mac * (lanes + sigma.t_p * sigma.t_c) as u64
}

/// I/O double buffers `2(T_R·T_P + T_R·T_C)·WL`.
pub fn io_buffer_bits(sigma: &DesignPoint, platform: &PlatformSpec) -> u64 {
    2 * (sigma.t_r * sigma.t_p + sigma.t_r * sigma.t_c) as u64 * platform.word_len as u64
}

/// On-chip RAM bits. Ovsf: I/O buffers, the Alpha buffer (when its
/// placement is on-chip) and the `K_max⁴`-bit OVSF FIFO. Baseline: I/O
/// buffers and a double-buffered `T_P×T_C` weights tile.
pub fn ram_usage(model: &ModelSpec, sigma: &DesignPoint, platform: &PlatformSpec, variant: Variant) -> u64 {
    let wl = platform.word_len as u64;
    let io = io_buffer_bits(sigma, platform);
    match variant {
        Variant::Baseline => io + 2 * (sigma.t_p * sigma.t_c) as u64 * wl,
        Variant::Ovsf => {
            let k = model.k_max() as u64;
            let alpha = match platform.alpha_placement {
                AlphaPlacement::OnChip if model.compressed_layers().next().is_some() => {
                    alpha_geometry(model, sigma).capacity() * wl
                }
                _ => 0,
            };
            io + alpha + k * k * k * k
        }
    }
}

/// `c0 + c1·M + c2·T_P·T_C + c3·|augmented PEs|`, rounded up.
pub fn lut_usage(model: &ModelSpec, sigma: &DesignPoint, platform: &PlatformSpec, variant: Variant, selective: bool) -> Result<u64> {
    let lm = &platform.lut_model;
    let lanes = match variant {
        Variant::Ovsf => sigma.m as f64,
        Variant::Baseline => 0.0,
    };
    let aug = if selective {
        augmented_pes(&model.workloads()?, sigma.t_c).len() as f64
    } else {
        0.0
    };
    let v = lm.base + lm.per_vector_lane * lanes + lm.per_mac * (sigma.t_p * sigma.t_c) as f64 + lm.per_augmented_pe * aug;
    Ok(v.max(0.0).ceil() as u64)
}

pub fn usage(model: &ModelSpec, sigma: &DesignPoint, platform: &PlatformSpec, variant: Variant, selective: bool) -> Result<ResourceVector> {
    Ok(ResourceVector {
        dsp: dsp_usage(sigma, platform, variant),
        bram_bits: ram_usage(model, sigma, platform, variant),
        luts: lut_usage(model, sigma, platform, variant, selective)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub resource: &'static str,
    pub used: u64,
    pub available: u64,
}

impl Violation {
    pub fn ratio(&self) -> f64 {
        self.used as f64 / self.available as f64
    }
}

/// Componentwise `usage ≤ available`; LUTs only when the platform's LUT
/// model is enforced. Returns the violated dimensions.
pub fn feasible(usage: &ResourceVector, platform: &PlatformSpec) -> Vec<Violation> {
    let mut checks = vec![
        ("dsp", usage.dsp, platform.dsp),
        ("bram", usage.bram_bits, platform.ram_bits),
    ];
    if platform.lut_model.enforce {
        checks.push(("lut", usage.luts, platform.luts));
    }
    checks
        .into_iter()
        .filter(|&(_, used, available)| used > available)
        .map(|(resource, used, available)| Violation { resource, used, available })
        .collect()
}

/// Utilisation ratios `(dsp, bram, lut)` against the platform.
pub fn utilisation(usage: &ResourceVector, platform: &PlatformSpec) -> [(&'static str, f64); 3] {
    [
        ("dsp", usage.dsp as f64 / platform.dsp as f64),
        ("bram", usage.bram_bits as f64 / platform.ram_bits as f64),
        ("lut", usage.luts as f64 / platform.luts as f64),
    ]
}
