//! Analytical performance model: per-stage cycles per output tile, the
//! pipeline initiation interval, layer totals and network throughput.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::engine::{cycles_baseline, cycles_selective};
use crate::model::{LayerSpec, ModelSpec, PlatformSpec, WorkloadTuple};
use crate::resources::ram_usage;
use crate::wgen::DesignPoint;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// On-chip weights generation from α and OVSF codes.
    Ovsf,
    /// Same engine with weights streamed from external memory.
    Baseline,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ovsf => "ovsf",
            Self::Baseline => "baseline",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ovsf" => Ok(Self::Ovsf),
            "baseline" => Ok(Self::Baseline),
            other => Err(Error::config(format!("unknown variant '{other}' (expected ovsf or baseline)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How weights that travel from external memory are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// Load once per layer when the layer fits in the RAM left over by the
    /// buffers (amortized across its output tiles), else re-stream one
    /// `T_P×T_C` tile per step of every output tile.
    #[default]
    TwoRegime,
    /// Always re-stream per output tile.
    AlwaysStream,
    /// Always load once per layer.
    AlwaysCache,
}

impl FromStr for WeightPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_regime" | "two-regime" => Ok(Self::TwoRegime),
            "stream" => Ok(Self::AlwaysStream),
            "cache" => Ok(Self::AlwaysCache),
            other => Err(Error::config(format!("unknown weight policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EstimateOptions {
    pub variant: Variant,
    pub selective: bool,
    pub weight_policy: WeightPolicy,
}

impl EstimateOptions {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            selective: true,
            weight_policy: WeightPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    MemIn,
    Wgen,
    Engine,
    MemOut,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MemIn => "mem_in",
            Self::Wgen => "wgen",
            Self::Engine => "engine",
            Self::MemOut => "mem_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEstimate {
    pub name: String,
    pub workload: WorkloadTuple,
    pub t_mem_in: u64,
    pub t_wgen: u64,
    pub t_eng: u64,
    pub t_mem_out: u64,
    pub ii: u64,
    pub output_tiles: u64,
    pub t_total: u64,
    pub bottleneck: Stage,
    /// Weights read from external memory for this layer, if any.
    pub weight_mode: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceEstimate {
    pub sigma: DesignPoint,
    pub options: EstimateOptions,
    pub freq_mhz: f64,
    pub bw_in_gbps: f64,
    pub layers: Vec<LayerEstimate>,
    pub total_cycles: u64,
    pub throughput: f64,
}

impl PerformanceEstimate {
    pub fn latency_ms(&self) -> f64 {
        self.total_cycles as f64 / (self.freq_mhz * 1e3)
    }
}

/// `J·⌈T_P·T_C/M⌉·⌈P/T_P⌉` per output tile; zero for bypass layers.
pub fn t_wgen(layer: &LayerSpec, sigma: &DesignPoint) -> Result<u64> {
    let Some(j) = layer.retained() else { return Ok(0) };
    let w = layer.workload()?;
    Ok((j * sigma.subtiles_per_tile() * w.p.div_ceil(sigma.t_p)) as u64)
}

fn cycles_for(bytes: f64, bytes_per_cycle: f64) -> u64 {
    (bytes / bytes_per_cycle - 1e-9).ceil().max(0.0) as u64
}

/// `(⌈T_R·P·WL/bw_in⌉, ⌈T_R·T_C·WL/bw_out⌉)` in cycles, bandwidth converted
/// to bytes per cycle at the platform clock.
pub fn t_mem(w: &WorkloadTuple, sigma: &DesignPoint, platform: &PlatformSpec) -> (u64, u64) {
    let wb = platform.word_bytes();
    let t_in = cycles_for((sigma.t_r * w.p) as f64 * wb, platform.bytes_per_cycle(platform.bw_in_gbps));
    let t_out = cycles_for((sigma.t_r * sigma.t_c) as f64 * wb, platform.bytes_per_cycle(platform.bw_out_gbps));
    (t_in, t_out)
}

fn output_tiles(w: &WorkloadTuple, sigma: &DesignPoint) -> u64 {
    (w.r.div_ceil(sigma.t_r) * w.c.div_ceil(sigma.t_c)) as u64
}

/// Weight bytes charged to each output tile for a layer whose weights come
/// from external memory, and the regime used.
fn weight_bytes_per_tile(layer: &LayerSpec, w: &WorkloadTuple, sigma: &DesignPoint, platform: &PlatformSpec, free_bits: u64, policy: WeightPolicy) -> (f64, &'static str) {
    let wb = platform.word_bytes();
    let layer_bits = layer.weight_count() * platform.word_len as u64;
    let cache = match policy {
        WeightPolicy::AlwaysCache => true,
        WeightPolicy::AlwaysStream => false,
        WeightPolicy::TwoRegime => layer_bits <= free_bits,
    };
    if cache {
        ((w.p * w.c) as f64 * wb / output_tiles(w, sigma) as f64, "cached")
    } else {
        ((sigma.t_p * w.p.div_ceil(sigma.t_p) * sigma.t_c) as f64 * wb, "streamed")
    }
}

fn bottleneck(a: u64, g: u64, e: u64, o: u64) -> Stage {
    let ii = a.max(g).max(e).max(o);
    if a == ii {
        Stage::MemIn
    } else if g == ii {
        Stage::Wgen
    } else if e == ii {
        Stage::Engine
    } else {
        Stage::MemOut
    }
}

/// Estimate a scheduled model. In the baseline variant every layer's
/// weights come from memory; in the ovsf variant only bypass layers do.
pub fn estimate(model: &ModelSpec, sigma: &DesignPoint, platform: &PlatformSpec, opts: &EstimateOptions) -> Result<PerformanceEstimate> {
    let used = ram_usage(model, sigma, platform, opts.variant);
    let free_bits = platform.ram_bits.saturating_sub(used);
    let bpc_in = platform.bytes_per_cycle(platform.bw_in_gbps);
    let mut layers = Vec::with_capacity(model.layers.len());
    let mut total = 0u64;
    for layer in &model.layers {
        let w = layer.workload()?;
        let generated = opts.variant == Variant::Ovsf && layer.repr.is_compressed();
        let (mut t_in, t_out) = t_mem(&w, sigma, platform);
        let mut weight_mode = None;
        if !generated {
            let (bytes, mode) = weight_bytes_per_tile(layer, &w, sigma, platform, free_bits, opts.weight_policy);
            let act = (sigma.t_r * w.p) as f64 * platform.word_bytes();
            t_in = cycles_for(act + bytes, bpc_in);
            weight_mode = Some(mode);
        }
        let t_g = if generated { t_wgen(layer, sigma)? } else { 0 };
        let t_e = if opts.selective {
            cycles_selective(&w, sigma)
        } else {
            cycles_baseline(&w, sigma)
        };
        let ii = t_in.max(t_g).max(t_e).max(t_out);
        let tiles = output_tiles(&w, sigma);
        let t_total = ii * tiles;
        total += t_total;
        layers.push(LayerEstimate {
            name: layer.name.clone(),
            workload: w,
            t_mem_in: t_in,
            t_wgen: t_g,
            t_eng: t_e,
            t_mem_out: t_out,
            ii,
            output_tiles: tiles,
            t_total,
            bottleneck: bottleneck(t_in, t_g, t_e, t_out),
            weight_mode,
        });
    }
    Ok(PerformanceEstimate {
        sigma: *sigma,
        options: *opts,
        freq_mhz: platform.freq_mhz,
        bw_in_gbps: platform.bw_in_gbps,
        layers,
        total_cycles: total,
        throughput: if total == 0 { 0.0 } else { platform.freq_mhz * 1e6 / total as f64 },
    })
}

/// Completion time of `n` items through a three-stage pipeline with
/// double-buffered hand-offs: a stage starts item `i` once the previous
/// stage has finished it, it has finished item `i−1`, and the next stage
/// has started item `i−2` (freeing a buffer).
pub fn pipeline_event_sim(stages: [u64; 3], n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let n = n as usize;
    let mut start = vec![[0u64; 3]; n];
    let mut done = vec![[0u64; 3]; n];
    // Item i's stage-k start can depend on stage k+1 of item i-2, which is
    // already known when items are scheduled in order.
    for i in 0..n {
        for k in 0..3 {
            let mut t = if k > 0 { done[i][k - 1] } else { 0 };
            if i > 0 {
                t = t.max(done[i - 1][k]);
            }
            if k < 2 && i >= 2 {
                t = t.max(start[i - 2][k + 1]);
            }
            start[i][k] = t;
            done[i][k] = t + stages[k];
        }
    }
    done[n - 1][2]
}
