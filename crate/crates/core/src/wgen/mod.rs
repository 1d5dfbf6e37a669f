//! Weights generator model: design points, Alpha buffer geometry, the OVSF
//! FIFO with its basis-vector aligner, and the tiled generation reference
//! and cycle-stepped simulator.

mod sim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{LayerSpec, ModelSpec};
use crate::ovsf::PackedCode;
use crate::{Error, Result};

pub use sim::{dense_weight_matrix, dense_weight_matrix_fixed, simulate_wgen, tiwgen_reference, GeneratedWeights, OvsfFifo, TileTrace, WgenTrace};

/// σ = ⟨M, T_R, T_P, T_C⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignPoint {
    pub m: usize,
    pub t_r: usize,
    pub t_p: usize,
    pub t_c: usize,
}

impl DesignPoint {
    pub fn new(m: usize, t_r: usize, t_p: usize, t_c: usize) -> Result<Self> {
        if m == 0 || t_r == 0 || t_p == 0 || t_c == 0 {
            return Err(Error::config(format!(
                "design point <{m},{t_r},{t_p},{t_c}>: all entries must be >= 1"
            )));
        }
        Ok(Self { m, t_r, t_p, t_c })
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.m, self.t_r, self.t_p, self.t_c)
    }

    /// Subtiles per `T_P×T_C` weights tile.
    pub fn subtiles_per_tile(&self) -> usize {
        (self.t_p * self.t_c).div_ceil(self.m)
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{},{}>", self.m, self.t_r, self.t_p, self.t_c)
    }
}

impl FromStr for DesignPoint {
    type Err = Error;

    /// Parses `M,TR,TP,TC`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().trim_matches(|c| c == '<' || c == '>').split(',').collect();
        if parts.len() != 4 {
            return Err(Error::config(format!("design point '{s}' must be M,TR,TP,TC")));
        }
        let mut v = [0usize; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("design point '{s}': '{p}' is not a positive integer")))?;
        }
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Distinct filters touched by one subtile, in closed form:
/// `⌈min(T_P,M)/K²⌉·⌊M/T_P⌋ + mod(M,T_P)·⌈M/K²⌉`.
pub fn filters_per_subtile(m: usize, t_p: usize, k_sq: usize) -> usize {
    let k_sq = k_sq.max(1);
    t_p.min(m).div_ceil(k_sq) * (m / t_p) + (m % t_p) * m.div_ceil(k_sq)
}

/// Largest number of distinct `q`-row slices covered by one subtile of a
/// `T_P×T_C` tile, over every tile offset along P. Slices need not align with
/// tile edges when `q` does not divide `T_P`.
pub fn peak_filters_per_subtile(m: usize, t_p: usize, t_c: usize, q: usize) -> usize {
    let q = q.max(1);
    let step = gcd(t_p, q);
    let total = t_p * t_c;
    let mut peak = 0;
    for phase in (0..q).step_by(step) {
        for s in 0..total.div_ceil(m) {
            let (mut e, end) = (s * m, ((s + 1) * m).min(total));
            let mut n = 0;
            while e < end {
                let r = e % t_p;
                let w = (t_p - r).min(end - e);
                n += (phase + r + w - 1) / q - (phase + r) / q + 1;
                e += w;
            }
            peak = peak.max(n);
        }
    }
    peak
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AlphaBufferGeom {
    /// Closed-form filters per subtile at `K_max²`.
    pub n_f: usize,
    /// Provisioned read ports `N_P`: `n_f`, raised where misaligned or
    /// shorter slices touch more filters per subtile.
    pub ports: usize,
    /// Words per port.
    pub depth: usize,
}

impl AlphaBufferGeom {
    pub fn capacity(&self) -> u64 {
        self.ports as u64 * self.depth as u64
    }
}

fn layer_ports(layer_slice_len: usize, sigma: &DesignPoint) -> usize {
    peak_filters_per_subtile(sigma.m, sigma.t_p, sigma.t_c, layer_slice_len)
}

/// Buffer geometry for the compressed layers of `model` (already scheduled).
/// Each layer's α region starts on a fresh row, so the depth is
/// `Σ_l ⌈N_in·N_out·J_l / N_P⌉`.
pub fn alpha_geometry(model: &ModelSpec, sigma: &DesignPoint) -> AlphaBufferGeom {
    let k_max = model.k_max().max(1);
    let n_f = filters_per_subtile(sigma.m, sigma.t_p, k_max * k_max).max(1);
    let ports = model
        .compressed_layers()
        .map(|l| layer_ports(l.slice_len(), sigma))
        .fold(n_f, usize::max);
    let depth = model
        .compressed_layers()
        .map(|l| l.alpha_count().div_ceil(ports as u64) as usize)
        .sum::<usize>()
        .max(1);
    AlphaBufferGeom { n_f, ports, depth }
}

/// Geometry for a single layer in isolation.
pub fn layer_alpha_geometry(layer: &LayerSpec, sigma: &DesignPoint) -> AlphaBufferGeom {
    let model = ModelSpec {
        name: String::new(),
        layers: vec![layer.clone()],
    };
    alpha_geometry(&model, sigma)
}

/// One aligner read: `out` holds the next `m` entries of the periodic
/// extension of `v` starting at its bit 0, and `writeback` is `v` rotated so
/// the following read continues the stream.
pub fn aligner_step(v: &PackedCode, m: usize) -> (PackedCode, PackedCode) {
    let q = v.len();
    if q == 0 {
        return (PackedCode::from_bits(std::iter::empty()), v.clone());
    }
    let out = PackedCode::from_bits((0..m).map(|i| v.bit(i % q)));
    (out, v.rotated(m % q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReprMode;

    fn bits(v: &[u8]) -> PackedCode {
        PackedCode::from_bits(v.iter().map(|&b| b == 1))
    }

    #[test]
    fn eq1_examples() {
        assert_eq!(filters_per_subtile(64, 64, 16), 4);
        assert_eq!(filters_per_subtile(128, 64, 16), 8);
        assert_eq!(filters_per_subtile(48, 64, 16), 48 * 3);
    }

    #[test]
    fn depth_example() {
        let mut l = LayerSpec::conv("c", 64, 64, 4, 8, 1, 1).in_group(0);
        l.repr = ReprMode::Direct;
        l.ratio = 0.5;
        let sigma = DesignPoint::new(64, 1, 64, 1).unwrap();
        let g = layer_alpha_geometry(&l, &sigma);
        assert_eq!(g.n_f, 4);
        assert_eq!(g.ports, 4);
        assert_eq!(g.depth, 64 * 64 * 8 / 4);
    }

    #[test]
    fn aligner_examples() {
        let v = bits(&[1, 0, 0, 1]);
        let (out, wb) = aligner_step(&v, 4);
        assert_eq!((out.clone(), wb.clone()), (v.clone(), v.clone()));
        let (out, wb) = aligner_step(&v, 2);
        assert_eq!(out, bits(&[1, 0]));
        assert_eq!(aligner_step(&wb, 2).0, bits(&[0, 1]));
        let (out, wb) = aligner_step(&v, 6);
        assert_eq!(out, bits(&[1, 0, 0, 1, 1, 0]));
        assert_eq!(aligner_step(&wb, 4).0, bits(&[0, 1, 1, 0]));
    }

    #[test]
    fn design_point_parse() {
        let s: DesignPoint = "64,16,32,8".parse().unwrap();
        assert_eq!(s.as_tuple(), (64, 16, 32, 8));
        assert_eq!(s.to_string(), "<64,16,32,8>");
        assert!("64,16,32".parse::<DesignPoint>().is_err());
        assert!("0,1,1,1".parse::<DesignPoint>().is_err());
        assert!("a,1,1,1".parse::<DesignPoint>().is_err());
    }

    #[test]
    fn peak_filters_matches_brute_force() {
        for q in [1usize, 2, 4, 9, 16] {
            for t_p in [3usize, 4, 8, 16, 20] {
                for t_c in [1usize, 2, 5] {
                    for m in 1..=(t_p * t_c) {
                        let mut worst = 0;
                        for pt in 0..q {
                            let off = (pt * t_p) % q;
                            for s in 0..(t_p * t_c).div_ceil(m) {
                                let mut seen = std::collections::HashSet::new();
                                for e in s * m..((s + 1) * m).min(t_p * t_c) {
                                    seen.insert(((off + e % t_p) / q, e / t_p));
                                }
                                worst = worst.max(seen.len());
                            }
                        }
                        assert_eq!(peak_filters_per_subtile(m, t_p, t_c, q), worst, "q={q} t_p={t_p} t_c={t_c} m={m}");
                    }
                }
            }
        }
    }
}
