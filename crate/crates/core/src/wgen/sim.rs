//! Tiled weights generation: the direct software reference and the
//! cycle-stepped generator model (FIFO, aligner, M-wide datapath).

use std::collections::VecDeque;
use std::fmt::Write as _;

use super::{aligner_step, filters_per_subtile, peak_filters_per_subtile, DesignPoint};
use crate::compress::{reconstruct_fixed, reconstruct_layer, CompressedLayer, SliceDesign};
use crate::fixed::acc_add;
use crate::matrix::{Arith, Matrix};
use crate::model::ReprMode;
use crate::ovsf::PackedCode;
use crate::{Error, Result};

/// A generated `P×C` weights matrix. Fixed-point entries carry the α
/// format's fractional bits.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratedWeights {
    Float(Matrix<f64>),
    Fixed { matrix: Matrix<i32>, frac_bits: u32 },
}

impl GeneratedWeights {
    pub fn rows(&self) -> usize {
        match self {
            Self::Float(m) => m.rows,
            Self::Fixed { matrix, .. } => matrix.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Float(m) => m.cols,
            Self::Fixed { matrix, .. } => matrix.cols,
        }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        match self {
            Self::Float(m) => m.clone(),
            Self::Fixed { matrix, frac_bits } => {
                let s = (1u64 << frac_bits) as f64;
                matrix.map(|v| v as f64 / s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileTrace {
    pub index: usize,
    pub p_tile: usize,
    pub c_tile: usize,
    pub cycles: u64,
    pub subtiles: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WgenTrace {
    pub sigma: DesignPoint,
    pub retained: usize,
    pub tiles: Vec<TileTrace>,
    pub total_cycles: u64,
    /// `(row, col)` of the first element of each subtile of tile 0, in
    /// emission order.
    pub subtile_origins: Vec<(usize, usize)>,
    /// Largest number of α values fetched in one cycle.
    pub peak_alpha_demand: usize,
    pub alpha_ports: usize,
    /// Closed-form filters per subtile for this layer's representation size.
    pub closed_form_filters: usize,
    /// Segments where the stored code had to be re-phased because the tile
    /// height is not a multiple of the slice length.
    pub phase_resets: u64,
}

impl WgenTrace {
    /// Cycles to produce the `⌈P/T_P⌉` weights tiles one output tile needs.
    pub fn per_output_tile_cycles(&self, c: usize) -> u64 {
        self.total_cycles / c.div_ceil(self.sigma.t_c) as u64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tile,p_tile,c_tile,cycles,subtiles\n");
        for t in &self.tiles {
            let _ = writeln!(s, "{},{},{},{},{}", t.index, t.p_tile, t.c_tile, t.cycles, t.subtiles);
        }
        s
    }
}

/// The OVSF FIFO: `J` stored codes cycled head to tail, each paired with the
/// stream phase its stored rotation corresponds to.
#[derive(Debug, Clone)]
pub struct OvsfFifo {
    entries: VecDeque<(Option<PackedCode>, usize)>,
    q: usize,
}

impl OvsfFifo {
    /// Binary codes of length `q`; `None` entries track phase only (used for
    /// real-valued pooled images).
    pub fn new(codes: Vec<Option<PackedCode>>, q: usize) -> Result<Self> {
        if codes.iter().flatten().any(|c| c.len() != q) {
            return Err(Error::validation(format!("FIFO codes must all be {q} bits")));
        }
        Ok(Self {
            entries: codes.into_iter().map(|c| (c, 0)).collect(),
            q,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity_bits(&self) -> usize {
        self.entries.len() * self.q
    }

    /// Pop the head code, emit one segment per `(start phase, length)` via the
    /// aligner and push the write-back to the tail. Returns the emitted bits
    /// (empty for phase-only entries) and the number of re-phasings.
    fn cycle(&mut self, segments: &[(usize, usize)]) -> (Vec<bool>, u64) {
        let (mut code, mut phase) = self.entries.pop_front().expect("FIFO underflow");
        let mut out = Vec::new();
        let mut resets = 0;
        for &(want, w) in segments {
            if phase != want {
                resets += 1;
                if let Some(c) = &code {
                    code = Some(c.rotated((want + self.q - phase) % self.q));
                }
                phase = want;
            }
            if let Some(c) = &code {
                let (bits, wb) = aligner_step(c, w);
                out.extend((0..w).map(|i| bits.bit(i)));
                code = Some(wb);
            }
            phase = (phase + w) % self.q;
        }
        self.entries.push_back((code, phase));
        (out, resets)
    }
}

struct Prepared {
    q: usize,
    p: usize,
    c: usize,
    n_out: usize,
    jl: usize,
    retained: Vec<usize>,
    design: SliceDesign,
}

fn prepare(cl: &CompressedLayer, arith: Arith) -> Result<Prepared> {
    if cl.repr == ReprMode::Bypass {
        return Err(Error::Unsupported(format!(
            "layer '{}' is bypassed; its weights are not generated",
            cl.layer_id
        )));
    }
    if !cl.retained.is_shared() {
        return Err(Error::Unsupported(format!(
            "layer '{}' uses per-filter basis selection, which the generator cannot map: \
             every subtile iterates one layer-wide code sequence",
            cl.layer_id
        )));
    }
    if arith == Arith::Fixed16 {
        if cl.repr == ReprMode::Pool4 {
            return Err(Error::Unsupported(format!(
                "layer '{}': pooled code images are real-valued, so pool4 runs in float mode only",
                cl.layer_id
            )));
        }
        if cl.quant.is_none() {
            return Err(Error::validation(format!(
                "layer '{}' has no quantized α for fixed16 mode",
                cl.layer_id
            )));
        }
    }
    let q = cl.slice_len();
    Ok(Prepared {
        q,
        p: cl.n_in * q,
        c: cl.n_out,
        n_out: cl.n_out,
        jl: cl.retained_count(),
        retained: cl.retained.for_slice(0).to_vec(),
        design: cl.design()?,
    })
}

fn new_output(cl: &CompressedLayer, pr: &Prepared, arith: Arith) -> GeneratedWeights {
    match arith {
        Arith::Float => GeneratedWeights::Float(Matrix::zeros(pr.p, pr.c)),
        Arith::Fixed16 => GeneratedWeights::Fixed {
            matrix: Matrix::zeros(pr.p, pr.c),
            frac_bits: cl.quant.as_ref().map(|q| q.format.frac_bits).unwrap_or(0),
        },
    }
}

enum Acc {
    Float(Vec<f64>),
    Fixed(Vec<i32>),
}

impl Acc {
    fn new(arith: Arith, lanes: usize) -> Self {
        match arith {
            Arith::Float => Self::Float(vec![0.0; lanes]),
            Arith::Fixed16 => Self::Fixed(vec![0; lanes]),
        }
    }
}

/// Lane bookkeeping for one subtile: weights-matrix coordinates of each
/// valid element, or `None` for zero padding.
fn subtile_lanes(sigma: &DesignPoint, p0: usize, c0: usize, s: usize, p: usize, c: usize) -> Vec<Option<(usize, usize)>> {
    let start = s * sigma.m;
    let end = ((s + 1) * sigma.m).min(sigma.t_p * sigma.t_c);
    (start..end)
        .map(|e| {
            let (r, col) = (p0 + e % sigma.t_p, c0 + e / sigma.t_p);
            (r < p && col < c).then_some((r, col))
        })
        .collect()
}

/// `code` is the retained position and the entry within the slice.
fn accumulate(acc: &mut Acc, lane: usize, cl: &CompressedLayer, pr: &Prepared, pc: (usize, usize), code: (usize, usize), sign: Option<bool>) -> Result<()> {
    let (row, col) = pc;
    let (jpos, k) = code;
    let c_in = row / pr.q;
    let idx = (c_in * pr.n_out + col) * pr.jl + jpos;
    match acc {
        Acc::Float(a) => {
            let img = pr.design.image(pr.retained[jpos])[k];
            a[lane] += cl.alphas[idx] as f64 * img;
        }
        Acc::Fixed(a) => {
            let qa = cl.quant.as_ref().expect("checked in prepare").values[idx] as i64;
            let neg = sign.unwrap_or_else(|| pr.design.image(pr.retained[jpos])[k] < 0.0);
            let term = if neg { -qa } else { qa };
            a[lane] = acc_add(a[lane], term).ok_or_else(|| {
                Error::Overflow(format!(
                    "weights accumulator overflow in layer '{}' at ({row}, {col})",
                    cl.layer_id
                ))
            })?;
        }
    }
    Ok(())
}

fn store(out: &mut GeneratedWeights, acc: &Acc, lanes: &[Option<(usize, usize)>]) {
    for (lane, pc) in lanes.iter().enumerate() {
        let Some((r, c)) = *pc else { continue };
        match (&mut *out, acc) {
            (GeneratedWeights::Float(m), Acc::Float(a)) => m.set(r, c, a[lane]),
            (GeneratedWeights::Fixed { matrix, .. }, Acc::Fixed(a)) => matrix.set(r, c, a[lane]),
            _ => unreachable!("accumulator and output modes always match"),
        }
    }
}

/// Tiled generation written directly from the loop nest: tiles, then
/// `⌈T_P·T_C/M⌉` subtiles traversed column-major along P, then the `J`
/// retained codes.
pub fn tiwgen_reference(cl: &CompressedLayer, sigma: &DesignPoint, arith: Arith) -> Result<GeneratedWeights> {
    let pr = prepare(cl, arith)?;
    let mut out = new_output(cl, &pr, arith);
    for ct in 0..pr.c.div_ceil(sigma.t_c) {
        for pt in 0..pr.p.div_ceil(sigma.t_p) {
            let (p0, c0) = (pt * sigma.t_p, ct * sigma.t_c);
            for s in 0..sigma.subtiles_per_tile() {
                let lanes = subtile_lanes(sigma, p0, c0, s, pr.p, pr.c);
                let mut acc = Acc::new(arith, lanes.len());
                for jpos in 0..pr.jl {
                    for (lane, pc) in lanes.iter().enumerate() {
                        if let Some(pc) = *pc {
                            accumulate(&mut acc, lane, cl, &pr, pc, (jpos, pc.0 % pr.q), None)?;
                        }
                    }
                }
                store(&mut out, &acc, &lanes);
            }
        }
    }
    Ok(out)
}

/// Column segments of a subtile as `(start phase, length)` pairs. Padded
/// rows still advance the stream.
fn segments(sigma: &DesignPoint, p0: usize, s: usize, q: usize) -> Vec<(usize, usize)> {
    let start = s * sigma.m;
    let end = ((s + 1) * sigma.m).min(sigma.t_p * sigma.t_c);
    let mut segs = Vec::new();
    let mut e = start;
    while e < end {
        let r = e % sigma.t_p;
        let w = (sigma.t_p - r).min(end - e);
        segs.push(((p0 + r) % q, w));
        e += w;
    }
    segs
}

/// Cycle-stepped generator: each cycle pops one code from the FIFO, the
/// aligner emits the subtile's `M` code bits and writes the rotated code
/// back, the Alpha buffer supplies one α per distinct filter in the subtile,
/// and the M-wide multiply/accumulate arrays update. Accumulators reset at
/// every subtile.
pub fn simulate_wgen(cl: &CompressedLayer, sigma: &DesignPoint, arith: Arith) -> Result<(GeneratedWeights, WgenTrace)> {
    let pr = prepare(cl, arith)?;
    let binary = cl.repr != ReprMode::Pool4;
    let codes = pr
        .retained
        .iter()
        .map(|&j| {
            if binary {
                let img: Vec<i8> = pr.design.image(j).iter().map(|&v| v as i8).collect();
                PackedCode::pack(&img).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fifo = OvsfFifo::new(codes, pr.q)?;
    let k_repr = if cl.repr == ReprMode::Direct { cl.k } else { 4 };
    let closed_form = filters_per_subtile(sigma.m, sigma.t_p, k_repr * k_repr);
    let ports = closed_form.max(peak_filters_per_subtile(sigma.m, sigma.t_p, sigma.t_c, pr.q));

    let mut out = new_output(cl, &pr, arith);
    let mut trace = WgenTrace {
        sigma: *sigma,
        retained: pr.jl,
        tiles: Vec::new(),
        total_cycles: 0,
        subtile_origins: Vec::new(),
        peak_alpha_demand: 0,
        alpha_ports: ports,
        closed_form_filters: closed_form,
        phase_resets: 0,
    };
    let n_sub = sigma.subtiles_per_tile();
    for ct in 0..pr.c.div_ceil(sigma.t_c) {
        for pt in 0..pr.p.div_ceil(sigma.t_p) {
            let (p0, c0) = (pt * sigma.t_p, ct * sigma.t_c);
            let mut cycles = 0u64;
            for s in 0..n_sub {
                if trace.tiles.is_empty() {
                    let e = s * sigma.m;
                    trace.subtile_origins.push((e % sigma.t_p, e / sigma.t_p));
                }
                let lanes = subtile_lanes(sigma, p0, c0, s, pr.p, pr.c);
                let segs = segments(sigma, p0, s, pr.q);
                let demand = distinct_filters(&lanes, pr.q);
                if demand > ports {
                    return Err(Error::Numerical(format!(
                        "α demand {demand} exceeds {ports} Alpha buffer ports"
                    )));
                }
                trace.peak_alpha_demand = trace.peak_alpha_demand.max(demand);
                let mut acc = Acc::new(arith, lanes.len());
                for jpos in 0..pr.jl {
                    let (bits, resets) = fifo.cycle(&segs);
                    if jpos == 0 {
                        trace.phase_resets += resets;
                    }
                    let mut lane = 0;
                    for &(phase, w) in &segs {
                        for i in 0..w {
                            if let Some(pc) = lanes[lane] {
                                let k = (phase + i) % pr.q;
                                let sign = binary.then(|| bits[lane]);
                                accumulate(&mut acc, lane, cl, &pr, pc, (jpos, k), sign)?;
                            }
                            lane += 1;
                        }
                    }
                    cycles += 1;
                }
                store(&mut out, &acc, &lanes);
            }
            trace.tiles.push(TileTrace {
                index: trace.tiles.len(),
                p_tile: pt,
                c_tile: ct,
                cycles,
                subtiles: n_sub,
            });
            trace.total_cycles += cycles;
        }
    }
    Ok((out, trace))
}

fn distinct_filters(lanes: &[Option<(usize, usize)>], q: usize) -> usize {
    let mut last = None;
    let mut n = 0;
    for &(r, c) in lanes.iter().flatten() {
        let key = (c, r / q);
        if last != Some(key) {
            n += 1;
            last = Some(key);
        }
    }
    n
}

/// Dense `P×C` view of the reconstructed layer: row `c_in·Q + k`, column
/// `c_out`.
pub fn dense_weight_matrix(cl: &CompressedLayer) -> Result<Matrix<f64>> {
    let fb = reconstruct_layer(cl)?;
    let q = cl.slice_len();
    Ok(Matrix::from_fn(cl.n_in * q, cl.n_out, |r, c| fb.slice(r / q, c)[r % q] as f64))
}

pub fn dense_weight_matrix_fixed(cl: &CompressedLayer) -> Result<Matrix<i32>> {
    let flat = reconstruct_fixed(cl)?;
    let q = cl.slice_len();
    Ok(Matrix::from_fn(cl.n_in * q, cl.n_out, |r, c| {
        flat[((r / q) * cl.n_out + c) * q + r % q]
    }))
}
