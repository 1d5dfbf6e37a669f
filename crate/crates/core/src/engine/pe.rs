//! PE-array cycle models for one output tile: the baseline engine, the
//! closed-form input-selective refinement and a discrete schedule simulator.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::ops::Range;

use crate::model::WorkloadTuple;
use crate::wgen::DesignPoint;

/// `T_R·⌈P/T_P⌉`.
pub fn cycles_baseline(w: &WorkloadTuple, sigma: &DesignPoint) -> u64 {
    (sigma.t_r * w.p.div_ceil(sigma.t_p)) as u64
}

/// Closed form for a tile with `c` active columns out of `t_c`:
/// `(T_C − c + ⌈(T_R·c − (T_C−c)(c+1))/T_C⌉)·p_tiles`, clamped to the
/// baseline from above and the work bound `⌈T_R·c/T_C⌉·p_tiles` from below.
pub fn cycles_selective_tile(t_r: usize, t_c: usize, c: usize, p_tiles: usize) -> u64 {
    let (t_r, t_c, c, pt) = (t_r as i64, t_c as i64, c.min(t_c) as i64, p_tiles as i64);
    let baseline = t_r * pt;
    let num = t_r * c - (t_c - c) * (c + 1);
    let eq = (t_c - c + num.div_euclid(t_c) + (num.rem_euclid(t_c) != 0) as i64) * pt;
    let lower = (t_r * c + t_c - 1) / t_c * pt;
    eq.min(baseline).max(lower) as u64
}

/// Per-output-tile cycles with input-selective PEs, using the columns a
/// full tile occupies (`min(C, T_C)`).
pub fn cycles_selective(w: &WorkloadTuple, sigma: &DesignPoint) -> u64 {
    cycles_selective_tile(sigma.t_r, sigma.t_c, w.c.min(sigma.t_c), w.p.div_ceil(sigma.t_p))
}

/// Discrete work-stealing schedule for one tile. A row takes `p_tiles`
/// cycles on any PE. The `c` home PEs each own one column from cycle 0.
/// Augmented PE `d` (index `c + d`) sees propagated weights after `d + 1`
/// hops of one cycle each; whenever it is free it takes a row from the
/// column with the most rows left (lowest index on ties). Returns the
/// completion cycle, never above the baseline.
pub fn schedule_sim_tile(t_r: usize, t_c: usize, c: usize, p_tiles: usize, selective: bool) -> u64 {
    let c = c.min(t_c);
    let baseline = (t_r * p_tiles) as u64;
    if !selective || c == t_c || c == 0 {
        return baseline;
    }
    let pt = p_tiles as u64;
    let mut rem = vec![t_r; c];
    let mut left = t_r * c;
    // (free at, pe); home PEs sort first on equal times
    let mut events: BinaryHeap<Reverse<(u64, usize)>> =
        (0..t_c).map(|pe| Reverse((if pe < c { 0 } else { (pe - c + 1) as u64 }, pe))).collect();
    let mut end = 0;
    while left > 0 {
        let Some(Reverse((t, pe))) = events.pop() else { break };
        let col = if pe < c {
            if rem[pe] == 0 {
                continue;
            }
            pe
        } else {
            let (col, &most) = rem.iter().enumerate().rev().max_by_key(|&(_, r)| r).expect("c > 0");
            if most == 0 {
                continue;
            }
            col
        };
        rem[col] -= 1;
        left -= 1;
        end = end.max(t + pt);
        events.push(Reverse((t + pt, pe)));
    }
    end.min(baseline)
}

pub fn schedule_sim(w: &WorkloadTuple, sigma: &DesignPoint, selective: bool) -> u64 {
    schedule_sim_tile(sigma.t_r, sigma.t_c, w.c.min(sigma.t_c), w.p.div_ceil(sigma.t_p), selective)
}

/// PEs left idle by at least one layer: those at or beyond the smallest
/// column count any full or tail tile occupies.
pub fn augmented_pes(workloads: &[WorkloadTuple], t_c: usize) -> Range<usize> {
    let lowest = workloads
        .iter()
        .map(|w| match w.c % t_c {
            0 => t_c,
            tail => tail,
        })
        .min()
        .unwrap_or(t_c);
    lowest..t_c
}
