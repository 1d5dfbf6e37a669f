//! Exhaustive design-space exploration over σ = ⟨M, T_R, T_P, T_C⟩.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ModelSpec, PlatformSpec};
use crate::perf::{estimate, EstimateOptions, PerformanceEstimate, Variant};
use crate::resources::{feasible, usage, ResourceVector};
use crate::wgen::DesignPoint;
use crate::{Error, Result};

fn powers_of_two(lo: usize, hi: usize) -> Vec<usize> {
    std::iter::successors(Some(lo), |&v| (v < hi).then_some(v * 2)).filter(|&v| v <= hi).collect()
}

/// Candidate values per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub m: Vec<usize>,
    pub t_r: Vec<usize>,
    pub t_p: Vec<usize>,
    pub t_c: Vec<usize>,
}

impl Default for SearchSpace {
    /// Powers of two: `M ∈ [1, 1024]`, tiles in `[4, 512]`.
    fn default() -> Self {
        let t = powers_of_two(4, 512);
        Self {
            m: powers_of_two(1, 1024),
            t_r: t.clone(),
            t_p: t.clone(),
            t_c: t,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("M", &self.m), ("T_R", &self.t_r), ("T_P", &self.t_p), ("T_C", &self.t_c)] {
            if v.is_empty() {
                return Err(Error::config(format!("search space: no candidates for {name}")));
            }
            if v.contains(&0) {
                return Err(Error::config(format!("search space: {name} candidates must be >= 1")));
            }
        }
        Ok(())
    }

    /// All points in lexicographic order. The baseline engine has no
    /// generator, so `M` collapses to its smallest candidate there.
    pub fn points(&self, variant: Variant) -> Vec<DesignPoint> {
        let mut ms = self.m.clone();
        ms.sort_unstable();
        ms.dedup();
        if variant == Variant::Baseline {
            ms.truncate(1);
        }
        let sorted = |v: &Vec<usize>| {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        };
        let (tr, tp, tc) = (sorted(&self.t_r), sorted(&self.t_p), sorted(&self.t_c));
        let mut out = Vec::with_capacity(ms.len() * tr.len() * tp.len() * tc.len());
        for &m in &ms {
            for &t_r in &tr {
                for &t_p in &tp {
                    for &t_c in &tc {
                        out.push(DesignPoint { m, t_r, t_p, t_c });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SearchStats {
    pub total: usize,
    pub pruned: usize,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub sigma: DesignPoint,
    pub total_cycles: u64,
    pub throughput: f64,
    pub usage: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub best: DesignPoint,
    pub estimate: PerformanceEstimate,
    pub usage: ResourceVector,
    pub stats: SearchStats,
    /// Best points, fastest first.
    pub top: Vec<Ranked>,
}

/// Fewer cycles wins; ties go to the lexicographically smallest σ.
fn better(a: &Ranked, b: &Ranked) -> bool {
    (a.total_cycles, a.sigma) < (b.total_cycles, b.sigma)
}

fn rank(model: &ModelSpec, sigma: DesignPoint, platform: &PlatformSpec, opts: &EstimateOptions, use_: ResourceVector) -> Result<Ranked> {
    let e = estimate(model, &sigma, platform, opts)?;
    Ok(Ranked {
        sigma,
        total_cycles: e.total_cycles,
        throughput: e.throughput,
        usage: use_,
    })
}

fn finish(model: &ModelSpec, platform: &PlatformSpec, opts: &EstimateOptions, mut ranked: Vec<Ranked>, stats: SearchStats, top_k: usize) -> Result<SearchResult> {
    ranked.sort_by_key(|r| (r.total_cycles, r.sigma));
    let best = ranked[0].clone();
    ranked.truncate(top_k.max(1));
    Ok(SearchResult {
        best: best.sigma,
        estimate: estimate(model, &best.sigma, platform, opts)?,
        usage: best.usage,
        stats,
        top: ranked,
    })
}

/// Prune infeasible points before estimating, evaluate the rest in
/// parallel and return the fastest.
pub fn search(model: &ModelSpec, platform: &PlatformSpec, space: &SearchSpace, opts: &EstimateOptions, top_k: usize) -> Result<SearchResult> {
    space.validate()?;
    model.validate()?;
    platform.validate()?;
    let points = space.points(opts.variant);
    let checked: Vec<(DesignPoint, ResourceVector, Vec<_>)> = points
        .par_iter()
        .map(|s| {
            let u = usage(model, s, platform, opts.variant, opts.selective)?;
            let v = feasible(&u, platform);
            Ok((*s, u, v))
        })
        .collect::<Result<_>>()?;
    let feasible_pts: Vec<_> = checked.iter().filter(|(_, _, v)| v.is_empty()).collect();
    let stats = SearchStats {
        total: points.len(),
        pruned: points.len() - feasible_pts.len(),
        evaluated: feasible_pts.len(),
    };
    if feasible_pts.is_empty() {
        return Err(no_feasible(&checked, platform));
    }
    let ranked: Vec<Ranked> = feasible_pts
        .par_iter()
        .map(|(s, u, _)| rank(model, *s, platform, opts, *u))
        .collect::<Result<_>>()?;
    finish(model, platform, opts, ranked, stats, top_k)
}

/// Reference search: estimate every point first, then discard the
/// infeasible ones. Sequential.
pub fn search_unpruned(model: &ModelSpec, platform: &PlatformSpec, space: &SearchSpace, opts: &EstimateOptions) -> Result<SearchResult> {
    space.validate()?;
    let points = space.points(opts.variant);
    let mut best: Option<Ranked> = None;
    let mut evaluated = 0;
    for s in &points {
        let u = usage(model, s, platform, opts.variant, opts.selective)?;
        let r = rank(model, *s, platform, opts, u)?;
        evaluated += 1;
        if feasible(&u, platform).is_empty() && best.as_ref().is_none_or(|b| better(&r, b)) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::NoFeasibleDesign {
        constraint: "any".into(),
        detail: "no candidate satisfies the resource constraints".into(),
    })?;
    finish(
        model,
        platform,
        opts,
        vec![best],
        SearchStats {
            total: points.len(),
            pruned: 0,
            evaluated,
        },
        1,
    )
}

/// Names the constraint that even the least demanding candidate violates
/// by the widest margin.
fn no_feasible(checked: &[(DesignPoint, ResourceVector, Vec<crate::resources::Violation>)], platform: &PlatformSpec) -> Error {
    let mut worst: Option<(&'static str, f64, DesignPoint)> = None;
    for res in ["dsp", "bram", "lut"] {
        let best = checked
            .iter()
            .map(|(s, u, _)| {
                let used = match res {
                    "dsp" => u.dsp as f64 / platform.dsp as f64,
                    "bram" => u.bram_bits as f64 / platform.ram_bits as f64,
                    _ => u.luts as f64 / platform.luts as f64,
                };
                (used, *s)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if res == "lut" && !platform.lut_model.enforce {
            continue;
        }
        if let Some((ratio, s)) = best {
            if worst.is_none_or(|w| ratio > w.1) {
                worst = Some((res, ratio, s));
            }
        }
    }
    let (res, ratio, s) = worst.expect("at least one candidate");
    Error::NoFeasibleDesign {
        constraint: res.into(),
        detail: format!(
            "the least demanding candidate {s} still needs {:.2}x the available {res} on '{}'",
            ratio, platform.name
        ),
    }
}

/// Top-k table as CSV.
pub fn top_csv(result: &SearchResult) -> String {
    let mut s = String::from("rank,M,T_R,T_P,T_C,total_cycles,inf_per_s,dsp,bram_bits,luts\n");
    for (i, r) in result.top.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{},{},{}\n",
            i + 1,
            r.sigma.m,
            r.sigma.t_r,
            r.sigma.t_p,
            r.sigma.t_c,
            r.total_cycles,
            r.throughput,
            r.usage.dsp,
            r.usage.bram_bits,
            r.usage.luts
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, builtin_platform, builtin_schedule, AlphaPlacement};

    fn toy_space() -> SearchSpace {
        SearchSpace {
            m: vec![16, 64, 256, 1024],
            t_r: vec![4, 16, 64, 256],
            t_p: vec![4, 8, 32, 128],
            t_c: vec![8, 32, 64, 128],
        }
    }

    #[test]
    fn default_space_size() {
        let s = SearchSpace::default();
        assert_eq!((s.m.len(), s.t_r.len()), (11, 8));
        assert_eq!(s.points(Variant::Ovsf).len(), 11 * 512);
        assert_eq!(s.points(Variant::Baseline).len(), 512);
    }

    #[test]
    fn pruned_equals_unpruned() {
        let m = builtin_schedule("ovsf50").unwrap().apply(&builtin_model("resnet18").unwrap()).unwrap();
        let p = builtin_platform("z7045").unwrap().with_bandwidth(1.1);
        for v in [Variant::Ovsf, Variant::Baseline] {
            let o = EstimateOptions::new(v);
            let a = search(&m, &p, &toy_space(), &o, 5).unwrap();
            let b = search_unpruned(&m, &p, &toy_space(), &o).unwrap();
            assert_eq!(a.best, b.best);
            assert_eq!(a.stats.pruned + a.stats.evaluated, a.stats.total);
            assert!(a.stats.pruned > 0);
        }
    }

    #[test]
    fn single_point_space() {
        let m = builtin_model("resnet18").unwrap();
        let p = builtin_platform("z7045").unwrap();
        let space = SearchSpace {
            m: vec![1],
            t_r: vec![16],
            t_p: vec![8],
            t_c: vec![32],
        };
        let r = search(&m, &p, &space, &EstimateOptions::new(Variant::Baseline), 3).unwrap();
        assert_eq!(r.best, DesignPoint::new(1, 16, 8, 32).unwrap());
        assert_eq!(r.top.len(), 1);
    }

    #[test]
    fn infeasible_names_constraint() {
        let m = builtin_schedule("ovsf50").unwrap().apply(&builtin_model("resnet34").unwrap()).unwrap();
        let mut p = builtin_platform("z7045").unwrap();
        p.alpha_placement = AlphaPlacement::OnChip;
        let err = search(&m, &p, &toy_space(), &EstimateOptions::new(Variant::Ovsf), 1).unwrap_err();
        match err {
            Error::NoFeasibleDesign { constraint, .. } => assert_eq!(constraint, "bram"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(search(&m, &p, &SearchSpace { m: vec![], ..toy_space() }, &EstimateOptions::new(Variant::Ovsf), 1).is_err());
    }

    #[test]
    fn bigger_platform_never_slower() {
        let m = builtin_model("resnet18").unwrap();
        let small = builtin_platform("z7045").unwrap();
        let big = builtin_platform("zu7ev").unwrap().with_bandwidth(small.bw_in_gbps);
        let mut big = PlatformSpec {
            freq_mhz: small.freq_mhz,
            ..big
        };
        big.luts = big.luts.max(small.luts);
        let o = EstimateOptions::new(Variant::Baseline);
        let a = search(&m, &small, &toy_space(), &o, 1).unwrap();
        let b = search(&m, &big, &toy_space(), &o, 1).unwrap();
        assert!(b.estimate.throughput >= a.estimate.throughput);
    }
}
