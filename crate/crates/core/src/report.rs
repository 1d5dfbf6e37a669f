//! CSV and aligned-markdown rendering of estimates and bandwidth sweeps.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::compress::count_params;
use crate::dse::{search, SearchSpace};
use crate::model::{ModelSpec, PlatformSpec, RatioSchedule};
use crate::perf::{EstimateOptions, PerformanceEstimate, Variant};
use crate::wgen::DesignPoint;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Markdown,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(Error::config(format!("unknown format '{other}' (expected csv or markdown)"))),
        }
    }
}

/// A header plus rows of cells, rendered either way.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// `preamble` lines become `# key: value` comments ahead of the table.
    pub fn render(&self, format: Format, preamble: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in preamble {
            let _ = writeln!(out, "# {k}: {v}");
        }
        match format {
            Format::Csv => {
                out.push_str(&self.header.join(","));
                out.push('\n');
                for r in &self.rows {
                    out.push_str(&r.join(","));
                    out.push('\n');
                }
            }
            Format::Markdown => {
                if !preamble.is_empty() {
                    out.push('\n');
                }
                let mut w: Vec<usize> = self.header.iter().map(String::len).collect();
                for r in &self.rows {
                    for (wi, c) in w.iter_mut().zip(r) {
                        *wi = (*wi).max(c.len()).max(3);
                    }
                }
                let line = |cells: &[String]| {
                    let body: Vec<String> = cells.iter().zip(&w).map(|(c, &n)| format!("{c:<n$}")).collect();
                    format!("| {} |\n", body.join(" | "))
                };
                out.push_str(&line(&self.header));
                let rule: Vec<String> = w.iter().map(|&n| "-".repeat(n)).collect();
                out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
                for r in &self.rows {
                    out.push_str(&line(r));
                }
            }
        }
        out
    }
}

/// Per-layer stage times, II and bottleneck.
pub fn layer_table(est: &PerformanceEstimate) -> Table {
    let mut t = Table::new([
        "layer", "R", "P", "C", "t_mem_in", "t_wgen", "t_eng", "t_mem_out", "II", "tiles", "t_total", "bottleneck",
    ]);
    for l in &est.layers {
        t.push(vec![
            l.name.clone(),
            l.workload.r.to_string(),
            l.workload.p.to_string(),
            l.workload.c.to_string(),
            l.t_mem_in.to_string(),
            l.t_wgen.to_string(),
            l.t_eng.to_string(),
            l.t_mem_out.to_string(),
            l.ii.to_string(),
            l.output_tiles.to_string(),
            l.t_total.to_string(),
            l.bottleneck.as_str().into(),
        ]);
    }
    t.push(vec![
        "total".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        est.total_cycles.to_string(),
        format!("{:.3} inf/s", est.throughput),
    ]);
    t
}

/// Header lines for an estimate report.
pub fn estimate_preamble(model: &str, platform: &PlatformSpec, est: &PerformanceEstimate, seed: u64) -> Vec<(&'static str, String)> {
    vec![
        ("seed", seed.to_string()),
        ("model", model.into()),
        ("platform", platform.name.clone()),
        ("bandwidth_gbps", est.bw_in_gbps.to_string()),
        ("variant", est.options.variant.to_string()),
        ("selective", est.options.selective.to_string()),
        ("sigma", est.sigma.to_string()),
        ("throughput_inf_per_s", format!("{:.3}", est.throughput)),
    ]
}

/// One bandwidth setting of a baseline-vs-compressed comparison, each side
/// with its own searched design point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub bw_gbps: f64,
    pub baseline_sigma: DesignPoint,
    pub baseline_inf_s: f64,
    pub ovsf_sigma: DesignPoint,
    pub ovsf_inf_s: f64,
}

impl SweepPoint {
    pub fn speedup(&self) -> f64 {
        self.ovsf_inf_s / self.baseline_inf_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub model: String,
    pub schedule: String,
    pub platform: String,
    pub baseline_params: u64,
    pub compressed_params: u64,
    pub points: Vec<SweepPoint>,
}

/// Runs the search for both variants at every bandwidth.
pub fn bandwidth_sweep(model: &ModelSpec, schedule: &RatioSchedule, platform: &PlatformSpec, bws: &[f64], space: &SearchSpace, selective: bool) -> Result<Sweep> {
    if bws.is_empty() {
        return Err(Error::config("bandwidth sweep needs at least one bandwidth"));
    }
    let compressed = schedule.apply(model)?;
    let counts = count_params(model, schedule)?;
    let mut points = Vec::with_capacity(bws.len());
    for &bw in bws {
        let p = platform.clone().with_bandwidth(bw);
        p.validate()?;
        let mut bo = EstimateOptions::new(Variant::Baseline);
        bo.selective = selective;
        let mut uo = EstimateOptions::new(Variant::Ovsf);
        uo.selective = selective;
        let b = search(model, &p, space, &bo, 1)?;
        let u = search(&compressed, &p, space, &uo, 1)?;
        points.push(SweepPoint {
            bw_gbps: bw,
            baseline_sigma: b.best,
            baseline_inf_s: b.estimate.throughput,
            ovsf_sigma: u.best,
            ovsf_inf_s: u.estimate.throughput,
        });
    }
    Ok(Sweep {
        model: model.name.clone(),
        schedule: schedule.name.clone(),
        platform: platform.name.clone(),
        baseline_params: counts.original,
        compressed_params: counts.compressed,
        points,
    })
}

fn bw_label(bw: f64) -> String {
    format!("{bw} GB/s")
}

impl Sweep {
    /// Model, parameter count and inf/s per bandwidth, one row per variant.
    pub fn throughput_table(&self) -> Table {
        let mut header = vec!["model".to_string(), "params".into()];
        header.extend(self.points.iter().map(|p| bw_label(p.bw_gbps)));
        let mut t = Table::new(header);
        let params = |n: u64| format!("{:.2}M", n as f64 / 1e6);
        let mut base = vec![self.model.clone(), params(self.baseline_params)];
        base.extend(self.points.iter().map(|p| format!("{:.2}", p.baseline_inf_s)));
        let mut comp = vec![format!("{}-{}", self.model, self.schedule), params(self.compressed_params)];
        comp.extend(self.points.iter().map(|p| format!("{:.2}", p.ovsf_inf_s)));
        t.push(base);
        t.push(comp);
        t
    }

    /// Speedup-versus-bandwidth series with the chosen design points.
    pub fn speedup_table(&self) -> Table {
        let mut t = Table::new(["bw_gbps", "baseline_sigma", "baseline_inf_s", "ovsf_sigma", "ovsf_inf_s", "speedup"]);
        for p in &self.points {
            t.push(vec![
                p.bw_gbps.to_string(),
                p.baseline_sigma.to_string(),
                format!("{:.3}", p.baseline_inf_s),
                p.ovsf_sigma.to_string(),
                format!("{:.3}", p.ovsf_inf_s),
                format!("{:.3}", p.speedup()),
            ]);
        }
        t
    }

    pub fn preamble(&self, seed: u64) -> Vec<(&'static str, String)> {
        vec![
            ("seed", seed.to_string()),
            ("model", self.model.clone()),
            ("schedule", self.schedule.clone()),
            ("platform", self.platform.clone()),
        ]
    }

    /// True when no speedup exceeds the one at a lower bandwidth.
    pub fn speedup_non_increasing(&self) -> bool {
        let mut pts: Vec<_> = self.points.iter().collect();
        pts.sort_by(|a, b| a.bw_gbps.total_cmp(&b.bw_gbps));
        pts.windows(2).all(|w| w[1].speedup() <= w[0].speedup() + 1e-12)
    }
}
