use std::path::Path;

use ovsfgen::compress::{
    compress_layer, count_params, quantize_alphas, reconstruct_layer, CompressOptions, CompressedLayer, FilterBank,
};
use ovsfgen::dse::{search, top_csv, SearchSpace};
use ovsfgen::engine::{conv_reference, im2col, tiled_gemm, FeatureMap};
use ovsfgen::fixed::FixedFormat;
use ovsfgen::matrix::{Arith, Matrix};
use ovsfgen::model::container::{read_weights, write_weights, Tensor};
use ovsfgen::model::{LayerKind, LayerSpec, ModelSpec, PlatformSpec, ReprMode};
use ovsfgen::perf::{self, EstimateOptions};
use ovsfgen::report::{bandwidth_sweep, estimate_preamble, layer_table, Format, Table};
use ovsfgen::wgen::{dense_weight_matrix, dense_weight_matrix_fixed, simulate_wgen, tiwgen_reference, DesignPoint, GeneratedWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::inputs::{bandwidth, bandwidths, Resolver};
use crate::{CliError, CompressArgs, DseArgs, EstimateArgs, GenWeightsArgs, Output, PerfArgs, ReportArgs, SimulateArgs};

type Res<T = ()> = Result<T, CliError>;

fn emit(out: &Output, text: &str) -> Res {
    match &out.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn format(out: &Output) -> Res<Format> {
    Ok(out.format.parse()?)
}

fn sigma(arg: &str) -> Res<DesignPoint> {
    Ok(arg.parse()?)
}

fn read_container(path: &Path) -> Res<Vec<Tensor>> {
    if !path.is_file() {
        return Err(CliError::Input(format!("weights file {} does not exist", path.display())));
    }
    Ok(read_weights(path)?)
}

fn weights_name(layer: &LayerSpec) -> String {
    format!("{}.weight", layer.name)
}

pub fn gen_weights(ctx: &Resolver, a: GenWeightsArgs) -> Res {
    let model = ctx.model(&a.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let tensors: Vec<Tensor> = model
        .layers
        .iter()
        .map(|l| FilterBank::random(l.n_out, l.n_in, l.k, &mut rng).to_tensor(&weights_name(l)))
        .collect();
    write_weights(&a.out, &tensors)?;
    eprintln!("wrote {} tensors for '{}' (seed {}) to {}", tensors.len(), model.name, a.seed, a.out.display());
    Ok(())
}

pub fn compress(ctx: &Resolver, a: CompressArgs) -> Res {
    let model = ctx.model(&a.model)?;
    let schedule = ctx.schedule(&a.schedule)?;
    let applied = schedule.apply(&model)?;
    let raw = read_container(&a.weights)?;
    let fmt = format(&a.output)?;
    let mut table = Table::new(["layer", "repr", "ratio", "retained", "params", "max_abs_err", "rel_err"]);
    let mut out = Vec::new();
    for layer in &applied.layers {
        let name = weights_name(layer);
        let t = raw
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::Input(format!("weights file has no tensor '{name}'")))?;
        let fb = FilterBank::from_tensor(t)?;
        if (fb.n_out, fb.n_in, fb.k) != (layer.n_out, layer.n_in, layer.k) {
            return Err(CliError::Input(format!(
                "tensor '{name}' is {:?}, layer expects ({}, {}, {k}, {k})",
                t.shape,
                layer.n_out,
                layer.n_in,
                k = layer.k
            )));
        }
        let cl = compress_layer(
            &layer.name,
            &fb,
            CompressOptions {
                ratio: layer.ratio,
                repr: layer.repr,
                selection: schedule.selection,
            },
        )?;
        let rec = reconstruct_layer(&cl)?;
        let norm = fb.squared_error(&FilterBank::zeros(fb.n_out, fb.n_in, fb.k)).sqrt();
        let rel = if norm > 0.0 { fb.squared_error(&rec).sqrt() / norm } else { 0.0 };
        let params = if cl.raw.is_some() { layer.weight_count() as usize } else { cl.param_count() };
        table.push(vec![
            layer.name.clone(),
            layer.repr.as_str().into(),
            format!("{}", cl.ratio),
            if cl.raw.is_some() { "-".into() } else { cl.retained_count().to_string() },
            params.to_string(),
            format!("{:.3e}", rec.max_abs_diff(&fb)),
            format!("{rel:.4}"),
        ]);
        out.extend(cl.to_tensors());
    }
    if let Some(p) = &a.container {
        write_weights(p, &out)?;
    }
    let counts = count_params(&model, &schedule)?;
    let pre = [
        ("seed", a.output.seed.to_string()),
        ("model", model.name.clone()),
        ("schedule", schedule.name.clone()),
        ("original_params", counts.original.to_string()),
        ("compressed_params", counts.compressed.to_string()),
    ];
    emit(&a.output, &table.render(fmt, &pre))
}

fn load_compressed(model: &ModelSpec, tensors: &[Tensor]) -> Res<Vec<(LayerSpec, CompressedLayer)>> {
    let mut out = Vec::new();
    for layer in &model.layers {
        if !tensors.iter().any(|t| t.name == format!("{}.meta", layer.name)) {
            return Err(CliError::Input(format!(
                "container has no entry for layer '{}'; was it written by `compress`?",
                layer.name
            )));
        }
        out.push((layer.clone(), CompressedLayer::from_tensors(&layer.name, tensors)?));
    }
    Ok(out)
}

/// Rebuilds a filter bank from a `P×C` matrix with rows `c_in·K² + k`.
fn bank_from_matrix(m: &Matrix<f64>, n_out: usize, n_in: usize, k: usize) -> ovsfgen::Result<FilterBank> {
    let kk = k * k;
    let mut fb = FilterBank::zeros(n_out, n_in, k);
    for ci in 0..n_in {
        for co in 0..n_out {
            for (j, v) in fb.slice_mut(ci, co).iter_mut().enumerate() {
                *v = m.get(ci * kk + j, co) as f32;
            }
        }
    }
    Ok(fb)
}

fn check(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn simulate(ctx: &Resolver, a: SimulateArgs) -> Res {
    let model = ctx.model(&a.model)?;
    let tensors = read_container(&a.weights)?;
    let sigma = sigma(&a.sigma)?;
    let arith: Arith = a.mode.parse()?;
    let fmt = format(&a.output)?;
    if a.input_hw == 0 {
        return Err(CliError::Input("--input-hw must be at least 1".into()));
    }
    let layers = load_compressed(&model, &tensors)?;
    for name in &a.layer {
        if !layers.iter().any(|(l, _)| &l.name == name) {
            return Err(CliError::Input(format!("model has no layer '{name}'")));
        }
    }
    if let Some(dir) = &a.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.output.seed);
    let mut table = Table::new([
        "layer", "repr", "J", "tiles", "cycles", "closed_form", "resets", "wgen_equiv", "cycle_law", "engine",
    ]);
    let mut failures = Vec::new();
    for (layer, cl) in layers {
        if cl.repr == ReprMode::Bypass || (!a.layer.is_empty() && !a.layer.contains(&layer.name)) {
            continue;
        }
        let cl = match arith {
            Arith::Float => cl,
            Arith::Fixed16 => {
                let max_abs = cl.alphas.iter().fold(0.0f64, |m, &v| m.max(v.abs() as f64));
                let f = FixedFormat::for_range(16, max_abs)?;
                quantize_alphas(&cl, 16, f.frac_bits)?
            }
        };
        let (gen, trace) = simulate_wgen(&cl, &sigma, arith)?;
        let reference = tiwgen_reference(&cl, &sigma, arith)?;
        let wgen_ok = gen == reference
            && match (&gen, arith) {
                (GeneratedWeights::Fixed { matrix, .. }, Arith::Fixed16) => *matrix == dense_weight_matrix_fixed(&cl)?,
                _ => gen.to_f64().max_abs_diff(&dense_weight_matrix(&cl)?) <= 1e-6,
            };
        let j = cl.retained_count() as u64;
        let per_tile = ((sigma.t_p * sigma.t_c).div_ceil(sigma.m)) as u64 * j;
        let law_ok = trace.tiles.iter().all(|t| t.cycles == per_tile)
            && trace.total_cycles == per_tile * trace.tiles.len() as u64;

        let w = gen.to_f64();
        let engine_ok = match layer.kind {
            LayerKind::Conv => {
                let mut l = layer.clone();
                l.h = a.input_hw;
                l.w = a.input_hw;
                l.pad = l.pad.min(l.k.saturating_sub(1));
                if l.out_hw().0 == 0 {
                    true
                } else {
                    let data = (0..l.n_in * a.input_hw * a.input_hw).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let x = FeatureMap::new(l.n_in, a.input_hw, a.input_hw, data)?;
                    let y = tiled_gemm(&im2col(&x, &l)?, &w, &sigma)?;
                    let fb = bank_from_matrix(&w, l.n_out, l.n_in, l.k)?;
                    let r = conv_reference(&x, &l, &fb)?;
                    let (oh, ow) = l.out_hw();
                    let mut worst = 0.0f64;
                    for co in 0..l.n_out {
                        for p in 0..oh * ow {
                            let want = r.data[co * oh * ow + p];
                            worst = worst.max((y.get(p, co) - want).abs() / want.abs().max(1.0));
                        }
                    }
                    worst < 1e-4
                }
            }
            LayerKind::Fc => true,
        };
        if let Some(dir) = &a.trace_dir {
            let p = dir.join(format!("{}.csv", layer.name));
            std::fs::write(&p, trace.to_csv()).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))?;
        }
        for (ok, what) in [(wgen_ok, "weights generator"), (law_ok, "cycle law"), (engine_ok, "engine")] {
            if !ok {
                failures.push(format!("{}: {what}", layer.name));
            }
        }
        table.push(vec![
            layer.name.clone(),
            cl.repr.as_str().into(),
            j.to_string(),
            trace.tiles.len().to_string(),
            trace.total_cycles.to_string(),
            (per_tile * trace.tiles.len() as u64).to_string(),
            trace.phase_resets.to_string(),
            check(wgen_ok).into(),
            check(law_ok).into(),
            check(engine_ok).into(),
        ]);
    }
    if table.rows.is_empty() {
        return Err(CliError::Input("no compressed layers selected".into()));
    }
    let pre = [
        ("seed", a.output.seed.to_string()),
        ("model", model.name.clone()),
        ("sigma", sigma.to_string()),
        ("mode", arith.as_str().into()),
        ("result", check(failures.is_empty()).into()),
    ];
    emit(&a.output, &table.render(fmt, &pre))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("equivalence checks failed: {}", failures.join(", "))))
    }
}

fn perf_inputs(ctx: &Resolver, p: &PerfArgs) -> Res<(ModelSpec, PlatformSpec, EstimateOptions)> {
    let variant: perf::Variant = p.variant.parse()?;
    let base = ctx.model(&p.target.model)?;
    let schedule = ctx.schedule(&p.target.schedule)?;
    let model = match variant {
        perf::Variant::Ovsf => schedule.apply(&base)?,
        perf::Variant::Baseline => base,
    };
    let mut platform = ctx.platform(&p.target.platform)?;
    if let Some(bw) = &p.bw {
        platform = platform.with_bandwidth(bandwidth(bw)?);
    }
    platform.validate()?;
    let mut opts = EstimateOptions::new(variant);
    opts.selective = p.selective.enabled();
    opts.weight_policy = p.weight_policy.parse()?;
    Ok((model, platform, opts))
}

pub fn estimate(ctx: &Resolver, a: EstimateArgs) -> Res {
    let (model, platform, opts) = perf_inputs(ctx, &a.perf)?;
    let sigma = sigma(&a.sigma)?;
    let fmt = format(&a.output)?;
    let est = perf::estimate(&model, &sigma, &platform, &opts)?;
    let mut pre = estimate_preamble(&model.name, &platform, &est, a.output.seed);
    let usage = ovsfgen::resources::usage(&model, &sigma, &platform, opts.variant, opts.selective)?;
    let violations = ovsfgen::resources::feasible(&usage, &platform);
    pre.push((
        "feasible",
        if violations.is_empty() {
            "yes".into()
        } else {
            let v: Vec<_> = violations.iter().map(|v| format!("{} {}>{}", v.resource, v.used, v.available)).collect();
            format!("no ({})", v.join(", "))
        },
    ));
    emit(&a.output, &layer_table(&est).render(fmt, &pre))
}

fn load_space(path: Option<&Path>) -> Res<SearchSpace> {
    let Some(p) = path else {
        return Ok(SearchSpace::default());
    };
    let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
    let space: SearchSpace =
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {}", p.display(), e.message())))?;
    space.validate()?;
    Ok(space)
}

pub fn dse(ctx: &Resolver, a: DseArgs) -> Res {
    let (model, platform, opts) = perf_inputs(ctx, &a.perf)?;
    let space = load_space(a.space.as_deref())?;
    let fmt = format(&a.output)?;
    let r = search(&model, &platform, &space, &opts, a.top_k)?;
    let mut pre = estimate_preamble(&model.name, &platform, &r.estimate, a.output.seed);
    pre.push(("space_total", r.stats.total.to_string()));
    pre.push(("space_pruned", r.stats.pruned.to_string()));
    pre.push(("space_evaluated", r.stats.evaluated.to_string()));
    pre.push(("dsp", r.usage.dsp.to_string()));
    pre.push(("bram_bits", r.usage.bram_bits.to_string()));
    pre.push(("luts", r.usage.luts.to_string()));
    let text = match fmt {
        Format::Csv => {
            let mut s = String::new();
            for (k, v) in &pre {
                s.push_str(&format!("# {k}: {v}\n"));
            }
            s + &top_csv(&r)
        }
        Format::Markdown => layer_table(&r.estimate).render(fmt, &pre),
    };
    emit(&a.output, &text)
}

pub fn report(ctx: &Resolver, a: ReportArgs) -> Res {
    let model = ctx.model(&a.target.model)?;
    let schedule = ctx.schedule(&a.target.schedule)?;
    let platform = ctx.platform(&a.target.platform)?;
    let bws = bandwidths(&a.bw)?;
    if bws.is_empty() {
        return Err(CliError::Input("--bw needs at least one bandwidth".into()));
    }
    let space = load_space(a.space.as_deref())?;
    let fmt = format(&a.output)?;
    let sweep = bandwidth_sweep(&model, &schedule, &platform, &bws, &space, a.selective.enabled())?;
    let pre = sweep.preamble(a.output.seed);
    let mut text = sweep.throughput_table().render(fmt, &pre);
    text.push('\n');
    text.push_str(&sweep.speedup_table().render(fmt, &[]));
    emit(&a.output, &text)
}
