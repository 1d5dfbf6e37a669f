use ovsfgen::compress::{compress_layer, quantize_alphas, reconstruct_layer, CompressOptions, CompressedLayer, FilterBank};
use ovsfgen::dse::{search, SearchSpace};
use ovsfgen::matrix::Arith;
use ovsfgen::model::container::{decode, encode};
use ovsfgen::model::{builtin_model, builtin_platform, builtin_schedule, BandwidthTier, ReprMode, Selection};
use ovsfgen::perf::{estimate, EstimateOptions, Variant};
use ovsfgen::report::{bandwidth_sweep, Format};
use ovsfgen::resources::{feasible, usage};
use ovsfgen::wgen::{dense_weight_matrix, simulate_wgen, DesignPoint};
use ovsfgen::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn compressed(repr: ReprMode, k: usize, ratio: f64, selection: Selection) -> CompressedLayer {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let fb = FilterBank::random(37, 11, k, &mut rng);
    compress_layer("blk.conv", &fb, CompressOptions { ratio, repr, selection }).unwrap()
}

#[test]
fn container_round_trip_preserves_generation() {
    let cl = compressed(ReprMode::Crop4, 3, 0.5, Selection::Shared);
    let back = CompressedLayer::from_tensors("blk.conv", &decode(&encode(&cl.to_tensors())).unwrap()).unwrap();
    assert_eq!(back.alphas, cl.alphas);
    let sigma = DesignPoint::new(32, 8, 20, 16).unwrap();
    let (a, _) = simulate_wgen(&cl, &sigma, Arith::Float).unwrap();
    let (b, _) = simulate_wgen(&back, &sigma, Arith::Float).unwrap();
    assert_eq!(a, b);
    let d = a.to_f64().max_abs_diff(&dense_weight_matrix(&cl).unwrap());
    // the dense reference passes through an f32 filter bank
    assert!(d < 1e-6, "{d}");
}

#[test]
fn pool_layers_generate_in_float_only() {
    let cl = compressed(ReprMode::Pool4, 3, 0.5, Selection::Shared);
    let sigma = DesignPoint::new(16, 8, 16, 16).unwrap();
    let (w, _) = simulate_wgen(&cl, &sigma, Arith::Float).unwrap();
    let rec = reconstruct_layer(&cl).unwrap();
    assert_eq!(w.rows(), 11 * 9);
    assert!((w.to_f64().get(9 * 4 + 2, 5) - rec.slice(4, 5)[2] as f64).abs() < 1e-6);
    let q = quantize_alphas(&cl, 16, 12).unwrap();
    assert!(matches!(simulate_wgen(&q, &sigma, Arith::Fixed16), Err(Error::Unsupported(_))));
}

#[test]
fn per_filter_selection_is_rejected_by_generator() {
    let cl = compressed(ReprMode::Direct, 4, 0.5, Selection::PerFilter);
    let err = simulate_wgen(&cl, &DesignPoint::new(16, 8, 16, 16).unwrap(), Arith::Float).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)), "{err}");
}

#[test]
fn throughput_grows_with_bandwidth_for_every_preset() {
    let sigma = DesignPoint::new(128, 32, 8, 64).unwrap();
    for name in ["resnet18", "resnet34", "resnet50", "squeezenet1.1"] {
        let base = builtin_model(name).unwrap();
        let comp = builtin_schedule("ovsf50").unwrap().apply(&base).unwrap();
        for (m, v) in [(&base, Variant::Baseline), (&comp, Variant::Ovsf)] {
            let mut last = 0.0;
            for tier in BandwidthTier::ALL {
                let p = builtin_platform("zu7ev").unwrap().with_bandwidth(tier.gbps());
                let e = estimate(m, &sigma, &p, &EstimateOptions::new(v)).unwrap();
                assert!(e.throughput >= last, "{name} {v} at {}", tier.label());
                last = e.throughput;
            }
        }
    }
}

#[test]
fn selective_pes_never_slow_down() {
    let m = builtin_schedule("ovsf25").unwrap().apply(&builtin_model("squeezenet1.1").unwrap()).unwrap();
    let p = builtin_platform("zu7ev").unwrap();
    let sigma = DesignPoint::new(256, 64, 8, 128).unwrap();
    let mut off = EstimateOptions::new(Variant::Ovsf);
    off.selective = false;
    let on = estimate(&m, &sigma, &p, &EstimateOptions::new(Variant::Ovsf)).unwrap();
    let off = estimate(&m, &sigma, &p, &off).unwrap();
    assert!(on.total_cycles <= off.total_cycles);
}

#[test]
fn search_result_is_feasible_and_sweep_renders() {
    let base = builtin_model("resnet18").unwrap();
    let sched = builtin_schedule("ovsf50").unwrap();
    let p = builtin_platform("z7045").unwrap();
    let space = SearchSpace {
        m: vec![64, 256],
        t_r: vec![16, 64],
        t_p: vec![4, 8, 16],
        t_c: vec![32, 64, 128],
    };
    let comp = sched.apply(&base).unwrap();
    let r = search(&comp, &p, &space, &EstimateOptions::new(Variant::Ovsf), 4).unwrap();
    let u = usage(&comp, &r.best, &p, Variant::Ovsf, true).unwrap();
    assert!(feasible(&u, &p).is_empty());
    assert_eq!(r.top[0].sigma, r.best);

    let sweep = bandwidth_sweep(&base, &sched, &p, &[1.1, 4.5, 13.4], &space, true).unwrap();
    assert!(sweep.speedup_non_increasing());
    let csv = sweep.speedup_table().render(Format::Csv, &sweep.preamble(9));
    assert!(csv.starts_with("# seed: 9\n"));
    assert_eq!(csv.lines().count(), 4 + 1 + 3);
}
