use ovsfgen::compress::{compress_layer, reconstruct_layer, slice_project, CompressOptions, FilterBank};
use ovsfgen::engine::{cycles_baseline, cycles_selective, naive_gemm, naive_gemm_fixed, schedule_sim, tiled_gemm, tiled_gemm_fixed};
use ovsfgen::fixed::FixedFormat;
use ovsfgen::matrix::Matrix;
use ovsfgen::model::{ReprMode, Selection, WorkloadTuple};
use ovsfgen::ovsf::{OvsfBasis, PackedCode};
use ovsfgen::perf::pipeline_event_sim;
use ovsfgen::wgen::{aligner_step, filters_per_subtile, peak_filters_per_subtile, DesignPoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sigma() -> impl Strategy<Value = DesignPoint> {
    (1usize..300, 1usize..40, 1usize..40, 1usize..40).prop_map(|(m, r, p, c)| DesignPoint::new(m, r, p, c).unwrap())
}

proptest! {
    #[test]
    fn aligner_concatenation_is_periodic(bits in prop::collection::vec(any::<bool>(), 1..100), m in 1usize..130, reads in 1usize..12) {
        let code = PackedCode::from_bits(bits.iter().copied());
        let mut v = code.clone();
        for r in 0..reads {
            let (out, wb) = aligner_step(&v, m);
            for i in 0..m {
                prop_assert_eq!(out.bit(i), bits[(r * m + i) % bits.len()]);
            }
            v = wb;
        }
    }

    #[test]
    fn rotation_composes(bits in prop::collection::vec(any::<bool>(), 1..200), a in 0usize..400, b in 0usize..400) {
        let c = PackedCode::from_bits(bits.iter().copied());
        prop_assert_eq!(c.rotated(a).rotated(b), c.rotated(a + b));
    }

    #[test]
    fn projection_inverts_synthesis(order in 0u32..7, seed in any::<u64>()) {
        let b = OvsfBasis::build(order).unwrap();
        let alpha: Vec<f64> = (0..b.len()).map(|i| ((seed >> (i % 64)) & 7) as f64 - 3.5).collect();
        let slice: Vec<f64> = (0..b.len())
            .map(|k| (0..b.len()).map(|j| alpha[j] * b.entry(j, k) as f64).sum())
            .collect();
        let back = slice_project(&slice, &b).unwrap();
        for (x, y) in back.iter().zip(&alpha) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn truncation_error_shrinks_with_ratio(seed in any::<u64>(), n_out in 1usize..8, n_in in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fb = FilterBank::random(n_out, n_in, 4, &mut rng);
        let err = |ratio| {
            let cl = compress_layer("l", &fb, CompressOptions { ratio, repr: ReprMode::Direct, selection: Selection::Shared }).unwrap();
            reconstruct_layer(&cl).unwrap().squared_error(&fb)
        };
        let (e25, e50, e100) = (err(0.25), err(0.5), err(1.0));
        prop_assert!(e100 <= e50 + 1e-9 && e50 <= e25 + 1e-9);
    }

    #[test]
    fn quantization_within_half_lsb(x in -100.0f64..100.0, frac in 1u32..15) {
        let f = FixedFormat::new(16, frac).unwrap();
        let (q, sat) = f.quantize(x);
        if !sat {
            prop_assert!((f.dequantize(q as i64) - x).abs() <= 0.5 / f.scale() + 1e-12);
        }
    }

    #[test]
    fn tiled_gemm_matches_naive(r in 1usize..30, p in 1usize..30, c in 1usize..30, s in sigma(), seed in any::<u64>()) {
        let v = |i: usize, j: usize, k: u64| (((i * 31 + j * 17) as u64 ^ seed ^ k) % 2001) as i32 - 1000;
        let a = Matrix::from_fn(r, p, |i, j| v(i, j, 1));
        let b = Matrix::from_fn(p, c, |i, j| v(i, j, 2));
        prop_assert_eq!(tiled_gemm_fixed(&a, &b, &s).unwrap(), naive_gemm_fixed(&a, &b).unwrap());
        let af = a.map(|x| x as f64);
        let bf = b.map(|x| x as f64);
        prop_assert!(tiled_gemm(&af, &bf, &s).unwrap().max_abs_diff(&naive_gemm(&af, &bf).unwrap()) < 1e-6);
    }

    #[test]
    fn selective_between_bounds(r in 1usize..5000, p in 1usize..5000, c in 1usize..600, s in sigma()) {
        let w = WorkloadTuple::new(r, p, c).unwrap();
        let base = cycles_baseline(&w, &s);
        let sel = cycles_selective(&w, &s);
        let sim = schedule_sim(&w, &s, true);
        let active = c.min(s.t_c);
        let lower = ((s.t_r * active).div_ceil(s.t_c) * p.div_ceil(s.t_p)) as u64;
        prop_assert!(sel <= base && sel >= lower);
        prop_assert!(sim <= base && sim >= lower);
        prop_assert_eq!(schedule_sim(&w, &s, false), base);
    }

    #[test]
    fn peak_filters_never_exceeds_closed_form_bound(m in 1usize..200, t_p in 1usize..64, t_c in 1usize..64, q in prop::sample::select(vec![1usize, 4, 9, 16])) {
        let peak = peak_filters_per_subtile(m, t_p, t_c, q);
        prop_assert!(peak >= 1);
        prop_assert!(peak <= m.min(t_p * t_c));
        if t_p % q == 0 && m <= t_p * t_c {
            prop_assert!(peak <= filters_per_subtile(m, t_p, q).max(1));
        }
    }

    #[test]
    fn pipeline_marginal_time_is_ii(a in 1u64..500, b in 1u64..500, c in 1u64..500, n in 1u64..50) {
        let ii = a.max(b).max(c);
        prop_assert_eq!(pipeline_event_sim([a, b, c], 2 * n) - pipeline_event_sim([a, b, c], n), n * ii);
    }
}
