mod common;

use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use tpl_core::dataio::format::{decode_sequence, encode_sequence};
use tpl_core::dataio::{compute_limb_stats, synthesize, PoseSequence, PressureSequence, SynthSpec};
use tpl_core::head::{soft_argmax, to_full_resolution};
use tpl_core::mae::{masked_recon_loss, sample_mask};
use tpl_core::metrics::{limb_length_loss, mpjpe, pckh};
use tpl_core::nn::{Init, ParamStore};
use tpl_core::tokenizer::{extract_cube_targets, reassemble_cubes, CubeTargets, TokenGrid, Tokenizer};
use tpl_core::encoder::Encoder;
use tpl_core::config::SkeletonSpec;
use tpl_core::dataio::LimbStats;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

fn frames_strategy(t: usize, h: usize, w: usize) -> impl Strategy<Value = Array3<f32>> {
    prop::collection::vec(0.0f32..1e4, t * h * w)
        .prop_map(move |v| Array3::from_shape_vec((t, h, w), v).unwrap())
}

fn sequence_strategy() -> impl Strategy<Value = (PressureSequence<f32>, PoseSequence<f32>)> {
    (1usize..5, 1usize..7, 1usize..7, 1usize..4).prop_flat_map(|(t, h, w, j)| {
        (
            frames_strategy(t, h, w),
            prop::collection::vec(-1e3f32..1e3, t * j * 3),
        )
            .prop_map(move |(frames, joints)| {
                (
                    PressureSequence::new(frames).unwrap(),
                    PoseSequence::new(Array3::from_shape_vec((t, j, 3), joints).unwrap()).unwrap(),
                )
            })
    })
}

fn zero_named(store: &mut ParamStore<f64>, keep: impl Fn(&str) -> bool) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !keep(store.name(id)) {
            store.value_mut(id).fill(0.0);
        }
    }
}

fn pose_strategy(t: usize, j: usize) -> impl Strategy<Value = Array3<f64>> {
    prop::collection::vec(-50.0f64..50.0, t * j * 3)
        .prop_map(move |v| Array3::from_shape_vec((t, j, 3), v).unwrap())
}

/// Three-joint frames whose head limb is long enough to be well defined.
fn head_pose_strategy(t: usize) -> impl Strategy<Value = Array3<f64>> {
    pose_strategy(t, 3).prop_filter("non-degenerate head limb", |p| {
        (0..p.dim().0).all(|f| {
            let dx = p[[f, 0, 0]] - p[[f, 1, 0]];
            let dy = p[[f, 0, 1]] - p[[f, 1, 1]];
            dx.hypot(dy) > 0.1
        })
    })
}

fn three_joint_skeleton() -> SkeletonSpec {
    SkeletonSpec {
        joint_names: vec!["head".into(), "neck".into(), "hip".into()],
        limbs: vec![(1, 0), (1, 2)],
        head_limb_index: 0,
    }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn file_round_trip_is_bit_identical((p, q) in sequence_strategy()) {
        let bytes = encode_sequence(&p, &q).unwrap();
        let (p2, q2) = decode_sequence::<f32>(Path::new("mem"), &bytes).unwrap();
        prop_assert!(p.frames.iter().zip(p2.frames.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(q.joints.iter().zip(q2.joints.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(p.frames.dim(), p2.frames.dim());
        prop_assert_eq!(q.joints.dim(), q2.joints.dim());
    }

    #[test]
    fn mask_count_matches_rounding(n in 1usize..1000, ratio_ix in 0usize..3, seed in any::<u64>()) {
        let ratio = [0.25, 0.5, 0.75][ratio_ix];
        let mask = sample_mask(n, ratio, seed).unwrap();
        prop_assert_eq!(mask.len(), n);
        prop_assert_eq!(mask.num_masked(), (ratio * n as f64).round() as usize);
        prop_assert_eq!(mask, sample_mask(n, ratio, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn unmasked_predictions_do_not_affect_recon_loss(
        seed in any::<u64>(),
        bump in -1e3f64..1e3,
    ) {
        let n = 12;
        let width = 5;
        let mask = sample_mask(n, 0.5, seed).unwrap();
        let target = CubeTargets {
            cubes: Array2::from_shape_fn((n, width), |(i, j)| ((i * 7 + j * 3) % 11) as f64),
        };
        let pred = Array2::from_shape_fn((n, width), |(i, j)| ((i + j) % 5) as f64 * 0.3);
        let base = masked_recon_loss(pred.view(), &target, &mask).unwrap();
        let mut perturbed = pred.clone();
        for (mut row, &m) in perturbed.rows_mut().into_iter().zip(&mask.masked) {
            if !m {
                row += bump;
            }
        }
        prop_assert_eq!(base, masked_recon_loss(perturbed.view(), &target, &mask).unwrap());
    }

    #[test]
    fn cube_extraction_is_a_bijection(frames in frames_strategy(4, 8, 8)) {
        let cfg = tpl_core::ModelConfig {
            grid_w: 8,
            grid_h: 8,
            frames_t: 4,
            spatial_crop: 4,
            temporal_crop: 2,
            ..common::micro_config()
        };
        let x = PressureSequence::new(frames).unwrap();
        let cubes = extract_cube_targets(&cfg, &x).unwrap();
        prop_assert_eq!(cubes.cubes.dim(), (cfg.num_tokens(), cfg.cube_len()));
        let back = reassemble_cubes(&cfg, &cubes).unwrap();
        prop_assert!(back.frames.iter().zip(x.frames.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn tokenizer_is_linear_without_offsets(
        sa in 0u64..1000,
        sb in 0u64..1000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let cfg = common::micro_config();
        let mut store = ParamStore::<f64>::new();
        let tok = Tokenizer::new(&mut store, &mut Init::new(sa ^ 0x5a), &cfg);
        zero_named(&mut store, |n| n.ends_with(".weight"));
        let x = common::random_pressure(&cfg, sa);
        let y = common::random_pressure(&cfg, sb.wrapping_add(1));
        let mix = &x.frames * a + &y.frames * b;
        let (tx, _) = tok.forward(&store, x.frames.view()).unwrap();
        let (ty, _) = tok.forward(&store, y.frames.view()).unwrap();
        let (tm, _) = tok.forward(&store, mix.view()).unwrap();
        let expect = &tx.tokens * a + &ty.tokens * b;
        let err = (&tm.tokens - &expect).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = expect.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        prop_assert!(err / scale < 1e-10, "relative deviation {}", err / scale);
    }

    #[test]
    fn trunk_is_permutation_equivariant(seed in 0u64..1000, shift in 1usize..6) {
        let cfg = tpl_core::ModelConfig { embed_dim: 8, encoder_depth: 2, ..common::micro_config() };
        let mut store = ParamStore::<f64>::new();
        let enc = Encoder::new(&mut store, &mut Init::new(seed), &cfg);
        let n = 7;
        let tokens = Array2::from_shape_fn((n, 8), |(i, j)| ((i * 13 + j * 5 + seed as usize) % 17) as f64 / 8.0 - 1.0);
        let perm: Vec<usize> = (0..n).map(|i| (i * 3 + shift) % n).collect();
        let permuted = tokens.select(Axis(0), &perm);
        let grid = |t: Array2<f64>| TokenGrid { tokens: t, slots_t: 1, rows: 1, cols: n };
        let (out, _) = enc.encode(&store, &grid(tokens)).unwrap();
        let (out_p, _) = enc.encode(&store, &grid(permuted)).unwrap();
        let expect = out.tokens.select(Axis(0), &perm);
        let err = (&out_p.tokens - &expect).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err < 1e-12, "max deviation {err}");
    }

    #[test]
    fn attention_rows_are_distributions(seed in 0u64..1000, big in prop::bool::ANY) {
        let cfg = tpl_core::ModelConfig { embed_dim: 8, encoder_depth: 3, ..common::micro_config() };
        let mut store = ParamStore::<f64>::new();
        let enc = Encoder::new(&mut store, &mut Init::new(seed), &cfg);
        let amp = if big { 1e3 } else { 1.0 };
        let tokens = Array2::from_shape_fn((5, 8), |(i, j)| (((i * 31 + j * 7 + seed as usize) % 19) as f64 / 9.0 - 1.0) * amp);
        let grid = TokenGrid { tokens, slots_t: 1, rows: 1, cols: 5 };
        let (out, _) = enc.encode(&store, &grid).unwrap();
        prop_assert!(out.tokens.iter().all(|v| v.is_finite()));
        for block in 0..3 {
            for head in enc.attention_weights(&store, &grid, block).unwrap() {
                for row in head.rows() {
                    prop_assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
                    prop_assert!((row.sum() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn mpjpe_is_symmetric_and_linear_in_pitch(
        a in pose_strategy(3, 4),
        b in pose_strategy(3, 4),
        pitch in 0.01f64..10.0,
    ) {
        let ab = mpjpe(a.view(), b.view(), pitch).unwrap();
        prop_assert_eq!(ab, mpjpe(b.view(), a.view(), pitch).unwrap());
        let unit = mpjpe(a.view(), b.view(), 1.0).unwrap();
        prop_assert!((ab - unit * pitch).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn pckh_is_translation_invariant(
        gt in head_pose_strategy(3),
        noise in pose_strategy(3, 3),
        dx in -20i32..20,
        dy in -20i32..20,
    ) {
        let skel = three_joint_skeleton();
        let pred = &gt + &(noise * 0.05);
        let base = pckh(pred.view(), gt.view(), &skel, 0.5).unwrap();
        let shift = |p: &Array3<f64>| {
            let mut q = p.clone();
            q.index_axis_mut(Axis(2), 0).mapv_inplace(|v| v + dx as f64);
            q.index_axis_mut(Axis(2), 1).mapv_inplace(|v| v + dy as f64);
            q
        };
        prop_assert_eq!(base, pckh(shift(&pred).view(), shift(&gt).view(), &skel, 0.5).unwrap());
    }

    #[test]
    fn pckh_is_scale_invariant(
        gt in head_pose_strategy(3),
        noise in pose_strategy(3, 3),
        exp in -3i32..4,
        cx in -10i32..10,
        cy in -10i32..10,
    ) {
        let skel = three_joint_skeleton();
        // Dyadic coordinates, centres and factors keep every step exact.
        let q = |p: Array3<f64>| p.mapv(|v| (v * 64.0).round() / 64.0);
        let gt = q(gt);
        let pred = q(&gt + &(noise * 0.05));
        let base = pckh(pred.view(), gt.view(), &skel, 0.5).unwrap();
        let k = 2f64.powi(exp);
        let (cx, cy) = (cx as f64, cy as f64);
        let scale = |p: &Array3<f64>| {
            let mut q = p.clone();
            q.index_axis_mut(Axis(2), 0).mapv_inplace(|v| cx + (v - cx) * k);
            q.index_axis_mut(Axis(2), 1).mapv_inplace(|v| cy + (v - cy) * k);
            q
        };
        prop_assert_eq!(base, pckh(scale(&pred).view(), scale(&gt).view(), &skel, 0.5).unwrap());
    }

    #[test]
    fn limb_loss_zero_inside_band_and_growing_above(
        lower in 1.0f64..5.0,
        width in 0.0f64..5.0,
        frac in 0.0f64..=1.0,
        over in 0.01f64..10.0,
    ) {
        let skel = common::two_joint_skeleton();
        let upper = lower + width;
        let stats = LimbStats { lower: vec![lower], upper: vec![upper] };
        let pose = |len: f64| Array3::from_shape_vec((1, 2, 3), vec![0.0, len, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let inside = lower + frac * width;
        prop_assert_eq!(limb_length_loss(pose(inside).view(), &stats, &skel).unwrap(), 0.0);
        let a = limb_length_loss(pose(upper + over).view(), &stats, &skel).unwrap();
        let b = limb_length_loss(pose(upper + 2.0 * over).view(), &stats, &skel).unwrap();
        prop_assert!(a > 0.0 && b > a);
    }

    #[test]
    fn duplicated_split_keeps_percentiles(lengths in prop::collection::vec(0.1f64..20.0, 1..60)) {
        let skel = common::two_joint_skeleton();
        let seq = PoseSequence::new(Array3::from_shape_fn((lengths.len(), 2, 3), |(f, j, c)| {
            if j == 0 && c == 0 { lengths[f] } else { 0.0 }
        })).unwrap();
        let once = compute_limb_stats([&seq], &skel).unwrap();
        let twice = compute_limb_stats([&seq, &seq], &skel).unwrap();
        prop_assert!(once.lower[0] <= once.upper[0]);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn soft_argmax_shifts_with_the_pattern(k in 0usize..4, values in prop::collection::vec(-3.0f64..3.0, 9)) {
        // A 3×3 pattern placed on a zero-padded 12-wide map: the logits of
        // the cells outside the pattern are -inf-like so no mass leaks.
        let place = |off: usize| Array2::from_shape_fn((3, 12), |(r, c)| {
            if c >= off && c < off + 3 { values[r * 3 + (c - off)] } else { -1e4 }
        });
        let stride = 4.0;
        let (x0, y0) = soft_argmax(place(0).view());
        let (xk, yk) = soft_argmax(place(k).view());
        let fx0 = to_full_resolution(x0, stride);
        let fxk = to_full_resolution(xk, stride);
        prop_assert!((fxk - fx0 - 4.0 * k as f64).abs() < 1e-9);
        prop_assert!((yk - y0).abs() < 1e-12);
    }

    #[test]
    fn soft_argmax_stays_inside_the_map(values in prop::collection::vec(-50.0f64..50.0, 20)) {
        let map = Array2::from_shape_vec((4, 5), values).unwrap();
        let (x, y) = soft_argmax(map.view());
        prop_assert!((0.0..=4.0).contains(&x));
        prop_assert!((0.0..=3.0).contains(&y));
    }
}

proptest! {
    #![proptest_config(cases(8))]

    #[test]
    fn synthetic_joints_in_grid_and_contacts_press(seed in any::<u64>()) {
        let spec = SynthSpec { num_sequences: 2, frames: 12, seed, ..SynthSpec::desk() };
        for s in synthesize(&spec).unwrap() {
            prop_assert!(s.pose.within_grid(spec.grid_w, spec.grid_h));
            prop_assert!(s.pressure.frames.iter().all(|&v| v >= 0.0));
            for frame in s.pressure.frames.outer_iter() {
                prop_assert!(frame.sum() > 0.0);
            }
        }
    }
}
