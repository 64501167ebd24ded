mod common;

use common::oracles::{self, random_instance, random_maps, relative_gap};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpl_core::dataio::{compute_limb_stats, PoseSequence};
use tpl_core::head::render_target_heatmaps;
use tpl_core::mae::{masked_recon_loss, sample_mask};
use tpl_core::metrics::{
    heatmap_mse, limb_length_loss, mpjpe, pckh, total_loss_value, LossInputs, LossWeights,
};
use tpl_core::tokenizer::CubeTargets;

const REL: f64 = 1e-9;

#[test]
fn metrics_match_loop_oracles() {
    for seed in 0..100 {
        let inst = random_instance(seed);
        let m = mpjpe(inst.pred.view(), inst.gt.view(), inst.pitch).unwrap();
        assert!(relative_gap(m, oracles::mpjpe(&inst.pred, &inst.gt, inst.pitch)) < REL);
        let p = pckh(inst.pred.view(), inst.gt.view(), &inst.skel, 0.5).unwrap();
        assert!(relative_gap(p, oracles::pckh(&inst.pred, &inst.gt, &inst.skel, 0.5)) < REL);
        let l = limb_length_loss(inst.pred.view(), &inst.stats, &inst.skel).unwrap();
        assert!(relative_gap(l, oracles::limb_loss(&inst.pred, &inst.stats, &inst.skel)) < REL);
        let (a, b) = random_maps(seed);
        let h = heatmap_mse(a.view(), b.view()).unwrap();
        assert!(relative_gap(h, oracles::heatmap_mse(&a, &b)) < REL);
    }
}

#[test]
fn recon_loss_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..50 {
        let n = rng.random_range(2..40);
        let width = rng.random_range(1..20);
        let pred = Array2::<f64>::from_shape_simple_fn((n, width), || rng.random_range(-1.0..1.0));
        let cubes = Array2::from_shape_simple_fn((n, width), || rng.random_range(0.0..1.0));
        let mask = sample_mask(n, 0.75, seed).unwrap();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..n {
            if mask.masked[i] {
                for k in 0..width {
                    sum += (pred[[i, k]] - cubes[[i, k]]).powi(2);
                    count += 1;
                }
            }
        }
        let got = masked_recon_loss(pred.view(), &CubeTargets { cubes }, &mask).unwrap();
        assert!(relative_gap(got, sum / count as f64) < REL);
    }
}

#[test]
fn rendered_targets_match_direct_gaussian() {
    let cfg = common::micro_config();
    let pose = common::random_pose(&cfg, 9);
    let (maps, clamped) = render_target_heatmaps(&pose, &cfg);
    assert!(!clamped);
    let s = cfg.heatmap_stride();
    let sigma = cfg.heatmap_sigma;
    let (t, j, rows, cols) = maps.dim();
    for f in 0..t {
        for k in 0..j {
            // Cell q of the quarter-resolution map covers full-resolution
            // centre (q + 0.5)·s − 0.5; invert that for the joint position.
            let qx = (pose.joints[[f, k, 0]] + 0.5) / s - 0.5;
            let qy = (pose.joints[[f, k, 1]] + 0.5) / s - 0.5;
            for r in 0..rows {
                for c in 0..cols {
                    let d2 = (c as f64 - qx).powi(2) + (r as f64 - qy).powi(2);
                    let want = (-d2 / (2.0 * sigma * sigma)).exp();
                    assert!((maps.heatmaps[[f, k, r, c]] - want).abs() < 1e-12);
                    assert_eq!(maps.depth[[f, k, r, c]], pose.joints[[f, k, 2]]);
                }
            }
        }
    }
}

#[test]
fn limb_stats_match_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let lengths: Vec<f64> = (0..37).map(|_| rng.random_range(0.5..12.0)).collect();
    let seq = PoseSequence::new(Array3::from_shape_fn((37, 2, 3), |(f, j, c)| {
        if j == 0 && c == 2 {
            lengths[f]
        } else {
            0.0
        }
    }))
    .unwrap();
    let stats = compute_limb_stats([&seq], &common::two_joint_skeleton()).unwrap();
    assert_eq!(stats.lower[0], oracles::percentile(&lengths, 5));
    assert_eq!(stats.upper[0], oracles::percentile(&lengths, 95));
}

#[test]
fn total_loss_weight_cases() {
    let cfg = common::micro_config();
    let skel = common::two_joint_skeleton();
    let stats = common::limb_band();
    let gt = common::random_pose(&cfg, 1);
    let kp = common::random_pose(&cfg, 2);
    let (target, _) = render_target_heatmaps(&gt, &cfg);
    let (pred, _) = render_target_heatmaps(&kp, &cfg);
    let inputs = LossInputs {
        pred_heatmaps: pred.heatmaps.view(),
        target_heatmaps: target.heatmaps.view(),
        keypoints: kp.joints.view(),
        gt: gt.joints.view(),
    };
    let only_maps = LossWeights { limb: 0.0, depth: 0.0 };
    let (total, b) = total_loss_value(&inputs, &stats, &skel, only_maps).unwrap();
    assert_eq!(total, b.heatmap_mse);
    assert_eq!(b.heatmap_mse, heatmap_mse(pred.heatmaps.view(), target.heatmaps.view()).unwrap());

    let mut inside = gt.clone();
    for f in 0..cfg.frames_t {
        inside.joints[[f, 0, 0]] = inside.joints[[f, 1, 0]] + 3.5;
        inside.joints[[f, 0, 1]] = inside.joints[[f, 1, 1]];
        inside.joints[[f, 0, 2]] = inside.joints[[f, 1, 2]];
    }
    let (exact, _) = render_target_heatmaps(&inside, &cfg);
    let zero = LossInputs {
        pred_heatmaps: exact.heatmaps.view(),
        target_heatmaps: exact.heatmaps.view(),
        keypoints: inside.joints.view(),
        gt: inside.joints.view(),
    };
    let (total, b) = total_loss_value(&zero, &stats, &skel, LossWeights::default()).unwrap();
    assert_eq!(total, 0.0);
    assert_eq!((b.heatmap_mse, b.limb_loss, b.depth_loss), (0.0, 0.0, 0.0));
}
