mod common;

use common::*;
use ndarray::Array4;
use tpl_core::head::{decode_keypoints, decode_keypoints_backward, HeatmapStack};

const TOL: f64 = 1e-4;

#[test]
fn masked_reconstruction_gradients() {
    let (name, err) = masked_reconstruction_grad_error();
    assert!(err < TOL, "{name}: relative error {err:e}");
}

#[test]
fn supervised_gradients() {
    let (name, err) = supervised_grad_error();
    assert!(err < TOL, "{name}: relative error {err:e}");
}

#[test]
fn soft_argmax_gradients() {
    let cfg = micro_config();
    let (t, j, r, c) = (2, 2, 4, 5);
    let mut rng = 0.3f64;
    let mut next = || {
        rng = (rng * 9301.0 + 49297.0) % 233280.0 / 233280.0;
        rng
    };
    let maps = HeatmapStack {
        heatmaps: Array4::from_shape_simple_fn((t, j, r, c), &mut next),
        depth: Array4::from_shape_simple_fn((t, j, r, c), &mut next),
    };
    let weights = ndarray::Array3::from_shape_simple_fn((t, j, 3), &mut next);
    let objective = |m: &HeatmapStack<f64>| -> f64 {
        let (kp, _) = decode_keypoints(m, &cfg);
        (&kp.coords * &weights).sum()
    };
    let (_, cache) = decode_keypoints(&maps, &cfg);
    let analytic = decode_keypoints_backward(&maps, &cache, &cfg, weights.view());
    let h = 1e-6;
    for which in 0..2 {
        let mut numeric = Array4::zeros((t, j, r, c));
        for idx in ndarray::indices((t, j, r, c)) {
            let mut up = maps.clone();
            let mut down = maps.clone();
            let (u, d) = if which == 0 {
                (&mut up.heatmaps, &mut down.heatmaps)
            } else {
                (&mut up.depth, &mut down.depth)
            };
            u[idx] += h;
            d[idx] -= h;
            numeric[idx] = (objective(&up) - objective(&down)) / (2.0 * h);
        }
        let a = if which == 0 { &analytic.heatmaps } else { &analytic.depth };
        let err = relative_error(&a.clone().into_dyn(), &numeric.into_dyn());
        assert!(err < TOL, "map {which}: relative error {err:e}");
    }
}
